//! Thin wrappers over `argmin` for the one- and four-parameter searches.

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::goldensectionsearch::GoldenSectionSearch;
use argmin::solver::neldermead::NelderMead;

use crate::error::{Error, Result};

struct Scalar<F>(F);

impl<F: Fn(f64) -> f64> CostFunction for Scalar<F> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, p: &f64) -> std::result::Result<f64, ArgminError> {
        Ok((self.0)(*p))
    }
}

struct Vector<F>(F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Vector<F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, ArgminError> {
        Ok((self.0)(p))
    }
}

fn wrap(e: ArgminError) -> Error {
    Error::ParameterOutOfRange(format!("optimizer: {e}"))
}

/// Minimizer of a unimodal `f` on `[lo, hi]`, bracket shrunk to relative width `tol`.
pub(crate) fn golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    let solver = GoldenSectionSearch::new(lo, hi).map_err(wrap)?.with_tolerance(tol).map_err(wrap)?;
    let res = Executor::new(Scalar(f), solver)
        .configure(|s| s.param(0.5 * (lo + hi)).max_iters(10_000))
        .run()
        .map_err(wrap)?;
    let x = *res.state.get_best_param().expect("golden section keeps a best point");
    Ok((x, res.state.get_best_cost()))
}

/// Nelder-Mead from the axis simplex of side `scale` around `x0`.
pub(crate) fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], scale: f64, max_iter: u64) -> Result<(Vec<f64>, f64)> {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] += scale;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-15).map_err(wrap)?;
    let res = Executor::new(Vector(f), solver)
        .configure(|s| s.max_iters(max_iter))
        .run()
        .map_err(wrap)?;
    let x = res.state.get_best_param().cloned().expect("simplex keeps a best point");
    Ok((x, res.state.get_best_cost()))
}
