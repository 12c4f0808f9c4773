//! Upper bound: supremum of the rate over input policies.
//!
//! The rate is concave in the joint law `pi(s,q) P(x|s,q)`, whose feasible
//! set is a polytope, so any stationary point of the ascent is global. Each
//! step multiplies `P(.|z)` by `exp(t A(.|z))` and renormalizes, where `A` is
//! the natural gradient; `t` is chosen by Armijo backtracking. The stopping
//! measure is `max_z pi(z) (max_x A(x|z) - sum_x P(x|z) A(x|z))`, which
//! vanishes exactly at optimal policies.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::Model;
use super::{stationarity_residual, BoundKind, BoundReport};
use crate::channels::UnifilarFsc;
use crate::error::{Error, Result};
use crate::qgraph::{build_sq_chain, InputPolicy, QGraph};

/// Floor applied to every admissible policy entry.
pub const POLICY_FLOOR: f64 = 1e-12;

/// Largest policy table polished by Newton steps after the first-order phase.
const NEWTON_MAX_DIM: usize = 512;

#[derive(Debug, Clone)]
pub struct UpperOpts {
    /// Random initializations in addition to the uniform one.
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop when the improvement gap falls below this.
    pub tol: f64,
    /// Extra initialization tried after the uniform one.
    pub init: Option<InputPolicy>,
}

impl Default for UpperOpts {
    fn default() -> Self {
        Self { starts: 16, seed: 0, max_iter: 100_000, tol: 1e-9, init: None }
    }
}

impl UpperOpts {
    /// Uniform start only, for screening many graphs.
    pub fn quick() -> Self {
        Self { starts: 0, max_iter: 20_000, ..Self::default() }
    }
}

pub(crate) struct Ascent {
    pub rate: f64,
    pub pol: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn clip(model: &Model, pol: &mut [f64]) {
    let nx = model.nx;
    for z in 0..model.n {
        let adm = model.ch.admissible(z / model.nq);
        let row = &mut pol[z * nx..(z + 1) * nx];
        let mut sum = 0.0;
        for x in 0..nx {
            if adm.contains(&x) {
                row[x] = row[x].max(POLICY_FLOOR);
                sum += row[x];
            } else {
                row[x] = 0.0;
            }
        }
        row.iter_mut().for_each(|p| *p /= sum);
    }
}

fn gap(model: &Model, pol: &[f64], pi: &[f64], a: &[Option<f64>]) -> f64 {
    let nx = model.nx;
    let mut worst: f64 = 0.0;
    for z in 0..model.n {
        if pi[z] == 0.0 {
            continue;
        }
        let adm = model.ch.admissible(z / model.nq);
        let (mut best, mut mean) = (f64::NEG_INFINITY, 0.0);
        for &x in adm {
            let v = a[z * nx + x].unwrap_or(f64::INFINITY);
            best = best.max(v);
            mean += pol[z * nx + x] * v;
        }
        worst = worst.max(pi[z] * (best - mean));
    }
    worst
}

fn mirror_step(model: &Model, pol: &[f64], a: &[Option<f64>], t: f64) -> Vec<f64> {
    let nx = model.nx;
    let mut out = pol.to_vec();
    for z in 0..model.n {
        let adm = model.ch.admissible(z / model.nq);
        let vals: Option<Vec<f64>> = adm.iter().map(|&x| a[z * nx + x]).collect();
        let Some(vals) = vals else { continue };
        let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (&x, v) in adm.iter().zip(&vals) {
            let w = pol[z * nx + x] * (t * (v - top)).exp();
            out[z * nx + x] = w;
            sum += w;
        }
        for &x in adm {
            out[z * nx + x] /= sum;
        }
    }
    clip(model, &mut out);
    out
}

pub(crate) fn ascend(model: &Model, init: &[f64], max_iter: usize, tol: f64) -> Result<Ascent> {
    let mut pol = init.to_vec();
    clip(model, &mut pol);
    let (mut e, mut m) = model.evaluate(&pol)?;
    let mut t = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let a = model.natural_gradient(&pol, &e, &m)?;
        if gap(model, &pol, &e.pi, &a) <= tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = mirror_step(model, &pol, &a, t);
            let slope: f64 = (0..model.n)
                .map(|z| {
                    e.pi[z]
                        * (0..model.nx)
                            .map(|x| (cand[z * model.nx + x] - pol[z * model.nx + x]) * a[z * model.nx + x].unwrap_or(0.0))
                            .sum::<f64>()
                })
                .sum();
            if let Ok((ce, cm)) = model.evaluate(&cand) {
                if ce.rate >= e.rate + 1e-4 * slope && ce.rate >= e.rate {
                    let stalled = ce.rate - e.rate <= 1e-15 * e.rate.abs().max(1.0);
                    pol = cand;
                    e = ce;
                    m = cm;
                    t = (t * 2.0).min(1e12);
                    accepted = !stalled;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            let a = model.natural_gradient(&pol, &e, &m)?;
            converged = gap(model, &pol, &e.pi, &a) <= tol;
            break;
        }
    }
    if !converged && model.n * model.nx <= NEWTON_MAX_DIM {
        let (p, extra, ok) = newton_polish(model, pol.clone(), tol, 100)?;
        let (pe, _) = model.evaluate(&p)?;
        if pe.rate >= e.rate {
            return Ok(Ascent { rate: pe.rate, pol: p, iterations: iterations + extra, converged: ok });
        }
    }
    Ok(Ascent { rate: e.rate, pol, iterations, converged })
}

/// Free coordinates of a policy: per recurrent row, the admissible inputs
/// that are above the floor or profitable; the last one is the pivot.
fn free_rows(model: &Model, pol: &[f64], pi: &[f64], a: &[Option<f64>]) -> Vec<(usize, Vec<usize>)> {
    let nx = model.nx;
    let mut rows = Vec::new();
    for z in 0..model.n {
        if pi[z] <= 1e-13 {
            continue;
        }
        let adm = model.ch.admissible(z / model.nq);
        let Some(vals) = adm.iter().map(|&x| a[z * nx + x]).collect::<Option<Vec<f64>>>() else {
            continue;
        };
        let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let free: Vec<usize> = adm
            .iter()
            .zip(&vals)
            .filter(|(&x, &v)| pol[z * nx + x] > 1e-9 || v >= top - 1e-12)
            .map(|(&x, _)| x)
            .collect();
        if free.len() >= 2 {
            rows.push((z, free));
        }
    }
    rows
}

fn reduced_gradient(model: &Model, rows: &[(usize, Vec<usize>)], pi: &[f64], a: &[Option<f64>]) -> Vec<f64> {
    let nx = model.nx;
    let mut g = Vec::new();
    for (z, free) in rows {
        let pivot = a[z * nx + free[free.len() - 1]].unwrap_or(0.0);
        for &x in &free[..free.len() - 1] {
            g.push(pi[*z] * (a[z * nx + x].unwrap_or(0.0) - pivot));
        }
    }
    g
}

fn displace(model: &Model, pol: &[f64], rows: &[(usize, Vec<usize>)], d: &[f64]) -> Vec<f64> {
    let nx = model.nx;
    let mut out = pol.to_vec();
    let mut k = 0;
    for (z, free) in rows {
        let last = free[free.len() - 1];
        for &x in &free[..free.len() - 1] {
            out[z * nx + x] += d[k];
            out[z * nx + last] -= d[k];
            k += 1;
        }
    }
    out
}

fn feasible(pol: &[f64]) -> bool {
    pol.iter().all(|&p| (0.0..=1.0).contains(&p))
}

/// Projected Newton steps on the free coordinates, Hessian by central
/// differences of the analytic gradient.
fn newton_polish(model: &Model, mut pol: Vec<f64>, tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize, bool)> {
    let grad_at = |p: &[f64], rows: &[(usize, Vec<usize>)]| -> Option<Vec<f64>> {
        let (e, m) = model.evaluate(p).ok()?;
        let a = model.natural_gradient(p, &e, &m).ok()?;
        Some(reduced_gradient(model, rows, &e.pi, &a))
    };
    for it in 0..max_iter {
        let (e, m) = model.evaluate(&pol)?;
        let a = model.natural_gradient(&pol, &e, &m)?;
        if gap(model, &pol, &e.pi, &a) <= tol {
            return Ok((pol, it, true));
        }
        let rows = free_rows(model, &pol, &e.pi, &a);
        let g = reduced_gradient(model, &rows, &e.pi, &a);
        let k = g.len();
        if k == 0 {
            break;
        }
        let h = 1e-7;
        let mut hess = DMatrix::<f64>::zeros(k, k);
        for j in 0..k {
            let mut ej = vec![0.0; k];
            ej[j] = h;
            let plus = displace(model, &pol, &rows, &ej);
            ej[j] = -h;
            let minus = displace(model, &pol, &rows, &ej);
            if !feasible(&plus) || !feasible(&minus) {
                return Ok((pol, it, false));
            }
            let (Some(gp), Some(gm)) = (grad_at(&plus, &rows), grad_at(&minus, &rows)) else {
                return Ok((pol, it, false));
            };
            for i in 0..k {
                hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        let sym = (&hess + hess.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let scale = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
        // ascent direction d = -H^{-1} g with eigenvalues forced negative
        let gv = DVector::from_vec(g.clone());
        let coeffs = eig.eigenvectors.transpose() * &gv;
        let mut dir = DVector::<f64>::zeros(k);
        for i in 0..k {
            let lam = eig.eigenvalues[i].min(-1e-9 * scale);
            dir += eig.eigenvectors.column(i) * (-coeffs[i] / lam);
        }
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let d: Vec<f64> = dir.iter().map(|v| v * step).collect();
            let mut cand = displace(model, &pol, &rows, &d);
            clip(model, &mut cand);
            if let Ok((ce, _)) = model.evaluate(&cand) {
                if ce.rate > e.rate {
                    pol = cand;
                    moved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            return Ok((pol, it, false));
        }
    }
    let (e, m) = model.evaluate(&pol)?;
    let a = model.natural_gradient(&pol, &e, &m)?;
    let ok = gap(model, &pol, &e.pi, &a) <= tol;
    Ok((pol, max_iter, ok))
}

fn random_policy(model: &Model, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let nx = model.nx;
    let mut pol = vec![0.0; model.n * nx];
    for z in 0..model.n {
        let adm = model.ch.admissible(z / model.nq);
        let mut sum = 0.0;
        for &x in adm {
            // Exp(1) draws normalize to a flat Dirichlet sample
            let u: f64 = rng.gen_range(f64::EPSILON..1.0);
            pol[z * nx + x] = -u.ln();
            sum += pol[z * nx + x];
        }
        for &x in adm {
            pol[z * nx + x] /= sum;
        }
    }
    pol
}

/// Supremum of the rate over input policies on `g`.
///
/// The graph qualifies only if the uniform policy yields a single aperiodic
/// closed class; every iterate keeps all admissible entries above
/// [`POLICY_FLOOR`], so all iterates share that structure.
pub fn upper_bound(channel: &UnifilarFsc, g: &QGraph, opts: &UpperOpts) -> Result<BoundReport> {
    let model = Model::new(channel, g)?;
    let uniform = InputPolicy::uniform(channel, g);
    if !build_sq_chain(channel, g, &uniform)?.is_unichain_aperiodic() {
        return Err(Error::NoUnichainPolicy);
    }
    let mut inits = vec![uniform.as_slice().to_vec()];
    if let Some(p) = &opts.init {
        p.validate(channel, g)?;
        inits.push(p.as_slice().to_vec());
    }
    for i in 0..opts.starts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
        inits.push(random_policy(&model, &mut rng));
    }
    let runs: Vec<Result<Ascent>> = inits
        .par_iter()
        .map(|p| ascend(&model, p, opts.max_iter, opts.tol))
        .collect();
    let ok: Vec<Ascent> = runs.into_iter().filter_map(Result::ok).collect();
    let top = ok
        .iter()
        .map(|r| r.rate)
        .fold(f64::NEG_INFINITY, f64::max);
    let best = ok
        .into_iter()
        .find(|r| r.rate >= top - 1e-12)
        .ok_or(Error::NoUnichainPolicy)?;
    let (e, _) = model.evaluate(&best.pol)?;
    Ok(BoundReport {
        channel: String::new(),
        delay: 1,
        qgraph: String::new(),
        kind: BoundKind::Upper,
        value: best.rate,
        stationarity_residual: stationarity_residual(&model, &best.pol, &e.pi),
        policy: model.policy(&best.pol).to_json(),
        bcjr_residual: None,
        iterations: best.iterations,
        converged: best.converged,
        multistart: inits.len(),
        ci_half_width: None,
    })
}
