//! BCJR invariance: the state belief attached to each node must be
//! reproduced by the Bayes update along every edge.
//!
//! For fixed beliefs `b_q(s) = pi(s|q)` the conditions are linear in
//! `u_q(s,x) = b_q(s) P(x|s,q)`:
//!
//! ```text
//! sum_x u_q(s,x) = b_q(s)
//! sum_{s,x} u_q(s,x) P(y|x,s) ([f(s,x,y) = s+] - b_{phi(q,y)}(s+)) = 0
//! ```
//!
//! The search alternates: compute beliefs from the current policy, project
//! each `u_q` onto these constraints in least squares, clip, renormalize and
//! mix with the previous policy. If that stalls above tolerance, a
//! Levenberg-Marquardt pass on the signed mismatches takes over.

use nalgebra::{DMatrix, DVector};

use super::model::Model;
use crate::channels::UnifilarFsc;
use crate::error::{Error, Result};
use crate::qgraph::{InputPolicy, QGraph};

pub(crate) fn residual(model: &Model, pol: &[f64], pi: &[f64]) -> f64 {
    let (ns, nq, nx, ny) = (model.ns, model.nq, model.nx, model.ny);
    let mut pq = vec![0.0; nq];
    for z in 0..model.n {
        pq[z % nq] += pi[z];
    }
    let mut worst: f64 = 0.0;
    let mut num = vec![0.0; ns];
    for q in 0..nq {
        if pq[q] <= 0.0 {
            continue;
        }
        for y in 0..ny {
            num.iter_mut().for_each(|v| *v = 0.0);
            let mut den = 0.0;
            for s in 0..ns {
                let b = pi[s * nq + q] / pq[q];
                if b == 0.0 {
                    continue;
                }
                for &x in model.ch.admissible(s) {
                    let w = b * pol[(s * nq + q) * nx + x] * model.ch.prob(s, x, y);
                    if w > 0.0 {
                        num[model.ch.next(s, x, y)] += w;
                        den += w;
                    }
                }
            }
            if den <= 0.0 {
                continue;
            }
            let qn = model.g.next(q, y);
            for sn in 0..ns {
                let lhs = pi[sn * nq + qn] / pq[qn];
                worst = worst.max((lhs - num[sn] / den).abs());
            }
        }
    }
    worst
}

#[derive(Debug, Clone)]
pub struct BcjrOpts {
    /// Mixing weight of the projected policy.
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BcjrOpts {
    fn default() -> Self {
        Self { alpha: 0.5, tol: 1e-9, max_iter: 10_000 }
    }
}

/// Outcome of [`search_bcjr_policy`]: the best policy seen and its residual.
#[derive(Debug, Clone, PartialEq)]
pub struct BcjrSearch {
    pub policy: InputPolicy,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn beliefs(model: &Model, pi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nq = model.nq;
    let mut pq = vec![0.0; nq];
    for z in 0..model.n {
        pq[z % nq] += pi[z];
    }
    let b = (0..model.n)
        .map(|z| if pq[z % nq] > 0.0 { pi[z] / pq[z % nq] } else { 0.0 })
        .collect();
    (pq, b)
}

/// Least-squares projection of every node's joint table onto the BCJR constraints.
fn project(model: &Model, pol: &[f64], pi: &[f64]) -> Vec<f64> {
    let (ns, nq, nx, ny) = (model.ns, model.nq, model.nx, model.ny);
    let (pq, b) = beliefs(model, pi);
    let mut out = pol.to_vec();
    for q in 0..nq {
        if pq[q] <= 0.0 {
            continue;
        }
        let vars: Vec<(usize, usize)> = (0..ns)
            .filter(|&s| b[s * nq + q] > 0.0)
            .flat_map(|s| model.ch.admissible(s).iter().map(move |&x| (s, x)))
            .collect();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        for s in (0..ns).filter(|&s| b[s * nq + q] > 0.0) {
            rows.push(vars.iter().map(|&(s2, _)| if s2 == s { 1.0 } else { 0.0 }).collect());
            rhs.push(b[s * nq + q]);
        }
        for y in 0..ny {
            let qn = model.g.next(q, y);
            for sn in 0..ns {
                let target = b[sn * nq + qn];
                let row: Vec<f64> = vars
                    .iter()
                    .map(|&(s, x)| {
                        let p = model.ch.prob(s, x, y);
                        if p == 0.0 {
                            return 0.0;
                        }
                        let hit = if model.ch.next(s, x, y) == sn { 1.0 } else { 0.0 };
                        p * (hit - target)
                    })
                    .collect();
                if row.iter().any(|v| *v != 0.0) {
                    rows.push(row);
                    rhs.push(0.0);
                }
            }
        }
        let k = vars.len();
        let a = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
        let c = DVector::from_vec(rhs);
        let u0 = DVector::from_iterator(
            k,
            vars.iter().map(|&(s, x)| b[s * nq + q] * pol[(s * nq + q) * nx + x]),
        );
        let r = &a * &u0 - c;
        let aat = &a * a.transpose();
        let Ok(pinv) = aat.pseudo_inverse(1e-12) else { continue };
        let u = u0 - a.transpose() * (pinv * r);
        let mut sums = vec![0.0; ns];
        for (i, &(s, _)) in vars.iter().enumerate() {
            sums[s] += u[i].max(0.0);
        }
        for (i, &(s, x)) in vars.iter().enumerate() {
            if sums[s] > 0.0 {
                out[(s * nq + q) * nx + x] = u[i].max(0.0) / sums[s];
            }
        }
        for s in (0..ns).filter(|&s| sums[s] > 0.0) {
            for x in 0..nx {
                if !vars.contains(&(s, x)) {
                    out[(s * nq + q) * nx + x] = 0.0;
                }
            }
        }
    }
    out
}

/// Damped fixed-point search for a BCJR-invariant policy starting from `init`.
///
/// Always returns the best policy seen. Fails only if the chain loses its
/// single aperiodic closed class at the start.
pub fn search_bcjr_policy(channel: &UnifilarFsc, g: &QGraph, init: &InputPolicy, opts: &BcjrOpts) -> Result<BcjrSearch> {
    init.validate(channel, g)?;
    let model = Model::new(channel, g)?;
    let mut pol = init.as_slice().to_vec();
    let (e0, _) = model.evaluate(&pol)?;
    let mut pi = e0.pi;
    let mut best = (residual(&model, &pol, &pi), pol.clone());
    let mut iterations = 0;
    while iterations < opts.max_iter && best.0 > opts.tol {
        iterations += 1;
        let proj = project(&model, &pol, &pi);
        let mixed: Vec<f64> = pol
            .iter()
            .zip(&proj)
            .map(|(p, n)| (1.0 - opts.alpha) * p + opts.alpha * n)
            .collect();
        let Ok((e, _)) = model.evaluate(&mixed) else { break };
        pol = mixed;
        pi = e.pi;
        let r = residual(&model, &pol, &pi);
        if r < best.0 {
            best = (r, pol.clone());
        }
    }
    if best.0 > opts.tol {
        // second-order fallback from the best point of the fixed-point phase
        let (p, r) = lm_polish(&model, best.1.clone(), None, opts.tol, opts.max_iter.min(200))?;
        if r < best.0 {
            best = (r, p);
        }
    }
    Ok(BcjrSearch {
        policy: model.policy(&best.1),
        residual: best.0,
        iterations,
        converged: best.0 <= opts.tol,
    })
}

/// [`search_bcjr_policy`], failing with the best residual when it stays above `opts.tol`.
pub fn find_bcjr_policy(channel: &UnifilarFsc, g: &QGraph, init: &InputPolicy, opts: &BcjrOpts) -> Result<BcjrSearch> {
    let s = search_bcjr_policy(channel, g, init, opts)?;
    if s.converged {
        Ok(s)
    } else {
        Err(Error::DidNotConverge { residual: s.residual, iterations: s.iterations })
    }
}

/// Signed BCJR mismatches over a fixed list of `(q, y, s+)` equations.
fn mismatches(model: &Model, pol: &[f64], pi: &[f64], eqs: &[(usize, usize, usize)]) -> Vec<f64> {
    let (ns, nq, nx) = (model.ns, model.nq, model.nx);
    let mut pq = vec![0.0; nq];
    for z in 0..model.n {
        pq[z % nq] += pi[z];
    }
    eqs.iter()
        .map(|&(q, y, sn)| {
            if pq[q] <= 0.0 {
                return 0.0;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for s in 0..ns {
                let b = pi[s * nq + q] / pq[q];
                for &x in model.ch.admissible(s) {
                    let w = b * pol[(s * nq + q) * nx + x] * model.ch.prob(s, x, y);
                    if w > 0.0 {
                        den += w;
                        if model.ch.next(s, x, y) == sn {
                            num += w;
                        }
                    }
                }
            }
            if den <= 0.0 {
                return 0.0;
            }
            let qn = model.g.next(q, y);
            if pq[qn] <= 0.0 {
                return 0.0;
            }
            pi[sn * nq + qn] / pq[qn] - num / den
        })
        .collect()
}

/// Levenberg-Marquardt on the BCJR equations over the interior coordinates
/// of `pol`, optionally with `weight * (target - rate)` appended so the
/// search stays on a level set of the rate.
pub(crate) fn lm_polish(
    model: &Model,
    mut pol: Vec<f64>,
    target: Option<(f64, f64)>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64)> {
    let nx = model.nx;
    let (e0, _) = model.evaluate(&pol)?;
    let mut eqs = Vec::new();
    for q in 0..model.nq {
        for y in 0..model.ny {
            for sn in 0..model.ns {
                eqs.push((q, y, sn));
            }
        }
    }
    // free coordinates: interior entries of rows with positive mass; last one pivots
    let mut coords: Vec<(usize, usize, usize)> = Vec::new();
    for z in 0..model.n {
        if e0.pi[z] <= 1e-13 {
            continue;
        }
        let free: Vec<usize> = model
            .ch
            .admissible(z / model.nq)
            .iter()
            .copied()
            .filter(|&x| pol[z * nx + x] > 1e-9)
            .collect();
        if let Some((&last, rest)) = free.split_last() {
            for &x in rest {
                coords.push((z, x, last));
            }
        }
    }
    let k = coords.len();
    let eval = |p: &[f64]| -> Option<(Vec<f64>, f64)> {
        let (e, _) = model.evaluate(p).ok()?;
        let mut r = mismatches(model, p, &e.pi, &eqs);
        let res = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if let Some((t, w)) = target {
            r.push(w * (t - e.rate));
        }
        Some((r, res))
    };
    let shift = |p: &[f64], d: &[f64]| -> Vec<f64> {
        let mut out = p.to_vec();
        for (j, &(z, x, last)) in coords.iter().enumerate() {
            out[z * nx + x] += d[j];
            out[z * nx + last] -= d[j];
        }
        out
    };
    let Some((mut r, mut res)) = eval(&pol) else { return Ok((pol, f64::INFINITY)) };
    if k == 0 {
        return Ok((pol, res));
    }
    let mut mu = 1e-3;
    for _ in 0..max_iter {
        if res <= tol {
            break;
        }
        let h = 1e-8;
        let mut jac = DMatrix::<f64>::zeros(r.len(), k);
        for j in 0..k {
            let mut d = vec![0.0; k];
            d[j] = h;
            let Some((rp, _)) = eval(&shift(&pol, &d)) else { return Ok((pol, res)) };
            for i in 0..r.len() {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let rv = DVector::from_vec(r.clone());
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &rv;
        let cost = rv.norm_squared();
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..k {
                a[(i, i)] += mu * (1.0 + jtj[(i, i)]);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else { mu *= 10.0; continue };
            let cand = shift(&pol, step.as_slice());
            if cand.iter().all(|&p| (0.0..=1.0).contains(&p)) {
                if let Some((rc, resc)) = eval(&cand) {
                    if DVector::from_vec(rc.clone()).norm_squared() < cost {
                        pol = cand;
                        r = rc;
                        res = resc;
                        mu = (mu * 0.3).max(1e-15);
                        improved = true;
                        break;
                    }
                }
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok((pol, res))
}

/// Searches for a BCJR-invariant policy with rate `target` starting near `init`.
pub fn polish_bcjr_policy(
    channel: &UnifilarFsc,
    g: &QGraph,
    init: &InputPolicy,
    target: Option<f64>,
    opts: &BcjrOpts,
) -> Result<BcjrSearch> {
    init.validate(channel, g)?;
    let model = Model::new(channel, g)?;
    let (pol, residual) = lm_polish(&model, init.as_slice().to_vec(), target.map(|t| (t, 1.0)), opts.tol, 200)?;
    Ok(BcjrSearch {
        policy: model.policy(&pol),
        residual,
        iterations: 0,
        converged: residual <= opts.tol,
    })
}
