use serde::{Deserialize, Serialize};

use super::{GraphTestDistribution, MdpSpec};
use crate::channels::UnifilarFsc;
use crate::error::{Error, Result};
use crate::qgraph::QGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RviOpts {
    /// Stop when the bracket on `rho` is narrower than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Aperiodicity transform `h <- (1 - tau) h + tau T h`.
    pub tau: f64,
    /// Initial `h` over all `(s, q)`; zeros when absent.
    pub init: Option<Vec<f64>>,
}

impl Default for RviOpts {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 1_000_000, tau: 0.5, init: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RviResult {
    /// Smallest class gain, i.e. the bound minimized over start states.
    pub rho: f64,
    /// Relative values on the minimizing class, zero at its first state.
    pub h: Vec<Option<f64>>,
    /// Greedy action on the minimizing class.
    pub policy: Vec<Option<usize>>,
    /// The minimizing class, ascending `z = s * |Q| + q`.
    pub support: Vec<usize>,
    /// Gain of every recurrent class, in class order.
    pub class_gains: Vec<f64>,
    pub iterations: usize,
    /// Final width of the `rho` bracket.
    pub span: f64,
}

struct ClassSolution {
    rho: f64,
    h: Vec<f64>,
    policy: Vec<usize>,
    iterations: usize,
    span: f64,
}

fn q_value(mdp: &MdpSpec, z: usize, x: usize, h: &[f64], pos: &[usize]) -> f64 {
    let g = mdp.reward(z, x).and_then(|r| r.finite()).expect("safe class has finite rewards");
    g + mdp.successors(z, x).iter().map(|&(v, p)| p * h[pos[v]]).sum::<f64>()
}

fn greedy(mdp: &MdpSpec, z: usize, h: &[f64], pos: &[usize]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for x in mdp.actions(z) {
        let v = q_value(mdp, z, x, h, pos);
        if v > best.0 + 1e-12 {
            best = (v, x);
        }
    }
    best
}

fn solve_class(mdp: &MdpSpec, class: &[usize], opts: &RviOpts) -> Result<ClassSolution> {
    let mut pos = vec![usize::MAX; mdp.size()];
    for (i, &z) in class.iter().enumerate() {
        pos[z] = i;
    }
    let mut h: Vec<f64> = match &opts.init {
        Some(v) => class.iter().map(|&z| v[z]).collect(),
        None => vec![0.0; class.len()],
    };
    let tau = opts.tau;
    let mut next = vec![0.0; class.len()];
    let mut span = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (i, &z) in class.iter().enumerate() {
            let t = greedy(mdp, z, &h, &pos).0;
            next[i] = (1.0 - tau) * h[i] + tau * t;
            let d = t - h[i];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        span = hi - lo;
        let base = next[0];
        for (hv, nv) in h.iter_mut().zip(&next) {
            *hv = nv - base;
        }
        if span <= opts.tol {
            let policy = class.iter().map(|&z| greedy(mdp, z, &h, &pos).1).collect();
            return Ok(ClassSolution { rho: 0.5 * (lo + hi), h, policy, iterations: it, span });
        }
    }
    Err(Error::NotConverged { span, iterations: opts.max_iter })
}

/// Relative value iteration on every recurrent class of the safe states; the
/// class with the smallest gain is reported.
pub fn solve_mdp(mdp: &MdpSpec, opts: &RviOpts) -> Result<RviResult> {
    if !(opts.tau > 0.0 && opts.tau <= 1.0) {
        return Err(Error::ParameterOutOfRange(format!("tau = {} not in (0, 1]", opts.tau)));
    }
    if let Some(v) = &opts.init {
        if v.len() != mdp.size() {
            return Err(Error::ParameterOutOfRange(format!("init has {} entries, MDP has {}", v.len(), mdp.size())));
        }
    }
    let classes = mdp.recurrent_classes();
    if classes.is_empty() {
        return Err(Error::UnreachableInfiniteReward);
    }
    let mut gains = Vec::with_capacity(classes.len());
    let mut best: Option<(usize, ClassSolution)> = None;
    let mut iterations = 0;
    for (k, class) in classes.iter().enumerate() {
        let sol = solve_class(mdp, class, opts)?;
        iterations += sol.iterations;
        gains.push(sol.rho);
        if best.as_ref().map_or(true, |b| sol.rho < b.1.rho) {
            best = Some((k, sol));
        }
    }
    let (k, sol) = best.expect("at least one class");
    let mut h = vec![None; mdp.size()];
    let mut policy = vec![None; mdp.size()];
    for (i, &z) in classes[k].iter().enumerate() {
        h[z] = Some(sol.h[i]);
        policy[z] = Some(sol.policy[i]);
    }
    Ok(RviResult {
        rho: sol.rho,
        h,
        policy,
        support: classes[k].clone(),
        class_gains: gains,
        iterations,
        span: sol.span,
    })
}

/// Builds the MDP for `(channel, g, t)` and runs [`solve_mdp`].
pub fn relative_value_iteration(
    channel: &UnifilarFsc,
    g: &QGraph,
    t: &GraphTestDistribution,
    opts: &RviOpts,
) -> Result<RviResult> {
    solve_mdp(&MdpSpec::new(channel, g, t)?, opts)
}
