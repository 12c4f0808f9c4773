//! The (S,Q) product chain induced by a channel, a Q-graph and an input policy.
//!
//! Pairs are indexed `z = s * |Q| + q`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::QGraph;
use crate::channels::{UnifilarFsc, ROW_SUM_TOL};
use crate::error::{Error, Result};
use crate::graph;

/// `P(x | s, q)`, stored `((s * |Q| + q) * |X| + x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPolicy {
    states: usize,
    nodes: usize,
    inputs: usize,
    probs: Vec<f64>,
}

/// On-disk policy layout, `p[s][q][x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyJson {
    pub states: usize,
    pub nodes: usize,
    pub inputs: usize,
    pub p: Vec<Vec<Vec<f64>>>,
}

impl InputPolicy {
    /// Wraps a flat table without checking it against a channel.
    pub fn from_table(states: usize, nodes: usize, inputs: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != states * nodes * inputs {
            return Err(Error::InvalidPolicy(format!(
                "table has {} entries, expected {}",
                probs.len(),
                states * nodes * inputs
            )));
        }
        Ok(Self { states, nodes, inputs, probs })
    }

    /// Uniform over the admissible inputs of each state.
    pub fn uniform(channel: &UnifilarFsc, g: &QGraph) -> Self {
        Self::from_fn(channel, g, |s, _, x| {
            if channel.is_admissible(s, x) {
                1.0 / channel.admissible(s).len() as f64
            } else {
                0.0
            }
        })
    }

    pub fn from_fn(channel: &UnifilarFsc, g: &QGraph, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let (ns, nq, nx) = (channel.state_count(), g.node_count(), channel.input_count());
        let mut probs = Vec::with_capacity(ns * nq * nx);
        for s in 0..ns {
            for q in 0..nq {
                for x in 0..nx {
                    probs.push(f(s, q, x));
                }
            }
        }
        Self { states: ns, nodes: nq, inputs: nx, probs }
    }

    /// Checks shape, row sums and support against `channel` and `g`.
    pub fn validate(&self, channel: &UnifilarFsc, g: &QGraph) -> Result<()> {
        if self.states != channel.state_count()
            || self.nodes != g.node_count()
            || self.inputs != channel.input_count()
        {
            return Err(Error::InvalidPolicy(format!(
                "policy shape ({}, {}, {}) does not match channel/graph ({}, {}, {})",
                self.states,
                self.nodes,
                self.inputs,
                channel.state_count(),
                g.node_count(),
                channel.input_count()
            )));
        }
        for s in 0..self.states {
            for q in 0..self.nodes {
                let row = self.row(s, q);
                let mut sum = 0.0;
                for (x, &p) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&p) || p.is_nan() {
                        return Err(Error::InvalidPolicy(format!("P({x}|{s},{q}) = {p}")));
                    }
                    if p > 0.0 && !channel.is_admissible(s, x) {
                        return Err(Error::InvalidPolicy(format!(
                            "mass {p} on inadmissible input {x} at state {s}, node {q}"
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InvalidPolicy(format!(
                        "row (s={s},q={q}) sums to {sum}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn input_count(&self) -> usize {
        self.inputs
    }

    #[inline]
    pub fn get(&self, s: usize, q: usize, x: usize) -> f64 {
        self.probs[(s * self.nodes + q) * self.inputs + x]
    }

    pub fn row(&self, s: usize, q: usize) -> &[f64] {
        let o = (s * self.nodes + q) * self.inputs;
        &self.probs[o..o + self.inputs]
    }

    pub fn row_mut(&mut self, s: usize, q: usize) -> &mut [f64] {
        let o = (s * self.nodes + q) * self.inputs;
        &mut self.probs[o..o + self.inputs]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn to_json(&self) -> PolicyJson {
        PolicyJson {
            states: self.states,
            nodes: self.nodes,
            inputs: self.inputs,
            p: (0..self.states)
                .map(|s| (0..self.nodes).map(|q| self.row(s, q).to_vec()).collect())
                .collect(),
        }
    }

    pub fn from_json(j: &PolicyJson) -> Result<Self> {
        if j.p.len() != j.states
            || j.p.iter().any(|r| r.len() != j.nodes || r.iter().any(|c| c.len() != j.inputs))
        {
            return Err(Error::InvalidPolicy("p has the wrong shape".into()));
        }
        let flat = j.p.iter().flatten().flatten().copied().collect();
        Self::from_table(j.states, j.nodes, j.inputs, flat)
    }
}

/// A communicating class of the product chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommClass {
    pub members: Vec<usize>,
    pub closed: bool,
    /// Period for closed classes, 0 for transient ones.
    pub period: usize,
}

/// Markov chain on `(s, q)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SqChain {
    states: usize,
    nodes: usize,
    transition: Vec<f64>,
    classes: Vec<CommClass>,
}

impl SqChain {
    /// Builds a chain from an explicit row-stochastic matrix (row-major, `n x n`).
    pub fn from_matrix(states: usize, nodes: usize, transition: Vec<f64>) -> Result<Self> {
        let n = states * nodes;
        if transition.len() != n * n {
            return Err(Error::InvalidPolicy("transition matrix has the wrong size".into()));
        }
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| transition[i * n + j] > 0.0).collect())
            .collect();
        let classes = graph::strongly_connected_components(&adj)
            .into_iter()
            .map(|members| {
                let mut inside = vec![false; n];
                for &u in &members {
                    inside[u] = true;
                }
                let closed = graph::is_closed(&adj, &members, &inside);
                let period = if closed { graph::period(&adj, &members) } else { 0 };
                CommClass { members, closed, period }
            })
            .collect();
        Ok(Self { states, nodes, transition, classes })
    }

    pub fn size(&self) -> usize {
        self.states * self.nodes
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    #[inline]
    pub fn index(&self, s: usize, q: usize) -> usize {
        s * self.nodes + q
    }

    pub fn pair(&self, z: usize) -> (usize, usize) {
        (z / self.nodes, z % self.nodes)
    }

    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.size() + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        let n = self.size();
        &self.transition[from * n..(from + 1) * n]
    }

    pub fn classes(&self) -> &[CommClass] {
        &self.classes
    }

    pub fn closed_classes(&self) -> impl Iterator<Item = &CommClass> {
        self.classes.iter().filter(|c| c.closed)
    }

    /// Single closed class, and it is aperiodic.
    pub fn is_unichain_aperiodic(&self) -> bool {
        let mut closed = self.closed_classes();
        matches!((closed.next(), closed.next()), (Some(c), None) if c.period == 1)
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let n = self.size();
        (0..n)
            .map(|i| (0..n).filter(|&j| self.prob(i, j) > 0.0).collect())
            .collect()
    }
}

/// Product chain with `P(s+, q+ | s, q) = sum_{x,y} P(x|s,q) P(y|x,s) [s+ = f(s,x,y)] [q+ = phi(q,y)]`.
pub fn build_sq_chain(channel: &UnifilarFsc, g: &QGraph, policy: &InputPolicy) -> Result<SqChain> {
    if channel.output_count() != g.output_count() {
        return Err(Error::AlphabetMismatch(format!(
            "channel has {} outputs, q-graph has {} labels",
            channel.output_count(),
            g.output_count()
        )));
    }
    policy.validate(channel, g)?;
    SqChain::from_matrix(channel.state_count(), g.node_count(), transition_matrix(channel, g, policy))
}

pub(crate) fn transition_matrix(channel: &UnifilarFsc, g: &QGraph, policy: &InputPolicy) -> Vec<f64> {
    let nq = g.node_count();
    let n = channel.state_count() * nq;
    let mut t = vec![0.0; n * n];
    for s in 0..channel.state_count() {
        for q in 0..nq {
            let z = s * nq + q;
            for &x in channel.admissible(s) {
                let px = policy.get(s, q, x);
                if px == 0.0 {
                    continue;
                }
                for (y, py, s_next) in channel.transitions(s, x) {
                    t[z * n + s_next * nq + g.next(q, y)] += px * py;
                }
            }
        }
    }
    t
}

/// Stationary law of a chain restricted to `members`, which must be closed and aperiodic.
fn solve_on_class(chain: &SqChain, members: &[usize]) -> Result<Vec<f64>> {
    let n = chain.size();
    let k = members.len();
    // rows of (P^T - I) with the last equation replaced by normalization
    let mut a = DMatrix::<f64>::zeros(k, k);
    for (i, &zi) in members.iter().enumerate() {
        for (j, &zj) in members.iter().enumerate() {
            a[(j, i)] = chain.prob(zi, zj);
        }
        a[(i, i)] -= 1.0;
    }
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(k);
    b[k - 1] = 1.0;
    let sub = a.lu().solve(&b).filter(|v| {
        v.iter().all(|p| p.is_finite() && *p > -1e-10) && residual_on(chain, members, v.as_slice()) <= 1e-12
    });
    let sub: Vec<f64> = match sub {
        Some(v) => v.iter().map(|p| p.max(0.0)).collect(),
        None => power_iteration(chain, members)?,
    };
    let total: f64 = sub.iter().sum();
    let mut pi = vec![0.0; n];
    for (&z, p) in members.iter().zip(sub) {
        pi[z] = p / total;
    }
    Ok(pi)
}

fn residual_on(chain: &SqChain, members: &[usize], v: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for &zj in members {
        let mut acc = 0.0;
        for (i, &zi) in members.iter().enumerate() {
            acc += v[i] * chain.prob(zi, zj);
        }
        let idx = members.iter().position(|&m| m == zj).unwrap();
        worst = worst.max((acc - v[idx]).abs());
    }
    worst
}

fn power_iteration(chain: &SqChain, members: &[usize]) -> Result<Vec<f64>> {
    const TOL: f64 = 1e-14;
    const MAX_ITER: usize = 1_000_000;
    let k = members.len();
    let mut v = vec![1.0 / k as f64; k];
    let mut next = vec![0.0; k];
    for it in 0..MAX_ITER {
        next.iter_mut().for_each(|p| *p = 0.0);
        for (i, &zi) in members.iter().enumerate() {
            for (j, &zj) in members.iter().enumerate() {
                next[j] += v[i] * chain.prob(zi, zj);
            }
        }
        let diff = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if diff <= TOL {
            return Ok(v);
        }
        if it + 1 == MAX_ITER {
            return Err(Error::DidNotConverge { residual: diff, iterations: MAX_ITER });
        }
    }
    unreachable!()
}

/// Unique stationary distribution; zero on transient pairs.
pub fn stationary(chain: &SqChain) -> Result<Vec<f64>> {
    let closed: Vec<&CommClass> = chain.closed_classes().collect();
    if closed.len() != 1 {
        return Err(Error::Multichain(closed.len()));
    }
    if closed[0].period != 1 {
        return Err(Error::Periodic(closed[0].period));
    }
    solve_on_class(chain, &closed[0].members)
}

/// Stationary distribution reached from pair `start`, which must lead into
/// exactly one closed class, and that class must be aperiodic.
pub fn stationary_from(chain: &SqChain, start: usize) -> Result<Vec<f64>> {
    if start >= chain.size() {
        return Err(Error::OutOfRange { index: start, size: chain.size() });
    }
    let seen = graph::reachable(&chain.adjacency(), start);
    let closed: Vec<&CommClass> = chain
        .closed_classes()
        .filter(|c| seen[c.members[0]])
        .collect();
    if closed.len() != 1 {
        return Err(Error::Multichain(closed.len()));
    }
    if closed[0].period != 1 {
        return Err(Error::Periodic(closed[0].period));
    }
    solve_on_class(chain, &closed[0].members)
}
