//! Duality upper bound: a graph-based test distribution `T(y|q)` turns the
//! feedback capacity into an average-reward MDP on `(s, q)` with reward
//! `D(P(.|x,s) || T(.|q))`. Any `(rho, h)` solving the Bellman equation on a
//! closed class certifies `rho` as an upper bound.

mod certificate;
mod closed_form;
mod numeric;
mod optim;
mod rvi;

#[cfg(test)]
mod tests;

pub use certificate::{
    verify_certificate, BellmanCertificate, CertificateJson, StateCheck, VerificationReport,
};
pub use closed_form::{
    bsc_bound, bsc_certificate, bsc_constraints, bsc_rho, dec_bound, dec_certificate,
    dec_certificate_with, dec_feedback_capacity, dec_gammas, dec_rho, trapdoor_certificate, BscBound,
    BundleJson, CertificateBundle, DecBound, DecValueFunction, FeedbackCapacity,
};
pub use numeric::{dual_upper_bound, induced_test_distribution, DualBound};
pub use rvi::{relative_value_iteration, solve_mdp, RviOpts, RviResult};

use serde::{Deserialize, Serialize};

use crate::channels::{UnifilarFsc, ROW_SUM_TOL};
use crate::error::{Error, Result};
use crate::graph;
use crate::info::kl_divergence;
use crate::qgraph::QGraph;

/// Test distribution `T(y|q)`, stored `q`-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTestDistribution {
    nodes: usize,
    outputs: usize,
    t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestJson {
    pub nodes: usize,
    pub outputs: usize,
    /// `t[q][y]`.
    pub t: Vec<Vec<f64>>,
}

impl GraphTestDistribution {
    pub fn new(nodes: usize, outputs: usize, t: Vec<f64>) -> Result<Self> {
        if nodes == 0 || outputs == 0 || t.len() != nodes * outputs {
            return Err(Error::InvalidTestDistribution(format!(
                "expected {nodes}x{outputs} entries, got {}",
                t.len()
            )));
        }
        for q in 0..nodes {
            let row = &t[q * outputs..(q + 1) * outputs];
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidTestDistribution(format!("T(.|{q}) has entry {v}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidTestDistribution(format!("T(.|{q}) sums to {sum}")));
            }
        }
        Ok(Self { nodes, outputs, t })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let outputs = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != outputs) {
            return Err(Error::InvalidTestDistribution("ragged rows".into()));
        }
        Self::new(rows.len(), outputs, rows.concat())
    }

    /// Binary outputs from `T(0|q)`.
    pub fn binary(zero: &[f64]) -> Result<Self> {
        Self::new(zero.len(), 2, zero.iter().flat_map(|&a| [a, 1.0 - a]).collect())
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn output_count(&self) -> usize {
        self.outputs
    }

    pub fn get(&self, q: usize, y: usize) -> f64 {
        self.t[q * self.outputs + y]
    }

    pub fn row(&self, q: usize) -> &[f64] {
        &self.t[q * self.outputs..(q + 1) * self.outputs]
    }

    pub fn to_json(&self) -> TestJson {
        TestJson {
            nodes: self.nodes,
            outputs: self.outputs,
            t: (0..self.nodes).map(|q| self.row(q).to_vec()).collect(),
        }
    }

    pub fn from_json(j: &TestJson) -> Result<Self> {
        let g = Self::from_rows(&j.t)?;
        if g.nodes != j.nodes || g.outputs != j.outputs {
            return Err(Error::InvalidTestDistribution("shape does not match header".into()));
        }
        Ok(g)
    }

    fn check_against(&self, channel: &UnifilarFsc, g: &QGraph) -> Result<()> {
        if self.nodes != g.node_count() || self.outputs != channel.output_count() || g.output_count() != self.outputs {
            return Err(Error::AlphabetMismatch(format!(
                "T is {}x{}, q-graph has {} nodes over {} labels, channel has {} outputs",
                self.nodes,
                self.outputs,
                g.node_count(),
                g.output_count(),
                channel.output_count()
            )));
        }
        Ok(())
    }
}

/// One-step reward in bits, or the marker for `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Reward {
    Finite(f64),
    Infinite,
}

impl Reward {
    pub fn finite(self) -> Option<f64> {
        match self {
            Reward::Finite(v) => Some(v),
            Reward::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Reward::Infinite)
    }
}

/// `D(P(.|x,s) || T(.|q))` in bits.
pub fn kl_reward(channel: &UnifilarFsc, t: &GraphTestDistribution, s: usize, x: usize, q: usize) -> Result<Reward> {
    if s >= channel.state_count() {
        return Err(Error::OutOfRange { index: s, size: channel.state_count() });
    }
    if q >= t.node_count() {
        return Err(Error::OutOfRange { index: q, size: t.node_count() });
    }
    if !channel.is_admissible(s, x) {
        return Err(Error::InvalidPolicy(format!("input {x} not admissible at state {s}")));
    }
    if t.output_count() != channel.output_count() {
        return Err(Error::AlphabetMismatch("T and channel output alphabets differ".into()));
    }
    Ok(match kl_divergence(channel.row(s, x), t.row(q)) {
        Some(d) => Reward::Finite(d),
        None => Reward::Infinite,
    })
}

/// The MDP on `z = s * |Q| + q` with actions `x`, reward `kl_reward` and
/// successor `(f(s,x,y), phi(q,y))` with probability `P(y|x,s)`.
#[derive(Debug, Clone)]
pub struct MdpSpec {
    states: usize,
    nodes: usize,
    inputs: usize,
    reward: Vec<Option<Reward>>,
    succ: Vec<Vec<(usize, f64)>>,
}

impl MdpSpec {
    pub fn new(channel: &UnifilarFsc, g: &QGraph, t: &GraphTestDistribution) -> Result<Self> {
        t.check_against(channel, g)?;
        let (ns, nq, nx) = (channel.state_count(), g.node_count(), channel.input_count());
        let n = ns * nq;
        let mut reward = vec![None; n * nx];
        let mut succ = vec![Vec::new(); n * nx];
        for s in 0..ns {
            for q in 0..nq {
                let z = s * nq + q;
                for &x in channel.admissible(s) {
                    reward[z * nx + x] = Some(kl_reward(channel, t, s, x, q)?);
                    let mut out: Vec<(usize, f64)> = Vec::new();
                    for (y, p, sn) in channel.transitions(s, x) {
                        let zn = sn * nq + g.next(q, y);
                        match out.iter_mut().find(|(v, _)| *v == zn) {
                            Some(e) => e.1 += p,
                            None => out.push((zn, p)),
                        }
                    }
                    succ[z * nx + x] = out;
                }
            }
        }
        Ok(Self { states: ns, nodes: nq, inputs: nx, reward, succ })
    }

    pub fn size(&self) -> usize {
        self.states * self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    pub fn input_count(&self) -> usize {
        self.inputs
    }

    pub fn index(&self, s: usize, q: usize) -> usize {
        s * self.nodes + q
    }

    pub fn pair(&self, z: usize) -> (usize, usize) {
        (z / self.nodes, z % self.nodes)
    }

    pub fn actions(&self, z: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.inputs).filter(move |&x| self.reward[z * self.inputs + x].is_some())
    }

    /// `None` when `x` is inadmissible.
    pub fn reward(&self, z: usize, x: usize) -> Option<Reward> {
        self.reward[z * self.inputs + x]
    }

    pub fn successors(&self, z: usize, x: usize) -> &[(usize, f64)] {
        &self.succ[z * self.inputs + x]
    }

    /// States from which no policy can ever collect an infinite reward.
    pub fn safe_states(&self) -> Vec<bool> {
        let n = self.size();
        let mut safe: Vec<bool> = (0..n)
            .map(|z| self.actions(z).all(|x| !self.reward(z, x).is_some_and(Reward::is_infinite)))
            .collect();
        loop {
            let mut changed = false;
            for z in 0..n {
                if safe[z] && self.actions(z).any(|x| self.successors(z, x).iter().any(|&(v, _)| !safe[v])) {
                    safe[z] = false;
                    changed = true;
                }
            }
            if !changed {
                return safe;
            }
        }
    }

    /// Closed communicating classes of the safe states, edges taken over all actions.
    pub fn recurrent_classes(&self) -> Vec<Vec<usize>> {
        let safe = self.safe_states();
        let local: Vec<usize> = (0..self.size()).filter(|&z| safe[z]).collect();
        let mut pos = vec![usize::MAX; self.size()];
        for (i, &z) in local.iter().enumerate() {
            pos[z] = i;
        }
        let adj: Vec<Vec<usize>> = local
            .iter()
            .map(|&z| {
                let mut out: Vec<usize> = self
                    .actions(z)
                    .flat_map(|x| self.successors(z, x).iter().map(|&(v, _)| pos[v]))
                    .collect();
                out.sort_unstable();
                out.dedup();
                out
            })
            .collect();
        graph::closed_classes(&adj)
            .into_iter()
            .map(|c| c.into_iter().map(|i| local[i]).collect())
            .collect()
    }
}
