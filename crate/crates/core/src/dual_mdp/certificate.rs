use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{GraphTestDistribution, MdpSpec, Reward};
use crate::channels::UnifilarFsc;
use crate::error::{Error, Result};
use crate::qgraph::QGraph;

/// Candidate Bellman solution `(rho, h)` with a policy and the set of
/// `(s, q)` on which it is claimed. Indexed by `z = s * |Q| + q`.
#[derive(Debug, Clone, PartialEq)]
pub struct BellmanCertificate {
    pub rho: f64,
    pub states: usize,
    pub nodes: usize,
    pub h: Vec<Option<f64>>,
    pub policy: Vec<Option<usize>>,
    /// Ascending `z`.
    pub support: Vec<usize>,
}

/// Keys are `"(s,q)"` with 0-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateJson {
    pub rho: f64,
    pub states: usize,
    pub nodes: usize,
    pub h: BTreeMap<String, f64>,
    pub policy: BTreeMap<String, usize>,
    pub support: Vec<[usize; 2]>,
}

fn key(s: usize, q: usize) -> String {
    format!("({s},{q})")
}

fn parse_key(k: &str) -> Result<(usize, usize)> {
    let bad = || Error::Parse(format!("state key {k:?}, expected \"(s,q)\""));
    let inner = k.trim().strip_prefix('(').and_then(|r| r.strip_suffix(')')).ok_or_else(bad)?;
    let (a, b) = inner.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

impl BellmanCertificate {
    /// Certificate over all `(s, q)` with `h` given on every pair.
    pub fn full(rho: f64, states: usize, nodes: usize, h: Vec<f64>, policy: Vec<usize>) -> Result<Self> {
        let n = states * nodes;
        if h.len() != n || policy.len() != n {
            return Err(Error::ParameterOutOfRange(format!("certificate tables must have {n} entries")));
        }
        Ok(Self {
            rho,
            states,
            nodes,
            h: h.into_iter().map(Some).collect(),
            policy: policy.into_iter().map(Some).collect(),
            support: (0..n).collect(),
        })
    }

    pub fn h(&self, s: usize, q: usize) -> Option<f64> {
        self.h[s * self.nodes + q]
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn support_pairs(&self) -> Vec<(usize, usize)> {
        self.support.iter().map(|&z| (z / self.nodes, z % self.nodes)).collect()
    }

    pub fn to_json(&self) -> CertificateJson {
        let pair = |z: usize| (z / self.nodes, z % self.nodes);
        CertificateJson {
            rho: self.rho,
            states: self.states,
            nodes: self.nodes,
            h: self
                .h
                .iter()
                .enumerate()
                .filter_map(|(z, v)| v.map(|v| (key(pair(z).0, pair(z).1), v)))
                .collect(),
            policy: self
                .policy
                .iter()
                .enumerate()
                .filter_map(|(z, v)| v.map(|x| (key(pair(z).0, pair(z).1), x)))
                .collect(),
            support: self.support.iter().map(|&z| [pair(z).0, pair(z).1]).collect(),
        }
    }

    pub fn from_json(j: &CertificateJson) -> Result<Self> {
        let n = j.states * j.nodes;
        let index = |(s, q): (usize, usize)| -> Result<usize> {
            if s >= j.states || q >= j.nodes {
                return Err(Error::OutOfRange { index: s * j.nodes + q, size: n });
            }
            Ok(s * j.nodes + q)
        };
        let mut h = vec![None; n];
        for (k, &v) in &j.h {
            h[index(parse_key(k)?)?] = Some(v);
        }
        let mut policy = vec![None; n];
        for (k, &x) in &j.policy {
            policy[index(parse_key(k)?)?] = Some(x);
        }
        let mut support = j.support.iter().map(|&[s, q]| index((s, q))).collect::<Result<Vec<_>>>()?;
        support.sort_unstable();
        support.dedup();
        Ok(Self { rho: j.rho, states: j.states, nodes: j.nodes, h, policy, support })
    }
}

/// Bellman check at one supported `(s, q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCheck {
    pub state: usize,
    pub node: usize,
    /// `rho + h(s, q)`.
    pub lhs: f64,
    /// `max_x [g + E h(next)]`.
    pub rhs: f64,
    /// `rhs - lhs`.
    pub violation: f64,
    /// Inputs attaining `rhs` within the tolerance.
    pub argmax: Vec<usize>,
    pub policy_attains: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub tol: f64,
    pub rho: f64,
    pub max_violation: f64,
    /// Whether the certificate's policy is in the argmax set at every supported state.
    pub policy_attains_max: bool,
    pub checks: Vec<StateCheck>,
    /// Pairs outside the support.
    pub excluded: Vec<(usize, usize)>,
}

impl VerificationReport {
    /// Supported states whose violation exceeds the tolerance.
    pub fn failures(&self) -> impl Iterator<Item = &StateCheck> {
        self.checks.iter().filter(|c| c.violation.abs() > self.tol)
    }

    pub fn check(&self, s: usize, q: usize) -> Option<&StateCheck> {
        self.checks.iter().find(|c| c.state == s && c.node == q)
    }
}

/// Evaluates the Bellman equation `rho + h(s,q) = max_x [g + E h]` on the
/// certificate's support. The support must be closed under every admissible
/// input and carry finite rewards and values.
pub fn verify_certificate(
    channel: &UnifilarFsc,
    g: &QGraph,
    t: &GraphTestDistribution,
    cert: &BellmanCertificate,
    tol: f64,
) -> Result<VerificationReport> {
    let mdp = MdpSpec::new(channel, g, t)?;
    if cert.states != mdp.state_count() || cert.nodes != mdp.node_count() || cert.h.len() != mdp.size() {
        return Err(Error::AlphabetMismatch(format!(
            "certificate is over {}x{} pairs, MDP over {}x{}",
            cert.states,
            cert.nodes,
            mdp.state_count(),
            mdp.node_count()
        )));
    }
    let mut inside = vec![false; mdp.size()];
    for &z in &cert.support {
        inside[z] = true;
    }
    let value = |z: usize| -> Result<f64> {
        let (s, q) = mdp.pair(z);
        cert.h[z].filter(|v| v.is_finite()).ok_or(Error::UndefinedValue { state: s, node: q })
    };
    let slack = tol.max(1e-12);
    let mut checks = Vec::with_capacity(cert.support.len());
    for &z in &cert.support {
        let (s, q) = mdp.pair(z);
        let mut vals = Vec::new();
        for x in mdp.actions(z) {
            let r = match mdp.reward(z, x) {
                Some(Reward::Finite(r)) => r,
                _ => return Err(Error::InfiniteRewardInSupport { state: s, node: q, input: x }),
            };
            let mut acc = r;
            for &(v, p) in mdp.successors(z, x) {
                if !inside[v] {
                    let (sv, qv) = mdp.pair(v);
                    return Err(Error::SupportNotClosed {
                        from_state: s,
                        from_node: q,
                        input: x,
                        to_state: sv,
                        to_node: qv,
                    });
                }
                acc += p * value(v)?;
            }
            vals.push((x, acc));
        }
        let rhs = vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        let lhs = cert.rho + value(z)?;
        let argmax: Vec<usize> = vals.iter().filter(|v| v.1 >= rhs - slack).map(|v| v.0).collect();
        let policy_attains = cert.policy[z].is_some_and(|x| argmax.contains(&x));
        checks.push(StateCheck { state: s, node: q, lhs, rhs, violation: rhs - lhs, argmax, policy_attains });
    }
    let max_violation = checks.iter().map(|c| c.violation.abs()).fold(0.0, f64::max);
    let excluded = (0..mdp.size()).filter(|&z| !inside[z]).map(|z| mdp.pair(z)).collect();
    Ok(VerificationReport {
        passed: max_violation <= tol && !checks.is_empty(),
        tol,
        rho: cert.rho,
        max_violation,
        policy_attains_max: checks.iter().all(|c| c.policy_attains),
        checks,
        excluded,
    })
}
