use serde::{Deserialize, Serialize};

use super::{relative_value_iteration, GraphTestDistribution, RviOpts, RviResult};
use crate::channels::UnifilarFsc;
use crate::error::Result;
use crate::graph_bounds::{output_given_node, upper_bound, UpperOpts};
use crate::qgraph::QGraph;

/// Dual bound from the output law of a numerically optimized policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualBound {
    /// Optimal gain of the MDP under `test`; an upper bound for any test law.
    pub value: f64,
    /// Q-graph rate of the policy that produced `test`.
    pub primal: f64,
    /// `value - primal`.
    pub gap: f64,
    pub iterations: usize,
    pub rvi: RviResult,
}

/// `T(y|q)` from the stationary output law of `policy`; nodes never visited get uniform rows.
pub fn induced_test_distribution(
    channel: &UnifilarFsc,
    g: &QGraph,
    policy: &crate::qgraph::InputPolicy,
) -> Result<GraphTestDistribution> {
    let ny = channel.output_count();
    let rows: Vec<Vec<f64>> = output_given_node(channel, g, policy)?
        .into_iter()
        .map(|r| {
            let sum: f64 = r.iter().sum();
            if sum > 0.5 {
                r.iter().map(|v| v / sum).collect()
            } else {
                vec![1.0 / ny as f64; ny]
            }
        })
        .collect();
    GraphTestDistribution::from_rows(&rows)
}

/// Q-graph upper bound followed by the dual MDP on its induced test law.
pub fn dual_upper_bound(channel: &UnifilarFsc, g: &QGraph, upper: &UpperOpts, rvi: &RviOpts) -> Result<DualBound> {
    let primal = upper_bound(channel, g, upper)?;
    let test = induced_test_distribution(channel, g, &primal.policy()?)?;
    let sol = relative_value_iteration(channel, g, &test, rvi)?;
    Ok(DualBound {
        value: sol.rho,
        primal: primal.value,
        gap: sol.rho - primal.value,
        iterations: primal.iterations + sol.iterations,
        rvi: sol,
    })
}
