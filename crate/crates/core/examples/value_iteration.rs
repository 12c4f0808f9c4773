//! Relative value iteration for the dual MDP of the delay-2 trapdoor channel
//! under two test distributions.

use fscap::channels::make_trapdoor;
use fscap::delay::transform;
use fscap::dual_mdp::{relative_value_iteration, GraphTestDistribution, RviOpts};
use fscap::qgraph::markov_qgraph;

fn main() -> fscap::Result<()> {
    let ch = transform(&make_trapdoor(), 2)?.into_channel();
    let g = markov_qgraph(1, 2)?;
    for zero in [[2.0 / 3.0, 1.0 / 3.0], [0.5, 0.5]] {
        let t = GraphTestDistribution::binary(&zero)?;
        let r = relative_value_iteration(&ch, &g, &t, &RviOpts::default())?;
        println!("T(0|q) = {zero:.3?}: rho = {:.10} after {} sweeps", r.rho, r.iterations);
        for &z in &r.support {
            let (s, q) = (z / g.node_count(), z % g.node_count());
            println!("  h({s},{q}) = {:+.6}  policy x={}", r.h[z].unwrap(), r.policy[z].unwrap());
        }
    }
    Ok(())
}
