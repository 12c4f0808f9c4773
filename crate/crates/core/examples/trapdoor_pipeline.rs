//! Trapdoor channel with feedback delay 2, end to end: transform, upper bound
//! on the 4-node graph, certified lower bound, stationary law and dual certificate.

use fscap::channels::make_trapdoor;
use fscap::delay::transform;
use fscap::dual_mdp::{dual_upper_bound, trapdoor_certificate, RviOpts};
use fscap::graph_bounds::{lower_bound, stationary_distribution, trapdoor_encoder, upper_bound, UpperOpts, BCJR_TOL};
use fscap::qgraph::appendix_a_qgraph;

fn main() -> fscap::Result<()> {
    let tc = transform(&make_trapdoor(), 2)?;
    let g = appendix_a_qgraph();
    let ub = upper_bound(tc.channel(), &g, &UpperOpts::default())?;
    println!("upper bound      {:.12}", ub.value);

    let (ch, g, pol) = trapdoor_encoder();
    let lb = lower_bound(&ch, &g, &pol, BCJR_TOL)?;
    println!("lower bound      {:.12}", lb.value);

    let pi = stationary_distribution(&ch, &g, &pol)?;
    for q in 0..g.node_count() {
        let row: Vec<String> = (0..ch.state_count()).map(|s| format!("{:.5}", pi[s * g.node_count() + q])).collect();
        println!("  pi(s, q={}) = [{}]", q + 1, row.join(", "));
    }

    let dual = dual_upper_bound(&ch, &g, &UpperOpts::default(), &RviOpts::default())?;
    println!("dual bound       {:.12} (gap {:.1e})", dual.value, dual.gap);
    let cert = trapdoor_certificate().verify(1e-12)?;
    println!("certificate      passed={} on the Markov k=1 graph", cert.passed);
    println!("log2(3/2)        {:.12}", 1.5f64.log2());
    Ok(())
}
