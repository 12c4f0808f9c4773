//! Certified lower bounds: the published trapdoor encoder at delay 2, and a
//! BCJR-invariant policy found by search on a 4-node graph at delay 1.

use fscap::channels::make_trapdoor;
use fscap::graph_bounds::{bcjr_lower_bound, bcjr_residual, lower_bound, trapdoor_encoder, BcjrOpts, UpperOpts, BCJR_TOL};
use fscap::qgraph::QGraph;

fn main() -> fscap::Result<()> {
    let (ch, g, pol) = trapdoor_encoder();
    let lb = lower_bound(&ch, &g, &pol, BCJR_TOL)?;
    println!("encoder: rate {:.12}, BCJR residual {:.1e}", lb.value, bcjr_residual(&ch, &g, &pol)?);
    println!("log2(3/2) = {:.12}", 1.5f64.log2());

    let g = QGraph::from_vectors(&[vec![1, 1, 4, 1], vec![2, 3, 3, 3]])?;
    match bcjr_lower_bound(&make_trapdoor(), &g, &UpperOpts::default(), &BcjrOpts::default()) {
        Ok(r) => println!("searched policy on {:?}: {:.9}", g.to_vectors(), r.value),
        Err(e) => println!("no certified policy on {:?}: {e}", g.to_vectors()),
    }
    Ok(())
}
