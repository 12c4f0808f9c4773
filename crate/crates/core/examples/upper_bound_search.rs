//! Best single-letter upper bound on the trapdoor feedback capacity over
//! every Q-graph with at most three nodes.

use fscap::channels::make_trapdoor;
use fscap::graph_bounds::{search_upper_bound, small_graphs, UpperOpts};

fn main() -> fscap::Result<()> {
    let ch = make_trapdoor();
    let found = search_upper_bound(&ch, small_graphs(3, 2), &UpperOpts::default())?;
    println!("graphs evaluated: {} ({} qualified)", found.evaluated, found.qualified);
    println!("best graph: {:?}", found.graph.to_vectors());
    println!("upper bound: {:.9}", found.report.value);
    println!("log2(golden ratio): {:.9}", ((1.0 + 5f64.sqrt()) / 2.0).log2());
    Ok(())
}
