//! Counts strongly connected Q-graphs up to relabelling and lists the 2-node ones.

use fscap::qgraph::{enumerate_qgraphs, markov_qgraph};

fn main() -> fscap::Result<()> {
    for n in 1..=4 {
        println!("{n} nodes, binary outputs: {} graphs", enumerate_qgraphs(n, 2).count());
    }
    for g in enumerate_qgraphs(2, 2) {
        println!("{:?}", g.to_vectors());
    }
    let m = markov_qgraph(2, 2)?;
    println!("markov k=2: {} nodes, phi = {:?}", m.node_count(), m.to_vectors());
    Ok(())
}
