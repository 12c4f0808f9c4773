//! Q-graphs: deterministic output-labelled graphs that summarize output histories.
//!
//! A Q-graph on `N` nodes over an output alphabet of size `M` is the table
//! `phi(q, y)`. Walking the graph along an output sequence from a start node
//! quantizes the sequence to a node.

mod chain;
mod enumerate;

pub use chain::{
    build_sq_chain, stationary, stationary_from, CommClass, InputPolicy, PolicyJson, SqChain,
};
pub use enumerate::{canonical_form, enumerate_qgraphs, QGraphEnumerator};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QGraph {
    nodes: usize,
    outputs: usize,
    phi: Vec<usize>,
}

impl QGraph {
    /// Builds a graph from a flat `phi[q * outputs + y]` table.
    ///
    /// The table must be total, every node must be reachable from node 0 and
    /// there must be exactly one closed communicating class.
    pub fn new(nodes: usize, outputs: usize, phi: Vec<usize>) -> Result<Self> {
        if nodes == 0 || outputs == 0 {
            return Err(Error::InvalidQGraph("empty node set or alphabet".into()));
        }
        if phi.len() != nodes * outputs {
            return Err(Error::InvalidQGraph(format!(
                "phi has {} entries, expected {}",
                phi.len(),
                nodes * outputs
            )));
        }
        if let Some(&bad) = phi.iter().find(|&&v| v >= nodes) {
            return Err(Error::InvalidQGraph(format!("edge target {bad} out of range")));
        }
        let g = Self { nodes, outputs, phi };
        let adj = g.adjacency();
        if !graph::reachable(&adj, 0).iter().all(|&b| b) {
            return Err(Error::InvalidQGraph("not every node is reachable from node 0".into()));
        }
        let closed = graph::closed_classes(&adj).len();
        if closed != 1 {
            return Err(Error::InvalidQGraph(format!(
                "{closed} closed communicating classes"
            )));
        }
        Ok(g)
    }

    /// Builds from per-output rows of 1-indexed targets, e.g. `[[1,3,1,3],[2,4,2,4]]`.
    pub fn from_vectors(rows: &[Vec<usize>]) -> Result<Self> {
        let outputs = rows.len();
        let nodes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nodes) {
            return Err(Error::InvalidQGraph("ragged vector representation".into()));
        }
        let mut phi = vec![0; nodes * outputs];
        for (y, row) in rows.iter().enumerate() {
            for (q, &t) in row.iter().enumerate() {
                if t == 0 {
                    return Err(Error::InvalidQGraph("vector entries are 1-indexed".into()));
                }
                phi[q * outputs + y] = t - 1;
            }
        }
        Self::new(nodes, outputs, phi)
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn output_count(&self) -> usize {
        self.outputs
    }

    #[inline]
    pub fn next(&self, q: usize, y: usize) -> usize {
        self.phi[q * self.outputs + y]
    }

    pub fn table(&self) -> &[usize] {
        &self.phi
    }

    /// Per-output 1-indexed vectors, the inverse of [`from_vectors`](Self::from_vectors).
    pub fn to_vectors(&self) -> Vec<Vec<usize>> {
        (0..self.outputs)
            .map(|y| (0..self.nodes).map(|q| self.next(q, y) + 1).collect())
            .collect()
    }

    /// Node reached from `q0` along `outputs`.
    pub fn map_sequence(&self, q0: usize, outputs: &[usize]) -> usize {
        outputs.iter().fold(q0, |q, &y| self.next(q, y))
    }

    pub(crate) fn adjacency(&self) -> Vec<Vec<usize>> {
        (0..self.nodes)
            .map(|q| (0..self.outputs).map(|y| self.next(q, y)).collect())
            .collect()
    }

    pub fn to_json(&self) -> QGraphJson {
        QGraphJson {
            nodes: self.nodes,
            outputs: self.outputs,
            phi: self.phi.chunks(self.outputs).map(<[usize]>::to_vec).collect(),
        }
    }

    pub fn from_json(j: &QGraphJson) -> Result<Self> {
        if j.phi.len() != j.nodes || j.phi.iter().any(|r| r.len() != j.outputs) {
            return Err(Error::InvalidQGraph("phi has the wrong shape".into()));
        }
        Self::new(j.nodes, j.outputs, j.phi.concat())
    }
}

/// On-disk Q-graph layout, `phi` q-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QGraphJson {
    pub nodes: usize,
    pub outputs: usize,
    pub phi: Vec<Vec<usize>>,
}

/// The `k`-th order Markov Q-graph: nodes are the last `k` outputs.
///
/// Node `(y_1..y_k)` has index `sum y_i M^(k-i)` and moves to `(y_2..y_k, y)`.
pub fn markov_qgraph(k: usize, output_count: usize) -> Result<QGraph> {
    if k == 0 {
        return Err(Error::InvalidQGraph("Markov order must be at least 1".into()));
    }
    let nodes = output_count
        .checked_pow(k as u32)
        .ok_or_else(|| Error::InvalidQGraph("Markov graph too large".into()))?;
    let mut phi = Vec::with_capacity(nodes * output_count);
    for q in 0..nodes {
        for y in 0..output_count {
            phi.push((q * output_count + y) % nodes);
        }
    }
    QGraph::new(nodes, output_count, phi)
}

/// The 4-node binary graph `[1,3,1,3] / [2,4,2,4]`, i.e. the second-order Markov graph.
pub fn appendix_a_qgraph() -> QGraph {
    QGraph::from_vectors(&[vec![1, 3, 1, 3], vec![2, 4, 2, 4]]).expect("static graph")
}

/// The 8-node graph over outputs `[-1, 0, 1, ?]` used for the dicode erasure bound.
pub fn appendix_c_qgraph() -> QGraph {
    QGraph::from_vectors(&[
        vec![1, 1, 1, 1, 1, 1, 1, 1],
        vec![1, 3, 3, 4, 4, 6, 8, 8],
        vec![6, 6, 6, 6, 6, 6, 6, 6],
        vec![2, 7, 7, 7, 7, 5, 7, 7],
    ])
    .expect("static graph")
}

/// Resolves `"markov:k=<int>"`, `"appendixA"` or `"appendixC"` for a given output alphabet size.
pub fn builtin_qgraph(name: &str, output_count: usize) -> Result<QGraph> {
    let g = match name {
        "appendixA" => appendix_a_qgraph(),
        "appendixC" => appendix_c_qgraph(),
        _ => {
            let k = name
                .strip_prefix("markov:k=")
                .ok_or_else(|| Error::UnknownName(format!("q-graph {name:?}")))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(e.to_string()))?;
            markov_qgraph(k, output_count)?
        }
    };
    if g.output_count() != output_count {
        return Err(Error::AlphabetMismatch(format!(
            "q-graph {name} has {} labels, channel has {output_count} outputs",
            g.output_count()
        )));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn markov_graphs() {
        let g = markov_qgraph(1, 2).unwrap();
        assert_eq!(g.table(), &[0, 1, 0, 1]);
        let g3 = markov_qgraph(3, 2).unwrap();
        assert_eq!(
            g3.to_vectors(),
            vec![vec![1, 3, 5, 7, 1, 3, 5, 7], vec![2, 4, 6, 8, 2, 4, 6, 8]]
        );
        let single = markov_qgraph(1, 1).unwrap();
        assert_eq!(single.node_count(), 1);
        assert_eq!(single.next(0, 0), 0);
        assert!(markov_qgraph(0, 2).is_err());
        assert_eq!(appendix_a_qgraph(), markov_qgraph(2, 2).unwrap());
    }

    #[test]
    fn sequences() {
        let g = markov_qgraph(1, 2).unwrap();
        assert_eq!(g.map_sequence(1, &[]), 1);
        assert_eq!(g.map_sequence(0, &[1, 0]), 0);
        // 1-indexed q0 = 1, outputs [0,1] -> node 2
        assert_eq!(appendix_a_qgraph().map_sequence(0, &[0, 1]) + 1, 2);
    }

    #[test]
    fn appendix_c_is_valid() {
        let g = appendix_c_qgraph();
        assert_eq!(g.node_count(), 8);
        assert_eq!(g.output_count(), 4);
        assert_eq!(g.next(5, 3), 4);
    }

    #[test]
    fn rejects_broken_tables() {
        assert!(QGraph::new(2, 2, vec![0, 0, 1, 1]).is_err()); // node 1 unreachable
        assert!(QGraph::new(2, 2, vec![0, 1, 1, 2]).is_err()); // out of range
        assert!(QGraph::new(3, 1, vec![1, 1, 2]).is_err()); // node 2 unreachable
        assert!(QGraph::new(3, 2, vec![1, 2, 1, 1, 2, 2]).is_err()); // two sinks
    }

    #[test]
    fn builtin_names() {
        assert_eq!(builtin_qgraph("markov:k=3", 2).unwrap().node_count(), 8);
        assert_eq!(builtin_qgraph("appendixC", 4).unwrap().node_count(), 8);
        assert!(builtin_qgraph("appendixC", 2).is_err());
        assert!(builtin_qgraph("star", 2).is_err());
    }

    proptest! {
        #[test]
        fn markov_suffix_determines_node(
            k in 1usize..4,
            m in 1usize..4,
            prefix in proptest::collection::vec(0usize..3, 0..6),
            suffix_seed in proptest::collection::vec(0usize..3, 4),
            q0 in 0usize..64,
        ) {
            let g = markov_qgraph(k, m).unwrap();
            let q0 = q0 % g.node_count();
            let prefix: Vec<usize> = prefix.into_iter().map(|y| y % m).collect();
            let suffix: Vec<usize> = suffix_seed.into_iter().take(k).map(|y| y % m).collect();
            let a = g.map_sequence(q0, &[prefix.clone(), suffix.clone()].concat());
            let b = g.map_sequence(0, &suffix);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn json_round_trip(k in 1usize..4, m in 1usize..4) {
            let g = markov_qgraph(k, m).unwrap();
            let text = serde_json::to_string(&g.to_json()).unwrap();
            let back = QGraph::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
            prop_assert_eq!(back, g);
        }
    }
}
