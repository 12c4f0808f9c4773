//! Reachability helpers over adjacency lists.

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

/// Strongly connected components, each sorted ascending, ordered by smallest member.
pub fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut g = DiGraph::<(), ()>::with_capacity(adj.len(), 0);
    let nodes: Vec<NodeIndex> = (0..adj.len()).map(|_| g.add_node(())).collect();
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            g.add_edge(nodes[u], nodes[v], ());
        }
    }
    let mut comps: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    comps.sort_by_key(|c| c[0]);
    comps
}

/// Whether no edge leaves `members` (given membership flags).
pub fn is_closed(adj: &[Vec<usize>], members: &[usize], inside: &[bool]) -> bool {
    members.iter().all(|&u| adj[u].iter().all(|&v| inside[v]))
}

/// Closed communicating classes.
pub fn closed_classes(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    strongly_connected_components(adj)
        .into_iter()
        .filter(|c| {
            let mut inside = vec![false; adj.len()];
            for &u in c {
                inside[u] = true;
            }
            is_closed(adj, c, &inside)
        })
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of a strongly connected class: gcd of `level(u) + 1 - level(v)` over
/// its internal edges, with BFS levels from the smallest member.
pub fn period(adj: &[Vec<usize>], class: &[usize]) -> usize {
    let n = adj.len();
    let mut inside = vec![false; n];
    for &u in class {
        inside[u] = true;
    }
    let mut level = vec![usize::MAX; n];
    let root = class[0];
    level[root] = 0;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if inside[v] && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0;
    for &u in class {
        for &v in &adj[u] {
            if inside[v] {
                let diff = (level[u] + 1).abs_diff(level[v]);
                g = gcd(g, diff);
            }
        }
    }
    g.max(1)
}

/// Nodes reachable from `start` (including it).
pub fn reachable(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_and_periods() {
        // 0 -> 1 -> 2 -> 1, 3 self loop
        let adj = vec![vec![1], vec![2], vec![1], vec![3]];
        let closed = closed_classes(&adj);
        assert_eq!(closed, vec![vec![1, 2], vec![3]]);
        assert_eq!(period(&adj, &[1, 2]), 2);
        assert_eq!(period(&adj, &[3]), 1);
        let tri = vec![vec![1], vec![2], vec![0, 1]];
        assert_eq!(period(&tri, &[0, 1, 2]), 1);
    }
}
