//! Exhaustive enumeration of small Q-graphs up to node relabelling.
//!
//! Tables are generated directly in first-appearance order (each new label
//! is one past the largest label seen so far, reading `phi` row-major), which
//! is the relabelling obtained by a breadth-first walk from node 0. For a
//! strongly connected graph the lexicographically smallest table over all
//! node permutations is the smallest such walk over all choices of root, so
//! a generated table is kept iff it is strongly connected and no other root
//! yields a smaller table.

use super::QGraph;

/// Relabels nodes in order of first appearance walking from `root`.
/// `None` if some node is unreachable from `root`.
fn relabel_from(phi: &[usize], n: usize, m: usize, root: usize) -> Option<Vec<usize>> {
    let mut label = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    label[root] = 0;
    order.push(root);
    let mut k = 0;
    while k < order.len() {
        let u = order[k];
        for y in 0..m {
            let v = phi[u * m + y];
            if label[v] == usize::MAX {
                label[v] = order.len();
                order.push(v);
            }
        }
        k += 1;
    }
    if order.len() < n {
        return None;
    }
    let mut out = Vec::with_capacity(n * m);
    for &u in &order {
        for y in 0..m {
            out.push(label[phi[u * m + y]]);
        }
    }
    Some(out)
}

fn canonical_table(phi: &[usize], n: usize, m: usize) -> Vec<usize> {
    (0..n)
        .filter_map(|r| relabel_from(phi, n, m, r))
        .min()
        .expect("node 0 reaches every node")
}

/// Lexicographically minimal relabelling of `g`.
pub fn canonical_form(g: &QGraph) -> QGraph {
    let t = canonical_table(g.table(), g.node_count(), g.output_count());
    QGraph::new(g.node_count(), g.output_count(), t).expect("relabelling preserves validity")
}

fn all_reach_zero(phi: &[usize], n: usize, m: usize) -> bool {
    let mut rev = vec![Vec::new(); n];
    for u in 0..n {
        for y in 0..m {
            rev[phi[u * m + y]].push(u);
        }
    }
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut stack = vec![0];
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &w in &rev[u] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}

/// Streams every strongly connected Q-graph on `n` nodes over `m` labels,
/// one representative per relabelling class, in lexicographic table order.
#[derive(Debug, Clone)]
pub struct QGraphEnumerator {
    n: usize,
    m: usize,
    table: Vec<usize>,
    /// `prefix_max[i]` = largest label among `table[..i]` (node 0 counts).
    prefix_max: Vec<usize>,
    cursor: Vec<usize>,
    depth: usize,
    done: bool,
}

impl QGraphEnumerator {
    pub fn new(node_count: usize, output_count: usize) -> Self {
        let len = node_count * output_count;
        Self {
            n: node_count,
            m: output_count,
            table: vec![0; len],
            prefix_max: vec![0; len + 1],
            cursor: vec![0; len + 1],
            depth: 0,
            done: node_count == 0 || output_count == 0,
        }
    }

    fn backtrack(&mut self) {
        if self.depth == 0 {
            self.done = true;
            return;
        }
        self.depth -= 1;
        self.cursor[self.depth] = self.table[self.depth] + 1;
    }

    fn accept(&self) -> bool {
        if self.prefix_max[self.table.len()] + 1 != self.n {
            return false;
        }
        if !all_reach_zero(&self.table, self.n, self.m) {
            return false;
        }
        (1..self.n).all(|r| {
            relabel_from(&self.table, self.n, self.m, r).map_or(true, |t| t >= self.table)
        })
    }
}

impl Iterator for QGraphEnumerator {
    type Item = QGraph;

    fn next(&mut self) -> Option<QGraph> {
        let len = self.table.len();
        while !self.done {
            let i = self.depth;
            if i == len {
                let found = self
                    .accept()
                    .then(|| QGraph::new(self.n, self.m, self.table.clone()).expect("valid by construction"));
                self.backtrack();
                if found.is_some() {
                    return found;
                }
                continue;
            }
            let mb = self.prefix_max[i];
            // row r may only start once node r has been named
            if i % self.m == 0 && i / self.m > mb {
                self.backtrack();
                continue;
            }
            let v = self.cursor[i];
            if v <= (mb + 1).min(self.n - 1) {
                self.table[i] = v;
                self.prefix_max[i + 1] = mb.max(v);
                self.depth += 1;
                self.cursor[self.depth] = 0;
            } else {
                self.backtrack();
            }
        }
        None
    }
}

/// See [`QGraphEnumerator`].
pub fn enumerate_qgraphs(node_count: usize, output_count: usize) -> QGraphEnumerator {
    QGraphEnumerator::new(node_count, output_count)
}
