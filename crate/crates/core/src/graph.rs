//! Compact adjacency storage shared by the graph stages.

use std::collections::VecDeque;

/// Compressed adjacency: for node `v`, `items[offsets[v]..offsets[v + 1]]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Csr {
    offsets: Vec<usize>,
    items: Vec<usize>,
}

impl Csr {
    /// Groups `(key, value)` pairs by key with a counting sort. Values keep
    /// their relative input order within each key.
    pub fn group(n: usize, pairs: impl Iterator<Item = (usize, usize)> + Clone) -> Self {
        let mut offsets = vec![0usize; n + 1];
        let mut len = 0;
        for (k, _) in pairs.clone() {
            offsets[k + 1] += 1;
            len += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut items = vec![0usize; len];
        for (k, v) in pairs {
            items[cursor[k]] = v;
            cursor[k] += 1;
        }
        Self { offsets, items }
    }

    /// Outgoing neighbour lists of a directed edge list.
    pub fn successors(n: usize, edges: &[(usize, usize)]) -> Self {
        Self::group(n, edges.iter().copied())
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn row(&self, v: usize) -> &[usize] {
        &self.items[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }
}

/// Outcome of running Kahn's algorithm to exhaustion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Acyclicity {
    Acyclic,
    /// Nodes never released by Kahn's algorithm; they lie on or downstream
    /// of a directed cycle.
    Cyclic { residual: Vec<usize> },
}

impl Acyclicity {
    pub fn is_acyclic(&self) -> bool {
        matches!(self, Acyclicity::Acyclic)
    }
}

/// Kahn's algorithm over a successor table.
pub fn kahn_check(succ: &Csr) -> Acyclicity {
    let n = succ.node_count();
    let mut indeg = vec![0usize; n];
    for v in 0..n {
        for &w in succ.row(v) {
            indeg[w] += 1;
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop_front() {
        seen += 1;
        for &w in succ.row(v) {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    if seen == n {
        Acyclicity::Acyclic
    } else {
        Acyclicity::Cyclic {
            residual: (0..n).filter(|&v| indeg[v] > 0).collect(),
        }
    }
}
