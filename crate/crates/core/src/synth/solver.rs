//! Envelope (skyline) Cholesky for sparse symmetric positive-definite
//! systems, under a reverse Cuthill-McKee ordering.

use std::collections::VecDeque;

use crate::graph::Csr;

/// Reverse Cuthill-McKee permutation: `perm[new] = old`.
pub fn rcm_order(adj: &Csr) -> Vec<usize> {
    let n = adj.node_count();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (adj.degree(v), v));
    let mut scratch = Vec::new();

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = peripheral(adj, seed);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            scratch.clear();
            scratch.extend(adj.row(v).iter().copied().filter(|&w| !visited[w]));
            scratch.sort_by_key(|&w| (adj.degree(w), w));
            for &w in &scratch {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Last-level, lowest-degree node of a BFS from `seed`.
fn peripheral(adj: &Csr, seed: usize) -> usize {
    let mut level = std::collections::HashMap::from([(seed, 0usize)]);
    let mut queue = VecDeque::from([seed]);
    let mut best = (0usize, usize::MAX, seed);
    while let Some(v) = queue.pop_front() {
        let d = level[&v];
        let key = (d, adj.degree(v));
        if key.0 > best.0 || (key.0 == best.0 && key.1 < best.1) {
            best = (key.0, key.1, v);
        }
        for &w in adj.row(v) {
            if let std::collections::hash_map::Entry::Vacant(e) = level.entry(w) {
                e.insert(d + 1);
                queue.push_back(w);
            }
        }
    }
    best.2
}

/// Cholesky factor `L` stored row by row over each row's envelope.
#[derive(Debug)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    inv: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors `A` given its diagonal and strictly-lower entries `(i, j, a_ij)`
    /// in original numbering. Returns the original index of the first
    /// non-positive pivot on failure.
    pub fn factor(diag: &[f64], off: &[(usize, usize, f64)]) -> Result<Self, usize> {
        let n = diag.len();
        let adj = Csr::group(n, off.iter().flat_map(|&(i, j, _)| [(i, j), (j, i)]));
        let perm = rcm_order(&adj);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for &(i, j, _) in off {
            let (a, b) = (inv[i], inv[j]);
            let (hi, lo) = if a > b { (a, b) } else { (b, a) };
            first[hi] = first[hi].min(lo);
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + i - first[i] + 1);
        }
        let mut vals = vec![0.0; start[n]];
        for (old, &d) in diag.iter().enumerate() {
            let i = inv[old];
            vals[start[i] + i - first[i]] += d;
        }
        for &(i, j, a) in off {
            let (a_, b_) = (inv[i], inv[j]);
            let (hi, lo) = if a_ > b_ { (a_, b_) } else { (b_, a_) };
            vals[start[hi] + lo - first[hi]] += a;
        }

        for i in 0..n {
            let fi = first[i];
            let (done, rest) = vals.split_at_mut(start[i]);
            let row = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = &done[start[j]..start[j] + j - fj + 1];
                let dot: f64 = row[k0 - fi..j - fi]
                    .iter()
                    .zip(&row_j[k0 - fj..j - fj])
                    .map(|(a, b)| a * b)
                    .sum();
                row[j - fi] = (row[j - fi] - dot) / row_j[j - fj];
            }
            let d = row[i - fi] - row[..i - fi].iter().map(|x| x * x).sum::<f64>();
            if d.is_nan() || d <= 0.0 {
                return Err(perm[i]);
            }
            row[i - fi] = d.sqrt();
        }
        Ok(Self {
            perm,
            inv,
            first,
            start,
            vals,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.vals.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.vals[self.start[i]..self.start[i + 1]]
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = self.row(i);
            let dot: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(l, y)| l * y).sum();
            y[i] = (y[i] - dot) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = self.row(i);
            y[i] /= row[i - fi];
            let xi = y[i];
            for (yk, l) in y[fi..i].iter_mut().zip(&row[..i - fi]) {
                *yk -= l * xi;
            }
        }
        (0..n).map(|old| y[self.inv[old]]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(n: usize, diag: &[f64], off: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = diag[i];
        }
        for &(i, j, v) in off {
            a[i][j] += v;
            a[j][i] += v;
        }
        a
    }

    #[test]
    fn solves_small_spd() {
        // path Laplacian plus identity
        let n = 6;
        let diag = vec![2.0, 3.0, 3.0, 3.0, 3.0, 2.0];
        let off: Vec<_> = (1..n).map(|i| (i, i - 1, -1.0)).chain([(5, 0, -0.5)]).collect();
        let mut diag = diag;
        diag[0] += 0.5;
        diag[5] += 0.5;
        let f = EnvelopeCholesky::factor(&diag, &off).unwrap();
        let b = [1.0, -2.0, 0.5, 3.0, 0.0, -1.0];
        let x = f.solve(&b);
        let a = dense(n, &diag, &off);
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| a[i][j] * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-12, "row {i}: {ax} vs {}", b[i]);
        }
    }

    #[test]
    fn singular_reported() {
        // pure Laplacian of a 2-node path is singular
        assert!(EnvelopeCholesky::factor(&[1.0, 1.0], &[(1, 0, -1.0)]).is_err());
    }

    #[test]
    fn rcm_is_a_permutation() {
        let adj = Csr::group(5, [(0, 3), (3, 0), (1, 4), (4, 1), (3, 4), (4, 3)].into_iter());
        let mut p = rcm_order(&adj);
        p.sort_unstable();
        assert_eq!(p, vec![0, 1, 2, 3, 4]);
    }
}
