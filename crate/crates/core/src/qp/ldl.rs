//! Banded LDLᵀ for quasi-definite KKT matrices.
//!
//! The sparsity pattern is reordered with reverse Cuthill–McKee once, then
//! every numeric factorization runs in a dense band. Market problems are
//! chains of per-period blocks, so the band stays narrow regardless of the
//! horizon. No pivoting is done: the matrix is expected to have a positive
//! definite leading block and a negative definite trailing block, and pivots
//! of the wrong sign or tiny magnitude are replaced by `±min_pivot`.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub(crate) struct BandLdl {
    n: usize,
    bw: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    signs: Vec<f64>,
    band: Vec<f64>,
    diag: Vec<f64>,
    perturbed: usize,
}

impl BandLdl {
    /// `edges` lists structurally nonzero off-diagonal positions (either
    /// orientation); `signs[i]` is the expected pivot sign of index `i`.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>, signs: Vec<f64>) -> Self {
        assert_eq!(signs.len(), n);
        let mut adj = vec![Vec::new(); n];
        for (i, j) in edges {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        let perm = reverse_cuthill_mckee(&adj);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let bw = adj
            .iter()
            .enumerate()
            .flat_map(|(i, a)| a.iter().map(move |&j| (i, j)))
            .map(|(i, j)| iperm[i].abs_diff(iperm[j]))
            .max()
            .unwrap_or(0);
        Self {
            n,
            bw,
            perm,
            iperm,
            signs,
            band: vec![0.0; n * (bw + 1)],
            diag: vec![0.0; n],
            perturbed: 0,
        }
    }

    #[cfg(test)]
    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[cfg(test)]
    pub fn perturbed_pivots(&self) -> usize {
        self.perturbed
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    pub fn clear(&mut self) {
        self.band.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `v` to the symmetric pair `K[i][j]`, `K[j][i]` (original indices).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (a, b) = (self.iperm[i], self.iperm[j]);
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        assert!(
            hi - lo <= self.bw,
            "entry ({i}, {j}) outside the declared pattern"
        );
        let k = self.idx(hi, lo);
        self.band[k] += v;
    }

    pub fn factor(&mut self, min_pivot: f64) {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        self.perturbed = 0;
        // u[c] = L[i][c]·d[c] for the row being factored
        let mut u = vec![0.0; w];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            // Row i occupies band[i*w + (c + bw - i)] for columns c in lo..=i.
            let (done, rest) = self.band.split_at_mut(i * w);
            let row_i = &mut rest[..w];
            let off = bw - (i - lo);
            for j in lo..i {
                let klo = lo.max(j.saturating_sub(bw));
                let row_j = &done[j * w + (klo + bw - j)..j * w + bw];
                let acc = dot(&u[klo - lo + off..j - lo + off], row_j);
                let at = j + bw - i;
                let s = row_i[at] - acc;
                u[at] = s;
                row_i[at] = s / self.diag[j];
            }
            let mut s = row_i[bw] - dot(&u[off..bw], &row_i[off..bw]);
            let sign = self.signs[self.perm[i]];
            if !(s * sign >= min_pivot) {
                s = sign * min_pivot;
                self.perturbed += 1;
            }
            self.diag[i] = s;
        }
    }

    /// Solves `K x = rhs` in place using the current factorization.
    pub fn solve(&self, rhs: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| rhs[old]).collect();
        let w = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &self.band[i * w + (lo + bw - i)..i * w + bw];
            y[i] -= dot(row, &y[lo..i]);
        }
        for i in 0..n {
            y[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let lo = i.saturating_sub(bw);
            let yi = y[i];
            let row = &self.band[i * w + (lo + bw - i)..i * w + bw];
            for (v, l) in y[lo..i].iter_mut().zip(row) {
                *v -= l * yi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            rhs[old] = y[new];
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, ra) = a.as_chunks::<4>();
    let (cb, rb) = b[..a.len()].as_chunks::<4>();
    for (x, y) in ca.iter().zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// Reverse Cuthill–McKee ordering; returns `perm[new] = old`.
fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (adj[i].len(), i));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(adj, seed);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (adj[u].len(), u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> (Vec<usize>, usize) {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut reached = vec![start];
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                reached.push(u);
                queue.push_back(u);
            }
        }
    }
    let depth = reached.iter().map(|&v| dist[v]).max().unwrap_or(0);
    let last_level: Vec<usize> = reached.into_iter().filter(|&v| dist[v] == depth).collect();
    (last_level, depth)
}

fn pseudo_peripheral(adj: &[Vec<usize>], seed: usize) -> usize {
    let mut root = seed;
    let (mut level, mut depth) = bfs_levels(adj, root);
    for _ in 0..8 {
        let cand = *level.iter().min_by_key(|&&v| (adj[v].len(), v)).unwrap();
        let (l2, d2) = bfs_levels(adj, cand);
        if d2 <= depth {
            break;
        }
        root = cand;
        level = l2;
        depth = d2;
    }
    root
}
