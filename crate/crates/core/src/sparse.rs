//! Symmetric sparse matrices stored as the upper triangle in CSR form, and the
//! solvers needed for mass-matrix inversion.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use crate::small::Mat;
use crate::{Error, Result};

/// Symmetric matrix; row `i` stores columns `j >= i`, diagonal first.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSymMatrix {
    /// Sums duplicate entries in the order given; `(i, j)` and `(j, i)` refer
    /// to the same stored entry. The diagonal is always stored.
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be positive".into()));
        }
        for e in entries.iter_mut() {
            if e.0 >= n || e.1 >= n {
                return Err(Error::InvalidArgument(format!("entry ({}, {}) outside {n}x{n}", e.0, e.1)));
            }
            if e.0 > e.1 {
                std::mem::swap(&mut e.0, &mut e.1);
            }
        }
        entries.extend((0..n).map(|i| (i, i, 0.0)));
        // stable sort keeps summation order deterministic
        entries.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseSymMatrix { n, row_ptr, cols, vals })
    }

    pub fn from_diagonal(d: Vec<f64>) -> Result<Self> {
        let n = d.len();
        if n == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be positive".into()));
        }
        Ok(SparseSymMatrix { n, row_ptr: (0..=n).collect(), cols: (0..n).collect(), vals: d })
    }

    /// Upper triangle of a dense symmetric matrix, dropping exact zeros.
    pub fn from_dense(a: &Mat) -> Result<Self> {
        let n = a.nrows();
        let mut t = Vec::new();
        for i in 0..n {
            for j in i..n {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(n, t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored (upper-triangle) entry count.
    pub fn nnz_stored(&self) -> usize {
        self.vals.len()
    }

    /// Stored entries of row `i` (columns `>= i`).
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(p) => self.vals[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.vals[self.row_ptr[i]]).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| j == i || v == 0.0))
    }

    /// `y = A x`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let mut acc = 0.0;
            for (j, v) in self.row(i) {
                acc += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
            y[i] += acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let t = v * x[i] * x[j];
                s += if j == i { t } else { 2.0 * t };
            }
        }
        s
    }

    pub fn to_dense(&self) -> Mat {
        let mut a = Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest off-diagonal entry (or `-inf` for a diagonal matrix).
    pub fn max_offdiag(&self) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if j != i {
                    m = m.max(v);
                }
            }
        }
        m
    }

    /// Row sums of the full symmetric matrix.
    pub fn row_sums(&self) -> Vec<f64> {
        self.matvec(&vec![1.0; self.n])
    }

    /// Neighbour lists of the symmetric sparsity graph, excluding the diagonal.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if j != i {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        adj
    }

    /// MatrixMarket `coordinate real symmetric`, lower triangle, 1-based.
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
        let _ = writeln!(s, "{} {} {}", self.n, self.n, self.nnz_stored());
        let mut lower: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz_stored());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                lower.push((j, i, v));
            }
        }
        lower.sort_by_key(|e| (e.1, e.0));
        for (r, c, v) in lower {
            let _ = writeln!(s, "{} {} {:.17e}", r + 1, c + 1, v);
        }
        s
    }

    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_matrix_market())?;
        Ok(())
    }
}

/// Reverse Cuthill–McKee ordering: `perm[new] = old`.
pub fn rcm_ordering(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let deg: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_last = |start: usize, visited: &[bool]| -> usize {
        let mut seen = visited.to_vec();
        let mut q = VecDeque::from([start]);
        seen[start] = true;
        let mut last = start;
        while let Some(u) = q.pop_front() {
            last = u;
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    q.push_back(v);
                }
            }
        }
        last
    };
    while order.len() < n {
        let seed = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| deg[i]).unwrap();
        // two sweeps toward a pseudo-peripheral node
        let start = bfs_last(bfs_last(seed, &visited), &visited);
        let mut q = VecDeque::from([start]);
        visited[start] = true;
        while let Some(u) = q.pop_front() {
            order.push(u);
            let mut nb: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            nb.sort_by_key(|&v| (deg[v], v));
            for v in nb {
                if !visited[v] {
                    visited[v] = true;
                    q.push_back(v);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Envelope (skyline) Cholesky factor `P A Pᵀ = L Lᵀ` under an RCM ordering.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors `a`; refuses when the envelope would exceed `max_entries`.
    pub fn factor(a: &SparseSymMatrix, max_entries: usize) -> Result<Self> {
        let n = a.n();
        let perm = rcm_ordering(&a.adjacency());
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for (j, _) in a.row(i) {
                let (p, q) = (inv[i], inv[j]);
                let (hi, lo) = if p >= q { (p, q) } else { (q, p) };
                first[hi] = first[hi].min(lo);
            }
        }
        let mut start = vec![0; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        if start[n] > max_entries {
            return Err(Error::Unsupported(format!(
                "envelope of {} entries exceeds the limit {max_entries}",
                start[n]
            )));
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            for (j, v) in a.row(i) {
                let (p, q) = (inv[i], inv[j]);
                let (hi, lo) = if p >= q { (p, q) } else { (q, p) };
                data[start[hi] + lo - first[hi]] += v;
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = data[start[i] + j - fi];
                for k in k0..j {
                    s -= data[start[i] + k - fi] * data[start[j] + k - fj];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite(format!("pivot {s:e} at row {}", perm[i])));
                    }
                    data[start[i] + i - fi] = s.sqrt();
                } else {
                    data[start[i] + j - fi] = s / data[start[j] + j - fj];
                }
            }
        }
        Ok(EnvelopeCholesky { perm, first, start, data })
    }

    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let mut s = y[i];
            for k in fi..i {
                s -= row[k - fi] * y[k];
            }
            y[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= row[k - fi] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Jacobi-preconditioned conjugate gradients; `tol` is relative to `‖b‖`.
pub fn pcg(a: &SparseSymMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n();
    let dinv: Vec<f64> = a.diag().iter().map(|d| 1.0 / d).collect();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite("conjugate gradient curvature".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: norm(&r) / bnorm })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Largest envelope the direct mass solver will allocate.
pub const ENVELOPE_LIMIT: usize = 60_000_000;

/// Applies `M̃⁻¹` for a diagonal or full mass matrix.
#[derive(Clone, Debug)]
pub enum MassSolver {
    Diagonal(Vec<f64>),
    Cholesky(EnvelopeCholesky),
    Cg(SparseSymMatrix),
}

impl MassSolver {
    pub fn new(m: &SparseSymMatrix) -> Result<Self> {
        if m.is_diagonal() {
            let d = m.diag();
            if let Some(i) = d.iter().position(|v| !(*v > 0.0)) {
                return Err(Error::NotPositiveDefinite(format!("diagonal entry {i} is {}", d[i])));
            }
            return Ok(MassSolver::Diagonal(d));
        }
        match EnvelopeCholesky::factor(m, ENVELOPE_LIMIT) {
            Ok(c) => Ok(MassSolver::Cholesky(c)),
            Err(Error::Unsupported(_)) => Ok(MassSolver::Cg(m.clone())),
            Err(e) => Err(e),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            MassSolver::Diagonal(d) => Ok(b.iter().zip(d).map(|(b, d)| b / d).collect()),
            MassSolver::Cholesky(c) => Ok(c.solve(b)),
            MassSolver::Cg(m) => pcg(m, b, 1e-12, 10 * m.n() + 100),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn laplacian_2d(k: usize) -> SparseSymMatrix {
        let id = |i: usize, j: usize| i * k + j;
        let mut t = Vec::new();
        for i in 0..k {
            for j in 0..k {
                t.push((id(i, j), id(i, j), 4.0));
                if i + 1 < k {
                    t.push((id(i, j), id(i + 1, j), -1.0));
                }
                if j + 1 < k {
                    t.push((id(i, j + 1), id(i, j), -1.0));
                }
            }
        }
        SparseSymMatrix::from_triplets(k * k, t).unwrap()
    }

    #[test]
    fn triplets_sum_and_symmetrize() {
        let a = SparseSymMatrix::from_triplets(3, vec![(0, 1, 1.0), (1, 0, 2.0), (2, 2, 5.0)]).unwrap();
        assert_eq!(a.get(1, 0), 3.0);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.diag(), vec![0.0, 0.0, 5.0]);
        let d = a.to_dense();
        assert_eq!(d, d.transpose());
    }

    #[test]
    fn matvec_matches_dense() {
        let a = laplacian_2d(5);
        let x: Vec<f64> = (0..25).map(|i| (i as f64).sin()).collect();
        let y = a.matvec(&x);
        let yd = a.to_dense() * nalgebra::DVector::from_vec(x.clone());
        assert!(y.iter().zip(yd.iter()).all(|(a, b)| (a - b).abs() < 1e-13));
        let q = a.quad_form(&x);
        assert!((q - dot(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn envelope_cholesky_solves() {
        let a = laplacian_2d(12);
        let c = EnvelopeCholesky::factor(&a, usize::MAX).unwrap();
        let b: Vec<f64> = (0..144).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let x = c.solve(&b);
        let r = a.matvec(&x);
        assert!(r.iter().zip(&b).all(|(r, b)| (r - b).abs() < 1e-11));
        assert!(c.envelope_size() < 144 * 144 / 4);
        assert!(EnvelopeCholesky::factor(&a, 10).is_err());
    }

    #[test]
    fn indefinite_rejected() {
        let a = SparseSymMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(EnvelopeCholesky::factor(&a, 100), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn pcg_converges() {
        let a = laplacian_2d(10);
        let b = vec![1.0; 100];
        let x = pcg(&a, &b, 1e-12, 1000).unwrap();
        let r = a.matvec(&x);
        assert!(r.iter().zip(&b).all(|(r, b)| (r - b).abs() < 1e-10));
    }

    #[test]
    fn matrix_market_export() {
        let a = SparseSymMatrix::from_triplets(2, vec![(0, 0, 2.0), (0, 1, -1.0), (1, 1, 2.0)]).unwrap();
        let s = a.to_matrix_market();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[1], "2 2 3");
        // lower triangle only: row >= column
        for l in &lines[2..] {
            let t: Vec<usize> = l.split_whitespace().take(2).map(|v| v.parse().unwrap()).collect();
            assert!(t[0] >= t[1]);
        }
    }

    proptest! {
        #[test]
        fn cholesky_random_spd(seed in 0u64..500, n in 1usize..40) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut t = Vec::new();
            let mut rowsum = vec![0.0; n];
            for _ in 0..3 * n {
                let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
                if i != j {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    t.push((i, j, v));
                    rowsum[i] += v.abs();
                    rowsum[j] += v.abs();
                }
            }
            for (i, s) in rowsum.iter().enumerate() {
                t.push((i, i, s + 1.0));
            }
            let a = SparseSymMatrix::from_triplets(n, t).unwrap();
            let c = EnvelopeCholesky::factor(&a, usize::MAX).unwrap();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = c.solve(&b);
            let r = a.matvec(&x);
            for (ri, bi) in r.iter().zip(&b) {
                prop_assert!((ri - bi).abs() < 1e-10);
            }
        }
    }
}
