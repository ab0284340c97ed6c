//! Small dense and sparse kernels shared by the physics modules.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Eigen-decomposition of a real symmetric matrix.
///
/// Returns ascending eigenvalues and, if requested, a matrix whose *rows* are
/// the matching orthonormal eigenvectors. Each eigenvector is signed so that
/// its largest-magnitude component is positive.
pub fn symmetric_eigen(a: Array2<f64>, vectors: bool) -> Result<(Vec<f64>, Option<Array2<f64>>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Contract(format!("matrix is {}x{}, not square", n, a.ncols())));
    }
    if n == 0 {
        return Ok((Vec::new(), vectors.then(|| Array2::zeros((0, 0)))));
    }
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| a[[i, j]]);
    drop(a);
    if !vectors {
        let mut w = m
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|e| Error::Numerical(format!("eigenvalue iteration failed: {e:?}")))?;
        w.sort_by(f64::total_cmp);
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite eigenvalue".into()));
        }
        return Ok((w, None));
    }
    let eig = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigen-decomposition failed: {e:?}")))?;
    drop(m);
    let s = eig.S();
    let u = eig.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let w: Vec<f64> = order.iter().map(|&k| s[k]).collect();
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    let mut v = Array2::<f64>::zeros((n, n));
    for (row, &k) in order.iter().enumerate() {
        let col = u.col(k);
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..n {
            let x = col[i];
            if x.abs() > best * (1.0 + 1e-12) {
                best = x.abs();
                sign = x.signum();
            }
        }
        for i in 0..n {
            v[[row, i]] = sign * col[i];
        }
    }
    Ok((w, Some(v)))
}

/// `out = m · x` for a real matrix acting on a complex vector.
pub fn real_matvec(m: ArrayView2<f64>, x: &[C64]) -> Vec<C64> {
    let xs = Array2::from_shape_fn((x.len(), 2), |(i, c)| if c == 0 { x[i].re } else { x[i].im });
    let y = m.dot(&xs);
    y.rows().into_iter().map(|r| C64::new(r[0], r[1])).collect()
}

/// `out = mᵀ · x` for a real matrix acting on a complex vector.
pub fn real_matvec_t(m: ArrayView2<f64>, x: &[C64]) -> Vec<C64> {
    real_matvec(m.t(), x)
}

/// Complex matrix product `a · b` where `b` is real.
pub fn complex_times_real(a: ArrayView2<C64>, b: ArrayView2<f64>) -> Array2<C64> {
    let re = a.mapv(|z| z.re).dot(&b);
    let im = a.mapv(|z| z.im).dot(&b);
    let mut out = Array2::zeros(re.raw_dim());
    ndarray::Zip::from(&mut out)
        .and(&re)
        .and(&im)
        .for_each(|o, &r, &i| *o = C64::new(r, i));
    out
}

/// Complex matrix product `a · b` where `a` is real.
pub fn real_times_complex(a: ArrayView2<f64>, b: ArrayView2<C64>) -> Array2<C64> {
    let re = a.dot(&b.mapv(|z| z.re));
    let im = a.dot(&b.mapv(|z| z.im));
    let mut out = Array2::zeros(re.raw_dim());
    ndarray::Zip::from(&mut out)
        .and(&re)
        .and(&im)
        .for_each(|o, &r, &i| *o = C64::new(r, i));
    out
}

pub fn adjoint(a: ArrayView2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

pub fn max_abs_diff(a: ArrayView2<C64>, b: ArrayView2<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Compressed sparse row matrix with complex entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets; duplicates are summed and exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        };
        m.prune();
        m
    }

    fn prune(&mut self) {
        if self.values.iter().all(|v| *v != ZERO) {
            return;
        }
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.nrows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                if self.values[p] != ZERO {
                    indices.push(self.indices[p]);
                    values.push(self.values[p]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self::from_triplets(n, n, d.iter().enumerate().map(|(i, &x)| (i, i, C64::new(x, 0.0))).collect())
    }

    pub fn from_dense(a: ArrayView2<C64>) -> Self {
        let mut t = Vec::new();
        for ((i, j), &v) in a.indexed_iter() {
            if v != ZERO {
                t.push((i, j, v));
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |p| (self.indices[p], self.values[p]))
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut a = Array2::zeros((self.nrows, self.ncols));
        for (r, c, v) in self.triplets() {
            a[[r, c]] += v;
        }
        a
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m.prune();
        m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        Self::from_triplets(self.nrows, self.ncols, self.triplets().chain(other.triplets()).collect())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut t = Vec::new();
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    t.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.nrows, other.ncols, t)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let mut t = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                t.push((r1 * other.nrows + r2, c1 * other.ncols + c2, v1 * v2));
            }
        }
        Self::from_triplets(self.nrows * other.nrows, self.ncols * other.ncols, t)
    }

    /// `y += s · A x`.
    pub fn matvec_acc(&self, x: &[C64], s: C64, y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for p in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[p] * x[self.indices[p]];
            }
            *yr += s * acc;
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.nrows];
        self.matvec_acc(x, ONE, &mut y);
        y
    }

    /// Largest |A − A†| entry.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.add(&self.adjoint().scaled(C64::new(-1.0, 0.0)));
        d.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    /// Gershgorin bounds on the spectrum of a Hermitian matrix.
    pub fn gershgorin_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..self.nrows {
            let mut centre = 0.0;
            let mut radius = 0.0;
            for (c, v) in self.row(r) {
                if c == r {
                    centre += v.re;
                } else {
                    radius += v.norm();
                }
            }
            lo = lo.min(centre - radius);
            hi = hi.max(centre + radius);
        }
        (lo, hi)
    }
}

/// Bessel functions J_0(x)..J_kmax(x) for x ≥ 0 by Miller's backward recurrence.
pub fn bessel_j_sequence(x: f64, kmax: usize) -> Vec<f64> {
    assert!(x >= 0.0);
    if x == 0.0 {
        let mut v = vec![0.0; kmax + 1];
        v[0] = 1.0;
        return v;
    }
    let start = {
        let base = kmax.max(x.ceil() as usize);
        base + 30 + (40.0 * x.powf(1.0 / 3.0)) as usize
    };
    let start = start + (start % 2);
    let mut j = vec![0.0f64; start + 2];
    j[start + 1] = 0.0;
    j[start] = 1e-300;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        j[k - 1] = 2.0 * k as f64 / x * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in j[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
            norm *= 1e-250;
        }
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * j[k - 1];
        }
    }
    norm += j[0];
    j.truncate(kmax + 1);
    j.iter_mut().for_each(|v| *v /= norm);
    j
}

/// Least-squares solution of `a · x ≈ b` by Householder QR.
pub fn least_squares(a: &Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = a.dim();
    if m < n || b.len() != m {
        return Err(Error::Contract(format!("least squares needs m >= n, got {m}x{n}")));
    }
    let mut r = a.clone();
    let mut y = b.to_vec();
    for k in 0..n {
        let norm: f64 = (k..m).map(|i| r[[i, k]] * r[[i, k]]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Numerical("rank-deficient least-squares system".into()));
        }
        let alpha = if r[[k, k]] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[[i, k]]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let s: f64 = (k..m).map(|i| v[i - k] * r[[i, j]]).sum::<f64>() * 2.0 / vnorm2;
                for i in k..m {
                    r[[i, j]] -= s * v[i - k];
                }
            }
            let s: f64 = (k..m).map(|i| v[i - k] * y[i]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                y[i] -= s * v[i - k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| r[[k, j]] * x[j]).sum();
        if r[[k, k]].abs() < 1e-300 {
            return Err(Error::Numerical("singular triangular factor".into()));
        }
        x[k] = (y[k] - s) / r[[k, k]];
    }
    Ok(x)
}
