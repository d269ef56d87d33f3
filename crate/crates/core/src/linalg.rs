//! Dense linear-algebra kernels.
//!
//! Matrices are stored column-major so that extracting the column submatrix
//! `A_S` for a support `S` copies contiguous slices. All kernels here are
//! pure functions of their inputs.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{ensure, NtkError, Result};
use crate::rng::NtkRng;

/// Dense real matrix in column-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(rows > 0 && cols > 0, "matrix dimensions must be positive, got {rows}x{cols}");
        ensure!(
            data.len() == rows * cols,
            "matrix data has {} entries, expected {rows}x{cols}",
            data.len()
        );
        ensure!(data.iter().all(|v| v.is_finite()), "matrix entries must be finite");
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices; handy for small literals in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        ensure!(!rows.is_empty(), "need at least one row");
        let cols = rows[0].len();
        ensure!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let mut data = vec![0.0; rows.len() * cols];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[j * rows.len() + i] = v;
            }
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub(crate) fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Scales the matrix by `c` in place.
    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    /// Max absolute row sum, `‖A‖_∞`.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Copies the columns listed in `support` into a new `rows × |support|` buffer.
    fn column_submatrix(&self, support: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows * support.len());
        for &j in support {
            out.extend_from_slice(self.column(j));
        }
        out
    }
}

/// Strictly increasing list of 0-based positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    /// Validates that `indices` is strictly increasing and below `dim`.
    pub fn new(indices: Vec<usize>, dim: usize) -> Result<Self> {
        ensure!(
            indices.windows(2).all(|w| w[0] < w[1]),
            "index set must be strictly increasing"
        );
        ensure!(
            indices.last().is_none_or(|&i| i < dim),
            "index out of range for dimension {dim}"
        );
        Ok(Self(indices))
    }

    /// Sorts and deduplicates arbitrary indices.
    pub fn from_unsorted(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Support of a vector: positions of entries that are not exactly zero.
    pub fn support_of(v: &[f64]) -> Self {
        Self(
            v.iter()
                .enumerate()
                .filter(|(_, x)| **x != 0.0)
                .map(|(i, _)| i)
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        let mut merged = Vec::with_capacity(self.len() + other.len());
        let (mut a, mut b) = (self.0.iter().peekable(), other.0.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&x), Some(&&y)) => {
                    if x < y {
                        merged.push(x);
                        a.next();
                    } else if y < x {
                        merged.push(y);
                        b.next();
                    } else {
                        merged.push(x);
                        a.next();
                        b.next();
                    }
                }
                (Some(&&x), None) => {
                    merged.push(x);
                    a.next();
                }
                (None, Some(&&y)) => {
                    merged.push(y);
                    b.next();
                }
                (None, None) => break,
            }
        }
        IndexSet(merged)
    }

    /// 0/1 indicator vector of length `dim`.
    pub fn indicator(&self, dim: usize) -> Vec<f64> {
        let mut w = vec![0.0; dim];
        for i in self.iter() {
            w[i] = 1.0;
        }
        w
    }
}

/// `Ax`.
pub fn mat_vec(a: &DenseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    ensure!(
        x.len() == a.cols,
        "mat_vec: vector length {} does not match {} columns",
        x.len(),
        a.cols
    );
    let mut out = vec![0.0; a.rows];
    mat_vec_into(a, x, &mut out);
    Ok(out)
}

pub(crate) fn mat_vec_into(a: &DenseMatrix, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            axpy(xj, a.column(j), out);
        }
    }
}

/// `A_S x_S` for a vector whose nonzeros lie inside `support`.
pub(crate) fn mat_vec_support(a: &DenseMatrix, x: &[f64], support: &[usize], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for &j in support {
        if x[j] != 0.0 {
            axpy(x[j], a.column(j), out);
        }
    }
}

/// `Aᵀr`.
pub fn mat_t_vec(a: &DenseMatrix, r: &[f64]) -> Result<Vec<f64>> {
    ensure!(
        r.len() == a.rows,
        "mat_t_vec: vector length {} does not match {} rows",
        r.len(),
        a.rows
    );
    let mut out = vec![0.0; a.cols];
    mat_t_vec_into(a, r, &mut out);
    Ok(out)
}

pub(crate) fn mat_t_vec_into(a: &DenseMatrix, r: &[f64], out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o = dot(a.column(j), r);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `‖a − b‖₂`.
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `y − Ax`.
pub fn residual(a: &DenseMatrix, y: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    ensure!(y.len() == a.rows, "residual: measurement length mismatch");
    let mut r = mat_vec(a, x)?;
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri = yi - *ri;
    }
    Ok(r)
}

/// Householder QR of a column-major `m × n` buffer, with optional column pivoting.
///
/// Reflectors are stored LAPACK-style: `v₀ = 1` implicit, `v[1..]` below the
/// diagonal, `R` on and above it.
struct HouseholderQr {
    m: usize,
    n: usize,
    a: Vec<f64>,
    tau: Vec<f64>,
    perm: Vec<usize>,
}

impl HouseholderQr {
    fn factor(m: usize, n: usize, mut a: Vec<f64>, pivot: bool) -> Self {
        let steps = m.min(n);
        let mut tau = vec![0.0; steps];
        let mut perm: Vec<usize> = (0..n).collect();
        for j in 0..steps {
            if pivot {
                let best = (j..n)
                    .map(|c| (c, norm2(&a[c * m + j..(c + 1) * m])))
                    .fold((j, -1.0), |acc, (c, nrm)| if nrm > acc.1 { (c, nrm) } else { acc })
                    .0;
                if best != j {
                    for i in 0..m {
                        a.swap(j * m + i, best * m + i);
                    }
                    perm.swap(j, best);
                }
            }
            let col = j * m;
            let x0 = a[col + j];
            let tail = norm2(&a[col + j + 1..col + m]);
            if tail == 0.0 {
                tau[j] = 0.0;
                continue;
            }
            let beta = -x0.hypot(tail).copysign(x0);
            tau[j] = (beta - x0) / beta;
            let scale = 1.0 / (x0 - beta);
            a[col + j + 1..col + m].iter_mut().for_each(|v| *v *= scale);
            a[col + j] = beta;
            for c in j + 1..n {
                let (left, right) = a.split_at_mut(c * m);
                let v = &left[col + j + 1..col + m];
                let target = &mut right[..m];
                let w = target[j] + dot(v, &target[j + 1..]);
                let tw = tau[j] * w;
                target[j] -= tw;
                axpy(-tw, v, &mut target[j + 1..]);
            }
        }
        Self { m, n, a, tau, perm }
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        self.a[j * self.m + i]
    }

    /// Overwrites `b` (length m) with `Qᵀb`.
    fn apply_qt(&self, b: &mut [f64]) {
        for j in 0..self.tau.len() {
            self.reflect(j, b);
        }
    }

    /// Overwrites `b` (length m) with `Qb`.
    fn apply_q(&self, b: &mut [f64]) {
        for j in (0..self.tau.len()).rev() {
            self.reflect(j, b);
        }
    }

    fn reflect(&self, j: usize, b: &mut [f64]) {
        if self.tau[j] == 0.0 {
            return;
        }
        let v = &self.a[j * self.m + j + 1..(j + 1) * self.m];
        let w = b[j] + dot(v, &b[j + 1..]);
        let tw = self.tau[j] * w;
        b[j] -= tw;
        axpy(-tw, v, &mut b[j + 1..]);
    }

    /// Numerical rank from the pivoted diagonal of `R`.
    fn rank(&self) -> usize {
        let steps = self.tau.len();
        if steps == 0 {
            return 0;
        }
        let lead = self.r(0, 0).abs();
        if lead == 0.0 {
            return 0;
        }
        let tol = lead * f64::EPSILON * self.m.max(self.n) as f64;
        (0..steps).take_while(|&j| self.r(j, j).abs() > tol).count()
    }
}

/// Solves `min ‖y − Az‖₂` subject to `supp(z) ⊆ S` and returns the full-length `z`.
///
/// Uses column-pivoted Householder QR of `A_S`. When `A_S` is numerically
/// rank deficient the minimum-norm solution is returned, obtained from a
/// second QR of the leading rows of `R` (a complete orthogonal decomposition).
pub fn least_squares_on_support(a: &DenseMatrix, y: &[f64], support: &IndexSet) -> Result<Vec<f64>> {
    ensure!(
        y.len() == a.rows,
        "least squares: measurement length {} does not match {} rows",
        y.len(),
        a.rows
    );
    ensure!(
        support.iter().all(|j| j < a.cols),
        "least squares: support index out of range"
    );
    let mut z = vec![0.0; a.cols];
    if support.is_empty() {
        return Ok(z);
    }
    let s = support.as_slice();
    let coef = solve_least_squares(a.rows, s.len(), a.column_submatrix(s), y);
    for (&j, c) in s.iter().zip(coef) {
        z[j] = c;
    }
    Ok(z)
}

/// Minimum-norm least-squares solution for a column-major `m × n` system.
pub(crate) fn solve_least_squares(m: usize, n: usize, a: Vec<f64>, y: &[f64]) -> Vec<f64> {
    let qr = HouseholderQr::factor(m, n, a, true);
    let rank = qr.rank();
    let mut out = vec![0.0; n];
    if rank == 0 {
        return out;
    }
    let mut b = y.to_vec();
    qr.apply_qt(&mut b);

    let mut permuted = vec![0.0; n];
    if rank == n {
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..n {
                acc -= qr.r(i, j) * permuted[j];
            }
            permuted[i] = acc / qr.r(i, i);
        }
    } else {
        // R_top (rank × n) = R2ᵀ Q2ᵀ from the QR of its transpose.
        let mut top_t = vec![0.0; n * rank];
        for i in 0..rank {
            for j in i..n {
                top_t[i * n + j] = qr.r(i, j);
            }
        }
        let second = HouseholderQr::factor(n, rank, top_t, false);
        let mut t = vec![0.0; n];
        for i in 0..rank {
            let mut acc = b[i];
            for j in 0..i {
                acc -= second.r(j, i) * t[j];
            }
            t[i] = acc / second.r(i, i);
        }
        second.apply_q(&mut t);
        permuted = t;
    }
    for (pos, &col) in qr.perm.iter().enumerate() {
        out[col] = permuted[pos];
    }
    out
}

/// Result of a dominant-eigenvalue estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub const DEFAULT_EIGEN_TOL: f64 = 1e-6;
pub const DEFAULT_EIGEN_MAX_ITER: usize = 500;
const POWER_START_SEED: u64 = 0x4E54_4B5F_5057_5231;

/// Largest eigenvalue of a symmetric positive-semidefinite operator by power iteration.
///
/// `apply(v, out)` must write `Mv` into `out`. The start vector is the
/// all-ones vector with a fixed pseudo-random perturbation, so symmetric
/// operators whose dominant eigenvector is orthogonal to `e` are still
/// handled. Iteration stops once `‖Mv − λv‖₂ ≤ tol·λ`; the Rayleigh
/// quotient never exceeds the true maximum for a PSD operator.
pub fn lambda_max_sym<F>(mut apply: F, dim: usize, tol: f64, max_iter: usize) -> Result<EigenEstimate>
where
    F: FnMut(&[f64], &mut [f64]),
{
    ensure!(dim > 0, "lambda_max_sym: dimension must be positive");
    ensure!(tol > 0.0, "lambda_max_sym: tolerance must be positive");
    let mut rng = NtkRng::new(POWER_START_SEED);
    let mut v: Vec<f64> = (0..dim).map(|_| 1.0 + 0.5 * (rng.uniform() - 0.5)).collect();
    let nrm = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nrm);

    let mut mv = vec![0.0; dim];
    let mut best = 0.0f64;
    for iter in 1..=max_iter.max(1) {
        apply(&v, &mut mv);
        let lambda = dot(&v, &mv);
        best = best.max(lambda);
        let mv_norm = norm2(&mv);
        if mv_norm == 0.0 {
            return Ok(EigenEstimate {
                value: 0.0,
                converged: true,
                iterations: iter,
            });
        }
        let res = mv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if res <= tol * lambda.abs() {
            return Ok(EigenEstimate {
                value: lambda,
                converged: true,
                iterations: iter,
            });
        }
        for (vi, mi) in v.iter_mut().zip(&mv) {
            *vi = mi / mv_norm;
        }
    }
    Ok(EigenEstimate {
        value: best,
        converged: false,
        iterations: max_iter,
    })
}

const NTKM_MAGIC: [u8; 4] = *b"NTKM";
const NTKM_VERSION: u8 = 1;

/// Encodes a matrix in the NTKM binary layout: magic, version byte,
/// `rows`/`cols` as LE u32, then column-major LE f64 entries.
pub fn encode_ntkm(a: &DenseMatrix) -> Result<Vec<u8>> {
    ensure!(
        a.rows <= u32::MAX as usize && a.cols <= u32::MAX as usize,
        "matrix too large for NTKM"
    );
    let mut out = Vec::with_capacity(13 + 8 * a.data.len());
    out.extend_from_slice(&NTKM_MAGIC);
    out.push(NTKM_VERSION);
    out.extend_from_slice(&(a.rows as u32).to_le_bytes());
    out.extend_from_slice(&(a.cols as u32).to_le_bytes());
    for v in &a.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_ntkm(bytes: &[u8]) -> std::result::Result<DenseMatrix, String> {
    if bytes.len() < 13 {
        return Err("file shorter than NTKM header".into());
    }
    if bytes[..4] != NTKM_MAGIC {
        return Err("bad magic bytes".into());
    }
    if bytes[4] != NTKM_VERSION {
        return Err(format!("unsupported NTKM version {}", bytes[4]));
    }
    let rows = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let body = &bytes[13..];
    if body.len() != rows * cols * 8 {
        return Err(format!(
            "expected {} payload bytes for {rows}x{cols}, found {}",
            rows * cols * 8,
            body.len()
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseMatrix::new(rows, cols, data).map_err(|e| e.to_string())
}

pub fn write_ntkm(path: impl AsRef<Path>, a: &DenseMatrix) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_ntkm(a)?;
    let mut f = fs::File::create(path).map_err(|e| NtkError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| NtkError::io(path, e))
}

pub fn read_ntkm(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| NtkError::io(path, e))?;
    decode_ntkm(&bytes).map_err(|msg| NtkError::format(path, msg))
}
