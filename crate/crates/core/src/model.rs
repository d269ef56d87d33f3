//! Synthetic problem instances: Gaussian sensing matrices, sparse ground
//! truth and noisy measurements `y = Ax + ξv` with `‖v‖₂ = 1`.
//!
//! Sub-streams for `A`, `x` and `v` are derived from one master seed as
//! `master ^ s·GOLDEN` for `s = 1, 2, 3` (see [`crate::rng::sub_seed`]).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, NtkError, Result};
use crate::linalg::{self, norm2, DenseMatrix, IndexSet};
use crate::rng::{sub_seed, NtkRng};

const NORM_SLACK: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    pub matrix: DenseMatrix,
    pub normalized: bool,
    pub seed: u64,
}

impl SensingMatrix {
    /// Wraps a user-supplied matrix. `normalized` reports whether every
    /// column already has unit norm.
    pub fn from_matrix(matrix: DenseMatrix) -> Self {
        let normalized = (0..matrix.cols()).all(|j| (norm2(matrix.column(j)) - 1.0).abs() <= 1e-12);
        Self {
            matrix,
            normalized,
            seed: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }
}

/// Scales every column to unit ℓ₂-norm.
///
/// Columns already within 1e-14 of unit norm are left untouched, which makes
/// the operation idempotent bit for bit. Zero columns stay zero.
pub fn normalize_columns(a: &mut DenseMatrix) {
    for j in 0..a.cols() {
        let nrm = norm2(a.column(j));
        if nrm == 0.0 || (nrm - 1.0).abs() <= NORM_SLACK {
            continue;
        }
        a.column_mut(j).iter_mut().for_each(|v| *v /= nrm);
    }
}

pub fn gen_gaussian_matrix(m: usize, n: usize, seed: u64, normalize: bool) -> Result<SensingMatrix> {
    ensure!(m >= 1, "need at least one measurement");
    ensure!(m <= n, "sensing matrix must have m <= n, got {m}x{n}");
    let mut rng = NtkRng::new(seed);
    let mut matrix = DenseMatrix::new(m, n, rng.normal_vec(m * n))?;
    if normalize {
        normalize_columns(&mut matrix);
    }
    Ok(SensingMatrix {
        matrix,
        normalized: normalize,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    pub dim: usize,
    pub support: IndexSet,
    /// Values aligned with `support`.
    pub values: Vec<f64>,
    pub seed: u64,
}

impl SparseSignal {
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for (i, v) in self.support.iter().zip(&self.values) {
            x[i] = *v;
        }
        x
    }
}

pub fn gen_sparse_signal(n: usize, k: usize, seed: u64) -> Result<SparseSignal> {
    ensure!(k >= 1, "sparsity must be at least 1");
    ensure!(k <= n, "sparsity {k} exceeds dimension {n}");
    let mut rng = NtkRng::new(seed);
    let support = IndexSet::new(rng.subset(n, k), n)?;
    let values = (0..k)
        .map(|_| loop {
            let v = rng.normal();
            if v != 0.0 {
                break v;
            }
        })
        .collect();
    Ok(SparseSignal {
        dim: n,
        support,
        values,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub a: SensingMatrix,
    pub y: Vec<f64>,
    pub k: usize,
    pub truth: Option<SparseSignal>,
    pub noise_level: f64,
    pub noise_seed: u64,
    /// Seed the instance was generated from; 0 for caller-supplied data.
    pub master_seed: u64,
}

impl ProblemInstance {
    /// An instance with caller-supplied data and no ground truth.
    pub fn new(a: DenseMatrix, y: Vec<f64>, k: usize) -> Result<Self> {
        ensure!(y.len() == a.rows(), "measurement length {} does not match {} rows", y.len(), a.rows());
        ensure!(k >= 1 && k <= a.rows(), "sparsity {k} must lie in 1..={}", a.rows());
        ensure!(y.iter().all(|v| v.is_finite()), "measurements must be finite");
        Ok(Self {
            a: SensingMatrix::from_matrix(a),
            y,
            k,
            truth: None,
            noise_level: 0.0,
            noise_seed: 0,
            master_seed: 0,
        })
    }

    pub fn with_truth(mut self, truth: SparseSignal) -> Result<Self> {
        ensure!(truth.dim == self.a.cols(), "ground truth dimension mismatch");
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.a.matrix
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }
}

/// Builds `(A, x, y)` with `A` column-normalized Gaussian, `x` `k`-sparse
/// and `y = Ax + ξ·v/‖v‖₂` where `v` is a fresh Gaussian vector.
pub fn gen_instance(m: usize, n: usize, k: usize, noise_level: f64, master_seed: u64) -> Result<ProblemInstance> {
    ensure!(noise_level >= 0.0 && noise_level.is_finite(), "noise level must be a finite nonnegative number");
    ensure!(k >= 1 && k <= m, "sparsity {k} must lie in 1..={m}");
    let a = gen_gaussian_matrix(m, n, sub_seed(master_seed, 1), true)?;
    let truth = gen_sparse_signal(n, k, sub_seed(master_seed, 2))?;
    let noise_seed = sub_seed(master_seed, 3);

    let mut y = vec![0.0; m];
    linalg::mat_vec_support(&a.matrix, &truth.to_dense(), truth.support.as_slice(), &mut y);
    if noise_level > 0.0 {
        let mut v = NtkRng::new(noise_seed).normal_vec(m);
        let nrm = norm2(&v);
        v.iter_mut().for_each(|x| *x /= nrm);
        for (yi, vi) in y.iter_mut().zip(&v) {
            *yi += noise_level * vi;
        }
    }
    Ok(ProblemInstance {
        a,
        y,
        k,
        truth: Some(truth),
        noise_level,
        noise_seed,
        master_seed,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexValue {
    index: usize,
    value: f64,
}

/// Writes `(index, value)` pairs with the header `index,value`.
pub fn write_index_value_csv(path: impl AsRef<Path>, entries: impl IntoIterator<Item = (usize, f64)>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for (index, value) in entries {
        w.serialize(IndexValue { index, value }).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| NtkError::io(path, e))
}

pub fn read_index_value_csv(path: impl AsRef<Path>) -> Result<Vec<(usize, f64)>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?;
    if headers != vec!["index", "value"] {
        return Err(NtkError::format(path, "expected header `index,value`"));
    }
    r.deserialize::<IndexValue>()
        .map(|row| row.map(|iv| (iv.index, iv.value)).map_err(|e| csv_err(path, e)))
        .collect()
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> NtkError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => NtkError::io(path, io),
            other => NtkError::format(path, format!("{other:?}")),
        }
    } else {
        NtkError::format(path, e.to_string())
    }
}

pub const MATRIX_FILE: &str = "A.ntkm";
pub const SIGNAL_FILE: &str = "x.csv";
pub const MEASUREMENT_FILE: &str = "y.csv";

/// Writes `A.ntkm`, `y.csv` and, when ground truth is known, `x.csv` into `dir`.
pub fn save_instance(instance: &ProblemInstance, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| NtkError::io(dir, e))?;
    linalg::write_ntkm(dir.join(MATRIX_FILE), instance.matrix())?;
    write_index_value_csv(dir.join(MEASUREMENT_FILE), instance.y.iter().copied().enumerate())?;
    if let Some(truth) = &instance.truth {
        write_index_value_csv(
            dir.join(SIGNAL_FILE),
            truth.support.iter().zip(truth.values.iter().copied()),
        )?;
    }
    Ok(())
}

/// Reads an instance written by [`save_instance`].
pub fn load_instance(dir: impl AsRef<Path>, k: usize) -> Result<ProblemInstance> {
    let dir = dir.as_ref();
    let a = linalg::read_ntkm(dir.join(MATRIX_FILE))?;
    let y_path = dir.join(MEASUREMENT_FILE);
    let y_rows = read_index_value_csv(&y_path)?;
    if y_rows.iter().enumerate().any(|(i, (idx, _))| i != *idx) {
        return Err(NtkError::format(&y_path, "measurement indices must be 0..m in order"));
    }
    let y = y_rows.into_iter().map(|(_, v)| v).collect();
    let n = a.cols();
    let mut instance = ProblemInstance::new(a, y, k)?;
    let x_path = dir.join(SIGNAL_FILE);
    if x_path.exists() {
        let rows = read_index_value_csv(&x_path)?;
        let support = IndexSet::new(rows.iter().map(|r| r.0).collect(), n)
            .map_err(|e| NtkError::format(&x_path, e.to_string()))?;
        let values: Vec<f64> = rows.iter().map(|r| r.1).collect();
        instance = instance.with_truth(SparseSignal {
            dim: n,
            support,
            values,
            seed: 0,
        })?;
    }
    Ok(instance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dist2, mat_vec};

    #[test]
    fn normalized_columns_have_unit_norm() {
        let a = gen_gaussian_matrix(3, 5, 42, true).unwrap();
        for j in 0..5 {
            assert!((norm2(a.matrix.column(j)) - 1.0).abs() <= 1e-12);
        }
        assert!(a.normalized);
    }

    #[test]
    fn matrix_generation_is_deterministic() {
        let a = gen_gaussian_matrix(3, 5, 42, true).unwrap();
        let b = gen_gaussian_matrix(3, 5, 42, true).unwrap();
        let bits = |m: &SensingMatrix| m.matrix.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn matrix_entry_moments() {
        let a = gen_gaussian_matrix(200, 800, 7, false).unwrap();
        let d = a.matrix.data();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        assert!(mean.abs() <= 0.02, "mean {mean}");
        assert!((0.97..=1.03).contains(&var), "var {var}");
    }

    #[test]
    fn wide_matrix_required() {
        assert!(matches!(gen_gaussian_matrix(6, 5, 1, true), Err(NtkError::Contract(_))));
    }

    #[test]
    fn normalization_is_idempotent() {
        let mut a = gen_gaussian_matrix(30, 60, 9, true).unwrap().matrix;
        let before = a.clone();
        normalize_columns(&mut a);
        assert_eq!(a, before);
    }

    #[test]
    fn full_support_signal() {
        let s = gen_sparse_signal(8, 8, 1).unwrap();
        assert_eq!(s.support.as_slice(), &[0, 1, 2, 3, 4, 5, 6, 7]);
        assert!(s.values.iter().all(|v| *v != 0.0));
        assert_eq!(s, gen_sparse_signal(8, 8, 1).unwrap());
        assert!(gen_sparse_signal(4, 5, 1).is_err());
    }

    #[test]
    fn support_positions_are_uniform() {
        let (n, k, seeds) = (8000usize, 100usize, 200u64);
        let mut counts = vec![0u32; n];
        for seed in 0..seeds {
            for i in gen_sparse_signal(n, k, seed).unwrap().support.iter() {
                counts[i] += 1;
            }
        }
        // Per-index frequency has sd ≈ 0.0078 over 200 draws, so single-index
        // bounds of ±0.005 are checked on the average over blocks of 100
        // consecutive indices, and the overall mean exactly.
        let expected = k as f64 / n as f64;
        let total: u32 = counts.iter().sum();
        assert_eq!(total as usize, k * seeds as usize);
        for block in counts.chunks(100) {
            let freq = block.iter().sum::<u32>() as f64 / (100.0 * seeds as f64);
            assert!((freq - expected).abs() <= 0.005, "block frequency {freq}");
        }
    }

    #[test]
    fn noiseless_instance_is_exact() {
        let p = gen_instance(20, 40, 3, 0.0, 5).unwrap();
        let ax = mat_vec(p.matrix(), &p.truth.as_ref().unwrap().to_dense()).unwrap();
        assert_eq!(dist2(&ax, &p.y), 0.0);
    }

    #[test]
    fn noise_has_requested_norm() {
        let p = gen_instance(20, 40, 3, 0.01, 5).unwrap();
        let ax = mat_vec(p.matrix(), &p.truth.as_ref().unwrap().to_dense()).unwrap();
        assert!((dist2(&ax, &p.y) - 0.01).abs() <= 1e-14);
    }

    #[test]
    fn instance_is_reproducible() {
        let a = gen_instance(100, 400, 10, 0.0, 3).unwrap();
        let b = gen_instance(100, 400, 10, 0.0, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.y.iter().zip(&b.y).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn instance_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = gen_instance(10, 30, 4, 0.001, 77).unwrap();
        save_instance(&p, dir.path()).unwrap();
        let q = load_instance(dir.path(), 4).unwrap();
        assert_eq!(q.matrix(), p.matrix());
        assert_eq!(q.y, p.y);
        let (pt, qt) = (p.truth.unwrap(), q.truth.unwrap());
        assert_eq!(pt.support, qt.support);
        assert_eq!(pt.values, qt.values);
        let header = std::fs::read_to_string(dir.path().join(SIGNAL_FILE)).unwrap();
        assert!(header.starts_with("index,value\n"));
    }
}
