//! Brute-force and sampling verifiers.
//!
//! These are slow on purpose. They enumerate what the solvers shortcut and
//! exist to check the solvers, never to replace them.

use nalgebra::DMatrix;

use crate::error::{ensure, NtkError, Result};
use crate::exec::Execution;
use crate::linalg::{self, DenseMatrix, IndexSet};
use crate::regularizers::{phi_value, RegularizerKind};
use crate::rng::{mix64, NtkRng};

/// Largest number of k-subsets the exhaustive oracles will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;
/// Largest dimension accepted by the grid oracle.
pub const GRID_MAX_DIM: usize = 6;
/// Largest dimension accepted by the exhaustive RIC oracle.
pub const EXHAUSTIVE_RIC_MAX_DIM: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T> {
    pub argmin: T,
    pub value: f64,
    pub candidates_examined: u64,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc·(n−i)/(i+1) stays integral at every step.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn check_budget(n: usize, k: usize) -> Result<()> {
    ensure!(k >= 1 && k <= n, "need 1 <= k <= n, got k = {k}, n = {n}");
    let required = binomial(n, k);
    if required > ENUMERATION_LIMIT {
        return Err(NtkError::Budget {
            what: "k-subset enumeration",
            required,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Calls `visit` on every k-subset of `0..n` whose smallest element is
/// `first`, in lexicographic order.
fn for_each_subset_from(n: usize, k: usize, first: usize, mut visit: impl FnMut(&[usize])) {
    let mut comb: Vec<usize> = (first..first + k).collect();
    loop {
        visit(&comb);
        // Rightmost position (never the first) that can still move right.
        let Some(i) = (1..k).rev().find(|&i| comb[i] < n - k + i) else {
            return;
        };
        comb[i] += 1;
        for j in i + 1..k {
            comb[j] = comb[j - 1] + 1;
        }
    }
}

/// Lexicographic minimization over k-subsets; the first minimizer found wins.
///
/// The search splits by smallest element, and the per-block winners are
/// reduced in block order, so the answer does not depend on the thread count.
fn minimize_over_subsets<F>(n: usize, k: usize, objective: F) -> Result<OracleResult<IndexSet>>
where
    F: Fn(&[usize]) -> f64 + Sync + Send,
{
    check_budget(n, k)?;
    let firsts: Vec<usize> = (0..=n - k).collect();
    let blocks = Execution::from_env().unwrap_or_default().map(&firsts, |&first| {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut count = 0u64;
        for_each_subset_from(n, k, first, |s| {
            count += 1;
            let v = objective(s);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, s.to_vec()));
            }
        });
        (best, count)
    });

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut total = 0;
    for (block_best, count) in blocks {
        total += count;
        if let Some((v, s)) = block_best {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, s));
            }
        }
    }
    let (value, support) = best.expect("at least one subset");
    Ok(OracleResult {
        argmin: IndexSet::from_unsorted(support),
        value,
        candidates_examined: total,
    })
}

/// `‖y − A(u ⊗ 1_S)‖₂²`, accumulated over `S` in increasing index order.
pub fn selector_objective(a: &DenseMatrix, y: &[f64], u: &[f64], support: &[usize]) -> f64 {
    let mut r = y.to_vec();
    for &j in support {
        linalg::axpy(-u[j], a.column(j), &mut r);
    }
    linalg::dot(&r, &r)
}

/// Exhaustive optimal k-thresholding: minimizes `‖y − A(u ⊗ w)‖₂²` over binary
/// `w` with exactly `k` ones.
pub fn brute_force_binary_ot(a: &DenseMatrix, y: &[f64], u: &[f64], k: usize) -> Result<OracleResult<IndexSet>> {
    let n = a.cols();
    ensure!(u.len() == n, "u has length {}, expected {n}", u.len());
    ensure!(y.len() == a.rows(), "y has length {}, expected {}", y.len(), a.rows());
    minimize_over_subsets(n, k, |s| selector_objective(a, y, u, s))
}

/// `Σ cᵢ` over `S`, summed in ascending order of value so that equal
/// multisets always give bit-identical sums.
pub fn linear_objective(c: &[f64], support: &[usize]) -> f64 {
    let mut vals: Vec<f64> = support.iter().map(|&i| c[i]).collect();
    vals.sort_by(f64::total_cmp);
    vals.iter().sum()
}

/// Minimizes `cᵀw` over the extreme points of `{w : eᵀw = k, 0 ≤ w ≤ e}`,
/// which are exactly the binary vectors with `k` ones.
pub fn brute_force_lp_min(c: &[f64], k: usize) -> Result<OracleResult<IndexSet>> {
    ensure!(c.iter().all(|v| v.is_finite()), "c must be finite");
    minimize_over_subsets(c.len(), k, |s| linear_objective(c, s))
}

/// Minimizes `g_α(w) = ‖y − A(u ⊗ w)‖₂² + α·φ(w)` over the grid
/// `{0, h, 2h, …, 1}ⁿ` restricted to `eᵀw = k`.
#[allow(clippy::too_many_arguments)]
pub fn grid_min_g_alpha(
    a: &DenseMatrix,
    y: &[f64],
    u: &[f64],
    k: usize,
    alpha: f64,
    kind: RegularizerKind,
    grid_step: f64,
) -> Result<OracleResult<Vec<f64>>> {
    let n = a.cols();
    ensure!(n <= GRID_MAX_DIM, "grid oracle refuses n = {n} (limit {GRID_MAX_DIM})");
    ensure!(u.len() == n, "u has length {}, expected {n}", u.len());
    ensure!(y.len() == a.rows(), "y has length {}, expected {}", y.len(), a.rows());
    ensure!(k >= 1 && k <= n, "need 1 <= k <= n");
    ensure!(alpha > 0.0 && alpha.is_finite(), "alpha must be positive");
    let levels = if (grid_step - 0.05).abs() < 1e-12 {
        20
    } else if (grid_step - 0.1).abs() < 1e-12 {
        10
    } else {
        return Err(NtkError::contract(format!("grid step must be 0.05 or 0.1, got {grid_step}")));
    };
    let reg = kind.instantiate(u)?;
    let target = k * levels;
    let scaled: Vec<Vec<f64>> = (0..n).map(|j| a.column(j).iter().map(|v| u[j] * v).collect()).collect();

    let eval = |z: &[usize]| -> f64 {
        let w: Vec<f64> = z.iter().map(|&zi| zi as f64 / levels as f64).collect();
        let mut r = y.to_vec();
        for (wj, col) in w.iter().zip(&scaled) {
            linalg::axpy(-wj, col, &mut r);
        }
        let phi = phi_value(&reg, &w).expect("grid points lie in [0, 1]");
        linalg::dot(&r, &r) + alpha * phi
    };

    let firsts: Vec<usize> = (0..=levels.min(target)).collect();
    let blocks = Execution::from_env().unwrap_or_default().map(&firsts, |&z0| {
        let mut z = vec![0; n];
        z[0] = z0;
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut count = 0u64;
        grid_walk(&mut z, 1, target - z0, levels, &mut |z| {
            count += 1;
            let v = eval(z);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, z.to_vec()));
            }
        });
        (best, count)
    });

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut total = 0;
    for (block_best, count) in blocks {
        total += count;
        if let Some((v, z)) = block_best {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, z));
            }
        }
    }
    let (value, z) = best.expect("k <= n leaves a feasible grid point");
    Ok(OracleResult {
        argmin: z.iter().map(|&zi| zi as f64 / levels as f64).collect(),
        value,
        candidates_examined: total,
    })
}

/// Fills `z[pos..]` with values in `0..=levels` summing to `remaining`,
/// in lexicographic order.
fn grid_walk(z: &mut [usize], pos: usize, remaining: usize, levels: usize, visit: &mut dyn FnMut(&[usize])) {
    let left = z.len() - pos;
    if left == 0 {
        if remaining == 0 {
            visit(z);
        }
        return;
    }
    if remaining > left * levels {
        return;
    }
    let lo = remaining.saturating_sub((left - 1) * levels);
    for v in lo..=levels.min(remaining) {
        z[pos] = v;
        grid_walk(z, pos + 1, remaining - v, levels, visit);
    }
    z[pos] = 0;
}

/// Central differences `(f(w + h·eᵢ) − f(w − h·eᵢ)) / 2h`.
pub fn finite_diff_grad<F: Fn(&[f64]) -> f64>(eval: F, w: &[f64], h: f64) -> Result<Vec<f64>> {
    ensure!(h > 0.0 && h.is_finite(), "step must be positive, got {h}");
    let mut probe = w.to_vec();
    let mut grad = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        probe[i] = w[i] + h;
        let plus = eval(&probe);
        probe[i] = w[i] - h;
        let minus = eval(&probe);
        probe[i] = w[i];
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Sampled lower bound on the restricted isometry constant `δ_K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicEstimate {
    pub order: usize,
    pub delta_lower: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Sample `s` only depends on `(seed, s)`, so sample sets for a larger count
/// extend those for a smaller one.
fn ric_sample_deviations(a: &DenseMatrix, order: usize, samples: usize, seed: u64) -> Vec<f64> {
    let idx: Vec<u64> = (0..samples as u64).collect();
    Execution::from_env().unwrap_or_default().map(&idx, |&s| {
        let mut rng = NtkRng::new(seed ^ mix64(s.wrapping_add(1)));
        let support = rng.subset(a.cols(), order);
        let mut vals = rng.normal_vec(order);
        let norm = linalg::norm2(&vals);
        vals.iter_mut().for_each(|v| *v /= norm);
        let mut z = vec![0.0; a.cols()];
        for (&i, v) in support.iter().zip(&vals) {
            z[i] = *v;
        }
        let mut az = vec![0.0; a.rows()];
        linalg::mat_vec_support(a, &z, &support, &mut az);
        (linalg::dot(&az, &az) - 1.0).abs()
    })
}

/// `max |‖Az‖₂² − 1|` over `samples` random unit vectors with `order` nonzeros.
pub fn estimate_ric(a: &DenseMatrix, order: usize, samples: usize, seed: u64) -> Result<RicEstimate> {
    ensure!(order >= 1 && order <= a.rows() && order <= a.cols(), "order must be in 1..=min(m, n)");
    ensure!(samples >= 1, "need at least one sample");
    let delta_lower = ric_sample_deviations(a, order, samples, seed)
        .into_iter()
        .fold(0.0, f64::max);
    Ok(RicEstimate {
        order,
        delta_lower,
        samples,
        seed,
    })
}

/// Estimates for orders `1..=max_order`, made monotone by carrying the running
/// maximum forward. A K-sparse sample is also (K+1)-sparse, so each entry is
/// still a valid lower bound.
pub fn estimate_ric_profile(a: &DenseMatrix, max_order: usize, samples: usize, seed: u64) -> Result<Vec<RicEstimate>> {
    let mut out: Vec<RicEstimate> = Vec::with_capacity(max_order);
    for order in 1..=max_order {
        let mut est = estimate_ric(a, order, samples, seed)?;
        if let Some(prev) = out.last() {
            est.delta_lower = est.delta_lower.max(prev.delta_lower);
        }
        out.push(est);
    }
    Ok(out)
}

/// Exact `δ_K` by enumerating every support and taking the extreme
/// eigenvalues of `A_Sᵀ A_S`.
pub fn exhaustive_ric(a: &DenseMatrix, order: usize) -> Result<f64> {
    let n = a.cols();
    ensure!(
        n <= EXHAUSTIVE_RIC_MAX_DIM,
        "exhaustive RIC refuses n = {n} (limit {EXHAUSTIVE_RIC_MAX_DIM})"
    );
    let res = minimize_over_subsets(n, order, |s| {
        let gram = DMatrix::from_fn(s.len(), s.len(), |i, j| linalg::dot(a.column(s[i]), a.column(s[j])));
        let eig = gram.symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        -(hi - 1.0).max(1.0 - lo)
    })?;
    Ok(-res.value)
}
