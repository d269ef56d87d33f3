//! Oracle suites behind `ntk verify`.
//!
//! Each suite draws its own random instances from one seed and compares a
//! solver building block against the matching brute-force oracle.

use std::fmt;
use std::str::FromStr;

use crate::error::{NtkError, Result};
use crate::linalg::{mat_vec, DenseMatrix};
use crate::model::gen_gaussian_matrix;
use crate::nt::nt_inner_loop;
use crate::oracles::{
    brute_force_binary_ot, brute_force_lp_min, estimate_ric, estimate_ric_profile, exhaustive_ric,
    finite_diff_grad, grid_min_g_alpha, selector_objective,
};
use crate::regularizers::{alpha_star, eval_g_alpha, phi_value, RegularizerKind, DEFAULT_ALPHA_SAFETY};
use crate::rng::{mix64, NtkRng};
use crate::solver::{gradient_step, InnerIterations};
use crate::thresholding::bottom_k_indices;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lp,
    Ot,
    Grad,
    Ric,
    Path,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Lp, Suite::Ot, Suite::Grad, Suite::Ric, Suite::Path];

    pub fn token(self) -> &'static str {
        match self {
            Suite::Lp => "lp",
            Suite::Ot => "ot",
            Suite::Grad => "grad",
            Suite::Ric => "ric",
            Suite::Path => "path",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Suite {
    type Err = NtkError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.token() == s)
            .ok_or_else(|| NtkError::contract(format!("unknown suite `{s}` (expected lp|ot|grad|ric|path)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<CheckOutcome>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        passed,
        detail,
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let mut rng = NtkRng::new(seed ^ mix64(suite as u64 + 1));
    let checks = match suite {
        Suite::Lp => lp_suite(&mut rng)?,
        Suite::Ot => ot_suite(&mut rng)?,
        Suite::Grad => grad_suite(&mut rng)?,
        Suite::Ric => ric_suite(&mut rng)?,
        Suite::Path => path_suite(&mut rng)?,
    };
    Ok(SuiteReport { suite, checks })
}

/// Small random problem: `m × n` normalized Gaussian `A`, Gaussian `y` and `u`.
fn tiny_problem(rng: &mut NtkRng, m: usize, n: usize) -> Result<(DenseMatrix, Vec<f64>, Vec<f64>)> {
    let a = gen_gaussian_matrix(m, n, rng.next_u64(), true)?.matrix;
    let y = rng.normal_vec(m);
    let u = rng.normal_vec(n);
    Ok((a, y, u))
}

fn concave_alpha(kind: RegularizerKind, a: &DenseMatrix, u: &[f64]) -> Result<f64> {
    let s = alpha_star(kind, a, u, DEFAULT_ALPHA_SAFETY)?;
    Ok(if s.degenerate { 1.0 } else { s.value })
}

fn lp_suite(rng: &mut NtkRng) -> Result<Vec<CheckOutcome>> {
    let instances = 500;
    let (mut mismatches, mut closed_form_misses) = (0, 0);
    for _ in 0..instances {
        let n = 4 + rng.below(9);
        let m = 3 + rng.below(n.min(8) - 2);
        let k = 1 + rng.below(3);
        let kind = RegularizerKind::ALL[rng.below(4)];
        let (a, y, u) = tiny_problem(rng, m, n)?;
        let reg = kind.instantiate(&u)?;
        let alpha = concave_alpha(kind, &a, &u)?;
        let out = nt_inner_loop(&a, &y, &u, k, alpha, InnerIterations::Finite(1), &reg, 1e-12)?;
        let w_minus = out.path[0].indicator(n);
        let c = eval_g_alpha(&a, &y, &u, &w_minus, alpha, &reg)?.gradient;
        let lp = brute_force_lp_min(&c, k)?;
        if lp.argmin != out.w_plus {
            mismatches += 1;
        }
        let mut sorted = c.clone();
        sorted.sort_by(f64::total_cmp);
        if lp.value != sorted[..k].iter().sum::<f64>() {
            closed_form_misses += 1;
        }
    }

    let mut tie_misses = 0;
    for _ in 0..100 {
        let n = 3 + rng.below(10);
        let k = 1 + rng.below(3.min(n));
        let c: Vec<f64> = (0..n).map(|_| rng.below(4) as f64).collect();
        if brute_force_lp_min(&c, k)?.argmin != bottom_k_indices(&c, k)? {
            tie_misses += 1;
        }
    }
    Ok(vec![
        check(
            "inner-loop selection equals LP minimizer",
            mismatches == 0,
            format!("{mismatches}/{instances} mismatches"),
        ),
        check(
            "LP minimum equals sum of k smallest entries",
            closed_form_misses == 0,
            format!("{closed_form_misses}/{instances} mismatches"),
        ),
        check(
            "tied costs resolve to smallest indices",
            tie_misses == 0,
            format!("{tie_misses}/100 mismatches"),
        ),
    ])
}

/// `y = Ax` for a random `k`-sparse `x`, and `u = Aᵀy`, the first gradient
/// step from zero with unit steplength.
pub fn recovery_like_problem(
    rng: &mut NtkRng,
    m: usize,
    n: usize,
    k: usize,
) -> Result<(DenseMatrix, Vec<f64>, Vec<f64>)> {
    let a = gen_gaussian_matrix(m, n, rng.next_u64(), true)?.matrix;
    let mut x = vec![0.0; n];
    for i in rng.subset(n, k) {
        x[i] = rng.normal();
    }
    let y = mat_vec(&a, &x)?;
    let u = gradient_step(&a, &y, &vec![0.0; n], 1.0)?;
    Ok((a, y, u))
}

fn ot_suite(rng: &mut NtkRng) -> Result<Vec<CheckOutcome>> {
    let instances = 200;
    let (mut violations, mut easy, mut easy_equal) = (0, 0, 0);
    for i in 0..instances {
        let n = 6 + rng.below(7);
        let m = 4 + rng.below(n.min(8) - 3);
        // Every other instance is an easy k = 1 case.
        let k = if i % 2 == 0 { 1 } else { 2 + rng.below(2) };
        let kind = RegularizerKind::ALL[rng.below(4)];
        let (a, y, u) = recovery_like_problem(rng, m, n, k)?;
        let reg = kind.instantiate(&u)?;
        let alpha = concave_alpha(kind, &a, &u)?;
        let out = nt_inner_loop(&a, &y, &u, k, alpha, InnerIterations::Finite(5), &reg, 1e-12)?;
        let nt_value = selector_objective(&a, &y, &u, out.w_plus.as_slice());
        let best = brute_force_binary_ot(&a, &y, &u, k)?.value;
        if best > nt_value {
            violations += 1;
        }
        if k == 1 {
            easy += 1;
            if best == nt_value {
                easy_equal += 1;
            }
        }
    }
    let fraction = easy_equal as f64 / easy as f64;
    Ok(vec![
        check(
            "exhaustive OT value is a lower bound",
            violations == 0,
            format!("{violations}/{instances} violations"),
        ),
        check(
            "NT attains the OT optimum on k = 1 cases",
            fraction >= 0.3,
            format!("equality on {easy_equal}/{easy} ({fraction:.2}, floor 0.30)"),
        ),
    ])
}

fn grad_suite(rng: &mut NtkRng) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for kind in RegularizerKind::ALL {
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let (a, y, u) = tiny_problem(rng, 10, 20)?;
            let reg = kind.instantiate(&u)?;
            let alpha = 0.5 + 9.5 * rng.uniform();
            let w: Vec<f64> = (0..20).map(|_| rng.uniform()).collect();
            let analytic = eval_g_alpha(&a, &y, &u, &w, alpha, &reg)?.gradient;
            let g = |v: &[f64]| eval_g_alpha(&a, &y, &u, v, alpha, &reg).map_or(f64::NAN, |e| e.g_value);
            let fd = finite_diff_grad(g, &w, 1e-6)?;
            worst = worst.max(relative_gap(&fd, &analytic));
        }
        out.push(check(
            &format!("{kind}: analytic gradient matches central differences"),
            worst <= 1e-5,
            format!("worst relative error {worst:.2e} (limit 1e-5)"),
        ));
    }
    Ok(out)
}

/// `‖a − b‖₂ / max(‖b‖₂, 1e-300)`.
pub fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    crate::linalg::dist2(a, b) / crate::linalg::norm2(b).max(1e-300)
}

fn ric_suite(rng: &mut NtkRng) -> Result<Vec<CheckOutcome>> {
    let cases = 100;
    let mut violations = 0;
    for _ in 0..cases {
        let n = 6 + rng.below(7);
        let m = 4 + rng.below(n.min(8) - 3);
        let order = 1 + rng.below(3);
        let a = gen_gaussian_matrix(m, n, rng.next_u64(), true)?.matrix;
        let sampled = estimate_ric(&a, order, 300, rng.next_u64())?.delta_lower;
        if sampled > exhaustive_ric(&a, order)? {
            violations += 1;
        }
    }
    let mut iso: f64 = 0.0;
    for n in [4, 8, 12] {
        let q = DenseMatrix::identity(n)?;
        for order in 1..=3 {
            iso = iso.max(estimate_ric(&q, order, 200, rng.next_u64())?.delta_lower);
        }
    }
    let a = gen_gaussian_matrix(30, 60, rng.next_u64(), true)?.matrix;
    let profile = estimate_ric_profile(&a, 8, 200, rng.next_u64())?;
    let monotone = profile.windows(2).all(|w| w[0].delta_lower <= w[1].delta_lower);
    Ok(vec![
        check(
            "sampled bound never exceeds exhaustive value",
            violations == 0,
            format!("{violations}/{cases} violations"),
        ),
        check(
            "isometries give zero",
            iso <= 1e-12,
            format!("largest estimate {iso:.2e}"),
        ),
        check("profile is monotone in K", monotone, format!("{} orders", profile.len())),
    ])
}

fn path_suite(rng: &mut NtkRng) -> Result<Vec<CheckOutcome>> {
    let (n, k, step) = (4, 2, 0.1);
    let tol = 2.0 * step * n as f64;
    let alphas = [1.0, 10.0, 100.0, 1000.0];
    let mut monotone_failures = 0;
    let mut not_binary = 0;
    let instances = 5;
    for _ in 0..instances {
        let (a, y, u) = tiny_problem(rng, 3, n)?;
        let kind = RegularizerKind::Quadratic;
        let reg = kind.instantiate(&u)?;
        let mut prev: Option<(f64, f64)> = None;
        for alpha in alphas {
            let w = grid_min_g_alpha(&a, &y, &u, k, alpha, kind, step)?.argmin;
            let uw: Vec<f64> = u.iter().zip(&w).map(|(p, q)| p * q).collect();
            let support: Vec<usize> = (0..n).collect();
            let f = selector_objective(&a, &y, &uw, &support);
            let phi = phi_value(&reg, &w)?;
            if let Some((f0, phi0)) = prev {
                if phi > phi0 + tol || f < f0 - tol {
                    monotone_failures += 1;
                }
            }
            prev = Some((f, phi));
        }
        let w = grid_min_g_alpha(&a, &y, &u, k, 1e9, kind, step)?.argmin;
        if w.iter().any(|&t| t.min(1.0 - t) > step) {
            not_binary += 1;
        }
    }

    // A = I, u = e: the grid minimizer for tiny α is the grid point nearest y.
    let target = [0.3, 0.7, 0.6, 0.4];
    let w = grid_min_g_alpha(&DenseMatrix::identity(4)?, &target, &[1.0; 4], 2, 1e-9, RegularizerKind::Quadratic, step)?;
    let off = w.argmin.iter().zip(target).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);

    Ok(vec![
        check(
            "penalty path: phi nonincreasing, f nondecreasing",
            monotone_failures == 0,
            format!("{monotone_failures} violations over {instances} paths (tolerance {tol})"),
        ),
        check(
            "large alpha gives binary grid points",
            not_binary == 0,
            format!("{not_binary}/{instances} non-binary"),
        ),
        check(
            "tiny alpha reproduces the least-squares fit",
            off <= step / 2.0 + 1e-12,
            format!("max deviation {off:.3}"),
        ),
    ])
}
