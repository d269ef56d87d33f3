//! Natural-thresholding recovery: NT, NTP and their multi-linearization
//! variants NT_q / NTP_q.
//!
//! One outer iteration takes a gradient step `u = x + λ·Aᵀ(y − Ax)`, starts
//! from the binary selector `w⁻` on the `k` largest magnitudes of `u`, and
//! then repeatedly replaces `w⁻` with the minimizer of the linearization of
//! `g_α` over the polytope `{w : eᵀw = k, 0 ≤ w ≤ e}`. That minimizer is the
//! indicator of the `k` smallest entries of `∇g_α(w⁻)`, so no LP solver is
//! needed. NT keeps `u ⊗ w⁺`; NTP re-fits by least squares on its support.
//!
//! The concavity-based descent guarantee holds for `α ≥ α*`. The convergence
//! theory assumes `λ = 1`; the benchmark defaults use `λ = 2`.

use crate::error::{ensure, Result};
use crate::linalg::{self, least_squares_on_support, norm2, DenseMatrix, IndexSet};
use crate::model::ProblemInstance;
use crate::regularizers::{alpha_star, Regularizer, RegularizerKind};
use crate::solver::{
    drive, gradient_step_from_residual, no_observer, AlphaPolicy, InnerIterations, Observer,
    RecoveryResult, SolverConfig, Step,
};
use crate::thresholding::{bottom_k_indices, top_k_indices};

/// Outcome of the inner linearization loop.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerLoopOutcome {
    /// Final selector `w⁺` as an index set of size `k`.
    pub w_plus: IndexSet,
    /// `w⁽⁰⁾ = w⁻, w⁽¹⁾, …, w⁽ʲ⁾`.
    pub path: Vec<IndexSet>,
    /// `‖y − A(u ⊗ w⁽ʲ⁾)‖₂` along `path`.
    pub residual_norms: Vec<f64>,
    /// `(cᵀw⁺, cᵀw⁻)` with `c = ∇g_α(w⁻)` for every linearization.
    pub linear_values: Vec<(f64, f64)>,
    /// The loop ended on the equality test rather than the iteration cap.
    pub stationary: bool,
}

/// `∇g_α` at a binary selector, together with `‖y − A(u ⊗ w)‖₂`.
///
/// Costs one `A_S` product and one `Aᵀ` product.
fn gradient_at_selector(
    a: &DenseMatrix,
    y: &[f64],
    u: &[f64],
    selector: &IndexSet,
    alpha: f64,
    reg: &Regularizer,
    scratch: &mut [f64],
) -> (Vec<f64>, f64) {
    let n = a.cols();
    linalg::mat_vec_support(a, u, selector.as_slice(), scratch);
    for (ri, yi) in scratch.iter_mut().zip(y) {
        *ri = yi - *ri;
    }
    let res = norm2(scratch);
    let mut grad = vec![0.0; n];
    linalg::mat_t_vec_into(a, scratch, &mut grad);
    let mut mask = vec![false; n];
    for i in selector.iter() {
        mask[i] = true;
    }
    for i in 0..n {
        grad[i] = -2.0 * u[i] * grad[i] + alpha * reg.binary_slope(i, mask[i]);
    }
    (grad, res)
}

fn linear_value(c: &[f64], selector: &IndexSet) -> f64 {
    selector.iter().map(|i| c[i]).sum()
}

/// Inner loop of NT_q starting from `w⁻ = 1[L_k(u)]`.
///
/// Each pass sets `w⁺ = 1[S_k(∇g_α(w⁻))]` and stops after `q` passes or when
/// `|cᵀw⁺ − cᵀw⁻| ≤ ε·(1 + |cᵀw⁻|)`.
#[allow(clippy::too_many_arguments)]
pub fn nt_inner_loop(
    a: &DenseMatrix,
    y: &[f64],
    u: &[f64],
    k: usize,
    alpha: f64,
    q: InnerIterations,
    reg: &Regularizer,
    termination_epsilon: f64,
) -> Result<InnerLoopOutcome> {
    let n = a.cols();
    ensure!(u.len() == n, "u has length {}, expected {n}", u.len());
    ensure!(y.len() == a.rows(), "y has length {}, expected {}", y.len(), a.rows());
    ensure!(alpha > 0.0 && alpha.is_finite(), "alpha must be positive, got {alpha}");
    if let Regularizer::WeightedQuadratic { weights } = reg {
        ensure!(weights.len() == n, "regularizer weights have the wrong length");
    }
    let cap = q.cap();
    ensure!(cap >= 1, "q must be at least 1");
    if q == InnerIterations::Unbounded {
        log::warn!("unbounded inner iterations capped at {cap}");
    }

    let mut scratch = vec![0.0; a.rows()];
    let mut w_minus = top_k_indices(u, k)?;
    let mut path = vec![w_minus.clone()];
    let mut residual_norms = Vec::with_capacity(cap + 1);
    let mut linear_values = Vec::with_capacity(cap);
    let mut stationary = false;

    for _ in 0..cap {
        let (c, res) = gradient_at_selector(a, y, u, &w_minus, alpha, reg, &mut scratch);
        if residual_norms.is_empty() {
            residual_norms.push(res);
        }
        let w_plus = bottom_k_indices(&c, k)?;
        let lin_plus = linear_value(&c, &w_plus);
        let lin_minus = linear_value(&c, &w_minus);
        linear_values.push((lin_plus, lin_minus));
        residual_norms.push(selector_residual(a, y, u, &w_plus, &mut scratch));
        path.push(w_plus.clone());
        w_minus = w_plus;
        if (lin_plus - lin_minus).abs() <= termination_epsilon * (1.0 + lin_minus.abs()) {
            stationary = true;
            break;
        }
    }
    Ok(InnerLoopOutcome {
        w_plus: w_minus,
        path,
        residual_norms,
        linear_values,
        stationary,
    })
}

fn selector_residual(a: &DenseMatrix, y: &[f64], u: &[f64], selector: &IndexSet, scratch: &mut [f64]) -> f64 {
    linalg::mat_vec_support(a, u, selector.as_slice(), scratch);
    scratch
        .iter()
        .zip(y)
        .map(|(ax, yi)| (yi - ax) * (yi - ax))
        .sum::<f64>()
        .sqrt()
}

/// Snapshot of one outer NT iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub w_minus: IndexSet,
    pub w_plus: IndexSet,
    pub alpha: f64,
    /// `‖y − A(u ⊗ w⁽ʲ⁾)‖₂` along the inner path.
    pub f_history: Vec<f64>,
}

/// Resolves α for the current gradient point, caching the `u`-independent
/// threshold of the weighted regularizer.
struct AlphaResolver {
    policy: AlphaPolicy,
    kind: RegularizerKind,
    cached: Option<f64>,
}

impl AlphaResolver {
    fn new(cfg: &SolverConfig) -> Self {
        Self {
            policy: cfg.alpha_policy,
            kind: cfg.regularizer,
            cached: None,
        }
    }

    fn alpha(&mut self, a: &DenseMatrix, u: &[f64]) -> Result<f64> {
        match self.policy {
            AlphaPolicy::Fixed(v) => Ok(v),
            AlphaPolicy::Rayleigh(c) => {
                if let Some(v) = self.cached {
                    return Ok(v);
                }
                let star = alpha_star(self.kind, a, u, c)?;
                // Degenerate thresholds (u = 0) leave f constant; any α > 0 works.
                let v = if star.value > 0.0 { star.value } else { 1.0 };
                if self.kind == RegularizerKind::WeightedQuadratic {
                    self.cached = Some(v);
                }
                Ok(v)
            }
        }
    }
}

fn outer_step(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    resolver: &mut AlphaResolver,
    x: &[f64],
    r: &[f64],
) -> Result<IterateState> {
    let a = problem.matrix();
    let u = gradient_step_from_residual(a, x, r, cfg.steplength);
    let alpha = resolver.alpha(a, &u)?;
    // u = 0 leaves the weighted kind undefined, but then every selector is equivalent.
    let reg = cfg.regularizer.instantiate(&u).unwrap_or(Regularizer::Quadratic);
    let inner = nt_inner_loop(
        a,
        &problem.y,
        &u,
        problem.k,
        alpha,
        cfg.inner_iterations,
        &reg,
        cfg.termination_epsilon,
    )?;
    Ok(IterateState {
        x: x.to_vec(),
        w_minus: inner.path[0].clone(),
        w_plus: inner.w_plus,
        alpha,
        f_history: inner.residual_norms,
        u,
    })
}

/// Runs the first stage of one outer iteration from `x` and reports the
/// gradient point, both selectors and the inner residual path.
pub fn nt_step(problem: &ProblemInstance, cfg: &SolverConfig, x: &[f64]) -> Result<IterateState> {
    cfg.validate()?;
    ensure!(x.len() == problem.n(), "x has length {}, expected {}", x.len(), problem.n());
    let r = linalg::residual(problem.matrix(), &problem.y, x)?;
    outer_step(problem, cfg, &mut AlphaResolver::new(cfg), x, &r)
}

fn recover_family(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    pursuit: bool,
    observer: &mut Observer<'_>,
) -> Result<RecoveryResult> {
    let mut resolver = AlphaResolver::new(cfg);
    drive(problem, cfg, observer, |x, r| {
        let state = outer_step(problem, cfg, &mut resolver, x, r)?;
        let selected = IndexSet::from_unsorted(state.w_plus.iter().filter(|&i| state.u[i] != 0.0).collect());
        let next = if pursuit {
            least_squares_on_support(problem.matrix(), &problem.y, &selected)?
        } else {
            let mut next = vec![0.0; problem.n()];
            for i in selected.iter() {
                next[i] = state.u[i];
            }
            next
        };
        Ok(Step::Next(next))
    })
}

/// NT (or NT_q when `cfg.inner_iterations > 1`): `x⁽ᵖ⁺¹⁾ = u⁽ᵖ⁾ ⊗ w⁺`.
pub fn recover_nt(problem: &ProblemInstance, cfg: &SolverConfig) -> Result<RecoveryResult> {
    recover_family(problem, cfg, false, &mut no_observer())
}

pub fn recover_nt_observed(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    observer: &mut Observer<'_>,
) -> Result<RecoveryResult> {
    recover_family(problem, cfg, false, observer)
}

/// NTP (or NTP_q): least squares on `supp(u⁽ᵖ⁾ ⊗ w⁺)`.
pub fn recover_ntp(problem: &ProblemInstance, cfg: &SolverConfig) -> Result<RecoveryResult> {
    recover_family(problem, cfg, true, &mut no_observer())
}

pub fn recover_ntp_observed(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    observer: &mut Observer<'_>,
) -> Result<RecoveryResult> {
    recover_family(problem, cfg, true, observer)
}
