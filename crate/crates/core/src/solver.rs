//! Configuration, results and the shared outer-iteration driver used by every
//! iterative recovery algorithm.

use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use crate::error::{ensure, Result};
use crate::linalg::{self, dist2, norm2, IndexSet};
use crate::model::ProblemInstance;
use crate::regularizers::RegularizerKind;

/// How the regularization parameter α is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaPolicy {
    /// A constant α for every outer iteration.
    Fixed(f64),
    /// `α = alpha_star(kind, A, u⁽ᵖ⁾, safety = c)`, recomputed every outer
    /// iteration because `u⁽ᵖ⁾` changes. `c ≥ 1`.
    Rayleigh(f64),
}

/// Number of linearizations `q` per outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerIterations {
    Finite(usize),
    /// Run until the linearized objective stops improving; capped at
    /// [`UNBOUNDED_INNER_CAP`] with a logged warning.
    Unbounded,
}

pub const UNBOUNDED_INNER_CAP: usize = 50;

impl InnerIterations {
    pub(crate) fn cap(self) -> usize {
        match self {
            InnerIterations::Finite(q) => q,
            InnerIterations::Unbounded => UNBOUNDED_INNER_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Gradient steplength `λ_p`. Only the NT family, IHT and HTP use it.
    pub steplength: f64,
    pub alpha_policy: AlphaPolicy,
    pub inner_iterations: InnerIterations,
    pub max_outer_iterations: usize,
    /// Stop once `‖y − Ax‖₂ ≤ tol·‖y‖₂`.
    pub residual_tolerance: f64,
    /// Stop once `‖x⁽ᵖ⁺¹⁾ − x⁽ᵖ⁾‖₂ ≤ tol·max(1, ‖x⁽ᵖ⁾‖₂)`; `None` disables it.
    pub stagnation_tolerance: Option<f64>,
    pub regularizer: RegularizerKind,
    /// Relative tolerance of the inner-loop equality test.
    pub termination_epsilon: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            steplength: 2.0,
            alpha_policy: AlphaPolicy::Fixed(5.0),
            inner_iterations: InnerIterations::Finite(1),
            max_outer_iterations: 150,
            residual_tolerance: 1e-10,
            stagnation_tolerance: Some(1e-12),
            regularizer: RegularizerKind::WeightedQuadratic,
            termination_epsilon: 1e-12,
        }
    }
}

impl SolverConfig {
    /// Benchmark settings: 150 outer iterations, no stagnation stop.
    pub fn benchmark() -> Self {
        Self {
            stagnation_tolerance: None,
            ..Self::default()
        }
    }

    /// Theory settings: `λ_p = 1` and α at the concavity threshold.
    pub fn theory() -> Self {
        Self {
            steplength: 1.0,
            alpha_policy: AlphaPolicy::Rayleigh(1.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.steplength > 0.0 && self.steplength.is_finite(),
            "steplength must be positive, got {}",
            self.steplength
        );
        match self.alpha_policy {
            AlphaPolicy::Fixed(a) => ensure!(a > 0.0 && a.is_finite(), "fixed alpha must be positive, got {a}"),
            AlphaPolicy::Rayleigh(c) => ensure!(c >= 1.0 && c.is_finite(), "Rayleigh multiplier must be >= 1, got {c}"),
        }
        if let InnerIterations::Finite(q) = self.inner_iterations {
            ensure!(q >= 1, "inner iteration count must be at least 1");
        }
        ensure!(self.residual_tolerance >= 0.0, "residual tolerance must be nonnegative");
        ensure!(self.termination_epsilon >= 0.0, "termination epsilon must be nonnegative");
        if let Some(s) = self.stagnation_tolerance {
            ensure!(s >= 0.0, "stagnation tolerance must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Residual,
    Stagnation,
    MaxIter,
    /// The caller's observer asked to stop.
    Halted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub x_hat: Vec<f64>,
    pub iterations_used: usize,
    pub stop_reason: StopReason,
    /// `‖y − Ax⁽ᵖ⁾‖₂` for `p = 0..=iterations_used`.
    pub residual_history: Vec<f64>,
    pub wall_time: Duration,
}

/// Called with `(p, x⁽ᵖ⁾)` after every outer iteration `p ≥ 1`.
pub type Observer<'a> = dyn FnMut(usize, &[f64]) -> ControlFlow<()> + 'a;

/// Observer that never interrupts.
pub fn no_observer() -> impl FnMut(usize, &[f64]) -> ControlFlow<()> {
    |_, _| ControlFlow::Continue(())
}

pub(crate) enum Step {
    Next(Vec<f64>),
    /// Algorithm-specific halt; the current iterate is kept.
    Halt,
}

/// Residual `y − Ax` exploiting the sparsity of `x`.
pub(crate) fn sparse_residual(problem: &ProblemInstance, x: &[f64]) -> Vec<f64> {
    let support = IndexSet::support_of(x);
    let mut r = vec![0.0; problem.m()];
    linalg::mat_vec_support(problem.matrix(), x, support.as_slice(), &mut r);
    for (ri, yi) in r.iter_mut().zip(&problem.y) {
        *ri = yi - *ri;
    }
    r
}

/// Runs the outer loop from `x⁽⁰⁾ = 0`.
///
/// `step(x, r)` receives the current iterate and its residual `y − Ax` and
/// returns the next iterate.
pub(crate) fn drive<F>(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    observer: &mut Observer<'_>,
    mut step: F,
) -> Result<RecoveryResult>
where
    F: FnMut(&[f64], &[f64]) -> Result<Step>,
{
    cfg.validate()?;
    let start = Instant::now();
    let n = problem.n();
    let y_norm = norm2(&problem.y);
    let threshold = cfg.residual_tolerance * y_norm;

    let mut x = vec![0.0; n];
    let mut r = problem.y.clone();
    let mut history = vec![y_norm];
    let mut iterations = 0;
    let mut reason = StopReason::MaxIter;

    if y_norm <= threshold {
        reason = StopReason::Residual;
    } else {
        for p in 1..=cfg.max_outer_iterations {
            let next = match step(&x, &r)? {
                Step::Next(next) => next,
                Step::Halt => {
                    reason = StopReason::Stagnation;
                    break;
                }
            };
            let r_next = sparse_residual(problem, &next);
            let res_norm = norm2(&r_next);
            history.push(res_norm);
            iterations = p;
            let moved = dist2(&next, &x);
            let scale = norm2(&x).max(1.0);
            x = next;
            r = r_next;
            if observer(p, &x).is_break() {
                reason = StopReason::Halted;
                break;
            }
            if res_norm <= threshold {
                reason = StopReason::Residual;
                break;
            }
            if let Some(stag) = cfg.stagnation_tolerance {
                if moved <= stag * scale {
                    reason = StopReason::Stagnation;
                    break;
                }
            }
        }
    }
    Ok(RecoveryResult {
        x_hat: x,
        iterations_used: iterations,
        stop_reason: reason,
        residual_history: history,
        wall_time: start.elapsed(),
    })
}

/// `u = x + λ·Aᵀ(y − Ax)`.
pub fn gradient_step(a: &linalg::DenseMatrix, y: &[f64], x: &[f64], steplength: f64) -> Result<Vec<f64>> {
    ensure!(steplength > 0.0, "steplength must be positive");
    let r = linalg::residual(a, y, x)?;
    Ok(gradient_step_from_residual(a, x, &r, steplength))
}

pub(crate) fn gradient_step_from_residual(a: &linalg::DenseMatrix, x: &[f64], r: &[f64], steplength: f64) -> Vec<f64> {
    let mut u = vec![0.0; a.cols()];
    linalg::mat_t_vec_into(a, r, &mut u);
    for (ui, xi) in u.iter_mut().zip(x) {
        *ui = xi + steplength * *ui;
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mat_t_vec, mat_vec, DenseMatrix};
    use crate::rng::NtkRng;

    #[test]
    fn gradient_step_identity_from_zero() {
        let a = DenseMatrix::identity(3).unwrap();
        let y = [1.0, -2.0, 0.5];
        assert_eq!(gradient_step(&a, &y, &[0.0; 3], 1.0).unwrap(), y.to_vec());
    }

    #[test]
    fn gradient_step_fixed_point() {
        let mut rng = NtkRng::new(4);
        let a = DenseMatrix::new(5, 8, rng.normal_vec(40)).unwrap();
        let x = rng.normal_vec(8);
        let y = mat_vec(&a, &x).unwrap();
        let u = gradient_step(&a, &y, &x, 2.0).unwrap();
        assert!(dist2(&u, &x) <= 1e-12 * norm2(&x));
    }

    #[test]
    fn gradient_step_matches_composition() {
        let mut rng = NtkRng::new(5);
        let a = DenseMatrix::new(6, 9, rng.normal_vec(54)).unwrap();
        let x = rng.normal_vec(9);
        let y = rng.normal_vec(6);
        let ax = mat_vec(&a, &x).unwrap();
        let r: Vec<f64> = y.iter().zip(&ax).map(|(a, b)| a - b).collect();
        let atr = mat_t_vec(&a, &r).unwrap();
        let expected: Vec<f64> = x.iter().zip(&atr).map(|(xi, g)| xi + 1.5 * g).collect();
        let u = gradient_step(&a, &y, &x, 1.5).unwrap();
        assert!(dist2(&u, &expected) <= 1e-14 * norm2(&expected));
    }

    #[test]
    fn gradient_step_contract() {
        let a = DenseMatrix::identity(2).unwrap();
        assert!(gradient_step(&a, &[1.0, 2.0], &[0.0], 1.0).is_err());
        assert!(gradient_step(&a, &[1.0, 2.0], &[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            inner_iterations: InnerIterations::Finite(0),
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            alpha_policy: AlphaPolicy::Rayleigh(0.5),
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            steplength: -1.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
