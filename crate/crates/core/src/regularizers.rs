//! Binary regularizers φ and the regularized objective `g_α(w) = f(w) + α·φ(w)`
//! with `f(w) = ‖y − A(u ⊗ w)‖₂²`.
//!
//! Every kind is built from the kernel `τ(t) = (t + 1/2)(3/2 − t)`, which is
//! positive on `(−1/2, 3/2)` and takes its minimum over `[0, 1]` exactly at
//! `t ∈ {0, 1}`:
//!
//! | kind | φ(w) | concavity threshold α* |
//! |------|------|------------------------|
//! | `quad` | Σ τ(wᵢ) | λ_max(U AᵀA U) |
//! | `log` | Σ ln(1 + τ(wᵢ)) | 2·λ_max(U AᵀA U) |
//! | `rational` | Σ τ(wᵢ)/(1 + τ(wᵢ)) | 4·λ_max(U AᵀA U) |
//! | `wquad` | Σ uᵢ² τ(wᵢ) | λ_max(AᵀA) |
//!
//! where `U = diag(u)`. Other increasing concave outer functions `g(τ)` fit
//! the same pattern but only these four are shipped.
//!
//! `wquad` is a binary regularizer in the strict sense only when every `uᵢ`
//! is nonzero; zero weights are accepted and simply drop out.

use std::fmt;
use std::str::FromStr;

use crate::error::{ensure, NtkError, Result};
use crate::linalg::{self, lambda_max_sym, DenseMatrix, DEFAULT_EIGEN_MAX_ITER, DEFAULT_EIGEN_TOL};

/// Domain slack used by the composite kinds.
const OPEN_DOMAIN_SLACK: f64 = 1e-12;
pub const DEFAULT_ALPHA_SAFETY: f64 = 1.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegularizerKind {
    Quadratic,
    Log,
    Rational,
    WeightedQuadratic,
}

impl RegularizerKind {
    pub const ALL: [RegularizerKind; 4] = [
        RegularizerKind::Quadratic,
        RegularizerKind::Log,
        RegularizerKind::Rational,
        RegularizerKind::WeightedQuadratic,
    ];

    pub fn token(self) -> &'static str {
        match self {
            RegularizerKind::Quadratic => "quad",
            RegularizerKind::Log => "log",
            RegularizerKind::Rational => "rational",
            RegularizerKind::WeightedQuadratic => "wquad",
        }
    }

    /// Multiplier applied to `λ_max` in the concavity threshold.
    pub fn alpha_multiplier(self) -> f64 {
        match self {
            RegularizerKind::Quadratic | RegularizerKind::WeightedQuadratic => 1.0,
            RegularizerKind::Log => 2.0,
            RegularizerKind::Rational => 4.0,
        }
    }

    /// Builds the regularizer for a gradient-step point `u`.
    /// Only the weighted kind actually reads `u`.
    pub fn instantiate(self, u: &[f64]) -> Result<Regularizer> {
        Ok(match self {
            RegularizerKind::Quadratic => Regularizer::Quadratic,
            RegularizerKind::Log => Regularizer::Log,
            RegularizerKind::Rational => Regularizer::Rational,
            RegularizerKind::WeightedQuadratic => Regularizer::weighted(u.to_vec())?,
        })
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for RegularizerKind {
    type Err = NtkError;

    fn from_str(s: &str) -> Result<Self> {
        RegularizerKind::ALL
            .into_iter()
            .find(|k| k.token() == s)
            .ok_or_else(|| NtkError::contract(format!("unknown regularizer `{s}` (expected quad|log|rational|wquad)")))
    }
}

/// A concrete regularizer; the weighted kind carries its weight vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Quadratic,
    Log,
    Rational,
    WeightedQuadratic { weights: Vec<f64> },
}

fn tau(t: f64) -> f64 {
    (t + 0.5) * (1.5 - t)
}

fn tau_prime(t: f64) -> f64 {
    1.0 - 2.0 * t
}

impl Regularizer {
    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        ensure!(
            weights.iter().any(|&v| v != 0.0),
            "weighted quadratic regularizer needs a nonzero weight vector"
        );
        ensure!(weights.iter().all(|v| v.is_finite()), "weights must be finite");
        Ok(Regularizer::WeightedQuadratic { weights })
    }

    pub fn kind(&self) -> RegularizerKind {
        match self {
            Regularizer::Quadratic => RegularizerKind::Quadratic,
            Regularizer::Log => RegularizerKind::Log,
            Regularizer::Rational => RegularizerKind::Rational,
            Regularizer::WeightedQuadratic { .. } => RegularizerKind::WeightedQuadratic,
        }
    }

    fn check_domain(&self, w: &[f64]) -> Result<()> {
        let slack = match self {
            Regularizer::Log | Regularizer::Rational => OPEN_DOMAIN_SLACK,
            _ => 0.0,
        };
        let (lo, hi) = (-0.5 + slack, 1.5 - slack);
        ensure!(
            w.iter().all(|&t| t >= lo && t <= hi),
            "w must lie in [{lo}, {hi}] for the {} regularizer",
            self.kind()
        );
        if let Regularizer::WeightedQuadratic { weights } = self {
            ensure!(
                weights.len() == w.len(),
                "weight vector has length {}, w has length {}",
                weights.len(),
                w.len()
            );
        }
        Ok(())
    }

    /// Per-coordinate value, first and second derivative of φ at `t`.
    fn coordinate(&self, i: usize, t: f64) -> (f64, f64, f64) {
        let (b, db) = (tau(t), tau_prime(t));
        match self {
            Regularizer::Quadratic => (b, db, -2.0),
            Regularizer::Log => {
                let s = 1.0 + b;
                ((s).ln(), db / s, (-2.0 * s - db * db) / (s * s))
            }
            Regularizer::Rational => {
                let s = 1.0 + b;
                (b / s, db / (s * s), (-2.0 * s - 2.0 * db * db) / (s * s * s))
            }
            Regularizer::WeightedQuadratic { weights } => {
                let u2 = weights[i] * weights[i];
                (u2 * b, u2 * db, -2.0 * u2)
            }
        }
    }

    /// Value of φ at a binary vector of length `n`, which is its minimum over `[0,1]ⁿ`.
    pub fn binary_minimum(&self, n: usize) -> f64 {
        match self {
            Regularizer::Quadratic => 0.75 * n as f64,
            Regularizer::Log => 1.75f64.ln() * n as f64,
            Regularizer::Rational => (3.0 / 7.0) * n as f64,
            Regularizer::WeightedQuadratic { weights } => 0.75 * weights.iter().map(|u| u * u).sum::<f64>(),
        }
    }

    /// φ'(t) at a binary coordinate, used by the solvers' fast gradient path.
    pub(crate) fn binary_slope(&self, i: usize, one: bool) -> f64 {
        let sign = if one { -1.0 } else { 1.0 };
        sign * match self {
            Regularizer::Quadratic => 1.0,
            Regularizer::Log => 4.0 / 7.0,
            Regularizer::Rational => 16.0 / 49.0,
            Regularizer::WeightedQuadratic { weights } => weights[i] * weights[i],
        }
    }
}

pub fn phi_value(reg: &Regularizer, w: &[f64]) -> Result<f64> {
    reg.check_domain(w)?;
    Ok(w.iter().enumerate().map(|(i, &t)| reg.coordinate(i, t).0).sum())
}

pub fn phi_gradient(reg: &Regularizer, w: &[f64]) -> Result<Vec<f64>> {
    reg.check_domain(w)?;
    Ok(w.iter().enumerate().map(|(i, &t)| reg.coordinate(i, t).1).collect())
}

/// Diagonal of ∇²φ (φ is separable, so the Hessian is diagonal).
pub fn phi_hessian_diag(reg: &Regularizer, w: &[f64]) -> Result<Vec<f64>> {
    reg.check_domain(w)?;
    Ok(w.iter().enumerate().map(|(i, &t)| reg.coordinate(i, t).2).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub f_value: f64,
    pub phi_value: f64,
    pub g_value: f64,
    pub gradient: Vec<f64>,
    pub alpha: f64,
}

/// Evaluates `g_α` and its gradient `−2·u ⊗ Aᵀ(y − A(u ⊗ w)) + α∇φ(w)`.
pub fn eval_g_alpha(
    a: &DenseMatrix,
    y: &[f64],
    u: &[f64],
    w: &[f64],
    alpha: f64,
    reg: &Regularizer,
) -> Result<ObjectiveEval> {
    let n = a.cols();
    ensure!(y.len() == a.rows(), "y has length {}, expected {}", y.len(), a.rows());
    ensure!(u.len() == n && w.len() == n, "u and w must have length {n}");
    ensure!(alpha > 0.0 && alpha.is_finite(), "alpha must be positive, got {alpha}");
    reg.check_domain(w)?;

    let uw: Vec<f64> = u.iter().zip(w).map(|(a, b)| a * b).collect();
    let r = linalg::residual(a, y, &uw)?;
    let f_value = linalg::dot(&r, &r);
    let atr = linalg::mat_t_vec(a, &r)?;
    let mut phi = 0.0;
    let gradient = (0..n)
        .map(|i| {
            let (v, d, _) = reg.coordinate(i, w[i]);
            phi += v;
            -2.0 * u[i] * atr[i] + alpha * d
        })
        .collect();
    Ok(ObjectiveEval {
        f_value,
        phi_value: phi,
        g_value: f_value + alpha * phi,
        gradient,
        alpha,
    })
}

/// Concavity threshold for `g_α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaStar {
    /// `safety × multiplier × λ̂_max`.
    pub value: f64,
    pub lambda_max: f64,
    /// Power iteration reached its tolerance.
    pub converged: bool,
    /// `u = 0` for an unweighted kind: f is constant in w and any α works.
    pub degenerate: bool,
}

/// Smallest α (times `safety`) that makes `g_α` concave for the given kind.
///
/// The eigenvalue is estimated matrix-free, with `v ↦ u ⊗ AᵀA(u ⊗ v)` for the
/// unweighted kinds and `v ↦ AᵀAv` for `wquad`.
pub fn alpha_star(kind: RegularizerKind, a: &DenseMatrix, u: &[f64], safety: f64) -> Result<AlphaStar> {
    let (m, n) = (a.rows(), a.cols());
    ensure!(u.len() == n, "u has length {}, expected {n}", u.len());
    ensure!(safety >= 1.0, "safety factor must be at least 1, got {safety}");

    let uses_u = kind != RegularizerKind::WeightedQuadratic;
    if uses_u && u.iter().all(|&v| v == 0.0) {
        log::warn!("alpha_star: u = 0, objective is constant in w");
        return Ok(AlphaStar {
            value: 0.0,
            lambda_max: 0.0,
            converged: true,
            degenerate: true,
        });
    }
    let mut scaled = vec![0.0; n];
    let mut av = vec![0.0; m];
    let est = lambda_max_sym(
        |v, out| {
            if uses_u {
                for i in 0..n {
                    scaled[i] = u[i] * v[i];
                }
                linalg::mat_vec_into(a, &scaled, &mut av);
            } else {
                linalg::mat_vec_into(a, v, &mut av);
            }
            linalg::mat_t_vec_into(a, &av, out);
            if uses_u {
                for i in 0..n {
                    out[i] *= u[i];
                }
            }
        },
        n,
        DEFAULT_EIGEN_TOL,
        DEFAULT_EIGEN_MAX_ITER,
    )?;
    Ok(AlphaStar {
        value: safety * kind.alpha_multiplier() * est.value,
        lambda_max: est.value,
        converged: est.converged,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NtkRng;

    fn all_regs(n: usize, rng: &mut NtkRng) -> Vec<Regularizer> {
        vec![
            Regularizer::Quadratic,
            Regularizer::Log,
            Regularizer::Rational,
            Regularizer::weighted(rng.normal_vec(n)).unwrap(),
        ]
    }

    #[test]
    fn binary_values() {
        assert!((phi_value(&Regularizer::Quadratic, &[0.0, 1.0, 1.0]).unwrap() - 2.25).abs() < 1e-15);
        assert!((phi_value(&Regularizer::Log, &[1.0, 0.0]).unwrap() - 1.119232).abs() < 1e-6);
        assert!((phi_value(&Regularizer::Rational, &[0.0, 0.0]).unwrap() - 0.857143).abs() < 1e-6);
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(phi_gradient(&Regularizer::Quadratic, &[1.0, 0.0]).unwrap(), vec![-1.0, 1.0]);
        assert!((phi_gradient(&Regularizer::Log, &[0.0]).unwrap()[0] - 0.571429).abs() < 1e-6);
    }

    #[test]
    fn hessian_examples() {
        assert_eq!(phi_hessian_diag(&Regularizer::Quadratic, &[0.3, 0.9]).unwrap(), vec![-2.0, -2.0]);
        assert!((phi_hessian_diag(&Regularizer::Log, &[0.0]).unwrap()[0] + 1.469388).abs() < 1e-6);
        let w = Regularizer::weighted(vec![2.0, 0.0]).unwrap();
        assert_eq!(phi_hessian_diag(&w, &[0.5, 0.5]).unwrap(), vec![-8.0, -0.0]);
    }

    #[test]
    fn binary_slopes_match_gradient() {
        let mut rng = NtkRng::new(1);
        for reg in all_regs(3, &mut rng) {
            let g0 = phi_gradient(&reg, &[0.0, 0.0, 0.0]).unwrap();
            let g1 = phi_gradient(&reg, &[1.0, 1.0, 1.0]).unwrap();
            for i in 0..3 {
                assert!((reg.binary_slope(i, false) - g0[i]).abs() < 1e-15);
                assert!((reg.binary_slope(i, true) - g1[i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn domain_violations() {
        assert!(matches!(phi_value(&Regularizer::Quadratic, &[1.6]), Err(NtkError::Contract(_))));
        assert!(phi_value(&Regularizer::Quadratic, &[-0.5, 1.5]).is_ok());
        assert!(phi_value(&Regularizer::Log, &[-0.5]).is_err());
        assert!(phi_gradient(&Regularizer::Rational, &[1.5]).is_err());
        let w = Regularizer::weighted(vec![1.0, 1.0]).unwrap();
        assert!(phi_value(&w, &[0.0]).is_err());
        assert!(Regularizer::weighted(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn finite_difference_derivatives() {
        let mut rng = NtkRng::new(2);
        let n = 6;
        for reg in all_regs(n, &mut rng) {
            for _ in 0..20 {
                let w: Vec<f64> = (0..n).map(|_| -0.3 + 1.6 * rng.uniform()).collect();
                let g = phi_gradient(&reg, &w).unwrap();
                let hd = phi_hessian_diag(&reg, &w).unwrap();
                let h = 1e-6;
                for i in 0..n {
                    let mut wp = w.clone();
                    let mut wm = w.clone();
                    wp[i] += h;
                    wm[i] -= h;
                    let fp = phi_value(&reg, &wp).unwrap();
                    let fm = phi_value(&reg, &wm).unwrap();
                    let f0 = phi_value(&reg, &w).unwrap();
                    let fd = (fp - fm) / (2.0 * h);
                    assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "{reg:?} grad {fd} vs {}", g[i]);
                    let h2 = 1e-4;
                    let mut wp2 = w.clone();
                    let mut wm2 = w.clone();
                    wp2[i] += h2;
                    wm2[i] -= h2;
                    let sd = (phi_value(&reg, &wp2).unwrap() - 2.0 * f0 + phi_value(&reg, &wm2).unwrap()) / (h2 * h2);
                    assert!((sd - hd[i]).abs() <= 1e-4 * hd[i].abs().max(1.0), "{reg:?} hess {sd} vs {}", hd[i]);
                }
            }
        }
    }

    #[test]
    fn binary_minimum_property() {
        let mut rng = NtkRng::new(3);
        let n = 5;
        for reg in all_regs(n, &mut rng) {
            let min = reg.binary_minimum(n);
            for mask in 0u32..(1 << n) {
                let w: Vec<f64> = (0..n).map(|i| ((mask >> i) & 1) as f64).collect();
                assert!((phi_value(&reg, &w).unwrap() - min).abs() <= 1e-12);
            }
            for _ in 0..1000 {
                let w: Vec<f64> = (0..n).map(|_| 0.01 + 0.98 * rng.uniform()).collect();
                assert!(phi_value(&reg, &w).unwrap() > min);
            }
        }
    }

    #[test]
    fn objective_zero_residual_and_binary_differences() {
        let a = DenseMatrix::identity(3).unwrap();
        let u = [2.0, -1.0, 3.0];
        let w = [1.0, 0.0, 1.0];
        let y = [2.0, 0.0, 3.0];
        let ev = eval_g_alpha(&a, &y, &u, &w, 4.0, &Regularizer::Quadratic).unwrap();
        assert_eq!(ev.f_value, 0.0);
        assert!((ev.g_value - (ev.f_value + 4.0 * ev.phi_value)).abs() <= 1e-14 * ev.g_value.abs());

        let w2 = [0.0, 1.0, 1.0];
        for alpha in [0.1, 7.0, 1e4] {
            let e1 = eval_g_alpha(&a, &y, &u, &w, alpha, &Regularizer::Quadratic).unwrap();
            let e2 = eval_g_alpha(&a, &y, &u, &w2, alpha, &Regularizer::Quadratic).unwrap();
            let dg = e1.g_value - e2.g_value;
            let df = e1.f_value - e2.f_value;
            assert!((dg - df).abs() <= 1e-9 * (1.0 + alpha), "{dg} vs {df}");
        }
    }

    #[test]
    fn objective_rejects_bad_alpha() {
        let a = DenseMatrix::identity(2).unwrap();
        assert!(eval_g_alpha(&a, &[0.0, 0.0], &[1.0, 1.0], &[0.0, 0.0], 0.0, &Regularizer::Quadratic).is_err());
        assert!(eval_g_alpha(&a, &[0.0], &[1.0, 1.0], &[0.0, 0.0], 1.0, &Regularizer::Quadratic).is_err());
    }

    #[test]
    fn alpha_star_examples() {
        let i4 = DenseMatrix::identity(4).unwrap();
        let s = alpha_star(RegularizerKind::Quadratic, &i4, &[1.0; 4], 1.0).unwrap();
        assert!((s.value - 1.0).abs() < 1e-9, "{s:?}");
        let mut two = DenseMatrix::identity(4).unwrap();
        two.scale(2.0);
        let s = alpha_star(RegularizerKind::WeightedQuadratic, &two, &[0.3; 4], 1.0).unwrap();
        assert!((s.value - 4.0).abs() < 1e-9, "{s:?}");
        let s = alpha_star(RegularizerKind::Rational, &i4, &[0.0; 4], 1.02).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.value, 0.0);
        let s = alpha_star(RegularizerKind::Log, &i4, &[1.0, 2.0, 0.0, 0.0], 1.0).unwrap();
        assert!((s.value - 8.0).abs() < 1e-6, "{s:?}");
        assert!(alpha_star(RegularizerKind::Log, &i4, &[1.0; 4], 0.5).is_err());
    }

    #[test]
    fn kind_tokens_round_trip() {
        for k in RegularizerKind::ALL {
            assert_eq!(k.token().parse::<RegularizerKind>().unwrap(), k);
        }
        assert!("cubic".parse::<RegularizerKind>().is_err());
    }
}
