//! Reference recovery algorithms.
//!
//! - IHT: `x⁽ᵖ⁺¹⁾ = H_k(u⁽ᵖ⁾)`.
//! - HTP: least squares on `L_k(u⁽ᵖ⁾)`.
//! - OMP: greedy column selection, exactly `k` iterations.
//! - SP (Dai–Milenkovic): merge `supp(x)` with `L_k(Aᵀr)`, fit, prune to `k`,
//!   refit; halts as soon as the residual norm fails to decrease.
//! - CoSaMP (Needell–Tropp): merge `supp(x)` with `L_2k(Aᵀr)`, fit, prune to
//!   `k` without refitting; same residual-increase halt as SP.
//!
//! Only IHT and HTP use the steplength. SP and CoSaMP are capped at
//! `cfg.max_outer_iterations` like the other iterative methods.

use std::ops::ControlFlow;
use std::time::Instant;

use crate::error::Result;
use crate::linalg::{self, least_squares_on_support, norm2, IndexSet};
use crate::model::ProblemInstance;
use crate::solver::{
    drive, gradient_step_from_residual, no_observer, sparse_residual, Observer, RecoveryResult,
    SolverConfig, Step, StopReason,
};
use crate::thresholding::{hard_threshold, top_k_indices};

pub fn recover_iht(problem: &ProblemInstance, cfg: &SolverConfig) -> Result<RecoveryResult> {
    recover_iht_observed(problem, cfg, &mut no_observer())
}

pub fn recover_iht_observed(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    observer: &mut Observer<'_>,
) -> Result<RecoveryResult> {
    drive(problem, cfg, observer, |x, r| {
        let u = gradient_step_from_residual(problem.matrix(), x, r, cfg.steplength);
        Ok(Step::Next(hard_threshold(&u, problem.k)?.vector))
    })
}

pub fn recover_htp(problem: &ProblemInstance, cfg: &SolverConfig) -> Result<RecoveryResult> {
    recover_htp_observed(problem, cfg, &mut no_observer())
}

pub fn recover_htp_observed(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    observer: &mut Observer<'_>,
) -> Result<RecoveryResult> {
    drive(problem, cfg, observer, |x, r| {
        let u = gradient_step_from_residual(problem.matrix(), x, r, cfg.steplength);
        let support = top_k_indices(&u, problem.k)?;
        Ok(Step::Next(least_squares_on_support(problem.matrix(), &problem.y, &support)?))
    })
}

pub fn recover_omp(problem: &ProblemInstance, cfg: &SolverConfig) -> Result<RecoveryResult> {
    recover_omp_observed(problem, cfg, &mut no_observer())
}

/// OMP runs exactly `k` selections regardless of the residual; `cfg` only
/// contributes validation.
pub fn recover_omp_observed(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    observer: &mut Observer<'_>,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    let start = Instant::now();
    let a = problem.matrix();
    let n = problem.n();
    let mut selected = vec![false; n];
    let mut support = IndexSet::empty();
    let mut x = vec![0.0; n];
    let mut r = problem.y.clone();
    let mut history = vec![norm2(&r)];
    let mut corr = vec![0.0; n];
    let mut reason = StopReason::MaxIter;
    let mut iterations = 0;

    for p in 1..=problem.k {
        linalg::mat_t_vec_into(a, &r, &mut corr);
        // Largest |A_iᵀr| among unselected columns; ties go to the smaller index.
        let best = (0..n)
            .filter(|&i| !selected[i])
            .fold(None::<(usize, f64)>, |acc, i| match acc {
                Some((_, v)) if corr[i].abs() <= v => acc,
                _ => Some((i, corr[i].abs())),
            })
            .map(|(i, _)| i)
            .expect("k <= m <= n leaves an unselected column");
        selected[best] = true;
        support = support.union(&IndexSet::from_unsorted(vec![best]));
        x = least_squares_on_support(a, &problem.y, &support)?;
        r = sparse_residual(problem, &x);
        history.push(norm2(&r));
        iterations = p;
        if observer(p, &x).is_break() {
            reason = StopReason::Halted;
            break;
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

/// Support selected greedily by OMP, in selection order.
pub fn omp_selection_order(problem: &ProblemInstance) -> Result<Vec<usize>> {
    let mut order = Vec::with_capacity(problem.k);
    let mut prev = IndexSet::empty();
    let mut obs = |_: usize, x: &[f64]| {
        let now = IndexSet::support_of(x);
        order.extend(now.iter().filter(|i| !prev.contains(*i)));
        prev = now;
        ControlFlow::Continue(())
    };
    recover_omp_observed(problem, &SolverConfig::default(), &mut obs)?;
    Ok(order)
}

pub fn recover_sp(problem: &ProblemInstance, cfg: &SolverConfig) -> Result<RecoveryResult> {
    recover_sp_observed(problem, cfg, &mut no_observer())
}

pub fn recover_sp_observed(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    observer: &mut Observer<'_>,
) -> Result<RecoveryResult> {
    merge_prune(problem, cfg, observer, problem.k, true)
}

pub fn recover_cosamp(problem: &ProblemInstance, cfg: &SolverConfig) -> Result<RecoveryResult> {
    recover_cosamp_observed(problem, cfg, &mut no_observer())
}

pub fn recover_cosamp_observed(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    observer: &mut Observer<'_>,
) -> Result<RecoveryResult> {
    merge_prune(problem, cfg, observer, (2 * problem.k).min(problem.n()), false)
}

/// Shared SP / CoSaMP iteration: merge `supp(x)` with the `width` largest
/// correlations, fit on the merged set, prune to `k`. SP (`refit`) fits
/// again on the pruned support.
fn merge_prune(
    problem: &ProblemInstance,
    cfg: &SolverConfig,
    observer: &mut Observer<'_>,
    width: usize,
    refit: bool,
) -> Result<RecoveryResult> {
    let a = problem.matrix();
    let k = problem.k;
    drive(problem, cfg, observer, |x, r| {
        let mut proxy = vec![0.0; problem.n()];
        linalg::mat_t_vec_into(a, r, &mut proxy);
        let candidates = IndexSet::support_of(x).union(&top_k_indices(&proxy, width)?);
        let fit = least_squares_on_support(a, &problem.y, &candidates)?;
        let pruned = hard_threshold(&fit, k)?;
        let next = if refit {
            least_squares_on_support(a, &problem.y, &IndexSet::support_of(&pruned.vector))?
        } else {
            pruned.vector
        };
        // SP stops once the residual no longer shrinks. CoSaMP is not
        // monotone and runs on to the tolerance or the budget.
        if refit && norm2(&sparse_residual(problem, &next)) >= norm2(r) {
            return Ok(Step::Halt);
        }
        Ok(Step::Next(next))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dist2, DenseMatrix};
    use crate::model::gen_instance;

    type Solver = fn(&ProblemInstance, &SolverConfig) -> Result<RecoveryResult>;
    const ALL: [(&str, Solver); 5] = [
        ("iht", recover_iht),
        ("htp", recover_htp),
        ("omp", recover_omp),
        ("sp", recover_sp),
        ("cosamp", recover_cosamp),
    ];

    fn identity_cfg() -> SolverConfig {
        SolverConfig {
            steplength: 1.0,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn identity_sensing_is_exact_in_one_step() {
        let y = vec![0.0, 0.0, 3.0, 0.0, -1.0, 0.0, 0.0, 2.5];
        let p = ProblemInstance::new(DenseMatrix::identity(8).unwrap(), y.clone(), 3).unwrap();
        for (name, solve) in ALL {
            let r = solve(&p, &identity_cfg()).unwrap();
            assert!(dist2(&r.x_hat, &y) < 1e-14, "{name}");
            let expected = if name == "omp" { 3 } else { 1 };
            assert_eq!(r.iterations_used, expected, "{name}");
        }
    }

    #[test]
    fn zero_measurements_give_zero() {
        let p = ProblemInstance::new(DenseMatrix::identity(6).unwrap(), vec![0.0; 6], 2).unwrap();
        for (name, solve) in ALL {
            let r = solve(&p, &SolverConfig::default()).unwrap();
            assert!(r.x_hat.iter().all(|v| *v == 0.0), "{name}");
        }
    }

    #[test]
    fn outputs_are_k_sparse() {
        for seed in 0..10 {
            let p = gen_instance(30, 90, 6, 0.01, seed).unwrap();
            for (name, solve) in ALL {
                let r = solve(&p, &SolverConfig::default()).unwrap();
                assert!(r.x_hat.iter().filter(|v| **v != 0.0).count() <= 6, "{name}");
                assert_eq!(r.residual_history.len(), r.iterations_used + 1, "{name}");
            }
        }
    }

    #[test]
    fn omp_first_pick_is_most_correlated_column() {
        let p = gen_instance(20, 50, 1, 0.0, 4).unwrap();
        let corr = linalg::mat_t_vec(p.matrix(), &p.y).unwrap();
        let best = top_k_indices(&corr, 1).unwrap();
        let order = omp_selection_order(&p).unwrap();
        assert_eq!(order, best.into_vec());
    }

    #[test]
    fn omp_support_grows_by_one_without_repeats() {
        let p = gen_instance(40, 100, 8, 0.001, 9).unwrap();
        let order = omp_selection_order(&p).unwrap();
        assert_eq!(order.len(), 8);
        let set = IndexSet::from_unsorted(order.clone());
        assert_eq!(set.len(), 8);
    }

    #[test]
    fn htp_fixed_point_is_stable() {
        let p = gen_instance(50, 100, 4, 0.0, 12).unwrap();
        let cfg = SolverConfig {
            stagnation_tolerance: None,
            residual_tolerance: 0.0,
            max_outer_iterations: 40,
            ..SolverConfig::default()
        };
        let mut iterates: Vec<Vec<f64>> = Vec::new();
        let mut obs = |_: usize, x: &[f64]| {
            iterates.push(x.to_vec());
            ControlFlow::Continue(())
        };
        recover_htp_observed(&p, &cfg, &mut obs).unwrap();
        let last = iterates.len() - 1;
        let sup = |x: &[f64]| IndexSet::support_of(x);
        if sup(&iterates[last]) == sup(&iterates[last - 1]) {
            assert!(dist2(&iterates[last], &iterates[last - 1]) <= 1e-12);
        }
    }

    #[test]
    fn sp_cosamp_least_squares_orthogonality() {
        for seed in 0..5 {
            let p = gen_instance(40, 120, 5, 0.01, 100 + seed).unwrap();
            let a = p.matrix();
            let scale = a.norm_inf() * norm2(&p.y);
            for solve in [recover_sp as Solver, recover_htp] {
                let r = solve(&p, &SolverConfig::default()).unwrap();
                let res = sparse_residual(&p, &r.x_hat);
                for j in IndexSet::support_of(&r.x_hat).iter() {
                    assert!(linalg::dot(a.column(j), &res).abs() <= 1e-8 * scale);
                }
            }
        }
    }

    #[test]
    fn sp_exact_support_residual_is_noise_level() {
        let p = gen_instance(80, 160, 3, 0.01, 5).unwrap();
        let truth = p.truth.clone().unwrap();
        let r = recover_sp(&p, &SolverConfig::default()).unwrap();
        if IndexSet::support_of(&r.x_hat) == truth.support {
            let z = least_squares_on_support(p.matrix(), &p.y, &truth.support).unwrap();
            let expected = norm2(&sparse_residual(&p, &z));
            assert!((r.residual_history.last().unwrap() - expected).abs() <= 1e-12);
            assert!(expected <= 0.01 + 1e-14);
        } else {
            panic!("SP missed the support on an easy instance");
        }
    }
}
