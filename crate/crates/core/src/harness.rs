//! Monte-Carlo experiments: paired trials, success-rate and runtime sweeps,
//! and CSV / SVG reports.
//!
//! Every trial of a sweep is keyed by `(k, trial index)`. The instance for
//! that key is generated once and handed to every algorithm, so comparisons
//! are paired. Trials may run on several threads; results are collected in
//! key order and aggregated on one thread, so the output does not depend on
//! the thread count.
//!
//! Wall time is the only nondeterministic quantity. Success sweeps leave the
//! `mean_time_ms` column empty unless timing is requested.

use std::fmt::{self, Write as _};
use std::fs;
use std::ops::ControlFlow;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::error::{ensure, NtkError, Result};
use crate::exec::Execution;
use crate::linalg::{dist2, norm2};
use crate::model::{csv_err, gen_instance, ProblemInstance};
use crate::nt;
use crate::rng::{mix64, GOLDEN};
use crate::solver::{InnerIterations, Observer, RecoveryResult, SolverConfig};

/// Relative-error threshold for exact recovery.
pub const NOISELESS_CRITERION: f64 = 1e-5;
/// Relative-error threshold once measurements carry noise.
pub const NOISY_CRITERION: f64 = 1e-3;
/// Inner iterations used by `ntq` / `ntpq` unless told otherwise.
pub const DEFAULT_Q: usize = 5;

/// Exact header of sweep CSV files.
pub const SWEEP_CSV_HEADER: &str =
    "algorithm,m,n,k,noise,trials,successes,success_rate,mean_iterations,mean_time_ms,master_seed";

pub fn criterion_for_noise(noise_level: f64) -> f64 {
    if noise_level == 0.0 {
        NOISELESS_CRITERION
    } else {
        NOISY_CRITERION
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Nt,
    Ntp,
    Ntq,
    Ntpq,
    Iht,
    Htp,
    Omp,
    Sp,
    Cosamp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Nt,
        Algorithm::Ntp,
        Algorithm::Ntq,
        Algorithm::Ntpq,
        Algorithm::Iht,
        Algorithm::Htp,
        Algorithm::Omp,
        Algorithm::Sp,
        Algorithm::Cosamp,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Algorithm::Nt => "nt",
            Algorithm::Ntp => "ntp",
            Algorithm::Ntq => "ntq",
            Algorithm::Ntpq => "ntpq",
            Algorithm::Iht => "iht",
            Algorithm::Htp => "htp",
            Algorithm::Omp => "omp",
            Algorithm::Sp => "sp",
            Algorithm::Cosamp => "cosamp",
        }
    }

    /// Parses a comma-separated list such as `ntp,htp`.
    pub fn parse_list(s: &str) -> Result<Vec<Algorithm>> {
        let algos = s.split(',').map(|t| t.trim().parse()).collect::<Result<Vec<Algorithm>>>()?;
        ensure!(!algos.is_empty(), "algorithm list is empty");
        Ok(algos)
    }

    /// `nt` and `ntp` always linearize once; `ntq` and `ntpq` use the
    /// configured inner-iteration count.
    pub fn effective_config(self, cfg: &SolverConfig) -> SolverConfig {
        match self {
            Algorithm::Nt | Algorithm::Ntp => SolverConfig {
                inner_iterations: InnerIterations::Finite(1),
                ..cfg.clone()
            },
            _ => cfg.clone(),
        }
    }

    pub fn solve_observed(
        self,
        problem: &ProblemInstance,
        cfg: &SolverConfig,
        observer: &mut Observer<'_>,
    ) -> Result<RecoveryResult> {
        let cfg = self.effective_config(cfg);
        match self {
            Algorithm::Nt | Algorithm::Ntq => nt::recover_nt_observed(problem, &cfg, observer),
            Algorithm::Ntp | Algorithm::Ntpq => nt::recover_ntp_observed(problem, &cfg, observer),
            Algorithm::Iht => baselines::recover_iht_observed(problem, &cfg, observer),
            Algorithm::Htp => baselines::recover_htp_observed(problem, &cfg, observer),
            Algorithm::Omp => baselines::recover_omp_observed(problem, &cfg, observer),
            Algorithm::Sp => baselines::recover_sp_observed(problem, &cfg, observer),
            Algorithm::Cosamp => baselines::recover_cosamp_observed(problem, &cfg, observer),
        }
    }

    pub fn solve(self, problem: &ProblemInstance, cfg: &SolverConfig) -> Result<RecoveryResult> {
        self.solve_observed(problem, cfg, &mut |_, _| ControlFlow::Continue(()))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Algorithm {
    type Err = NtkError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.token() == s)
            .ok_or_else(|| NtkError::contract(format!("unknown algorithm `{s}`")))
    }
}

/// `master ⊕ mix(k)·GOLDEN ⊕ mix(trial)`, with `mix` the SplitMix64 finalizer.
pub fn trial_seed(master_seed: u64, k: usize, trial: usize) -> u64 {
    master_seed ^ mix64(k as u64).wrapping_mul(GOLDEN) ^ mix64(trial as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub algorithm: Algorithm,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub success: bool,
    /// First iteration meeting the criterion, or all iterations used.
    pub iterations: usize,
    /// At the first successful iterate, else at the last one.
    pub relative_error: f64,
    pub wall_time_ms: f64,
    pub noise_level: f64,
}

impl TrialRecord {
    /// One `key=value` line; wall time is left out unless `timing` is set so
    /// that repeated runs print identical text.
    pub fn summary_line(&self, timing: bool) -> String {
        let mut s = format!(
            "algorithm={} m={} n={} k={} noise={} seed={} success={} iterations={} relative_error={:e}",
            self.algorithm,
            self.m,
            self.n,
            self.k,
            self.noise_level,
            self.seed,
            self.success,
            self.iterations,
            self.relative_error
        );
        if timing {
            let _ = write!(s, " wall_time_ms={}", self.wall_time_ms);
        }
        s
    }
}

/// Runs `algo` on `instance` and stops at the first iterate whose relative
/// error against the ground truth is at most `criterion_tol`.
pub fn run_trial(
    algo: Algorithm,
    instance: &ProblemInstance,
    cfg: &SolverConfig,
    criterion_tol: f64,
) -> Result<TrialRecord> {
    let truth = instance
        .truth
        .as_ref()
        .ok_or_else(|| NtkError::contract("run_trial needs an instance with known ground truth"))?;
    ensure!(criterion_tol >= 0.0, "criterion tolerance must be nonnegative");
    let x_true = truth.to_dense();
    let x_norm = norm2(&x_true);
    ensure!(x_norm > 0.0, "ground truth must be nonzero");

    let mut hit: Option<(usize, f64)> = None;
    let mut last_err = 1.0;
    let mut observer = |p: usize, x: &[f64]| {
        last_err = dist2(x, &x_true) / x_norm;
        if last_err <= criterion_tol {
            hit = Some((p, last_err));
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    };
    let result = algo.solve_observed(instance, cfg, &mut observer)?;
    let (success, iterations, relative_error) = match hit {
        Some((p, err)) => (true, p, err),
        None => (false, result.iterations_used, last_err),
    };
    Ok(TrialRecord {
        algorithm: algo,
        m: instance.m(),
        n: instance.n(),
        k: instance.k,
        seed: instance.master_seed,
        success,
        iterations,
        relative_error,
        wall_time_ms: result.wall_time.as_secs_f64() * 1e3,
        noise_level: instance.noise_level,
    })
}

/// `‖x⁽ᵖ⁾ − x‖₂` for `p = 0, 1, …` over the full iteration budget.
pub fn error_decay(algo: Algorithm, instance: &ProblemInstance, cfg: &SolverConfig) -> Result<Vec<f64>> {
    let truth = instance
        .truth
        .as_ref()
        .ok_or_else(|| NtkError::contract("error_decay needs ground truth"))?
        .to_dense();
    let mut errors = vec![norm2(&truth)];
    let mut observer = |_: usize, x: &[f64]| {
        errors.push(dist2(x, &truth));
        ControlFlow::Continue(())
    };
    algo.solve_observed(instance, cfg, &mut observer)?;
    Ok(errors)
}

/// Geometry and sampling plan shared by the sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPlan {
    pub algorithms: Vec<Algorithm>,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub noise_level: f64,
    pub trials: usize,
    pub master_seed: u64,
}

/// Runs every algorithm on `trials` shared instances; records are grouped by
/// trial, then by algorithm in the order given.
pub fn run_paired_trials(plan: &TrialPlan, cfg: &SolverConfig, exec: Execution) -> Result<Vec<TrialRecord>> {
    let keys: Vec<(usize, usize)> = (0..plan.trials).map(|t| (plan.k, t)).collect();
    let per_key = paired_records(plan, &keys, cfg, exec)?;
    Ok(per_key.into_iter().flatten().collect())
}

fn paired_records(
    plan: &TrialPlan,
    keys: &[(usize, usize)],
    cfg: &SolverConfig,
    exec: Execution,
) -> Result<Vec<Vec<TrialRecord>>> {
    ensure!(!plan.algorithms.is_empty(), "no algorithms requested");
    ensure!(plan.trials >= 1, "need at least one trial");
    let criterion = criterion_for_noise(plan.noise_level);
    exec.map(keys, |&(k, t)| {
        let instance = gen_instance(plan.m, plan.n, k, plan.noise_level, trial_seed(plan.master_seed, k, t))?;
        plan.algorithms
            .iter()
            .map(|&algo| run_trial(algo, &instance, cfg, criterion))
            .collect::<Result<Vec<_>>>()
    })
    .into_iter()
    .collect()
}

/// One aggregated line of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub noise: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_iterations: f64,
    /// Empty in deterministic sweeps.
    pub mean_time_ms: Option<f64>,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Aggregates records of one `(algorithm, m, n, k)` cell. The result does not
/// depend on the order of `records`.
pub fn aggregate(records: &[TrialRecord], master_seed: u64, timing: bool) -> Result<SweepRow> {
    let first = records.first().ok_or_else(|| NtkError::contract("cannot aggregate zero trials"))?;
    ensure!(
        records
            .iter()
            .all(|r| (r.algorithm, r.m, r.n, r.k) == (first.algorithm, first.m, first.n, first.k)),
        "records span several cells"
    );
    let trials = records.len();
    let successes = records.iter().filter(|r| r.success).count();
    let iterations: usize = records.iter().map(|r| r.iterations).sum();
    let mean_time_ms = timing.then(|| {
        let mut times: Vec<f64> = records.iter().map(|r| r.wall_time_ms).collect();
        times.sort_by(f64::total_cmp);
        times.iter().sum::<f64>() / trials as f64
    });
    Ok(SweepRow {
        algorithm: first.algorithm,
        m: first.m,
        n: first.n,
        k: first.k,
        noise: first.noise_level,
        trials,
        successes,
        success_rate: successes as f64 / trials as f64,
        mean_iterations: iterations as f64 / trials as f64,
        mean_time_ms,
        master_seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessSweep {
    pub algorithms: Vec<Algorithm>,
    pub m: usize,
    pub n: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub k_step: usize,
    pub trials: usize,
    pub noise_level: f64,
    pub master_seed: u64,
    /// Fill `mean_time_ms`; the CSV is then no longer reproducible byte for byte.
    pub timing: bool,
}

impl SuccessSweep {
    pub fn sparsities(&self) -> Result<Vec<usize>> {
        ensure!(self.k_step >= 1, "k step must be positive");
        ensure!(
            self.k_min >= 1 && self.k_min <= self.k_max,
            "need 1 <= k-min <= k-max, got {}..{}",
            self.k_min,
            self.k_max
        );
        ensure!(self.k_max <= self.m, "k-max {} exceeds m = {}", self.k_max, self.m);
        Ok((self.k_min..=self.k_max).step_by(self.k_step).collect())
    }
}

/// Success rate per `(algorithm, k)`; rows ordered by algorithm as given,
/// then by `k`.
pub fn success_sweep(sweep: &SuccessSweep, cfg: &SolverConfig, exec: Execution) -> Result<SweepResult> {
    let ks = sweep.sparsities()?;
    let plan = TrialPlan {
        algorithms: sweep.algorithms.clone(),
        m: sweep.m,
        n: sweep.n,
        k: 0,
        noise_level: sweep.noise_level,
        trials: sweep.trials,
        master_seed: sweep.master_seed,
    };
    let keys: Vec<(usize, usize)> = ks
        .iter()
        .flat_map(|&k| (0..sweep.trials).map(move |t| (k, t)))
        .collect();
    let per_key = paired_records(&plan, &keys, cfg, exec)?;

    let mut rows = Vec::new();
    for (a, _) in sweep.algorithms.iter().enumerate() {
        for (ki, _) in ks.iter().enumerate() {
            let cell: Vec<TrialRecord> = per_key[ki * sweep.trials..(ki + 1) * sweep.trials]
                .iter()
                .map(|recs| recs[a].clone())
                .collect();
            rows.push(aggregate(&cell, sweep.master_seed, sweep.timing)?);
        }
    }
    Ok(SweepResult { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeSweep {
    pub algorithms: Vec<Algorithm>,
    pub m: usize,
    pub n_list: Vec<usize>,
    /// Oversampling ratios `β = k/m`, each in `(0, 0.5]`.
    pub betas: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
}

/// Default ratios `0.05, 0.07, …, 0.15`.
pub fn default_betas() -> Vec<f64> {
    (0..6).map(|i| 0.05 + 0.02 * i as f64).collect()
}

/// Mean wall time per recovery for `k = round(β·m)`. Trials run one at a time
/// so that they do not compete for cores.
pub fn runtime_sweep(sweep: &RuntimeSweep, cfg: &SolverConfig) -> Result<SweepResult> {
    ensure!(!sweep.n_list.is_empty() && !sweep.betas.is_empty(), "runtime sweep needs n values and ratios");
    let mut rows = Vec::new();
    for &n in &sweep.n_list {
        for &beta in &sweep.betas {
            ensure!(beta > 0.0 && beta <= 0.5, "oversampling ratio must lie in (0, 0.5], got {beta}");
            let k = ((beta * sweep.m as f64).round() as usize).max(1);
            let plan = TrialPlan {
                algorithms: sweep.algorithms.clone(),
                m: sweep.m,
                n,
                k,
                noise_level: 0.0,
                trials: sweep.trials,
                master_seed: sweep.master_seed,
            };
            let records = run_paired_trials(&plan, cfg, Execution::Sequential)?;
            for algo in &sweep.algorithms {
                let cell: Vec<TrialRecord> = records.iter().filter(|r| r.algorithm == *algo).cloned().collect();
                rows.push(aggregate(&cell, sweep.master_seed, true)?);
            }
        }
    }
    Ok(SweepResult { rows })
}

/// Mean of `wall_time / iterations` over records with at least one iteration.
pub fn mean_time_per_iteration_ms(records: &[TrialRecord]) -> Option<f64> {
    let per: Vec<f64> = records
        .iter()
        .filter(|r| r.iterations > 0)
        .map(|r| r.wall_time_ms / r.iterations as f64)
        .collect();
    (!per.is_empty()).then(|| per.iter().sum::<f64>() / per.len() as f64)
}

impl SweepResult {
    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        ensure!(!self.rows.is_empty(), "refusing to write an empty sweep");
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| NtkError::contract(e.to_string()))?;
        }
        w.into_inner().map_err(|e| NtkError::contract(e.to_string()))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<SweepResult> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header = r.headers().map_err(|e| csv_err(path, e))?;
        if header.iter().collect::<Vec<_>>().join(",") != SWEEP_CSV_HEADER {
            return Err(NtkError::format(path, format!("expected header `{SWEEP_CSV_HEADER}`")));
        }
        let rows = r
            .deserialize::<SweepRow>()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| csv_err(path, e))?;
        Ok(SweepResult { rows })
    }

    /// Algorithms in first-appearance order.
    pub fn algorithms(&self) -> Vec<Algorithm> {
        let mut out = Vec::new();
        for row in &self.rows {
            if !out.contains(&row.algorithm) {
                out.push(row.algorithm);
            }
        }
        out
    }
}

/// Writes the CSV and, if asked, an SVG chart of success rate against `k`.
pub fn render_report(sweep: &SweepResult, out_csv: impl AsRef<Path>, out_svg: Option<&Path>) -> Result<()> {
    let out_csv = out_csv.as_ref();
    let bytes = sweep.to_csv_bytes()?;
    fs::write(out_csv, bytes).map_err(|e| NtkError::io(out_csv, e))?;
    if let Some(svg) = out_svg {
        write_svg(sweep, svg)?;
    }
    Ok(())
}

pub fn write_svg(sweep: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render_svg(sweep)?;
    fs::write(path, text).map_err(|e| NtkError::io(path, e))
}

const PALETTE: [&str; 9] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf",
];

/// Line chart on an 800×600 canvas, one polyline per algorithm.
pub fn render_svg(sweep: &SweepResult) -> Result<String> {
    ensure!(!sweep.rows.is_empty(), "refusing to plot an empty sweep");
    let (left, right, top, bottom) = (70.0, 650.0, 40.0, 540.0);
    let k_lo = sweep.rows.iter().map(|r| r.k).min().unwrap_or(0) as f64;
    let k_hi = sweep.rows.iter().map(|r| r.k).max().unwrap_or(1) as f64;
    let span = if k_hi > k_lo { k_hi - k_lo } else { 1.0 };
    let px = |k: usize| left + (k as f64 - k_lo) / span * (right - left);
    let py = |rate: f64| bottom - rate * (bottom - top);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 800 600" width="800" height="600" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="800" height="600" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" stroke="black" fill="none"/>"#
    );
    for i in 0..=4 {
        let rate = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{rate}</text>"#,
            left - 6.0,
            py(rate) + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left, bottom + 18.0, k_lo);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, right, bottom + 18.0, k_hi);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">sparsity k</text>"#,
        (left + right) / 2.0,
        bottom + 40.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" transform="rotate(-90 20 {})" text-anchor="middle">success rate</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0
    );

    for (i, algo) in sweep.algorithms().into_iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<(usize, f64)> = sweep
            .rows
            .iter()
            .filter(|r| r.algorithm == algo)
            .map(|r| (r.k, r.success_rate))
            .collect();
        pts.sort_by_key(|p| p.0);
        let coords: Vec<String> = pts.iter().map(|&(k, r)| format!("{:.2},{:.2}", px(k), py(r))).collect();
        let _ = writeln!(
            s,
            r#"<polyline data-algorithm="{algo}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        let ly = top + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="670" y1="{ly}" x2="700" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="706" y="{}">{algo}</text>"#,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
