//! Pilot calibration of α and λ for NTP at 100×400.
//!
//! Runs a noiseless success sweep over k = 5, 10, …, 60 for each
//! α ∈ {1, 2, 5, 10} and λ ∈ {1, 1.5, 2}, and prints the success rate at
//! every k plus the curve area (sum of rates times the k step).
//!
//!     cargo run --release -p ntk-core --example calibrate -- [trials] [seed]

use ntk_core::exec::Execution;
use ntk_core::harness::{success_sweep, Algorithm, SuccessSweep};
use ntk_core::solver::{AlphaPolicy, SolverConfig};

fn main() -> ntk_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials: usize = args.next().map_or(100, |s| s.parse().expect("trials"));
    let seed: u64 = args.next().map_or(2024, |s| s.parse().expect("seed"));
    let exec = Execution::from_env()?;

    let sweep = SuccessSweep {
        algorithms: vec![Algorithm::Ntp],
        m: 100,
        n: 400,
        k_min: 5,
        k_max: 60,
        k_step: 5,
        trials,
        noise_level: 0.0,
        master_seed: seed,
        timing: false,
    };
    println!("alpha lambda area rates(k=5..60)");
    let mut best: Option<(f64, f64, f64)> = None;
    for alpha in [1.0, 2.0, 5.0, 10.0] {
        for lambda in [1.0, 1.5, 2.0] {
            let cfg = SolverConfig {
                steplength: lambda,
                alpha_policy: AlphaPolicy::Fixed(alpha),
                ..SolverConfig::benchmark()
            };
            let res = success_sweep(&sweep, &cfg, exec)?;
            let rates: Vec<f64> = res.rows.iter().map(|r| r.success_rate).collect();
            let area: f64 = rates.iter().sum::<f64>() * sweep.k_step as f64;
            println!(
                "{alpha:>5} {lambda:>6} {area:>6.2} {}",
                rates.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(" ")
            );
            if best.is_none_or(|(_, _, a)| area > a) {
                best = Some((alpha, lambda, area));
            }
        }
    }
    if let Some((alpha, lambda, area)) = best {
        println!("largest area: alpha = {alpha}, lambda = {lambda} (area {area:.2})");
    }
    Ok(())
}
