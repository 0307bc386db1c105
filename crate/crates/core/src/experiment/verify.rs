//! Verification suites over `propcheck`, with their default sizes.

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::psi;
use crate::datagen::synth_regression;
use crate::netcore::{init_gaussian, layer_norms, NetworkSpec};
use crate::optim::{default_c_f, max_feasible_eta, train_from, Algorithm, TrainConfig};
use crate::propcheck::{
    check_gradient_fd, check_homogeneity_perturbed, check_homogeneity_random, check_loss_decomposition_random,
    check_norm_dynamics, check_value_grad_bounds_random, init_concentration_q, mc_rademacher_lower,
    rademacher_brute_force, random_input, rank_one_witness, trial_rng, CheckOutcome, FD_STEP,
};

use super::io::write_json;
use super::{with_pool, ExpError};

pub const SUITES: [&str; 9] = [
    "homogeneity",
    "gradient",
    "value_grad",
    "init",
    "norm_dynamics",
    "rademacher",
    "loss_decomposition",
    "psi",
    "all",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub suite: String,
    pub inject_bug: bool,
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

fn failed(name: &str, err: impl std::fmt::Display) -> CheckOutcome {
    let mut o = CheckOutcome::new(format!("{name}: {err}"), 0, f64::NAN, 0.0);
    o.passed = false;
    o
}

fn psi_checks() -> Vec<CheckOutcome> {
    let mut upper = f64::NEG_INFINITY;
    let mut peak: f64 = 0.0;
    for c_y in [0.1, 0.25, 0.5, 1.0] {
        let cap = c_y * c_y / 4.0;
        // Ln over [0, 2 C_y^2]
        for i in 0..10_000 {
            let ln = 2.0 * c_y * c_y * i as f64 / 9_999.0;
            upper = upper.max((psi(ln, c_y) - cap) / (1.0 + cap));
        }
        peak = peak.max((psi(c_y * c_y / 8.0, c_y) - cap).abs());
    }
    vec![CheckOutcome::new("psi_upper", 40_000, upper, 0.0), CheckOutcome::new("psi_peak", 4, peak, 1e-12)]
}

fn norm_dynamics_checks(seed: u64) -> Vec<CheckOutcome> {
    let run = |algorithm: Algorithm, total_steps: usize| -> Result<CheckOutcome, String> {
        let spec = NetworkSpec::fnn(3, &[64], 0.5).map_err(|e| e.to_string())?;
        let data = synth_regression(200, seed).map_err(|e| e.to_string())?;
        let base = TrainConfig {
            algorithm,
            alpha: 1.0,
            t0: 1,
            lambda: 0.5,
            kappa: 1.0,
            total_steps,
            seed,
            ..Default::default()
        };
        let init = init_gaussian(&spec, base.kappa, seed);
        let c_f = default_c_f(&spec, &init, &data).map_err(|e| e.to_string())?;
        let eta = max_feasible_eta(&layer_norms(&init), &spec, &base, c_f, data.c_y()).map_err(|e| e.to_string())?;
        let cfg = TrainConfig { eta, ..base };
        let traj = train_from(&spec, init, &data, None, &cfg).map_err(|e| e.to_string())?;
        check_norm_dynamics(&traj, cfg.lambda).map_err(|e| e.to_string())
    };
    [(Algorithm::Gd, 300), (Algorithm::Gf, 10)]
        .into_iter()
        .map(|(a, t)| run(a, t).unwrap_or_else(|e| failed("norm_dynamics", e)))
        .collect()
}

fn rademacher_checks(seed: u64) -> Vec<CheckOutcome> {
    let specs = [
        NetworkSpec::fnn(4, &[8], 0.0).expect("fnn"),
        // d = 4 with unit kernels keeps the conv width at 4
        NetworkSpec::new(4, &[1], &[8], 0.0).expect("cnn"),
    ];
    let mut out = Vec::new();
    for (k, spec) in specs.iter().enumerate() {
        let mut worst = f64::NEG_INFINITY;
        let mut count = 0;
        for j in 0..20 {
            let mut rng = trial_rng(seed, 1000 * k + j);
            let caps: Vec<f64> = (0..spec.num_layers()).map(|_| rng.random_range(0.1..3.0)).collect();
            let mut xs = Array2::zeros((8, 4));
            for r in 0..8 {
                xs.row_mut(r).assign(&ndarray::ArrayView1::from(&random_input(4, &mut rng)));
            }
            match mc_rademacher_lower(spec, &caps, xs.view(), 200, 200, rng.random()) {
                Ok((est, upper)) => worst = worst.max((est - upper) / (1.0 + upper.abs())),
                Err(_) => worst = f64::NAN,
            }
            count += 1;
        }
        let name = if k == 0 { "rademacher_fnn" } else { "rademacher_cnn" };
        out.push(CheckOutcome::new(name, count, worst, 0.0));
    }
    out.push(match rademacher_brute_force([0.3, -0.8], [1.5, 0.7], 201) {
        Ok((est, upper)) => CheckOutcome::new("rademacher_brute_force", 1, (est - upper) / (1.0 + upper), 0.0),
        Err(e) => failed("rademacher_brute_force", e),
    });
    out
}

fn suite_checks(name: &str, seed: u64) -> Vec<CheckOutcome> {
    match name {
        "homogeneity" => vec![check_homogeneity_random(false, 1000, seed), check_homogeneity_random(true, 1000, seed)],
        "gradient" => vec![check_gradient_fd(false, 100, seed, FD_STEP), check_gradient_fd(true, 100, seed, FD_STEP)],
        "value_grad" => vec![
            check_value_grad_bounds_random(false, 1000, seed),
            check_value_grad_bounds_random(true, 1000, seed),
            rank_one_witness(5, 16, 0.5, seed).unwrap_or_else(|e| failed("rank_one_equality", e)),
        ],
        "init" => [0.1, 0.01]
            .iter()
            .map(|&d| {
                let mut o = init_concentration_q(&[16, 256, 4096], 1.0, d, 10_000, seed);
                o.name = format!("{} delta={d}", o.name);
                o
            })
            .collect(),
        "norm_dynamics" => norm_dynamics_checks(seed),
        "rademacher" => rademacher_checks(seed),
        "loss_decomposition" => vec![check_loss_decomposition_random(1000, seed)],
        "psi" => psi_checks(),
        _ => unreachable!("suite names are checked by the caller"),
    }
}

/// Runs one suite (or `all`). `inject_bug` appends a homogeneity check
/// with one gradient entry shifted by 1e-3, which must fail.
pub fn run_suite(name: &str, seed: u64, inject_bug: bool) -> Result<Vec<CheckOutcome>, ExpError> {
    if !SUITES.contains(&name) {
        return Err(ExpError::Usage(format!("unknown suite {name:?}; expected one of {}", SUITES.join(", "))));
    }
    let names: Vec<&str> = if name == "all" { SUITES[..SUITES.len() - 1].to_vec() } else { vec![name] };
    Ok(with_pool(|| {
        let mut out: Vec<CheckOutcome> = names.iter().flat_map(|n| suite_checks(n, seed)).collect();
        if inject_bug {
            let spec = NetworkSpec::fnn(3, &[8, 8], 0.5).expect("fnn");
            let mut o = check_homogeneity_perturbed(&spec, 100, seed, 1e-3);
            o.name = "homogeneity_injected_bug".into();
            out.push(o);
        }
        out
    }))
}

/// Runs the suite and writes `verification.json` into `out`.
pub fn cmd_verify(suite: &str, seed: u64, inject_bug: bool, out: &Path) -> Result<VerificationReport, ExpError> {
    let checks = run_suite(suite, seed, inject_bug)?;
    let passed = checks.iter().all(|c| c.passed);
    let report = VerificationReport { seed, suite: suite.to_string(), inject_bug, checks, passed };
    std::fs::create_dir_all(out).map_err(|e| ExpError::io(out, e))?;
    write_json(&out.join("verification.json"), &report)?;
    Ok(report)
}
