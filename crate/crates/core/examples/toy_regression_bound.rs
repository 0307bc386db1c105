//! Trains on the toy regression task from `configs/toy_regression_gd.json`
//! and prints the bound next to the measured generalization gap.
//!
//!     cargo run --release --example toy_regression_bound [config.json]

use std::path::PathBuf;

use genbound::experiment::{run_experiment, ExperimentConfig};

fn main() {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/toy_regression_gd.json")));
    let cfg = ExperimentConfig::load(&path).expect("config");
    let run = run_experiment(&cfg).expect("training run");
    println!("eta = {} (rule: {}), C_f = {:.4}", run.summary.eta, run.summary.eta_from_rule, run.summary.c_f);
    println!("{:>6} {:>10} {:>10} {:>10} {:>10} {:>8}", "t", "train", "test", "|gap|", "CL", "bound");
    let step = (run.rows.len() / 10).max(1);
    let last = run.rows.len() - 1;
    for r in run.rows.iter().enumerate().filter(|(i, _)| i % step == 0 || *i == last).map(|(_, r)| r) {
        let gap = r.ln_test.map_or(f64::NAN, |te| (te - r.ln_train).abs());
        println!(
            "{:>6} {:>10.6} {:>10.6} {:>10.2e} {:>10.5} {:>8.4}",
            r.t,
            r.ln_train,
            r.ln_test.unwrap_or(f64::NAN),
            gap,
            r.cl,
            r.bound_prefix
        );
    }
    let rep = &run.report;
    println!(
        "complexity {:.4} + confidence {:.4} = {:.4} (C = {:.3}, alpha in range: {:?})",
        rep.complexity_term, rep.confidence_term, rep.bound, rep.rademacher_constant, rep.alpha_in_range
    );
}
