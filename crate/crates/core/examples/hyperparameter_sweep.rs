//! Final bound across network widths and base learning rates.

use genbound::experiment::{run_experiment, EtaSetting, ExperimentConfig};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/sweep.json");
    let base = ExperimentConfig::load(path.as_ref()).expect("config");
    let mut all = Vec::new();
    println!("{:>6} {:>6} {:>10} {:>10} {:>9}", "width", "eta", "max eta", "CL", "bound");
    for width in [64, 256, 1024] {
        for eta in [0.05, 0.1, 0.2] {
            let mut cfg = base.clone();
            cfg.network.fc_widths = vec![width];
            cfg.train.eta = EtaSetting::Value(eta);
            let run = run_experiment(&cfg).expect("run");
            println!(
                "{width:>6} {eta:>6} {:>10.4} {:>10.5} {:>9.5}",
                run.summary.max_feasible_eta.unwrap_or(f64::NAN),
                run.summary.final_cl,
                run.report.bound
            );
            all.push(run.report.bound);
        }
    }
    let (lo, hi) = all.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    println!("spread max/min = {:.4}", hi / lo);
}
