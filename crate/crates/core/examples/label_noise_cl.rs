//! Cumulative loss against the fraction of resampled labels on the binary
//! toy task, averaged over three SGD seeds.

use genbound::experiment::{run_experiment, DataSource, ExperimentConfig};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/label_noise.json");
    let base = ExperimentConfig::load(path.as_ref()).expect("config");
    for frac in [0.0, 0.5, 1.0] {
        let mut cls = Vec::new();
        let mut bounds = Vec::new();
        for seed in 0..3 {
            let mut cfg = base.clone();
            cfg.train.seed = seed;
            if let DataSource::Classification { noise, .. } = &mut cfg.data {
                *noise = frac;
            }
            let run = run_experiment(&cfg).expect("run");
            cls.push(run.summary.final_cl);
            bounds.push(run.report.bound);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!("noise {frac:>4}: mean CL {:>8.4}  mean bound {:>7.4}  per seed {:?}", mean(&cls), mean(&bounds), cls);
    }
}
