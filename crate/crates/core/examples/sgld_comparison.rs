//! SGLD at several inverse temperatures next to GD: the stability bound
//! grows with beta and is infinite for GD, the CL-based bound stays finite.
//!
//!     cargo run --release --example sgld_comparison [out_dir]

use std::path::PathBuf;

use genbound::experiment::{cmd_compare, ExperimentConfig};

fn main() {
    let cfg_path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/sgld_compare.json");
    let cfg = ExperimentConfig::load(cfg_path.as_ref()).expect("config");
    let out =
        std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("genbound_compare"));
    let rows = cmd_compare(&cfg, &out).expect("compare");
    println!("{:<6} {:>8} {:>12} {:>12} {:>14}", "alg", "beta", "CL", "CL bound", "SGLD bound");
    for r in rows {
        println!("{:<6?} {:>8} {:>12.6} {:>12.6} {:>14.6}", r.algorithm, r.beta, r.cl, r.cl_bound, r.sgld_bound);
    }
    println!("table written to {}", out.join("compare.csv").display());
}
