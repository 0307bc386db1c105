//! Largest base step size admitted by the per-layer norm control, across
//! depths, schedule exponents and restart periods.

use genbound::datagen::synth_regression;
use genbound::netcore::{init_gaussian, layer_norms, NetworkSpec};
use genbound::optim::{alpha_in_range, default_c_f, max_feasible_eta, TrainConfig};

fn main() {
    let data = synth_regression(500, 0).unwrap();
    for depth in 1..=3 {
        let spec = NetworkSpec::fnn(3, &vec![128; depth], 0.5).unwrap();
        let init = init_gaussian(&spec, 1.0, 1);
        let norms = layer_norms(&init);
        let c_f = default_c_f(&spec, &init, &data).unwrap();
        let lo = (depth as f64 + 1.0) / (depth as f64 + 2.0);
        println!("L={depth}: alpha range ({lo:.3}, 1], C_f = {c_f:.3e}");
        for alpha in [0.6, 0.8, 0.9, 0.95, 1.0] {
            for t0 in [1u64, 10] {
                let cfg = TrainConfig { alpha, t0, ..Default::default() };
                match max_feasible_eta(&norms, &spec, &cfg, c_f, data.c_y()) {
                    Ok(eta) => println!("  alpha {alpha:<4} T0 {t0:<3} max eta {eta:.4e}"),
                    Err(_) => {
                        assert!(!alpha_in_range(alpha, depth));
                        println!("  alpha {alpha:<4} T0 {t0:<3} outside range");
                    }
                }
            }
        }
    }
}
