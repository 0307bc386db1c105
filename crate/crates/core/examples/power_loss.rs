//! Training with the loss |f - y|^k / k for k = 2, 3, 4 and the matching
//! cumulative loss.

use genbound::bounds::{cl_power, psi_power};
use genbound::datagen::synth_regression;
use genbound::netcore::NetworkSpec;
use genbound::optim::{train, TrainConfig};

fn main() {
    let spec = NetworkSpec::fnn(3, &[64], 0.5).unwrap();
    let data = synth_regression(300, 2).unwrap();
    let c_y = data.c_y();
    for k in [2u32, 3, 4] {
        let cfg = TrainConfig { loss_power: k, eta: 0.5, total_steps: 300, ..Default::default() };
        let traj = train(&spec, &data, None, &cfg).unwrap();
        let cl = cl_power(&traj, k, c_y).unwrap();
        let last = traj.last().unwrap();
        println!(
            "k={k}: loss {:.3e} -> {:.3e}, psi_k at end {:.4e}, CL {:.5}",
            traj.entries[0].loss,
            last.loss,
            psi_power(last.loss, k, c_y),
            cl.total
        );
    }
}
