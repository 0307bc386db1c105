//! Gradient flow (fine Euler) against GD from the same start: the
//! continuous CL integral and the discrete sum approach each other as the
//! GD step shrinks.

use genbound::bounds::{cl_continuous, trajectory_inputs};
use genbound::datagen::synth_regression;
use genbound::netcore::{init_gaussian, NetworkSpec};
use genbound::optim::{train_from, Algorithm, TrainConfig};

fn main() {
    let spec = NetworkSpec::fnn(3, &[64], 0.5).unwrap();
    let data = synth_regression(200, 1).unwrap();
    let init = init_gaussian(&spec, 1.0, 2);
    let horizon = 20.0;

    let gf_cfg = TrainConfig {
        algorithm: Algorithm::Gf,
        duration: Some(horizon),
        gf_substep: Some(0.005),
        ..Default::default()
    };
    let gf = train_from(&spec, init.clone(), &data, None, &gf_cfg).unwrap();
    let gf_cl = cl_continuous(&gf).unwrap();
    let gf_bound = trajectory_inputs(&gf, &spec, 0.5, 0.05, data.len(), None).unwrap().bound(gf_cl);
    println!("GF  h=0.005  CL = {gf_cl:.6}  bound = {gf_bound:.5}  final loss {:.3e}", gf.last().unwrap().loss);

    for eta in [0.4, 0.2, 0.1, 0.05] {
        let steps = (horizon / eta) as usize;
        // T0 beyond the horizon keeps the step constant
        let cfg = TrainConfig { eta, total_steps: steps, t0: steps as u64 + 1, ..Default::default() };
        let gd = train_from(&spec, init.clone(), &data, None, &cfg).unwrap();
        let bound = trajectory_inputs(&gd, &spec, 0.5, 0.05, data.len(), None).unwrap().bound(gd.final_cl());
        println!(
            "GD  eta={eta:<5} CL = {:.6}  bound = {bound:.5}  final loss {:.3e}",
            gd.final_cl(),
            gd.last().unwrap().loss
        );
    }
}
