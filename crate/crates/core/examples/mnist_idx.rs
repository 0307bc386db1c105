//! Binary classification from IDX files (MNIST layout). With no arguments a
//! synthetic stroke fixture is written and used instead.
//!
//!     cargo run --release --example mnist_idx [images.idx labels.idx]

use std::path::PathBuf;

use genbound::bounds::trajectory_inputs;
use genbound::datagen::{load_idx, split, write_idx};
use genbound::experiment::idx_fixture;
use genbound::netcore::NetworkSpec;
use genbound::optim::{train, Algorithm, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (images, labels) = if args.len() == 2 {
        (PathBuf::from(&args[0]), PathBuf::from(&args[1]))
    } else {
        let dir = std::env::temp_dir().join("genbound_idx");
        std::fs::create_dir_all(&dir).unwrap();
        let (i, l) = (dir.join("images.idx"), dir.join("labels.idx"));
        write_idx(&idx_fixture(600, 3), &i, &l).unwrap();
        println!("using synthetic fixture in {}", dir.display());
        (i, l)
    };
    let ds = load_idx(&images, &labels, [0, 1], 0.25).expect("idx");
    let (tr, te) = split(&ds, 0.8, 1).unwrap();
    println!("{} train / {} test images of dimension {}", tr.len(), te.len(), tr.dim());

    let spec = NetworkSpec::fnn(tr.dim(), &[64, 64, 64], 0.0).unwrap();
    let cfg = TrainConfig {
        algorithm: Algorithm::Sgd,
        eta: 0.5,
        alpha: 1.0,
        t0: 200,
        batch: 32,
        total_steps: 600,
        kappa: 6.0,
        ..Default::default()
    };
    let traj = train(&spec, &tr, Some(&te), &cfg).expect("train");
    let inputs = trajectory_inputs(&traj, &spec, cfg.lambda, 0.05, tr.len(), Some(1.0)).unwrap();
    for e in traj.entries.iter().step_by(100) {
        println!(
            "t={:>4} train {:.5} test {:.5} CL {:.4} bound {:.4}",
            e.t,
            e.loss,
            e.test_loss.unwrap(),
            e.cl,
            inputs.bound(e.cl)
        );
    }
}
