//! Backprop against central finite differences, away from ReLU kinks.

use genbound::netcore::{init_gaussian, NetworkSpec};
use genbound::propcheck::{check_gradient_fd, finite_diff_grad, max_relative_error, FD_STEP};

fn main() {
    let spec = NetworkSpec::new(11, &[3], &[6], 0.5).expect("cnn");
    let p = init_gaussian(&spec, 1.5, 4);
    let x: Vec<f64> = (0..11).map(|i| ((i as f64) * 0.7).sin() / 4.0).collect();
    let trace = spec.forward(&p, &x).unwrap();
    let (_, g) = spec.grad_f(&p, &x).unwrap();
    let fd = finite_diff_grad(&spec, &p, &x, FD_STEP).unwrap();
    println!(
        "CNN d=11 s=3 -> 6 -> 1: min |pre-activation| {:.2e}, max relative error {:.2e}",
        trace.min_abs_preactivation(),
        max_relative_error(&g, &fd, 1e-8)
    );
    for cnn in [false, true] {
        let o = check_gradient_fd(cnn, 100, 7, FD_STEP);
        println!(
            "{}: {} instances, max relative error {:.2e} (tol {:e})",
            o.name, o.instances, o.max_violation, o.tolerance
        );
    }
}
