//! Degree-one homogeneity per layer and degree-(L+1) homogeneity overall,
//! checked on a fixed FNN, a CNN, and random architectures. The last line
//! shows a corrupted gradient being caught.

use genbound::netcore::{init_gaussian, NetworkSpec};
use genbound::propcheck::{
    check_homogeneity, check_homogeneity_perturbed, check_homogeneity_random, homogeneity_residual,
};

fn main() {
    let fnn = NetworkSpec::fnn(4, &[32, 32, 16], 0.5).expect("fnn");
    let cnn = NetworkSpec::new(17, &[3, 3], &[8], 0.0).expect("cnn");

    let p = init_gaussian(&fnn, 1.0, 0);
    let x = [0.1, -0.4, 0.3, 0.2];
    let (f, g) = fnn.grad_f(&p, &x).unwrap();
    println!("FNN 4-32-32-16-1: f = {f:.6}");
    for (l, d) in p.layer_dots(&g).iter().enumerate() {
        println!("  <Theta_{}, df/dTheta_{}> = {d:.6}", l + 1, l + 1);
    }
    println!("  residual = {:e}", homogeneity_residual(&fnn, &p, &x, 0.0).unwrap());

    for (name, spec) in [("fnn", &fnn), ("cnn", &cnn)] {
        let o = check_homogeneity(spec, 500, 1);
        println!("{name}: {} trials, max residual {:e}, passed {}", o.instances, o.max_violation, o.passed);
    }
    for cnn in [false, true] {
        let o = check_homogeneity_random(cnn, 1000, 2);
        println!("{}: {} random nets, max residual {:e}, passed {}", o.name, o.instances, o.max_violation, o.passed);
    }
    let bad = check_homogeneity_perturbed(&fnn, 100, 3, 1e-3);
    println!("gradient entry shifted by 1e-3: max residual {:e}, passed {}", bad.max_violation, bad.passed);
}
