//! Monte-Carlo lower estimate of the Rademacher complexity of a norm ball
//! next to the closed-form upper value.

use genbound::netcore::NetworkSpec;
use genbound::propcheck::{mc_rademacher_lower, rademacher_brute_force, random_input, trial_rng};
use ndarray::Array2;

fn main() {
    let mut rng = trial_rng(5, 0);
    let mut xs = Array2::zeros((8, 4));
    for r in 0..8 {
        xs.row_mut(r).assign(&ndarray::ArrayView1::from(&random_input(4, &mut rng)));
    }
    let nets = [
        ("FNN 4-8-1", NetworkSpec::fnn(4, &[8], 0.0).unwrap()),
        ("FNN 4-8-8-1", NetworkSpec::fnn(4, &[8, 8], 0.0).unwrap()),
        ("CNN 4 (s=1) -8-1", NetworkSpec::new(4, &[1], &[8], 0.0).unwrap()),
    ];
    for (name, spec) in &nets {
        for cap in [0.5, 1.0, 2.0] {
            let caps = vec![cap; spec.num_layers()];
            let (est, upper) = mc_rademacher_lower(spec, &caps, xs.view(), 200, 200, 9).unwrap();
            println!("{name:<18} Q={cap:<4} estimate {est:>9.5}  upper {upper:>9.4}  ratio {:.3}", est / upper);
        }
    }
    let (est, upper) = rademacher_brute_force([0.3, -0.8], [1.5, 0.7], 401).unwrap();
    println!("1-1-1 exhaustive: {est:.5} <= {upper:.5}");
}
