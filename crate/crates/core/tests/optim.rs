use genbound::bounds::psi;
use genbound::datagen::{synth_regression, Dataset, Split};
use genbound::netcore::{init_gaussian, layer_norms, NetworkSpec, Parameters};
use genbound::optim::{
    default_c_f, gd_step, gf_integrate, lr_schedule, max_feasible_eta, sample_batch, sgd_step, sgld_step, train,
    train_from, Algorithm, Sampler, TrainConfig, TrainError,
};
use genbound::propcheck::check_norm_dynamics;
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `f = a relu(w x)` with `x = 1`, `y = 0`.
fn scalar_model(theta: f64) -> (NetworkSpec, Parameters, Dataset) {
    let spec = NetworkSpec::fnn(1, &[1], 0.0).unwrap();
    let p = Parameters::from_layers(&spec, vec![vec![theta], vec![theta]]).unwrap();
    let ds = Dataset::new(array![[1.0]], array![0.0], 1.0, Split::Train).unwrap();
    (spec, p, ds)
}

fn small_regression() -> (NetworkSpec, Dataset) {
    (NetworkSpec::fnn(3, &[16], 0.5).unwrap(), synth_regression(40, 3).unwrap())
}

#[test]
fn schedule_examples() {
    for t0 in [1, 2, 7, 120] {
        assert_eq!(lr_schedule(0, 0.3, 0.8, t0), 0.3);
    }
    assert_eq!(lr_schedule(120, 0.2, 1.0, 120), 0.1);
    assert_eq!(lr_schedule(119, 0.2, 1.0, 120), 0.2);
    assert_eq!(lr_schedule(5, 0.7, 0.8, 2), 0.7 / 3f64.powf(0.8));
}

#[test]
fn gd_step_at_zero_gradient_is_identity() {
    let (spec, _, ds) = scalar_model(0.0);
    // dead unit: relu'(0) = 0 and f = 0 = y
    let p = Parameters::from_layers(&spec, vec![vec![-1.0], vec![2.0]]).unwrap();
    let cfg = TrainConfig::default();
    assert_eq!(gd_step(&spec, &p, &ds, 0, &cfg).unwrap(), p);
}

#[test]
fn gd_step_on_scalar_model_by_hand() {
    let (spec, p, ds) = scalar_model(1.0);
    // d/da (a w)^2/2 = a w^2 = 1, same for w
    let cfg = TrainConfig { eta: 0.1, ..Default::default() };
    let next = gd_step(&spec, &p, &ds, 0, &cfg).unwrap();
    assert!((next.layer(0)[0] - 0.9).abs() < 1e-15);
    assert!((next.layer(1)[0] - 0.9).abs() < 1e-15);
}

#[test]
fn all_indices_sampler_makes_sgd_equal_gd() {
    let (spec, ds) = small_regression();
    let p = init_gaussian(&spec, 1.0, 1);
    let cfg = TrainConfig { algorithm: Algorithm::Sgd, eta: 0.3, sampler: Sampler::AllIndices, ..Default::default() };
    let gd = gd_step(&spec, &p, &ds, 3, &cfg).unwrap();
    let (sgd, idx) = sgd_step(&spec, &p, &ds, 3, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(idx, (0..ds.len()).collect::<Vec<_>>());
    for (a, b) in gd.concat().iter().zip(sgd.concat()) {
        assert!((a - b).abs() <= 1e-15);
    }
}

#[test]
fn single_sample_sgd_is_gd() {
    let (spec, p, ds) = scalar_model(0.7);
    let cfg = TrainConfig { algorithm: Algorithm::Sgd, batch: 1, eta: 0.05, ..Default::default() };
    let (sgd, idx) = sgd_step(&spec, &p, &ds, 0, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(idx, vec![0]);
    assert_eq!(sgd, gd_step(&spec, &p, &ds, 0, &cfg).unwrap());
}

#[test]
fn sampled_tuples_are_reproducible() {
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..50).map(|_| sample_batch(17, 4, Sampler::WithReplacement, &mut rng)).collect::<Vec<_>>()
    };
    assert_eq!(draw(5), draw(5));
    assert_ne!(draw(5), draw(6));
}

#[test]
fn index_frequencies_match_multinomial() {
    let (n, b, draws) = (10usize, 3usize, 100_000usize);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut counts = vec![0usize; n];
    for _ in 0..draws {
        for i in sample_batch(n, b, Sampler::WithReplacement, &mut rng) {
            counts[i] += 1;
        }
    }
    let trials = (b * draws) as f64;
    let p = 1.0 / n as f64;
    let sd = (trials * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - trials * p).abs() <= 3.0 * sd, "count {c}");
    }
}

#[test]
fn gf_zero_duration_is_identity() {
    let (spec, ds) = small_regression();
    let p = init_gaussian(&spec, 1.0, 2);
    let traj = gf_integrate(&spec, p.clone(), &ds, None, 0.0, 1e-3, &TrainConfig::default()).unwrap();
    assert_eq!(traj.entries.len(), 1);
    assert_eq!(traj.final_params, p);
}

#[test]
fn gf_matches_closed_form_ode() {
    // symmetric a = w = theta: d theta/dt = -theta^3
    let theta0: f64 = 0.8;
    let (spec, p, ds) = scalar_model(theta0);
    let traj = gf_integrate(&spec, p, &ds, None, 1.0, 1e-4, &TrainConfig::default()).unwrap();
    let exact = theta0 / (1.0 + 2.0 * theta0 * theta0).sqrt();
    let got = traj.final_params.layer(0)[0];
    assert!(((got - exact) / exact).abs() < 1e-3, "{got} vs {exact}");
    assert!((traj.last().unwrap().time - 1.0).abs() < 1e-12);
}

#[test]
fn gf_is_first_order_in_the_substep() {
    let (spec, ds) = small_regression();
    let p = init_gaussian(&spec, 1.5, 7);
    let run = |h: f64| {
        let t = gf_integrate(&spec, p.clone(), &ds, None, 2.0, h, &TrainConfig::default()).unwrap();
        t.final_params.sq_norms().iter().sum::<f64>()
    };
    let (a, b, c) = (run(0.02), run(0.01), run(0.005));
    let ratio = (a - b).abs() / (b - c).abs();
    assert!((1.6..2.4).contains(&ratio), "refinement ratio {ratio}");
}

#[test]
fn sgld_without_noise_is_gd_step() {
    let (spec, ds) = small_regression();
    let p = init_gaussian(&spec, 1.0, 1);
    for beta in [None, Some(f64::INFINITY)] {
        let cfg = TrainConfig { algorithm: Algorithm::Sgld, beta, eta: 0.2, ..Default::default() };
        let s = sgld_step(&spec, &p, &ds, 2, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s, gd_step(&spec, &p, &ds, 2, &cfg).unwrap());
    }
}

#[test]
fn sgld_noise_variance() {
    // 3 -> 400 -> 400 -> 1: about 1.6e5 coordinates
    let spec = NetworkSpec::fnn(3, &[400, 400], 0.0).unwrap();
    let ds = synth_regression(5, 0).unwrap();
    let p = init_gaussian(&spec, 1.0, 0);
    let cfg = TrainConfig { algorithm: Algorithm::Sgld, beta: Some(50.0), eta: 0.3, alpha: 1.0, ..Default::default() };
    let t = 4;
    let noisy = sgld_step(&spec, &p, &ds, t, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let clean = gd_step(&spec, &p, &ds, t, &cfg).unwrap();
    let noise: Vec<f64> = noisy.concat().iter().zip(clean.concat()).map(|(a, b)| a - b).collect();
    let n = noise.len() as f64;
    let var = noise.iter().map(|v| v * v).sum::<f64>() / n;
    let want = 2.0 * cfg.eta_at(t) / 50.0;
    // variance of a chi^2 mean with known zero mean: sd = want sqrt(2/n)
    assert!((var - want).abs() <= 3.0 * want * (2.0 / n).sqrt(), "{var} vs {want}");
    let again = sgld_step(&spec, &p, &ds, t, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(noisy, again);
}

fn feasible(spec: &NetworkSpec, norms: &[f64], alpha: f64, t0: u64, c_f: f64, c_y: f64) -> f64 {
    let cfg = TrainConfig { alpha, t0, ..Default::default() };
    max_feasible_eta(norms, spec, &cfg, c_f, c_y).unwrap()
}

#[test]
fn feasible_eta_depth_one_first_and_third_terms_ignore_norms() {
    let spec = NetworkSpec::fnn(3, &[16], 0.5).unwrap();
    // large norms so the norm-squared term never binds
    let a = feasible(&spec, &[30.0, 40.0], 1.0, 1, 0.3, 0.5);
    let b = feasible(&spec, &[60.0, 80.0], 1.0, 1, 0.3, 0.5);
    assert_eq!(a, b);
    // L = 1, eps = 1/2: lead = lambda m^p / (C_f + C_y), third = lead sqrt(eps) / (1 + 3 lambda^2)^(1/2)
    let lead = 0.5 * 4.0 / 0.8;
    let want = lead * 0.5f64.sqrt() / (1.75f64).sqrt();
    assert!((a - want).abs() < 1e-12 * want, "{a} vs {want}");
}

#[test]
fn feasible_eta_decreases_in_c_f_and_t0() {
    let spec = NetworkSpec::fnn(3, &[8, 8], 0.5).unwrap();
    let norms = layer_norms(&init_gaussian(&spec, 1.0, 0));
    for alpha in [0.8, 0.9, 1.0] {
        let mut prev = f64::INFINITY;
        for c_f in [0.01, 0.1, 0.5, 1.0, 5.0] {
            let v = feasible(&spec, &norms, alpha, 1, c_f, 0.5);
            assert!(v <= prev, "C_f {c_f}");
            prev = v;
        }
        let mut prev = f64::INFINITY;
        for t0 in [1, 2, 5, 20, 100] {
            let v = feasible(&spec, &norms, alpha, t0, 0.2, 0.5);
            assert!(v <= prev, "T0 {t0}");
            prev = v;
        }
    }
}

#[test]
fn feasible_eta_for_toy_setup_is_finite_positive() {
    let spec = NetworkSpec::fnn(3, &[256, 256], 0.0).unwrap().with_output_scale(4.0).unwrap();
    let data = synth_regression(500, 0).unwrap();
    let init = init_gaussian(&spec, 4.0, 0);
    let c_f = default_c_f(&spec, &init, &data).unwrap();
    let v = feasible(&spec, &layer_norms(&init), 1.0, 1, c_f, data.c_y());
    assert!(v.is_finite() && v > 0.0);
}

#[test]
fn feasible_eta_rejects_alpha_outside_range() {
    let spec = NetworkSpec::fnn(3, &[8, 8], 0.0).unwrap();
    let cfg = TrainConfig { alpha: 0.7, ..Default::default() };
    assert!(max_feasible_eta(&[1.0; 3], &spec, &cfg, 0.1, 0.5).is_err());
}

#[test]
fn zero_steps_logs_only_the_start() {
    let (spec, ds) = small_regression();
    let cfg = TrainConfig { total_steps: 0, ..Default::default() };
    let t = train(&spec, &ds, None, &cfg).unwrap();
    assert_eq!(t.entries.len(), 1);
    assert_eq!(t.final_cl(), 0.0);
}

#[test]
fn sgd_regression_cl_grows_while_loss_is_small() {
    let spec = NetworkSpec::fnn(3, &[64, 64], 0.0).unwrap().with_output_scale(4.0).unwrap();
    let data = synth_regression(400, 1).unwrap();
    let cfg = TrainConfig {
        algorithm: Algorithm::Sgd,
        eta: 0.1,
        alpha: 0.67,
        batch: 100,
        kappa: 4.0,
        total_steps: 200,
        ..Default::default()
    };
    let t = train(&spec, &data, None, &cfg).unwrap();
    for w in t.entries.windows(2) {
        if (2.0 * w[0].loss).sqrt() < data.c_y() {
            assert!(w[1].cl >= w[0].cl);
        }
    }
}

#[test]
fn equal_seeds_give_identical_trajectories() {
    let (spec, ds) = small_regression();
    for algorithm in [Algorithm::Gd, Algorithm::Sgd, Algorithm::Sgld, Algorithm::Gf] {
        let cfg =
            TrainConfig { algorithm, beta: Some(100.0), batch: 5, total_steps: 20, seed: 4, ..Default::default() };
        assert_eq!(train(&spec, &ds, None, &cfg).unwrap(), train(&spec, &ds, None, &cfg).unwrap());
    }
}

#[test]
fn noiseless_sgld_trajectory_equals_gd() {
    let (spec, ds) = small_regression();
    let gd = train(&spec, &ds, None, &TrainConfig { total_steps: 30, ..Default::default() }).unwrap();
    let cfg = TrainConfig { algorithm: Algorithm::Sgld, beta: None, total_steps: 30, ..Default::default() };
    let mut sgld = train(&spec, &ds, None, &cfg).unwrap();
    sgld.algorithm = Algorithm::Gd;
    assert_eq!(gd, sgld);
}

#[test]
fn divergence_aborts_with_partial_log() {
    let (spec, ds) = small_regression();
    let cfg = TrainConfig { eta: 1e4, alpha: 1.0, t0: 1000, kappa: 3.0, total_steps: 50, ..Default::default() };
    match train(&spec, &ds, None, &cfg) {
        Err(e @ TrainError::Diverged { .. }) => assert!(!e.partial().unwrap().entries.is_empty()),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn b_larger_than_n_is_allowed() {
    let (spec, ds) = small_regression();
    let cfg = TrainConfig { algorithm: Algorithm::Sgd, batch: 3 * ds.len(), total_steps: 3, ..Default::default() };
    assert!(train(&spec, &ds, None, &cfg).is_ok());
}

fn random_gd_setup(seed: u64) -> (NetworkSpec, Dataset, TrainConfig, Parameters) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use rand::Rng;
    let depth = rng.random_range(1..=2);
    let widths = vec![rng.random_range(4..=16); depth];
    let spec = NetworkSpec::fnn(3, &widths, 0.5).unwrap();
    let data = synth_regression(rng.random_range(10..40), rng.random()).unwrap();
    let base = TrainConfig {
        lambda: rng.random_range(0.1..0.55),
        kappa: rng.random_range(0.5..2.0),
        alpha: 1.0,
        total_steps: 40,
        seed,
        ..Default::default()
    };
    let init = init_gaussian(&spec, base.kappa, seed);
    let c_f = default_c_f(&spec, &init, &data).unwrap();
    let eta = max_feasible_eta(&layer_norms(&init), &spec, &base, c_f, data.c_y()).unwrap();
    (spec, data, TrainConfig { eta, ..base }, init)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn schedule_is_nonincreasing(eta in 1e-4f64..10.0, alpha in 0.01f64..=1.0, t0 in 1u64..50, t in 0usize..10_000) {
        prop_assert!(lr_schedule(t + 1, eta, alpha, t0) <= lr_schedule(t, eta, alpha, t0));
    }

    #[test]
    fn trajectory_record_invariants(seed in any::<u64>(), sgd in any::<bool>()) {
        let (spec, data, mut cfg, init) = random_gd_setup(seed);
        if sgd {
            cfg.algorithm = Algorithm::Sgd;
            cfg.batch = 4;
        }
        let t = train_from(&spec, init, &data, None, &cfg).unwrap();
        let mut acc = 0.0;
        for (i, e) in t.entries.iter().enumerate() {
            prop_assert_eq!(e.t, i);
            prop_assert_eq!(e.cl, acc);
            prop_assert!(e.sq_norms.iter().all(|&v| v >= 0.0));
            prop_assert_eq!(e.psi, psi(e.loss, data.c_y()));
            acc += 2.0 * e.eta * e.psi;
        }
    }

    #[test]
    fn gd_at_feasible_step_keeps_norm_dynamics(seed in any::<u64>()) {
        let (spec, data, cfg, init) = random_gd_setup(seed);
        let t = train_from(&spec, init, &data, None, &cfg).unwrap();
        let o = check_norm_dynamics(&t, cfg.lambda).unwrap();
        prop_assert!(o.passed, "{o:?}");
    }

    #[test]
    fn gf_substep_increment_band(seed in any::<u64>()) {
        let (spec, data, base, init) = random_gd_setup(seed);
        let cfg = TrainConfig { algorithm: Algorithm::Gf, total_steps: 2, ..base };
        let t = train_from(&spec, init, &data, None, &cfg).unwrap();
        let o = check_norm_dynamics(&t, cfg.lambda).unwrap();
        prop_assert!(o.passed, "{o:?}");
    }
}

#[test]
fn batch_matrix_shape_guard() {
    // inputs must match the network dimension
    let spec = NetworkSpec::fnn(2, &[4], 0.0).unwrap();
    let ds = Dataset::new(Array2::zeros((3, 3)), array![0.0, 0.0, 0.0], 1.0, Split::Train).unwrap();
    assert!(matches!(train(&spec, &ds, None, &TrainConfig::default()), Err(TrainError::Data(_))));
}
