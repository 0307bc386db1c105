//! Numerical checks of the network identities and inequalities the bound
//! relies on. Each check returns a [`CheckOutcome`]; violations are in
//! relative units `(lhs - rhs) / (1 + |rhs|)` unless noted.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{psi, rademacher_upper};
use crate::datagen::{Dataset, Split};
use crate::netcore::{dot, init_gaussian_with, layer_norms, NetError, NetworkSpec, Parameters};
use crate::optim::{Algorithm, TrajectoryRecord};

pub const HOMOGENEITY_TOL: f64 = 1e-9;
pub const PROP_BOUND_TOL: f64 = 1e-12;
pub const FD_TOL: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-4;
pub const KINK_MARGIN: f64 = 1e-6;
pub const NORM_DYNAMICS_TOL: f64 = 1e-9;
pub const DECOMPOSITION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub instances: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    pub fn new(name: impl Into<String>, instances: usize, max_violation: f64, tolerance: f64) -> Self {
        CheckOutcome {
            name: name.into(),
            instances,
            max_violation,
            tolerance,
            // NaN never passes
            passed: max_violation <= tolerance,
        }
    }

    /// Combines two runs of the same check.
    pub fn merge(self, other: CheckOutcome) -> CheckOutcome {
        let v = if self.max_violation.is_nan() || other.max_violation.is_nan() {
            f64::NAN
        } else {
            self.max_violation.max(other.max_violation)
        };
        CheckOutcome::new(self.name, self.instances + other.instances, v, self.tolerance.min(other.tolerance))
    }
}

fn rel(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs) / (1.0 + rhs.abs())
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Independent stream per trial.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    rng
}

/// Uniform direction with norm uniform in `[0, 1]`.
pub fn random_input<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let mut x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let n = dot(&x, &x).sqrt().max(f64::MIN_POSITIVE);
    let r: f64 = rng.random_range(0.0..=1.0);
    x.iter_mut().for_each(|v| *v *= r / n);
    x
}

/// FNN with `1..=max_depth` hidden layers of width `1..=max_width`.
pub fn random_fnn<R: Rng + ?Sized>(rng: &mut R, max_depth: usize, max_width: usize) -> NetworkSpec {
    let depth = rng.random_range(1..=max_depth);
    let d = rng.random_range(1..=max_width.min(8));
    let widths: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=max_width)).collect();
    let p = [0.0, 0.5, 1.0][rng.random_range(0..3)];
    NetworkSpec::fnn(d, &widths, p).expect("valid random fnn")
}

/// CNN with 1-2 conv layers then 0-2 dense layers.
pub fn random_cnn<R: Rng + ?Sized>(rng: &mut R, max_width: usize) -> NetworkSpec {
    let n_conv = rng.random_range(1..=2);
    let kernels: Vec<usize> = (0..n_conv).map(|_| rng.random_range(1..=4)).collect();
    // build widths back from the last conv output
    let mut width = rng.random_range(1..=6);
    for &s in kernels.iter().rev() {
        width = width * s + s - 1;
    }
    let n_fc = rng.random_range(0..=2);
    let fc: Vec<usize> = (0..n_fc).map(|_| rng.random_range(1..=max_width)).collect();
    let p = [0.0, 0.5][rng.random_range(0..2)];
    NetworkSpec::new(width, &kernels, &fc, p).expect("valid random cnn")
}

fn random_params<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Parameters {
    let kappa = rng.random_range(0.5..3.0);
    init_gaussian_with(spec, kappa, rng)
}

/// Per-layer `<Theta^(l), df/dTheta^(l)> - f` and `<Theta, grad f> - (L+1) f`,
/// relative to `1 + |rhs|`. `grad_error` is added to the first gradient
/// coordinate before contracting.
pub fn homogeneity_residual(
    spec: &NetworkSpec,
    params: &Parameters,
    x: &[f64],
    grad_error: f64,
) -> Result<f64, NetError> {
    let (f, mut g) = spec.grad_f(params, x)?;
    g.layer_mut(0)[0] += grad_error;
    let dots = params.layer_dots(&g);
    let mut worst: f64 = 0.0;
    for &v in &dots {
        worst = nan_max(worst, ((v - f) / (1.0 + f.abs())).abs());
    }
    let total: f64 = dots.iter().sum();
    let lf = spec.num_layers() as f64 * f;
    Ok(nan_max(worst, ((total - lf) / (1.0 + lf.abs())).abs()))
}

fn par_max<F>(trials: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    (0..trials).into_par_iter().map(f).reduce(|| f64::NEG_INFINITY, nan_max)
}

/// Homogeneity identities on random `(params, x)` for a fixed architecture.
pub fn check_homogeneity(spec: &NetworkSpec, trials: usize, seed: u64) -> CheckOutcome {
    check_homogeneity_perturbed(spec, trials, seed, 0.0)
}

/// As [`check_homogeneity`], with a corrupted gradient entry.
pub fn check_homogeneity_perturbed(spec: &NetworkSpec, trials: usize, seed: u64, grad_error: f64) -> CheckOutcome {
    let v = par_max(trials, |i| {
        let mut rng = trial_rng(seed, i);
        let p = random_params(spec, &mut rng);
        let x = random_input(spec.input_dim(), &mut rng);
        homogeneity_residual(spec, &p, &x, grad_error).unwrap_or(f64::NAN)
    });
    CheckOutcome::new("homogeneity", trials, v, HOMOGENEITY_TOL)
}

/// Homogeneity over random architectures (`kind` = FNN or CNN family).
pub fn check_homogeneity_random(cnn: bool, trials: usize, seed: u64) -> CheckOutcome {
    let v = par_max(trials, |i| {
        let mut rng = trial_rng(seed, i);
        let spec = if cnn { random_cnn(&mut rng, 64) } else { random_fnn(&mut rng, 5, 64) };
        let p = random_params(&spec, &mut rng);
        let x = random_input(spec.input_dim(), &mut rng);
        homogeneity_residual(&spec, &p, &x, 0.0).unwrap_or(f64::NAN)
    });
    let name = if cnn { "homogeneity_cnn" } else { "homogeneity_fnn" };
    CheckOutcome::new(name, trials, v, HOMOGENEITY_TOL)
}

/// Largest relative slack violation of the value and gradient bound chains.
pub fn value_grad_violation(spec: &NetworkSpec, params: &Parameters, x: &[f64]) -> Result<f64, NetError> {
    let (f, g) = spec.grad_f(params, x)?;
    let norms = layer_norms(params);
    let xn = dot(x, x).sqrt();
    let mp = spec.output_scale();
    let l1 = spec.num_layers() as f64;
    let l = l1 - 1.0;
    let total_sq: f64 = norms.iter().map(|v| v * v).sum();
    let product: f64 = norms.iter().product();

    let value = product * xn / mp;
    let value_amgm = total_sq.powf(l1 / 2.0) * xn / (mp * l1.powf(l1 / 2.0));
    let mut worst = rel(f.abs(), value).max(rel(value, value_amgm));

    let grad_amgm = total_sq.powf(l / 2.0) * xn / (mp * l.powf(l / 2.0));
    for (li, gl) in g.layers().iter().enumerate() {
        let others: f64 = norms.iter().enumerate().filter(|&(i, _)| i != li).map(|(_, v)| v).product();
        let rhs = others * xn / mp;
        worst = worst.max(rel(dot(gl, gl).sqrt(), rhs)).max(rel(rhs, grad_amgm));
    }
    Ok(worst)
}

pub fn check_value_grad_bounds(spec: &NetworkSpec, trials: usize, seed: u64) -> CheckOutcome {
    let v = par_max(trials, |i| {
        let mut rng = trial_rng(seed, i);
        let p = random_params(spec, &mut rng);
        let x = random_input(spec.input_dim(), &mut rng);
        value_grad_violation(spec, &p, &x).unwrap_or(f64::NAN)
    });
    CheckOutcome::new("value_grad_bounds", trials, v, PROP_BOUND_TOL)
}

pub fn check_value_grad_bounds_random(cnn: bool, trials: usize, seed: u64) -> CheckOutcome {
    let v = par_max(trials, |i| {
        let mut rng = trial_rng(seed, i);
        let spec = if cnn { random_cnn(&mut rng, 64) } else { random_fnn(&mut rng, 5, 64) };
        let p = random_params(&spec, &mut rng);
        let x = random_input(spec.input_dim(), &mut rng);
        value_grad_violation(&spec, &p, &x).unwrap_or(f64::NAN)
    });
    let name = if cnn { "value_grad_bounds_cnn" } else { "value_grad_bounds_fnn" };
    CheckOutcome::new(name, trials, v, PROP_BOUND_TOL)
}

/// Network `d -> m -> 1` with `A = b x^T`, `b >= 0`, `a = c b`, unit `x`:
/// `f` equals `(1/m^p) ||A|| ||a|| ||x||`. Returns the relative gap.
pub fn rank_one_witness(d: usize, m: usize, p: f64, seed: u64) -> Result<CheckOutcome, NetError> {
    let spec = NetworkSpec::fnn(d, &[m], p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let xn = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= xn);
    let b: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..2.0)).collect();
    let c: f64 = rng.random_range(0.5..2.0);
    // row-major (out, in): A[k][j] = b_k x_j
    let a_mat: Vec<f64> = b.iter().flat_map(|bk| x.iter().map(move |xj| bk * xj)).collect();
    let a_out: Vec<f64> = b.iter().map(|bk| c * bk).collect();
    let params = Parameters::from_layers(&spec, vec![a_mat, a_out])?;
    let f = spec.eval(&params, &x)?;
    let rhs = layer_norms(&params).iter().product::<f64>() / spec.output_scale();
    Ok(CheckOutcome::new("rank_one_equality", 1, ((f - rhs) / rhs).abs(), 1e-9))
}

/// Central differences `(f(Theta + h e_i) - f(Theta - h e_i)) / (2h)`.
pub fn finite_diff_grad(spec: &NetworkSpec, params: &Parameters, x: &[f64], h: f64) -> Result<Parameters, NetError> {
    Ok(finite_diff_with_pattern(spec, params, x, h)?.0)
}

fn pattern(pre: &[Vec<f64>]) -> Vec<bool> {
    pre.iter().flatten().map(|&v| v > 0.0).collect()
}

/// Finite differences plus whether every perturbed evaluation kept the
/// activation pattern of the base point.
fn finite_diff_with_pattern(
    spec: &NetworkSpec,
    params: &Parameters,
    x: &[f64],
    h: f64,
) -> Result<(Parameters, bool), NetError> {
    let base = pattern(&spec.forward(params, x)?.pre);
    let mut out = Parameters::zeros(spec);
    let mut work = params.clone();
    let mut stable = true;
    for l in 0..params.num_layers() {
        for i in 0..params.layer(l).len() {
            let orig = work.layer(l)[i];
            work.layer_mut(l)[i] = orig + h;
            let up = spec.forward(&work, x)?;
            work.layer_mut(l)[i] = orig - h;
            let down = spec.forward(&work, x)?;
            work.layer_mut(l)[i] = orig;
            stable &= pattern(&up.pre) == base && pattern(&down.pre) == base;
            out.layer_mut(l)[i] = (up.output - down.output) / (2.0 * h);
        }
    }
    Ok((out, stable))
}

/// Max over coordinates of `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &Parameters, b: &Parameters, floor: f64) -> f64 {
    a.concat().iter().zip(b.concat()).map(|(u, v)| (u - v).abs() / u.abs().max(v.abs()).max(floor)).fold(0.0, nan_max)
}

/// Backprop against central differences on random kink-free instances.
/// An instance is resampled when a pre-activation sits within
/// [`KINK_MARGIN`] of zero or a perturbation changes the activation pattern.
pub fn check_gradient_fd(cnn: bool, trials: usize, seed: u64, h: f64) -> CheckOutcome {
    let v = par_max(trials, |i| {
        let mut rng = trial_rng(seed, i);
        loop {
            let spec = if cnn { random_cnn(&mut rng, 12) } else { random_fnn(&mut rng, 4, 12) };
            let p = random_params(&spec, &mut rng);
            let x = random_input(spec.input_dim(), &mut rng);
            let Ok(tr) = spec.forward(&p, &x) else { return f64::NAN };
            if tr.min_abs_preactivation() < KINK_MARGIN {
                continue;
            }
            let Ok((fd, stable)) = finite_diff_with_pattern(&spec, &p, &x, h) else { return f64::NAN };
            if !stable {
                continue;
            }
            let Ok((_, g)) = spec.grad_f(&p, &x) else { return f64::NAN };
            return max_relative_error(&g, &fd, 1e-8);
        }
    });
    let name = if cnn { "gradient_fd_cnn" } else { "gradient_fd_fnn" };
    CheckOutcome::new(name, trials, v, FD_TOL)
}

/// `kappa^2 (1 + max{(4/q) ln(1/delta), sqrt((8/q) ln(1/delta))})`.
pub fn init_threshold(kappa: f64, q: usize, delta: f64) -> f64 {
    let lg = (1.0 / delta).ln();
    let q = q as f64;
    kappa * kappa * (1.0 + (4.0 / q * lg).max((8.0 / q * lg).sqrt()))
}

/// `delta + 3 sqrt(delta (1 - delta) / draws)`.
pub fn init_allowed_rate(delta: f64, draws: usize) -> f64 {
    delta + 3.0 * (delta * (1.0 - delta) / draws as f64).sqrt()
}

/// Violation frequency of `||Theta^(l)||^2 > threshold` per layer size.
pub fn init_violation_rates(qs: &[usize], kappa: f64, delta: f64, draws: usize, seed: u64) -> Vec<f64> {
    qs.par_iter()
        .enumerate()
        .map(|(li, &q)| {
            let mut rng = trial_rng(seed, li);
            let sd = kappa / (q as f64).sqrt();
            let thr = init_threshold(kappa, q, delta);
            let mut hits = 0usize;
            for _ in 0..draws {
                let s: f64 = (0..q)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (sd * z) * (sd * z)
                    })
                    .sum();
                if s > thr {
                    hits += 1;
                }
            }
            hits as f64 / draws as f64
        })
        .collect()
}

/// Concentration check for explicit layer sizes. Violation is
/// `rate - allowed` (tolerance 0).
pub fn init_concentration_q(qs: &[usize], kappa: f64, delta: f64, draws: usize, seed: u64) -> CheckOutcome {
    let allowed = init_allowed_rate(delta, draws);
    let v = init_violation_rates(qs, kappa, delta, draws, seed)
        .into_iter()
        .map(|r| r - allowed)
        .fold(f64::NEG_INFINITY, nan_max);
    CheckOutcome::new("init_concentration", qs.len() * draws, v, 0.0)
}

pub fn init_concentration_test(spec: &NetworkSpec, kappa: f64, delta: f64, draws: usize, seed: u64) -> CheckOutcome {
    init_concentration_q(&spec.param_counts(), kappa, delta, draws, seed)
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("trajectory is missing norm logs: {0}")]
pub struct MissingLogs(pub String);

/// Discrete runs: `||Theta^(l)(t)||^2 <= (1 + 2 lambda^2) ||Theta^(l)(0)||^2 + CL(t)`.
/// GF runs: every substep increment of `||Theta^(l)||^2` is at most
/// `2 h psi + h^2 ||g^(l)||^2` (exact for an Euler step).
pub fn check_norm_dynamics(traj: &TrajectoryRecord, lambda: f64) -> Result<CheckOutcome, MissingLogs> {
    let e = &traj.entries;
    let first = e.first().ok_or_else(|| MissingLogs("no entries".into()))?;
    let layers = first.sq_norms.len();
    if layers == 0 || e.iter().any(|s| s.sq_norms.len() != layers) {
        return Err(MissingLogs("per-layer squared norms".into()));
    }
    let mut worst = f64::NEG_INFINITY;
    if traj.algorithm == Algorithm::Gf {
        for w in e.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.grad_sq_norms.len() != layers {
                return Err(MissingLogs(format!("gradient norms at substep {}", a.t)));
            }
            let h = b.time - a.time;
            for l in 0..layers {
                let inc = b.sq_norms[l] - a.sq_norms[l];
                let rhs = 2.0 * h * a.psi + h * h * a.grad_sq_norms[l];
                worst = nan_max(worst, rel(inc, rhs));
            }
        }
        let name = "norm_dynamics_gf";
        return Ok(CheckOutcome::new(name, e.len().saturating_sub(1) * layers, worst, NORM_DYNAMICS_TOL));
    }
    let c = 1.0 + 2.0 * lambda * lambda;
    for s in e {
        for l in 0..layers {
            let rhs = c * first.sq_norms[l] + s.cl;
            worst = nan_max(worst, rel(s.sq_norms[l], rhs));
        }
    }
    Ok(CheckOutcome::new("norm_dynamics", e.len() * layers, worst, NORM_DYNAMICS_TOL))
}

/// Quadratic-loss identity `-(2/n) sum (f-y) f = -4 Ln - (2/n) sum (f-y) y`
/// and `-2 <Theta^(l), dLn/dTheta^(l)> <= 2 psi(Ln)` per layer.
pub fn check_loss_decomposition(
    spec: &NetworkSpec,
    params: &Parameters,
    data: &Dataset,
) -> Result<CheckOutcome, NetError> {
    let lg = spec.loss_and_grad(params, data.inputs(), data.targets(), 2)?;
    let n = data.len() as f64;
    let y = data.targets();
    let f = &lg.outputs;
    let lhs: f64 = -2.0 / n * f.iter().zip(y).map(|(fi, yi)| (fi - yi) * fi).sum::<f64>();
    let rhs: f64 = -4.0 * lg.loss - 2.0 / n * f.iter().zip(y).map(|(fi, yi)| (fi - yi) * yi).sum::<f64>();
    let mut worst = (lhs - rhs).abs() / (1.0 + rhs.abs());
    let bound = 2.0 * psi(lg.loss, data.c_y());
    for d in params.layer_dots(&lg.grad) {
        worst = worst.max(rel(-2.0 * d, bound));
    }
    Ok(CheckOutcome::new("loss_decomposition", 1, worst, DECOMPOSITION_TOL))
}

/// Random data with `C_y = 1` and random networks.
pub fn check_loss_decomposition_random(trials: usize, seed: u64) -> CheckOutcome {
    let v = par_max(trials, |i| {
        let mut rng = trial_rng(seed, i);
        let spec = if i % 4 == 3 { random_cnn(&mut rng, 16) } else { random_fnn(&mut rng, 3, 16) };
        let p = random_params(&spec, &mut rng);
        let n = rng.random_range(1..=12);
        let c_y: f64 = rng.random_range(0.05..=1.0);
        let mut xs = Array2::zeros((n, spec.input_dim()));
        for r in 0..n {
            let x = random_input(spec.input_dim(), &mut rng);
            xs.row_mut(r).assign(&ndarray::ArrayView1::from(&x));
        }
        let ys = (0..n).map(|_| rng.random_range(-c_y..=c_y)).collect();
        let Ok(ds) = Dataset::new(xs, ys, c_y, Split::Train) else { return f64::NAN };
        check_loss_decomposition(&spec, &p, &ds).map_or(f64::NAN, |o| o.max_violation)
    });
    CheckOutcome::new("loss_decomposition", trials, v, DECOMPOSITION_TOL)
}

/// Draws a layer from a Gaussian and rescales it onto norm `cap`.
fn hypothesis<R: Rng + ?Sized>(spec: &NetworkSpec, caps: &[f64], rng: &mut R) -> Parameters {
    let mut p = init_gaussian_with(spec, 1.0, rng);
    for (l, &cap) in caps.iter().enumerate() {
        let n = dot(p.layer(l), p.layer(l)).sqrt();
        let s = if n > 0.0 { cap / n } else { 0.0 };
        p.scale_layer(l, s);
    }
    p
}

/// Monte-Carlo lower estimate of the empirical Rademacher complexity of
/// `{||Theta^(l)|| <= caps[l]}` on `data`, returned with the closed-form
/// upper value.
pub fn mc_rademacher_lower(
    spec: &NetworkSpec,
    caps: &[f64],
    data: ArrayView2<f64>,
    hyp_samples: usize,
    sigma_samples: usize,
    seed: u64,
) -> Result<(f64, f64), NetError> {
    let n = data.nrows();
    if n == 0 {
        return Err(NetError::EmptyBatch);
    }
    if caps.len() != spec.num_layers() {
        return Err(NetError::ParamShape(format!("{} caps for {} layers", caps.len(), spec.num_layers())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outs = Vec::with_capacity(hyp_samples);
    for _ in 0..hyp_samples {
        let p = hypothesis(spec, caps, &mut rng);
        outs.push(spec.eval_batch(&p, data)?);
    }
    let mut total = 0.0;
    for _ in 0..sigma_samples {
        let sigma: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let best = outs
            .iter()
            .map(|o| o.iter().zip(&sigma).map(|(f, s)| f * s).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        total += best;
    }
    let estimate = total / (sigma_samples.max(1) as f64 * n as f64);
    Ok((estimate, rademacher_upper(spec, caps, n)))
}

/// Exhaustive version on `1 -> 1 -> 1` with two samples: all four sign
/// vectors and a `grid x grid` lattice over `[-Q1, Q1] x [-Q2, Q2]`.
pub fn rademacher_brute_force(xs: [f64; 2], caps: [f64; 2], grid: usize) -> Result<(f64, f64), NetError> {
    let spec = NetworkSpec::fnn(1, &[1], 0.0)?;
    let g = grid.max(2);
    let coord = |i: usize, cap: f64| -cap + 2.0 * cap * i as f64 / (g - 1) as f64;
    let mut vals = Vec::with_capacity(g * g);
    for i in 0..g {
        for j in 0..g {
            let (w, a) = (coord(i, caps[0]), coord(j, caps[1]));
            vals.push([a * (w * xs[0]).max(0.0), a * (w * xs[1]).max(0.0)]);
        }
    }
    let mut total = 0.0;
    for s in [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]] {
        total += vals.iter().map(|v| s[0] * v[0] + s[1] * v[1]).fold(f64::NEG_INFINITY, f64::max);
    }
    Ok((total / (4.0 * 2.0), rademacher_upper(&spec, &caps, 2)))
}
