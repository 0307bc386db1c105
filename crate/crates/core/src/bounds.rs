//! Cumulative loss, Rademacher constants and the assembled generalization
//! bound, plus the SGLD stability bound for comparison.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netcore::{ModelKind, NetworkSpec};
use crate::optim::{alpha_in_range, Algorithm, TrajectoryRecord};

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_RHO: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("trajectory has no initial layer norms")]
    MissingInitNorms,
    #[error("continuous CL needs at least 2 logged substeps, got {0}")]
    TooFewSubsteps(usize),
    #[error("loss power must be >= 2, got {0}")]
    LossPower(u32),
    #[error("invalid bound parameter: {0}")]
    Invalid(String),
}

/// `sqrt(2 Ln) (C_y - sqrt(2 Ln))`. Negative once `sqrt(2 Ln) > C_y`.
pub fn psi(ln: f64, c_y: f64) -> f64 {
    let r = (2.0 * ln).sqrt();
    r * (c_y - r)
}

/// `(k Ln)^((k-1)/k) (C_y - (k Ln)^(1/k))`; identical to [`psi`] for `k = 2`.
pub fn psi_power(ln: f64, k: u32, c_y: f64) -> f64 {
    if k == 2 {
        return psi(ln, c_y);
    }
    let kf = k as f64;
    let r = (kf * ln).powf(1.0 / kf);
    (kf * ln).powf((kf - 1.0) / kf) * (c_y - r)
}

/// Total and prefix series (`prefix[t] = CL(t)`, `prefix[0] = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClSeries {
    pub total: f64,
    pub prefix: Vec<f64>,
}

fn discrete_sum(terms: impl Iterator<Item = f64>) -> ClSeries {
    let mut prefix = vec![0.0];
    let mut acc = 0.0;
    for term in terms {
        acc += term;
        prefix.push(acc);
    }
    ClSeries { total: acc, prefix }
}

/// `sum_{t<T} 2 eta_t psi(t)` from `(eta_t, Ln(t))` pairs, `T = len - 1`.
pub fn cl_from_series(etas: &[f64], losses: &[f64], c_y: f64) -> ClSeries {
    let steps = etas.len().min(losses.len()).saturating_sub(1);
    discrete_sum((0..steps).map(|t| 2.0 * etas[t] * psi(losses[t], c_y)))
}

/// Discrete cumulative loss of a GD/SGD trajectory.
pub fn cl_discrete(traj: &TrajectoryRecord) -> ClSeries {
    let etas: Vec<f64> = traj.entries.iter().map(|e| e.eta).collect();
    let losses: Vec<f64> = traj.entries.iter().map(|e| e.loss).collect();
    cl_from_series(&etas, &losses, traj.c_y)
}

/// Trapezoidal integral of `2 psi(t)` over the logged GF times.
pub fn cl_continuous(traj: &TrajectoryRecord) -> Result<f64, BoundError> {
    let e = &traj.entries;
    if e.len() < 2 {
        return Err(BoundError::TooFewSubsteps(e.len()));
    }
    let integrand = |i: usize| 2.0 * psi(e[i].loss, traj.c_y);
    Ok((1..e.len()).map(|i| 0.5 * (e[i].time - e[i - 1].time) * (integrand(i) + integrand(i - 1))).sum())
}

/// Discrete cumulative loss for the `|f - y|^k / k` loss.
pub fn cl_power(traj: &TrajectoryRecord, k: u32, c_y: f64) -> Result<ClSeries, BoundError> {
    if k < 2 {
        return Err(BoundError::LossPower(k));
    }
    let e = &traj.entries;
    let steps = e.len().saturating_sub(1);
    Ok(discrete_sum((0..steps).map(|t| 2.0 * e[t].eta * psi_power(e[t].loss, k, c_y))))
}

/// `sqrt(2 (L+1) ln 2) + 1` (FNN) or `2 sqrt((L + 2 + ln d) d)` (CNN).
pub fn rademacher_constant(depth: usize, d: usize, kind: ModelKind) -> f64 {
    let l = depth as f64;
    match kind {
        ModelKind::Fnn => (2.0 * (l + 1.0) * std::f64::consts::LN_2).sqrt() + 1.0,
        ModelKind::Cnn => {
            let d = d as f64;
            2.0 * ((l + 2.0 + d.ln()) * d).sqrt()
        }
    }
}

/// Upper estimate of the Rademacher complexity of the class with
/// `||Theta^(l)|| <= caps[l]`: `C / (m^p sqrt(n)) prod caps`.
pub fn rademacher_upper(spec: &NetworkSpec, caps: &[f64], n: usize) -> f64 {
    let c = rademacher_constant(spec.hidden_depth(), spec.input_dim(), spec.kind());
    c / (spec.output_scale() * (n as f64).sqrt()) * caps.iter().product::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Theorem {
    Gf,
    Gd,
    Sgd,
}

impl Theorem {
    pub fn for_algorithm(a: Algorithm) -> Theorem {
        match a {
            Algorithm::Gf => Theorem::Gf,
            Algorithm::Gd | Algorithm::Sgld => Theorem::Gd,
            Algorithm::Sgd => Theorem::Sgd,
        }
    }
}

/// Everything the bound depends on besides the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub theorem: Theorem,
    pub kind: ModelKind,
    pub depth: usize,
    pub input_dim: usize,
    pub output_width: usize,
    pub norm_exponent: f64,
    pub init_sq_norms: Vec<f64>,
    pub lambda: f64,
    pub delta: f64,
    pub n: usize,
    pub rho: Option<f64>,
}

impl BoundInputs {
    pub fn from_spec(
        theorem: Theorem,
        spec: &NetworkSpec,
        init_sq_norms: Vec<f64>,
        lambda: f64,
        delta: f64,
        n: usize,
        rho: Option<f64>,
    ) -> Self {
        BoundInputs {
            theorem,
            kind: spec.kind(),
            depth: spec.hidden_depth(),
            input_dim: spec.input_dim(),
            output_width: spec.output_width(),
            norm_exponent: spec.norm_exponent(),
            init_sq_norms,
            lambda,
            delta,
            n,
            rho,
        }
    }

    pub fn validate(&self) -> Result<(), BoundError> {
        let bad = |m: String| Err(BoundError::Invalid(m));
        if self.init_sq_norms.is_empty() {
            return Err(BoundError::MissingInitNorms);
        }
        if self.init_sq_norms.len() != self.depth + 1 {
            return bad(format!("{} init norms for {} layers", self.init_sq_norms.len(), self.depth + 1));
        }
        if self.init_sq_norms.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("initial squared norms must be finite and nonnegative".into());
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0 / 3f64.sqrt()) {
            return bad(format!("lambda must lie in (0, 1/sqrt(3)), got {}", self.lambda));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        match (self.theorem, self.rho) {
            (Theorem::Sgd, Some(r)) if r > 0.0 && r.is_finite() => Ok(()),
            (Theorem::Sgd, r) => bad(format!("SGD bound needs rho > 0, got {r:?}")),
            (_, Some(_)) => bad("rho only applies to the SGD bound".into()),
            (_, None) => Ok(()),
        }
    }

    fn inflation(&self) -> f64 {
        1.0 + self.rho.unwrap_or(0.0)
    }

    fn prefactor(&self) -> f64 {
        let mp = (self.output_width as f64).powf(self.norm_exponent);
        rademacher_constant(self.depth, self.input_dim, self.kind) / (mp * (self.n as f64).sqrt())
    }

    /// `(1 + 3 lambda^2) ||Theta^(l)(0)||^2`.
    pub fn v_terms(&self) -> Vec<f64> {
        let c = 1.0 + 3.0 * self.lambda * self.lambda;
        self.init_sq_norms.iter().map(|v| c * v).collect()
    }

    /// Complexity term at cumulative loss `cl`.
    pub fn complexity(&self, cl: f64) -> f64 {
        let s = self.inflation();
        let clp = cl.max(0.0);
        self.prefactor() * self.v_terms().iter().map(|v| (s * (v + clp)).sqrt()).product::<f64>()
    }

    pub fn confidence(&self) -> f64 {
        ((1.0 / self.delta).ln() / self.n as f64).sqrt()
    }

    pub fn bound(&self, cl: f64) -> f64 {
        self.complexity(cl) + self.confidence()
    }
}

/// Assembled bound. The absolute constant in front is taken to be 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: Theorem,
    pub n: usize,
    pub depth: usize,
    pub input_dim: usize,
    pub model_kind: ModelKind,
    pub rademacher_constant: f64,
    pub norm_exponent: f64,
    pub output_width: usize,
    pub lambda: f64,
    pub init_norms: Vec<f64>,
    pub v_terms: Vec<f64>,
    /// Cumulative loss entering the bound (unclamped).
    pub cl: f64,
    /// Realized single-run CL (SGD also reports the seed mean).
    pub cl_realized: f64,
    pub cl_seed_mean: Option<f64>,
    pub cl_seeds: usize,
    /// `CL < 0`, so `max(CL, 0) = 0` was used.
    pub cl_clamped: bool,
    pub rho: Option<f64>,
    pub delta: f64,
    pub complexity_term: f64,
    pub confidence_term: f64,
    pub bound: f64,
    /// Bound at the realized CL (differs from `bound` only with a seed mean).
    pub bound_realized: f64,
    pub hidden_constant: f64,
    /// Schedule exponent and whether it lies in `((L+1)/(L+2), 1]`.
    pub alpha: Option<f64>,
    pub alpha_in_range: Option<bool>,
    pub sgld_bound: Option<f64>,
}

impl BoundReport {
    fn build(inputs: &BoundInputs, cl: f64, cl_realized: f64, seed_mean: Option<(f64, usize)>) -> Self {
        let complexity_term = inputs.complexity(cl);
        let confidence_term = inputs.confidence();
        BoundReport {
            theorem: inputs.theorem,
            n: inputs.n,
            depth: inputs.depth,
            input_dim: inputs.input_dim,
            model_kind: inputs.kind,
            rademacher_constant: rademacher_constant(inputs.depth, inputs.input_dim, inputs.kind),
            norm_exponent: inputs.norm_exponent,
            output_width: inputs.output_width,
            lambda: inputs.lambda,
            init_norms: inputs.init_sq_norms.iter().map(|v| v.sqrt()).collect(),
            v_terms: inputs.v_terms(),
            cl,
            cl_realized,
            cl_seed_mean: seed_mean.map(|s| s.0),
            cl_seeds: seed_mean.map_or(1, |s| s.1),
            cl_clamped: cl < 0.0,
            rho: inputs.rho,
            delta: inputs.delta,
            complexity_term,
            confidence_term,
            bound: complexity_term + confidence_term,
            bound_realized: inputs.bound(cl_realized),
            hidden_constant: 1.0,
            alpha: None,
            alpha_in_range: None,
            sgld_bound: None,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self.alpha_in_range = Some(alpha_in_range(alpha, self.depth));
        self
    }

    pub fn with_sgld(mut self, value: f64) -> Self {
        self.sgld_bound = Some(value);
        self
    }
}

/// Bound from explicit inputs and one CL value.
pub fn bound_from_parts(inputs: &BoundInputs, cl: f64) -> Result<BoundReport, BoundError> {
    inputs.validate()?;
    Ok(BoundReport::build(inputs, cl, cl, None))
}

/// SGD bound using the mean CL over `seed_cls` (realized run first). Both
/// the realized and mean values are kept in the report.
pub fn bound_with_seed_mean(inputs: &BoundInputs, seed_cls: &[f64]) -> Result<BoundReport, BoundError> {
    inputs.validate()?;
    let realized = *seed_cls.first().ok_or_else(|| BoundError::Invalid("no CL values".into()))?;
    let mean = seed_cls.iter().sum::<f64>() / seed_cls.len() as f64;
    Ok(BoundReport::build(inputs, mean, realized, Some((mean, seed_cls.len()))))
}

/// Bound for a trajectory, with the theorem chosen from its algorithm.
pub fn assemble_bound(
    traj: &TrajectoryRecord,
    spec: &NetworkSpec,
    lambda: f64,
    delta: f64,
    n: usize,
    rho: Option<f64>,
    cl_value: f64,
) -> Result<BoundReport, BoundError> {
    let inputs = trajectory_inputs(traj, spec, lambda, delta, n, rho)?;
    bound_from_parts(&inputs, cl_value)
}

pub fn trajectory_inputs(
    traj: &TrajectoryRecord,
    spec: &NetworkSpec,
    lambda: f64,
    delta: f64,
    n: usize,
    rho: Option<f64>,
) -> Result<BoundInputs, BoundError> {
    let init = traj.init_sq_norms().ok_or(BoundError::MissingInitNorms)?;
    if init.is_empty() {
        return Err(BoundError::MissingInitNorms);
    }
    let theorem = Theorem::for_algorithm(traj.algorithm);
    let rho = if theorem == Theorem::Sgd { rho } else { None };
    let inputs = BoundInputs::from_spec(theorem, spec, init.to_vec(), lambda, delta, n, rho);
    inputs.validate()?;
    Ok(inputs)
}

/// Bound evaluated at every logged CL prefix.
pub fn bound_series(inputs: &BoundInputs, cl_prefix: &[f64]) -> Vec<f64> {
    cl_prefix.iter().map(|&c| inputs.bound(c)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SgldHorizon {
    Discrete { etas: Vec<f64> },
    Continuous { duration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgldBoundInputs {
    pub loss_bound: f64,
    pub lipschitz: f64,
    /// `f64::INFINITY` is the noiseless limit.
    pub beta: f64,
    pub n: usize,
    pub horizon: SgldHorizon,
}

/// `M Lip sqrt(beta / (8n) sum eta_t)` (discrete) or
/// `M Lip sqrt(beta T) / (sqrt(2) n)` (continuous); `+inf` when beta is.
pub fn sgld_bound(inp: &SgldBoundInputs) -> Result<f64, BoundError> {
    if !(inp.loss_bound > 0.0 && inp.lipschitz > 0.0 && inp.beta > 0.0 && inp.n > 0) {
        return Err(BoundError::Invalid("SGLD bound inputs must be positive".into()));
    }
    if inp.beta == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let ml = inp.loss_bound * inp.lipschitz;
    let n = inp.n as f64;
    Ok(match &inp.horizon {
        SgldHorizon::Discrete { etas } => ml * (inp.beta / (8.0 * n) * etas.iter().sum::<f64>()).sqrt(),
        SgldHorizon::Continuous { duration } => ml * (inp.beta * duration).sqrt() / (2f64.sqrt() * n),
    })
}
