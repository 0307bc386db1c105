//! JSON experiment configuration. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::{DEFAULT_DELTA, DEFAULT_RHO};
use crate::netcore::NetworkSpec;
use crate::optim::{Algorithm, Sampler, TrainConfig};

use super::ExpError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_dim: usize,
    #[serde(default)]
    pub conv_kernels: Vec<usize>,
    #[serde(default)]
    pub fc_widths: Vec<usize>,
    /// Exponent `p` of the `1/m^p` read-out. Give this or `output_scale`.
    #[serde(default)]
    pub norm_exponent: Option<f64>,
    /// Read-out factor `m^p` directly.
    #[serde(default)]
    pub output_scale: Option<f64>,
}

impl NetworkConfig {
    pub fn build(&self) -> Result<NetworkSpec, ExpError> {
        let spec =
            NetworkSpec::new(self.input_dim, &self.conv_kernels, &self.fc_widths, self.norm_exponent.unwrap_or(0.0))?;
        match (self.norm_exponent, self.output_scale) {
            (Some(_), Some(_)) => Err(ExpError::config("network", "give norm_exponent or output_scale, not both")),
            (_, Some(s)) => Ok(spec.with_output_scale(s)?),
            _ => Ok(spec),
        }
    }
}

/// Either a number or `"max_feasible"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSetting {
    Value(f64),
    Rule(EtaRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaRule {
    MaxFeasible,
}

/// Training section; mirrors [`TrainConfig`] with a symbolic `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub algorithm: Algorithm,
    pub eta: EtaSetting,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one_u64")]
    pub t0: u64,
    #[serde(default = "one_usize")]
    pub batch: usize,
    #[serde(default)]
    pub beta: Option<f64>,
    pub total_steps: usize,
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub gf_substep: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "two")]
    pub loss_power: u32,
    #[serde(default = "half")]
    pub lambda: f64,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default)]
    pub sampler: Sampler,
    /// Override for `C_f` in the step-size rule.
    #[serde(default)]
    pub c_f: Option<f64>,
}

fn one() -> f64 {
    1.0
}
fn one_u64() -> u64 {
    1
}
fn one_usize() -> usize {
    1
}
fn two() -> u32 {
    2
}
fn half() -> f64 {
    0.5
}
fn default_delta() -> f64 {
    DEFAULT_DELTA
}

impl TrainSection {
    /// Concrete config with `eta` filled in.
    pub fn with_eta(&self, eta: f64) -> TrainConfig {
        TrainConfig {
            algorithm: self.algorithm,
            eta,
            alpha: self.alpha,
            t0: self.t0,
            batch: self.batch,
            beta: self.beta,
            total_steps: self.total_steps,
            duration: self.duration,
            gf_substep: self.gf_substep,
            seed: self.seed,
            loss_power: self.loss_power,
            lambda: self.lambda,
            epsilon: self.epsilon,
            kappa: self.kappa,
            sampler: self.sampler,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Toy regression; first `n_train` draws train, the rest test.
    Regression {
        n_train: usize,
        #[serde(default)]
        n_test: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Sign of the regression target mapped to `{0, C_y}`. Noise touches
    /// training labels only.
    Classification {
        n_train: usize,
        #[serde(default)]
        n_test: usize,
        c_y: f64,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        keep: [u8; 2],
        c_y: f64,
        #[serde(default)]
        limit: Option<usize>,
        #[serde(default)]
        train_fraction: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        c_y: f64,
        #[serde(default)]
        train_fraction: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub betas: Vec<f64>,
    /// Upper bound `M` on the loss.
    pub loss_bound: Option<f64>,
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub width: Vec<usize>,
    #[serde(default)]
    pub lr: Vec<f64>,
    #[serde(default)]
    pub noise: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub train: TrainSection,
    pub data: DataSource,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// SGD only; defaults to 1.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Extra seeds whose runs enter the mean CL (SGD).
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub svg: bool,
    #[serde(default)]
    pub compare: Option<CompareSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    /// Directory relative data paths resolve against (the config's folder).
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExpError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ExpError::Parse {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        cfg.check().map_err(|e| e.locate(text))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExpError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExpError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Semantic checks beyond the schema.
    pub fn check(&self) -> Result<(), ExpError> {
        self.network.build().map_err(|e| e.with_key("network"))?;
        let probe = self.train.with_eta(match self.train.eta {
            EtaSetting::Value(v) => v,
            EtaSetting::Rule(_) => 1.0,
        });
        probe.validate().map_err(ExpError::from_train_config)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ExpError::config("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if let Some(r) = self.rho {
            if !(r > 0.0 && r.is_finite()) {
                return Err(ExpError::config("rho", format!("must be positive, got {r}")));
            }
            if self.train.algorithm != Algorithm::Sgd {
                return Err(ExpError::config("rho", "only applies to SGD"));
            }
        }
        if !self.seeds.is_empty() && self.train.algorithm != Algorithm::Sgd {
            return Err(ExpError::config("seeds", "seed replication is only used for SGD"));
        }
        if let Some(c) = self.train.c_f {
            if !(c > 0.0) {
                return Err(ExpError::config("c_f", format!("must be positive, got {c}")));
            }
        }
        if let Some(cmp) = &self.compare {
            if let Some(b) = cmp.betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
                return Err(ExpError::config("betas", format!("betas must be positive and finite, got {b}")));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<NetworkSpec, ExpError> {
        self.network.build()
    }

    /// SGD uses `rho` (default 1); other algorithms none.
    pub fn rho_for_bound(&self) -> Option<f64> {
        (self.train.algorithm == Algorithm::Sgd).then(|| self.rho.unwrap_or(DEFAULT_RHO))
    }
}

/// 1-based line of the first `"key"` occurrence.
pub fn locate_key(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}
