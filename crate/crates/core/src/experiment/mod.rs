//! Experiment orchestration behind the `genbound` binary: config loading,
//! training runs with bound reports, verification suites, comparisons and
//! sweeps, and their on-disk outputs.

mod commands;
pub mod config;
pub mod io;
pub mod svg;
mod verify;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::bounds::BoundError;
use crate::datagen::{self, DataError, Dataset};
use crate::netcore::NetError;
use crate::optim::TrainError;

pub use commands::{
    cmd_bound, cmd_compare, cmd_gen_data, cmd_sweep, cmd_train, idx_fixture, run_experiment, CompareRow, GenKind,
    RunOutput, RunSummary, SweepAxis, SweepRow,
};
pub use config::{
    CompareSection, DataSource, EtaRule, EtaSetting, ExperimentConfig, NetworkConfig, SweepSection, TrainSection,
};
pub use verify::{cmd_verify, run_suite, VerificationReport, SUITES};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "GENBOUND_THREADS";

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("config parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("config error{}: `{key}`: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { key: String, line: Option<usize>, msg: String },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("json error: {0}")]
    Json(serde_json::Error),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("{0}")]
    Usage(String),
}

impl ExpError {
    pub fn config(key: &str, msg: impl Into<String>) -> Self {
        ExpError::Config { key: key.into(), line: None, msg: msg.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ExpError::Io { path: path.to_path_buf(), source }
    }

    pub fn csv(path: &Path, source: csv::Error) -> Self {
        ExpError::Csv { path: path.to_path_buf(), source }
    }

    /// Turns a validation failure into a config error naming `key`.
    pub fn with_key(self, key: &str) -> Self {
        match self {
            ExpError::Net(e) => ExpError::config(key, e.to_string()),
            ExpError::Data(e) => ExpError::config(key, e.to_string()),
            other => other,
        }
    }

    /// Training-config messages start with the offending field name.
    pub fn from_train_config(e: TrainError) -> Self {
        match e {
            TrainError::Config(msg) => {
                let key = msg.split_whitespace().next().unwrap_or("train").to_string();
                ExpError::Config { key, line: None, msg }
            }
            other => ExpError::Train(other),
        }
    }

    /// Fills in the line of the offending key.
    pub fn locate(self, text: &str) -> Self {
        match self {
            ExpError::Config { key, line: None, msg } => {
                let line = config::locate_key(text, &key);
                ExpError::Config { key, line, msg }
            }
            other => other,
        }
    }
}

/// Worker count: `GENBOUND_THREADS` if set to a positive integer, else the
/// available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` on a pool sized by [`thread_count`].
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(thread_count()).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Training set and optional test set for a data source.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Option<Dataset>), ExpError> {
    fn head_tail(ds: Dataset, n_train: usize) -> Result<(Dataset, Option<Dataset>), ExpError> {
        if ds.len() == n_train {
            return Ok((ds, None));
        }
        let tr: Vec<usize> = (0..n_train).collect();
        let te: Vec<usize> = (n_train..ds.len()).collect();
        let (xa, ya) = ds.select(&tr);
        let (xb, yb) = ds.select(&te);
        Ok((
            Dataset::new(xa, ya, ds.c_y(), datagen::Split::Train)?,
            Some(Dataset::new(xb, yb, ds.c_y(), datagen::Split::Test)?),
        ))
    }
    fn maybe_split(ds: Dataset, frac: Option<f64>, seed: u64) -> Result<(Dataset, Option<Dataset>), ExpError> {
        match frac {
            None => Ok((ds, None)),
            Some(f) => {
                let (a, b) = datagen::split(&ds, f, seed)?;
                Ok((a, Some(b)))
            }
        }
    }
    match &cfg.data {
        DataSource::Regression { n_train, n_test, seed } => {
            if *n_train == 0 {
                return Err(ExpError::config("n_train", "must be positive"));
            }
            head_tail(datagen::synth_regression(n_train + n_test, *seed)?, *n_train)
        }
        DataSource::Classification { n_train, n_test, c_y, noise, seed } => {
            if *n_train == 0 {
                return Err(ExpError::config("n_train", "must be positive"));
            }
            let all = datagen::synth_classification(n_train + n_test, *c_y, *seed)?;
            let (train, test) = head_tail(all, *n_train)?;
            let train =
                if *noise > 0.0 { datagen::inject_label_noise(&train, *noise, seed.wrapping_add(1))? } else { train };
            Ok((train, test))
        }
        DataSource::Idx { images, labels, keep, c_y, limit, train_fraction, seed } => {
            let mut raw = datagen::read_idx(&cfg.resolve(images), &cfg.resolve(labels))?;
            if let Some(k) = *limit {
                let k = k.min(raw.count());
                raw.pixels.truncate(k * raw.rows * raw.cols);
                raw.labels.truncate(k);
            }
            let ds = datagen::idx_to_dataset(&raw, *keep, *c_y)?;
            maybe_split(ds, *train_fraction, *seed)
        }
        DataSource::Csv { path, c_y, train_fraction, seed } => {
            let p = cfg.resolve(path);
            let file = std::fs::File::open(&p).map_err(|e| ExpError::io(&p, e))?;
            let ds = Dataset::read_csv(file, *c_y, datagen::Split::Train)?;
            maybe_split(ds, *train_fraction, *seed)
        }
    }
}
