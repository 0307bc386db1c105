use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{
    bound_from_parts, bound_with_seed_mean, sgld_bound, trajectory_inputs, BoundInputs, BoundReport, SgldBoundInputs,
    SgldHorizon, Theorem,
};
use crate::datagen::{self, Dataset, IdxImages};
use crate::netcore::{init_gaussian, layer_norms, NetworkSpec, Parameters};
use crate::optim::{default_c_f, max_feasible_eta, train_from, Algorithm, TrainConfig, TrainError, TrajectoryRecord};

use super::config::{DataSource, EtaSetting, ExperimentConfig};
use super::io::{write_json, write_table, write_trajectory_csv, TrajectoryRow};
use super::svg::{line_chart, Series};
use super::{load_data, with_pool, ExpError};

/// Scalar facts about a run, written to `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub eta_from_rule: bool,
    /// `None` when alpha is outside the range the rule covers.
    pub max_feasible_eta: Option<f64>,
    pub c_f: f64,
    pub c_y: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub logged_points: usize,
    pub final_train_loss: f64,
    pub final_test_loss: Option<f64>,
    pub final_cl: f64,
    pub max_abs_f: f64,
    pub bound: f64,
    pub replicate_seeds: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub spec: NetworkSpec,
    pub record: TrajectoryRecord,
    pub report: BoundReport,
    pub rows: Vec<TrajectoryRow>,
    pub summary: RunSummary,
}

struct Prepared {
    spec: NetworkSpec,
    train: Dataset,
    test: Option<Dataset>,
    init: Parameters,
    tc: TrainConfig,
    c_f: f64,
    max_eta: Option<f64>,
    eta_from_rule: bool,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, ExpError> {
    let spec = cfg.spec()?;
    let (train, test) = load_data(cfg)?;
    if train.dim() != spec.input_dim() {
        return Err(ExpError::config(
            "input_dim",
            format!("data has dimension {}, network expects {}", train.dim(), spec.input_dim()),
        ));
    }
    let init = init_gaussian(&spec, cfg.train.kappa, cfg.train.seed);
    let c_f = match cfg.train.c_f {
        Some(c) => c,
        None => default_c_f(&spec, &init, &train)?,
    };
    let probe = cfg.train.with_eta(1.0);
    let max_eta = if probe.alpha_in_range(spec.hidden_depth()) && c_f > 0.0 {
        Some(max_feasible_eta(&layer_norms(&init), &spec, &probe, c_f, train.c_y())?)
    } else {
        None
    };
    let (eta, eta_from_rule) = match cfg.train.eta {
        EtaSetting::Value(v) => (v, false),
        EtaSetting::Rule(_) => match max_eta {
            Some(e) if e > 0.0 && e.is_finite() => (e, true),
            _ => {
                return Err(ExpError::config(
                    "eta",
                    "max_feasible needs alpha in ((L+1)/(L+2), 1] and a finite positive step",
                ))
            }
        },
    };
    let tc = cfg.train.with_eta(eta);
    tc.validate().map_err(ExpError::from_train_config)?;
    Ok(Prepared { spec, train, test, init, tc, c_f, max_eta, eta_from_rule })
}

/// CL column: running discrete sums, or trapezoidal prefixes for GF.
fn cl_column(record: &TrajectoryRecord) -> Vec<f64> {
    let e = &record.entries;
    if record.algorithm != Algorithm::Gf {
        return e.iter().map(|s| s.cl).collect();
    }
    let mut out = Vec::with_capacity(e.len());
    let mut acc = 0.0;
    for (i, s) in e.iter().enumerate() {
        if i > 0 {
            acc += (s.time - e[i - 1].time) * (s.psi + e[i - 1].psi);
        }
        out.push(acc);
    }
    out
}

fn trajectory_rows(record: &TrajectoryRecord, inputs: &BoundInputs) -> Vec<TrajectoryRow> {
    record
        .entries
        .iter()
        .zip(cl_column(record))
        .map(|(e, cl)| TrajectoryRow {
            t: e.t,
            time: e.time,
            eta_t: e.eta,
            ln_train: e.loss,
            ln_test: e.test_loss,
            psi: e.psi,
            cl,
            norm_sq: e.sq_norms.clone(),
            bound_prefix: inputs.bound(cl),
        })
        .collect()
}

fn bound_inputs(
    cfg: &ExperimentConfig,
    spec: &NetworkSpec,
    record: &TrajectoryRecord,
) -> Result<BoundInputs, ExpError> {
    Ok(trajectory_inputs(record, spec, cfg.train.lambda, cfg.delta, record.n_train, cfg.rho_for_bound())?)
}

/// Trains and assembles the bound without touching the filesystem.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, ExpError> {
    let p = prepare(cfg)?;
    let record = train_from(&p.spec, p.init.clone(), &p.train, p.test.as_ref(), &p.tc)?;
    let inputs = bound_inputs(cfg, &p.spec, &record)?;
    let rows = trajectory_rows(&record, &inputs);
    let realized = rows.last().map_or(0.0, |r| r.cl);
    let report = if cfg.seeds.is_empty() {
        bound_from_parts(&inputs, realized)?
    } else {
        // same init, different index sequences
        let others: Vec<Result<f64, TrainError>> = with_pool(|| {
            cfg.seeds
                .par_iter()
                .map(|&s| {
                    let tc = TrainConfig { seed: s, ..p.tc.clone() };
                    train_from(&p.spec, p.init.clone(), &p.train, None, &tc).map(|r| r.final_cl())
                })
                .collect()
        });
        let mut cls = vec![realized];
        for c in others {
            cls.push(c?);
        }
        bound_with_seed_mean(&inputs, &cls)?
    }
    .with_alpha(p.tc.alpha);
    let last = record.entries.last().expect("at least one logged point");
    let summary = RunSummary {
        algorithm: p.tc.algorithm,
        eta: p.tc.eta,
        eta_from_rule: p.eta_from_rule,
        max_feasible_eta: p.max_eta,
        c_f: p.c_f,
        c_y: p.train.c_y(),
        n_train: p.train.len(),
        n_test: p.test.as_ref().map_or(0, Dataset::len),
        logged_points: record.entries.len(),
        final_train_loss: last.loss,
        final_test_loss: last.test_loss,
        final_cl: realized,
        max_abs_f: record.max_abs_f,
        bound: report.bound,
        replicate_seeds: cfg.seeds.clone(),
    };
    Ok(RunOutput { spec: p.spec, record, report, rows, summary })
}

fn chart(rows: &[TrajectoryRow]) -> String {
    let pick = |f: &dyn Fn(&TrajectoryRow) -> f64| rows.iter().map(|r| (r.time, f(r))).collect::<Vec<_>>();
    let mut series = vec![Series { name: "train loss", points: pick(&|r| r.ln_train) }];
    if rows.iter().any(|r| r.ln_test.is_some()) {
        series.push(Series { name: "test loss", points: pick(&|r| r.ln_test.unwrap_or(f64::NAN)) });
        series.push(Series {
            name: "|test - train|",
            points: pick(&|r| r.ln_test.map_or(f64::NAN, |te| (te - r.ln_train).abs())),
        });
    }
    series.push(Series { name: "bound", points: pick(&|r| r.bound_prefix) });
    line_chart("loss and bound", "t", &series)
}

/// Trains and writes `trajectory.csv`, `bound_report.json`, `run.json`
/// and, if enabled, `chart.svg` into `out`. On divergence the partial
/// trajectory is still written, next to `error.txt`.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutput, ExpError> {
    fs::create_dir_all(out).map_err(|e| ExpError::io(out, e))?;
    let err_path = out.join("error.txt");
    match run_experiment(cfg) {
        Ok(run) => {
            write_trajectory_csv(&out.join("trajectory.csv"), &run.rows)?;
            write_json(&out.join("bound_report.json"), &run.report)?;
            write_json(&out.join("run.json"), &run.summary)?;
            if cfg.svg {
                let p = out.join("chart.svg");
                fs::write(&p, chart(&run.rows)).map_err(|e| ExpError::io(&p, e))?;
            }
            if err_path.exists() {
                fs::remove_file(&err_path).map_err(|e| ExpError::io(&err_path, e))?;
            }
            Ok(run)
        }
        Err(ExpError::Train(err @ TrainError::Diverged { .. })) => {
            let partial = err.partial().expect("diverged carries a trajectory");
            let spec = cfg.spec()?;
            if let Ok(inputs) = bound_inputs(cfg, &spec, partial) {
                write_trajectory_csv(&out.join("trajectory.csv"), &trajectory_rows(partial, &inputs))?;
            }
            fs::write(&err_path, format!("{err}\n")).map_err(|e| ExpError::io(&err_path, e))?;
            Err(ExpError::Train(err))
        }
        Err(e) => Err(e),
    }
}

/// Recomputes the bound from a trajectory CSV and the config. Returns the
/// report and the per-row bound series; writes `bound_recomputed.json`
/// when `out` is given.
pub fn cmd_bound(cfg: &ExperimentConfig, csv: &Path, out: Option<&Path>) -> Result<(BoundReport, Vec<f64>), ExpError> {
    let rows = super::io::read_trajectory_csv(csv)?;
    let first = rows.first().ok_or_else(|| ExpError::Format(format!("{}: no rows", csv.display())))?;
    let spec = cfg.spec()?;
    let (train, _) = load_data(cfg)?;
    let inputs = BoundInputs::from_spec(
        Theorem::for_algorithm(cfg.train.algorithm),
        &spec,
        first.norm_sq.clone(),
        cfg.train.lambda,
        cfg.delta,
        train.len(),
        cfg.rho_for_bound(),
    );
    let series: Vec<f64> = rows.iter().map(|r| inputs.bound(r.cl)).collect();
    let report = bound_from_parts(&inputs, rows.last().map_or(0.0, |r| r.cl))?.with_alpha(cfg.train.alpha);
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| ExpError::io(dir, e))?;
        write_json(&dir.join("bound_recomputed.json"), &report)?;
    }
    Ok((report, series))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub algorithm: Algorithm,
    /// `inf` for the noiseless GD row.
    pub beta: f64,
    pub cl: f64,
    pub cl_bound: f64,
    pub sgld_bound: f64,
}

/// SGLD at each configured beta plus a GD row; writes `compare.csv`.
pub fn cmd_compare(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<CompareRow>, ExpError> {
    let section = cfg.compare.as_ref().ok_or_else(|| ExpError::config("compare", "config has no compare section"))?;
    let m = section.loss_bound.ok_or_else(|| ExpError::config("loss_bound", "compare needs the loss bound M"))?;
    let lip = section.lipschitz.ok_or_else(|| ExpError::config("lipschitz", "compare needs the Lipschitz constant"))?;
    if section.betas.is_empty() {
        return Err(ExpError::config("betas", "no beta values"));
    }
    let p = prepare(cfg)?;
    let mut jobs: Vec<Option<f64>> = section.betas.iter().copied().map(Some).collect();
    jobs.push(None);
    let rows: Vec<Result<CompareRow, ExpError>> = with_pool(|| {
        jobs.par_iter()
            .map(|&beta| {
                let algorithm = if beta.is_some() { Algorithm::Sgld } else { Algorithm::Gd };
                let tc = TrainConfig { algorithm, beta, ..p.tc.clone() };
                let record = train_from(&p.spec, p.init.clone(), &p.train, None, &tc)?;
                let inputs = trajectory_inputs(&record, &p.spec, tc.lambda, cfg.delta, p.train.len(), None)?;
                let cl = record.final_cl();
                let steps = record.entries.len().saturating_sub(1);
                let etas: Vec<f64> = record.entries[..steps].iter().map(|e| e.eta).collect();
                let sgld_value = sgld_bound(&SgldBoundInputs {
                    loss_bound: m,
                    lipschitz: lip,
                    beta: beta.unwrap_or(f64::INFINITY),
                    n: p.train.len(),
                    horizon: SgldHorizon::Discrete { etas },
                })?;
                Ok(CompareRow {
                    algorithm,
                    beta: beta.unwrap_or(f64::INFINITY),
                    cl,
                    cl_bound: inputs.bound(cl),
                    sgld_bound: sgld_value,
                })
            })
            .collect()
    });
    let rows: Vec<CompareRow> = rows.into_iter().collect::<Result<_, _>>()?;
    fs::create_dir_all(out).map_err(|e| ExpError::io(out, e))?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                format!("{:?}", r.algorithm).to_uppercase(),
                r.beta.to_string(),
                r.cl.to_string(),
                r.cl_bound.to_string(),
                r.sgld_bound.to_string(),
            ]
        })
        .collect();
    write_table(&out.join("compare.csv"), &["algorithm", "beta", "CL", "cl_bound", "sgld_bound"], &table)?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Width,
    Lr,
    Noise,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Width => "width",
            SweepAxis::Lr => "lr",
            SweepAxis::Noise => "noise",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "width" => Ok(SweepAxis::Width),
            "lr" => Ok(SweepAxis::Lr),
            "noise" => Ok(SweepAxis::Noise),
            other => Err(format!("unknown sweep axis {other:?} (expected width, lr or noise)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub eta: f64,
    pub max_feasible_eta: Option<f64>,
    pub final_cl: f64,
    pub bound: f64,
    pub final_train_loss: f64,
    pub final_test_loss: Option<f64>,
}

fn variant(cfg: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig, ExpError> {
    let mut v = cfg.clone();
    match axis {
        SweepAxis::Width => {
            if v.network.fc_widths.is_empty() {
                return Err(ExpError::config("width", "width sweep needs fully connected layers"));
            }
            let w = value as usize;
            v.network.fc_widths.iter_mut().for_each(|x| *x = w);
        }
        SweepAxis::Lr => v.train.eta = EtaSetting::Value(value),
        SweepAxis::Noise => match &mut v.data {
            DataSource::Classification { noise, .. } => *noise = value,
            _ => return Err(ExpError::config("noise", "noise sweep needs a classification data source")),
        },
    }
    v.check()?;
    Ok(v)
}

/// One training run per axis value, each in `out/<axis>_<i>`; the summary
/// goes to `out/sweep_<axis>.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig, axis: SweepAxis, out: &Path) -> Result<Vec<SweepRow>, ExpError> {
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let values: Vec<f64> = match axis {
        SweepAxis::Width => sweep.width.iter().map(|&w| w as f64).collect(),
        SweepAxis::Lr => sweep.lr.clone(),
        SweepAxis::Noise => sweep.noise.clone(),
    };
    if values.is_empty() {
        return Err(ExpError::config(axis.name(), "sweep axis has no values"));
    }
    let variants: Vec<ExperimentConfig> = values.iter().map(|&v| variant(cfg, axis, v)).collect::<Result<_, _>>()?;
    let runs: Vec<Result<RunOutput, ExpError>> = with_pool(|| {
        variants.par_iter().enumerate().map(|(i, v)| cmd_train(v, &out.join(format!("{}_{i}", axis.name())))).collect()
    });
    let mut rows = Vec::with_capacity(values.len());
    for (value, run) in values.iter().zip(runs) {
        let run = run?;
        rows.push(SweepRow {
            value: *value,
            eta: run.summary.eta,
            max_feasible_eta: run.summary.max_feasible_eta,
            final_cl: run.summary.final_cl,
            bound: run.report.bound,
            final_train_loss: run.summary.final_train_loss,
            final_test_loss: run.summary.final_test_loss,
        });
    }
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.value.to_string(),
                r.eta.to_string(),
                opt(r.max_feasible_eta),
                r.final_cl.to_string(),
                r.bound.to_string(),
                r.final_train_loss.to_string(),
                opt(r.final_test_loss),
            ]
        })
        .collect();
    write_table(
        &out.join(format!("sweep_{}.csv", axis.name())),
        &[axis.name(), "eta", "max_feasible_eta", "final_CL", "bound", "final_Ln_train", "final_Ln_test"],
        &table,
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenKind {
    Regression,
    Classification,
    IdxFixture,
}

impl FromStr for GenKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "regression" => Ok(GenKind::Regression),
            "classification" => Ok(GenKind::Classification),
            "idx-fixture" => Ok(GenKind::IdxFixture),
            other => Err(format!("unknown data kind {other:?} (expected regression, classification or idx-fixture)")),
        }
    }
}

/// Stroke-like 28x28 images for labels 0 (ring), 1 (bar) and 7 (hook).
pub fn idx_fixture(n: usize, seed: u64) -> IdxImages {
    const S: usize = 28;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(n * S * S);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = [0u8, 1, 7][rng.random_range(0..3)];
        let (dx, dy) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        for r in 0..S {
            for c in 0..S {
                let (y, x) = (r as f64 - 13.5 - dy, c as f64 - 13.5 - dx);
                let on = match label {
                    0 => ((x * x + y * y).sqrt() - 8.0).abs() < 1.6,
                    1 => x.abs() < 1.6 && y.abs() < 10.0,
                    _ => {
                        ((y + 9.0).abs() < 1.4 && x.abs() < 8.0) || ((x - 0.4 * y).abs() < 1.5 && y > -9.0 && y < 10.0)
                    }
                };
                let base: f64 = if on { 220.0 } else { 0.0 };
                let v = (base + rng.random_range(0.0..35.0)).min(255.0);
                pixels.push(v as u8);
            }
        }
        labels.push(label);
    }
    IdxImages { rows: S, cols: S, pixels, labels }
}

/// Writes a dataset CSV (`regression`, `classification`) or an IDX pair
/// `images.idx` / `labels.idx` under directory `out` (`idx-fixture`).
pub fn cmd_gen_data(
    kind: GenKind,
    n: usize,
    seed: u64,
    out: &Path,
    c_y: Option<f64>,
    noise: f64,
) -> Result<(), ExpError> {
    if n == 0 {
        return Err(ExpError::Usage("n must be positive".into()));
    }
    let write_csv = |ds: &Dataset| -> Result<(), ExpError> {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| ExpError::io(dir, e))?;
        }
        let f = fs::File::create(out).map_err(|e| ExpError::io(out, e))?;
        ds.write_csv(std::io::BufWriter::new(f))?;
        Ok(())
    };
    match kind {
        GenKind::Regression => write_csv(&datagen::synth_regression(n, seed)?),
        GenKind::Classification => {
            let ds = datagen::synth_classification(n, c_y.unwrap_or(0.25), seed)?;
            let ds = if noise > 0.0 { datagen::inject_label_noise(&ds, noise, seed.wrapping_add(1))? } else { ds };
            write_csv(&ds)
        }
        GenKind::IdxFixture => {
            fs::create_dir_all(out).map_err(|e| ExpError::io(out, e))?;
            datagen::write_idx(&idx_fixture(n, seed), &out.join("images.idx"), &out.join("labels.idx"))?;
            Ok(())
        }
    }
}
