use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use genbound::datagen::{load_idx, Dataset, Split};
use genbound::experiment::io::{read_table, read_trajectory_csv, write_trajectory_csv};
use genbound::experiment::{cmd_bound, ExperimentConfig, VerificationReport};
use tempfile::TempDir;

const SMALL: &str = r#"{
  "network": {"input_dim": 3, "fc_widths": [16], "norm_exponent": 0.5},
  "train": {"algorithm": "GD", "eta": 0.2, "alpha": 1, "t0": 100, "total_steps": 30, "kappa": 1, "seed": 2},
  "data": {"kind": "regression", "n_train": 100, "n_test": 50, "seed": 4},
  "svg": true,
  "sweep": {"lr": [0.2], "width": []}
}"#;

fn genbound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genbound")).args(args).env("GENBOUND_THREADS", "2").output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train(cfg: &Path, out: &Path) -> Output {
    let o = genbound(&["train", "--config", s(cfg), "--out", s(out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn train_emits_all_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let out = tmp.path().join("run");
    train(&cfg, &out);
    for f in ["trajectory.csv", "bound_report.json", "run.json", "chart.svg"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let rows = read_trajectory_csv(&out.join("trajectory.csv")).unwrap();
    assert_eq!(rows.len(), 31);
    assert!(rows.iter().all(|r| r.ln_test.is_some() && r.bound_prefix.is_finite()));
    let (header, _) = read_table(&out.join("trajectory.csv")).unwrap();
    for col in ["t", "eta_t", "Ln_train", "Ln_test", "psi", "CL", "norm_sq_1", "norm_sq_2", "bound_prefix"] {
        assert!(header.iter().any(|h| h == col), "{col}");
    }
    let svg = fs::read_to_string(out.join("chart.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn zero_steps_give_one_row() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &SMALL.replace("\"total_steps\": 30", "\"total_steps\": 0"));
    let out = tmp.path().join("run");
    train(&cfg, &out);
    let text = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &SMALL.replace("\"GD\"", "\"SGD\", \"batch\": 10"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    train(&cfg, &a);
    train(&cfg, &b);
    assert_eq!(files(&a), files(&b));
    // a different seed changes the run
    let c = tmp.path().join("c");
    let o = genbound(&["train", "--config", s(&cfg), "--out", s(&c), "--seed", "99"]);
    assert!(o.status.success());
    assert_ne!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(c.join("trajectory.csv")).unwrap());
}

#[test]
fn trajectory_csv_round_trips() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let out = tmp.path().join("run");
    train(&cfg, &out);
    let path = out.join("trajectory.csv");
    let rows = read_trajectory_csv(&path).unwrap();
    let again = tmp.path().join("again.csv");
    write_trajectory_csv(&again, &rows).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    assert_eq!(read_trajectory_csv(&again).unwrap(), rows);
}

#[test]
fn bound_recomputed_from_csv_matches_prefix_column() {
    let tmp = TempDir::new().unwrap();
    for (name, text) in [("gd.json", SMALL.to_string()), ("sgd.json", SMALL.replace("\"GD\"", "\"SGD\", \"batch\": 7"))]
    {
        let cfg_path = write_config(tmp.path(), name, &text);
        let out = tmp.path().join(name.replace(".json", ""));
        train(&cfg_path, &out);
        let cfg = ExperimentConfig::load(&cfg_path).unwrap();
        let csv = out.join("trajectory.csv");
        let (report, series) = cmd_bound(&cfg, &csv, None).unwrap();
        let rows = read_trajectory_csv(&csv).unwrap();
        for (r, b) in rows.iter().zip(&series) {
            assert!((r.bound_prefix - b).abs() <= 1e-12 * b, "t={} {} vs {}", r.t, r.bound_prefix, b);
        }
        let saved: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join("bound_report.json")).unwrap()).unwrap();
        assert!((saved["bound"].as_f64().unwrap() - report.bound).abs() <= 1e-12 * report.bound);

        let o = genbound(&["bound", "--config", s(&cfg_path), "--trajectory", s(&csv), "--out", s(&out)]);
        assert!(o.status.success());
        assert!(out.join("bound_recomputed.json").is_file());
    }
}

#[test]
fn verify_selector_and_failure_modes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("v");
    let o = genbound(&["verify", "--suite", "psi", "--out", s(&out)]);
    assert!(o.status.success());
    let rep: VerificationReport = serde_json::from_slice(&fs::read(out.join("verification.json")).unwrap()).unwrap();
    assert!(rep.passed);
    assert!(rep.checks.iter().all(|c| c.name.starts_with("psi")));

    let o = genbound(&["verify", "--suite", "homogeneity", "--inject-bug", "--seed", "3", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let rep: VerificationReport = serde_json::from_slice(&fs::read(out.join("verification.json")).unwrap()).unwrap();
    assert!(!rep.passed);
    assert!(rep.checks.iter().filter(|c| c.name.starts_with("homogeneity_")).any(|c| c.passed));
    assert!(!rep.checks.iter().find(|c| c.name == "homogeneity_injected_bug").unwrap().passed);

    let o = genbound(&["verify", "--suite", "nonsense", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown suite"));
}

const COMPARE: &str = r#"{
  "network": {"input_dim": 3, "fc_widths": [8], "norm_exponent": 0.5},
  "train": {"algorithm": "SGLD", "eta": 0.01, "alpha": 1, "total_steps": 40, "kappa": 1, "seed": 1},
  "data": {"kind": "regression", "n_train": 50, "seed": 2},
  "compare": {"betas": [1, 10, 100], "loss_bound": 1, "lipschitz": 2}
}"#;

#[test]
fn compare_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", COMPARE);
    let out = tmp.path().join("cmp");
    let o = genbound(&["compare", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_table(&out.join("compare.csv")).unwrap();
    assert_eq!(header, vec!["algorithm", "beta", "CL", "cl_bound", "sgld_bound"]);
    assert_eq!(rows.len(), 4);
    let num = |r: &Vec<String>, i: usize| r[i].parse::<f64>().unwrap();
    let gd = rows.iter().find(|r| r[0] == "GD").unwrap();
    assert_eq!(num(gd, 4), f64::INFINITY);
    let sgld: Vec<&Vec<String>> = rows.iter().filter(|r| r[0] == "SGLD").collect();
    for w in sgld.windows(2) {
        assert!(num(w[1], 1) > num(w[0], 1));
        assert!(num(w[1], 4) > num(w[0], 4));
    }
    assert!(rows.iter().all(|r| num(r, 3).is_finite()));
    // M Lip sqrt(beta/(8n) sum eta) with 40 constant steps of 0.01/ceil(t+1)
    let eta_sum: f64 = (0..40).map(|t| 0.01 / (t as f64 + 1.0)).sum();
    let want = 2.0 * (1.0 / (8.0 * 50.0) * eta_sum).sqrt();
    assert!((num(sgld[0], 4) - want).abs() < 1e-12);
}

#[test]
fn compare_requires_m_and_lip() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &COMPARE.replace(", \"loss_bound\": 1", ""));
    let o = genbound(&["compare", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("loss"));
}

#[test]
fn sweep_degenerate_and_empty_axes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let out = tmp.path().join("sw");
    let o = genbound(&["sweep", "--config", s(&cfg), "--axis", "lr", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let single = tmp.path().join("single");
    train(&cfg, &single);
    assert_eq!(files(&out.join("lr_0")), files(&single));
    let (header, rows) = read_table(&out.join("sweep_lr.csv")).unwrap();
    assert_eq!(header[0], "lr");
    assert_eq!(rows.len(), 1);

    let o = genbound(&["sweep", "--config", s(&cfg), "--axis", "width", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = genbound(&["sweep", "--config", s(&cfg), "--axis", "noise", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_data_outputs_parse() {
    let tmp = TempDir::new().unwrap();
    let reg = tmp.path().join("reg.csv");
    assert!(genbound(&["gen-data", "--kind", "regression", "--n", "20", "--seed", "1", "--out", s(&reg)])
        .status
        .success());
    let ds = Dataset::read_csv(fs::File::open(&reg).unwrap(), 1.0, Split::Train).unwrap();
    assert_eq!((ds.len(), ds.dim()), (20, 3));
    let want = genbound::datagen::synth_regression(20, 1).unwrap();
    assert_eq!((ds.inputs(), ds.targets()), (want.inputs(), want.targets()));

    let cls = tmp.path().join("cls.csv");
    let o = genbound(&[
        "gen-data",
        "--kind",
        "classification",
        "--n",
        "30",
        "--out",
        s(&cls),
        "--c-y",
        "0.5",
        "--noise",
        "0.2",
    ]);
    assert!(o.status.success());
    let ds = Dataset::read_csv(fs::File::open(&cls).unwrap(), 0.5, Split::Train).unwrap();
    assert!(ds.targets().iter().all(|&y| y == 0.0 || y == 0.5));

    let idx = tmp.path().join("idx");
    assert!(genbound(&["gen-data", "--kind", "idx-fixture", "--n", "12", "--out", s(&idx)]).status.success());
    let ds = load_idx(&idx.join("images.idx"), &idx.join("labels.idx"), [0, 1], 0.25).unwrap();
    assert!(ds.len() <= 12 && ds.dim() == 784);

    // csv data source pointing at the generated file, relative to the config
    let cfg = SMALL.replace(
        r#"{"kind": "regression", "n_train": 100, "n_test": 50, "seed": 4}"#,
        r#"{"kind": "csv", "path": "reg.csv", "c_y": 1.0, "train_fraction": 0.5}"#,
    );
    let cfg = write_config(tmp.path(), "csv.json", &cfg);
    train(&cfg, &tmp.path().join("from_csv"));

    assert_eq!(genbound(&["gen-data", "--kind", "regression", "--n", "0", "--out", s(&reg)]).status.code(), Some(2));
}

#[test]
fn config_errors_carry_a_line() {
    let tmp = TempDir::new().unwrap();
    let bad = SMALL.replace("\"kappa\": 1,", "\"kappa\": 1, \"kapa\": 2,");
    let cfg = write_config(tmp.path(), "c.json", &bad);
    let o = genbound(&["train", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr).to_string();
    assert!(err.contains("kapa") && err.contains("line 3"), "{err}");

    let bad = SMALL.replace("\"alpha\": 1,", "\"alpha\": 1.5,");
    let cfg = write_config(tmp.path(), "c2.json", &bad);
    let err = String::from_utf8_lossy(&genbound(&["train", "--config", s(&cfg)]).stderr).to_string();
    assert!(err.contains("alpha") && err.contains("line 3"), "{err}");
}

#[test]
fn divergence_keeps_partial_trajectory() {
    let tmp = TempDir::new().unwrap();
    let bad = SMALL.replace("\"eta\": 0.2", "\"eta\": 10000").replace("\"kappa\": 1", "\"kappa\": 3");
    let cfg = write_config(tmp.path(), "c.json", &bad);
    let out = tmp.path().join("div");
    let o = genbound(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("error.txt").is_file());
    assert!(!read_trajectory_csv(&out.join("trajectory.csv")).unwrap().is_empty());
}
