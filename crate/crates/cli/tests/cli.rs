use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qpl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn qpl")
}

fn ok(args: &[&str]) -> String {
    let out = qpl(args);
    assert!(
        out.status.success(),
        "qpl {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    qpl(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_writes_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    ok(&[
        "simulate",
        "--alpha",
        "3.6",
        "--eps-prime",
        "0.5",
        "--n",
        "100000",
        "--out",
        p(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,x,phi"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 100_000);
    for row in rows.iter().step_by(997) {
        let x: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&x));
    }
}

#[test]
fn simulate_single_row_is_initial_state() {
    let out = ok(&[
        "simulate",
        "--n",
        "1",
        "--burn-in",
        "0",
        "--x0",
        "0.25",
        "--phi0",
        "0.5",
    ]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    let fields: Vec<f64> = lines[1].split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(fields, vec![0.0, 0.25, 0.5]);
}

#[test]
fn config_errors_exit_with_two() {
    assert_eq!(code(&["simulate", "--alpha", "4.1", "--epsilon", "0"]), 2);
    assert_eq!(
        code(&["simulate", "--epsilon", "0.1", "--eps-prime", "0.1"]),
        2
    );
    assert_eq!(code(&["simulate", "--x0", "1.5"]), 2);
    assert_eq!(code(&["run", "--regime-preset", "c9"]), 2);
    assert_eq!(code(&["run", "--units", "0"]), 2);
    assert_eq!(code(&["run", "--lr", "-1"]), 2);
    assert_eq!(code(&["multistep", "--horizon", "1"]), 2);
    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(
        code(&["lyapunov", "--config", "/definitely/missing.toml"]),
        2
    );
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ckpt");
    assert_eq!(code(&["eval", "--checkpoint", p(&missing)]), 1);
    let garbage = dir.path().join("garbage.ckpt");
    fs::write(&garbage, "not a checkpoint\n").unwrap();
    assert_eq!(code(&["eval", "--checkpoint", p(&garbage)]), 1);
}

#[test]
fn one_cell_scan_matches_lyapunov() {
    let lambda: f64 = ok(&[
        "lyapunov",
        "--alpha",
        "3.6",
        "--eps-prime",
        "0.5",
        "--n",
        "20000",
    ])
    .trim()
    .parse()
    .unwrap();
    let scan = ok(&[
        "phase-scan",
        "--alpha-min",
        "3.6",
        "--alpha-max",
        "3.6",
        "--alpha-steps",
        "1",
        "--eps-prime-min",
        "0.5",
        "--eps-prime-max",
        "0.5",
        "--eps-prime-steps",
        "1",
        "--n",
        "20000",
    ]);
    let rows: Vec<&str> = scan.lines().collect();
    assert_eq!(rows.len(), 2);
    let fields: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(fields[2].parse::<f64>().unwrap(), lambda);
    assert_eq!(fields[3], "chaotic");
}

#[test]
fn default_phase_scan_grid() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("phase.csv");
    ok(&["phase-scan", "--out", p(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 141 * 101);
    let first: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(first[0].parse::<f64>().unwrap(), 2.6);
    assert_eq!(first[1].parse::<f64>().unwrap(), 0.0);
    let last: Vec<&str> = rows.last().unwrap().split(',').collect();
    assert_eq!(last[0].parse::<f64>().unwrap(), 4.0);
    // alpha = 4 with a finite eps' has no valid epsilon
    assert_eq!(last[3], "error");
}

#[test]
fn preset_cells_are_chaotic() {
    for (alpha, prime) in [("3.6", "0.5"), ("3.9", "1"), ("3", "1"), ("3.1", "0.8")] {
        let out = ok(&[
            "phase-scan",
            "--alpha-min",
            alpha,
            "--alpha-max",
            alpha,
            "--alpha-steps",
            "1",
            "--eps-prime-min",
            prime,
            "--eps-prime-max",
            prime,
            "--eps-prime-steps",
            "1",
        ]);
        assert!(
            out.lines().nth(1).unwrap().ends_with(",chaotic"),
            "{alpha} {prime}: {out}"
        );
    }
}

const QUICK: [&str; 6] = ["--n", "3000", "--epochs", "2", "--units", "4"];

fn quick<'a>(head: &[&'a str], out: &'a Path) -> Vec<&'a str> {
    let mut args = head.to_vec();
    args.extend_from_slice(&QUICK);
    args.extend_from_slice(&["--out", p(out)]);
    args
}

#[test]
fn run_writes_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&quick(
        &["run", "--regime-preset", "c2b", "--seed", "3"],
        &a,
    ));
    ok(&quick(
        &["run", "--regime-preset", "c2b", "--seed", "3"],
        &b,
    ));
    let run = a.join("c2b_seed3");
    for f in [
        "model.ckpt",
        "loss_history.csv",
        "scatter.csv",
        "scatter.csv.summary",
        "summary.json",
    ] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let summary = fs::read(run.join("summary.json")).unwrap();
    assert_eq!(summary, fs::read(b.join("c2b_seed3/summary.json")).unwrap());
    assert_eq!(
        fs::read(run.join("model.ckpt")).unwrap(),
        fs::read(b.join("c2b_seed3/model.ckpt")).unwrap()
    );
    let json: serde_json::Value = serde_json::from_slice(&summary).unwrap();
    assert_eq!(json["regime"], "C2");
    assert_eq!(json["preset"], "c2b");
    assert_eq!(json["alpha"], 3.1);
    assert_eq!(json["W"], 1);
    assert_eq!(json["H"], 1);
    assert_eq!(json["units"], 4);
    assert_eq!(json["seed"], 3);
    assert!(json["rmse"].as_f64().unwrap() > 0.0);
    let history = fs::read_to_string(run.join("loss_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
}

#[test]
fn eval_reproduces_run_score() {
    let dir = tempfile::tempdir().unwrap();
    ok(&quick(&["run", "--regime-preset", "c1a"], dir.path()));
    let run = dir.path().join("c1a_seed0");
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(run.join("summary.json")).unwrap()).unwrap();
    let eval_dir = dir.path().join("eval");
    ok(&[
        "eval",
        "--checkpoint",
        p(&run.join("model.ckpt")),
        "--regime-preset",
        "c1a",
        "--n",
        "3000",
        "--out",
        p(&eval_dir),
    ]);
    let again: serde_json::Value =
        serde_json::from_slice(&fs::read(eval_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["rmse"], again["rmse"]);
    assert_eq!(
        fs::read(run.join("scatter.csv")).unwrap(),
        fs::read(eval_dir.join("scatter.csv")).unwrap()
    );
}

#[test]
fn run_with_horizon_writes_step_files() {
    let dir = tempfile::tempdir().unwrap();
    ok(&quick(&["run", "--horizon", "3"], dir.path()));
    let run = dir.path().join("c1a_seed0_h3");
    for k in 1..=3 {
        let text = fs::read_to_string(run.join(format!("scatter_step{k}.csv"))).unwrap();
        assert_eq!(text.lines().next(), Some("actual,predicted"));
        let sidecar = fs::read_to_string(run.join(format!("scatter_step{k}.csv.summary"))).unwrap();
        assert!(sidecar.starts_with(&format!("step={k} ")));
    }
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["per_step_rmse"].as_array().unwrap().len(), 3);
}

#[test]
fn multistep_defaults_to_five_steps() {
    let dir = tempfile::tempdir().unwrap();
    ok(&quick(&["multistep", "--recursive"], dir.path()));
    let run = dir.path().join("c1a_seed0_h5");
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["H"], 5);
    assert_eq!(json["per_step_rmse"].as_array().unwrap().len(), 5);
    let rec: serde_json::Value =
        serde_json::from_slice(&fs::read(run.join("recursive_summary.json")).unwrap()).unwrap();
    assert_eq!(rec["per_step_rmse"].as_array().unwrap().len(), 5);
}

#[test]
fn sweep_units_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "sweep-units",
        "--units-list",
        "2,4",
        "--n",
        "2000",
        "--epochs",
        "1",
        "--out",
        p(dir.path()),
    ]);
    let file = fs::read_to_string(dir.path().join("c1a_seed0/sweep_units.csv")).unwrap();
    assert_eq!(out, file);
    let rows: Vec<&str> = file.lines().collect();
    assert_eq!(rows[0], "units,rmse");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("2,") && rows[2].starts_with("4,"));
    for row in &rows[1..] {
        assert!(row.split(',').nth(1).unwrap().parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn prepare_writes_windows_and_scaler() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "prepare",
        "--n",
        "100",
        "--window",
        "3",
        "--horizon",
        "2",
        "--out",
        p(dir.path()),
    ]);
    let run = dir.path().join("c1a_seed0_w3_h2");
    let train = fs::read_to_string(run.join("train.csv")).unwrap();
    assert_eq!(train.lines().next(), Some("in_1,in_2,in_3,out_1,out_2"));
    // 60 training points give 60 - 3 - 2 + 1 windows
    assert_eq!(train.lines().count() - 1, 56);
    let test = fs::read_to_string(run.join("test.csv")).unwrap();
    assert_eq!(test.lines().count() - 1, 36);
    let scaler: serde_json::Value =
        serde_json::from_slice(&fs::read(run.join("scaler.json")).unwrap()).unwrap();
    assert_eq!(scaler["a"], -1.0);
    assert_eq!(scaler["b"], 1.0);
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(
        &cfg,
        "regime_preset = \"c2a\"\nseed = 11\nunits = 3\nepochs = 1\nn = 2000\n",
    )
    .unwrap();
    ok(&[
        "run",
        "--config",
        p(&cfg),
        "--units",
        "5",
        "--out",
        p(dir.path()),
    ]);
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("c2a_seed11/summary.json")).unwrap())
            .unwrap();
    assert_eq!(json["units"], 5);
    assert_eq!(json["alpha"], 3.0);
    assert_eq!(json["seed"], 11);

    fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(code(&["lyapunov", "--config", p(&cfg)]), 2);
}
