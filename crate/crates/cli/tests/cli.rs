use std::path::Path;
use std::process::{Command, Output};

fn fmsv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmsv"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

#[test]
fn simulate_writes_one_pair_per_batch_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate",
        "--dgp",
        "dgp2",
        "--p",
        "5",
        "--t",
        "100",
        "--batches",
        "2",
        "--seed",
        "7",
    ];
    for out in ["a", "b"] {
        let mut a = args.to_vec();
        a.extend(["--out", out]);
        assert!(fmsv(dir.path(), &a).status.success());
    }
    for b in ["batch_000", "batch_001"] {
        for f in ["returns.csv", "true_cov.csv"] {
            assert_eq!(
                read(dir.path().join("a").join(b).join(f)),
                read(dir.path().join("b").join(b).join(f))
            );
        }
    }
    assert!(!dir.path().join("a/batch_002").exists());
    let returns = String::from_utf8(read(dir.path().join("a/batch_000/returns.csv"))).unwrap();
    assert_eq!(returns.lines().count(), 101);
}

#[test]
fn unknown_dgp_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fmsv(dir.path(), &["simulate", "--dgp", "dgp3"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("cfg.json"), "{\n  \"dgp\": \"dgp3\"\n}\n").unwrap();
    let out = fmsv(dir.path(), &["simulate", "-c", "cfg.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn factor_count_must_be_below_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let out = fmsv(
        dir.path(),
        &[
            "benchmark",
            "--p",
            "5",
            "--t",
            "200",
            "--batches",
            "1",
            "--models",
            "fmsv:5",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn benchmark_report_has_requested_models_and_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "benchmark",
        "--dgp",
        "dgp2",
        "--p",
        "6",
        "--t",
        "300",
        "--batches",
        "2",
        "--models",
        "sbekk,fmsv:2",
        "--set",
        "evaluation.mcs.reps=100",
    ];
    for out in ["r1", "r2"] {
        let mut a = base.to_vec();
        a.extend(["--out", out]);
        let o = fmsv(dir.path(), &a);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = read(dir.path().join("r1/benchmark.csv"));
    assert_eq!(csv, read(dir.path().join("r2/benchmark.csv")));
    let text = String::from_utf8(csv).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(&header[..5], &["model", "D_E", "D_F", "D_S", "D_3"]);
    let rows: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, vec!["sBEKK", "fMSV_2"]);
    let fmsv_row: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    assert!(fmsv_row[1..5].iter().all(|v| v.parse::<f64>().is_ok()));

    let report = fmsv(dir.path(), &["report", "--input", "r1/study_report.json"]);
    assert!(report.status.success());
    assert!(String::from_utf8_lossy(&report.stdout).contains("fMSV_2"));
}

#[test]
fn backtest_adds_equal_weight_and_reports_portfolio_columns() {
    let dir = tempfile::tempdir().unwrap();
    assert!(fmsv(
        dir.path(),
        &[
            "simulate",
            "--dgp",
            "dgp2",
            "--p",
            "5",
            "--t",
            "500",
            "--batches",
            "1",
            "--out",
            "sim"
        ]
    )
    .status
    .success());
    let args = [
        "backtest",
        "--returns",
        "sim/batch_000/returns.csv",
        "--models",
        "scov,dcc,fmsv:1",
        "--set",
        "evaluation.mcs.reps=100",
        "--plot-data",
    ];
    for out in ["x", "y"] {
        let mut a = args.to_vec();
        a.extend(["--out", out]);
        let o = fmsv(dir.path(), &a);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = read(dir.path().join("x/backtest.csv"));
    assert_eq!(csv, read(dir.path().join("y/backtest.csv")));
    let text = String::from_utf8(csv).unwrap();
    let header = text.lines().next().unwrap();
    for col in [
        "GMVP_AVG", "GMVP_SD", "GMVP_IR", "GMVP_MCS", "RPP_AVG", "RPP_SD", "RPP_IR", "RPP_MCS",
    ] {
        assert!(header.split(',').any(|h| h == col), "missing {col}");
    }
    let first_row = text.lines().nth(1).unwrap();
    assert!(first_row.starts_with("1/p,NA,"));
    assert!(dir.path().join("x/plot/fMSV_1_gmvp_cumret.csv").exists());
    assert!(dir.path().join("x/plot/equal_weight_rpp_cumret.csv").exists());
}

#[test]
fn fit_then_forecast() {
    let dir = tempfile::tempdir().unwrap();
    assert!(fmsv(
        dir.path(),
        &["simulate", "--p", "4", "--t", "400", "--batches", "1", "--out", "sim"]
    )
    .status
    .success());
    let r = "sim/batch_000/returns.csv";
    assert!(fmsv(
        dir.path(),
        &["fit", "--returns", r, "--model", "fmsv:1", "--output", "m.json"]
    )
    .status
    .success());
    let o = fmsv(
        dir.path(),
        &[
            "forecast",
            "--model",
            "m.json",
            "--returns",
            r,
            "--horizon",
            "3",
            "--output",
            "f.csv",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(read(dir.path().join("f.csv"))).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0].split(',').count(), 1 + 10);
    assert!(lines[3].starts_with("T+3,"));

    assert!(fmsv(
        dir.path(),
        &["fit", "--returns", r, "--model", "sbekk", "--output", "b.json"]
    )
    .status
    .success());
    let two_step = fmsv(
        dir.path(),
        &["forecast", "--model", "b.json", "--returns", r, "--horizon", "2"],
    );
    assert_eq!(two_step.status.code(), Some(2));
}

#[test]
fn malformed_returns_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "date,a,b\n1,0.1,0.2\n2,0.3\n").unwrap();
    let out = fmsv(dir.path(), &["backtest", "--returns", "bad.csv"]);
    assert_eq!(out.status.code(), Some(3));
    let out = fmsv(dir.path(), &["backtest", "--returns", "missing.csv"]);
    assert_eq!(out.status.code(), Some(3));
}
