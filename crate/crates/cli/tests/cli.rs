use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fleet-pricer")).args(args).output().expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn batch_writes_all_outputs_deterministically() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = |d: &Path| vec!["batch".to_string(), "--out".into(), out_arg(d), "--set".into(), "batch.days=3".into()];
    for d in [a.path(), b.path()] {
        let o = run(&args(d).iter().map(String::as_str).collect::<Vec<_>>());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["records.csv", "forecast.csv", "policy.csv", "benchmark.csv", "report.svg", "grouping.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let run_a = fs::read_to_string(a.path().join("run.json")).unwrap();
    let run_b = fs::read_to_string(b.path().join("run.json")).unwrap();
    // run.json embeds the output directory; everything else must match
    assert_eq!(run_a.replace(&out_arg(a.path()), "OUT"), run_b.replace(&out_arg(b.path()), "OUT"));
    assert!(a.path().join("metadata.json").exists());
}

#[test]
fn single_day_subcommands_share_an_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    assert!(run(&["simulate", "--out", &out, "--seed", "3"]).status.success());
    let input = dir.path().join("records.csv");
    let input = input.to_str().unwrap();
    for (cmd, file) in [
        ("estimate", "estimate.json"),
        ("forecast", "forecast.csv"),
        ("optimize", "policy.csv"),
        ("opportunity-cost", "opportunity_cost.json"),
    ] {
        let o = run(&[cmd, "--input", input, "--out", &out]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(dir.path().join(file).exists(), "{cmd} wrote no {file}");
    }
    let o = run(&["benchmark", "--input", input, "--out", &out, "--samples", "2000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("benchmark.csv")).unwrap();
    assert!(table.starts_with("label,expected_margin"));
    assert!(dir.path().join("montecarlo.json").exists());
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, r#"{"batch": {"days": 1}, "optimizer": {"bounds": [0.95, 1.05]}}"#).unwrap();
    let out = out_arg(dir.path());
    let o = run(&["batch", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let policy = fs::read_to_string(dir.path().join("policy.csv")).unwrap();
    let header: Vec<&str> = policy.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "multiplier").unwrap();
    for line in policy.lines().skip(1) {
        let m: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
        assert!((0.95..=1.05).contains(&m), "{m}");
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = run(&["batch", "--out", &out, "--set", "optimizer.band=[2,1]"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("optimizer.band"));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{not json").unwrap();
    assert_eq!(run(&["batch", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["batch", "--config", "/nonexistent/config.json"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("records.csv");
    fs::write(&input, "booking_date,pickup_date\n2024-01-01,2024-01-02\n").unwrap();
    let out = out_arg(dir.path());
    let o = run(&["forecast", "--input", input.to_str().unwrap(), "--out", &out]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing column"));
    let o = run(&["estimate", "--input", dir.path().join("absent.csv").to_str().unwrap(), "--out", &out]);
    assert_eq!(o.status.code(), Some(3));
}
