use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn spinwave(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinwave"))
        .args(args)
        .current_dir(dir)
        .env("SPINWAVE_OUT_DIR", dir.join("out"))
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(out: Output) -> Output {
    assert_eq!(
        code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_config(dir: &Path, extra: &str) -> String {
    let text = format!(
        "run.storage_times_us = 0, peak:2\n\
         run.settings = rl/rl, 0/0, 45/45, 0/22.5, 0/157.5, 45/22.5, 45/157.5\n\
         run.trials_per_point = 20000\n{extra}"
    );
    let path = dir.join("small.conf");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn events(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn simulate_is_bit_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    ok(spinwave(
        &[
            "simulate", "--config", &cfg, "--seed", "42", "--out", "a.jsonl",
        ],
        dir.path(),
    ));
    ok(spinwave(
        &[
            "simulate", "--config", &cfg, "--seed", "42", "--out", "b.jsonl",
        ],
        dir.path(),
    ));
    ok(spinwave(
        &[
            "simulate", "--config", &cfg, "--seed", "43", "--out", "c.jsonl",
        ],
        dir.path(),
    ));
    let a = fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.jsonl")).unwrap());
    assert_ne!(a, fs::read(dir.path().join("c.jsonl")).unwrap());

    let manifest: Value =
        serde_json::from_slice(&fs::read(dir.path().join("a.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["schema_version"], 1);
    assert!(manifest["started_at"].is_string());
    assert_eq!(manifest["outputs"][0], "a.jsonl");
}

#[test]
fn default_out_dir_comes_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    ok(spinwave(&["simulate", "--config", &cfg], dir.path()));
    assert!(dir.path().join("out/events.jsonl").is_file());
}

#[test]
fn analyze_reports_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    ok(spinwave(
        &["simulate", "--config", &cfg, "--out", "e.jsonl"],
        dir.path(),
    ));
    ok(spinwave(&["analyze", "e.jsonl", "--out", "r1"], dir.path()));
    ok(spinwave(&["analyze", "e.jsonl", "--out", "r2"], dir.path()));
    for f in ["report.json", "estimates.csv", "coincidences.csv"] {
        assert_eq!(
            fs::read(dir.path().join("r1").join(f)).unwrap(),
            fs::read(dir.path().join("r2").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn zero_signal_write_out_leaves_only_background() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "rates.p_wo_signal = 0\n");
    ok(spinwave(
        &["simulate", "--config", &cfg, "--out", "e.jsonl"],
        dir.path(),
    ));
    let evs = events(&dir.path().join("e.jsonl"));
    assert!(!evs.is_empty());
    for e in &evs {
        if e.get("wo_port").is_some() {
            assert_eq!(e["wo_is_background"], true, "{e}");
        }
        if e.get("ro_port").is_some() {
            assert_eq!(e["ro_is_background"], true, "{e}");
        }
    }
}

#[test]
fn default_write_out_fraction() {
    let dir = TempDir::new().unwrap();
    ok(spinwave(
        &["simulate", "--seed", "42", "--out", "e.jsonl"],
        dir.path(),
    ));
    let evs = events(&dir.path().join("e.jsonl"));
    // 4 storage times × 7 setting pairs at the default trials per point.
    let n = 28.0 * 100_000.0;
    let clicks = evs.iter().filter(|e| e.get("wo_port").is_some()).count() as f64;
    let p: f64 = 6e-4 + (1.0 - 6e-4) * 7.1e-3;
    assert!((p - 7.7e-3).abs() < 1e-4);
    let frac = clicks / n;
    assert!(
        (frac - p).abs() < 4.0 * (p / n).sqrt(),
        "write-out fraction {frac}"
    );
}

#[test]
fn report_contains_every_estimator() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    ok(spinwave(
        &["simulate", "--config", &cfg, "--out", "e.jsonl"],
        dir.path(),
    ));
    let out = ok(spinwave(
        &["analyze", "e.jsonl", "--out", "rep"],
        dir.path(),
    ));
    assert!(String::from_utf8_lossy(&out.stdout).contains("V_RL"));
    let report: Value =
        serde_json::from_slice(&fs::read(dir.path().join("rep/report.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], "spinwave-report");
    let points = report["points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    for p in points {
        for key in ["V_RL", "V_HV", "V_DA", "V_avg", "S", "R_net", "R_int"] {
            let e = &p[key];
            assert!(e["value"].is_f64(), "{key}: {e}");
            assert!(e["sigma"].as_f64().unwrap() >= 0.0, "{key}");
            assert!(e["method"].is_string());
            assert_eq!(e["inputs_hash"].as_str().unwrap().len(), 64);
        }
    }
    let header = fs::read_to_string(dir.path().join("rep/estimates.csv")).unwrap();
    assert!(header
        .lines()
        .next()
        .unwrap()
        .starts_with("t (µs),V_RL (dimensionless)"));
    let coin = fs::read_to_string(dir.path().join("rep/coincidences.csv")).unwrap();
    assert_eq!(coin.lines().count(), 1 + 14);
}

#[test]
fn header_only_log_gives_insufficient_data_markers() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    ok(spinwave(
        &["simulate", "--config", &cfg, "--out", "e.jsonl"],
        dir.path(),
    ));
    let text = fs::read_to_string(dir.path().join("e.jsonl")).unwrap();
    fs::write(
        dir.path().join("empty.jsonl"),
        format!("{}\n", text.lines().next().unwrap()),
    )
    .unwrap();

    ok(spinwave(
        &["analyze", "empty.jsonl", "--out", "rep"],
        dir.path(),
    ));
    let report: Value =
        serde_json::from_slice(&fs::read(dir.path().join("rep/report.json")).unwrap()).unwrap();
    for p in report["points"].as_array().unwrap() {
        for key in ["V_RL", "S", "R_net", "R_int"] {
            assert_eq!(p[key]["status"], "insufficient data", "{key}");
            assert!(p[key]["value"].is_null());
        }
    }
    assert_eq!(
        report["visibility_decay_fit"]["status"],
        "insufficient data"
    );
}

#[test]
fn corrupt_log_exits_4_naming_the_line() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    ok(spinwave(
        &["simulate", "--config", &cfg, "--out", "e.jsonl"],
        dir.path(),
    ));
    let text = fs::read_to_string(dir.path().join("e.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().take(5).collect();
    let cut = &lines[4][..lines[4].len() / 2];
    lines[4] = cut;
    fs::write(dir.path().join("bad.jsonl"), lines.join("\n")).unwrap();

    let out = spinwave(&["analyze", "bad.jsonl"], dir.path());
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 5"));
}

#[test]
fn unknown_schema_version_is_refused() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    ok(spinwave(
        &["simulate", "--config", &cfg, "--out", "e.jsonl"],
        dir.path(),
    ));
    let text = fs::read_to_string(dir.path().join("e.jsonl")).unwrap();
    let bumped = text.replacen("\"schema_version\":1", "\"schema_version\":99", 1);
    assert_ne!(bumped, text);
    fs::write(dir.path().join("v99.jsonl"), bumped).unwrap();
    assert_eq!(code(&spinwave(&["analyze", "v99.jsonl"], dir.path())), 4);
}

#[test]
fn config_errors_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        code(&spinwave(
            &["simulate", "--config", "missing.conf"],
            dir.path()
        )),
        2
    );

    fs::write(dir.path().join("typo.conf"), "cavity.rpr = 0.8\n").unwrap();
    let out = spinwave(&["simulate", "--config", "typo.conf"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    fs::write(
        dir.path().join("phys.conf"),
        "# mirror\n\ncavity.r_pr = 1.5\n",
    )
    .unwrap();
    let out = spinwave(&["simulate", "--config", "phys.conf"], dir.path());
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("cavity.r_pr") && err.contains("line 3"),
        "{err}"
    );
}

#[test]
fn fit_echoes_sinusoid_period() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("t (µs),y (dimensionless)\n");
    for i in 0..60 {
        let t = i as f64 * 0.08;
        let y = 0.5
            + 0.35
                * (2.0 * std::f64::consts::PI * t / 1.19 + 0.4).cos()
                * (-(t / 20.0).powi(2)).exp();
        csv.push_str(&format!("{t},{y}\n"));
    }
    fs::write(dir.path().join("s.csv"), csv).unwrap();
    let out = ok(spinwave(
        &["fit", "s.csv", "--model", "sinusoid", "--out", "fit.json"],
        dir.path(),
    ));
    assert!(String::from_utf8_lossy(&out.stdout).contains("period"));
    let fit: Value =
        serde_json::from_slice(&fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    let period = fit["parameters"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["name"] == "period")
        .unwrap()["value"]
        .as_f64()
        .unwrap();
    assert!((period - 1.19).abs() < 1e-6, "{period}");
}

#[test]
fn two_point_fit_exits_3() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("two.csv"), "0,0.8\n5,0.7\n").unwrap();
    for model in ["sinusoid", "visibility-decay"] {
        assert_eq!(
            code(&spinwave(&["fit", "two.csv", "--model", model], dir.path())),
            3
        );
    }
    fs::write(dir.path().join("junk.csv"), "0,0.8\n5,abc\n").unwrap();
    assert_eq!(
        code(&spinwave(
            &["fit", "junk.csv", "--model", "sinusoid"],
            dir.path()
        )),
        2
    );
}

#[test]
fn unknown_target_exits_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        code(&spinwave(&["reproduce", "--target", "fig4"], dir.path())),
        2
    );
}

#[test]
fn reproduce_table1_writes_rows_and_summary() {
    let dir = TempDir::new().unwrap();
    let run = |out: &str| {
        ok(spinwave(
            &[
                "reproduce",
                "--target",
                "table1",
                "--trials",
                "400000",
                "--seed",
                "7",
                "--out",
                out,
            ],
            dir.path(),
        ))
    };
    let out = run("a");
    run("b");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("S(1.1 µs)"));

    let table = fs::read_to_string(dir.path().join("a/table1.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.starts_with("t_table (µs),"));
    let summary: Value =
        serde_json::from_slice(&fs::read(dir.path().join("a/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["target"], "table1");
    assert!(summary["all_pass"].is_boolean());
    assert_eq!(summary["result"]["rows"].as_array().unwrap().len(), 3);

    for f in ["table1.csv", "summary.json"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn reproduce_fig3b_has_one_row_per_mirror() {
    let dir = TempDir::new().unwrap();
    ok(spinwave(
        &[
            "reproduce",
            "--target",
            "fig3b",
            "--trials",
            "200000",
            "--out",
            "f",
        ],
        dir.path(),
    ));
    let table = fs::read_to_string(dir.path().join("f/fig3b_mirrors.csv")).unwrap();
    let mirrors: Vec<&str> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(mirrors, ["0.6", "0.7", "0.8", "0.9"]);
}

#[test]
fn calibrated_log_reproduces_early_chsh_value() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("chsh.conf"),
        "run.storage_times_us = peak:2\n\
         run.settings = 0/22.5, 0/157.5, 45/22.5, 45/157.5\n\
         run.trials_per_point = 2500000\n",
    )
    .unwrap();
    ok(spinwave(
        &[
            "simulate",
            "--config",
            "chsh.conf",
            "--seed",
            "11",
            "--out",
            "e.jsonl",
        ],
        dir.path(),
    ));
    ok(spinwave(
        &["analyze", "e.jsonl", "--out", "rep"],
        dir.path(),
    ));
    let report: Value =
        serde_json::from_slice(&fs::read(dir.path().join("rep/report.json")).unwrap()).unwrap();
    let s = &report["points"][0]["S"];
    let (value, sigma) = (s["value"].as_f64().unwrap(), s["sigma"].as_f64().unwrap());
    assert!((value - 2.30).abs() < 3.0 * sigma, "S = {value} ± {sigma}");
    assert!(report["points"][0]["V_RL"]["status"] == "insufficient data");
}
