use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use spinwave::analysis::{fit_damped_sinusoid, fit_visibility_decay, tabulate, FitResult};
use spinwave::eventlog::{read_log, sha256_hex, write_log, LogHeader};
use spinwave::montecarlo::{simulate_block, BlockModel, ExperimentConfig};
use spinwave::scenario::{self, Check};

use crate::config::{RunConfig, DEFAULT_CONFIG_TEXT};
use crate::error::{code, CliError};
use crate::output::{
    default_out_dir, ensure_dir, ensure_parent, num, write_csv, write_json, ManifestBuilder,
};
use crate::report;
use crate::{FitModel, Target};

pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::read(p, e))?,
        None => DEFAULT_CONFIG_TEXT.to_string(),
    };
    RunConfig::parse(&text).map_err(|e| match path {
        Some(p) => CliError::new(
            CliError::from(e.clone()).code,
            format!("{}: {e}", p.display()),
        ),
        None => e.into(),
    })
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(suffix);
    out.with_file_name(name)
}

pub fn simulate(
    config: Option<&Path>,
    seed: u64,
    trials: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let started = ManifestBuilder::start();
    let mut run = load_config(config)?;
    if let Some(t) = trials {
        run.trials_per_point = t;
    }
    let exp = run.to_experiment()?;
    let out = out.unwrap_or_else(|| default_out_dir().join("events.jsonl"));
    ensure_parent(&out)?;

    let header = LogHeader::new(&exp, seed);
    let file = File::create(&out).map_err(|e| CliError::write(&out, e))?;
    let mut w = BufWriter::new(file);
    write_log(&mut w, &header, &[]).map_err(|e| CliError::write(&out, e))?;
    let (mut events, mut wo_clicks, mut coincidences) = (0u64, 0u64, 0u64);
    for block in exp.plan() {
        let model = BlockModel::new(&exp, block)?;
        let batch = simulate_block(&model, seed);
        events += batch.len() as u64;
        wo_clicks += batch.iter().filter(|e| e.wo_port.is_some()).count() as u64;
        coincidences += batch.iter().filter(|e| e.is_coincidence()).count() as u64;
        for event in &batch {
            serde_json::to_writer(&mut w, event).map_err(|e| CliError::write(&out, e))?;
            w.write_all(b"\n").map_err(|e| CliError::write(&out, e))?;
        }
    }
    w.flush().map_err(|e| CliError::write(&out, e))?;

    // Effective configuration, including the --trials override.
    let config_file = sibling(&out, ".conf");
    fs::write(&config_file, run.to_text()).map_err(|e| CliError::write(&config_file, e))?;
    let manifest_file = sibling(&out, ".manifest.json");
    let manifest = started.finish(
        header.config_hash.clone(),
        Some(seed),
        &[out.clone(), config_file, manifest_file.clone()],
    );
    write_json(&manifest_file, &manifest)?;

    let trials = exp.plan().iter().map(|b| b.trials).sum::<u64>() as f64;
    println!(
        "wrote {} ({events} events, {} trials)",
        out.display(),
        trials
    );
    println!("config hash        {}", header.config_hash);
    println!(
        "write-out clicks   {:.4e} per trial",
        wo_clicks as f64 / trials
    );
    println!(
        "coincidences       {:.4e} per trial",
        coincidences as f64 / trials
    );
    Ok(())
}

pub fn analyze(events: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let started = ManifestBuilder::start();
    let bytes = fs::read(events).map_err(|e| CliError::read(events, e))?;
    let log = read_log(BufReader::new(bytes.as_slice())).map_err(|e| {
        let err = CliError::from(e);
        CliError::new(err.code, format!("{}: {}", events.display(), err.message))
    })?;
    let plan = log.header.config.plan();
    let tables = tabulate(&log.events, &plan)?;
    let report = report::build(&log.header, &tables, sha256_hex(&bytes));

    let dir = out.unwrap_or_else(|| default_out_dir().join("report"));
    ensure_dir(&dir)?;
    let report_path = dir.join("report.json");
    let coincidences_path = dir.join("coincidences.csv");
    let estimates_path = dir.join("estimates.csv");
    let manifest_path = dir.join("manifest.json");
    write_json(&report_path, &report)?;
    write_csv(
        &coincidences_path,
        report::COINCIDENCE_HEADER,
        &report::coincidence_rows(&tables),
    )?;
    write_csv(
        &estimates_path,
        report::ESTIMATES_HEADER,
        &report::estimate_rows(&report),
    )?;
    let manifest = started.finish(
        log.header.config_hash.clone(),
        Some(log.header.seed),
        &[
            report_path.clone(),
            coincidences_path,
            estimates_path,
            manifest_path.clone(),
        ],
    );
    write_json(&manifest_path, &manifest)?;

    let show = |e: &report::Entry| match (e.value, e.sigma) {
        (Some(v), Some(s)) => format!("{v:.4}({s:.4})"),
        _ => e.status.unwrap_or("-").to_string(),
    };
    println!(
        "{:>10}  {:>16}  {:>16}  {:>16}  {:>16}  {:>16}  {:>16}",
        "t (µs)", "V_RL", "V_HV", "V_DA", "S", "R_net", "R_int"
    );
    for p in &report.points {
        println!(
            "{:>10.4}  {:>16}  {:>16}  {:>16}  {:>16}  {:>16}  {:>16}",
            p.t_us,
            show(&p.V_RL),
            show(&p.V_HV),
            show(&p.V_DA),
            show(&p.S),
            show(&p.R_net),
            show(&p.R_int)
        );
        if let Some(note) = p.eberhard.as_ref().and_then(|e| e.note.as_ref()) {
            println!("{:>10}  {note}", "");
        }
    }
    println!("report written to {}", report_path.display());
    Ok(())
}

/// Reads a two-column (t, y) series; a non-numeric first row is a header.
pub fn read_series(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let file = File::open(path).map_err(|e| CliError::read(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(file);
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::new(code::USAGE, format!("{}: {e}", path.display())))?;
        let parsed = (
            record.get(0).and_then(|s| s.parse::<f64>().ok()),
            record.get(1).and_then(|s| s.parse::<f64>().ok()),
        );
        match parsed {
            (Some(t), Some(y)) => points.push((t, y)),
            _ if i == 0 => continue,
            _ => {
                return Err(CliError::new(
                    code::USAGE,
                    format!("{}: row {} is not two numbers", path.display(), i + 1),
                ))
            }
        }
    }
    Ok(points)
}

pub fn print_fit(fit: &FitResult) {
    println!(
        "model {}  converged {}  degenerate {}  iterations {}",
        fit.model, fit.converged, fit.degenerate, fit.iterations
    );
    println!("{:>12}  {:>22}  {:>14}", "parameter", "value", "sigma");
    for p in &fit.parameters {
        println!("{:>12}  {:>22.12}  {:>14.6e}", p.name, p.value, p.sigma);
    }
    println!("rss {:.6e}", fit.rss);
}

pub fn fit(series: &Path, model: FitModel, out: Option<PathBuf>) -> Result<(), CliError> {
    let points = read_series(series)?;
    let result = match model {
        FitModel::Sinusoid => fit_damped_sinusoid(&points),
        FitModel::VisibilityDecay => fit_visibility_decay(&points),
    }?;
    print_fit(&result);
    let out = out.unwrap_or_else(|| default_out_dir().join(format!("fit-{}.json", model.name())));
    write_json(&out, &result)?;
    Ok(())
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        let sigma = c.sigma.map(|s| format!(" ± {s:.4}")).unwrap_or_default();
        let rule = match (c.kind, c.tolerance) {
            (scenario::CheckKind::Within, Some(tol)) => format!("{} ± {tol:.4}", c.reference),
            (scenario::CheckKind::Above, _) => format!("> {:.4}", c.reference),
            (scenario::CheckKind::Below, _) => format!("< {:.4}", c.reference),
            (_, None) => format!("{}", c.reference),
        };
        println!(
            "{verdict}  {:<32} {:.4}{sigma}  (target {rule})",
            c.quantity, c.simulated
        );
    }
}

#[derive(serde::Serialize)]
struct Summary<'a, T: serde::Serialize> {
    target: &'a str,
    seed: u64,
    config_hash: String,
    all_pass: bool,
    checks: &'a [Check],
    result: &'a T,
}

pub fn reproduce(
    target: Target,
    config: Option<&Path>,
    seed: u64,
    trials: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let started = ManifestBuilder::start();
    let base: ExperimentConfig = load_config(config)?.to_experiment()?;
    let dir = out.unwrap_or_else(|| default_out_dir().join(target.name()));
    ensure_dir(&dir)?;
    let mut outputs = Vec::new();
    let mut csv_out =
        |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<(), CliError> {
            let path = dir.join(name);
            write_csv(&path, header, &rows)?;
            outputs.push(path);
            Ok(())
        };

    let (checks, summary_json) = match target {
        Target::Table1 => {
            let r = scenario::table1(&base, trials.unwrap_or(scenario::TABLE1_TRIALS), seed)?;
            csv_out(
                "table1.csv",
                &[
                    "t_table (µs)",
                    "t_simulated (µs)",
                    "S (dimensionless)",
                    "sigma_S (dimensionless)",
                    "SD (dimensionless)",
                    "reference_S (dimensionless)",
                    "reference_sigma_S (dimensionless)",
                    "reference_SD (dimensionless)",
                ],
                r.rows
                    .iter()
                    .map(|row| {
                        vec![
                            num(row.t_table_us),
                            num(row.t_us),
                            num(row.s.value),
                            num(row.s.sigma),
                            row.sd_violation.map(num).unwrap_or_default(),
                            num(row.reference_s),
                            num(row.reference_sigma),
                            num(row.reference_sd),
                        ]
                    })
                    .collect(),
            )?;
            (
                r.checks.clone(),
                summary(target, seed, &base, &r.checks, &r),
            )
        }
        Target::Fig2 => {
            let (osc, decay) = match trials {
                Some(t) => (t, t),
                None => (
                    scenario::FIG2_OSCILLATION_TRIALS,
                    scenario::FIG2_DECAY_TRIALS,
                ),
            };
            let r = scenario::fig2(&base, osc, decay, seed)?;
            let osc_header = [
                "t (µs)",
                "n_parallel (counts)",
                "n_perpendicular (counts)",
                "norm_parallel (dimensionless)",
                "norm_perpendicular (dimensionless)",
            ];
            for (name, setting) in [
                (
                    "fig2a_rl.csv",
                    spinwave::quantum_state::AnalyzerSetting::circular(),
                ),
                (
                    "fig2b_hv.csv",
                    spinwave::quantum_state::AnalyzerSetting::hv(),
                ),
                (
                    "fig2c_da.csv",
                    spinwave::quantum_state::AnalyzerSetting::da(),
                ),
            ] {
                let rows = r
                    .oscillation
                    .iter()
                    .filter(|p| p.setting == setting)
                    .map(|p| {
                        vec![
                            num(p.t_us),
                            p.n_parallel.to_string(),
                            p.n_perpendicular.to_string(),
                            num(p.norm_parallel),
                            num(p.norm_perpendicular),
                        ]
                    })
                    .collect();
                csv_out(name, &osc_header, rows)?;
            }
            let a = r.decay_fit.value("a");
            let tau = r.decay_fit.value("tau");
            csv_out(
                "fig2d_visibility.csv",
                &[
                    "t (µs)",
                    "V_RL (dimensionless)",
                    "sigma_V_RL (dimensionless)",
                    "V_HV (dimensionless)",
                    "sigma_V_HV (dimensionless)",
                    "V_DA (dimensionless)",
                    "sigma_V_DA (dimensionless)",
                    "V_avg (dimensionless)",
                    "sigma_V_avg (dimensionless)",
                    "V_fit (dimensionless)",
                ],
                r.decay
                    .iter()
                    .map(|d| {
                        let fit = 1.0 - 2.0 / (a * (-(d.t_us / tau).powi(2)).exp() + 1.0);
                        vec![
                            num(d.t_us),
                            num(d.v_rl.value),
                            num(d.v_rl.sigma),
                            num(d.v_hv.value),
                            num(d.v_hv.sigma),
                            num(d.v_da.value),
                            num(d.v_da.sigma),
                            num(d.v_avg.value),
                            num(d.v_avg.sigma),
                            num(fit),
                        ]
                    })
                    .collect(),
            )?;
            (
                r.checks.clone(),
                summary(target, seed, &base, &r.checks, &r),
            )
        }
        Target::Fig3a => {
            let r = scenario::fig3a(&base, trials.unwrap_or(scenario::FIG3A_TRIALS), seed)?;
            csv_out(
                "fig3a_retrieval.csv",
                &[
                    "t (µs)",
                    "R_net_tagged (dimensionless)",
                    "sigma_R_net_tagged (dimensionless)",
                    "R_int_tagged (dimensionless)",
                    "sigma_R_int_tagged (dimensionless)",
                    "R_net_formula (dimensionless)",
                    "sigma_R_net_formula (dimensionless)",
                    "R_int_model (dimensionless)",
                ],
                r.points
                    .iter()
                    .map(|p| {
                        vec![
                            num(p.t_us),
                            num(p.r_net_tagged.value),
                            num(p.r_net_tagged.sigma),
                            num(p.r_int_tagged.value),
                            num(p.r_int_tagged.sigma),
                            num(p.r_net_formula.value),
                            num(p.r_net_formula.sigma),
                            num(p.r_int_model),
                        ]
                    })
                    .collect(),
            )?;
            let model = base.retrieval;
            let crossing = |level: f64| model.tau_r * (model.r0 / level).ln().max(0.0).sqrt();
            csv_out(
                "fig3a_markers.csv",
                &["R_int_level (dimensionless)", "t_crossing (µs)"],
                [2.0 / 3.0, 0.5]
                    .iter()
                    .map(|&l| vec![num(l), num(crossing(l))])
                    .collect(),
            )?;
            (
                r.checks.clone(),
                summary(target, seed, &base, &r.checks, &r),
            )
        }
        Target::Fig3b => {
            let r = scenario::fig3b(&base, trials.unwrap_or(scenario::FIG3B_TRIALS), seed)?;
            csv_out(
                "fig3b_mirrors.csv",
                &[
                    "R_PR (dimensionless)",
                    "finesse (dimensionless)",
                    "escape (dimensionless)",
                    "R_net (dimensionless)",
                    "sigma_R_net (dimensionless)",
                    "R_int (dimensionless)",
                    "sigma_R_int (dimensionless)",
                    "R_net_model (dimensionless)",
                    "R_int_model (dimensionless)",
                ],
                r.points
                    .iter()
                    .map(|p| {
                        vec![
                            num(p.r_pr),
                            num(p.finesse),
                            num(p.escape),
                            num(p.r_net.value),
                            num(p.r_net.sigma),
                            num(p.r_int.value),
                            num(p.r_int.sigma),
                            num(p.r_net_model),
                            num(p.r_int_model),
                        ]
                    })
                    .collect(),
            )?;
            (
                r.checks.clone(),
                summary(target, seed, &base, &r.checks, &r),
            )
        }
    };

    let summary_path = dir.join("summary.json");
    fs::write(&summary_path, summary_json).map_err(|e| CliError::write(&summary_path, e))?;
    outputs.push(summary_path);
    let manifest_path = dir.join("manifest.json");
    outputs.push(manifest_path.clone());
    write_json(
        &manifest_path,
        &started.finish(base.hash(), Some(seed), &outputs),
    )?;

    print_checks(&checks);
    println!("outputs in {}", dir.display());
    Ok(())
}

fn summary<T: serde::Serialize>(
    target: Target,
    seed: u64,
    base: &ExperimentConfig,
    checks: &[Check],
    result: &T,
) -> String {
    let s = Summary {
        target: target.name(),
        seed,
        config_hash: base.hash(),
        all_pass: checks.iter().all(|c| c.pass),
        checks,
        result,
    };
    let mut text = serde_json::to_string_pretty(&s).expect("summary serializes");
    text.push('\n');
    text
}
