//! Estimator report over a tabulated event log.

use std::f64::consts::PI;

use serde::Serialize;
use spinwave::analysis::{
    chsh_estimate, correlation_from_table, eberhard_note, exceeds_eberhard, fit_visibility_decay,
    inputs_hash, intrinsic_from_net, net_retrieval_from_tables, tagged_retrieval_estimate,
    visibility_estimate, CoincidenceTable, Estimate, FitResult, EBERHARD_THRESHOLD,
};
use spinwave::eventlog::LogHeader;
use spinwave::montecarlo::visibility_settings;
use spinwave::quantum_state::ChshSettings;

pub const REPORT_SCHEMA: &str = "spinwave-report";
pub const INSUFFICIENT: &str = "insufficient data";
pub const UNDEFINED: &str = "undefined";

/// One reported quantity. `value` and `sigma` are null when `status` is set.
#[derive(Debug, Clone, Serialize)]
pub struct Entry {
    pub value: Option<f64>,
    pub sigma: Option<f64>,
    pub method: &'static str,
    pub inputs_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd_violation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Entry {
    fn from_result(method: &'static str, hash: String, r: spinwave::Result<Estimate>) -> Self {
        match r {
            Ok(e) => Self {
                value: Some(e.value),
                sigma: Some(e.sigma),
                method,
                inputs_hash: hash,
                sd_violation: None,
                status: None,
                reason: None,
            },
            Err(e) => Self::missing(method, hash, e),
        }
    }

    fn missing(method: &'static str, hash: String, e: spinwave::Error) -> Self {
        let status = match e {
            spinwave::Error::InsufficientData(_) => INSUFFICIENT,
            _ => UNDEFINED,
        };
        Self {
            value: None,
            sigma: None,
            method,
            inputs_hash: hash,
            sd_violation: None,
            status: Some(status),
            reason: Some(e.to_string()),
        }
    }

    pub fn estimate(&self) -> Option<Estimate> {
        Some(Estimate {
            value: self.value?,
            sigma: self.sigma?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Eberhard {
    pub threshold: f64,
    pub exceeded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct Point {
    pub t_us: f64,
    pub V_RL: Entry,
    pub V_HV: Entry,
    pub V_DA: Entry,
    pub V_avg: Entry,
    pub S: Entry,
    pub R_net: Entry,
    pub R_int: Entry,
    pub R_net_tagged: Entry,
    pub eberhard: Option<Eberhard>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum DecayFit {
    Fit(FitResult),
    Missing {
        status: &'static str,
        reason: String,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub log_sha256: String,
    pub points: Vec<Point>,
    /// Fit of V_avg at visibility maxima; its covariance errors complement
    /// the Poisson errors of the individual points.
    pub visibility_decay_fit: DecayFit,
}

fn not_planned() -> spinwave::Error {
    spinwave::Error::InsufficientData("setting pair not in the run plan".into())
}

fn is_visibility_maximum(omega: f64, t: f64) -> bool {
    let half = PI / omega.abs();
    let k = (t / half).round();
    (t - k * half).abs() <= 1e-9 * half.max(t)
}

pub fn build(header: &LogHeader, tables: &[CoincidenceTable], log_sha256: String) -> Report {
    let config = &header.config;
    let mut times: Vec<f64> = Vec::new();
    for t in tables.iter().map(|t| t.storage_time) {
        if !times.iter().any(|x| x.to_bits() == t.to_bits()) {
            times.push(t);
        }
    }

    let mut points = Vec::new();
    for &t in &times {
        let at: Vec<&CoincidenceTable> = tables
            .iter()
            .filter(|c| c.storage_time.to_bits() == t.to_bits())
            .collect();
        let find = |w, r| at.iter().copied().find(|c| c.write == w && c.read == r);

        let mut vis = Vec::new();
        for (w, r) in visibility_settings() {
            let table = find(w, r);
            vis.push(Entry::from_result(
                "poisson visibility |n⊥−n∥|/(n⊥+n∥)",
                inputs_hash(&table),
                table
                    .ok_or_else(not_planned)
                    .and_then(|c| visibility_estimate(c.counts)),
            ));
        }
        let v_avg = match (vis[0].estimate(), vis[1].estimate(), vis[2].estimate()) {
            (Some(a), Some(b), Some(c)) => Entry::from_result(
                "mean of V_RL, V_HV, V_DA",
                inputs_hash(&[a, b, c]),
                Ok(Estimate {
                    value: (a.value + b.value + c.value) / 3.0,
                    sigma: (a.sigma.powi(2) + b.sigma.powi(2) + c.sigma.powi(2)).sqrt() / 3.0,
                }),
            ),
            _ => Entry::missing(
                "mean of V_RL, V_HV, V_DA",
                inputs_hash(&()),
                spinwave::Error::InsufficientData("a basis visibility is missing".into()),
            ),
        };

        let chsh_tables: Vec<Option<&CoincidenceTable>> = ChshSettings::standard()
            .pairs()
            .iter()
            .map(|&(w, r)| find(w, r))
            .collect();
        let s_hash = inputs_hash(&chsh_tables);
        let s_entry = (|| {
            let mut e = [Estimate {
                value: 0.0,
                sigma: 0.0,
            }; 4];
            for (slot, table) in e.iter_mut().zip(&chsh_tables) {
                *slot = correlation_from_table(table.ok_or_else(not_planned)?)?;
            }
            Ok(chsh_estimate(e))
        })();
        let s = match s_entry {
            Ok(c) => Entry {
                sd_violation: c.sd_violation,
                ..Entry::from_result(
                    "CHSH |E(a,b)+E(a,b′)+E(a′,b)−E(a′,b′)|, poisson",
                    s_hash,
                    Ok(c.s),
                )
            },
            Err(e) => Entry::missing("CHSH |E(a,b)+E(a,b′)+E(a′,b)−E(a′,b′)|, poisson", s_hash, e),
        };

        let r_hash = inputs_hash(&(&at, config.p_bg_write));
        let has_counts =
            at.iter().any(|c| c.wo_singles > 0) && at.iter().any(|c| c.coincidences() > 0);
        let r_net = if has_counts {
            Entry::from_result(
                "(p_coin − p_wo·p_ro)/(p_wo − p_wobg), p_wobg = configured write background",
                r_hash.clone(),
                net_retrieval_from_tables(&at, config.p_bg_write),
            )
        } else {
            Entry::missing(
                "(p_coin − p_wo·p_ro)/(p_wo − p_wobg), p_wobg = configured write background",
                r_hash.clone(),
                spinwave::Error::InsufficientData("no write-out clicks or coincidences".into()),
            )
        };
        let product = config.chain.product();
        let r_int = match r_net.estimate() {
            Some(net) => Entry::from_result(
                "R_net/(escape·transmittance·detector)",
                inputs_hash(&(net, config.chain)),
                intrinsic_from_net(net.value, &config.chain).map(|v| Estimate {
                    value: v,
                    sigma: net.sigma / product,
                }),
            ),
            None => Entry::missing(
                "R_net/(escape·transmittance·detector)",
                r_hash.clone(),
                spinwave::Error::InsufficientData("net retrieval unavailable".into()),
            ),
        };
        let r_tagged = Entry::from_result(
            "retrieved/heralded from ground-truth tags",
            r_hash,
            tagged_retrieval_estimate(&at),
        );
        let eberhard = r_int.value.map(|v| Eberhard {
            threshold: EBERHARD_THRESHOLD,
            exceeded: exceeds_eberhard(v),
            note: eberhard_note(v),
        });

        let mut vis = vis.into_iter();
        points.push(Point {
            t_us: t,
            V_RL: vis.next().expect("three bases"),
            V_HV: vis.next().expect("three bases"),
            V_DA: vis.next().expect("three bases"),
            V_avg: v_avg,
            S: s,
            R_net: r_net,
            R_int: r_int,
            R_net_tagged: r_tagged,
            eberhard,
        });
    }

    let decay_points: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| is_visibility_maximum(config.source.larmor_omega, p.t_us))
        .filter_map(|p| Some((p.t_us, p.V_avg.value?)))
        .collect();
    let visibility_decay_fit = match fit_visibility_decay(&decay_points) {
        Ok(fit) => DecayFit::Fit(fit),
        Err(e) => DecayFit::Missing {
            status: INSUFFICIENT,
            reason: e.to_string(),
        },
    };

    Report {
        schema: REPORT_SCHEMA,
        schema_version: 1,
        seed: header.seed,
        config_hash: header.config_hash.clone(),
        log_sha256,
        points,
        visibility_decay_fit,
    }
}

fn cell(e: &Entry) -> [String; 2] {
    let f = |v: Option<f64>| v.map(crate::output::num).unwrap_or_default();
    [f(e.value), f(e.sigma)]
}

pub const ESTIMATES_HEADER: &[&str] = &[
    "t (µs)",
    "V_RL (dimensionless)",
    "sigma_V_RL (dimensionless)",
    "V_HV (dimensionless)",
    "sigma_V_HV (dimensionless)",
    "V_DA (dimensionless)",
    "sigma_V_DA (dimensionless)",
    "V_avg (dimensionless)",
    "sigma_V_avg (dimensionless)",
    "S (dimensionless)",
    "sigma_S (dimensionless)",
    "R_net (dimensionless)",
    "sigma_R_net (dimensionless)",
    "R_int (dimensionless)",
    "sigma_R_int (dimensionless)",
];

pub fn estimate_rows(report: &Report) -> Vec<Vec<String>> {
    report
        .points
        .iter()
        .map(|p| {
            let mut row = vec![crate::output::num(p.t_us)];
            for e in [
                &p.V_RL, &p.V_HV, &p.V_DA, &p.V_avg, &p.S, &p.R_net, &p.R_int,
            ] {
                row.extend(cell(e));
            }
            row
        })
        .collect()
}

pub const COINCIDENCE_HEADER: &[&str] = &[
    "t (µs)",
    "write_setting",
    "read_setting",
    "n_pp (counts)",
    "n_pm (counts)",
    "n_mp (counts)",
    "n_mm (counts)",
    "wo_singles (counts)",
    "ro_singles (counts)",
    "trials (counts)",
];

pub fn coincidence_rows(tables: &[CoincidenceTable]) -> Vec<Vec<String>> {
    tables
        .iter()
        .map(|t| {
            let mut row = vec![
                crate::output::num(t.storage_time),
                t.write.to_string(),
                t.read.to_string(),
            ];
            row.extend(t.counts.iter().map(u64::to_string));
            row.extend([t.wo_singles, t.ro_singles, t.trials].map(|v| v.to_string()));
            row
        })
        .collect()
}
