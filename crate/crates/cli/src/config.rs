//! Flat `section.key = value` run configuration.
//!
//! Every key has a default, so a file only needs the values it changes.
//! Unknown or repeated keys are errors. `to_text` writes every key in a fixed
//! order and parsing its output gives back an identical config.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use spinwave::cavity::{
    calibrate_kappa, CavityParams, LossChain, RetrievalModel, DEFAULT_ROUND_TRIP_M,
};
use spinwave::montecarlo::calibrate_noise_rl_hv_da;
use spinwave::montecarlo::{
    default_settings_plan, ExperimentConfig, NoiseModel, DEFAULT_BG_READ, DEFAULT_BG_WRITE,
    DEFAULT_SIGNAL_WRITE_OUT, DEFAULT_VISIBILITY_TAU_US, DEFAULT_VISIBILITY_V0,
};
use spinwave::quantum_state::{default_eta, AnalyzerKind, AnalyzerSetting, SourceParams};

pub const DEFAULT_CONFIG_TEXT: &str = include_str!("../config/default.conf");

/// Keys in serialization order.
pub const KEYS: &[&str] = &[
    "source.eta_deg",
    "source.larmor_omega_rad_per_us",
    "source.noise_fraction",
    "noise.model",
    "noise.visibility_v0",
    "noise.visibility_tau_us",
    "cavity.r_pr",
    "cavity.loss_rt",
    "cavity.length_m",
    "chain.escape",
    "chain.transmittance",
    "chain.detector",
    "retrieval.r0",
    "retrieval.tau_us",
    "retrieval.kappa",
    "rates.p_wo_signal",
    "rates.p_bg_write",
    "rates.p_bg_read",
    "run.storage_times_us",
    "run.settings",
    "run.trials_per_point",
    "run.truth_tags",
];

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    /// The text could not be read as a config (exit code 2).
    Syntax { line: usize, reason: String },
    /// Well-formed but physically invalid (exit code 3).
    Invalid {
        key: String,
        line: Option<usize>,
        reason: String,
    },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax { line, reason } => write!(f, "config line {line}: {reason}"),
            ConfigError::Invalid {
                key,
                line: Some(line),
                reason,
            } => {
                write!(f, "config line {line}, `{key}`: {reason}")
            }
            ConfigError::Invalid {
                key,
                line: None,
                reason,
            } => write!(f, "config `{key}`: {reason}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Static,
    VisibilityFit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kappa {
    /// Calibrated so that `retrieval.r0` holds at the configured cavity.
    Auto,
    Value(f64),
}

/// One entry of `run.storage_times_us`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeSpec {
    At(f64),
    /// `start:step:end`, inclusive of `end` up to rounding.
    Sweep {
        start: f64,
        step: f64,
        end: f64,
    },
    /// `peak:k`, the k-th visibility maximum (k half Larmor periods).
    Peak(u32),
}

impl TimeSpec {
    fn expand(&self, larmor_omega: f64, out: &mut Vec<f64>) -> Result<(), String> {
        match *self {
            TimeSpec::At(t) => out.push(t),
            TimeSpec::Sweep { start, step, end } => {
                if !(step > 0.0) || end < start {
                    return Err(format!("sweep {self} needs step > 0 and end ≥ start"));
                }
                let n = ((end - start) / step * (1.0 + 1e-12)).floor() as u64;
                if n > 100_000 {
                    return Err(format!("sweep {self} has more than 100000 points"));
                }
                out.extend((0..=n).map(|i| start + i as f64 * step));
            }
            TimeSpec::Peak(k) => {
                if larmor_omega == 0.0 {
                    return Err("peak times need a non-zero Larmor frequency".into());
                }
                out.push(f64::from(k) * std::f64::consts::PI / larmor_omega.abs());
            }
        }
        Ok(())
    }
}

impl fmt::Display for TimeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeSpec::At(t) => write!(f, "{t}"),
            TimeSpec::Sweep { start, step, end } => write!(f, "{start}:{step}:{end}"),
            TimeSpec::Peak(k) => write!(f, "peak:{k}"),
        }
    }
}

impl FromStr for TimeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(k) = s.strip_prefix("peak:") {
            return k
                .trim()
                .parse()
                .map(TimeSpec::Peak)
                .map_err(|_| format!("`{s}`: peak index must be a non-negative integer"));
        }
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [t] => Ok(TimeSpec::At(number(t)?)),
            [a, step, b] => Ok(TimeSpec::Sweep {
                start: number(a)?,
                step: number(step)?,
                end: number(b)?,
            }),
            _ => Err(format!(
                "`{s}` is neither a time, a start:step:end sweep nor peak:k"
            )),
        }
    }
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{}` is not a number", s.trim()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{}` is not finite", s.trim()))
    }
}

fn setting_from_str(s: &str) -> Result<AnalyzerSetting, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "rl" | "r/l" | "circular" => Ok(AnalyzerSetting::circular()),
        "hv" => Ok(AnalyzerSetting::hv()),
        "da" => Ok(AnalyzerSetting::da()),
        other => number(other)
            .map(AnalyzerSetting::linear_deg)
            .map_err(|_| format!("`{other}` is not rl, hv, da or an angle in degrees")),
    }
}

fn setting_to_str(s: AnalyzerSetting) -> String {
    match s.kind() {
        AnalyzerKind::Circular => "rl".into(),
        AnalyzerKind::Linear => format!("{}", s.angle_deg()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub eta_deg: f64,
    pub larmor_omega: f64,
    pub noise_fraction: f64,
    pub noise_model: NoiseKind,
    pub visibility_v0: f64,
    pub visibility_tau_us: f64,
    pub r_pr: f64,
    pub loss_rt: f64,
    pub length_m: Option<f64>,
    pub escape: f64,
    pub transmittance: f64,
    pub detector: f64,
    pub r0: f64,
    pub tau_r_us: f64,
    pub kappa: Kappa,
    pub p_wo_signal: f64,
    pub p_bg_write: f64,
    pub p_bg_read: f64,
    pub storage_times: Vec<TimeSpec>,
    pub settings: Vec<(AnalyzerSetting, AnalyzerSetting)>,
    pub trials_per_point: u64,
    pub truth_tags: bool,
    /// Line of each key in the parsed text, for diagnostics.
    lines: HashMap<String, usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let source = SourceParams::default();
        let cavity = CavityParams::default();
        let chain = LossChain::default();
        let retrieval = RetrievalModel::default();
        let p0 = calibrate_noise_rl_hv_da(0.906, 0.830, 0.860, source.sin_2eta())
            .expect("published visibilities calibrate");
        Self {
            eta_deg: default_eta().to_degrees(),
            larmor_omega: source.larmor_omega,
            noise_fraction: p0,
            noise_model: NoiseKind::VisibilityFit,
            visibility_v0: DEFAULT_VISIBILITY_V0,
            visibility_tau_us: DEFAULT_VISIBILITY_TAU_US,
            r_pr: cavity.r_pr,
            loss_rt: cavity.loss_rt,
            length_m: Some(DEFAULT_ROUND_TRIP_M),
            escape: chain.escape,
            transmittance: chain.transmittance,
            detector: chain.detector,
            r0: retrieval.r0,
            tau_r_us: retrieval.tau_r,
            kappa: Kappa::Auto,
            p_wo_signal: DEFAULT_SIGNAL_WRITE_OUT,
            p_bg_write: DEFAULT_BG_WRITE,
            p_bg_read: DEFAULT_BG_READ,
            storage_times: vec![
                TimeSpec::At(0.0),
                TimeSpec::Peak(2),
                TimeSpec::Peak(16),
                TimeSpec::Peak(30),
            ],
            settings: default_settings_plan(),
            trials_per_point: 100_000,
            truth_tags: true,
            lines: HashMap::new(),
        }
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{s}` is not a boolean")),
    }
}

impl RunConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                reason: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(ConfigError::Syntax {
                    line,
                    reason: format!("unknown key `{key}`"),
                });
            }
            if let Some(first) = cfg.lines.insert(key.to_string(), line) {
                return Err(ConfigError::Syntax {
                    line,
                    reason: format!("`{key}` already set on line {first}"),
                });
            }
            cfg.set(key, value.trim())
                .map_err(|reason| ConfigError::Syntax {
                    line,
                    reason: format!("`{key}`: {reason}"),
                })?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "source.eta_deg" => self.eta_deg = number(v)?,
            "source.larmor_omega_rad_per_us" => self.larmor_omega = number(v)?,
            "source.noise_fraction" => self.noise_fraction = number(v)?,
            "noise.model" => {
                self.noise_model = match v {
                    "static" => NoiseKind::Static,
                    "visibility-fit" => NoiseKind::VisibilityFit,
                    _ => return Err(format!("`{v}` is not static or visibility-fit")),
                }
            }
            "noise.visibility_v0" => self.visibility_v0 = number(v)?,
            "noise.visibility_tau_us" => self.visibility_tau_us = number(v)?,
            "cavity.r_pr" => self.r_pr = number(v)?,
            "cavity.loss_rt" => self.loss_rt = number(v)?,
            "cavity.length_m" => self.length_m = if v == "none" { None } else { Some(number(v)?) },
            "chain.escape" => self.escape = number(v)?,
            "chain.transmittance" => self.transmittance = number(v)?,
            "chain.detector" => self.detector = number(v)?,
            "retrieval.r0" => self.r0 = number(v)?,
            "retrieval.tau_us" => self.tau_r_us = number(v)?,
            "retrieval.kappa" => {
                self.kappa = if v == "auto" {
                    Kappa::Auto
                } else {
                    Kappa::Value(number(v)?)
                }
            }
            "rates.p_wo_signal" => self.p_wo_signal = number(v)?,
            "rates.p_bg_write" => self.p_bg_write = number(v)?,
            "rates.p_bg_read" => self.p_bg_read = number(v)?,
            "run.storage_times_us" => {
                self.storage_times = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(TimeSpec::from_str)
                    .collect::<Result<_, _>>()?
            }
            "run.settings" => {
                self.settings = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|pair| {
                        let (w, r) = pair
                            .split_once('/')
                            .ok_or_else(|| format!("`{}` is not write/read", pair.trim()))?;
                        Ok((setting_from_str(w)?, setting_from_str(r)?))
                    })
                    .collect::<Result<_, String>>()?
            }
            "run.trials_per_point" => {
                self.trials_per_point = v
                    .replace('_', "")
                    .parse()
                    .map_err(|_| format!("`{v}` is not a non-negative integer"))?
            }
            "run.truth_tags" => self.truth_tags = parse_bool(v)?,
            _ => unreachable!("key list checked by the caller"),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "source.eta_deg" => self.eta_deg.to_string(),
            "source.larmor_omega_rad_per_us" => self.larmor_omega.to_string(),
            "source.noise_fraction" => self.noise_fraction.to_string(),
            "noise.model" => match self.noise_model {
                NoiseKind::Static => "static".into(),
                NoiseKind::VisibilityFit => "visibility-fit".into(),
            },
            "noise.visibility_v0" => self.visibility_v0.to_string(),
            "noise.visibility_tau_us" => self.visibility_tau_us.to_string(),
            "cavity.r_pr" => self.r_pr.to_string(),
            "cavity.loss_rt" => self.loss_rt.to_string(),
            "cavity.length_m" => self.length_m.map_or("none".into(), |l| l.to_string()),
            "chain.escape" => self.escape.to_string(),
            "chain.transmittance" => self.transmittance.to_string(),
            "chain.detector" => self.detector.to_string(),
            "retrieval.r0" => self.r0.to_string(),
            "retrieval.tau_us" => self.tau_r_us.to_string(),
            "retrieval.kappa" => match self.kappa {
                Kappa::Auto => "auto".into(),
                Kappa::Value(k) => k.to_string(),
            },
            "rates.p_wo_signal" => self.p_wo_signal.to_string(),
            "rates.p_bg_write" => self.p_bg_write.to_string(),
            "rates.p_bg_read" => self.p_bg_read.to_string(),
            "run.storage_times_us" => self
                .storage_times
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(", "),
            "run.settings" => self
                .settings
                .iter()
                .map(|(w, r)| format!("{}/{}", setting_to_str(*w), setting_to_str(*r)))
                .collect::<Vec<_>>()
                .join(", "),
            "run.trials_per_point" => self.trials_per_point.to_string(),
            "run.truth_tags" => self.truth_tags.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Canonical text form: every key, in [`KEYS`] order, without comments.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key));
            out.push('\n');
        }
        out
    }

    fn invalid(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            key: key.to_string(),
            line: self.lines.get(key).copied(),
            reason: reason.into(),
        }
    }

    /// Storage times after expanding sweeps and peak indices.
    pub fn storage_times_us(&self) -> Result<Vec<f64>, ConfigError> {
        let mut times = Vec::new();
        for spec in &self.storage_times {
            spec.expand(self.larmor_omega, &mut times)
                .map_err(|r| self.invalid("run.storage_times_us", r))?;
        }
        Ok(times)
    }

    /// Builds and validates the simulator config.
    pub fn to_experiment(&self) -> Result<ExperimentConfig, ConfigError> {
        let cavity = CavityParams {
            r_pr: self.r_pr,
            loss_rt: self.loss_rt,
            length_m: self.length_m,
        };
        let kappa = match self.kappa {
            Kappa::Value(k) => k,
            Kappa::Auto => calibrate_kappa(&cavity, self.r0).map_err(|e| self.core_error(e))?,
        };
        let config = ExperimentConfig {
            source: SourceParams {
                eta: self.eta_deg.to_radians(),
                larmor_omega: self.larmor_omega,
                noise_fraction: self.noise_fraction,
            },
            noise: match self.noise_model {
                NoiseKind::Static => NoiseModel::Static,
                NoiseKind::VisibilityFit => NoiseModel::VisibilityFit {
                    v0: self.visibility_v0,
                    tau_us: self.visibility_tau_us,
                },
            },
            cavity,
            chain: LossChain {
                escape: self.escape,
                transmittance: self.transmittance,
                detector: self.detector,
            },
            retrieval: RetrievalModel {
                r0: self.r0,
                tau_r: self.tau_r_us,
                kappa,
            },
            p_wo_signal: self.p_wo_signal,
            p_bg_write: self.p_bg_write,
            p_bg_read: self.p_bg_read,
            storage_times: self.storage_times_us()?,
            settings_plan: self.settings.clone(),
            trials_per_point: self.trials_per_point,
            truth_tags: self.truth_tags,
        };
        config.validate().map_err(|e| self.core_error(e))?;
        Ok(config)
    }

    fn core_error(&self, e: spinwave::Error) -> ConfigError {
        match e {
            spinwave::Error::InvalidParameter { name, reason } => {
                let key = match name {
                    "source.eta" => "source.eta_deg",
                    "source.larmor_omega" => "source.larmor_omega_rad_per_us",
                    "retrieval.tau_r" => "retrieval.tau_us",
                    "r_int" => "retrieval.r0",
                    other => other,
                };
                self.invalid(key, reason)
            }
            other => ConfigError::Invalid {
                key: "config".into(),
                line: None,
                reason: other.to_string(),
            },
        }
    }
}
