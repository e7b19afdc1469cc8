//! Ring-cavity figures of merit and the retrieval-efficiency chain.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{finite, probability, Error, Result};

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Round-trip length that gives a 489.6 MHz free spectral range.
pub const DEFAULT_ROUND_TRIP_M: f64 = SPEED_OF_LIGHT / 489.6e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// Intensity reflectivity of the coupling mirror.
    pub r_pr: f64,
    /// Round-trip intra-cavity intensity loss, excluding the coupling mirror.
    pub loss_rt: f64,
    /// Optical round-trip length in meters.
    pub length_m: Option<f64>,
}

impl Default for CavityParams {
    fn default() -> Self {
        Self {
            r_pr: 0.80,
            loss_rt: 0.11,
            length_m: Some(DEFAULT_ROUND_TRIP_M),
        }
    }
}

impl CavityParams {
    pub fn new(r_pr: f64, loss_rt: f64) -> Self {
        Self {
            r_pr,
            loss_rt,
            length_m: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        probability("cavity.r_pr", self.r_pr)?;
        probability("cavity.loss_rt", self.loss_rt)?;
        if self.r_pr <= 0.0 {
            return Err(Error::param("cavity.r_pr", "must be > 0"));
        }
        if self.loss_rt >= 1.0 {
            return Err(Error::param("cavity.loss_rt", "must be < 1"));
        }
        if let Some(len) = self.length_m {
            finite("cavity.length_m", len)?;
            if len <= 0.0 {
                return Err(Error::param("cavity.length_m", "must be > 0"));
            }
        }
        Ok(())
    }

    /// Round-trip intensity survival g = R·(1 − L).
    pub fn round_trip_gain(&self) -> f64 {
        self.r_pr * (1.0 - self.loss_rt)
    }
}

/// Out-coupling and detection factors applied to a retrieved photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossChain {
    pub escape: f64,
    pub transmittance: f64,
    pub detector: f64,
}

impl Default for LossChain {
    /// Escape factor 0.543 reproduces the quoted 16.9 % → 76 % correction with
    /// T = 0.65 and D = 0.63. The two-mirror formula would give 0.645 at
    /// R = 0.80, L = 0.11; see [`escape_efficiency`].
    fn default() -> Self {
        Self {
            escape: 0.543,
            transmittance: 0.65,
            detector: 0.63,
        }
    }
}

impl LossChain {
    pub const UNITY: Self = Self {
        escape: 1.0,
        transmittance: 1.0,
        detector: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("chain.escape", self.escape),
            ("chain.transmittance", self.transmittance),
            ("chain.detector", self.detector),
        ] {
            probability(name, v)?;
            if v <= 0.0 {
                return Err(Error::param(name, "must be > 0"));
            }
        }
        Ok(())
    }

    pub fn product(&self) -> f64 {
        self.escape * self.transmittance * self.detector
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalModel {
    /// Intrinsic retrieval at zero storage time.
    pub r0: f64,
    /// 1/e lifetime of the Gaussian decay, µs.
    pub tau_r: f64,
    /// Cooperativity per unit finesse.
    pub kappa: f64,
}

/// Intrinsic retrieval observed at the default cavity.
pub const DEFAULT_INTRINSIC_RETRIEVAL: f64 = 0.76;
/// 1/e retrieval lifetime, µs.
pub const DEFAULT_RETRIEVAL_LIFETIME_US: f64 = 25.2;

impl Default for RetrievalModel {
    fn default() -> Self {
        let kappa = calibrate_kappa(&CavityParams::default(), DEFAULT_INTRINSIC_RETRIEVAL)
            .expect("default cavity is valid");
        Self {
            r0: DEFAULT_INTRINSIC_RETRIEVAL,
            tau_r: DEFAULT_RETRIEVAL_LIFETIME_US,
            kappa,
        }
    }
}

impl RetrievalModel {
    pub fn validate(&self) -> Result<()> {
        probability("retrieval.r0", self.r0)?;
        finite("retrieval.tau_r", self.tau_r)?;
        finite("retrieval.kappa", self.kappa)?;
        if self.tau_r <= 0.0 {
            return Err(Error::param("retrieval.tau_r", "must be > 0"));
        }
        if self.kappa <= 0.0 {
            return Err(Error::param("retrieval.kappa", "must be > 0"));
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        retrieval_decay(self.r0, self.tau_r, t)
    }
}

/// F = π g^{1/4} / (1 − g^{1/2}) with g = R(1 − L).
pub fn finesse(params: &CavityParams) -> Result<f64> {
    params.validate()?;
    let g = params.round_trip_gain();
    if g >= 1.0 {
        return Err(Error::Domain(format!(
            "round-trip gain {g} ≥ 1 has no finite finesse"
        )));
    }
    Ok(PI * g.powf(0.25) / (1.0 - g.sqrt()))
}

/// Free spectral range in MHz.
pub fn fsr(params: &CavityParams) -> Result<f64> {
    params.validate()?;
    match params.length_m {
        Some(len) => Ok(SPEED_OF_LIGHT / len / 1e6),
        None => Err(Error::param(
            "cavity.length_m",
            "round-trip length is not set",
        )),
    }
}

/// Fraction of intra-cavity photons leaving through the coupling mirror,
/// (1 − R) / ((1 − R) + L).
pub fn escape_efficiency(params: &CavityParams) -> Result<f64> {
    params.validate()?;
    let out = 1.0 - params.r_pr;
    let denom = out + params.loss_rt;
    if denom <= 0.0 {
        return Err(Error::Domain(
            "lossless cavity with a perfect coupling mirror has no escape channel".into(),
        ));
    }
    Ok(out / denom)
}

/// R_int = C / (1 + C) with cooperativity C = κF.
pub fn intrinsic_retrieval_vs_finesse(model: &RetrievalModel, finesse: f64) -> Result<f64> {
    model.validate()?;
    finite("finesse", finesse)?;
    if finesse <= 0.0 {
        return Err(Error::param(
            "finesse",
            format!("must be > 0, got {finesse}"),
        ));
    }
    let c = model.kappa * finesse;
    Ok(c / (1.0 + c))
}

/// κ such that the saturating model gives `r_int` at `cavity`.
pub fn calibrate_kappa(cavity: &CavityParams, r_int: f64) -> Result<f64> {
    probability("r_int", r_int)?;
    if r_int <= 0.0 || r_int >= 1.0 {
        return Err(Error::param("r_int", "must lie strictly inside (0, 1)"));
    }
    Ok(r_int / (1.0 - r_int) / finesse(cavity)?)
}

pub fn net_from_intrinsic(r_int: f64, chain: &LossChain) -> Result<f64> {
    probability("r_int", r_int)?;
    chain.validate()?;
    Ok(r_int * chain.product())
}

/// R(t) = r0 · exp(−(t/τ)²).
pub fn retrieval_decay(r0: f64, tau_r: f64, t: f64) -> Result<f64> {
    probability("r0", r0)?;
    finite("tau_r", tau_r)?;
    finite("t", t)?;
    if tau_r <= 0.0 {
        return Err(Error::param("tau_r", "must be > 0"));
    }
    if t < 0.0 {
        return Err(Error::param(
            "t",
            format!("storage time must be ≥ 0, got {t}"),
        ));
    }
    Ok(r0 * (-(t / tau_r).powi(2)).exp())
}
