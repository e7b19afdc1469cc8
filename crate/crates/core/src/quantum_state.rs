//! Two-qubit polarization theory for the write-out / read-out photon pair.
//!
//! Basis ordering is fixed everywhere as `(|RR⟩, |RL⟩, |LR⟩, |LL⟩)`, first
//! label the write-out photon, second the read-out photon. A linear
//! polarization at angle θ is `|θ⟩ = (e^{-iθ}|R⟩ + e^{iθ}|L⟩)/√2`, so θ = 0 is
//! H and θ = π/2 is V (up to a global phase).

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::fmt;

use nalgebra::{Complex, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{finite, probability, Error, Result};

type C64 = Complex<f64>;

/// Bohr magneton over Planck's constant, MHz/G.
pub const BOHR_MAGNETON_MHZ_PER_GAUSS: f64 = 1.399_624_493_61;
/// Bias field used for the default Larmor precession, G.
pub const DEFAULT_BIAS_FIELD_GAUSS: f64 = 0.6;
/// Landé factor of the F = 2 ground manifold.
pub const DEFAULT_LANDE_G: f64 = 0.5;
/// Zeeman-level difference between the two stored spinwave components.
pub const DEFAULT_DELTA_MF: f64 = 2.0;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const EIGEN_TOL: f64 = 1e-10;

/// Measurement basis of one two-port polarization analyzer.
///
/// Linear angles are kept in degrees normalized to `[0, 180)`; that keeps the
/// usual settings (22.5°, 45°, ...) exact so they can be used as table keys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzerSetting {
    kind: AnalyzerKind,
    deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalyzerKind {
    Circular,
    Linear,
}

impl AnalyzerSetting {
    pub const CIRCULAR: Self = Self {
        kind: AnalyzerKind::Circular,
        deg: 0.0,
    };

    pub fn circular() -> Self {
        Self::CIRCULAR
    }

    pub fn linear(angle_rad: f64) -> Self {
        Self::linear_deg(angle_rad.to_degrees())
    }

    pub fn linear_deg(deg: f64) -> Self {
        let mut deg = deg.rem_euclid(180.0);
        // rem_euclid may return exactly 180.0 for tiny negative inputs
        if deg >= 180.0 {
            deg = 0.0;
        }
        Self {
            kind: AnalyzerKind::Linear,
            deg,
        }
    }

    /// H/V analyzer.
    pub fn hv() -> Self {
        Self::linear_deg(0.0)
    }

    /// D/A analyzer.
    pub fn da() -> Self {
        Self::linear_deg(45.0)
    }

    pub fn kind(&self) -> AnalyzerKind {
        self.kind
    }

    /// Angle of the `+` port in radians; zero for the circular analyzer.
    pub fn angle(&self) -> f64 {
        self.deg.to_radians()
    }

    pub fn angle_deg(&self) -> f64 {
        self.deg
    }

    /// Hashable identity of the setting.
    pub fn key(&self) -> (AnalyzerKind, u64) {
        match self.kind {
            AnalyzerKind::Circular => (AnalyzerKind::Circular, 0),
            AnalyzerKind::Linear => (AnalyzerKind::Linear, self.deg.to_bits()),
        }
    }

    /// Port states `(+, −)` in the (R, L) basis. Circular ports are (R, L);
    /// linear ports are (θ, θ + π/2).
    pub fn port_vectors(&self) -> [Vector2<C64>; 2] {
        match self.kind {
            AnalyzerKind::Circular => [
                Vector2::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
                Vector2::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
            ],
            AnalyzerKind::Linear => {
                let theta = self.angle();
                [linear_ket(theta), linear_ket(theta + FRAC_PI_2)]
            }
        }
    }
}

impl fmt::Display for AnalyzerSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            AnalyzerKind::Circular => write!(f, "R/L"),
            AnalyzerKind::Linear => write!(f, "{}°", self.deg),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum SettingRepr {
    Circular,
    Linear { deg: f64 },
}

impl Serialize for AnalyzerSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.kind {
            AnalyzerKind::Circular => SettingRepr::Circular,
            AnalyzerKind::Linear => SettingRepr::Linear { deg: self.deg },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AnalyzerSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match SettingRepr::deserialize(d)? {
            SettingRepr::Circular => Ok(Self::CIRCULAR),
            SettingRepr::Linear { deg } if deg.is_finite() => Ok(Self::linear_deg(deg)),
            SettingRepr::Linear { deg } => Err(serde::de::Error::custom(format!(
                "linear analyzer angle must be finite, got {deg}"
            ))),
        }
    }
}

fn linear_ket(theta: f64) -> Vector2<C64> {
    Vector2::new(
        C64::from_polar(FRAC_1_SQRT_2, -theta),
        C64::from_polar(FRAC_1_SQRT_2, theta),
    )
}

/// Parameters of the source state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    /// Mixing angle η in radians.
    pub eta: f64,
    /// Angular frequency of the Larmor phase φ(t) = −ω t, rad/µs.
    pub larmor_omega: f64,
    /// White-noise admixture p.
    pub noise_fraction: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        Self {
            eta: default_eta(),
            larmor_omega: larmor_omega_from_field(
                DEFAULT_LANDE_G,
                DEFAULT_DELTA_MF,
                DEFAULT_BIAS_FIELD_GAUSS,
            ),
            noise_fraction: 0.0,
        }
    }
}

/// η with sin η = √(3/5), the Clebsch–Gordan weight of the |L⟩ branch.
pub fn default_eta() -> f64 {
    (0.6f64).sqrt().asin()
}

/// Larmor angular frequency in rad/µs for a coherence between Zeeman levels
/// `delta_mf` apart in a manifold with Landé factor `g_f`.
pub fn larmor_omega_from_field(g_f: f64, delta_mf: f64, field_gauss: f64) -> f64 {
    2.0 * PI * g_f * delta_mf * BOHR_MAGNETON_MHZ_PER_GAUSS * field_gauss
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        finite("source.eta", self.eta)?;
        finite("source.larmor_omega", self.larmor_omega)?;
        probability("source.noise_fraction", self.noise_fraction)?;
        Ok(())
    }

    pub fn sin_2eta(&self) -> f64 {
        (2.0 * self.eta).sin()
    }

    /// Period of the Larmor phase in µs.
    pub fn larmor_period(&self) -> f64 {
        2.0 * PI / self.larmor_omega.abs()
    }

    pub fn with_noise(self, noise_fraction: f64) -> Self {
        Self {
            noise_fraction,
            ..self
        }
    }

    pub fn phase(&self, t: f64) -> f64 {
        -self.larmor_omega * t
    }
}

/// Validated 4×4 density matrix of the photon pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    matrix: Matrix4<C64>,
}

impl TwoQubitState {
    /// Validates hermiticity, unit trace and positivity.
    pub fn from_matrix(matrix: Matrix4<C64>) -> Result<Self> {
        if matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        let herm_err = (matrix - matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm_err > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (max |ρ − ρ†| = {herm_err:e})"
            )));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} ≠ 1")));
        }
        // symmetrize before the eigen solve; the solver assumes exact hermiticity
        let herm = (matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        let min_eig = herm.symmetric_eigenvalues().min();
        if min_eig < -EIGEN_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { matrix })
    }

    /// ρ = (1 − p)|ψ⟩⟨ψ| + p I/4 for a normalized ket.
    pub fn from_pure_with_noise(ket: Vector4<C64>, noise: f64) -> Result<Self> {
        probability("noise_fraction", noise)?;
        let norm = ket.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidState(
                "zero or non-finite state vector".into(),
            ));
        }
        let ket = ket / C64::new(norm, 0.0);
        let pure = ket * ket.adjoint();
        let matrix =
            pure * C64::new(1.0 - noise, 0.0) + Matrix4::identity() * C64::new(noise / 4.0, 0.0);
        Self::from_matrix(matrix)
    }

    pub fn maximally_mixed() -> Self {
        Self {
            matrix: Matrix4::identity() * C64::new(0.25, 0.0),
        }
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let herm = (self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        [ev[0], ev[1], ev[2], ev[3]]
    }

    /// ⟨i|ρ|j⟩ in the fixed basis ordering.
    pub fn element(&self, i: usize, j: usize) -> C64 {
        self.matrix[(i, j)]
    }
}

/// Basis index of `|RR⟩, |RL⟩, |LR⟩, |LL⟩`.
pub mod basis {
    pub const RR: usize = 0;
    pub const RL: usize = 1;
    pub const LR: usize = 2;
    pub const LL: usize = 3;
}

/// sin η |LR⟩ − cos η e^{iφ(t)} |RL⟩ mixed with white noise.
pub fn make_entangled_state(params: &SourceParams, t: f64) -> Result<TwoQubitState> {
    params.validate()?;
    finite("t", t)?;
    if t < 0.0 {
        return Err(Error::param(
            "t",
            format!("storage time must be ≥ 0, got {t}"),
        ));
    }
    let phi = params.phase(t);
    let mut ket = Vector4::zeros();
    ket[basis::LR] = C64::new(params.eta.sin(), 0.0);
    ket[basis::RL] = -C64::from_polar(params.eta.cos(), phi);
    TwoQubitState::from_pure_with_noise(ket, params.noise_fraction)
}

/// Outcome probabilities `(++, +−, −+, −−)` for write analyzer `w` and read
/// analyzer `r`.
pub fn outcome_probabilities(
    state: &TwoQubitState,
    w: AnalyzerSetting,
    r: AnalyzerSetting,
) -> Result<[f64; 4]> {
    let tr = state.matrix.trace();
    if (tr.re - 1.0).abs() > TRACE_TOL {
        return Err(Error::InvalidState(format!("trace {tr} ≠ 1")));
    }
    let wp = w.port_vectors();
    let rp = r.port_vectors();
    let mut out = [0.0; 4];
    for (a, wa) in wp.iter().enumerate() {
        for (b, rb) in rp.iter().enumerate() {
            let joint = wa.kronecker(rb);
            let projector = joint * joint.adjoint();
            out[2 * a + b] = (state.matrix * projector).trace().re;
        }
    }
    Ok(out)
}

/// Theoretical correlation E(θ1, θ2) between linear analyzers.
pub fn correlation_theory(state: &TwoQubitState, theta1: f64, theta2: f64) -> Result<f64> {
    let p = outcome_probabilities(
        state,
        AnalyzerSetting::linear(theta1),
        AnalyzerSetting::linear(theta2),
    )?;
    Ok(correlation_from_probabilities(p))
}

/// E = p(θ1,θ2) + p(θ1⊥,θ2⊥) − p(θ1⊥,θ2) − p(θ1,θ2⊥) from port-ordered
/// probabilities `(++, +−, −+, −−)`.
pub fn correlation_from_probabilities(p: [f64; 4]) -> f64 {
    p[0] + p[3] - p[2] - p[1]
}

/// The four CHSH angles `{θ1, θ1′, θ2, θ2′}` in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshSettings {
    /// {0°, 45°, 22.5°, −22.5°}
    pub fn standard() -> Self {
        Self {
            a: 0.0,
            a_prime: 45f64.to_radians(),
            b: 22.5f64.to_radians(),
            b_prime: (-22.5f64).to_radians(),
        }
    }

    /// Setting pairs in combination order: (a,b), (a,b′), (a′,b), (a′,b′).
    pub fn pairs(&self) -> [(AnalyzerSetting, AnalyzerSetting); 4] {
        let l = AnalyzerSetting::linear;
        [
            (l(self.a), l(self.b)),
            (l(self.a), l(self.b_prime)),
            (l(self.a_prime), l(self.b)),
            (l(self.a_prime), l(self.b_prime)),
        ]
    }

    fn validate(&self) -> Result<()> {
        let angles = [self.a, self.a_prime, self.b, self.b_prime];
        for a in angles {
            finite("chsh angle", a)?;
        }
        for i in 0..4 {
            for j in i + 1..4 {
                if (angles[i] - angles[j]).abs() < 1e-12 {
                    return Err(Error::param(
                        "chsh settings",
                        "the four angles must be distinct",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Sign arrangement used to combine the four correlations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChshSigns {
    /// |E(a,b) + E(a,b′) + E(a′,b) − E(a′,b′)|, maximal for the source state at
    /// the standard settings whenever the linear-basis visibility peaks.
    #[default]
    Standard,
    /// |E(a,b) − E(a,b′) − E(a′,b) − E(a′,b′)|. With the standard settings
    /// this evaluates to 2√2·sin2η·|sin φ|, which vanishes at the visibility
    /// maxima.
    Literal,
}

impl ChshSigns {
    pub fn coefficients(self) -> [f64; 4] {
        match self {
            ChshSigns::Standard => [1.0, 1.0, 1.0, -1.0],
            ChshSigns::Literal => [1.0, -1.0, -1.0, -1.0],
        }
    }

    pub fn combine(self, e: [f64; 4]) -> f64 {
        self.coefficients()
            .iter()
            .zip(e)
            .map(|(c, e)| c * e)
            .sum::<f64>()
            .abs()
    }
}

pub fn chsh_theory(state: &TwoQubitState, settings: &ChshSettings) -> Result<f64> {
    chsh_theory_with(state, settings, ChshSigns::Standard)
}

pub fn chsh_theory_with(
    state: &TwoQubitState,
    settings: &ChshSettings,
    signs: ChshSigns,
) -> Result<f64> {
    settings.validate()?;
    let mut e = [0.0; 4];
    for (slot, (w, r)) in e.iter_mut().zip(settings.pairs()) {
        *slot = correlation_from_probabilities(outcome_probabilities(state, w, r)?);
    }
    Ok(signs.combine(e))
}

/// V = |p⊥ − p∥| / (p⊥ + p∥) with the same analyzer on both photons.
pub fn visibility_theory(state: &TwoQubitState, setting: AnalyzerSetting) -> Result<f64> {
    let p = outcome_probabilities(state, setting, setting)?;
    Ok(visibility_from_probabilities(p))
}

pub fn visibility_from_probabilities(p: [f64; 4]) -> f64 {
    let perp = p[1] + p[2];
    let par = p[0] + p[3];
    (perp - par).abs() / (perp + par)
}

/// Basis-averaged visibility (V_RL + V_HV + V_DA)/3 of the white-noise state
/// at a visibility maximum.
pub fn average_visibility_at_peak(noise_fraction: f64, sin_2eta: f64) -> f64 {
    (1.0 - noise_fraction) * (1.0 + 2.0 * sin_2eta.abs()) / 3.0
}
