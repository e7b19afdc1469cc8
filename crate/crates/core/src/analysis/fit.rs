//! Least-squares fits of the oscillation and visibility-decay models.
//!
//! Both fits run a damped Gauss–Newton (Levenberg–Marquardt) iteration with an
//! analytic Jacobian. A fit reports `converged` only when the scaled
//! gradient `max_j |J_jᵀr| / (‖J_j‖‖r‖)` falls below [`GRADIENT_TOL`].

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRADIENT_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 2000;
const DEGENERATE_CONDITION: f64 = 1e-13;
const MIN_SINUSOID_POINTS: usize = 8;
const MIN_DECAY_POINTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    /// 1σ from the scaled covariance; infinite when the parameter is not
    /// identified by the data.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub parameters: Vec<FitParameter>,
    pub rss: f64,
    pub converged: bool,
    /// Set when the data cannot identify every parameter.
    pub degenerate: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |p| p.value)
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |p| p.sigma)
    }
}

struct Outcome {
    params: Vec<f64>,
    rss: f64,
    iterations: usize,
    gradient_norm: f64,
    converged: bool,
    /// Scaled covariance; `None` if JᵀJ is numerically singular.
    covariance: Option<DMatrix<f64>>,
}

struct Problem<'a, F, G> {
    model: F,
    /// Writes ∂model/∂p at `t` into the slice.
    partials: G,
    t: &'a [f64],
    y: &'a [f64],
}

impl<F: Fn(&[f64], f64) -> f64, G: Fn(&[f64], f64, &mut [f64])> Problem<'_, F, G> {
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.t.len(),
            self.t
                .iter()
                .zip(self.y)
                .map(|(&t, &y)| y - (self.model)(p, t)),
        )
    }

    /// ∂model/∂p, i.e. minus the residual Jacobian.
    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.t.len(), p.len());
        let mut row = vec![0.0; p.len()];
        for (i, &t) in self.t.iter().enumerate() {
            (self.partials)(p, t, &mut row);
            for (j, d) in row.iter().enumerate() {
                jac[(i, j)] = *d;
            }
        }
        jac
    }

    fn scaled_gradient(&self, jac: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
        let rn = r.norm();
        // residuals at rounding level carry no direction
        let floor = 1e-12 * self.y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn <= floor {
            return 0.0;
        }
        let g = jac.transpose() * r;
        (0..jac.ncols())
            .map(|j| {
                let cn = jac.column(j).norm();
                if cn == 0.0 {
                    0.0
                } else {
                    g[j].abs() / (cn * rn)
                }
            })
            .fold(0.0, f64::max)
    }

    fn solve(&self, start: &[f64]) -> Outcome {
        let m = self.t.len();
        let n = start.len();
        let mut p = start.to_vec();
        let mut r = self.residuals(&p);
        let mut rss = r.norm_squared();
        let mut lambda = 1e-3;
        let mut iterations = 0;
        let mut stalled = 0;
        let mut jac = self.jacobian(&p);
        let mut grad = self.scaled_gradient(&jac, &r);

        while iterations < MAX_ITERATIONS && grad >= GRADIENT_TOL && rss.is_finite() {
            iterations += 1;
            let jtj = jac.transpose() * &jac;
            let jtr = jac.transpose() * &r;
            let mut accepted = false;
            while lambda < 1e16 {
                let mut damped = jtj.clone();
                for j in 0..n {
                    damped[(j, j)] += lambda * jtj[(j, j)].max(1e-30);
                }
                let Some(chol) = damped.cholesky() else {
                    lambda *= 10.0;
                    continue;
                };
                let step = chol.solve(&jtr);
                let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                let trial_r = self.residuals(&trial);
                let trial_rss = trial_r.norm_squared();
                if trial_rss.is_finite() && trial_rss <= rss {
                    let improvement = rss - trial_rss;
                    p = trial;
                    r = trial_r;
                    stalled = if improvement <= 1e-15 * rss {
                        stalled + 1
                    } else {
                        0
                    };
                    rss = trial_rss;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    break;
                }
                lambda *= 10.0;
            }
            jac = self.jacobian(&p);
            grad = self.scaled_gradient(&jac, &r);
            if !accepted || stalled >= 5 {
                break;
            }
        }

        let covariance = covariance(&jac, rss, m, n);
        Outcome {
            params: p,
            rss,
            iterations,
            gradient_norm: grad,
            converged: grad < GRADIENT_TOL,
            covariance,
        }
    }
}

fn covariance(jac: &DMatrix<f64>, rss: f64, m: usize, n: usize) -> Option<DMatrix<f64>> {
    let jtj = jac.transpose() * jac;
    let sv = jtj.clone().singular_values();
    let max = sv.max();
    if !(max > 0.0) || sv.min() / max < DEGENERATE_CONDITION {
        return None;
    }
    let inv = jtj.try_inverse()?;
    let dof = m.saturating_sub(n).max(1) as f64;
    Some(inv * (rss / dof))
}

fn sigma_of(cov: &Option<DMatrix<f64>>, j: usize) -> f64 {
    cov.as_ref()
        .map_or(f64::INFINITY, |c| c[(j, j)].max(0.0).sqrt())
}

fn check_points(points: &[(f64, f64)], min: usize) -> Result<()> {
    if points.len() < min {
        return Err(Error::InsufficientData(format!(
            "fit needs at least {min} points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::Domain("fit points must be finite".into()));
    }
    Ok(())
}

fn param(name: &str, value: f64, sigma: f64) -> FitParameter {
    FitParameter {
        name: name.to_string(),
        value,
        sigma,
    }
}

/// y(t) = o + A e^{−γt²} cos(2πt/T + φ₀), with γ = 1/τ².
fn damped_sinusoid(p: &[f64], t: f64) -> f64 {
    p[0] + p[1] * (-p[4] * t * t).exp() * (TAU * t / p[2] + p[3]).cos()
}

fn damped_sinusoid_partials(p: &[f64], t: f64, out: &mut [f64]) {
    let e = (-p[4] * t * t).exp();
    let (s, c) = (TAU * t / p[2] + p[3]).sin_cos();
    out[0] = 1.0;
    out[1] = e * c;
    out[2] = p[1] * e * s * TAU * t / (p[2] * p[2]);
    out[3] = -p[1] * e * s;
    out[4] = -t * t * p[1] * e * c;
}

/// Best-fitting undamped sinusoid over a log-spaced period grid:
/// returns (period, offset, amplitude, phase).
fn period_scan(t: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let span =
        t.iter().cloned().fold(f64::MIN, f64::max) - t.iter().cloned().fold(f64::MAX, f64::min);
    let mut sorted = t.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut gaps: Vec<f64> = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|g| *g > 0.0)
        .collect();
    gaps.sort_by(f64::total_cmp);
    let dt = gaps.get(gaps.len() / 2).copied().unwrap_or(span.max(1e-12));
    let lo = (2.0 * dt).max(span / 500.0);
    let hi = 2.0 * span.max(lo);
    let steps = 800;
    let mut best = (f64::INFINITY, lo, 0.0, 0.0, 0.0);
    for i in 0..=steps {
        let period = lo * (hi / lo).powf(i as f64 / steps as f64);
        let mut ata = nalgebra::Matrix3::<f64>::zeros();
        let mut aty = nalgebra::Vector3::<f64>::zeros();
        for (&ti, &yi) in t.iter().zip(y) {
            let w = TAU * ti / period;
            let row = nalgebra::Vector3::new(1.0, w.cos(), w.sin());
            ata += row * row.transpose();
            aty += row * yi;
        }
        let Some(coef) = ata.try_inverse().map(|inv| inv * aty) else {
            continue;
        };
        let rss: f64 = t
            .iter()
            .zip(y)
            .map(|(&ti, &yi)| {
                let w = TAU * ti / period;
                (yi - coef[0] - coef[1] * w.cos() - coef[2] * w.sin()).powi(2)
            })
            .sum();
        if rss < best.0 {
            best = (rss, period, coef[0], coef[1], coef[2]);
        }
    }
    let (_, period, offset, c, s) = best;
    // c cos w + s sin w = A cos(w + φ) with A = √(c² + s²), φ = atan2(−s, c)
    (period, offset, c.hypot(s), (-s).atan2(c))
}

/// Fits y(t) = o + A·e^{−t²/τ²}·cos(2πt/T + φ₀).
///
/// Parameters are reported as `offset`, `amplitude`, `period`, `phase` and
/// `decay` (τ). Five deterministic starts around the periodogram peak are
/// refined and the lowest residual kept.
pub fn fit_damped_sinusoid(points: &[(f64, f64)]) -> Result<FitResult> {
    check_points(points, MIN_SINUSOID_POINTS)?;
    let t: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let span =
        t.iter().cloned().fold(f64::MIN, f64::max) - t.iter().cloned().fold(f64::MAX, f64::min);
    let y_scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);

    let (period0, offset0, amp0, phase0) = period_scan(&t, &y);
    let flat = amp0 <= 1e-9 * y_scale;
    let problem = Problem {
        model: damped_sinusoid,
        partials: damped_sinusoid_partials,
        t: &t,
        y: &y,
    };

    let starts = [
        (period0, phase0),
        (period0 * 0.95, phase0),
        (period0 * 1.05, phase0),
        (period0, phase0 + PI / 4.0),
        (period0, phase0 - PI / 4.0),
    ];
    let mut best: Option<Outcome> = None;
    for (period, phase) in starts {
        let out = problem.solve(&[offset0, amp0, period, phase, 0.0]);
        if best.as_ref().is_none_or(|b| out.rss < b.rss) {
            best = Some(out);
        }
    }
    let out = best.expect("at least one start");

    let mut p = out.params.clone();
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = -p[3];
    }
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[3] += PI;
    }
    p[3] = p[3].rem_euclid(TAU);

    let cov = &out.covariance;
    let gamma = p[4];
    let (tau, tau_sigma) = if gamma > 0.0 {
        let s = sigma_of(cov, 4);
        (1.0 / gamma.sqrt(), s / (2.0 * gamma.powf(1.5)))
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let degenerate = flat || cov.is_none() || p[2] > span;

    Ok(FitResult {
        model: "damped-sinusoid".into(),
        parameters: vec![
            param("offset", p[0], sigma_of(cov, 0)),
            param("amplitude", p[1], sigma_of(cov, 1)),
            param("period", p[2], sigma_of(cov, 2)),
            param("phase", p[3], sigma_of(cov, 3)),
            param("decay", tau, tau_sigma),
        ],
        rss: out.rss,
        converged: out.converged,
        degenerate,
        iterations: out.iterations,
        gradient_norm: out.gradient_norm,
    })
}

/// V(t) = 1 − 2/(a e^{−γt²} + 1), γ = 1/τ².
fn visibility_decay(p: &[f64], t: f64) -> f64 {
    1.0 - 2.0 / (p[0] * (-p[1] * t * t).exp() + 1.0)
}

fn visibility_decay_partials(p: &[f64], t: f64, out: &mut [f64]) {
    let e = (-p[1] * t * t).exp();
    let d = (p[0] * e + 1.0).powi(2);
    out[0] = 2.0 * e / d;
    out[1] = -2.0 * p[0] * t * t * e / d;
}

/// Fits V(t) = 1 − 2/(a e^{−t²/τ²} + 1); reports `a`, `tau` and the derived
/// initial visibility `v0` = (a − 1)/(a + 1).
pub fn fit_visibility_decay(points: &[(f64, f64)]) -> Result<FitResult> {
    check_points(points, MIN_DECAY_POINTS)?;
    let t: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();

    // ln((1+V)/(1−V)) = ln a − γ t² is linear in t²; use it as the start.
    let lin: Vec<(f64, f64)> = points
        .iter()
        .map(|&(t, v)| {
            let v = v.clamp(-1.0 + 1e-12, 1.0 - 1e-12);
            (t * t, ((1.0 + v) / (1.0 - v)).ln())
        })
        .collect();
    let n = lin.len() as f64;
    let mx = lin.iter().map(|p| p.0).sum::<f64>() / n;
    let my = lin.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = lin.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = lin.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a0 = (my - slope * mx).exp();
    let gamma0 = -slope;

    let problem = Problem {
        model: visibility_decay,
        partials: visibility_decay_partials,
        t: &t,
        y: &y,
    };
    let out = problem.solve(&[a0, gamma0]);
    let (a, gamma) = (out.params[0], out.params[1]);
    let cov = &out.covariance;
    let a_sigma = sigma_of(cov, 0);
    let (tau, tau_sigma) = if gamma > 0.0 {
        (
            1.0 / gamma.sqrt(),
            sigma_of(cov, 1) / (2.0 * gamma.powf(1.5)),
        )
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let v0 = (a - 1.0) / (a + 1.0);
    let v0_sigma = 2.0 * a_sigma / (a + 1.0).powi(2);
    let degenerate = cov.is_none() || !(a.is_finite()) || a > 1e6 || gamma <= 0.0;

    Ok(FitResult {
        model: "visibility-decay".into(),
        parameters: vec![
            param("a", a, a_sigma),
            param("tau", tau, tau_sigma),
            param("v0", v0, v0_sigma),
        ],
        rss: out.rss,
        converged: out.converged,
        degenerate,
        iterations: out.iterations,
        gradient_norm: out.gradient_norm,
    })
}
