//! Analytic leverage-versus-trust curves `L(T)`.
//!
//! Dividing the leverage equation by the trust equation gives a linear
//! first-order ODE in `T` whose solution is
//!
//! ```text
//! L(T) = 1 - K P(T) + (L0 - 1) { beta/(1+beta) + (1-T)/(1+beta)
//!        + beta/(1+beta) T^2/(1-T) I_{+1}(T) }
//! P(T) = (1-T)^(1+beta) T^(-beta) exp(-beta/(1-T))
//! I_s(T) = int_0^1 (1-y)^(beta+s) exp(-beta T y/(1-T)) dy
//! ```
//!
//! Integrating `I_{+1}` by parts twice gives the equivalent form
//! `L(T) = L0 - K P(T) + (L0 - 1)(1 - T)(-1/beta + I_{-1}(T))`, which behaves
//! better as `T -> 1`. Both are evaluated with independent quadratures.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DerivedParams, DomainError, EconState, Params};
use crate::io::fmt_f64;
use crate::quadrature::{integrate, QuadratureConfig, QuadratureError};
use crate::trajectory::{self, IntegratorConfig, TrajectoryError, TrajectoryRecord};

/// Smallest trust at which the curve is evaluated; below it `T^(-beta)`
/// makes the expression numerically hostile and the ODE is authoritative.
pub const MIN_TRUST: f64 = 1e-3;

/// Above this exponent rate the integrand is a boundary layer at `y = 0` and
/// is integrated in the stretched variable `u = c y`.
const STRETCH_THRESHOLD: f64 = 20.0;
/// `exp(-U_CUTOFF)` is below double precision relative to the integral.
const U_CUTOFF: f64 = 60.0;

#[derive(Debug, Error)]
pub enum ClosedFormError {
    #[error("beta = a + r must be nonzero and finite (got {0})")]
    DegenerateBeta(f64),
    #[error("the integrated-by-parts form requires beta > 0 (got {0})")]
    NonPositiveBeta(f64),
    #[error("trust T = {0} outside the evaluable range [{MIN_TRUST}, 1)")]
    TrustOutOfRange(f64),
    #[error("prefactor degenerate at T = {0}")]
    DegeneratePrefactor(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Form {
    #[default]
    Primary,
    IntegratedByParts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormTrajectory {
    pub params: Params,
    /// Integration constant.
    pub k: f64,
    pub form: Form,
}

fn derived(p: &Params) -> Result<DerivedParams, ClosedFormError> {
    let beta = p.beta();
    if beta == 0.0 || !beta.is_finite() {
        return Err(ClosedFormError::DegenerateBeta(beta));
    }
    Ok(p.derived()?)
}

fn quad_cfg() -> QuadratureConfig {
    QuadratureConfig {
        abs_tol: 1e-14,
        rel_tol: 1e-14,
        max_intervals: 4000,
    }
}

/// `ln P(T)`.
fn ln_prefactor(t: f64, beta: f64) -> f64 {
    (1.0 + beta) * (1.0 - t).ln() - beta * t.ln() - beta / (1.0 - t)
}

/// `int_0^1 (1-y)^(beta+1) exp(-c y) dy`.
fn integral_plus(beta: f64, c: f64) -> Result<f64, QuadratureError> {
    let cfg = quad_cfg();
    let e = beta + 1.0;
    if c <= STRETCH_THRESHOLD {
        return Ok(integrate(|y: f64| (1.0 - y).powf(e) * (-c * y).exp(), 0.0, 1.0, &cfg)?.value);
    }
    let upper = c.min(U_CUTOFF);
    let r = integrate(|u: f64| (1.0 - u / c).max(0.0).powf(e) * (-u).exp(), 0.0, upper, &cfg)?;
    Ok(r.value / c)
}

/// `int_0^1 (1-y)^(beta-1) exp(-c y) dy` for `beta > 0`.
///
/// Split at `y = 1/2`. The left half is smooth (stretched when `c` is large);
/// on the right half `w = (1-y)^beta` removes the endpoint singularity.
fn integral_minus(beta: f64, c: f64) -> Result<f64, QuadratureError> {
    let cfg = quad_cfg();
    let e = beta - 1.0;
    let left = if c <= STRETCH_THRESHOLD {
        integrate(|y: f64| (1.0 - y).powf(e) * (-c * y).exp(), 0.0, 0.5, &cfg)?.value
    } else {
        let upper = (0.5 * c).min(U_CUTOFF);
        integrate(|u: f64| (1.0 - u / c).powf(e) * (-u).exp(), 0.0, upper, &cfg)?.value / c
    };
    let inv_beta = 1.0 / beta;
    let w_max = 0.5f64.powf(beta);
    let right = integrate(|w: f64| (-c * (1.0 - w.powf(inv_beta))).exp(), 0.0, w_max, &cfg)?.value / beta;
    Ok(left + right)
}

fn check_trust(t: f64) -> Result<(), ClosedFormError> {
    if !(MIN_TRUST..1.0).contains(&t) {
        return Err(ClosedFormError::TrustOutOfRange(t));
    }
    Ok(())
}

/// `L(T)` with `K = 0`, primary form.
fn particular_primary(t: f64, d: &DerivedParams) -> Result<f64, ClosedFormError> {
    let beta = d.beta;
    let c = beta * t / (1.0 - t);
    let i1 = integral_plus(beta, c)?;
    let brace = beta / (1.0 + beta) + (1.0 - t) / (1.0 + beta) + beta / (1.0 + beta) * t * t / (1.0 - t) * i1;
    Ok(1.0 + (d.l0 - 1.0) * brace)
}

/// `L(T)` with `K = 0`, integrated-by-parts form.
fn particular_by_parts(t: f64, d: &DerivedParams) -> Result<f64, ClosedFormError> {
    let beta = d.beta;
    if !(beta > 0.0) {
        return Err(ClosedFormError::NonPositiveBeta(beta));
    }
    let c = beta * t / (1.0 - t);
    let im = integral_minus(beta, c)?;
    Ok(d.l0 + (d.l0 - 1.0) * (1.0 - t) * (-1.0 / beta + im))
}

/// Integration constant of the curve through `(trust0, leverage0)`.
///
/// `K` enters linearly: `K = (L_particular(T0) - L0_init) / P(T0)`.
pub fn solve_k(trust0: f64, leverage0: f64, p: &Params) -> Result<f64, ClosedFormError> {
    let d = derived(p)?;
    if !(trust0 > 0.0 && trust0 < 1.0) {
        return Err(ClosedFormError::DegeneratePrefactor(trust0));
    }
    check_trust(trust0)?;
    let prefactor = ln_prefactor(trust0, d.beta).exp();
    if !(prefactor > 0.0) || !prefactor.is_finite() {
        return Err(ClosedFormError::DegeneratePrefactor(trust0));
    }
    let k = (particular_primary(trust0, &d)? - leverage0) / prefactor;
    if !k.is_finite() {
        return Err(ClosedFormError::DegeneratePrefactor(trust0));
    }
    Ok(k)
}

impl ClosedFormTrajectory {
    pub fn new(params: Params, k: f64, form: Form) -> Result<Self, ClosedFormError> {
        derived(&params)?;
        if form == Form::IntegratedByParts && !(params.beta() > 0.0) {
            return Err(ClosedFormError::NonPositiveBeta(params.beta()));
        }
        Ok(ClosedFormTrajectory { params, k, form })
    }

    /// The curve passing through `(trust0, leverage0)`.
    pub fn through(trust0: f64, leverage0: f64, params: Params, form: Form) -> Result<Self, ClosedFormError> {
        let k = solve_k(trust0, leverage0, &params)?;
        Self::new(params, k, form)
    }

    pub fn with_form(&self, form: Form) -> Result<Self, ClosedFormError> {
        Self::new(self.params, self.k, form)
    }

    pub fn leverage_of_trust(&self, trust: f64) -> Result<f64, ClosedFormError> {
        check_trust(trust)?;
        let d = derived(&self.params)?;
        let homogeneous = if self.k == 0.0 {
            0.0
        } else {
            self.k * ln_prefactor(trust, d.beta).exp()
        };
        let particular = match self.form {
            Form::Primary => particular_primary(trust, &d)?,
            Form::IntegratedByParts => particular_by_parts(trust, &d)?,
        };
        Ok(particular - homogeneous)
    }

    /// Samples `(T, L(T))` on the given trust grid.
    pub fn sample(&self, trust_grid: &[f64]) -> Result<Vec<(f64, f64)>, ClosedFormError> {
        trust_grid
            .iter()
            .map(|&t| Ok((t, self.leverage_of_trust(t)?)))
            .collect()
    }
}

pub fn write_curve_csv<W: Write>(curve: &[(f64, f64)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "T,L")?;
    for (t, l) in curve {
        writeln!(w, "{},{}", fmt_f64(*t), fmt_f64(*l))?;
    }
    Ok(())
}

/// Result of comparing the analytic curve with a numerically integrated path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdeComparison {
    pub k: f64,
    pub max_abs_error: f64,
    pub trust_range: (f64, f64),
    pub points_compared: usize,
    pub record: TrajectoryRecord,
}

/// Integrates from `(trust0, leverage0)` and measures the largest leverage
/// discrepancy against the analytic curve through the same point, at up to
/// `max_points` samples with `T >= MIN_TRUST`.
pub fn compare_with_ode(
    trust0: f64,
    leverage0: f64,
    p: &Params,
    cfg: &IntegratorConfig,
    max_points: usize,
) -> Result<OdeComparison, ClosedFormError> {
    let curve = ClosedFormTrajectory::through(trust0, leverage0, *p, Form::Primary)?;
    let s0 = EconState::new(1.0, leverage0, trust0)?;
    let record = trajectory::integrate(&s0, p, cfg)?;
    let usable: Vec<_> = record
        .samples
        .iter()
        .filter(|s| s.trust >= MIN_TRUST && s.trust < 1.0)
        .collect();
    let stride = (usable.len() / max_points.max(1)).max(1);
    let mut max_abs_error = 0.0f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut count = 0;
    for (i, s) in usable.iter().enumerate() {
        if i % stride != 0 && i + 1 != usable.len() {
            continue;
        }
        let l = curve.leverage_of_trust(s.trust)?;
        max_abs_error = max_abs_error.max((l - s.leverage).abs());
        lo = lo.min(s.trust);
        hi = hi.max(s.trust);
        count += 1;
    }
    Ok(OdeComparison {
        k: curve.k,
        max_abs_error,
        trust_range: (lo, hi),
        points_compared: count,
        record,
    })
}
