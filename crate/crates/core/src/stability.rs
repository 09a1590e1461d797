//! Fixed points of the leverage/trust subsystem and their linear stability.
//!
//! Fixed set: the whole axis `T = L`, the saddle `(0, L0)` and `(1, L0)`.
//! The Jacobian is singular at `T = 1`, so `(1, L0)` is classified by
//! integrating a small perturbation and fitting its decay rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{diagonal_roa, roa_raw, DerivedParams, DomainError, EconState, Params};
use crate::trajectory::{Integrator, IntegratorConfig, TrajectoryError};

/// Eigenvalues with magnitude below this are treated as zero.
pub const ZERO_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("perturbation eps0 = {0} must satisfy 0 < |eps0| < 1e-2")]
    BadPerturbation(f64),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

pub type Matrix2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Eigenvalues {
    Real { values: [f64; 2] },
    ComplexPair { re: f64, im: f64 },
}

impl Eigenvalues {
    pub fn real_parts(&self) -> [f64; 2] {
        match *self {
            Eigenvalues::Real { values } => values,
            Eigenvalues::ComplexPair { re, .. } => [re, re],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Attractive,
    Repulsive,
    Saddle,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointKind {
    DiagonalAxisPoint,
    OriginL0,
    OneL0,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub kind: FixedPointKind,
    /// `(T*, L*)`.
    pub location: (f64, f64),
    pub jacobian: Option<Matrix2>,
    pub eigenvalues: Option<Eigenvalues>,
    pub classification: Classification,
    /// Set when an eigenvalue is zero: linear analysis is inconclusive.
    pub marginal: bool,
    pub stationary_roa: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSet {
    pub beta: f64,
    pub l0: f64,
    pub l0_in_domain: bool,
    pub points: Vec<FixedPointReport>,
}

/// Jacobian of `(dT/dtau, dL/dtau)` with respect to `(T, L)`.
pub fn jacobian(trust: f64, leverage: f64, p: &Params) -> Result<Matrix2, DomainError> {
    if trust >= 1.0 {
        return Err(DomainError::SingularTrust(trust));
    }
    let DerivedParams { beta, l0 } = p.derived()?;
    let (t, l) = (trust, leverage);
    let omt = 1.0 - t;
    Ok([
        [(2.0 * t - l) * omt - t * (t - l), -t * omt],
        [
            (1.0 - l) * (beta * (l0 - l) / (omt * omt) + 2.0 * t - l),
            -beta * (l0 + t - 2.0 * l) / omt - t * (1.0 + t - 2.0 * l),
        ],
    ])
}

/// Eigenvalues of a real 2x2 matrix from its trace and determinant.
pub fn eigenvalues(m: &Matrix2) -> Eigenvalues {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let half = 0.5 * tr;
    // (a - d)^2/4 + bc avoids cancellation in tr^2/4 - det
    let disc = 0.25 * (m[0][0] - m[1][1]).powi(2) + m[0][1] * m[1][0];
    if disc >= 0.0 {
        let root = disc.sqrt();
        let big = if half >= 0.0 { half + root } else { half - root };
        let small = if big != 0.0 { det / big } else { 0.0 };
        let (mut a, mut b) = (big, small);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        Eigenvalues::Real { values: [a, b] }
    } else {
        Eigenvalues::ComplexPair {
            re: half,
            im: (-disc).sqrt(),
        }
    }
}

/// Classification from eigenvalue real parts, ignoring zero eigenvalues;
/// the flag reports whether any were zero.
pub fn classify_eigenvalues(e: &Eigenvalues) -> (Classification, bool) {
    let parts = e.real_parts();
    let marginal = parts.iter().any(|x| x.abs() < ZERO_EIGENVALUE);
    let nonzero: Vec<f64> = parts.iter().copied().filter(|x| x.abs() >= ZERO_EIGENVALUE).collect();
    let class = if nonzero.is_empty() {
        Classification::Marginal
    } else if nonzero.iter().all(|&x| x < 0.0) {
        Classification::Attractive
    } else if nonzero.iter().all(|&x| x > 0.0) {
        Classification::Repulsive
    } else {
        Classification::Saddle
    };
    (class, marginal)
}

/// Nonzero eigenvalue of the Jacobian on the diagonal: `-beta (L0 - L)/(1 - L)`.
pub fn diagonal_eigenvalue(leverage: f64, p: &Params) -> Result<f64, DomainError> {
    let d = p.derived()?;
    Ok(-d.beta * (d.l0 - leverage) / (1.0 - leverage))
}

/// Stability of the fixed axis at leverage `L`: attractive below `L0`,
/// repulsive above, marginal at `L0`.
pub fn classify_diagonal(leverage: f64, p: &Params) -> Result<Classification, DomainError> {
    if !(0.0..1.0).contains(&leverage) {
        return Err(DomainError::InvalidState(format!(
            "diagonal leverage L = {leverage} must lie in [0, 1)"
        )));
    }
    let lambda = diagonal_eigenvalue(leverage, p)?;
    Ok(if lambda.abs() < ZERO_EIGENVALUE {
        Classification::Marginal
    } else if lambda < 0.0 {
        Classification::Attractive
    } else {
        Classification::Repulsive
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub l0: f64,
    /// `1 - L0`.
    pub expected_rate: f64,
    pub fitted_rate: Option<f64>,
    pub relative_error: Option<f64>,
    pub attractive: bool,
    /// Limit of the ROA at the point, `-a`.
    pub stationary_roa: f64,
    pub message: String,
}

/// Perturbs trust below 1 at `L = L0`, integrates, and fits the exponential
/// decay rate of `1 - T` by least squares on `ln(1 - T)` against tau.
pub fn verify_point_one_l0(p: &Params, eps0: f64) -> Result<DecayReport, StabilityError> {
    let eps = eps0.abs();
    if !(eps > 0.0 && eps < 1e-2) {
        return Err(StabilityError::BadPerturbation(eps0));
    }
    let d = p.derived()?;
    let expected_rate = 1.0 - d.l0;
    if d.l0 >= 1.0 {
        return Ok(DecayReport {
            l0: d.l0,
            expected_rate,
            fitted_rate: None,
            relative_error: None,
            attractive: false,
            stationary_roa: -p.a_tilde,
            message: format!("L0 = {} >= 1: the point (1, L0) is not attractive", d.l0),
        });
    }
    if d.l0 < 0.0 {
        return Ok(DecayReport {
            l0: d.l0,
            expected_rate,
            fitted_rate: None,
            relative_error: None,
            attractive: true,
            stationary_roa: -p.a_tilde,
            message: format!("L0 = {} < 0: the point lies outside the leverage domain", d.l0),
        });
    }
    // Two decades of decay, bounded for L0 close to 1.
    let tau_end = ((100.0f64).ln() / expected_rate).min(1e4);
    let cfg = IntegratorConfig {
        max_tau: tau_end,
        guard_eps: (eps * 1e-4).min(1e-6),
        rel_tol: 1e-10,
        abs_tol: 1e-13,
        ..Default::default()
    };
    let s0 = EconState::new(1.0, d.l0, 1.0 - eps)?;
    let mut it = Integrator::new(&s0, p, &cfg);
    let terminal = it.run_until(p, tau_end, false)?;
    let record = it.finish(terminal.unwrap_or(crate::trajectory::Terminal::HorizonReached));
    // skip the fast leverage transient
    let tau_skip = 0.05 * tau_end;
    let pts: Vec<(f64, f64)> = record
        .samples
        .iter()
        .filter(|s| s.tau >= tau_skip && s.trust < 1.0)
        .map(|s| (s.tau, (1.0 - s.trust).ln()))
        .collect();
    let fitted = fit_slope(&pts).map(|s| -s);
    let relative_error = fitted.map(|f| ((f - expected_rate) / expected_rate).abs());
    let attractive = fitted.is_some_and(|f| f > 0.0);
    Ok(DecayReport {
        l0: d.l0,
        expected_rate,
        fitted_rate: fitted,
        relative_error,
        attractive,
        stationary_roa: -p.a_tilde,
        message: match fitted {
            Some(f) => format!("perturbation 1 - T decays at rate {f:.6} (1 - L0 = {expected_rate:.6})"),
            None => "too few samples to fit a decay rate".into(),
        },
    })
}

fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Reports for `(0, L0)`, `(1, L0)` and the diagonal at each requested
/// leverage in `[0, 1)`.
pub fn fixed_points(p: &Params, diagonal_samples: &[f64]) -> Result<FixedPointSet, StabilityError> {
    let d = p.derived()?;
    let mut points = Vec::new();

    let j = jacobian(0.0, d.l0, p)?;
    let e = eigenvalues(&j);
    let (classification, marginal) = classify_eigenvalues(&e);
    points.push(FixedPointReport {
        kind: FixedPointKind::OriginL0,
        location: (0.0, d.l0),
        jacobian: Some(j),
        eigenvalues: Some(e),
        classification,
        marginal,
        stationary_roa: roa_raw(d.l0, 0.0, p),
        note: "eigenvalues -L0 and beta*L0".into(),
    });

    let decay = verify_point_one_l0(p, 1e-3)?;
    let classification = if d.l0 == 1.0 {
        Classification::Marginal
    } else if decay.attractive {
        Classification::Attractive
    } else {
        Classification::Repulsive
    };
    points.push(FixedPointReport {
        kind: FixedPointKind::OneL0,
        location: (1.0, d.l0),
        jacobian: None,
        eigenvalues: None,
        classification,
        marginal: d.l0 == 1.0,
        stationary_roa: -p.a_tilde,
        note: format!(
            "Jacobian undefined at T = 1; classified by perturbation decay: {}",
            decay.message
        ),
    });

    for &l in diagonal_samples {
        let class = classify_diagonal(l, p)?;
        let j = jacobian(l, l, p)?;
        let e = eigenvalues(&j);
        points.push(FixedPointReport {
            kind: FixedPointKind::DiagonalAxisPoint,
            location: (l, l),
            jacobian: Some(j),
            eigenvalues: Some(e),
            classification: class,
            marginal: true,
            stationary_roa: diagonal_roa(l, p)?,
            note: "zero eigenvalue along the axis: linear analysis inconclusive; \
                   classified by the transverse eigenvalue"
                .into(),
        });
    }

    Ok(FixedPointSet {
        beta: d.beta,
        l0: d.l0,
        l0_in_domain: (0.0..=1.0).contains(&d.l0),
        points,
    })
}
