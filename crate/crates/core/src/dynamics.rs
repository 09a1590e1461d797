//! Assets, leverage and trust: the model parameters, state, and the three
//! coupled right-hand sides in non-dimensional time `tau = k t`.
//!
//! Every formula here is written once. Dimensional rates (per unit of
//! calendar time) are obtained by multiplying a non-dimensional rate by `k`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParams {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("trust T = {0} is singular (requires T < 1)")]
    SingularTrust(f64),
    #[error("leverage L = {0} is singular (requires L < 1)")]
    SingularLeverage(f64),
    #[error("leverage L = 0: leverage growth rate undefined")]
    ZeroLeverage,
}

/// Non-dimensional model parameters plus the trust adjustment rate `k`.
///
/// `a_tilde`, `g_tilde` and `r_tilde` are the debt-adjustment rate, the
/// EBITA/assets ratio and the interest rate, each divided by `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub a_tilde: f64,
    pub g_tilde: f64,
    pub r_tilde: f64,
    pub k: f64,
}

impl Params {
    pub fn new(a_tilde: f64, g_tilde: f64, r_tilde: f64, k: f64) -> Result<Self, DomainError> {
        let p = Params {
            a_tilde,
            g_tilde,
            r_tilde,
            k,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters for purely non-dimensional work (`k = 1`).
    pub fn nondimensional(a_tilde: f64, g_tilde: f64, r_tilde: f64) -> Result<Self, DomainError> {
        Self::new(a_tilde, g_tilde, r_tilde, 1.0)
    }

    /// Builds the tilde parameters from dimensional rates `a, g, r` (per
    /// unit time) and the trust rate `k`.
    pub fn from_dimensional(a: f64, g: f64, r: f64, k: f64) -> Result<Self, DomainError> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(DomainError::InvalidParams {
                name: "k",
                value: k,
                reason: "must be finite and > 0",
            });
        }
        Self::new(a / k, g / k, r / k, k)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.a_tilde > 0.0) || !self.a_tilde.is_finite() {
            return Err(DomainError::InvalidParams {
                name: "a_tilde",
                value: self.a_tilde,
                reason: "must be finite and > 0",
            });
        }
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(DomainError::InvalidParams {
                name: "k",
                value: self.k,
                reason: "must be finite and > 0",
            });
        }
        if !self.g_tilde.is_finite() {
            return Err(DomainError::InvalidParams {
                name: "g_tilde",
                value: self.g_tilde,
                reason: "must be finite",
            });
        }
        if !self.r_tilde.is_finite() {
            return Err(DomainError::InvalidParams {
                name: "r_tilde",
                value: self.r_tilde,
                reason: "must be finite",
            });
        }
        Ok(())
    }

    /// Same `a_tilde` and `k`, new regime values for `g_tilde` and `r_tilde`.
    pub fn with_regime(&self, g_tilde: f64, r_tilde: f64) -> Result<Self, DomainError> {
        Self::new(self.a_tilde, g_tilde, r_tilde, self.k)
    }

    pub fn derived(&self) -> Result<DerivedParams, DomainError> {
        DerivedParams::from_params(self)
    }

    pub fn beta(&self) -> f64 {
        self.a_tilde + self.r_tilde
    }
}

/// `beta = a + r` and `L0 = (g + a) / (r + a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub beta: f64,
    pub l0: f64,
}

impl DerivedParams {
    pub fn from_params(p: &Params) -> Result<Self, DomainError> {
        let beta = p.a_tilde + p.r_tilde;
        if beta == 0.0 {
            return Err(DomainError::InvalidParams {
                name: "r_tilde",
                value: p.r_tilde,
                reason: "r_tilde + a_tilde must be nonzero",
            });
        }
        let l0 = (p.g_tilde + p.a_tilde) / beta;
        if !l0.is_finite() {
            return Err(DomainError::InvalidParams {
                name: "r_tilde",
                value: p.r_tilde,
                reason: "L0 is not finite",
            });
        }
        Ok(DerivedParams { beta, l0 })
    }
}

/// A point `(A, L, T)`: assets, leverage `D/A`, trust.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconState {
    pub assets: f64,
    pub leverage: f64,
    pub trust: f64,
}

impl EconState {
    pub fn new(assets: f64, leverage: f64, trust: f64) -> Result<Self, DomainError> {
        let s = EconState {
            assets,
            leverage,
            trust,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.assets > 0.0) || !self.assets.is_finite() {
            return Err(DomainError::InvalidState(format!(
                "assets A = {} must be finite and > 0",
                self.assets
            )));
        }
        if !(0.0..=1.0).contains(&self.leverage) {
            return Err(DomainError::InvalidState(format!(
                "leverage L = {} must lie in [0, 1]",
                self.leverage
            )));
        }
        if !(0.0..=1.0).contains(&self.trust) {
            return Err(DomainError::InvalidState(format!(
                "trust T = {} must lie in [0, 1]",
                self.trust
            )));
        }
        Ok(())
    }

    /// Debt `D = L A`.
    pub fn debt(&self) -> f64 {
        self.leverage * self.assets
    }

    /// Equity `E = (1 - L) A`.
    pub fn equity(&self) -> f64 {
        (1.0 - self.leverage) * self.assets
    }
}

/// `(dA, dL, dT)` per unit non-dimensional time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateVector {
    pub d_assets: f64,
    pub d_leverage: f64,
    pub d_trust: f64,
}

/// Return on assets, leverage growth and debt growth at a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRates {
    pub r_assets: f64,
    pub r_leverage: f64,
    pub r_debt: f64,
}

fn check_evaluable(s: &EconState) -> Result<(), DomainError> {
    if s.trust >= 1.0 {
        return Err(DomainError::SingularTrust(s.trust));
    }
    s.validate()
}

/// Rate coefficients in a consistent time unit.
///
/// Non-dimensional work uses `(a~, g~, r~, 1)`; calendar-time work uses
/// `(a~ k, g~ k, r~ k, k)`. The kernels below are written once in terms of
/// these, so the dimensional state equations and the non-dimensional ODEs
/// share a single formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub a: f64,
    pub g: f64,
    pub r: f64,
    pub k: f64,
}

impl Params {
    pub fn nondimensional_coefficients(&self) -> Coefficients {
        Coefficients {
            a: self.a_tilde,
            g: self.g_tilde,
            r: self.r_tilde,
            k: 1.0,
        }
    }

    pub fn dimensional_coefficients(&self) -> Coefficients {
        Coefficients {
            a: self.a_tilde * self.k,
            g: self.g_tilde * self.k,
            r: self.r_tilde * self.k,
            k: self.k,
        }
    }
}

// Unchecked kernels shared with the integrators, which may probe slightly
// outside the closed domain at intermediate stages.

#[inline]
pub fn roa_kernel(leverage: f64, trust: f64, c: &Coefficients) -> f64 {
    let (l, t) = (leverage, trust);
    let one_m_t = 1.0 - t;
    c.g / one_m_t - c.r * l / one_m_t + c.a * (t - l) / one_m_t + c.k * (t - l) * t
}

#[inline]
pub fn leverage_kernel(leverage: f64, trust: f64, c: &Coefficients) -> f64 {
    let (l, t) = (leverage, trust);
    (t - l) * ((c.g - c.r * l + c.a * (1.0 - l)) / (1.0 - t) + c.k * (1.0 - l) * t)
}

#[inline]
pub fn trust_kernel(leverage: f64, trust: f64, c: &Coefficients) -> f64 {
    c.k * trust * (trust - leverage) * (1.0 - trust)
}

#[inline]
pub fn roe_kernel(leverage: f64, c: &Coefficients) -> f64 {
    c.g + leverage / (1.0 - leverage) * (c.g - c.r)
}

#[inline]
pub(crate) fn roa_raw(leverage: f64, trust: f64, p: &Params) -> f64 {
    roa_kernel(leverage, trust, &p.nondimensional_coefficients())
}

#[inline]
pub(crate) fn d_leverage_raw(leverage: f64, trust: f64, p: &Params) -> f64 {
    leverage_kernel(leverage, trust, &p.nondimensional_coefficients())
}

#[inline]
pub(crate) fn d_trust_raw(leverage: f64, trust: f64) -> f64 {
    trust * (trust - leverage) * (1.0 - trust)
}

#[inline]
pub(crate) fn roe_raw(leverage: f64, p: &Params) -> f64 {
    roe_kernel(leverage, &p.nondimensional_coefficients())
}

/// The `beta`/`L0` form of dL/dtau, used in fixed-point analysis.
pub fn d_leverage_beta_form(leverage: f64, trust: f64, d: &DerivedParams) -> f64 {
    let (l, t) = (leverage, trust);
    (t - l) * (d.beta * (d.l0 - l) / (1.0 - t) + t * (1.0 - l))
}

/// Right-hand sides of the coupled assets/leverage/trust system.
pub fn derivatives(s: &EconState, p: &Params) -> Result<RateVector, DomainError> {
    check_evaluable(s)?;
    p.validate()?;
    let r_a = roa_raw(s.leverage, s.trust, p);
    Ok(RateVector {
        d_assets: r_a * s.assets,
        d_leverage: d_leverage_raw(s.leverage, s.trust, p),
        d_trust: d_trust_raw(s.leverage, s.trust),
    })
}

/// Return on assets `(1/A) dA/dtau`.
pub fn roa(s: &EconState, p: &Params) -> Result<f64, DomainError> {
    check_evaluable(s)?;
    Ok(roa_raw(s.leverage, s.trust, p))
}

/// Return on equity, which depends on leverage only.
pub fn roe(leverage: f64, p: &Params) -> Result<f64, DomainError> {
    if leverage >= 1.0 {
        return Err(DomainError::SingularLeverage(leverage));
    }
    if !leverage.is_finite() {
        return Err(DomainError::InvalidState(format!("leverage L = {leverage}")));
    }
    Ok(roe_raw(leverage, p))
}

/// ROA on the fixed axis `T = L`: `r + (g - r) / (1 - L)`.
pub fn diagonal_roa(leverage: f64, p: &Params) -> Result<f64, DomainError> {
    if leverage >= 1.0 {
        return Err(DomainError::SingularLeverage(leverage));
    }
    Ok(p.r_tilde + (p.g_tilde - p.r_tilde) / (1.0 - leverage))
}

/// Growth rates of assets, leverage and debt.
///
/// Debt growth is the sum of the other two (`D = L A`), so `r_debt` is
/// computed as that identity rather than from its own formula.
pub fn growth_rates(s: &EconState, p: &Params) -> Result<GrowthRates, DomainError> {
    check_evaluable(s)?;
    if s.leverage == 0.0 {
        return Err(DomainError::ZeroLeverage);
    }
    let r_assets = roa_raw(s.leverage, s.trust, p);
    let r_leverage = d_leverage_raw(s.leverage, s.trust, p) / s.leverage;
    Ok(GrowthRates {
        r_assets,
        r_leverage,
        r_debt: r_leverage + r_assets,
    })
}
