//! Time integration of the assets/leverage/trust system with terminal-event
//! detection.
//!
//! Assets are carried internally as `ln A`, which keeps the adaptive error
//! control well scaled over long horizons.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    d_leverage_raw, d_trust_raw, leverage_kernel, roa_kernel, roa_raw, roe_raw, trust_kernel, DerivedParams,
    DomainError, EconState, Params,
};
use crate::io::fmt_f64;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("invalid integrator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("step size underflow at tau = {tau}")]
    StepSizeUnderflow { tau: f64 },
    #[error("step budget exhausted at tau = {tau}")]
    TooManySteps { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Euler,
    AdaptiveRk,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euler" => Ok(Method::Euler),
            "adaptive-rk" | "rk45" => Ok(Method::AdaptiveRk),
            other => Err(format!("unknown integration method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for Euler; initial step for the adaptive method.
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_tau: f64,
    pub convergence_eps: f64,
    /// Smallest allowed `1 - T` and `1 - L`.
    pub guard_eps: f64,
    /// Record every n-th accepted step (the final state is always recorded).
    pub record_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::AdaptiveRk,
            step: 1e-3,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_tau: 1e4,
            convergence_eps: 1e-6,
            guard_eps: 1e-6,
            record_stride: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn euler(step: f64) -> Self {
        IntegratorConfig {
            method: Method::Euler,
            step,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let positive = [
            ("step", self.step),
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_tau", self.max_tau),
            ("convergence_eps", self.convergence_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(TrajectoryError::InvalidConfig(format!(
                    "{name} = {v} must be finite and > 0"
                )));
            }
        }
        if !(self.guard_eps > 0.0 && self.guard_eps <= 1e-2) {
            return Err(TrajectoryError::InvalidConfig(format!(
                "guard_eps = {} must lie in (0, 1e-2]",
                self.guard_eps
            )));
        }
        if self.record_stride == 0 {
            return Err(TrajectoryError::InvalidConfig("record_stride must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub tau: f64,
    pub assets: f64,
    pub ln_assets: f64,
    pub leverage: f64,
    pub trust: f64,
    pub r_assets: f64,
    pub r_equity: f64,
}

impl Sample {
    pub fn state(&self) -> EconState {
        EconState {
            assets: self.assets,
            leverage: self.leverage,
            trust: self.trust,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminal {
    ConvergedToDiagonal {
        leverage: f64,
    },
    /// Converged to `(T, L) = (1, L0)`.
    ConvergedToPoint {
        leverage: f64,
    },
    /// Left `L in [0, 1]` (or `T < 0`).
    ExitedLeverageDomain,
    SingularApproach,
    HorizonReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub samples: Vec<Sample>,
    pub terminal: Terminal,
    pub terminal_tau: f64,
}

impl TrajectoryRecord {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("records are never empty")
    }

    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    /// ROA at the terminal sample when the path converged.
    pub fn stationary_roa(&self) -> Option<f64> {
        match self.terminal {
            Terminal::ConvergedToDiagonal { .. } | Terminal::ConvergedToPoint { .. } => Some(self.last().r_assets),
            _ => None,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "tau,A,L,T,rA,rE")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt_f64(s.tau),
                fmt_f64(s.assets),
                fmt_f64(s.leverage),
                fmt_f64(s.trust),
                fmt_f64(s.r_assets),
                fmt_f64(s.r_equity)
            )?;
        }
        Ok(())
    }

    /// Terminal status record for the JSON sidecar.
    pub fn terminal_json(&self) -> serde_json::Value {
        let last = self.last();
        serde_json::json!({
            "terminal": self.terminal,
            "terminal_tau": self.terminal_tau,
            "samples": self.samples.len(),
            "final_state": {"A": last.assets, "L": last.leverage, "T": last.trust},
            "final_rA": last.r_assets,
            "final_rE": last.r_equity,
        })
    }
}

/// Leverage tolerance for classifying a trust-guard trip as arrival at
/// `(1, L0)`. Near the point `L - L0` scales like `(1 - L0)(1 - T)/beta`, so
/// plain Euclidean distance reaches `convergence_eps` only after the guard.
const POINT_LEVERAGE_TOL: f64 = 1e-3;
const MAX_STEPS: usize = 50_000_000;
const MAX_BISECTIONS: usize = 80;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Y {
    ln_a: f64,
    l: f64,
    t: f64,
}

impl Y {
    fn axpy(&self, h: f64, k: &Y) -> Y {
        Y {
            ln_a: self.ln_a + h * k.ln_a,
            l: self.l + h * k.l,
            t: self.t + h * k.t,
        }
    }

    fn is_finite(&self) -> bool {
        self.ln_a.is_finite() && self.l.is_finite() && self.t.is_finite()
    }
}

fn rhs(y: &Y, p: &Params) -> Y {
    Y {
        ln_a: roa_raw(y.l, y.t, p),
        l: d_leverage_raw(y.l, y.t, p),
        t: d_trust_raw(y.l, y.t),
    }
}

fn combine(y: &Y, h: f64, ks: &[&Y], ws: &[f64]) -> Y {
    let mut out = *y;
    for (k, &w) in ks.iter().zip(ws) {
        if w != 0.0 {
            out = out.axpy(h * w, k);
        }
    }
    out
}

/// One Dormand–Prince 5(4) step. Returns the 5th-order solution and the
/// scaled error norm (<= 1 means acceptable).
fn dopri_step(y: &Y, h: f64, p: &Params, cfg: &IntegratorConfig) -> (Y, f64) {
    let k1 = rhs(y, p);
    let k2 = rhs(&combine(y, h, &[&k1], &[1.0 / 5.0]), p);
    let k3 = rhs(&combine(y, h, &[&k1, &k2], &[3.0 / 40.0, 9.0 / 40.0]), p);
    let k4 = rhs(
        &combine(y, h, &[&k1, &k2, &k3], &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0]),
        p,
    );
    let k5 = rhs(
        &combine(
            y,
            h,
            &[&k1, &k2, &k3, &k4],
            &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
        ),
        p,
    );
    let k6 = rhs(
        &combine(
            y,
            h,
            &[&k1, &k2, &k3, &k4, &k5],
            &[
                9017.0 / 3168.0,
                -355.0 / 33.0,
                46732.0 / 5247.0,
                49.0 / 176.0,
                -5103.0 / 18656.0,
            ],
        ),
        p,
    );
    let b5 = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ];
    let y5 = combine(y, h, &[&k1, &k2, &k3, &k4, &k5, &k6], &b5);
    let k7 = rhs(&y5, p);
    let e = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let err = combine(
        &Y {
            ln_a: 0.0,
            l: 0.0,
            t: 0.0,
        },
        h,
        &[&k1, &k2, &k3, &k4, &k5, &k6, &k7],
        &e,
    );
    if !y5.is_finite() || !err.is_finite() {
        return (y5, f64::INFINITY);
    }
    let scaled = |e: f64, a: f64, b: f64| e.abs() / (cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs()));
    let norm = scaled(err.ln_a, y.ln_a, y5.ln_a)
        .max(scaled(err.l, y.l, y5.l))
        .max(scaled(err.t, y.t, y5.t));
    (y5, norm)
}

fn euler_step(y: &Y, h: f64, p: &Params) -> Y {
    y.axpy(h, &rhs(y, p))
}

/// First terminal condition met at `y`, in priority order.
fn classify(
    y: &Y,
    p: &Params,
    derived: Option<&DerivedParams>,
    cfg: &IntegratorConfig,
    detect_convergence: bool,
) -> Option<Terminal> {
    if !y.is_finite() {
        return Some(Terminal::SingularApproach);
    }
    if detect_convergence {
        let gap = (y.t - y.l).abs();
        if gap < cfg.convergence_eps && y.t < 1.0 {
            let dl = d_leverage_raw(y.l, y.t, p);
            if dl.abs() < cfg.convergence_eps {
                return Some(Terminal::ConvergedToDiagonal { leverage: y.l });
            }
        }
        if let Some(d) = derived {
            if d.l0 < 1.0 {
                let dist = (1.0 - y.t).hypot(y.l - d.l0);
                let guard_trip = 1.0 - y.t < cfg.guard_eps && (y.l - d.l0).abs() < POINT_LEVERAGE_TOL;
                if dist < cfg.convergence_eps || guard_trip {
                    return Some(Terminal::ConvergedToPoint { leverage: d.l0 });
                }
            }
        }
    }
    if y.l < 0.0 || y.l > 1.0 || y.t < 0.0 {
        return Some(Terminal::ExitedLeverageDomain);
    }
    if 1.0 - y.t < cfg.guard_eps || 1.0 - y.l < cfg.guard_eps {
        return Some(Terminal::SingularApproach);
    }
    None
}

/// Stateful integrator shared by single trajectories and regime schedules.
pub(crate) struct Integrator<'a> {
    cfg: &'a IntegratorConfig,
    y: Y,
    tau: f64,
    h: f64,
    since_record: usize,
    steps: usize,
    samples: Vec<Sample>,
}

impl<'a> Integrator<'a> {
    pub(crate) fn new(s0: &EconState, p: &Params, cfg: &'a IntegratorConfig) -> Self {
        let y = Y {
            ln_a: s0.assets.ln(),
            l: s0.leverage,
            t: s0.trust,
        };
        let mut it = Integrator {
            cfg,
            y,
            tau: 0.0,
            h: cfg.step,
            since_record: 0,
            steps: 0,
            samples: Vec::new(),
        };
        it.record(p);
        it
    }

    pub(crate) fn sample_count(&self) -> usize {
        self.samples.len()
    }

    fn sample_at(&self, tau: f64, y: &Y, p: &Params) -> Sample {
        Sample {
            tau,
            assets: y.ln_a.exp(),
            ln_assets: y.ln_a,
            leverage: y.l,
            trust: y.t,
            r_assets: roa_raw(y.l, y.t, p),
            r_equity: roe_raw(y.l, p),
        }
    }

    fn record(&mut self, p: &Params) {
        let s = self.sample_at(self.tau, &self.y, p);
        match self.samples.last_mut() {
            Some(last) if last.tau == s.tau => *last = s,
            _ => self.samples.push(s),
        }
        self.since_record = 0;
    }

    pub(crate) fn last_sample(&self) -> Sample {
        *self.samples.last().expect("records are never empty")
    }

    /// Appends a sample at the current time even if one already exists
    /// there; used to keep both sides of a parameter switch.
    pub(crate) fn push_sample(&mut self, p: &Params) {
        let s = self.sample_at(self.tau, &self.y, p);
        self.samples.push(s);
        self.since_record = 0;
    }

    /// Checks the current state for terminal conditions without stepping.
    pub(crate) fn check(&self, p: &Params, detect_convergence: bool) -> Option<Terminal> {
        let derived = p.derived().ok();
        if detect_convergence && self.y.t == self.y.l {
            return Some(Terminal::ConvergedToDiagonal { leverage: self.y.l });
        }
        classify(&self.y, p, derived.as_ref(), self.cfg, detect_convergence)
    }

    fn trial(&self, h: f64, p: &Params) -> Y {
        match self.cfg.method {
            Method::Euler => euler_step(&self.y, h, p),
            Method::AdaptiveRk => dopri_step(&self.y, h, p, self.cfg).0,
        }
    }

    /// Advances to `tau_end` or the first terminal event. Returns the event,
    /// or `None` when `tau_end` was reached.
    pub(crate) fn run_until(
        &mut self,
        p: &Params,
        tau_end: f64,
        detect_convergence: bool,
    ) -> Result<Option<Terminal>, TrajectoryError> {
        let derived = p.derived().ok();
        let cfg = self.cfg;
        while self.tau < tau_end {
            let remaining = tau_end - self.tau;
            let (h, y_new) = match cfg.method {
                Method::Euler => {
                    let h = cfg.step.min(remaining);
                    (h, euler_step(&self.y, h, p))
                }
                Method::AdaptiveRk => {
                    let h = self.h.min(remaining);
                    let (y_new, err) = dopri_step(&self.y, h, p, cfg);
                    if err > 1.0 {
                        let factor = if err.is_finite() {
                            (0.9 * err.powf(-0.2)).max(0.2)
                        } else {
                            0.25
                        };
                        self.h = h * factor;
                        if self.h < 1e-14 * self.tau.abs().max(1.0) {
                            return Err(TrajectoryError::StepSizeUnderflow { tau: self.tau });
                        }
                        continue;
                    }
                    let grow = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).min(5.0)
                    };
                    // Keep the adaptive step when clipped to a boundary.
                    if h == self.h {
                        self.h = h * grow;
                    }
                    (h, y_new)
                }
            };
            let tau_new = if h == remaining { tau_end } else { self.tau + h };
            self.steps += 1;
            if self.steps > MAX_STEPS {
                return Err(TrajectoryError::TooManySteps { tau: self.tau });
            }
            if let Some(event) = classify(&y_new, p, derived.as_ref(), cfg, detect_convergence) {
                return Ok(Some(self.refine(p, derived.as_ref(), h, event, detect_convergence)));
            }
            self.y = y_new;
            self.tau = tau_new;
            self.since_record += 1;
            if self.since_record >= cfg.record_stride || self.tau >= tau_end {
                self.record(p);
            }
        }
        Ok(None)
    }

    /// Bisects the triggering step down to `convergence_eps / 10` in tau and
    /// records the boundary state.
    fn refine(
        &mut self,
        p: &Params,
        derived: Option<&DerivedParams>,
        h: f64,
        event: Terminal,
        detect_convergence: bool,
    ) -> Terminal {
        let tol = self.cfg.convergence_eps / 10.0;
        let (mut lo, mut hi) = (0.0, h);
        let mut hi_event = event;
        let mut hi_y = self.trial(h, p);
        for _ in 0..MAX_BISECTIONS {
            if hi - lo <= tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let y_mid = self.trial(mid, p);
            match classify(&y_mid, p, derived, self.cfg, detect_convergence) {
                Some(e) => {
                    hi = mid;
                    hi_event = e;
                    hi_y = y_mid;
                }
                None => lo = mid,
            }
        }
        let tau0 = self.tau;
        match hi_event {
            Terminal::ConvergedToDiagonal { .. } | Terminal::ConvergedToPoint { .. } => {
                self.y = hi_y;
                self.tau = tau0 + hi;
            }
            _ => {
                // Keep the last state inside the domain.
                if lo > 0.0 {
                    self.y = self.trial(lo, p);
                    self.tau = tau0 + lo;
                }
            }
        }
        self.record(p);
        self.tau = tau0 + hi;
        hi_event
    }

    /// Closes the record. `terminal_tau` is the time the event fired.
    pub(crate) fn finish(self, terminal: Terminal) -> TrajectoryRecord {
        TrajectoryRecord {
            terminal_tau: self.tau,
            samples: self.samples,
            terminal,
        }
    }
}

/// Integrates from `s0` until the first terminal event or `max_tau`.
pub fn integrate(s0: &EconState, p: &Params, cfg: &IntegratorConfig) -> Result<TrajectoryRecord, TrajectoryError> {
    cfg.validate()?;
    p.validate()?;
    s0.validate()?;
    if s0.trust >= 1.0 {
        return Err(DomainError::SingularTrust(s0.trust).into());
    }
    let mut it = Integrator::new(s0, p, cfg);
    if let Some(t) = it.check(p, true) {
        return Ok(it.finish(t));
    }
    let terminal = it.run_until(p, cfg.max_tau, true)?.unwrap_or(Terminal::HorizonReached);
    Ok(it.finish(terminal))
}

/// Explicit Euler in calendar time with step `dt`:
///
/// ```text
/// L' = L + (T - L) ((g - r L + a (1 - L)) / (1 - T) + k (1 - L) T) dt
/// T' = T + k T (T - L) (1 - T) dt
/// A' = A + A r_A dt
/// ```
///
/// with `a, g, r` the dimensional rates `a~ k` etc. `k = 0` is accepted and
/// freezes the state. Sample times are reported as `tau = k t`.
pub fn integrate_dimensional(
    s0: &EconState,
    p: &Params,
    dt: f64,
    n_steps: usize,
) -> Result<TrajectoryRecord, TrajectoryError> {
    s0.validate()?;
    if s0.trust >= 1.0 {
        return Err(DomainError::SingularTrust(s0.trust).into());
    }
    if !(p.k >= 0.0) || !p.k.is_finite() {
        return Err(TrajectoryError::InvalidConfig(format!("k = {} must be >= 0", p.k)));
    }
    if !(p.a_tilde > 0.0 && p.a_tilde.is_finite() && p.g_tilde.is_finite() && p.r_tilde.is_finite()) {
        return Err(TrajectoryError::InvalidConfig(
            "parameters must be finite with a > 0".into(),
        ));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(TrajectoryError::InvalidConfig(format!("dt = {dt} must be > 0")));
    }
    let c = p.dimensional_coefficients();
    let sample = |t_cal: f64, a: f64, l: f64, tr: f64| Sample {
        tau: p.k * t_cal,
        assets: a,
        ln_assets: a.ln(),
        leverage: l,
        trust: tr,
        r_assets: roa_raw(l, tr, p),
        r_equity: roe_raw(l, p),
    };
    let (mut a, mut l, mut t) = (s0.assets, s0.leverage, s0.trust);
    let mut samples = vec![sample(0.0, a, l, t)];
    let mut terminal = Terminal::HorizonReached;
    let mut t_cal = 0.0;
    for i in 1..=n_steps {
        let dl = leverage_kernel(l, t, &c);
        let dtr = trust_kernel(l, t, &c);
        let da = a * roa_kernel(l, t, &c);
        let (l_new, t_new, a_new) = (l + dl * dt, t + dtr * dt, a + da * dt);
        if !(t_new < 1.0) || !t_new.is_finite() {
            terminal = Terminal::SingularApproach;
            break;
        }
        if !(0.0..1.0).contains(&l_new) || t_new < 0.0 {
            terminal = Terminal::ExitedLeverageDomain;
            break;
        }
        (l, t, a) = (l_new, t_new, a_new);
        t_cal = i as f64 * dt;
        samples.push(sample(t_cal, a, l, t));
    }
    Ok(TrajectoryRecord {
        samples,
        terminal,
        terminal_tau: p.k * t_cal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn regular() -> Params {
        Params::nondimensional(0.05, 0.06, 0.04).unwrap()
    }

    fn crisis() -> Params {
        Params::nondimensional(0.05, -0.01, 0.04).unwrap()
    }

    #[test]
    fn diagonal_start_terminates_immediately() {
        let s0 = EconState::new(1.0, 0.3, 0.3).unwrap();
        let rec = integrate(&s0, &regular(), &IntegratorConfig::default()).unwrap();
        assert_eq!(rec.terminal, Terminal::ConvergedToDiagonal { leverage: 0.3 });
        assert_eq!(rec.samples.len(), 1);
        assert_eq!(rec.terminal_tau, 0.0);
    }

    #[test]
    fn regular_regime_converges_upward_to_diagonal() {
        let s0 = EconState::new(1.0, 0.2, 0.4).unwrap();
        let rec = integrate(&s0, &regular(), &IntegratorConfig::default()).unwrap();
        match rec.terminal {
            Terminal::ConvergedToDiagonal { leverage } => assert!(leverage > 0.4),
            other => panic!("unexpected terminal {other:?}"),
        }
        for w in rec.samples.windows(2) {
            assert!(w[1].tau > w[0].tau);
            assert!(w[1].trust >= w[0].trust);
            assert!(w[1].trust >= w[1].leverage);
        }
    }

    #[test]
    fn crisis_regime_converges_to_point() {
        let s0 = EconState::new(1.0, 0.1, 0.5).unwrap();
        let rec = integrate(&s0, &crisis(), &IntegratorConfig::default()).unwrap();
        match rec.terminal {
            Terminal::ConvergedToPoint { leverage } => assert_relative_eq!(leverage, 4.0 / 9.0),
            other => panic!("unexpected terminal {other:?}"),
        }
        assert!((rec.stationary_roa().unwrap() + 0.05).abs() < 1e-3);
    }

    #[test]
    fn point_limit_matches_long_euler_oracle() {
        // Euler at 1e-4 stays stable until the 1/(1-T) stiffness bites, so the
        // oracle stops once 1 - T < 1e-4 and reads the ROA there.
        let p = crisis();
        let s0 = EconState::new(1.0, 0.1, 0.5).unwrap();
        let h = 1e-4;
        let (mut l, mut t) = (0.1f64, 0.5f64);
        while 1.0 - t >= 1e-4 {
            let dl = (t - l) * ((p.g_tilde - p.r_tilde * l + p.a_tilde * (1.0 - l)) / (1.0 - t) + (1.0 - l) * t);
            let dt = t * (t - l) * (1.0 - t);
            l += h * dl;
            t += h * dt;
        }
        let oracle_roa = (p.g_tilde - p.r_tilde * l + p.a_tilde * (t - l)) / (1.0 - t) + (t - l) * t;
        assert!((oracle_roa + 0.05).abs() < 1e-3, "oracle {oracle_roa}");
        let rec = integrate(&s0, &p, &IntegratorConfig::default()).unwrap();
        assert!((rec.stationary_roa().unwrap() - oracle_roa).abs() < 1e-3);
    }

    #[test]
    fn exit_through_leverage_one() {
        // T<L above the repulsive part of the diagonal in the crisis regime.
        let s0 = EconState::new(1.0, 0.9, 0.6).unwrap();
        let rec = integrate(&s0, &crisis(), &IntegratorConfig::default()).unwrap();
        assert!(matches!(
            rec.terminal,
            Terminal::SingularApproach | Terminal::ExitedLeverageDomain
        ));
        for s in &rec.samples {
            assert!(s.state().validate().is_ok());
            assert!(1.0 - s.leverage >= 1e-6 * 0.99);
        }
    }

    #[test]
    fn horizon_reached() {
        let cfg = IntegratorConfig {
            max_tau: 1.0,
            ..Default::default()
        };
        let s0 = EconState::new(1.0, 0.2, 0.4).unwrap();
        let rec = integrate(&s0, &regular(), &cfg).unwrap();
        assert_eq!(rec.terminal, Terminal::HorizonReached);
        assert_eq!(rec.last().tau, 1.0);
    }

    #[test]
    fn invalid_inputs() {
        let p = regular();
        let s0 = EconState::new(1.0, 0.2, 0.4).unwrap();
        let bad = IntegratorConfig {
            guard_eps: 0.5,
            ..Default::default()
        };
        assert!(matches!(
            integrate(&s0, &p, &bad),
            Err(TrajectoryError::InvalidConfig(_))
        ));
        let bad = IntegratorConfig {
            step: 0.0,
            ..Default::default()
        };
        assert!(integrate(&s0, &p, &bad).is_err());
        let s1 = EconState {
            assets: 1.0,
            leverage: 0.2,
            trust: 1.0,
        };
        assert!(matches!(
            integrate(&s1, &p, &IntegratorConfig::default()),
            Err(TrajectoryError::Domain(DomainError::SingularTrust(_)))
        ));
    }

    #[test]
    fn dimensional_step_matches_hand_evaluation() {
        // L1=0.25, T1=0.35, a=0.05, k=0.05, dt=0.1, g=0.10, r=0.01
        // bracket = (0.10 - 0.0025 + 0.0375)/0.65 + 0.05*0.75*0.35 = 0.2076923.. + 0.013125
        // L2 = 0.25 + 0.10 * bracket * 0.1
        // T2 = 0.35 + 0.05*0.35*0.10*0.65*0.1
        let p = Params::from_dimensional(0.05, 0.10, 0.01, 0.05).unwrap();
        let s0 = EconState::new(1.0, 0.25, 0.35).unwrap();
        let rec = integrate_dimensional(&s0, &p, 0.1, 1).unwrap();
        let bracket = 0.135 / 0.65 + 0.05 * 0.75 * 0.35;
        assert_relative_eq!(
            rec.samples[1].leverage,
            0.25 + 0.1 * bracket * 0.1,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            rec.samples[1].trust,
            0.35 + 0.05 * 0.35 * 0.1 * 0.65 * 0.1,
            max_relative = 1e-14
        );
        assert_eq!(rec.terminal, Terminal::HorizonReached);
    }

    #[test]
    fn dimensional_zero_rate_freezes_state() {
        let p = Params {
            a_tilde: 1.0,
            g_tilde: 2.0,
            r_tilde: 0.2,
            k: 0.0,
        };
        let s0 = EconState::new(1.0, 0.25, 0.35).unwrap();
        let rec = integrate_dimensional(&s0, &p, 0.1, 50).unwrap();
        assert_eq!(rec.samples.len(), 51);
        assert!(rec
            .samples
            .iter()
            .all(|s| s.leverage == 0.25 && s.trust == 0.35 && s.assets == 1.0));
    }

    #[test]
    fn dimensional_diagonal_is_fixed() {
        let p = Params::from_dimensional(0.05, 0.10, 0.01, 0.05).unwrap();
        let s0 = EconState::new(1.0, 0.3, 0.3).unwrap();
        let rec = integrate_dimensional(&s0, &p, 0.1, 100).unwrap();
        assert!(rec.samples.iter().all(|s| s.leverage == 0.3 && s.trust == 0.3));
    }

    #[test]
    fn dimensional_is_deterministic() {
        let p = Params::from_dimensional(0.05, -0.16, 0.02, 0.05).unwrap();
        let s0 = EconState::new(1.0, 0.25, 0.35).unwrap();
        let a = integrate_dimensional(&s0, &p, 0.1, 500).unwrap();
        let b = integrate_dimensional(&s0, &p, 0.1, 500).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_header() {
        let s0 = EconState::new(1.0, 0.3, 0.3).unwrap();
        let rec = integrate(&s0, &regular(), &IntegratorConfig::default()).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("tau,A,L,T,rA,rE\n"));
        assert_eq!(text.lines().count(), 2);
    }
}
