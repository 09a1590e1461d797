//! Piecewise-constant regime schedules: parameters `(g, r)` switch
//! discontinuously at given times while `a` stays fixed.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DomainError, EconState, Params};
use crate::io::fmt_f64;
use crate::trajectory::{Integrator, IntegratorConfig, Terminal, TrajectoryError, TrajectoryRecord};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("segment {index}: {source}")]
    Segment {
        index: usize,
        #[source]
        source: TrajectoryError,
    },
    #[error(transparent)]
    Config(TrajectoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSegment {
    pub tau_start: f64,
    pub g_tilde: f64,
    pub r_tilde: f64,
}

impl RegimeSegment {
    pub fn new(tau_start: f64, g_tilde: f64, r_tilde: f64) -> Self {
        RegimeSegment {
            tau_start,
            g_tilde,
            r_tilde,
        }
    }
}

pub fn validate_schedule(schedule: &[RegimeSegment]) -> Result<(), ScenarioError> {
    let first = schedule
        .first()
        .ok_or_else(|| ScenarioError::InvalidSchedule("schedule is empty".into()))?;
    if first.tau_start != 0.0 {
        return Err(ScenarioError::InvalidSchedule(format!(
            "first segment must start at 0, not {}",
            first.tau_start
        )));
    }
    for (i, s) in schedule.iter().enumerate() {
        if !(s.tau_start.is_finite() && s.g_tilde.is_finite() && s.r_tilde.is_finite()) {
            return Err(ScenarioError::InvalidSchedule(format!(
                "segment {i} has non-finite values"
            )));
        }
    }
    for (i, w) in schedule.windows(2).enumerate() {
        if !(w[1].tau_start > w[0].tau_start) {
            return Err(ScenarioError::InvalidSchedule(format!(
                "segment {} starts at {} which is not after {}",
                i + 1,
                w[1].tau_start,
                w[0].tau_start
            )));
        }
    }
    Ok(())
}

/// Rates on both sides of a parameter switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchPoint {
    pub tau: f64,
    /// Index of the segment that starts here.
    pub segment: usize,
    pub roa_before: f64,
    pub roa_after: f64,
    pub roe_before: f64,
    pub roe_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthDiagnostic {
    pub tau: f64,
    pub r_assets: f64,
    /// Instantaneous-rate shortcut `r_A(tau) * tau`.
    pub roa_times_tau: f64,
    /// Exact `ln(A(tau) / A(0))` from the integrated path.
    pub ln_growth: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub a_tilde: f64,
    pub schedule: Vec<RegimeSegment>,
    pub path: TrajectoryRecord,
    /// Segment index of each sample in `path.samples`.
    pub sample_segments: Vec<usize>,
    pub switches: Vec<SwitchPoint>,
    pub diagnostics: Vec<GrowthDiagnostic>,
    pub stationary_roa: Option<f64>,
}

impl ScenarioResult {
    /// Total time with negative ROA, with sign changes located by linear
    /// interpolation between samples.
    pub fn negative_roa_duration(&self) -> f64 {
        self.path
            .samples
            .windows(2)
            .map(|w| {
                let (a, b) = (&w[0], &w[1]);
                let dt = b.tau - a.tau;
                match (a.r_assets < 0.0, b.r_assets < 0.0) {
                    (true, true) => dt,
                    (false, false) => 0.0,
                    (true, false) => dt * a.r_assets / (a.r_assets - b.r_assets),
                    (false, true) => dt * b.r_assets / (b.r_assets - a.r_assets),
                }
            })
            .sum()
    }

    /// `ln A` at `tau`: interpolated along the path, or extrapolated at the
    /// stationary rate past a converged terminal. `None` past any other end.
    pub fn ln_assets_at(&self, tau: f64) -> Option<f64> {
        let s = &self.path.samples;
        let last = self.path.last();
        if tau > last.tau {
            return self.stationary_roa.map(|r| last.ln_assets + r * (tau - last.tau));
        }
        let idx = s.partition_point(|x| x.tau < tau);
        if idx == 0 {
            return Some(s[0].ln_assets);
        }
        let (a, b) = (&s[idx - 1], &s[idx]);
        if b.tau == a.tau {
            return Some(b.ln_assets);
        }
        let w = (tau - a.tau) / (b.tau - a.tau);
        Some(a.ln_assets + w * (b.ln_assets - a.ln_assets))
    }

    /// Maximum ROA strictly after `tau`.
    pub fn max_roa_after(&self, tau: f64) -> Option<f64> {
        self.path
            .samples
            .iter()
            .filter(|s| s.tau > tau)
            .map(|s| s.r_assets)
            .reduce(f64::max)
    }

    /// Trajectory CSV with a segment column.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "tau,segment,A,L,T,rA,rE")?;
        for (s, seg) in self.path.samples.iter().zip(&self.sample_segments) {
            writeln!(
                w,
                "{},{seg},{},{},{},{},{}",
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
}

/// `r_A tau` against the exact `ln(A/A0)` along the path.
pub fn asset_growth_diagnostics(path: &TrajectoryRecord) -> Vec<GrowthDiagnostic> {
    let ln_a0 = path.first().ln_assets;
    path.samples
        .iter()
        .map(|s| {
            let roa_times_tau = s.r_assets * s.tau;
            let ln_growth = s.ln_assets - ln_a0;
            GrowthDiagnostic {
                tau: s.tau,
                r_assets: s.r_assets,
                roa_times_tau,
                ln_growth,
                difference: roa_times_tau - ln_growth,
            }
        })
        .collect()
}

pub fn write_diagnostics_csv<W: Write>(d: &[GrowthDiagnostic], mut w: W) -> std::io::Result<()> {
    writeln!(w, "tau,rA,rA_tau,lnA_ratio,difference")?;
    for x in d {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_f64(x.tau),
            fmt_f64(x.r_assets),
            fmt_f64(x.roa_times_tau),
            fmt_f64(x.ln_growth),
            fmt_f64(x.difference)
        )?;
    }
    Ok(())
}

/// Integrates through the schedule, switching parameters exactly at segment
/// starts. Convergence events are only detected in the last segment; domain
/// exits end the run in any segment. The last segment runs to `cfg.max_tau`.
pub fn run_schedule(
    s0: &EconState,
    a_tilde: f64,
    schedule: &[RegimeSegment],
    cfg: &IntegratorConfig,
) -> Result<ScenarioResult, ScenarioError> {
    validate_schedule(schedule)?;
    cfg.validate().map_err(ScenarioError::Config)?;
    s0.validate()?;
    if s0.trust >= 1.0 {
        return Err(DomainError::SingularTrust(s0.trust).into());
    }
    let last_start = schedule.last().map_or(0.0, |s| s.tau_start);
    if cfg.max_tau <= last_start {
        return Err(ScenarioError::InvalidSchedule(format!(
            "max_tau = {} must exceed the last segment start {last_start}",
            cfg.max_tau
        )));
    }
    let params = schedule
        .iter()
        .map(|s| Params::nondimensional(a_tilde, s.g_tilde, s.r_tilde))
        .collect::<Result<Vec<_>, _>>()?;

    let mut it = Integrator::new(s0, &params[0], cfg);
    let mut sample_segments = Vec::new();
    let mut switches = Vec::new();
    let mut terminal = None;
    for (i, p) in params.iter().enumerate() {
        let is_last = i + 1 == params.len();
        if i > 0 {
            let before = it.last_sample();
            it.push_sample(p);
            let after = it.last_sample();
            switches.push(SwitchPoint {
                tau: after.tau,
                segment: i,
                roa_before: before.r_assets,
                roa_after: after.r_assets,
                roe_before: before.r_equity,
                roe_after: after.r_equity,
            });
        }
        let seg_err = |source| ScenarioError::Segment { index: i, source };
        if is_last {
            terminal = it.check(p, true);
            if terminal.is_none() {
                terminal = Some(
                    it.run_until(p, cfg.max_tau, true)
                        .map_err(seg_err)?
                        .unwrap_or(Terminal::HorizonReached),
                );
            }
        } else {
            terminal = it.run_until(p, schedule[i + 1].tau_start, false).map_err(seg_err)?;
        }
        sample_segments.resize(it.sample_count(), i);
        if terminal.is_some() && !is_last {
            break;
        }
    }
    let path = it.finish(terminal.unwrap_or(Terminal::HorizonReached));
    let diagnostics = asset_growth_diagnostics(&path);
    let stationary_roa = path.stationary_roa();
    Ok(ScenarioResult {
        a_tilde,
        schedule: schedule.to_vec(),
        path,
        sample_segments,
        switches,
        diagnostics,
        stationary_roa,
    })
}

/// Pre-crisis regime, crisis shock at `crisis_start`, and a policy
/// intervention at each of `intervention_times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionSweep {
    pub a_tilde: f64,
    pub pre_crisis: (f64, f64),
    pub crisis: (f64, f64),
    pub intervention: (f64, f64),
    pub crisis_start: f64,
    pub intervention_times: Vec<f64>,
    /// Time at which `ln A` is compared across runs.
    pub horizon: f64,
}

impl Default for InterventionSweep {
    fn default() -> Self {
        InterventionSweep {
            a_tilde: 0.05,
            pre_crisis: (0.06, 0.04),
            crisis: (-0.08, 0.04),
            intervention: (0.04, 0.01),
            crisis_start: 5.0,
            intervention_times: vec![7.0, 12.0, 20.0],
            horizon: 50.0,
        }
    }
}

/// Initial state used by the shipped scenarios.
pub fn default_initial_state() -> EconState {
    EconState::new(1.0, 0.0, 0.26).expect("valid state")
}

impl InterventionSweep {
    /// Schedule for one intervention time. An intervention at the crisis
    /// start removes the crisis segment.
    pub fn schedule(&self, intervention_tau: f64) -> Vec<RegimeSegment> {
        let mut s = vec![RegimeSegment::new(0.0, self.pre_crisis.0, self.pre_crisis.1)];
        if intervention_tau > self.crisis_start {
            s.push(RegimeSegment::new(self.crisis_start, self.crisis.0, self.crisis.1));
        }
        s.push(RegimeSegment::new(
            intervention_tau,
            self.intervention.0,
            self.intervention.1,
        ));
        s
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.crisis_start > 0.0) {
            return Err(ScenarioError::InvalidSchedule("crisis_start must be > 0".into()));
        }
        if self.intervention_times.is_empty() {
            return Err(ScenarioError::InvalidSchedule("no intervention times".into()));
        }
        if let Some(t) = self.intervention_times.iter().find(|&&t| !(t >= self.crisis_start)) {
            return Err(ScenarioError::InvalidSchedule(format!(
                "intervention time {t} precedes the crisis start {}",
                self.crisis_start
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub intervention_tau: f64,
    pub stationary_roa: Option<f64>,
    pub crisis_duration: f64,
    pub ln_assets_at_horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub runs: Vec<ScenarioResult>,
}

/// Runs one scenario per intervention time, in ascending time order.
pub fn intervention_sweep(
    s0: &EconState,
    sweep: &InterventionSweep,
    cfg: &IntegratorConfig,
) -> Result<SweepResult, ScenarioError> {
    sweep.validate()?;
    let mut times = sweep.intervention_times.clone();
    times.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for t in times {
        let run = run_schedule(s0, sweep.a_tilde, &sweep.schedule(t), cfg)?;
        rows.push(SweepRow {
            intervention_tau: t,
            stationary_roa: run.stationary_roa,
            crisis_duration: run.negative_roa_duration(),
            ln_assets_at_horizon: run.ln_assets_at(sweep.horizon),
        });
        runs.push(run);
    }
    Ok(SweepResult { rows, runs })
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> std::io::Result<()> {
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_else(|| "NaN".into());
    writeln!(w, "intervention_tau,stationary_rA,crisis_duration,lnA_at_horizon")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_f64(r.intervention_tau),
            opt(r.stationary_roa),
            fmt_f64(r.crisis_duration),
            opt(r.ln_assets_at_horizon)
        )?;
    }
    Ok(())
}
