//! Grid evaluations over the `(L, T)` unit square: ROA fields, basin maps and
//! trajectory bundles.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{roa_raw, DomainError, EconState, Params};
use crate::io::fmt_f64;
use crate::trajectory::{integrate, IntegratorConfig, Terminal, TrajectoryError, TrajectoryRecord};

#[derive(Debug, Error)]
pub enum PhaseError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_leverage: usize,
    pub n_trust: usize,
    /// Nodes with `T` or `L` at least `1 - margin` are masked.
    pub margin: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_leverage: 101,
            n_trust: 101,
            margin: 1e-3,
        }
    }
}

impl GridSpec {
    pub fn square(n: usize) -> Self {
        GridSpec {
            n_leverage: n,
            n_trust: n,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), PhaseError> {
        if self.n_leverage < 2 || self.n_trust < 2 {
            return Err(PhaseError::InvalidGrid(format!(
                "resolution {}x{} must be at least 2x2",
                self.n_leverage, self.n_trust
            )));
        }
        if !(self.margin > 0.0 && self.margin < 0.1) {
            return Err(PhaseError::InvalidGrid(format!(
                "margin {} must lie in (0, 0.1)",
                self.margin
            )));
        }
        Ok(())
    }

    pub fn leverage_at(&self, i: usize) -> f64 {
        i as f64 / (self.n_leverage - 1) as f64
    }

    pub fn trust_at(&self, j: usize) -> f64 {
        j as f64 / (self.n_trust - 1) as f64
    }

    /// Nodes in row-major order: trust outer, leverage inner.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        (0..self.n_trust)
            .flat_map(|j| (0..self.n_leverage).map(move |i| (i, j)))
            .map(|(i, j)| (self.leverage_at(i), self.trust_at(j)))
            .collect()
    }
}

/// Named parameter regimes with `k = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `g > r`: L0 > 1, the whole diagonal attracts.
    Regular,
    /// `g < r`, `g < 0`: L0 inside (0, 1).
    Crisis,
    /// `g = r = 0`: L0 = 1, zero ROA on the diagonal.
    Stagnation,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Regular, Regime::Crisis, Regime::Stagnation];

    pub fn params(self) -> Params {
        let (a, g, r) = match self {
            Regime::Regular => (0.05, 0.06, 0.04),
            Regime::Crisis => (0.05, -0.01, 0.04),
            Regime::Stagnation => (0.05, 0.0, 0.0),
        };
        Params::nondimensional(a, g, r).expect("preset parameters are valid")
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Regular => "regular",
            Regime::Crisis => "crisis",
            Regime::Stagnation => "stagnation",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown regime '{s}' (expected regular, crisis or stagnation)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldNode {
    pub leverage: f64,
    pub trust: f64,
    /// `None` where the node is masked.
    pub roa: Option<f64>,
}

/// ROA at every grid node, masking `T >= 1 - margin`.
pub fn roa_field(p: &Params, grid: &GridSpec) -> Result<Vec<FieldNode>, PhaseError> {
    grid.validate()?;
    p.validate()?;
    Ok(grid
        .nodes()
        .into_iter()
        .map(|(l, t)| FieldNode {
            leverage: l,
            trust: t,
            roa: (t < 1.0 - grid.margin).then(|| roa_raw(l, t, p)),
        })
        .collect())
}

pub fn write_roa_field_csv<W: Write>(field: &[FieldNode], mut w: W) -> std::io::Result<()> {
    writeln!(w, "L,T,rA")?;
    for n in field {
        let r = n.roa.map(fmt_f64).unwrap_or_else(|| "NaN".into());
        writeln!(w, "{},{},{}", fmt_f64(n.leverage), fmt_f64(n.trust), r)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasinLabel {
    DiagonalBasin,
    PointBasin,
    ExitBasin,
}

impl BasinLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BasinLabel::DiagonalBasin => "diagonal",
            BasinLabel::PointBasin => "point",
            BasinLabel::ExitBasin => "exit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasinNode {
    pub leverage: f64,
    pub trust: f64,
    /// `None` for masked nodes.
    pub label: Option<BasinLabel>,
    pub confidence: Confidence,
}

/// Label of the attractor nearest to `(L, T)`: the diagonal, the point
/// `(1, L0)` when it lies in the domain, or the leverage boundary.
fn nearest_label(l: f64, t: f64, p: &Params) -> BasinLabel {
    let mut best = ((t - l).abs() / std::f64::consts::SQRT_2, BasinLabel::DiagonalBasin);
    if let Ok(d) = p.derived() {
        if (0.0..1.0).contains(&d.l0) {
            let dist = (1.0 - t).hypot(l - d.l0);
            if dist < best.0 {
                best = (dist, BasinLabel::PointBasin);
            }
        }
    }
    let exit = l.min(1.0 - l).max(0.0);
    if exit < best.0 {
        best = (exit, BasinLabel::ExitBasin);
    }
    best.1
}

fn label_node(l: f64, t: f64, p: &Params, grid: &GridSpec, cfg: &IntegratorConfig) -> BasinNode {
    let node = |label, confidence| BasinNode {
        leverage: l,
        trust: t,
        label,
        confidence,
    };
    if t >= 1.0 - grid.margin || l >= 1.0 - grid.margin {
        return node(None, Confidence::High);
    }
    if t == l {
        return node(Some(BasinLabel::DiagonalBasin), Confidence::High);
    }
    let s0 = match EconState::new(1.0, l, t) {
        Ok(s) => s,
        Err(_) => return node(Some(nearest_label(l, t, p)), Confidence::Low),
    };
    let rec = match integrate(&s0, p, cfg) {
        Ok(r) => r,
        Err(_) => return node(Some(nearest_label(l, t, p)), Confidence::Low),
    };
    let last = rec.last();
    match rec.terminal {
        Terminal::ConvergedToDiagonal { .. } => node(Some(BasinLabel::DiagonalBasin), Confidence::High),
        Terminal::ConvergedToPoint { .. } => node(Some(BasinLabel::PointBasin), Confidence::High),
        Terminal::ExitedLeverageDomain => node(Some(BasinLabel::ExitBasin), Confidence::High),
        Terminal::SingularApproach if 1.0 - last.leverage < 1e-3 => node(Some(BasinLabel::ExitBasin), Confidence::High),
        Terminal::SingularApproach | Terminal::HorizonReached => {
            node(Some(nearest_label(last.leverage, last.trust, p)), Confidence::Low)
        }
    }
}

/// Integrates every unmasked node to its terminal event and labels it by
/// the attractor reached. Output order matches [`GridSpec::nodes`] and does
/// not depend on evaluation order.
pub fn basin_map(p: &Params, grid: &GridSpec, cfg: &IntegratorConfig) -> Result<Vec<BasinNode>, PhaseError> {
    grid.validate()?;
    p.validate()?;
    cfg.validate()?;
    let nodes = grid.nodes();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        Ok(nodes.par_iter().map(|&(l, t)| label_node(l, t, p, grid, cfg)).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(nodes.iter().map(|&(l, t)| label_node(l, t, p, grid, cfg)).collect())
    }
}

pub fn write_basin_csv<W: Write>(map: &[BasinNode], mut w: W) -> std::io::Result<()> {
    writeln!(w, "L,T,label,confidence")?;
    for n in map {
        let label = n.label.map_or("masked", BasinLabel::as_str);
        let conf = match n.confidence {
            Confidence::High => "high",
            Confidence::Low => "low",
        };
        writeln!(w, "{},{},{label},{conf}", fmt_f64(n.leverage), fmt_f64(n.trust))?;
    }
    Ok(())
}

/// Counts of each label among unmasked nodes satisfying `filter(L, T)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BasinCounts {
    pub diagonal: usize,
    pub point: usize,
    pub exit: usize,
    pub low_confidence: usize,
}

impl BasinCounts {
    pub fn tally(map: &[BasinNode], filter: impl Fn(f64, f64) -> bool) -> Self {
        let mut c = BasinCounts::default();
        for n in map.iter().filter(|n| filter(n.leverage, n.trust)) {
            match n.label {
                Some(BasinLabel::DiagonalBasin) => c.diagonal += 1,
                Some(BasinLabel::PointBasin) => c.point += 1,
                Some(BasinLabel::ExitBasin) => c.exit += 1,
                None => continue,
            }
            if n.confidence == Confidence::Low {
                c.low_confidence += 1;
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.diagonal + self.point + self.exit
    }
}

/// One trajectory per seed, in seed order.
pub fn trajectory_bundle(
    p: &Params,
    seeds: &[EconState],
    cfg: &IntegratorConfig,
) -> Result<Vec<TrajectoryRecord>, PhaseError> {
    seeds
        .iter()
        .map(|s| integrate(s, p, cfg).map_err(PhaseError::from))
        .collect()
}
