use std::io::Write;

use serde::{Deserialize, Serialize};

use super::model::State;
use super::sampler::PosteriorDraws;
use super::CalibrationError;
use crate::io::fmt_f64;

/// Central interval coverages reported around each median.
pub const LEVELS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub median: f64,
    /// Central intervals at 20/40/60/80 % coverage, nested.
    pub intervals: [(f64, f64); 4],
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median and nested central intervals of `values` (must be nonempty).
pub fn band(values: &[f64]) -> Band {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Band {
        median: quantile(&v, 0.5),
        intervals: LEVELS.map(|c| (quantile(&v, 0.5 - c / 2.0), quantile(&v, 0.5 + c / 2.0))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub retained: usize,
    pub parameters: Vec<(String, Band)>,
    pub leverage: Vec<Band>,
    pub trust: Vec<Band>,
    /// Posterior probability of state 2 per month.
    pub p_s2: Vec<f64>,
}

impl PosteriorSummary {
    pub fn parameter(&self, name: &str) -> Option<&Band> {
        self.parameters.iter().find(|(n, _)| n == name).map(|(_, b)| b)
    }
}

pub const PARAMETER_NAMES: [&str; 7] = ["c1", "c2", "sigma2", "lambda", "mu", "L1", "T1"];

pub fn posterior_summary(draws: &PosteriorDraws) -> Result<PosteriorSummary, CalibrationError> {
    let d = &draws.draws;
    if d.is_empty() {
        return Err(CalibrationError::EmptyPosterior);
    }
    let column = |f: &dyn Fn(&super::model::MsmParams) -> f64| d.iter().map(|x| f(&x.params)).collect::<Vec<_>>();
    let getters: [&dyn Fn(&super::model::MsmParams) -> f64; 7] = [
        &|p| p.c1,
        &|p| p.c2,
        &|p| p.sigma2,
        &|p| p.lambda,
        &|p| p.mu,
        &|p| p.l1,
        &|p| p.t1,
    ];
    let parameters = PARAMETER_NAMES
        .iter()
        .zip(getters)
        .map(|(name, g)| (name.to_string(), band(&column(g))))
        .collect();
    let n = d[0].states.len();
    let per_time = |f: &dyn Fn(&super::sampler::Draw, usize) -> f64| {
        (0..n)
            .map(|t| band(&d.iter().map(|x| f(x, t)).collect::<Vec<_>>()))
            .collect::<Vec<_>>()
    };
    let leverage = per_time(&|x, t| x.path.leverage[t]);
    let trust = per_time(&|x, t| x.path.trust[t]);
    let p_s2 = (0..n)
        .map(|t| d.iter().filter(|x| x.states[t] == State::S2).count() as f64 / d.len() as f64)
        .collect();
    Ok(PosteriorSummary {
        retained: d.len(),
        parameters,
        leverage,
        trust,
        p_s2,
    })
}

/// Run-length encoding such as `1x12;2x3`.
pub fn encode_states(states: &[State]) -> String {
    let mut out = Vec::new();
    let mut i = 0;
    while i < states.len() {
        let j = states[i..].iter().take_while(|&&s| s == states[i]).count();
        out.push(format!("{}x{}", states[i].index() + 1, j));
        i += j;
    }
    out.join(";")
}

pub fn decode_states(s: &str) -> Option<Vec<State>> {
    let mut out = Vec::new();
    if s.is_empty() {
        return Some(out);
    }
    for run in s.split(';') {
        let (state, count) = run.split_once('x')?;
        let state = match state {
            "1" => State::S1,
            "2" => State::S2,
            _ => return None,
        };
        out.extend(std::iter::repeat_n(state, count.parse().ok()?));
    }
    Some(out)
}

pub fn write_draws_csv<W: Write>(draws: &PosteriorDraws, mut w: W) -> std::io::Result<()> {
    writeln!(w, "iteration,c1,c2,sigma2,lambda,mu,L1,T1,states")?;
    for d in &draws.draws {
        let p = &d.params;
        let vals = [p.c1, p.c2, p.sigma2, p.lambda, p.mu, p.l1, p.t1].map(fmt_f64);
        writeln!(w, "{},{},{}", d.iteration, vals.join(","), encode_states(&d.states))?;
    }
    Ok(())
}

/// One row per parameter and per month for leverage and trust, plus one row
/// per month for the state-2 probability (in the `median` column).
pub fn write_summary_csv<W: Write>(s: &PosteriorSummary, mut w: W) -> std::io::Result<()> {
    writeln!(w, "quantity,t,median,lo20,hi20,lo40,hi40,lo60,hi60,lo80,hi80")?;
    let row = |w: &mut W, q: &str, t: &str, b: &Band| {
        let iv: Vec<String> = b
            .intervals
            .iter()
            .flat_map(|&(lo, hi)| [fmt_f64(lo), fmt_f64(hi)])
            .collect();
        writeln!(w, "{q},{t},{},{}", fmt_f64(b.median), iv.join(","))
    };
    for (name, b) in &s.parameters {
        row(&mut w, name, "", b)?;
    }
    for (t, b) in s.leverage.iter().enumerate() {
        row(&mut w, "L", &(t + 1).to_string(), b)?;
    }
    for (t, b) in s.trust.iter().enumerate() {
        row(&mut w, "T", &(t + 1).to_string(), b)?;
    }
    for (t, p) in s.p_s2.iter().enumerate() {
        writeln!(w, "P_s2,{},{},,,,,,,,", t + 1, fmt_f64(*p))?;
    }
    Ok(())
}
