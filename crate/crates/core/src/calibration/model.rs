use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::CalibrationError;
use crate::dynamics::{leverage_kernel, roe_kernel, trust_kernel, Coefficients};

/// Monthly observations of return on equity and the interest rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    pub dates: Option<Vec<NaiveDate>>,
    pub roe: Vec<f64>,
    pub rate: Vec<f64>,
}

impl ObservationSeries {
    pub fn new(roe: Vec<f64>, rate: Vec<f64>) -> Result<Self, CalibrationError> {
        let s = ObservationSeries { dates: None, roe, rate };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.roe.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roe.is_empty()
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.roe.is_empty() {
            return Err(CalibrationError::InvalidSeries("series is empty".into()));
        }
        if self.roe.len() != self.rate.len() || self.dates.as_ref().is_some_and(|d| d.len() != self.roe.len()) {
            return Err(CalibrationError::InvalidSeries("column lengths differ".into()));
        }
        if let Some(i) = self.roe.iter().chain(&self.rate).position(|x| !x.is_finite()) {
            return Err(CalibrationError::InvalidSeries(format!(
                "non-finite value at index {}",
                i % self.roe.len()
            )));
        }
        Ok(())
    }
}

/// Regime of the two-state Markov chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum State {
    S1,
    S2,
}

impl State {
    pub fn flipped(self) -> State {
        match self {
            State::S1 => State::S2,
            State::S2 => State::S1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            State::S1 => 0,
            State::S2 => 1,
        }
    }
}

/// Fixed rates of the discrete model, per year, and the step in years.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    pub a: f64,
    pub k: f64,
    pub dt: f64,
}

impl Default for ModelConstants {
    fn default() -> Self {
        ModelConstants {
            a: 0.05,
            k: 0.05,
            dt: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsmParams {
    /// EBITA/assets level in state 1.
    pub c1: f64,
    /// EBITA/assets level in state 2.
    pub c2: f64,
    pub sigma2: f64,
    /// Rate of leaving state 1.
    pub lambda: f64,
    /// Rate of leaving state 2.
    pub mu: f64,
    pub l1: f64,
    pub t1: f64,
    pub constants: ModelConstants,
}

pub const C_SUPPORT: (f64, f64) = (-0.25, 0.25);
pub const RATE_SUPPORT: (f64, f64) = (0.0, 100.0);
pub const L1_SUPPORT: (f64, f64) = (0.2, 0.3);
pub const T1_SUPPORT: (f64, f64) = (0.3, 0.4);
/// Inverse-gamma prior shape and scale for the noise variance.
pub const SIGMA2_PRIOR: (f64, f64) = (0.01, 0.01);

pub(crate) fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

impl MsmParams {
    pub fn g(&self, s: State) -> f64 {
        match s {
            State::S1 => self.c1,
            State::S2 => self.c2,
        }
    }

    /// Whether all parameters lie in the prior support.
    pub fn in_support(&self) -> bool {
        self.sigma2 > 0.0
            && within(self.c1, C_SUPPORT)
            && within(self.c2, C_SUPPORT)
            && within(self.lambda, RATE_SUPPORT)
            && within(self.mu, RATE_SUPPORT)
            && within(self.l1, L1_SUPPORT)
            && within(self.t1, T1_SUPPORT)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if !self.in_support() {
            return Err(CalibrationError::InvalidParams(format!(
                "parameters outside the prior support: {self:?}"
            )));
        }
        if !(self.constants.dt > 0.0 && self.constants.k >= 0.0 && self.constants.a.is_finite()) {
            return Err(CalibrationError::InvalidParams(
                "constants need dt > 0 and k >= 0".into(),
            ));
        }
        Ok(())
    }

    fn coefficients(&self, s: State, rate: f64) -> Coefficients {
        Coefficients {
            a: self.constants.a,
            g: self.g(s),
            r: rate,
            k: self.constants.k,
        }
    }

    /// Mean of the observed return on equity at leverage `l`.
    pub fn observation_mean(&self, s: State, l: f64, rate: f64) -> f64 {
        roe_kernel(l, &self.coefficients(s, rate))
    }
}

/// Leverage and trust implied by a state sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePath {
    pub leverage: Vec<f64>,
    pub trust: Vec<f64>,
    /// False once `L` or `T` leaves the open unit interval.
    pub valid: bool,
}

/// Explicit Euler recursion in calendar time starting from `(L1, T1)`;
/// step `t` uses the regime and interest rate of month `t`.
pub fn forward_paths(params: &MsmParams, states: &[State], rate: &[f64]) -> StatePath {
    let mut path = StatePath {
        leverage: Vec::with_capacity(states.len()),
        trust: Vec::with_capacity(states.len()),
        valid: true,
    };
    fill_paths(params, states, rate, &mut path.leverage, &mut path.trust);
    path.valid = path_is_valid(&path.leverage, &path.trust);
    path
}

pub(crate) fn fill_paths(
    params: &MsmParams,
    states: &[State],
    rate: &[f64],
    l_out: &mut Vec<f64>,
    t_out: &mut Vec<f64>,
) {
    l_out.clear();
    t_out.clear();
    let n = states.len();
    if n == 0 {
        return;
    }
    let dt = params.constants.dt;
    let (mut l, mut t) = (params.l1, params.t1);
    l_out.push(l);
    t_out.push(t);
    for i in 0..n - 1 {
        let c = params.coefficients(states[i], rate[i]);
        let l_next = l + leverage_kernel(l, t, &c) * dt;
        let t_next = t + trust_kernel(l, t, &c) * dt;
        (l, t) = (l_next, t_next);
        l_out.push(l);
        t_out.push(t);
    }
}

pub(crate) fn path_is_valid(l: &[f64], t: &[f64]) -> bool {
    l.iter().chain(t).all(|&x| x > 0.0 && x < 1.0)
}

/// Sum of squared residuals of the observation equation, or `None` when the
/// implied path is invalid.
pub fn residual_sum_of_squares(params: &MsmParams, states: &[State], obs: &ObservationSeries) -> Option<f64> {
    let path = forward_paths(params, states, &obs.rate);
    path.valid.then(|| ssr_on_path(params, states, obs, &path.leverage))
}

pub(crate) fn ssr_on_path(params: &MsmParams, states: &[State], obs: &ObservationSeries, leverage: &[f64]) -> f64 {
    states
        .iter()
        .zip(leverage)
        .zip(obs.roe.iter().zip(&obs.rate))
        .map(|((&s, &l), (&y, &r))| (y - params.observation_mean(s, l, r)).powi(2))
        .sum()
}

pub(crate) fn gaussian_log_likelihood(ssr: f64, n: usize, sigma2: f64) -> f64 {
    -0.5 * n as f64 * (2.0 * std::f64::consts::PI * sigma2).ln() - ssr / (2.0 * sigma2)
}

/// Gaussian log-likelihood of the observed ROE; `-inf` for invalid paths.
pub fn log_likelihood(params: &MsmParams, states: &[State], obs: &ObservationSeries) -> f64 {
    match residual_sum_of_squares(params, states, obs) {
        Some(ssr) => gaussian_log_likelihood(ssr, obs.len(), params.sigma2),
        None => f64::NEG_INFINITY,
    }
}

/// Transition probabilities over `dt` of the two-state chain with rate
/// matrix `[[-lambda, lambda], [mu, -mu]]`, from its exact exponential.
pub fn transition_matrix(lambda: f64, mu: f64, dt: f64) -> Result<[[f64; 2]; 2], CalibrationError> {
    if !(lambda >= 0.0 && mu >= 0.0 && lambda.is_finite() && mu.is_finite()) {
        return Err(CalibrationError::InvalidParams(format!(
            "transition rates must be >= 0 (lambda = {lambda}, mu = {mu})"
        )));
    }
    if !(dt >= 0.0) {
        return Err(CalibrationError::InvalidParams(format!("dt = {dt} must be >= 0")));
    }
    let s = lambda + mu;
    if s == 0.0 {
        return Ok([[1.0, 0.0], [0.0, 1.0]]);
    }
    let decay = -(-s * dt).exp_m1();
    let p12 = lambda / s * decay;
    let p21 = mu / s * decay;
    Ok([[1.0 - p12, p12], [p21, 1.0 - p21]])
}

/// Stationary distribution of the chain; uniform when both rates vanish.
pub fn stationary_distribution(lambda: f64, mu: f64) -> [f64; 2] {
    let s = lambda + mu;
    if s == 0.0 {
        [0.5, 0.5]
    } else {
        [mu / s, lambda / s]
    }
}

/// Log prior probability of a state sequence: stationary start and
/// transitions over `dt`.
pub fn log_state_prior(states: &[State], lambda: f64, mu: f64, dt: f64) -> f64 {
    let Ok(p) = transition_matrix(lambda, mu, dt) else {
        return f64::NEG_INFINITY;
    };
    let Some(first) = states.first() else {
        return 0.0;
    };
    let pi = stationary_distribution(lambda, mu);
    pi[first.index()].ln()
        + states
            .windows(2)
            .map(|w| p[w[0].index()][w[1].index()].ln())
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn truth() -> MsmParams {
        MsmParams {
            c1: 0.10,
            c2: -0.16,
            sigma2: 0.0025,
            lambda: 0.5,
            mu: 0.5,
            l1: 0.25,
            t1: 0.35,
            constants: ModelConstants::default(),
        }
    }

    #[test]
    fn transition_probabilities() {
        assert_eq!(transition_matrix(0.0, 0.0, 0.1).unwrap(), [[1.0, 0.0], [0.0, 1.0]]);
        let p = transition_matrix(1.0, 1.0, 0.1).unwrap();
        assert_relative_eq!(p[0][1], 0.5 * (1.0 - (-0.2f64).exp()), max_relative = 1e-15);
        assert!((p[0][1] - 0.0906).abs() < 1e-4);
        let far = transition_matrix(2.0, 6.0, 1e3).unwrap();
        assert_relative_eq!(far[0][0], 0.75, max_relative = 1e-15);
        assert_relative_eq!(far[1][1], 0.25, max_relative = 1e-15);
        for row in transition_matrix(80.0, 3.0, 0.1).unwrap() {
            assert_relative_eq!(row[0] + row[1], 1.0, max_relative = 1e-15);
            assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
        assert!(transition_matrix(-1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn first_two_steps_by_hand() {
        let p = truth();
        let states = [State::S1, State::S1, State::S1];
        let rate = [0.03, 0.02, 0.02];
        let path = forward_paths(&p, &states, &rate);
        let (a, k, dt) = (0.05, 0.05, 0.1);
        let (l1, t1) = (0.25, 0.35);
        let l2 = l1 + (t1 - l1) * ((0.10 - 0.03 * l1 + a * (1.0 - l1)) / (1.0 - t1) + k * (1.0 - l1) * t1) * dt;
        let t2 = t1 + k * t1 * (t1 - l1) * (1.0 - t1) * dt;
        let l3 = l2 + (t2 - l2) * ((0.10 - 0.02 * l2 + a * (1.0 - l2)) / (1.0 - t2) + k * (1.0 - l2) * t2) * dt;
        assert_eq!(path.leverage[0], l1);
        assert_relative_eq!(path.leverage[1], l2, max_relative = 1e-15);
        assert_relative_eq!(path.trust[1], t2, max_relative = 1e-15);
        assert_relative_eq!(path.leverage[2], l3, max_relative = 1e-15);
        assert!(path.valid);
        assert!(path.leverage[2] > path.leverage[1] && path.leverage[1] > l1);
    }

    #[test]
    fn leverage_follows_sign_of_g_plus_a() {
        let p = truth();
        let n = 40;
        let rate = vec![0.02; n];
        let up = forward_paths(&p, &vec![State::S1; n], &rate);
        let down = forward_paths(&p, &vec![State::S2; n], &rate);
        assert!(up.leverage.windows(2).all(|w| w[1] > w[0]));
        assert!(down.leverage.windows(2).all(|w| w[1] < w[0]));
        for path in [&up, &down] {
            assert!(path.trust.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn zero_k_freezes_trust_only() {
        let mut p = truth();
        p.constants.k = 0.0;
        let path = forward_paths(&p, &[State::S1; 5], &[0.02; 5]);
        assert!(path.trust.iter().all(|&t| t == 0.35));
        assert!(path.leverage[4] > 0.25);
    }

    #[test]
    fn invalid_path_gives_negative_infinity() {
        let mut p = truth();
        p.c2 = -0.25;
        p.l1 = 0.2;
        let n = 2000;
        let obs = ObservationSeries::new(vec![0.0; n], vec![0.05; n]).unwrap();
        assert_eq!(log_likelihood(&p, &vec![State::S2; n], &obs), f64::NEG_INFINITY);
    }

    #[test]
    fn likelihood_identities() {
        let p = truth();
        let states = [State::S1, State::S2, State::S1];
        let rate = vec![0.02, 0.03, 0.01];
        let path = forward_paths(&p, &states, &rate);
        let roe: Vec<f64> = (0..3)
            .map(|i| p.observation_mean(states[i], path.leverage[i], rate[i]))
            .collect();
        let obs = ObservationSeries::new(roe.clone(), rate.clone()).unwrap();
        let at_mode = log_likelihood(&p, &states, &obs);
        assert_relative_eq!(
            at_mode,
            3.0 * (1.0 / (2.0 * std::f64::consts::PI * p.sigma2).sqrt()).ln(),
            max_relative = 1e-12
        );

        // single observation against the scalar normal density
        let obs1 = ObservationSeries::new(vec![roe[0] + 0.03], vec![rate[0]]).unwrap();
        let density = (-(0.03f64).powi(2) / (2.0 * p.sigma2)).exp() / (2.0 * std::f64::consts::PI * p.sigma2).sqrt();
        assert_relative_eq!(
            log_likelihood(&p, &states[..1], &obs1),
            density.ln(),
            max_relative = 1e-12
        );

        // doubling the variance at fixed residuals
        let shifted = ObservationSeries::new(roe.iter().map(|x| x + 0.01).collect(), rate).unwrap();
        let ssr = 3.0 * 1e-4;
        let mut p2 = p;
        p2.sigma2 *= 2.0;
        let diff = log_likelihood(&p2, &states, &shifted) - log_likelihood(&p, &states, &shifted);
        let want = -1.5 * 2f64.ln() + ssr / (2.0 * p.sigma2) - ssr / (4.0 * p.sigma2);
        assert_relative_eq!(diff, want, max_relative = 1e-9);
    }

    #[test]
    fn state_prior() {
        let s = [State::S1, State::S1, State::S2];
        let p = transition_matrix(0.5, 1.5, 0.1).unwrap();
        let want = 0.75f64.ln() + p[0][0].ln() + p[0][1].ln();
        assert_relative_eq!(log_state_prior(&s, 0.5, 1.5, 0.1), want, max_relative = 1e-14);
        assert_eq!(log_state_prior(&s, 0.0, 1.0, 0.1), f64::NEG_INFINITY);
    }

    #[test]
    fn series_validation() {
        assert!(ObservationSeries::new(vec![], vec![]).is_err());
        assert!(ObservationSeries::new(vec![0.1], vec![]).is_err());
        assert!(ObservationSeries::new(vec![f64::NAN], vec![0.1]).is_err());
    }
}
