use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::model::{forward_paths, transition_matrix, MsmParams, ObservationSeries, State, StatePath};
use super::CalibrationError;

/// Bounded number of state-sequence redraws when a path leaves the domain.
pub const MAX_SYNTHETIC_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub series: ObservationSeries,
    pub states: Vec<State>,
    pub path: StatePath,
}

/// Interest rate falling linearly from 4.5 % to 0.5 % a year.
pub fn default_rate_series(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.045];
    }
    (0..n).map(|i| 0.045 - 0.04 * i as f64 / (n - 1) as f64).collect()
}

/// Simulates regimes starting in state 1, the implied leverage and trust,
/// and noisy ROE observations dated monthly from January 2000. A zero noise
/// variance is allowed here.
pub fn generate_synthetic(
    params: &MsmParams,
    n: usize,
    seed: u64,
    rate: &[f64],
) -> Result<SyntheticData, CalibrationError> {
    if n == 0 || rate.len() != n {
        return Err(CalibrationError::InvalidSeries(format!(
            "need n > 0 and {n} interest rates (got {})",
            rate.len()
        )));
    }
    let mut check = *params;
    if params.sigma2 == 0.0 {
        check.sigma2 = 1.0;
    }
    check.validate()?;
    let tm = transition_matrix(params.lambda, params.mu, params.constants.dt)?;
    let noise = Normal::new(0.0, params.sigma2.sqrt()).map_err(|e| CalibrationError::InvalidParams(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_SYNTHETIC_RETRIES {
        let mut states = Vec::with_capacity(n);
        let mut s = State::S1;
        for _ in 0..n {
            states.push(s);
            let stay = tm[s.index()][s.index()];
            if rng.random::<f64>() >= stay {
                s = s.flipped();
            }
        }
        let path = forward_paths(params, &states, rate);
        if !path.valid {
            continue;
        }
        let roe = (0..n)
            .map(|t| {
                let mean = params.observation_mean(states[t], path.leverage[t], rate[t]);
                if params.sigma2 == 0.0 {
                    mean
                } else {
                    mean + noise.sample(&mut rng)
                }
            })
            .collect();
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let dates = (0..n)
            .map(|i| {
                start
                    .checked_add_months(chrono::Months::new(i as u32))
                    .expect("date in range")
            })
            .collect();
        return Ok(SyntheticData {
            series: ObservationSeries {
                dates: Some(dates),
                roe,
                rate: rate.to_vec(),
            },
            states,
            path,
        });
    }
    Err(CalibrationError::NoValidPath(MAX_SYNTHETIC_RETRIES))
}
