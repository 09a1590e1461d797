//! Bayesian calibration of a discrete, two-regime version of the model to
//! monthly return-on-equity data.
//!
//! The EBITA/assets level switches between `c1` and `c2` following a
//! continuous-time two-state Markov chain sampled monthly. Leverage and trust
//! follow the explicit Euler recursion of the continuous model, and the
//! observed ROE is the model ROE plus Gaussian noise.

mod model;
mod sampler;
mod summary;
mod synthetic;

use thiserror::Error;

pub use model::{
    forward_paths, log_likelihood, log_state_prior, residual_sum_of_squares, stationary_distribution,
    transition_matrix, ModelConstants, MsmParams, ObservationSeries, State, StatePath, C_SUPPORT, L1_SUPPORT,
    RATE_SUPPORT, SIGMA2_PRIOR, T1_SUPPORT,
};
pub use sampler::{
    gibbs_run, sample_sigma2, AcceptanceRates, Blocks, ChainConfig, Draw, PosteriorDraws, ProposalScales,
};
pub use summary::{
    band, decode_states, encode_states, posterior_summary, quantile, write_draws_csv, write_summary_csv, Band,
    PosteriorSummary, LEVELS, PARAMETER_NAMES,
};
pub use synthetic::{default_rate_series, generate_synthetic, SyntheticData, MAX_SYNTHETIC_RETRIES};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("invalid observation series: {0}")]
    InvalidSeries(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid chain configuration: {0}")]
    InvalidChain(String),
    #[error("no valid initial path after {0} retries")]
    NoValidInitialisation(usize),
    #[error("no valid synthetic path after {0} state redraws")]
    NoValidPath(usize),
    #[error("no draws retained after burn-in")]
    EmptyPosterior,
}
