//! Metropolis-within-Gibbs sampler for the Markov-switching model.
//!
//! Each iteration updates, in order: the noise variance from its conjugate
//! inverse-gamma conditional; `c1`, `c2`; the transition rates; the initial
//! leverage and trust; and every month's regime by a single-site flip. All
//! but the first are random-walk Metropolis steps that reject proposals
//! outside the uniform prior support. The regime emission depends on the
//! whole past through the leverage path, so forward filtering does not
//! apply and regimes are flipped one at a time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{
    fill_paths, gaussian_log_likelihood, log_state_prior, path_is_valid, ssr_on_path, transition_matrix, within,
    ModelConstants, MsmParams, ObservationSeries, State, StatePath, C_SUPPORT, L1_SUPPORT, RATE_SUPPORT, SIGMA2_PRIOR,
    T1_SUPPORT,
};
use super::CalibrationError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalScales {
    pub c: [f64; 2],
    pub rates: [f64; 2],
    pub init: [f64; 2],
}

impl Default for ProposalScales {
    fn default() -> Self {
        ProposalScales {
            c: [0.01; 2],
            rates: [0.5; 2],
            init: [0.005; 2],
        }
    }
}

/// Which blocks are updated; frozen blocks keep their initial values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blocks {
    pub sigma2: bool,
    pub c: bool,
    pub rates: bool,
    pub init: bool,
    pub states: bool,
}

impl Default for Blocks {
    fn default() -> Self {
        Blocks {
            sigma2: true,
            c: true,
            rates: true,
            init: true,
            states: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Proposal scales are retuned after every batch of this many burn-in
    /// iterations, then frozen.
    pub adapt_batch: usize,
    pub scales: ProposalScales,
    pub blocks: Blocks,
    /// Known regimes; disables the regime block.
    pub fixed_states: Option<Vec<State>>,
    pub init: Option<MsmParams>,
    pub max_init_retries: usize,
    pub constants: ModelConstants,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 200,
            burn_in: 100,
            adapt_batch: 25,
            scales: ProposalScales::default(),
            blocks: Blocks::default(),
            fixed_states: None,
            init: None,
            max_init_retries: 100,
            constants: ModelConstants::default(),
        }
    }
}

impl ChainConfig {
    pub fn validate(&self, n: usize) -> Result<(), CalibrationError> {
        let bad = |m: String| Err(CalibrationError::InvalidChain(m));
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return bad(format!(
                "need iterations > burn_in (got {} and {})",
                self.iterations, self.burn_in
            ));
        }
        if self.adapt_batch == 0 {
            return bad("adapt_batch must be >= 1".into());
        }
        let s = &self.scales;
        if !s
            .c
            .iter()
            .chain(&s.rates)
            .chain(&s.init)
            .all(|&x| x > 0.0 && x.is_finite())
        {
            return bad("proposal scales must be finite and > 0".into());
        }
        if let Some(f) = &self.fixed_states {
            if f.len() != n {
                return bad(format!("fixed_states has length {} but the series has {n}", f.len()));
            }
        }
        if let Some(p) = &self.init {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    pub params: MsmParams,
    pub states: Vec<State>,
    pub path: StatePath,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub c: f64,
    pub rates: f64,
    pub init: f64,
    pub states: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    /// Draws after burn-in, one per iteration.
    pub draws: Vec<Draw>,
    /// Post-burn-in acceptance rate per block.
    pub acceptance: AcceptanceRates,
    pub final_scales: ProposalScales,
}

/// Draws the noise variance from its inverse-gamma conditional given the
/// residual sum of squares of `n` observations.
pub fn sample_sigma2<R: Rng + ?Sized>(rng: &mut R, ssr: f64, n: usize) -> f64 {
    let shape = SIGMA2_PRIOR.0 + 0.5 * n as f64;
    let scale = SIGMA2_PRIOR.1 + 0.5 * ssr;
    let gamma = Gamma::new(shape, 1.0 / scale).expect("positive shape and scale");
    1.0 / gamma.sample(rng)
}

#[derive(Debug, Clone, Copy, Default)]
struct Counter {
    proposed: usize,
    accepted: usize,
}

impl Counter {
    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as usize;
    }

    fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Scalar parameters updated by random-walk Metropolis.
#[derive(Debug, Clone, Copy)]
enum Scalar {
    C1,
    C2,
    Lambda,
    Mu,
    L1,
    T1,
}

impl Scalar {
    const ALL: [Scalar; 6] = [
        Scalar::C1,
        Scalar::C2,
        Scalar::Lambda,
        Scalar::Mu,
        Scalar::L1,
        Scalar::T1,
    ];

    fn get(self, p: &MsmParams) -> f64 {
        match self {
            Scalar::C1 => p.c1,
            Scalar::C2 => p.c2,
            Scalar::Lambda => p.lambda,
            Scalar::Mu => p.mu,
            Scalar::L1 => p.l1,
            Scalar::T1 => p.t1,
        }
    }

    fn set(self, p: &mut MsmParams, x: f64) {
        match self {
            Scalar::C1 => p.c1 = x,
            Scalar::C2 => p.c2 = x,
            Scalar::Lambda => p.lambda = x,
            Scalar::Mu => p.mu = x,
            Scalar::L1 => p.l1 = x,
            Scalar::T1 => p.t1 = x,
        }
    }

    fn support(self) -> (f64, f64) {
        match self {
            Scalar::C1 | Scalar::C2 => C_SUPPORT,
            Scalar::Lambda | Scalar::Mu => RATE_SUPPORT,
            Scalar::L1 => L1_SUPPORT,
            Scalar::T1 => T1_SUPPORT,
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    /// Rates only enter through the regime prior; everything else through
    /// the likelihood.
    fn affects_likelihood(self) -> bool {
        !matches!(self, Scalar::Lambda | Scalar::Mu)
    }
}

fn scale_of(scales: &ProposalScales, s: Scalar) -> f64 {
    match s {
        Scalar::C1 => scales.c[0],
        Scalar::C2 => scales.c[1],
        Scalar::Lambda => scales.rates[0],
        Scalar::Mu => scales.rates[1],
        Scalar::L1 => scales.init[0],
        Scalar::T1 => scales.init[1],
    }
}

fn scale_mut(scales: &mut ProposalScales, s: Scalar) -> &mut f64 {
    match s {
        Scalar::C1 => &mut scales.c[0],
        Scalar::C2 => &mut scales.c[1],
        Scalar::Lambda => &mut scales.rates[0],
        Scalar::Mu => &mut scales.rates[1],
        Scalar::L1 => &mut scales.init[0],
        Scalar::T1 => &mut scales.init[1],
    }
}

struct Chain<'a> {
    obs: &'a ObservationSeries,
    params: MsmParams,
    states: Vec<State>,
    leverage: Vec<f64>,
    trust: Vec<f64>,
    scratch_l: Vec<f64>,
    scratch_t: Vec<f64>,
    /// Residual sum of squares on the current (valid) path.
    ssr: f64,
    rng: ChaCha8Rng,
    scales: ProposalScales,
    scalar_counts: [Counter; 6],
    state_count: Counter,
}

impl<'a> Chain<'a> {
    /// Returns the SSR of a candidate, leaving its path in the scratch
    /// buffers, or `None` for an invalid path.
    fn evaluate(&mut self, params: &MsmParams, states: &[State]) -> Option<f64> {
        fill_paths(params, states, &self.obs.rate, &mut self.scratch_l, &mut self.scratch_t);
        path_is_valid(&self.scratch_l, &self.scratch_t).then(|| ssr_on_path(params, states, self.obs, &self.scratch_l))
    }

    fn accept_scratch(&mut self, ssr: f64) {
        std::mem::swap(&mut self.leverage, &mut self.scratch_l);
        std::mem::swap(&mut self.trust, &mut self.scratch_t);
        self.ssr = ssr;
    }

    fn log_lik(&self, ssr: f64) -> f64 {
        gaussian_log_likelihood(ssr, self.obs.len(), self.params.sigma2)
    }

    fn state_prior(&self, p: &MsmParams) -> f64 {
        log_state_prior(&self.states, p.lambda, p.mu, p.constants.dt)
    }

    fn metropolis(&mut self, log_ratio: f64) -> bool {
        log_ratio >= 0.0 || self.rng.random::<f64>().ln() < log_ratio
    }

    fn update_sigma2(&mut self) {
        self.params.sigma2 = sample_sigma2(&mut self.rng, self.ssr, self.obs.len());
    }

    fn update_scalar(&mut self, which: Scalar) {
        let current = which.get(&self.params);
        let z: f64 = self.rng.sample(StandardNormal);
        let proposal = current + scale_of(&self.scales, which) * z;
        let mut accepted = false;
        if within(proposal, which.support()) {
            let mut cand = self.params;
            which.set(&mut cand, proposal);
            if which.affects_likelihood() {
                let states = std::mem::take(&mut self.states);
                let ssr = self.evaluate(&cand, &states);
                self.states = states;
                if let Some(ssr) = ssr {
                    let ratio = self.log_lik(ssr) - self.log_lik(self.ssr);
                    if self.metropolis(ratio) {
                        self.params = cand;
                        self.accept_scratch(ssr);
                        accepted = true;
                    }
                }
            } else {
                let ratio = self.state_prior(&cand) - self.state_prior(&self.params);
                if self.metropolis(ratio) {
                    self.params = cand;
                    accepted = true;
                }
            }
        }
        self.scalar_counts[which.index()].record(accepted);
    }

    fn update_states(&mut self) {
        let p = self.params;
        let tm = transition_matrix(p.lambda, p.mu, p.constants.dt).expect("rates in support");
        let ltm = tm.map(|row| row.map(f64::ln));
        let pi = super::model::stationary_distribution(p.lambda, p.mu);
        let n = self.states.len();
        for t in 0..n {
            let old = self.states[t];
            let new = old.flipped();
            // local change of the regime prior
            let mut prior_delta = 0.0;
            if t == 0 {
                prior_delta += pi[new.index()].ln() - pi[old.index()].ln();
            } else {
                let prev = self.states[t - 1].index();
                prior_delta += ltm[prev][new.index()] - ltm[prev][old.index()];
            }
            if t + 1 < n {
                let next = self.states[t + 1].index();
                prior_delta += ltm[new.index()][next] - ltm[old.index()][next];
            }
            if prior_delta == f64::NEG_INFINITY {
                self.state_count.record(false);
                continue;
            }
            self.states[t] = new;
            let states = std::mem::take(&mut self.states);
            let ssr = self.evaluate(&p, &states);
            self.states = states;
            let accepted = match ssr {
                Some(ssr) => {
                    let ratio = self.log_lik(ssr) - self.log_lik(self.ssr) + prior_delta;
                    if self.metropolis(ratio) {
                        self.accept_scratch(ssr);
                        true
                    } else {
                        false
                    }
                }
                None => false,
            };
            if !accepted {
                self.states[t] = old;
            }
            self.state_count.record(accepted);
        }
    }
}

fn default_init(obs: &ObservationSeries, constants: ModelConstants) -> (MsmParams, Vec<State>) {
    let n = obs.len() as f64;
    let mean = obs.roe.iter().sum::<f64>() / n;
    let var = obs.roe.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let params = MsmParams {
        c1: 0.05,
        c2: -0.05,
        sigma2: var.max(1e-6),
        lambda: 1.0,
        mu: 1.0,
        l1: 0.25,
        t1: 0.35,
        constants,
    };
    let states = obs
        .roe
        .iter()
        .map(|&y| if y < mean { State::S2 } else { State::S1 })
        .collect();
    (params, states)
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Runs one chain. Identical inputs and seed give identical draws.
pub fn gibbs_run(obs: &ObservationSeries, config: &ChainConfig, seed: u64) -> Result<PosteriorDraws, CalibrationError> {
    obs.validate()?;
    config.validate(obs.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut params, mut states) = default_init(obs, config.constants);
    if let Some(init) = config.init {
        params = init;
    }
    if let Some(f) = &config.fixed_states {
        states = f.clone();
    }
    let blocks = Blocks {
        states: config.blocks.states && config.fixed_states.is_none(),
        ..config.blocks
    };

    let mut chain = Chain {
        obs,
        params,
        states,
        leverage: Vec::new(),
        trust: Vec::new(),
        scratch_l: Vec::new(),
        scratch_t: Vec::new(),
        ssr: 0.0,
        rng: ChaCha8Rng::seed_from_u64(0),
        scales: config.scales,
        scalar_counts: [Counter::default(); 6],
        state_count: Counter::default(),
    };

    // Find a valid starting path, redrawing the free parameters from the
    // prior if needed.
    let mut attempt = 0;
    loop {
        let (p, s) = (chain.params, std::mem::take(&mut chain.states));
        let ssr = chain.evaluate(&p, &s);
        chain.states = s;
        if let Some(ssr) = ssr {
            chain.accept_scratch(ssr);
            break;
        }
        attempt += 1;
        if attempt > config.max_init_retries {
            return Err(CalibrationError::NoValidInitialisation(config.max_init_retries));
        }
        let p = &mut chain.params;
        if blocks.c {
            p.c1 = uniform(&mut rng, C_SUPPORT);
            p.c2 = uniform(&mut rng, C_SUPPORT);
        }
        if blocks.init {
            p.l1 = uniform(&mut rng, L1_SUPPORT);
            p.t1 = uniform(&mut rng, T1_SUPPORT);
        }
    }
    chain.rng = rng;

    let mut draws = Vec::with_capacity(config.iterations - config.burn_in);
    let mut batch = [Counter::default(); 6];
    for it in 0..config.iterations {
        if it == config.burn_in {
            chain.scalar_counts = [Counter::default(); 6];
            chain.state_count = Counter::default();
        }
        let before = chain.scalar_counts;
        if blocks.sigma2 {
            chain.update_sigma2();
        }
        let mut active = Vec::with_capacity(6);
        if blocks.c {
            active.extend([Scalar::C1, Scalar::C2]);
        }
        if blocks.rates {
            active.extend([Scalar::Lambda, Scalar::Mu]);
        }
        if blocks.init {
            active.extend([Scalar::L1, Scalar::T1]);
        }
        for s in active {
            chain.update_scalar(s);
        }
        if blocks.states {
            chain.update_states();
        }

        if it < config.burn_in {
            for s in Scalar::ALL {
                let i = s.index();
                batch[i].proposed += chain.scalar_counts[i].proposed - before[i].proposed;
                batch[i].accepted += chain.scalar_counts[i].accepted - before[i].accepted;
            }
            if (it + 1) % config.adapt_batch == 0 {
                for s in Scalar::ALL {
                    let rate = batch[s.index()].rate();
                    let (lo, hi) = s.support();
                    let scale = scale_mut(&mut chain.scales, s);
                    if rate < 0.2 {
                        *scale *= 0.5;
                    } else if rate > 0.4 {
                        *scale = (*scale * 2.0).min(hi - lo);
                    }
                }
                batch = [Counter::default(); 6];
            }
        } else {
            draws.push(Draw {
                iteration: it,
                params: chain.params,
                states: chain.states.clone(),
                path: StatePath {
                    leverage: chain.leverage.clone(),
                    trust: chain.trust.clone(),
                    valid: true,
                },
            });
        }
    }

    let c = &chain.scalar_counts;
    let pooled = |a: Scalar, b: Scalar| {
        let (x, y) = (c[a.index()], c[b.index()]);
        Counter {
            proposed: x.proposed + y.proposed,
            accepted: x.accepted + y.accepted,
        }
        .rate()
    };
    Ok(PosteriorDraws {
        seed,
        iterations: config.iterations,
        burn_in: config.burn_in,
        draws,
        acceptance: AcceptanceRates {
            c: pooled(Scalar::C1, Scalar::C2),
            rates: pooled(Scalar::Lambda, Scalar::Mu),
            init: pooled(Scalar::L1, Scalar::T1),
            states: chain.state_count.rate(),
        },
        final_scales: chain.scales,
    })
}
