//! Partially observable pricing environment.
//!
//! The leader posts a price each round; hidden followers answer with their
//! best responses. The leader sees only the last `window` rounds of prices and
//! demands, and is rewarded 1 whenever its utility reaches the running maximum
//! and 0 otherwise.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{la_total_utility, Follower, LaParams};
use crate::scenario::Scenario;
use crate::stackelberg::{best_response, solve, SolverMode};

/// What the leader sees of past demands.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservedDemand {
    #[default]
    PerFollower,
    Total,
}

/// Lifetime of the running maximum utility.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMemory {
    /// Reset to −∞ at the start of each episode.
    #[default]
    Episode,
    /// Carried across episodes: the best utility ever achieved.
    Persistent,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    /// Fresh hidden followers each episode.
    #[default]
    PerEpisode,
    /// One population, drawn from the environment seed, for every episode.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub episode_length: usize,
    pub window: usize,
    pub observe: ObservedDemand,
    pub reward_memory: RewardMemory,
    pub resample: Resampling,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            episode_length: 64,
            window: 4,
            observe: ObservedDemand::PerFollower,
            reward_memory: RewardMemory::Episode,
            resample: Resampling::PerEpisode,
        }
    }
}

impl EnvConfig {
    pub fn observation_len(&self, followers: usize) -> usize {
        let per_round = match self.observe {
            ObservedDemand::PerFollower => 1 + followers,
            ObservedDemand::Total => 2,
        };
        self.window * per_round
    }
}

/// The last `window` rounds, oldest first, each as `(price, demands…)`;
/// rounds before the episode start are zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingObservation(Vec<f64>);

impl PricingObservation {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// Hidden from the leader.
    pub followers: Vec<Follower>,
    pub round: usize,
    /// Running maximum of the leader utility.
    pub best_utility: f64,
    pub episode_length: usize,
    history: VecDeque<(f64, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: PricingObservation,
    pub reward: f64,
    pub done: bool,
    pub price: f64,
    pub utility: f64,
    pub demands: Vec<f64>,
}

impl EnvState {
    pub fn new(followers: Vec<Follower>, episode_length: usize, best_utility: f64) -> Self {
        Self {
            followers,
            round: 0,
            best_utility,
            episode_length,
            history: VecDeque::new(),
        }
    }

    pub fn observe(&self, config: &EnvConfig) -> PricingObservation {
        let mut values = vec![0.0; config.observation_len(self.followers.len())];
        let per_round = values.len() / config.window.max(1);
        let pad = config.window - self.history.len();
        for (j, (price, demands)) in self.history.iter().enumerate() {
            let slot = &mut values[(pad + j) * per_round..(pad + j + 1) * per_round];
            slot[0] = *price;
            match config.observe {
                ObservedDemand::PerFollower => slot[1..].copy_from_slice(demands),
                ObservedDemand::Total => slot[1] = demands.iter().sum(),
            }
        }
        PricingObservation(values)
    }

    /// Posts `price`, clamped into `[c, p_max]`.
    pub fn step(&mut self, la: &LaParams, config: &EnvConfig, price: f64) -> Result<StepOutcome> {
        if self.round >= self.episode_length {
            return Err(Error::domain("episode already finished"));
        }
        let clamped = if price.is_nan() { la.c } else { price.clamp(la.c, la.p_max) };
        if clamped != price {
            log::warn!("price {price} outside [{}, {}], clamped to {clamped}", la.c, la.p_max);
        }
        let demands = self
            .followers
            .iter()
            .map(|f| best_response(&f.smu, clamped, SolverMode::Derived))
            .collect::<Result<Vec<_>>>()?;
        let utility = la_total_utility(clamped, &self.followers, &demands, la)?;
        let reward = if utility >= self.best_utility { 1.0 } else { 0.0 };
        self.best_utility = self.best_utility.max(utility);
        self.history.push_back((clamped, demands.clone()));
        while self.history.len() > config.window {
            self.history.pop_front();
        }
        self.round += 1;
        Ok(StepOutcome {
            observation: self.observe(config),
            reward,
            done: self.round >= self.episode_length,
            price: clamped,
            utility,
            demands,
        })
    }
}

/// Samples hidden followers and returns the fresh state with an all-zero
/// observation.
pub fn env_reset(scenario: &Scenario, config: &EnvConfig, seed: u64) -> Result<(EnvState, PricingObservation)> {
    let followers = scenario.population_from_seed(seed)?;
    let state = EnvState::new(followers, config.episode_length, f64::NEG_INFINITY);
    let obs = state.observe(config);
    Ok((state, obs))
}

pub fn env_step(state: &mut EnvState, scenario: &Scenario, config: &EnvConfig, price: f64) -> Result<StepOutcome> {
    state.step(&scenario.la, config, price)
}

/// Environment with population resampling and reward memory applied across
/// episodes.
#[derive(Debug, Clone)]
pub struct PricingEnv {
    scenario: Scenario,
    config: EnvConfig,
    fixed: Option<Vec<Follower>>,
    state: EnvState,
    carried_best: f64,
}

impl PricingEnv {
    pub fn new(scenario: Scenario, config: EnvConfig, seed: u64) -> Result<Self> {
        scenario.validate()?;
        if config.episode_length == 0 || config.window == 0 {
            return Err(Error::domain("episode length and window must be positive"));
        }
        let (state, _) = env_reset(&scenario, &config, seed)?;
        let fixed = (config.resample == Resampling::Fixed).then(|| state.followers.clone());
        Ok(Self {
            scenario,
            config,
            fixed,
            state,
            carried_best: f64::NEG_INFINITY,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn observation_len(&self) -> usize {
        self.config.observation_len(self.scenario.num_smus)
    }

    pub fn reset(&mut self, seed: u64) -> Result<PricingObservation> {
        let followers = match &self.fixed {
            Some(f) => f.clone(),
            None => self.scenario.sample_population(&mut ChaCha8Rng::seed_from_u64(seed))?,
        };
        let best = match self.config.reward_memory {
            RewardMemory::Episode => f64::NEG_INFINITY,
            RewardMemory::Persistent => self.carried_best,
        };
        self.state = EnvState::new(followers, self.config.episode_length, best);
        Ok(self.state.observe(&self.config))
    }

    pub fn step(&mut self, price: f64) -> Result<StepOutcome> {
        let outcome = self.state.step(&self.scenario.la, &self.config, price)?;
        self.carried_best = self.carried_best.max(self.state.best_utility);
        Ok(outcome)
    }

    /// Leader utility at the Stackelberg equilibrium of the hidden followers.
    pub fn equilibrium_utility(&self) -> Result<f64> {
        Ok(solve(&self.state.followers, &self.scenario.la, SolverMode::Derived)?.la_utility)
    }
}
