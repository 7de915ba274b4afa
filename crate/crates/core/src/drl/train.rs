//! Training loop, evaluation rollouts and learning-curve output.

use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::baseline::{LearnedPolicy, PricingPolicy};
use super::env::{EnvConfig, ObservedDemand, PricingEnv, Resampling, RewardMemory};
use super::policy::{policy_act, PolicyParams, PriceRange};
use super::ppo::{Diagnostics, PpoLearner, Trajectory, Transition};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// What the learner optimizes. `Indicator` uses the environment's binary
/// new-maximum reward as is; `Utility` feeds the per-round leader utility
/// scaled by `utility_scale`, while the indicator is still recorded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingSignal {
    Indicator,
    #[default]
    Utility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: usize,
    pub episode_length: usize,
    pub window: usize,
    pub discount: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub step_size: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub hidden_width: usize,
    pub episodes_per_update: usize,
    pub normalize_advantages: bool,
    pub seed: u64,
    pub resample: Resampling,
    pub observe: ObservedDemand,
    pub reward_memory: RewardMemory,
    pub signal: TrainingSignal,
    pub utility_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 2000,
            episode_length: 64,
            window: 4,
            discount: 0.5,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            epochs: 10,
            minibatch_size: 64,
            step_size: 3e-4,
            entropy_coef: 1e-3,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            hidden_width: 64,
            episodes_per_update: 1,
            normalize_advantages: true,
            seed: 0,
            resample: Resampling::PerEpisode,
            observe: ObservedDemand::PerFollower,
            reward_memory: RewardMemory::Episode,
            signal: TrainingSignal::Utility,
            utility_scale: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("episodes", self.episodes),
            ("episode_length", self.episode_length),
            ("window", self.window),
            ("epochs", self.epochs),
            ("minibatch_size", self.minibatch_size),
            ("hidden_width", self.hidden_width),
            ("episodes_per_update", self.episodes_per_update),
        ];
        for (key, v) in counts {
            if v == 0 {
                return Err(Error::validation(key, format!("{key} must be positive")));
            }
        }
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return Err(Error::validation("clip_ratio", "clip_ratio must lie in (0, 1)"));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::validation("discount", "discount must lie in (0, 1]"));
        }
        if !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return Err(Error::validation("gae_lambda", "gae_lambda must lie in (0, 1]"));
        }
        for (key, v) in [("step_size", self.step_size), ("value_coef", self.value_coef), ("max_grad_norm", self.max_grad_norm), ("utility_scale", self.utility_scale)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::validation(key, format!("{key} must be positive")));
            }
        }
        if !(self.entropy_coef >= 0.0) {
            return Err(Error::validation("entropy_coef", "entropy_coef must be nonnegative"));
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            episode_length: self.episode_length,
            window: self.window,
            observe: self.observe,
            reward_memory: self.reward_memory,
            resample: self.resample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub mean_utility: f64,
    pub reward_rate: f64,
    pub mean_price: f64,
    /// Leader utility at the equilibrium of the episode's hidden followers.
    pub equilibrium_utility: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub curve: Vec<EpisodeRecord>,
    pub params: PolicyParams,
    pub diagnostics: Vec<Diagnostics>,
}

impl TrainOutcome {
    /// Mean over the last `n` episodes of `(utility, equilibrium utility)`.
    pub fn tail_means(&self, n: usize) -> (f64, f64) {
        let tail = &self.curve[self.curve.len().saturating_sub(n)..];
        let k = tail.len().max(1) as f64;
        (
            tail.iter().map(|r| r.mean_utility).sum::<f64>() / k,
            tail.iter().map(|r| r.equilibrium_utility).sum::<f64>() / k,
        )
    }
}

/// Seed for episode `index` of a run rooted at `root`.
pub fn episode_seed(root: u64, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(index.to_le_bytes());
    u64::from_le_bytes(hasher.finalize()[..8].try_into().expect("32-byte digest"))
}

pub fn per_round_len(observe: ObservedDemand, followers: usize) -> usize {
    match observe {
        ObservedDemand::PerFollower => 1 + followers,
        ObservedDemand::Total => 2,
    }
}

pub fn price_range(scenario: &Scenario) -> Result<PriceRange> {
    PriceRange::new(scenario.la.c, scenario.la.p_max)
}

/// Trains a pricing agent; fully determined by `config.seed`.
pub fn train(config: &TrainConfig, scenario: &Scenario) -> Result<TrainOutcome> {
    config.validate()?;
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut env = PricingEnv::new(scenario.clone(), config.env_config(), config.seed)?;
    let per_round = per_round_len(config.observe, scenario.num_smus);
    let params = PolicyParams::new(env.observation_len(), config.hidden_width, price_range(scenario)?, &mut rng)?;
    let mut learner = PpoLearner::new(params, config.step_size);

    let mut curve = Vec::with_capacity(config.episodes);
    let mut diagnostics = Vec::new();
    let mut batch: Vec<Trajectory> = Vec::with_capacity(config.episodes_per_update);
    for episode in 0..config.episodes {
        let mut obs = env.reset(episode_seed(config.seed, episode as u64))?;
        let equilibrium_utility = env.equilibrium_utility()?;
        let mut trajectory = Vec::with_capacity(config.episode_length);
        let (mut utility_sum, mut reward_sum, mut price_sum) = (0.0, 0.0, 0.0);
        loop {
            let features = learner.params.features(obs.as_slice(), per_round);
            let action = policy_act(&features, &learner.params, &mut rng, false);
            let outcome = env.step(action.price)?;
            utility_sum += outcome.utility;
            reward_sum += outcome.reward;
            price_sum += outcome.price;
            trajectory.push(Transition {
                features,
                pre_squash: action.pre_squash,
                log_density: action.gaussian_log_density,
                value: action.value,
                reward: match config.signal {
                    TrainingSignal::Indicator => outcome.reward,
                    TrainingSignal::Utility => outcome.utility * config.utility_scale,
                },
            });
            obs = outcome.observation;
            if outcome.done {
                break;
            }
        }
        let k = trajectory.len() as f64;
        curve.push(EpisodeRecord {
            episode,
            mean_utility: utility_sum / k,
            reward_rate: reward_sum / k,
            mean_price: price_sum / k,
            equilibrium_utility,
        });
        batch.push(trajectory);
        if batch.len() == config.episodes_per_update {
            diagnostics.push(learner.update(&batch, config, &mut rng)?);
            batch.clear();
        }
    }
    Ok(TrainOutcome {
        curve,
        params: learner.params,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub episodes: usize,
    pub mean_utility: f64,
    pub mean_price: f64,
    pub mean_total_demand: f64,
    pub mean_equilibrium_utility: f64,
}

/// Runs `episodes` rollouts of `policy`. Episode `i` draws its hidden
/// followers from `episode_seed(seed, i)`, so two policies evaluated with the
/// same seed face the same followers.
pub fn evaluate(
    policy: &mut dyn PricingPolicy,
    scenario: &Scenario,
    env_config: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<EvaluationSummary> {
    let mut env = PricingEnv::new(scenario.clone(), env_config.clone(), seed)?;
    evaluate_in(policy, &mut env, episodes, seed)
}

/// As [`evaluate`], on an existing environment (e.g. one with a fixed population).
pub fn evaluate_in(policy: &mut dyn PricingPolicy, env: &mut PricingEnv, episodes: usize, seed: u64) -> Result<EvaluationSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e7a1);
    let (mut utility, mut price, mut demand, mut equilibrium, mut steps) = (0.0, 0.0, 0.0, 0.0, 0usize);
    for episode in 0..episodes {
        let mut obs = env.reset(episode_seed(seed, episode as u64))?;
        equilibrium += env.equilibrium_utility()?;
        loop {
            let p = policy.act(&obs, &mut rng as &mut dyn RngCore);
            let outcome = env.step(p)?;
            policy.observe(outcome.price, outcome.utility);
            utility += outcome.utility;
            price += outcome.price;
            demand += outcome.demands.iter().sum::<f64>();
            steps += 1;
            obs = outcome.observation;
            if outcome.done {
                break;
            }
        }
    }
    let n = steps.max(1) as f64;
    Ok(EvaluationSummary {
        episodes,
        mean_utility: utility / n,
        mean_price: price / n,
        mean_total_demand: demand / n,
        mean_equilibrium_utility: equilibrium / episodes.max(1) as f64,
    })
}

pub fn learned_policy(outcome: &TrainOutcome, config: &TrainConfig, scenario: &Scenario, deterministic: bool) -> LearnedPolicy {
    LearnedPolicy::new(outcome.params.clone(), per_round_len(config.observe, scenario.num_smus), deterministic)
}

pub const CURVE_HEADER: &str = "episode,mean_utility,reward_rate,mean_price";

pub fn write_curve_csv(curve: &[EpisodeRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{CURVE_HEADER}")?;
    for r in curve {
        writeln!(out, "{},{},{},{}", r.episode, r.mean_utility, r.reward_rate, r.mean_price)?;
    }
    Ok(())
}

pub fn save_curve_csv(curve: &[EpisodeRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_curve_csv(curve, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}
