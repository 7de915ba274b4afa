//! Learning a pricing strategy without seeing the followers' parameters.

pub mod baseline;
pub mod checkpoint;
pub mod env;
pub mod nn;
pub mod policy;
pub mod ppo;
pub mod train;

pub use baseline::{baseline_policy, BaselineKind, GreedyPolicy, LearnedPolicy, PricingPolicy, RandomPolicy};
pub use checkpoint::{decode_checkpoint, encode_checkpoint};
pub use env::{env_reset, env_step, EnvConfig, EnvState, ObservedDemand, PricingEnv, PricingObservation, Resampling, RewardMemory, StepOutcome};
pub use policy::{policy_act, Action, PolicyParams, PriceRange};
pub use ppo::{ppo_update, Diagnostics, PpoLearner, Sample, Trajectory, Transition};
pub use train::{evaluate, evaluate_in, train, EpisodeRecord, EvaluationSummary, TrainConfig, TrainOutcome, TrainingSignal};
