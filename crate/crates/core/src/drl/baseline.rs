//! Non-learning pricing policies used as comparison points.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::env::PricingObservation;
use super::policy::{policy_act, PolicyParams, PriceRange};

/// A leader pricing rule driven round by round.
pub trait PricingPolicy {
    fn act(&mut self, obs: &PricingObservation, rng: &mut dyn RngCore) -> f64;

    /// Feedback after the round: the posted price and the realized utility.
    fn observe(&mut self, _price: f64, _utility: f64) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    Greedy,
}

pub const DEFAULT_GREEDY_GRID: usize = 32;

/// Uniform price in `[low, high]` every round.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    range: PriceRange,
}

impl RandomPolicy {
    pub fn new(range: PriceRange) -> Self {
        Self { range }
    }
}

impl PricingPolicy for RandomPolicy {
    fn act(&mut self, _obs: &PricingObservation, rng: &mut dyn RngCore) -> f64 {
        rng.random_range(self.range.low..=self.range.high)
    }
}

/// Posts every point of a fixed grid once, then keeps posting the grid price
/// that earned the highest utility.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    grid: Vec<f64>,
    utilities: Vec<f64>,
    locked: Option<f64>,
}

impl GreedyPolicy {
    pub fn new(range: PriceRange, grid_points: usize) -> Self {
        let n = grid_points.max(2);
        let grid = (0..n)
            .map(|k| range.low + (range.high - range.low) * k as f64 / (n - 1) as f64)
            .collect();
        Self {
            grid,
            utilities: Vec::with_capacity(n),
            locked: None,
        }
    }

    pub fn locked_price(&self) -> Option<f64> {
        self.locked
    }

    pub fn grid_step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }
}

impl PricingPolicy for GreedyPolicy {
    fn act(&mut self, _obs: &PricingObservation, _rng: &mut dyn RngCore) -> f64 {
        match self.locked {
            Some(p) => p,
            None => self.grid[self.utilities.len()],
        }
    }

    fn observe(&mut self, _price: f64, utility: f64) {
        if self.locked.is_some() {
            return;
        }
        self.utilities.push(utility);
        if self.utilities.len() == self.grid.len() {
            let best = self
                .utilities
                .iter()
                .enumerate()
                .fold(0, |best, (i, &u)| if u > self.utilities[best] { i } else { best });
            self.locked = Some(self.grid[best]);
        }
    }
}

pub fn baseline_policy(kind: BaselineKind, range: PriceRange) -> Box<dyn PricingPolicy> {
    match kind {
        BaselineKind::Random => Box::new(RandomPolicy::new(range)),
        BaselineKind::Greedy => Box::new(GreedyPolicy::new(range, DEFAULT_GREEDY_GRID)),
    }
}

/// A trained policy, sampled or run at its location.
#[derive(Debug, Clone)]
pub struct LearnedPolicy {
    pub params: PolicyParams,
    per_round: usize,
    pub deterministic: bool,
}

impl LearnedPolicy {
    pub fn new(params: PolicyParams, per_round: usize, deterministic: bool) -> Self {
        Self {
            params,
            per_round,
            deterministic,
        }
    }
}

impl PricingPolicy for LearnedPolicy {
    fn act(&mut self, obs: &PricingObservation, rng: &mut dyn RngCore) -> f64 {
        let features = self.params.features(obs.as_slice(), self.per_round);
        policy_act(&features, &self.params, rng, self.deterministic).price
    }
}
