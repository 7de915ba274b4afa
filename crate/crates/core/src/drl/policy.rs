//! Squashed-Gaussian pricing policy with a separate value network.
//!
//! The actor maps features of the observation to a location `m` and a raw
//! scale `ρ`; the pre-squash sample is `u ~ N(m, s²)` with
//! `s = softplus(ρ) + MIN_SCALE`, and the posted price is
//! `low + (high − low)·(tanh u + 1)/2`.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;

use super::nn::{Mlp, Trace};
use crate::error::{Error, Result};

pub const MIN_SCALE: f64 = 1e-3;
const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceRange {
    pub low: f64,
    pub high: f64,
}

impl PriceRange {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low < high) {
            return Err(Error::domain("price range must satisfy low < high"));
        }
        Ok(Self { low, high })
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.high - self.low)
    }

    pub fn squash(&self, u: f64) -> f64 {
        (self.low + self.half_width() * (u.tanh() + 1.0)).clamp(self.low, self.high)
    }

    /// `ln |dp/du|` at pre-squash value `u`.
    pub fn log_jacobian(&self, u: f64) -> f64 {
        // ln(1 − tanh²u) = 2(ln 2 − u − softplus(−2u))
        self.half_width().ln() + 2.0 * (LN_2 - u - softplus(-2.0 * u))
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Log-density of `N(mean, scale²)` at `u`.
pub fn gaussian_log_density(u: f64, mean: f64, scale: f64) -> f64 {
    let z = (u - mean) / scale;
    -0.5 * z * z - scale.ln() - LOG_SQRT_2PI
}

pub fn gaussian_entropy(scale: f64) -> f64 {
    0.5 * (2.0 * PI * std::f64::consts::E).ln() + scale.ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub actor: Mlp,
    pub critic: Mlp,
    /// Actor parameters followed by critic parameters.
    pub values: Vec<f64>,
    pub range: PriceRange,
    width: usize,
}

/// Location, scale and value for one observation plus the traces needed to
/// backpropagate through them.
#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub mean: f64,
    pub raw_scale: f64,
    pub scale: f64,
    pub value: f64,
    pub actor_trace: Trace,
    pub critic_trace: Trace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub price: f64,
    /// Pre-squash sample.
    pub pre_squash: f64,
    /// Log-density of `price` under the squashed distribution.
    pub log_density: f64,
    /// Log-density of `pre_squash` under the Gaussian; used for ratios.
    pub gaussian_log_density: f64,
    pub value: f64,
}

impl PolicyParams {
    pub fn new(input_dim: usize, width: usize, range: PriceRange, rng: &mut impl Rng) -> Result<Self> {
        if input_dim == 0 || width == 0 {
            return Err(Error::domain("policy input dimension and hidden width must be positive"));
        }
        let actor = Mlp::new(vec![input_dim, width, width, 2]);
        let critic = Mlp::new(vec![input_dim, width, width, 1]);
        let mut values = actor.init(rng, 0.01);
        values.extend(critic.init(rng, 1.0));
        Ok(Self { actor, critic, values, range, width })
    }

    /// Rebuilds a policy around an existing flat parameter vector.
    pub fn from_values(input_dim: usize, width: usize, range: PriceRange, values: Vec<f64>) -> Result<Self> {
        if input_dim == 0 || width == 0 {
            return Err(Error::domain("policy input dimension and hidden width must be positive"));
        }
        let actor = Mlp::new(vec![input_dim, width, width, 2]);
        let critic = Mlp::new(vec![input_dim, width, width, 1]);
        if values.len() != actor.param_count() + critic.param_count() {
            return Err(Error::domain(format!(
                "expected {} parameters, got {}",
                actor.param_count() + critic.param_count(),
                values.len()
            )));
        }
        Ok(Self { actor, critic, values, range, width })
    }

    pub fn input_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn hidden_width(&self) -> usize {
        self.width
    }

    pub fn param_count(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn split(&self) -> (&[f64], &[f64]) {
        self.values.split_at(self.actor.param_count())
    }

    /// Network inputs: prices divided by the upper bound, demands as `ln(1 + r)`.
    /// Observation layout is `(price, demand…)` per round.
    pub fn features(&self, obs: &[f64], per_round: usize) -> Vec<f64> {
        obs.chunks(per_round.max(1))
            .flat_map(|round| {
                round.iter().enumerate().map(|(j, &v)| {
                    if j == 0 {
                        v / self.range.high
                    } else {
                        v.max(0.0).ln_1p()
                    }
                })
            })
            .collect()
    }

    pub fn evaluate(&self, features: &[f64]) -> Evaluation {
        let (actor, critic) = self.split();
        let mut eval = Evaluation::default();
        let out = self.actor.forward(actor, features, &mut eval.actor_trace);
        eval.mean = out[0];
        eval.raw_scale = out[1];
        eval.scale = softplus(out[1]) + MIN_SCALE;
        eval.value = self.critic.forward(critic, features, &mut eval.critic_trace)[0];
        eval
    }

    /// `d scale / d raw_scale`.
    pub fn scale_derivative(raw_scale: f64) -> f64 {
        sigmoid(raw_scale)
    }

    /// Density of `price` under the policy for the given features.
    pub fn log_density_of_price(&self, features: &[f64], price: f64) -> Result<f64> {
        let PriceRange { low, high } = self.range;
        if !(price > low && price < high) {
            return Err(Error::domain(format!("price {price} outside the open interval ({low}, {high})")));
        }
        let y = (price - low) / self.range.half_width() - 1.0;
        let u = y.atanh();
        let eval = self.evaluate(features);
        Ok(gaussian_log_density(u, eval.mean, eval.scale) - self.range.log_jacobian(u))
    }
}

/// Samples a price for `features`, or takes the squashed location when
/// `deterministic` is set.
pub fn policy_act(features: &[f64], params: &PolicyParams, rng: &mut (impl Rng + ?Sized), deterministic: bool) -> Action {
    let eval = params.evaluate(features);
    let u = if deterministic {
        eval.mean
    } else {
        let z: f64 = rng.sample(StandardNormal);
        eval.mean + eval.scale * z
    };
    let gaussian = gaussian_log_density(u, eval.mean, eval.scale);
    Action {
        price: params.range.squash(u),
        pre_squash: u,
        log_density: gaussian - params.range.log_jacobian(u),
        gaussian_log_density: gaussian,
        value: eval.value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy(seed: u64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PolicyParams::new(8, 16, PriceRange::new(5.0, 25.0).unwrap(), &mut rng).unwrap()
    }

    #[test]
    fn deterministic_action_stays_inside() {
        let p = policy(0);
        let feats = vec![0.0; 8];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = policy_act(&feats, &p, &mut rng, true);
        assert!(a.price > 5.0 && a.price < 25.0);
        let eval = p.evaluate(&feats);
        assert_eq!(a.price, p.range.squash(eval.mean));
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = policy(0);
        let feats = vec![0.3; 8];
        let a = policy_act(&feats, &p, &mut ChaCha8Rng::seed_from_u64(9), false);
        let b = policy_act(&feats, &p, &mut ChaCha8Rng::seed_from_u64(9), false);
        assert_eq!(a, b);
    }

    #[test]
    fn log_density_consistent_with_action() {
        let p = policy(2);
        let feats = vec![0.1; 8];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = policy_act(&feats, &p, &mut rng, false);
            if a.price <= 5.0 || a.price >= 25.0 {
                continue;
            }
            let direct = p.log_density_of_price(&feats, a.price).unwrap();
            assert!((direct - a.log_density).abs() < 1e-6, "{direct} vs {}", a.log_density);
        }
    }

    #[test]
    fn hidden_width_roundtrip() {
        assert_eq!(policy(0).hidden_width(), 16);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = PolicyParams::new(28, 64, PriceRange::new(5.0, 25.0).unwrap(), &mut rng).unwrap();
        assert_eq!(p.hidden_width(), 64);
    }

    #[test]
    fn rejects_zero_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(PolicyParams::new(8, 0, PriceRange::new(5.0, 25.0).unwrap(), &mut rng).is_err());
    }
}
