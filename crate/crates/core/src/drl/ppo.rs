//! Clipped-surrogate policy optimization with an actor–critic pair.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::{gaussian_entropy, gaussian_log_density, PolicyParams};
use super::train::TrainConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub features: Vec<f64>,
    pub pre_squash: f64,
    /// Gaussian log-density of `pre_squash` under the acting policy.
    pub log_density: f64,
    pub value: f64,
    pub reward: f64,
}

/// One episode, ending in a terminal state.
pub type Trajectory = Vec<Transition>;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub pre_squash: f64,
    pub log_density: f64,
    pub advantage: f64,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Mean clipped surrogate objective.
    pub surrogate: f64,
    pub clip_fraction: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
}

/// Generalized advantage estimates and value targets for a batch.
pub fn compute_samples(batch: &[Trajectory], discount: f64, gae_lambda: f64, normalize: bool) -> Vec<Sample> {
    let mut samples = Vec::with_capacity(batch.iter().map(Vec::len).sum());
    for trajectory in batch {
        let mut advantages = vec![0.0; trajectory.len()];
        let mut running = 0.0;
        for t in (0..trajectory.len()).rev() {
            let next_value = trajectory.get(t + 1).map_or(0.0, |n| n.value);
            let delta = trajectory[t].reward + discount * next_value - trajectory[t].value;
            running = delta + discount * gae_lambda * running;
            advantages[t] = running;
        }
        for (step, advantage) in trajectory.iter().zip(advantages) {
            samples.push(Sample {
                features: step.features.clone(),
                pre_squash: step.pre_squash,
                log_density: step.log_density,
                advantage,
                target: advantage + step.value,
            });
        }
    }
    if normalize && samples.len() > 1 {
        let n = samples.len() as f64;
        let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std > 1e-8 {
            samples.iter_mut().for_each(|s| s.advantage = (s.advantage - mean) / std);
        }
    }
    samples
}

/// Minibatch loss `−surrogate + c_v·value_loss − c_e·entropy` and its
/// gradient with respect to every policy parameter.
pub fn loss_and_gradient(params: &PolicyParams, samples: &[&Sample], config: &TrainConfig) -> (f64, Diagnostics, Vec<f64>) {
    let mut grad = vec![0.0; params.param_count()];
    let actor_len = params.actor.param_count();
    let (actor_params, critic_params) = params.split();
    let n = samples.len().max(1) as f64;
    let eps = config.clip_ratio;
    let mut diag = Diagnostics::default();
    let mut loss = 0.0;

    for s in samples {
        let eval = params.evaluate(&s.features);
        let log_new = gaussian_log_density(s.pre_squash, eval.mean, eval.scale);
        let ratio = (log_new - s.log_density).exp();
        let unclipped = ratio * s.advantage;
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * s.advantage;
        let surrogate = unclipped.min(clipped);
        let clip_active = clipped < unclipped;
        if (ratio - 1.0).abs() > eps {
            diag.clip_fraction += 1.0;
        }
        let entropy = gaussian_entropy(eval.scale);
        let value_err = eval.value - s.target;
        loss += -surrogate + config.value_coef * 0.5 * value_err * value_err - config.entropy_coef * entropy;
        diag.surrogate += surrogate;
        diag.value_loss += 0.5 * value_err * value_err;
        diag.entropy += entropy;
        diag.approx_kl += s.log_density - log_new;

        // d loss / d log_new
        let d_log = if clip_active { 0.0 } else { -s.advantage * ratio };
        let z = (s.pre_squash - eval.mean) / eval.scale;
        let d_mean = d_log * z / eval.scale;
        let d_scale = d_log * (z * z - 1.0) / eval.scale - config.entropy_coef / eval.scale;
        let d_raw = d_scale * PolicyParams::scale_derivative(eval.raw_scale);
        params.actor.backward(
            actor_params,
            &eval.actor_trace,
            &[d_mean / n, d_raw / n],
            &mut grad[..actor_len],
        );
        params.critic.backward(
            critic_params,
            &eval.critic_trace,
            &[config.value_coef * value_err / n],
            &mut grad[actor_len..],
        );
    }
    diag.surrogate /= n;
    diag.clip_fraction /= n;
    diag.value_loss /= n;
    diag.entropy /= n;
    diag.approx_kl /= n;
    (loss / n, diag, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub step_size: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(param_count: usize, step_size: f64) -> Self {
        Self {
            step_size,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.step_size * (*m / bc1) / ((*v / bc2).sqrt() + self.epsilon);
        }
    }
}

/// Policy parameters together with optimizer state.
#[derive(Debug, Clone)]
pub struct PpoLearner {
    pub params: PolicyParams,
    pub optimizer: Adam,
}

impl PpoLearner {
    pub fn new(params: PolicyParams, step_size: f64) -> Self {
        let optimizer = Adam::new(params.param_count(), step_size);
        Self { params, optimizer }
    }

    /// Runs `epochs` passes of shuffled minibatch steps over the batch.
    pub fn update(&mut self, batch: &[Trajectory], config: &TrainConfig, rng: &mut impl Rng) -> Result<Diagnostics> {
        if batch.iter().all(Vec::is_empty) {
            return Err(Error::Training("empty batch".to_string()));
        }
        let samples = compute_samples(batch, config.discount, config.gae_lambda, config.normalize_advantages);
        self.update_on_samples(&samples, config, rng)
    }

    pub fn update_on_samples(&mut self, samples: &[Sample], config: &TrainConfig, rng: &mut impl Rng) -> Result<Diagnostics> {
        if samples.is_empty() {
            return Err(Error::Training("empty batch".to_string()));
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut last = Diagnostics::default();
        for epoch in 0..config.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(config.minibatch_size.max(1)) {
                let minibatch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
                let (_, diag, mut grad) = loss_and_gradient(&self.params, &minibatch, config);
                if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
                    return Err(Error::Training(format!(
                        "non-finite gradient at parameter {i} in epoch {epoch}: {diag:?}"
                    )));
                }
                clip_norm(&mut grad, config.max_grad_norm);
                self.optimizer.apply(&mut self.params.values, &grad);
                last = diag;
            }
        }
        if !self.params.is_finite() {
            return Err(Error::Training(format!("parameters became non-finite: {last:?}")));
        }
        Ok(last)
    }
}

fn clip_norm(grad: &mut [f64], max_norm: f64) {
    if !(max_norm > 0.0) {
        return;
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

/// Convenience wrapper returning the updated parameters.
pub fn ppo_update(
    batch: &[Trajectory],
    learner: &mut PpoLearner,
    config: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<(PolicyParams, Diagnostics)> {
    let diag = learner.update(batch, config, rng)?;
    Ok((learner.params.clone(), diag))
}
