//! Utility and cost functions for the followers (social metaverse users) and
//! the leader (local authority) of the pseudonym market.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FollowerId(pub u32);

impl fmt::Display for FollowerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Private parameters of one follower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmuParams {
    pub id: FollowerId,
    /// Utility per log-bit of privacy.
    pub alpha: f64,
    /// Baseline PoPA in bits.
    pub popa: f64,
    /// Privacy gain per purchased pseudonym, in bits.
    pub gain: f64,
    /// Unit immersion profit of a regenerated avatar.
    pub gamma: f64,
    /// CLIP score of the regenerated avatar and its minimum threshold.
    pub mu: f64,
    pub mu_th: f64,
    /// LPIPS of the regenerated avatar and its maximum threshold.
    pub tau: f64,
    pub tau_th: f64,
    /// Whether the follower requests avatar regeneration.
    pub regenerate: bool,
    pub omega1: f64,
    pub omega2: f64,
    /// Selected image-generation model.
    pub model_m: u32,
    /// Selected 3D-reconstruction model.
    pub model_n: u32,
}

impl Default for SmuParams {
    fn default() -> Self {
        Self {
            id: FollowerId(0),
            alpha: 15.0,
            popa: 1.5,
            gain: 2.298_773_881_465_795_6,
            gamma: 1.75,
            mu: 30.0,
            mu_th: 15.0,
            tau: 0.04,
            tau_th: 0.08,
            regenerate: false,
            omega1: 0.5,
            omega2: 0.5,
            model_m: 0,
            model_n: 0,
        }
    }
}

impl SmuParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("gain", self.gain),
            ("gamma", self.gamma),
            ("mu_th", self.mu_th),
            ("tau", self.tau),
            ("tau_th", self.tau_th),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("follower {}: {name} must be positive", self.id)));
            }
        }
        check_weights("omega", self.omega1, self.omega2)
    }

    /// Argument of the logarithm in the pseudonym utility at demand `r`.
    pub fn privacy_level(&self, r: f64) -> f64 {
        1.0 + self.popa + self.gain * r
    }
}

/// Leader costs, weights and market limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaParams {
    /// Unit pseudonym transmission cost.
    pub c: f64,
    /// Fixed avatar regeneration price.
    pub c_a: f64,
    /// Unit LA-to-CA data transmission cost.
    pub c_l: f64,
    /// Attribute data size per follower.
    pub phi_d: f64,
    /// Prompt/result transmission cost.
    pub kappa: f64,
    pub lambda_m: f64,
    pub lambda_n: f64,
    /// Edge GPU capacity, work units per unit time.
    pub f: f64,
    pub g_m: f64,
    pub g_n: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub r_max: f64,
    pub p_max: f64,
}

impl Default for LaParams {
    fn default() -> Self {
        Self {
            c: 5.0,
            c_a: 1.0,
            c_l: 0.2,
            phi_d: 1.0,
            kappa: 0.05,
            lambda_m: 0.3,
            lambda_n: 3.0,
            f: 312_000.0,
            g_m: 60_000.0,
            g_n: 600_000.0,
            eta1: 0.5,
            eta2: 0.5,
            r_max: 100.0,
            p_max: 25.0,
        }
    }
}

impl LaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::domain("c must be positive"));
        }
        if !(self.p_max >= self.c) {
            return Err(Error::domain("p_max must be at least c"));
        }
        if !(self.r_max > 0.0) {
            return Err(Error::domain("r_max must be positive"));
        }
        if !(self.f > 0.0) {
            return Err(Error::domain("f must be positive"));
        }
        check_weights("eta", self.eta1, self.eta2)
    }
}

fn check_weights(name: &str, w1: f64, w2: f64) -> Result<()> {
    if w1 < 0.0 || w2 < 0.0 || ((w1 + w2) - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::domain(format!("{name}1 + {name}2 must equal 1 with both nonnegative")));
    }
    Ok(())
}

/// Models already cached on the edge server nearest to a follower.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCache {
    pub cached_m: BTreeSet<u32>,
    pub cached_n: BTreeSet<u32>,
}

impl ModelCache {
    pub fn new(cached_m: impl IntoIterator<Item = u32>, cached_n: impl IntoIterator<Item = u32>) -> Self {
        Self {
            cached_m: cached_m.into_iter().collect(),
            cached_n: cached_n.into_iter().collect(),
        }
    }
}

/// A follower together with the cache state of its edge server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Follower {
    pub smu: SmuParams,
    pub cache: ModelCache,
}

impl Follower {
    pub fn new(smu: SmuParams, cache: ModelCache) -> Self {
        Self { smu, cache }
    }
}

/// Post-hoc rounding applied to continuous demands when reporting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandRounding {
    #[default]
    None,
    Floor,
    Round,
}

impl DemandRounding {
    pub fn apply(self, r: f64) -> f64 {
        match self {
            DemandRounding::None => r,
            DemandRounding::Floor => r.floor(),
            DemandRounding::Round => r.round(),
        }
    }
}

/// Follower utility from buying `r` pseudonyms at unit price `p`.
pub fn smu_pid_utility(smu: &SmuParams, p: f64, r: f64) -> Result<f64> {
    let level = smu.privacy_level(r);
    if !(level > 0.0) {
        return Err(Error::domain(format!(
            "follower {}: privacy level {level} is not positive",
            smu.id
        )));
    }
    Ok(smu.alpha * level.ln() - p * r)
}

/// Follower satisfaction from avatar regeneration at price `c_a`.
pub fn smu_avatar_utility(smu: &SmuParams, c_a: f64) -> Result<f64> {
    if !smu.regenerate {
        return Ok(0.0);
    }
    if !(smu.mu_th > 0.0) || !(smu.tau > 0.0) {
        return Err(Error::domain("mu_th and tau must be positive"));
    }
    let quality = smu.mu / smu.mu_th + smu.tau_th / smu.tau;
    if !(quality > 0.0) {
        return Err(Error::domain(format!("follower {}: avatar quality ratio {quality} is not positive", smu.id)));
    }
    Ok(smu.gamma * quality.ln() - c_a)
}

pub fn smu_total_utility(smu: &SmuParams, p: f64, r: f64, c_a: f64) -> Result<f64> {
    let pid = smu_pid_utility(smu, p, r)?;
    let avatar = smu_avatar_utility(smu, c_a)?;
    Ok(smu.omega1 * pid + smu.omega2 * avatar)
}

pub fn model_switch_cost(smu: &SmuParams, cache: &ModelCache, la: &LaParams) -> f64 {
    let miss_m = if cache.cached_m.contains(&smu.model_m) { 0.0 } else { 1.0 };
    let miss_n = if cache.cached_n.contains(&smu.model_n) { 0.0 } else { 1.0 };
    la.lambda_m * miss_m + la.lambda_n * miss_n
}

/// Switch, transmission and computation cost of serving one regeneration.
pub fn avatar_service_cost(smu: &SmuParams, cache: &ModelCache, la: &LaParams) -> Result<f64> {
    if !(la.f > 0.0) {
        return Err(Error::domain("f must be positive"));
    }
    Ok(model_switch_cost(smu, cache, la) + la.kappa + (la.g_m + la.g_n) / la.f)
}

pub fn la_pid_utility(p: f64, r: f64, la: &LaParams) -> f64 {
    (p - la.c) * r
}

pub fn la_avatar_utility(smu: &SmuParams, cache: &ModelCache, la: &LaParams) -> Result<f64> {
    if !smu.regenerate {
        return Ok(0.0);
    }
    Ok(la.c_a - avatar_service_cost(smu, cache, la)? - la.c_l * la.phi_d)
}

/// Leader utility summed over the population at price `p` with the given demands.
pub fn la_total_utility(p: f64, population: &[Follower], demands: &[f64], la: &LaParams) -> Result<f64> {
    if population.len() != demands.len() {
        return Err(Error::domain(format!(
            "{} followers but {} demands",
            population.len(),
            demands.len()
        )));
    }
    let mut total = 0.0;
    for (follower, &r) in population.iter().zip(demands) {
        if r < 0.0 {
            return Err(Error::domain(format!("negative demand for follower {}", follower.smu.id)));
        }
        total += la.eta1 * la_pid_utility(p, r, la) + la.eta2 * la_avatar_utility(&follower.smu, &follower.cache, la)?;
    }
    Ok(total)
}

/// The price-independent part of the leader utility: η₂ times the avatar terms.
pub fn la_avatar_constant(population: &[Follower], la: &LaParams) -> Result<f64> {
    population
        .iter()
        .map(|f| la_avatar_utility(&f.smu, &f.cache, la).map(|u| la.eta2 * u))
        .sum()
}
