//! Market scenarios: how follower populations are drawn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Follower, FollowerId, LaParams, ModelCache, SmuParams};
use crate::popa::{privacy_gain, PrivacyGainParams};

/// Population-level parameters. Fixed values are shared by every follower;
/// `gamma`, `mu` and `tau` are drawn uniformly from their ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub num_smus: usize,
    pub num_edge_servers: usize,
    /// Number of selectable image and 3D models (each).
    pub num_models: u32,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    /// Average pseudonym change frequency, applied to every follower.
    pub lambda_bar: f64,
    /// Common baseline PoPA in bits.
    pub popa_bar: f64,
    pub mu_th: f64,
    pub tau_th: f64,
    pub gamma_range: (f64, f64),
    pub mu_range: (f64, f64),
    pub tau_range: (f64, f64),
    pub omega1: f64,
    pub omega2: f64,
    /// Followers request avatar regeneration.
    pub avatars: bool,
    pub la: LaParams,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            num_smus: 6,
            num_edge_servers: 3,
            num_models: 3,
            alpha: 15.0,
            a: 1.0 / 160.0,
            b: 1.0 / 10.0,
            lambda_bar: 1.5,
            popa_bar: 1.5,
            mu_th: 15.0,
            tau_th: 0.08,
            gamma_range: (1.5, 2.0),
            mu_range: (20.0, 40.0),
            tau_range: (0.02, 0.06),
            omega1: 0.5,
            omega2: 0.5,
            avatars: false,
            la: LaParams::default(),
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::validation(name, "range must satisfy min <= max"));
    }
    Ok(())
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.num_smus == 0 {
            return Err(Error::validation("num_smus", "num_smus must be positive"));
        }
        if self.num_edge_servers == 0 {
            return Err(Error::validation("num_edge_servers", "num_edge_servers must be positive"));
        }
        if self.num_models == 0 {
            return Err(Error::validation("num_models", "num_models must be positive"));
        }
        for (key, v) in [("alpha", self.alpha), ("mu_th", self.mu_th), ("tau_th", self.tau_th), ("lambda_bar", self.lambda_bar)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::validation(key, format!("{key} must be positive")));
            }
        }
        check_range("gamma", self.gamma_range)?;
        check_range("mu", self.mu_range)?;
        check_range("tau", self.tau_range)?;
        if !(self.tau_range.0 > 0.0) {
            return Err(Error::validation("tau_min", "tau_min must be positive"));
        }
        if !(self.gamma_range.0 > 0.0) {
            return Err(Error::validation("gamma_min", "gamma_min must be positive"));
        }
        self.gain().map_err(|e| Error::validation("a", e.to_string()))?;
        Ok(())
    }

    pub fn gain_params(&self) -> PrivacyGainParams {
        PrivacyGainParams {
            lambda: self.lambda_bar,
            a: self.a,
            b: self.b,
        }
    }

    pub fn gain(&self) -> Result<f64> {
        privacy_gain(&self.gain_params())
    }

    /// Cache of edge server `server`: it holds model `server mod num_models`
    /// of each kind.
    pub fn server_cache(&self, server: usize) -> ModelCache {
        let model = (server % self.num_models as usize) as u32;
        ModelCache::new([model], [model])
    }

    /// Draws a population; followers are assigned to edge servers round-robin.
    pub fn sample_population(&self, rng: &mut impl Rng) -> Result<Vec<Follower>> {
        let gain = self.gain()?;
        let draw = |rng: &mut dyn rand::RngCore, (lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..hi) };
        (0..self.num_smus)
            .map(|i| {
                let smu = SmuParams {
                    id: FollowerId(i as u32),
                    alpha: self.alpha,
                    popa: self.popa_bar,
                    gain,
                    gamma: draw(rng, self.gamma_range),
                    mu: draw(rng, self.mu_range),
                    mu_th: self.mu_th,
                    tau: draw(rng, self.tau_range),
                    tau_th: self.tau_th,
                    regenerate: self.avatars,
                    omega1: self.omega1,
                    omega2: self.omega2,
                    model_m: rng.random_range(0..self.num_models),
                    model_n: rng.random_range(0..self.num_models),
                };
                smu.validate()?;
                Ok(Follower::new(smu, self.server_cache(i % self.num_edge_servers)))
            })
            .collect()
    }

    pub fn population_from_seed(&self, seed: u64) -> Result<Vec<Follower>> {
        self.sample_population(&mut ChaCha8Rng::seed_from_u64(seed))
    }
}

/// One follower per CSV row. `gain` may be left empty to use the scenario's
/// privacy gain; `server` selects the edge server cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationRecord {
    pub id: u32,
    pub alpha: f64,
    pub popa: f64,
    pub gain: Option<f64>,
    pub gamma: f64,
    pub mu: f64,
    pub mu_th: f64,
    pub tau: f64,
    pub tau_th: f64,
    pub regenerate: bool,
    pub omega1: f64,
    pub omega2: f64,
    pub model_m: u32,
    pub model_n: u32,
    pub server: usize,
}

/// Reads a population CSV (header row required, columns as in [`PopulationRecord`]).
pub fn read_population_csv(reader: impl std::io::Read, scenario: &Scenario) -> Result<Vec<Follower>> {
    let gain = scenario.gain()?;
    let mut followers = Vec::new();
    for record in csv::Reader::from_reader(reader).deserialize::<PopulationRecord>() {
        let r = record?;
        let smu = SmuParams {
            id: FollowerId(r.id),
            alpha: r.alpha,
            popa: r.popa,
            gain: r.gain.unwrap_or(gain),
            gamma: r.gamma,
            mu: r.mu,
            mu_th: r.mu_th,
            tau: r.tau,
            tau_th: r.tau_th,
            regenerate: r.regenerate,
            omega1: r.omega1,
            omega2: r.omega2,
            model_m: r.model_m,
            model_n: r.model_n,
        };
        smu.validate()?;
        followers.push(Follower::new(smu, scenario.server_cache(r.server)));
    }
    if followers.is_empty() {
        return Err(Error::domain("population file has no rows"));
    }
    Ok(followers)
}
