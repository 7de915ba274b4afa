//! Experiment configuration: a flat `key = value` file (TOML syntax).
//!
//! Every key is optional; missing keys take the default scenario values and
//! unknown keys are rejected. Recognized keys are the field names of
//! [`ExperimentConfig`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::drl::{ObservedDemand, Resampling, RewardMemory, TrainConfig, TrainingSignal};
use crate::error::{Error, Result};
use crate::market::LaParams;
use crate::popa::AvatarAttributeProfile;
use crate::scenario::Scenario;
use crate::stackelberg::SolverMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Common pseudonym change frequency λ̄.
    LambdaBar,
    /// Common baseline PoPA Hᵀ.
    PopaBar,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::LambdaBar => "lambda_bar",
            SweepAxis::PopaBar => "popa_bar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    EquilibriumDerived,
    EquilibriumPaperForm,
    Drl,
    Random,
    Greedy,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::EquilibriumDerived,
        Method::EquilibriumPaperForm,
        Method::Drl,
        Method::Random,
        Method::Greedy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::EquilibriumDerived => "equilibrium_derived",
            Method::EquilibriumPaperForm => "equilibrium_paper_form",
            Method::Drl => "drl",
            Method::Random => "random",
            Method::Greedy => "greedy",
        }
    }

    pub fn solver_mode(self) -> Option<SolverMode> {
        match self {
            Method::EquilibriumDerived => Some(SolverMode::Derived),
            Method::EquilibriumPaperForm => Some(SolverMode::PaperForm),
            _ => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    // population
    pub num_smus: usize,
    pub num_edge_servers: usize,
    pub num_models: u32,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    pub lambda_bar: f64,
    pub popa_bar: f64,
    pub mu_th: f64,
    pub tau_th: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub avatars: bool,

    // leader
    pub c: f64,
    pub c_a: f64,
    pub c_l: f64,
    pub phi_d: f64,
    pub kappa: f64,
    pub lambda_m: f64,
    pub lambda_n: f64,
    pub f: f64,
    pub g_m: f64,
    pub g_n: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub r_max: f64,
    pub p_max: f64,

    // avatar attribute profile
    pub s_attr: u64,
    pub s_total: u64,
    pub t_attr: u64,
    pub t_total: u64,
    pub r_n: u32,
    pub r_l: u32,

    // sweep
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Root of every derived generator seed.
    pub seed: u64,
    pub eval_episodes: usize,
    pub greedy_grid: usize,
    pub out: Option<PathBuf>,

    // learner
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
    pub resample: Resampling,
    pub observe: ObservedDemand,
    pub reward_memory: RewardMemory,
    pub signal: TrainingSignal,
    pub utility_scale: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let s = Scenario::default();
        let la = s.la.clone();
        let p = AvatarAttributeProfile::default();
        let t = TrainConfig::default();
        Self {
            num_smus: s.num_smus,
            num_edge_servers: s.num_edge_servers,
            num_models: s.num_models,
            alpha: s.alpha,
            a: s.a,
            b: s.b,
            lambda_bar: s.lambda_bar,
            popa_bar: s.popa_bar,
            mu_th: s.mu_th,
            tau_th: s.tau_th,
            gamma_min: s.gamma_range.0,
            gamma_max: s.gamma_range.1,
            mu_min: s.mu_range.0,
            mu_max: s.mu_range.1,
            tau_min: s.tau_range.0,
            tau_max: s.tau_range.1,
            omega1: s.omega1,
            omega2: s.omega2,
            avatars: s.avatars,
            c: la.c,
            c_a: la.c_a,
            c_l: la.c_l,
            phi_d: la.phi_d,
            kappa: la.kappa,
            lambda_m: la.lambda_m,
            lambda_n: la.lambda_n,
            f: la.f,
            g_m: la.g_m,
            g_n: la.g_n,
            eta1: la.eta1,
            eta2: la.eta2,
            r_max: la.r_max,
            p_max: la.p_max,
            s_attr: p.s_attr,
            s_total: p.s_total,
            t_attr: p.t_attr,
            t_total: p.t_total,
            r_n: p.r_n,
            r_l: p.r_l,
            axis: SweepAxis::LambdaBar,
            values: vec![1.0, 1.25, 1.5, 1.75, 2.0],
            methods: vec![
                Method::EquilibriumDerived,
                Method::EquilibriumPaperForm,
                Method::Random,
                Method::Greedy,
            ],
            seeds: vec![0],
            seed: 0,
            eval_episodes: 100,
            greedy_grid: crate::drl::baseline::DEFAULT_GREEDY_GRID,
            out: None,
            episodes: t.episodes,
            episode_length: t.episode_length,
            window: t.window,
            discount: t.discount,
            gae_lambda: t.gae_lambda,
            clip_ratio: t.clip_ratio,
            epochs: t.epochs,
            minibatch_size: t.minibatch_size,
            step_size: t.step_size,
            entropy_coef: t.entropy_coef,
            value_coef: t.value_coef,
            max_grad_norm: t.max_grad_norm,
            hidden_width: t.hidden_width,
            episodes_per_update: t.episodes_per_update,
            normalize_advantages: t.normalize_advantages,
            resample: t.resample,
            observe: t.observe,
            reward_memory: t.reward_memory,
            signal: t.signal,
            utility_scale: t.utility_scale,
        }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(key, format!("{key} must be positive")))
    }
}

fn nonnegative(key: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(key, format!("{key} must be nonnegative")))
    }
}

fn ordered(min_key: &str, max_key: &str, lo: f64, hi: f64) -> Result<()> {
    if lo <= hi {
        Ok(())
    } else {
        Err(Error::validation(min_key, format!("{min_key} must not exceed {max_key}")))
    }
}

fn weights(k1: &str, k2: &str, w1: f64, w2: f64) -> Result<()> {
    nonnegative(k1, w1)?;
    nonnegative(k2, w2)?;
    if ((w1 + w2) - 1.0).abs() > 1e-12 {
        return Err(Error::validation(k1, format!("{k1} + {k2} must equal 1")));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses config text; unknown keys and syntax errors report a 1-based line.
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::ConfigParse {
                line,
                message: e.message().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("num_smus", self.num_smus),
            ("num_edge_servers", self.num_edge_servers),
            ("num_models", self.num_models as usize),
        ] {
            if v == 0 {
                return Err(Error::validation(key, format!("{key} must be positive")));
            }
        }
        for (key, v) in [
            ("alpha", self.alpha),
            ("a", self.a),
            ("b", self.b),
            ("lambda_bar", self.lambda_bar),
            ("mu_th", self.mu_th),
            ("tau_th", self.tau_th),
            ("gamma_min", self.gamma_min),
            ("tau_min", self.tau_min),
            ("c", self.c),
            ("f", self.f),
            ("r_max", self.r_max),
            ("p_max", self.p_max),
        ] {
            positive(key, v)?;
        }
        for (key, v) in [
            ("popa_bar", self.popa_bar),
            ("mu_min", self.mu_min),
            ("c_a", self.c_a),
            ("c_l", self.c_l),
            ("phi_d", self.phi_d),
            ("kappa", self.kappa),
            ("lambda_m", self.lambda_m),
            ("lambda_n", self.lambda_n),
            ("g_m", self.g_m),
            ("g_n", self.g_n),
        ] {
            nonnegative(key, v)?;
        }
        if !(self.a < self.b) {
            return Err(Error::validation("a", "a must be smaller than b"));
        }
        ordered("gamma_min", "gamma_max", self.gamma_min, self.gamma_max)?;
        ordered("mu_min", "mu_max", self.mu_min, self.mu_max)?;
        ordered("tau_min", "tau_max", self.tau_min, self.tau_max)?;
        weights("omega1", "omega2", self.omega1, self.omega2)?;
        weights("eta1", "eta2", self.eta1, self.eta2)?;
        if !(self.p_max >= self.c) {
            return Err(Error::validation("p_max", "p_max must be at least c"));
        }
        self.profile()
            .validate()
            .map_err(|e| Error::validation("s_attr", e.to_string()))?;

        if self.values.is_empty() {
            return Err(Error::validation("values", "values must not be empty"));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::validation("values", "values must be strictly increasing"));
        }
        match self.axis {
            SweepAxis::LambdaBar => self.values.iter().try_for_each(|&v| positive("values", v))?,
            SweepAxis::PopaBar => self.values.iter().try_for_each(|&v| nonnegative("values", v))?,
        }
        if self.methods.is_empty() {
            return Err(Error::validation("methods", "methods must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds", "seeds must not be empty"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::validation("eval_episodes", "eval_episodes must be positive"));
        }
        if self.greedy_grid < 2 {
            return Err(Error::validation("greedy_grid", "greedy_grid must be at least 2"));
        }
        self.train_config().validate()?;
        self.scenario().validate()?;
        Ok(())
    }

    pub fn la(&self) -> LaParams {
        LaParams {
            c: self.c,
            c_a: self.c_a,
            c_l: self.c_l,
            phi_d: self.phi_d,
            kappa: self.kappa,
            lambda_m: self.lambda_m,
            lambda_n: self.lambda_n,
            f: self.f,
            g_m: self.g_m,
            g_n: self.g_n,
            eta1: self.eta1,
            eta2: self.eta2,
            r_max: self.r_max,
            p_max: self.p_max,
        }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            num_smus: self.num_smus,
            num_edge_servers: self.num_edge_servers,
            num_models: self.num_models,
            alpha: self.alpha,
            a: self.a,
            b: self.b,
            lambda_bar: self.lambda_bar,
            popa_bar: self.popa_bar,
            mu_th: self.mu_th,
            tau_th: self.tau_th,
            gamma_range: (self.gamma_min, self.gamma_max),
            mu_range: (self.mu_min, self.mu_max),
            tau_range: (self.tau_min, self.tau_max),
            omega1: self.omega1,
            omega2: self.omega2,
            avatars: self.avatars,
            la: self.la(),
        }
    }

    pub fn profile(&self) -> AvatarAttributeProfile {
        AvatarAttributeProfile {
            s_attr: self.s_attr,
            s_total: self.s_total,
            t_attr: self.t_attr,
            t_total: self.t_total,
            r_n: self.r_n,
            r_l: self.r_l,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            episodes: self.episodes,
            episode_length: self.episode_length,
            window: self.window,
            discount: self.discount,
            gae_lambda: self.gae_lambda,
            clip_ratio: self.clip_ratio,
            epochs: self.epochs,
            minibatch_size: self.minibatch_size,
            step_size: self.step_size,
            entropy_coef: self.entropy_coef,
            value_coef: self.value_coef,
            max_grad_norm: self.max_grad_norm,
            hidden_width: self.hidden_width,
            episodes_per_update: self.episodes_per_update,
            normalize_advantages: self.normalize_advantages,
            seed: self.seed,
            resample: self.resample,
            observe: self.observe,
            reward_memory: self.reward_memory,
            signal: self.signal,
            utility_scale: self.utility_scale,
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::parse(&text)
}
