//! Leader–follower pricing game.
//!
//! Every follower's best response has the form `r(p) = max(0, A/p − B)` where
//! the coefficients depend on the [`SolverMode`]. The leader's pseudonym
//! revenue `Σ (p − c)·r_i(p)` is concave on each interval of prices over which
//! the set of participating followers is fixed, so the constrained optimum is
//! found exactly by visiting those intervals in turn.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{la_avatar_constant, la_total_utility, smu_pid_utility, smu_total_utility, Follower, FollowerId, LaParams, SmuParams};

pub const BISECTION_TOL: f64 = 1e-10;
pub const BISECTION_MAX_ITER: usize = 200;
/// Slack allowed on the total-demand cap.
pub const CAPACITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    /// Best response is the zero of the marginal utility.
    #[default]
    Derived,
    /// Best response `(α/p − 1/H̄)(1 + Hᵀ)`.
    PaperForm,
}

impl SolverMode {
    pub const ALL: [SolverMode; 2] = [SolverMode::Derived, SolverMode::PaperForm];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverMode::Derived => "derived",
            SolverMode::PaperForm => "paper_form",
        }
    }
}

impl fmt::Display for SolverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SolverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "derived" => Ok(SolverMode::Derived),
            "paper_form" | "paperform" => Ok(SolverMode::PaperForm),
            other => Err(Error::domain(format!("unknown solver mode `{other}`"))),
        }
    }
}

/// Which constraint of the leader problem is active at the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    None,
    RMax,
    PMax,
    PMin,
}

impl Binding {
    pub fn as_str(self) -> &'static str {
        match self {
            Binding::None => "none",
            Binding::RMax => "r_max",
            Binding::PMax => "p_max",
            Binding::PMin => "p_min",
        }
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub p_star: f64,
    pub r_star: Vec<f64>,
    pub active_set: Vec<FollowerId>,
    pub la_utility: f64,
    pub smu_utilities: Vec<f64>,
    pub mode: SolverMode,
    pub binding: Binding,
    /// Demand exceeds `r_max` even at `p_max`; demands were scaled down
    /// proportionally to meet the cap.
    pub capacity_warning: bool,
}

impl EquilibriumResult {
    pub fn total_demand(&self) -> f64 {
        self.r_star.iter().sum()
    }
}

/// `(A, B)` such that the best response is `max(0, A/p − B)`.
fn response_coefficients(smu: &SmuParams, mode: SolverMode) -> (f64, f64) {
    let b = (1.0 + smu.popa) / smu.gain;
    match mode {
        SolverMode::Derived => (smu.alpha, b),
        SolverMode::PaperForm => (smu.alpha * (1.0 + smu.popa), b),
    }
}

/// Utility-maximizing pseudonym demand of one follower at price `p`.
pub fn best_response(smu: &SmuParams, p: f64, mode: SolverMode) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::domain(format!("price must be positive, got {p}")));
    }
    let (a, b) = response_coefficients(smu, mode);
    Ok((a / p - b).max(0.0))
}

fn demands_at(coeffs: &[(f64, f64)], p: f64) -> impl Iterator<Item = f64> + '_ {
    coeffs.iter().map(move |&(a, b)| (a / p - b).max(0.0))
}

/// Total demand of the population at price `p`.
pub fn total_demand(population: &[SmuParams], p: f64, mode: SolverMode) -> Result<f64> {
    population.iter().map(|s| best_response(s, p, mode)).sum()
}

fn stationary_price(c: f64, coeffs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (sum_a, sum_b) = coeffs.fold((0.0, 0.0), |(sa, sb), (a, b)| (sa + a, sb + b));
    (c * sum_a / sum_b).sqrt()
}

/// Stationary price of the leader revenue with every follower participating.
pub fn optimal_price_unconstrained(population: &[SmuParams], la: &LaParams, mode: SolverMode) -> Result<f64> {
    if population.is_empty() {
        return Err(Error::domain("population is empty"));
    }
    if let Some(s) = population.iter().find(|s| !(s.gain > 0.0)) {
        return Err(Error::domain(format!("follower {}: gain must be positive", s.id)));
    }
    Ok(stationary_price(la.c, population.iter().map(|s| response_coefficients(s, mode))))
}

fn revenue(coeffs: &[(f64, f64)], p: f64, c: f64) -> f64 {
    demands_at(coeffs, p).map(|r| (p - c) * r).sum()
}

/// Smallest price in `[lo, hi]` at which total demand is at most `cap`.
fn price_for_capacity(coeffs: &[(f64, f64)], cap: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if demands_at(coeffs, mid).sum::<f64>() > cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Maximizer of the revenue over `[lo, hi]` and the clamp that produced it.
fn maximize_revenue(coeffs: &[(f64, f64)], c: f64, lo: f64, hi: f64) -> (f64, Clamp) {
    // Participation thresholds, descending; between consecutive thresholds the
    // participating set is fixed and the revenue is concave.
    let mut thresholds: Vec<f64> = coeffs.iter().map(|&(a, b)| a / b).collect();
    thresholds.sort_by(|x, y| y.total_cmp(x));
    thresholds.dedup();

    let mut best: Option<(f64, f64, Clamp)> = None;
    let mut upper = f64::INFINITY;
    for (k, &t) in thresholds.iter().chain(std::iter::once(&0.0)).enumerate() {
        let seg_hi = upper.min(hi);
        let seg_lo = t.max(lo);
        upper = t;
        if k == 0 || seg_lo > seg_hi {
            // Above the largest threshold nobody participates.
            continue;
        }
        let active = coeffs.iter().copied().filter(|&(a, b)| a / b >= thresholds[k - 1]);
        let stationary = stationary_price(c, active);
        let (p, clamp) = if stationary < seg_lo {
            (seg_lo, if seg_lo == lo { Clamp::Lower } else { Clamp::Interior })
        } else if stationary > seg_hi {
            (seg_hi, if seg_hi == hi { Clamp::Upper } else { Clamp::Interior })
        } else {
            (stationary, Clamp::Interior)
        };
        let value = revenue(coeffs, p, c);
        let better = match best {
            None => true,
            Some((bp, bv, _)) => value > bv || (value == bv && p < bp),
        };
        if better {
            best = Some((p, value, clamp));
        }
    }
    best.map(|(p, _, clamp)| (p, clamp)).unwrap_or((lo, Clamp::Lower))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Clamp {
    Interior,
    Lower,
    Upper,
}

fn check_population(population: &[Follower], la: &LaParams) -> Result<()> {
    if population.is_empty() {
        return Err(Error::domain("population is empty"));
    }
    la.validate()?;
    population.iter().try_for_each(|f| f.smu.validate())
}

/// Constrained Stackelberg equilibrium: the leader price maximizing its
/// utility subject to `c ≤ p ≤ p_max` and `Σ r ≤ r_max`, with every follower
/// playing its best response.
pub fn solve(population: &[Follower], la: &LaParams, mode: SolverMode) -> Result<EquilibriumResult> {
    check_population(population, la)?;
    let coeffs: Vec<(f64, f64)> = population.iter().map(|f| response_coefficients(&f.smu, mode)).collect();
    let c = la.c;

    if coeffs.iter().all(|&(a, b)| a / b <= c) {
        return Err(Error::Infeasible(
            "no price in [c, p_max] yields positive demand".to_string(),
        ));
    }

    let mut capacity_warning = false;
    let mut lo = c;
    let mut scale = 1.0;
    let (p_star, binding) = if demands_at(&coeffs, la.p_max).sum::<f64>() > la.r_max {
        capacity_warning = true;
        log::warn!("total demand exceeds r_max even at p_max; scaling demands");
        scale = la.r_max / demands_at(&coeffs, la.p_max).sum::<f64>();
        (la.p_max, Binding::RMax)
    } else {
        let r_max_bound = demands_at(&coeffs, c).sum::<f64>() > la.r_max;
        if r_max_bound {
            lo = price_for_capacity(&coeffs, la.r_max, c, la.p_max);
        }
        let (p, clamp) = maximize_revenue(&coeffs, c, lo, la.p_max);
        let binding = match clamp {
            Clamp::Interior => Binding::None,
            Clamp::Upper => Binding::PMax,
            Clamp::Lower if r_max_bound => Binding::RMax,
            Clamp::Lower => Binding::PMin,
        };
        (p, binding)
    };

    let r_star: Vec<f64> = demands_at(&coeffs, p_star).map(|r| r * scale).collect();
    if revenue(&coeffs, p_star, c) <= 0.0 && r_star.iter().all(|&r| r == 0.0) {
        return Err(Error::Infeasible(
            "no price in [c, p_max] yields positive demand".to_string(),
        ));
    }
    finish(population, la, mode, p_star, r_star, binding, capacity_warning)
}

fn finish(
    population: &[Follower],
    la: &LaParams,
    mode: SolverMode,
    p_star: f64,
    r_star: Vec<f64>,
    binding: Binding,
    capacity_warning: bool,
) -> Result<EquilibriumResult> {
    let la_utility = la_total_utility(p_star, population, &r_star, la)?;
    let smu_utilities = population
        .iter()
        .zip(&r_star)
        .map(|(f, &r)| smu_total_utility(&f.smu, p_star, r, la.c_a))
        .collect::<Result<Vec<_>>>()?;
    let active_set = population
        .iter()
        .zip(&r_star)
        .filter(|(_, &r)| r > 0.0)
        .map(|(f, _)| f.smu.id)
        .collect();
    Ok(EquilibriumResult {
        p_star,
        r_star,
        active_set,
        la_utility,
        smu_utilities,
        mode,
        binding,
        capacity_warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub price: f64,
    pub utility: f64,
}

fn grid_price(la: &LaParams, k: usize, grid_points: usize) -> f64 {
    if grid_points <= 1 {
        return la.c;
    }
    la.c + (la.p_max - la.c) * k as f64 / (grid_points - 1) as f64
}

struct GridObjective {
    coeffs: Vec<(f64, f64)>,
    c: f64,
    eta1: f64,
    constant: f64,
    r_max: f64,
    /// Cap is violated everywhere; demands are scaled onto it.
    scale_to_cap: bool,
}

impl GridObjective {
    fn new(population: &[Follower], la: &LaParams, mode: SolverMode) -> Result<Self> {
        check_population(population, la)?;
        let coeffs: Vec<(f64, f64)> = population.iter().map(|f| response_coefficients(&f.smu, mode)).collect();
        let scale_to_cap = demands_at(&coeffs, la.p_max).sum::<f64>() > la.r_max;
        Ok(Self {
            coeffs,
            c: la.c,
            eta1: la.eta1,
            constant: la_avatar_constant(population, la)?,
            r_max: la.r_max,
            scale_to_cap,
        })
    }

    /// Leader utility at `p`, or `None` when the demand cap is violated.
    fn eval(&self, p: f64) -> Option<f64> {
        let total: f64 = demands_at(&self.coeffs, p).sum();
        let total = if total > self.r_max {
            if !self.scale_to_cap {
                return None;
            }
            self.r_max
        } else {
            total
        };
        Some(self.eta1 * (p - self.c) * total + self.constant)
    }
}

/// Brute-force leader optimum over `grid_points` evenly spaced prices in
/// `[c, p_max]`, followers playing best responses. Ties go to the lowest price.
pub fn oracle_grid_search(
    population: &[Follower],
    la: &LaParams,
    mode: SolverMode,
    grid_points: usize,
) -> Result<OracleResult> {
    let objective = GridObjective::new(population, la, mode)?;
    let n = grid_points.max(1);
    const CHUNK: usize = 1 << 14;
    let best = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .filter_map(|chunk| {
            let start = chunk * CHUNK;
            let end = (start + CHUNK).min(n);
            let mut best: Option<(usize, f64)> = None;
            for k in start..end {
                if let Some(u) = objective.eval(grid_price(la, k, n)) {
                    if best.is_none_or(|(_, bu)| u > bu) {
                        best = Some((k, u));
                    }
                }
            }
            best
        })
        .reduce_with(|x, y| if y.1 > x.1 || (y.1 == x.1 && y.0 < x.0) { y } else { x });
    match best {
        Some((k, utility)) => Ok(OracleResult {
            price: grid_price(la, k, n),
            utility,
        }),
        None => Err(Error::Infeasible("no grid price satisfies the demand cap".to_string())),
    }
}

/// `(price, utility)` pairs along the oracle grid; infeasible prices are skipped.
pub fn oracle_utility_curve(
    population: &[Follower],
    la: &LaParams,
    mode: SolverMode,
    grid_points: usize,
) -> Result<Vec<(f64, f64)>> {
    let objective = GridObjective::new(population, la, mode)?;
    let n = grid_points.max(1);
    Ok((0..n)
        .filter_map(|k| {
            let p = grid_price(la, k, n);
            objective.eval(p).map(|u| (p, u))
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcavityReport {
    /// Second differences of the follower utility in demand.
    pub follower_checks: usize,
    /// Second differences of the substituted leader objective in price.
    pub leader_checks: usize,
    pub concave: usize,
    pub flat: usize,
    pub violations: usize,
}

/// Classify a forward second difference `f0 − 2 f1 + f2`.
fn classify(f0: f64, f1: f64, f2: f64, report: &mut ConcavityReport) {
    let second = f0 - 2.0 * f1 + f2;
    let noise = 64.0 * f64::EPSILON * (f0.abs() + 2.0 * f1.abs() + f2.abs());
    if second > noise {
        report.violations += 1;
    } else if second.abs() <= noise {
        report.flat += 1;
    } else {
        report.concave += 1;
    }
}

/// Numerically checks the sign of the follower utility's curvature in demand
/// and of the leader's substituted objective in price at random feasible
/// points. Each sample performs one check of each kind.
pub fn verify_concavity(
    population: &[Follower],
    la: &LaParams,
    mode: SolverMode,
    samples: usize,
    rng_seed: u64,
) -> Result<ConcavityReport> {
    if population.is_empty() {
        return Err(Error::domain("population is empty"));
    }
    la.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let coeffs: Vec<(f64, f64)> = population.iter().map(|f| response_coefficients(&f.smu, mode)).collect();
    // Every follower's response substituted without the participation clamp.
    let leader = |p: f64| -> f64 { coeffs.iter().map(|&(a, b)| (p - la.c) * (a / p - b)).sum() };

    let mut report = ConcavityReport::default();
    for _ in 0..samples {
        let follower = &population[rng.random_range(0..population.len())].smu;
        let p = rng.random_range(la.c..=la.p_max);
        let r = rng.random_range(0.0..=la.r_max);
        let h = 0.01 * (1.0 + r);
        let u = |r: f64| smu_pid_utility(follower, p, r);
        classify(u(r)?, u(r + h)?, u(r + 2.0 * h)?, &mut report);
        report.follower_checks += 1;

        let q = rng.random_range(la.c..=la.p_max);
        let h = 0.01 * q;
        classify(leader(q), leader(q + h), leader(q + 2.0 * h), &mut report);
        report.leader_checks += 1;
    }
    Ok(report)
}
