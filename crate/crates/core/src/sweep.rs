//! Parameter sweeps comparing pricing methods, and their CSV/summary reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Method, SweepAxis};
use crate::drl::baseline::{GreedyPolicy, RandomPolicy};
use crate::drl::train::{learned_policy, price_range};
use crate::drl::{evaluate_in, train, EnvConfig, PricingEnv, PricingPolicy, Resampling};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::stackelberg::solve;

pub const CSV_HEADER: [&str; 7] = ["sweep_value", "method", "seed", "la_utility", "price", "total_demand", "wall_ms"];

/// Written in the numeric columns of a failed cell.
pub const ERROR_MARKER: &str = "error";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellValues {
    pub la_utility: f64,
    pub price: f64,
    pub total_demand: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub method: Method,
    pub seed: u64,
    pub outcome: std::result::Result<CellValues, String>,
    pub wall_ms: u128,
}

/// Hash-derived seed for a sweep cell component.
pub fn derive_seed(root: u64, parts: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    for p in parts {
        hasher.update(p.to_le_bytes());
    }
    u64::from_le_bytes(hasher.finalize()[..8].try_into().expect("32-byte digest"))
}

/// Scenario with the swept parameter set to `value`.
pub fn scenario_at(config: &ExperimentConfig, value: f64) -> Scenario {
    let mut scenario = config.scenario();
    match config.axis {
        SweepAxis::LambdaBar => scenario.lambda_bar = value,
        SweepAxis::PopaBar => scenario.popa_bar = value,
    }
    scenario
}

struct Cell {
    value_index: usize,
    method_index: usize,
    seed: u64,
}

fn run_cell(config: &ExperimentConfig, cell: &Cell) -> Result<CellValues> {
    let value = config.values[cell.value_index];
    let method = config.methods[cell.method_index];
    let scenario = scenario_at(config, value);
    // The population depends only on the seed, so every method and sweep
    // value faces the same followers.
    let population_seed = derive_seed(config.seed, &[cell.seed]);
    let method_seed = derive_seed(config.seed, &[cell.value_index as u64, cell.method_index as u64, cell.seed]);

    if let Some(mode) = method.solver_mode() {
        let population = scenario.population_from_seed(population_seed)?;
        let eq = solve(&population, &scenario.la, mode)?;
        return Ok(CellValues {
            la_utility: eq.la_utility,
            price: eq.p_star,
            total_demand: eq.total_demand(),
        });
    }

    let train_config = config.train_config();
    let env_config = EnvConfig {
        resample: Resampling::Fixed,
        ..train_config.env_config()
    };
    let mut env = PricingEnv::new(scenario.clone(), env_config, population_seed)?;
    let range = price_range(&scenario)?;
    let mut policy: Box<dyn PricingPolicy> = match method {
        Method::Random => Box::new(RandomPolicy::new(range)),
        Method::Greedy => Box::new(GreedyPolicy::new(range, config.greedy_grid)),
        Method::Drl => {
            let tc = crate::drl::TrainConfig {
                seed: method_seed,
                ..train_config.clone()
            };
            let outcome = train(&tc, &scenario)?;
            Box::new(learned_policy(&outcome, &tc, &scenario, true))
        }
        Method::EquilibriumDerived | Method::EquilibriumPaperForm => unreachable!("handled above"),
    };
    let summary = evaluate_in(policy.as_mut(), &mut env, config.eval_episodes, method_seed)?;
    Ok(CellValues {
        la_utility: summary.mean_utility,
        price: summary.mean_price,
        total_demand: summary.mean_total_demand,
    })
}

/// Runs every (value, method, seed) cell. Cells run in parallel; rows come
/// back in value, method, seed order. A failing cell is recorded, not fatal.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let mut cells = Vec::new();
    for value_index in 0..config.values.len() {
        for method_index in 0..config.methods.len() {
            for &seed in &config.seeds {
                cells.push(Cell {
                    value_index,
                    method_index,
                    seed,
                });
            }
        }
    }
    Ok(cells
        .par_iter()
        .map(|cell| {
            let start = Instant::now();
            let outcome = run_cell(config, cell).map_err(|e| e.to_string());
            if let Err(e) = &outcome {
                log::warn!(
                    "cell {}={} method={} seed={} failed: {e}",
                    config.axis.as_str(),
                    config.values[cell.value_index],
                    config.methods[cell.method_index],
                    cell.seed
                );
            }
            SweepRow {
                sweep_value: config.values[cell.value_index],
                method: config.methods[cell.method_index],
                seed: cell.seed,
                outcome,
                wall_ms: start.elapsed().as_millis(),
            }
        })
        .collect())
}

pub fn write_csv(rows: &[SweepRow], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let (u, p, d) = match &r.outcome {
            Ok(v) => (v.la_utility.to_string(), v.price.to_string(), v.total_demand.to_string()),
            Err(_) => (ERROR_MARKER.to_string(), ERROR_MARKER.to_string(), ERROR_MARKER.to_string()),
        };
        w.write_record([
            r.sweep_value.to_string(),
            r.method.to_string(),
            r.seed.to_string(),
            u,
            p,
            d,
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub ok_cells: usize,
    pub failed_cells: usize,
    pub text: String,
}

#[derive(Default)]
struct Accumulator {
    utility: f64,
    price: f64,
    demand: f64,
    ok: usize,
    failed: usize,
}

/// Per-(value, method) means. The `drl_over_equilibrium` column divides the
/// DRL mean utility by the derived-mode equilibrium mean at the same value.
pub fn summarize(rows: &[SweepRow]) -> ReportSummary {
    let ok_cells = rows.iter().filter(|r| r.outcome.is_ok()).count();
    let failed_cells = rows.len() - ok_cells;
    if ok_cells == 0 {
        return ReportSummary {
            ok_cells,
            failed_cells,
            text: "no successful cells\n".to_string(),
        };
    }
    // Keyed by the value's bit pattern so order follows first appearance.
    let mut order: Vec<(u64, Method)> = Vec::new();
    let mut groups: BTreeMap<(u64, Method), Accumulator> = BTreeMap::new();
    for r in rows {
        let key = (r.sweep_value.to_bits(), r.method);
        let acc = groups.entry(key).or_insert_with(|| {
            order.push(key);
            Accumulator::default()
        });
        match &r.outcome {
            Ok(v) => {
                acc.utility += v.la_utility;
                acc.price += v.price;
                acc.demand += v.total_demand;
                acc.ok += 1;
            }
            Err(_) => acc.failed += 1,
        }
    }
    let mean = |acc: &Accumulator| {
        let n = acc.ok as f64;
        (acc.utility / n, acc.price / n, acc.demand / n)
    };
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:>12} {:<24} {:>4} {:>6} {:>14} {:>12} {:>12} {:>20}",
        "sweep_value", "method", "ok", "failed", "la_utility", "price", "total_demand", "drl_over_equilibrium"
    );
    for key @ (bits, method) in &order {
        let acc = &groups[key];
        let value = f64::from_bits(*bits);
        let (u, p, d) = if acc.ok > 0 { mean(acc) } else { (f64::NAN, f64::NAN, f64::NAN) };
        let ratio = match (method, groups.get(&(*bits, Method::EquilibriumDerived))) {
            (Method::Drl, Some(eq)) if acc.ok > 0 && eq.ok > 0 => format!("{:.6}", u / mean(eq).0),
            _ => "-".to_string(),
        };
        let _ = writeln!(
            text,
            "{:>12} {:<24} {:>4} {:>6} {:>14.6} {:>12.6} {:>12.6} {:>20}",
            value,
            method.as_str(),
            acc.ok,
            acc.failed,
            u,
            p,
            d,
            ratio
        );
    }
    ReportSummary {
        ok_cells,
        failed_cells,
        text,
    }
}

/// Path of the summary written alongside `csv_path`.
pub fn summary_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("summary.txt")
}

/// Writes the CSV to `csv_path` and the summary table next to it.
pub fn emit_report(rows: &[SweepRow], csv_path: &Path) -> Result<ReportSummary> {
    if rows.is_empty() {
        return Err(Error::domain("no rows to report"));
    }
    let file = std::fs::File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
    write_csv(rows, std::io::BufWriter::new(file))?;
    let summary = summarize(rows);
    let path = summary_path(csv_path);
    std::fs::write(&path, &summary.text).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}
