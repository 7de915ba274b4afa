use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pseudomarket::config::{load_config, ExperimentConfig};
use pseudomarket::drl::checkpoint::encode_checkpoint;
use pseudomarket::drl::train::save_curve_csv;
use pseudomarket::market::FollowerId;
use pseudomarket::popa::compute_popa;
use pseudomarket::protocol::codec::{decode_set, decode_set_text, encode_set, encode_set_text};
use pseudomarket::protocol::{extract_attribute_fingerprint, mint_pseudonym_set, verify_pseudonym_set, CaKey, RandomPartSpec};
use pseudomarket::scenario::read_population_csv;
use pseudomarket::stackelberg::{solve, EquilibriumResult, SolverMode};
use pseudomarket::sweep::{emit_report, run_sweep, summary_path};

/// Pseudonym pricing simulator: metrics, equilibrium solver, protocol and learner.
#[derive(Debug, Parser)]
#[command(name = "pseudomarket", version)]
struct Cli {
    /// Experiment config file (flat `key = value`); missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the PoPA metric of an attribute profile.
    Popa(PopaArgs),
    /// Solve the pricing game.
    Solve(SolveArgs),
    /// Mint or verify pseudonym sets.
    Pseudonyms {
        #[command(subcommand)]
        verb: PseudonymVerb,
    },
    /// Train a pricing agent; writes a learning curve and a checkpoint.
    Train(TrainArgs),
    /// Run a parameter sweep; writes a CSV and a summary table.
    Sweep,
}

#[derive(Debug, Args)]
struct PopaArgs {
    #[arg(long)]
    s_attr: Option<u64>,
    #[arg(long)]
    s_total: Option<u64>,
    #[arg(long)]
    t_attr: Option<u64>,
    #[arg(long)]
    t_total: Option<u64>,
    #[arg(long)]
    r_n: Option<u32>,
    #[arg(long)]
    r_l: Option<u32>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Derived,
    PaperForm,
}

impl From<ModeArg> for SolverMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Derived => SolverMode::Derived,
            ModeArg::PaperForm => SolverMode::PaperForm,
        }
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long, value_enum, default_value = "derived")]
    mode: ModeArg,
    /// Population CSV; sampled from the scenario with the root seed if absent.
    #[arg(long)]
    population: Option<PathBuf>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    p_max: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SetFormat {
    Binary,
    Text,
}

#[derive(Debug, Subcommand)]
enum PseudonymVerb {
    /// Mint a set for one owner; attribute vectors are `;`-separated lists of
    /// `,`-separated numbers.
    Mint {
        #[arg(long)]
        owner: u32,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        epoch: u64,
        /// CA key as hex.
        #[arg(long)]
        key: String,
        #[arg(long)]
        attributes: String,
        #[arg(long, value_enum, default_value = "binary")]
        format: SetFormat,
    },
    /// Verify a set file (binary or text, detected automatically).
    Verify {
        #[arg(long)]
        key: String,
        input: PathBuf,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Checkpoint path; defaults to the curve path with a `.ckpt` extension.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

/// Errors in configuration or arguments; these exit with status 2.
#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(e: impl Into<anyhow::Error>) -> anyhow::Error {
    ConfigError(e.into()).into()
}

fn load(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => load_config(path).map_err(config_error)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = Some(out.clone());
    }
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    let config = load(cli)?;
    match &cli.command {
        Command::Popa(args) => popa(&config, args),
        Command::Solve(args) => solve_cmd(&config, args, cli.out.as_deref()),
        Command::Pseudonyms { verb } => pseudonyms(&config, verb, cli.out.as_deref()),
        Command::Train(args) => train_cmd(&config, args),
        Command::Sweep => sweep_cmd(&config),
    }
}

fn popa(config: &ExperimentConfig, args: &PopaArgs) -> anyhow::Result<ExitCode> {
    let mut profile = config.profile();
    profile.s_attr = args.s_attr.unwrap_or(profile.s_attr);
    profile.s_total = args.s_total.unwrap_or(profile.s_total);
    profile.t_attr = args.t_attr.unwrap_or(profile.t_attr);
    profile.t_total = args.t_total.unwrap_or(profile.t_total);
    profile.r_n = args.r_n.unwrap_or(profile.r_n);
    profile.r_l = args.r_l.unwrap_or(profile.r_l);
    let value = compute_popa(&profile).map_err(config_error)?;
    println!("{value:.6}");
    Ok(ExitCode::SUCCESS)
}

const SOLVE_HEADER: &str = "mode,p_star,total_demand,la_utility,binding,capacity_warning,active,r_star";

fn solve_row(eq: &EquilibriumResult) -> String {
    let r_star: Vec<String> = eq.r_star.iter().map(f64::to_string).collect();
    format!(
        "{},{},{},{},{},{},{},{}",
        eq.mode,
        eq.p_star,
        eq.total_demand(),
        eq.la_utility,
        eq.binding.as_str(),
        eq.capacity_warning,
        eq.active_set.len(),
        r_star.join(";")
    )
}

fn solve_cmd(config: &ExperimentConfig, args: &SolveArgs, out: Option<&Path>) -> anyhow::Result<ExitCode> {
    let mut config = config.clone();
    config.r_max = args.r_max.unwrap_or(config.r_max);
    config.p_max = args.p_max.unwrap_or(config.p_max);
    config.c = args.c.unwrap_or(config.c);
    config.validate().map_err(config_error)?;
    let scenario = config.scenario();
    let population = match &args.population {
        Some(path) => {
            let file = fs::File::open(path).with_context(|| format!("opening {}", path.display())).map_err(config_error)?;
            read_population_csv(file, &scenario)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(config_error)?
        }
        None => scenario.population_from_seed(config.seed)?,
    };
    let eq = solve(&population, &scenario.la, args.mode.into())?;
    let csv = format!("{SOLVE_HEADER}\n{}\n", solve_row(&eq));
    let summary = format!(
        "mode {}: price {:.6}, total demand {:.6}, leader utility {:.6}, {} of {} followers active, binding constraint {}{}",
        eq.mode,
        eq.p_star,
        eq.total_demand(),
        eq.la_utility,
        eq.active_set.len(),
        population.len(),
        eq.binding.as_str(),
        if eq.capacity_warning { " (capacity warning: demand scaled to r_max)" } else { "" }
    );
    match out {
        Some(path) => {
            fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
            println!("{summary}");
        }
        None => {
            print!("{csv}");
            eprintln!("{summary}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_attributes(text: &str) -> anyhow::Result<Vec<Vec<f64>>> {
    text.split(';')
        .map(|vector| {
            vector
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad attribute value {s:?}")))
                .collect()
        })
        .collect()
}

fn pseudonyms(config: &ExperimentConfig, verb: &PseudonymVerb, out: Option<&Path>) -> anyhow::Result<ExitCode> {
    let spec = RandomPartSpec {
        r_n: config.r_n,
        r_l: config.r_l,
    };
    match verb {
        PseudonymVerb::Mint {
            owner,
            count,
            epoch,
            key,
            attributes,
            format,
        } => {
            let key = CaKey::from_hex(key).map_err(config_error)?;
            let vectors = parse_attributes(attributes).map_err(config_error)?;
            let fingerprint = extract_attribute_fingerprint(FollowerId(*owner), &vectors)?;
            let set = mint_pseudonym_set(&fingerprint, *count, *epoch, &key, spec, config.seed)?;
            let bytes = match format {
                SetFormat::Binary => encode_set(&set),
                SetFormat::Text => encode_set_text(&set).into_bytes(),
            };
            match out {
                Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?,
                None => {
                    if matches!(format, SetFormat::Binary) {
                        bail!("binary output needs --out; use --format text for stdout");
                    }
                    std::io::stdout().write_all(&bytes)?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        PseudonymVerb::Verify { key, input } => {
            let key = CaKey::from_hex(key).map_err(config_error)?;
            let data = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
            let set = if data.starts_with(b"APSS1 ") {
                decode_set_text(std::str::from_utf8(&data).context("text set is not UTF-8")?)?
            } else {
                decode_set(&data)?
            };
            let report = verify_pseudonym_set(&set, &key, spec);
            if report.is_valid() {
                println!("valid: owner {} epoch {} count {}", set.owner, set.epoch, set.len());
                Ok(ExitCode::SUCCESS)
            } else {
                for reason in &report.reasons {
                    println!("invalid: {reason}");
                }
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn train_cmd(config: &ExperimentConfig, args: &TrainArgs) -> anyhow::Result<ExitCode> {
    let curve_path = config.out.clone().unwrap_or_else(|| PathBuf::from("curve.csv"));
    let checkpoint_path = args.checkpoint.clone().unwrap_or_else(|| curve_path.with_extension("ckpt"));
    let train_config = config.train_config();
    let scenario = config.scenario();
    let outcome = pseudomarket::drl::train(&train_config, &scenario)?;
    save_curve_csv(&outcome.curve, &curve_path)?;
    fs::write(&checkpoint_path, encode_checkpoint(&outcome.params))
        .with_context(|| format!("writing {}", checkpoint_path.display()))?;
    let (utility, equilibrium) = outcome.tail_means(100);
    println!(
        "trained {} episodes: final-100 mean utility {utility:.6}, equilibrium {equilibrium:.6}, ratio {:.4}",
        outcome.curve.len(),
        utility / equilibrium
    );
    println!("curve: {}\ncheckpoint: {}", curve_path.display(), checkpoint_path.display());
    Ok(ExitCode::SUCCESS)
}

fn sweep_cmd(config: &ExperimentConfig) -> anyhow::Result<ExitCode> {
    let csv_path = config.out.clone().unwrap_or_else(|| PathBuf::from("sweep.csv"));
    let rows = run_sweep(config).map_err(config_error)?;
    let summary = emit_report(&rows, &csv_path)?;
    print!("{}", summary.text);
    println!("csv: {}\nsummary: {}", csv_path.display(), summary_path(&csv_path).display());
    if summary.failed_cells > 0 {
        eprintln!("{} of {} cells failed", summary.failed_cells, rows.len());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}
