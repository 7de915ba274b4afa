//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints exactly one PASS/FAIL line.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use pseudomarket::config::{ExperimentConfig, Method, SweepAxis};
use pseudomarket::drl::ppo::loss_and_gradient;
use pseudomarket::drl::train::{episode_seed, learned_policy, price_range};
use pseudomarket::drl::{baseline_policy, evaluate, policy_act, train, BaselineKind, PolicyParams, PriceRange, Sample, TrainConfig};
use pseudomarket::market::{Follower, FollowerId, LaParams, ModelCache, SmuParams};
use pseudomarket::popa::{compute_popa, privacy_gain, AvatarAttributeProfile, PrivacyGainParams};
use pseudomarket::protocol::codec::{decode_set, decode_set_text, encode_set, encode_set_text};
use pseudomarket::protocol::{extract_attribute_fingerprint, mint_pseudonym_set, verify_pseudonym_set, CaKey, RandomPartSpec};
use pseudomarket::scenario::Scenario;
use pseudomarket::stackelberg::{oracle_grid_search, solve, verify_concavity, SolverMode};
use pseudomarket::sweep::run_sweep;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_population(rng: &mut impl Rng, size: usize) -> Vec<Follower> {
    (0..size as u32)
        .map(|i| {
            let gain = privacy_gain(&PrivacyGainParams {
                lambda: rng.random_range(1.0..2.0),
                ..PrivacyGainParams::default()
            })
            .unwrap();
            let smu = SmuParams {
                id: FollowerId(i),
                popa: rng.random_range(1.3..1.7),
                gain,
                gamma: rng.random_range(1.5..2.0),
                mu: rng.random_range(20.0..40.0),
                tau: rng.random_range(0.02..0.06),
                regenerate: rng.random_bool(0.5),
                model_m: rng.random_range(0..3),
                model_n: rng.random_range(0..3),
                ..SmuParams::default()
            };
            let cached = rng.random_range(0..3);
            Follower::new(smu, ModelCache::new([cached], [cached]))
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let la = LaParams::default();
    let n = 1_000_000;
    let step = (la.p_max - la.c) / (n - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_steps, mut worst_rel) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let size = rng.random_range(1..=10);
        let pop = random_population(&mut rng, size);
        for mode in SolverMode::ALL {
            let eq = solve(&pop, &la, mode).map_err(|e| e.to_string())?;
            let oracle = oracle_grid_search(&pop, &la, mode, n).map_err(|e| e.to_string())?;
            worst_steps = worst_steps.max((eq.p_star - oracle.price).abs() / step);
            worst_rel = worst_rel.max((eq.la_utility - oracle.utility).abs() / eq.la_utility.abs().max(1.0));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_steps <= 2.0 && worst_rel <= 1e-6 && secs < 30.0,
        format!("200 solves, max price gap {worst_steps:.3} grid steps, max utility gap {worst_rel:.2e}, {secs:.1}s"),
    )
}

fn criterion_2() -> Outcome {
    let pop = Scenario::default().population_from_seed(0).map_err(|e| e.to_string())?;
    let la = LaParams::default();
    let d = solve(&pop, &la, SolverMode::Derived).map_err(|e| e.to_string())?;
    let p = solve(&pop, &la, SolverMode::PaperForm).map_err(|e| e.to_string())?;
    let r_ok = d.r_star.iter().all(|r| (r - 0.71874).abs() <= 1e-4);
    check(
        (d.p_star - 8.30448).abs() <= 1e-4
            && r_ok
            && (d.total_demand() - 4.31241).abs() <= 1e-3
            && (p.p_star - 13.13049).abs() <= 1e-4,
        format!(
            "derived p*={:.6} r*={:.6} sum={:.6}; paper_form p*={:.6}",
            d.p_star,
            d.r_star[0],
            d.total_demand(),
            p.p_star
        ),
    )
}

fn criterion_3() -> Outcome {
    let gain = privacy_gain(&PrivacyGainParams::default()).map_err(|e| e.to_string())?;
    let zero = compute_popa(&AvatarAttributeProfile {
        s_attr: 7,
        s_total: 16,
        t_attr: 1,
        t_total: 2,
        r_n: 2,
        r_l: 4,
    })
    .map_err(|e| e.to_string())?;
    check(
        (gain - 2.29877).abs() <= 1e-4 && zero.abs() <= 1e-12,
        format!("gain={gain:.6}, exact-zero popa={zero:e}"),
    )
}

fn criterion_4() -> Outcome {
    let la = LaParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut checks, mut violations) = (0, 0);
    for i in 0..100u64 {
        let size = rng.random_range(1..=10);
        let pop = random_population(&mut rng, size);
        for mode in SolverMode::ALL {
            let report = verify_concavity(&pop, &la, mode, 50, i).map_err(|e| e.to_string())?;
            checks += report.follower_checks + report.leader_checks;
            violations += report.violations;
        }
    }
    check(
        checks >= 10_000 && violations == 0,
        format!("{checks} second-difference checks, {violations} violations"),
    )
}

fn sweep_utilities(axis: SweepAxis, values: Vec<f64>, method: Method) -> Result<(Vec<f64>, Vec<f64>), String> {
    let config = ExperimentConfig {
        axis,
        values,
        methods: vec![method],
        ..ExperimentConfig::default()
    };
    let rows = run_sweep(&config).map_err(|e| e.to_string())?;
    let cells: Result<Vec<_>, String> = rows.into_iter().map(|r| r.outcome).collect();
    let cells = cells?;
    Ok((cells.iter().map(|c| c.la_utility).collect(), cells.iter().map(|c| c.price).collect()))
}

fn increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

fn criterion_5() -> Outcome {
    let lambdas = vec![1.0, 1.25, 1.5, 1.75, 2.0];
    let popas = vec![1.3, 1.4, 1.5, 1.6, 1.7];
    let (lu_d, lp_d) = sweep_utilities(SweepAxis::LambdaBar, lambdas.clone(), Method::EquilibriumDerived)?;
    let (lu_p, lp_p) = sweep_utilities(SweepAxis::LambdaBar, lambdas, Method::EquilibriumPaperForm)?;
    let (hu_p, _) = sweep_utilities(SweepAxis::PopaBar, popas.clone(), Method::EquilibriumPaperForm)?;
    let (hu_d, _) = sweep_utilities(SweepAxis::PopaBar, popas, Method::EquilibriumDerived)?;
    let fmt = |xs: &[f64]| xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    check(
        increasing(&lu_d) && increasing(&lp_d) && increasing(&lu_p) && increasing(&lp_p) && increasing(&hu_p),
        format!(
            "lambda utility derived [{}] paper_form [{}]; popa utility paper_form [{}] (derived mode decreases: [{}])",
            fmt(&lu_d),
            fmt(&lu_p),
            fmt(&hu_p),
            fmt(&hu_d)
        ),
    )
}

fn criterion_6() -> Outcome {
    let scenario = Scenario::default();
    let mut details = Vec::new();
    let mut ok = true;
    for seed in 0..3u64 {
        let config = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let start = Instant::now();
        let outcome = train(&config, &scenario).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let (utility, equilibrium) = outcome.tail_means(100);
        let ratio = utility / equilibrium;

        let env = config.env_config();
        let eval_seed = episode_seed(seed, 1 << 40);
        let mut agent = learned_policy(&outcome, &config, &scenario, false);
        let trained = evaluate(&mut agent, &scenario, &env, 500, eval_seed).map_err(|e| e.to_string())?;
        let range = price_range(&scenario).map_err(|e| e.to_string())?;
        let mut random = baseline_policy(BaselineKind::Random, range);
        let baseline = evaluate(random.as_mut(), &scenario, &env, 500, eval_seed).map_err(|e| e.to_string())?;

        ok &= outcome.curve.len() <= 2000 && ratio >= 0.90 && secs < 600.0 && trained.mean_utility >= baseline.mean_utility;
        details.push(format!(
            "seed {seed}: ratio {ratio:.4} in {secs:.0}s, eval {:.3} vs random {:.3}",
            trained.mean_utility, baseline.mean_utility
        ));
    }
    check(ok, details.join("; "))
}

fn criterion_7() -> Outcome {
    let range = PriceRange::new(5.0, 25.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = PolicyParams::new(3, 4, range, &mut rng).map_err(|e| e.to_string())?;
    let samples: Vec<Sample> = (0..8)
        .map(|_| {
            let features: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let action = policy_act(&features, &params, &mut rng, false);
            Sample {
                features,
                pre_squash: action.pre_squash,
                log_density: action.gaussian_log_density,
                advantage: rng.random_range(-1.0..1.0),
                target: rng.random_range(-2.0..2.0),
            }
        })
        .collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    let config = TrainConfig::default();
    let (_, _, grad) = loss_and_gradient(&params, &refs, &config);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..params.param_count() {
        let mut plus = params.clone();
        plus.values[i] += h;
        let mut minus = params.clone();
        minus.values[i] -= h;
        let fd = (loss_and_gradient(&plus, &refs, &config).0 - loss_and_gradient(&minus, &refs, &config).0) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6));
    }

    let features = [0.2, -0.3, 0.5];
    let n = 10_000;
    let width = (range.high - range.low) / n as f64;
    let mut integral = 0.0;
    for i in 0..n {
        let price = range.low + (i as f64 + 0.5) * width;
        integral += params.log_density_of_price(&features, price).map_err(|e| e.to_string())?.exp() * width;
    }
    check(
        worst <= 1e-4 && (integral - 1.0).abs() <= 1e-3,
        format!("max gradient relative error {worst:.2e} over {} parameters, density integral {integral:.6}", params.param_count()),
    )
}

fn criterion_8() -> Outcome {
    let key = CaKey::new(b"acceptance key".to_vec()).map_err(|e| e.to_string())?;
    let spec = RandomPartSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut roundtrips, mut rejected) = (0, 0);
    for _ in 0..1000 {
        let owner = FollowerId(rng.random());
        let vectors: Vec<Vec<f64>> = (0..rng.random_range(1..4))
            .map(|_| (0..rng.random_range(1..16)).map(|_| rng.random()).collect())
            .collect();
        let fp = extract_attribute_fingerprint(owner, &vectors).map_err(|e| e.to_string())?;
        let set = mint_pseudonym_set(&fp, rng.random_range(1..=64), rng.random_range(0..100), &key, spec, rng.random())
            .map_err(|e| e.to_string())?;
        let bytes = encode_set(&set);
        let binary_ok = decode_set(&bytes).is_ok_and(|s| s == set && verify_pseudonym_set(&s, &key, spec).is_valid());
        let text_ok = decode_set_text(&encode_set_text(&set)).is_ok_and(|s| s == set);
        roundtrips += usize::from(binary_ok && text_ok);

        let mut tampered = bytes.clone();
        let pos = rng.random_range(0..tampered.len());
        tampered[pos] ^= rng.random_range(1..=255u8);
        rejected += usize::from(match decode_set(&tampered) {
            Err(_) => true,
            Ok(s) => !verify_pseudonym_set(&s, &key, spec).is_valid(),
        });
    }

    let fp = extract_attribute_fingerprint(FollowerId(1), &[vec![1.0, 2.0]]).map_err(|e| e.to_string())?;
    let mut counts = std::collections::HashMap::<String, u64>::new();
    for batch in 0..100 {
        let set = mint_pseudonym_set(&fp, 1000, 0, &key, spec, 10_000 + batch).map_err(|e| e.to_string())?;
        for p in set.pseudonyms {
            *counts.entry(p.random_part).or_default() += 1;
        }
    }
    let n = 100_000f64;
    let pairs: f64 = counts.values().map(|&k| (k * (k - 1) / 2) as f64).sum();
    let p = 1.0 / 9f64.powi(4);
    let all = n * (n - 1.0) / 2.0;
    let (expected, sigma) = (all * p, (all * p * (1.0 - p)).sqrt());
    let z = (pairs - expected) / sigma;
    check(
        roundtrips == 1000 && rejected == 1000 && z.abs() <= 3.0,
        format!("round-trips {roundtrips}/1000, tamper rejected {rejected}/1000, duplicate pairs {pairs} vs {expected:.0} (z = {z:.2})"),
    )
}

fn run_cli_sweep(config: &Path, out: &Path) -> Result<String, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_pseudomarket"))
        .args(["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "sweep"])
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!("sweep exited with {}: {}", status.status, String::from_utf8_lossy(&status.stderr)));
    }
    let text = std::fs::read_to_string(out).map_err(|e| e.to_string())?;
    Ok(text
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string() + "\n")
        .collect())
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("sweep.toml");
    std::fs::write(
        &config,
        "axis = \"lambda_bar\"\nvalues = [1.0, 2.0]\n\
         methods = [\"equilibrium_derived\", \"equilibrium_paper_form\", \"drl\", \"random\", \"greedy\"]\n\
         seeds = [1, 2]\nepisodes = 20\neval_episodes = 5\n",
    )
    .map_err(|e| e.to_string())?;
    let a = run_cli_sweep(&config, &dir.path().join("a.csv"))?;
    let b = run_cli_sweep(&config, &dir.path().join("b.csv"))?;
    check(
        a == b && a.lines().count() == 21,
        format!("{} data rows, identical without wall_ms: {}", a.lines().count() - 1, a == b),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("closed form matches grid oracle", criterion_1),
        ("default-scenario equilibrium values", criterion_2),
        ("metric values", criterion_3),
        ("concavity suite", criterion_4),
        ("sweep trends", criterion_5),
        ("learner convergence", criterion_6),
        ("learner numerics", criterion_7),
        ("protocol suite", criterion_8),
        ("sweep determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} ({name}): PASS - {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL - {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
