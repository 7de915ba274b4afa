use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pseudomarket")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn popa_prints_six_decimals() {
    let o = run(&["popa"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "2.309872\n");
    let o = run(&["popa", "--s-attr", "7", "--s-total", "16", "--t-attr", "1", "--t-total", "2", "--r-n", "2", "--r-l", "4"]);
    assert_eq!(stdout(&o).trim().trim_start_matches('-'), "0.000000");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "alpha = -1\n").unwrap();
    let o = run(&["--config", path(&bad), "solve"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha must be positive"));

    std::fs::write(&bad, "unknown_key = 3\n").unwrap();
    let o = run(&["--config", path(&bad), "sweep"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));

    let o = run(&["--config", path(&dir.path().join("missing.toml")), "popa"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_emits_csv_row() {
    let o = run(&["solve"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "mode,p_star,total_demand,la_utility,binding,capacity_warning,active,r_star");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "derived");
    assert!((row[1].parse::<f64>().unwrap() - 8.30448).abs() < 1e-4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("6 of 6 followers active"));

    let o = run(&["solve", "--mode", "paper-form", "--r-max", "2"]);
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "paper_form");
    assert_eq!(row[4], "r_max");
}

#[test]
fn solve_reads_population_file() {
    let dir = tempfile::tempdir().unwrap();
    let pop = dir.path().join("pop.csv");
    std::fs::write(
        &pop,
        "id,alpha,popa,gain,gamma,mu,mu_th,tau,tau_th,regenerate,omega1,omega2,model_m,model_n,server\n\
         0,15,1.5,,1.75,30,15,0.04,0.08,false,0.5,0.5,0,0,0\n\
         1,15,1.5,,1.75,30,15,0.04,0.08,false,0.5,0.5,0,0,1\n",
    )
    .unwrap();
    let out = dir.path().join("eq.csv");
    let o = run(&["solve", "--population", path(&pop), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("2 of 2 followers active"));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 2);
}

#[test]
fn mint_and_verify_binary_and_text() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("set.bin");
    let o = run(&["--seed", "9", "--out", path(&bin), "pseudonyms", "mint", "--owner", "4", "--count", "5", "--epoch", "2", "--key", "a1b2c3", "--attributes", "0.1,0.2;0.3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(&std::fs::read(&bin).unwrap()[..4], b"APSS");
    let o = run(&["pseudonyms", "verify", "--key", "a1b2c3", path(&bin)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "valid: owner 4 epoch 2 count 5\n");

    let mut bytes = std::fs::read(&bin).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&bin, bytes).unwrap();
    let o = run(&["pseudonyms", "verify", "--key", "a1b2c3", path(&bin)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("tag mismatch at index 4"));

    let o = run(&["pseudonyms", "mint", "--owner", "4", "--count", "2", "--key", "a1b2c3", "--attributes", "1", "--format", "text"]);
    let text = stdout(&o);
    assert!(text.starts_with("APSS1 owner=4 epoch=0 count=2\n"));
    let txt = dir.path().join("set.txt");
    std::fs::write(&txt, text).unwrap();
    assert!(run(&["pseudonyms", "verify", "--key", "a1b2c3", path(&txt)]).status.success());
    assert_eq!(run(&["pseudonyms", "verify", "--key", "zz", path(&txt)]).status.code(), Some(2));
}

#[test]
fn train_writes_curve_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("train.toml");
    std::fs::write(&config, "episodes = 5\nepisode_length = 8\nhidden_width = 8\n").unwrap();
    let curve = dir.path().join("curve.csv");
    let o = run(&["--config", path(&config), "--seed", "3", "--out", path(&curve), "train"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&curve).unwrap();
    assert_eq!(text.lines().next().unwrap(), "episode,mean_utility,reward_rate,mean_price");
    assert_eq!(text.lines().count(), 6);
    let ckpt = std::fs::read(dir.path().join("curve.ckpt")).unwrap();
    assert_eq!(&ckpt[..4], b"APPC");
}

#[test]
fn sweep_exit_status_reflects_failed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    std::fs::write(&config, "values = [1.5]\nmethods = [\"equilibrium_derived\", \"random\"]\neval_episodes = 2\n").unwrap();
    let out = dir.path().join("ok.csv");
    let o = run(&["--config", path(&config), "--out", path(&out), "sweep"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 3);
    assert!(dir.path().join("ok.summary.txt").exists());

    std::fs::write(&config, "values = [1.5]\nmethods = [\"equilibrium_derived\"]\nc = 20\n").unwrap();
    let out = dir.path().join("bad.csv");
    let o = run(&["--config", path(&config), "--out", path(&out), "sweep"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("no successful cells"));
}
