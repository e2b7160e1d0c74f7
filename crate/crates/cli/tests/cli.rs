use std::path::Path;
use std::process::{Command, Output};

fn sirbandit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sirbandit"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

const BERNOULLI: &str = "
[experiment]
scenario = static_bernoulli
horizon = 1000
realizations = 100
particles = 200
seed = 5
output_dir = out

[policy.ts_smc]
kind = thompson_smc
dynamics = static

[policy.uniform]
kind = uniform_random
";

#[test]
fn scenarios_lists_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let out = sirbandit(&["scenarios"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().any(|l| l == "scenario_a"));
}

#[test]
fn missing_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = sirbandit(&["run", "nope.ini"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = sirbandit(&["run", "x.ini", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("Usage"));
    let out = sirbandit(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_config_field_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.ini"),
        "[experiment]\nscenario = static_bernoulli\nhorizon = -3\n[policy.a]\nkind = uniform_random\n",
    )
    .unwrap();
    let out = sirbandit(&["run", "c.ini"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("experiment.horizon"));
}

#[test]
fn run_writes_rows_per_policy() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.ini"), BERNOULLI).unwrap();
    let out = sirbandit(
        &["run", "c.ini", "--realizations", "10", "--horizon", "200"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/cumulative_regret.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "policy,t,mean_instant_regret,mean_cum_regret,std_cum_regret"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.iter().filter(|l| l.starts_with("ts_smc,")).count(), 200);
    assert_eq!(rows.iter().filter(|l| l.starts_with("uniform,")).count(), 200);
    let raw = std::fs::read_to_string(dir.path().join("out/raw_regret.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + 2 * 10 * 200);
}

#[test]
fn output_is_independent_of_jobs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.ini"), BERNOULLI).unwrap();
    let common = ["run", "c.ini", "--realizations", "8", "--horizon", "100"];
    let a = sirbandit(
        &[&common[..], &["--jobs", "1", "--output-dir", "a"]].concat(),
        dir.path(),
    );
    let b = sirbandit(
        &[&common[..], &["--jobs", "4", "--output-dir", "b"]].concat(),
        dir.path(),
    );
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    for f in ["cumulative_regret.csv", "raw_regret.csv"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn gen_log_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("log.ini"),
        "[log]\narms = 4\ndim = 3\nrecords = 2000\nseed = 1\noutput = log.tsv\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("replay.ini"),
        "[experiment]\nparticles = 100\n[policy.ts]\nkind = thompson_smc\n[policy.u]\nkind = uniform_random\n",
    )
    .unwrap();
    let out = sirbandit(&["gen-log", "log.ini"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(dir.path().join("log.tsv")).unwrap();
    assert!(log.starts_with("#arms=4 dim=3\n"));
    assert_eq!(log.lines().count(), 2001);

    let out = sirbandit(&["replay", "log.tsv", "replay.ini", "--output-dir", "r"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("policy,matches,clicks,ctr,"));
    assert_eq!(stdout.lines().count(), 3);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("r/replay.csv")).unwrap(),
        stdout
    );
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["static_bernoulli.ini", "scenario_a.ini", "custom_logistic.ini"] {
        sirbandit::harness::ExperimentConfig::from_file(&root.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    sirbandit::harness::ReplayConfig::from_file(&root.join("replay.ini")).unwrap();
    let text = std::fs::read_to_string(root.join("gen_log.ini")).unwrap();
    sirbandit::harness::synthetic_log_config(&text).unwrap();
}
