//! Offline evaluation on logged interactions by rejection replay.
//!
//! A log line records the context shown, the arm the logging policy displayed
//! (chosen uniformly at random) and the binary reward. The evaluated policy
//! picks an arm for the same context; only rounds where it agrees with the
//! logged arm count, and only those rewards are fed back to it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::{ConfigDocument, PolicyChoice, PolicyConfig, Section};
use crate::distributions::{standard_normal, RngStream};
use crate::dynamics::{DynamicsSpec, DEFAULT_JITTER};
use crate::environments::{ContextSource, EnvironmentSpec, InitialParams};
use crate::error::{Error, Result};
use crate::policies::{Policy, PolicySettings};
use crate::reward_models::{sigmoid, RewardModel};
use crate::smc::ResamplingScheme;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub round: u64,
    pub arm: usize,
    pub reward: f64,
    pub context: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionLog {
    pub arms: usize,
    pub dim: usize,
    pub records: Vec<LogRecord>,
}

impl InteractionLog {
    pub fn write_to<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "#arms={} dim={}", self.arms, self.dim)?;
        let mut line = String::new();
        for r in &self.records {
            line.clear();
            let _ = write!(line, "{}\t{}\t{}", r.round, r.arm, r.reward);
            for v in &r.context {
                let _ = write!(line, "\t{v}");
            }
            writeln!(w, "{line}")?;
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.write_to(f)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::config("log", "empty log"))?
            .map_err(Error::from)?;
        let (arms, dim) = parse_header(&header)?;
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let field = || format!("log.line {}", i + 2);
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 + dim {
                return Err(Error::config(
                    field(),
                    format!("expected {} columns, got {}", 3 + dim, cols.len()),
                ));
            }
            let bad = |c: &str| Error::config(field(), format!("cannot parse `{c}`"));
            let round = cols[0].parse().map_err(|_| bad(cols[0]))?;
            let arm: usize = cols[1].parse().map_err(|_| bad(cols[1]))?;
            if arm >= arms {
                return Err(Error::config(
                    field(),
                    format!("arm {arm} out of range for {arms} arms"),
                ));
            }
            let reward: f64 = cols[2].parse().map_err(|_| bad(cols[2]))?;
            if reward != 0.0 && reward != 1.0 {
                return Err(Error::config(field(), "reward must be 0 or 1"));
            }
            let context = cols[3..]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|_| bad(c)))
                .collect::<Result<Vec<_>>>()?;
            records.push(LogRecord {
                round,
                arm,
                reward,
                context,
            });
        }
        Ok(Self { arms, dim, records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::read_from(BufReader::new(f))
    }
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| Error::config("log.header", "expected `#arms=A dim=d`"))?;
    let mut arms = None;
    let mut dim = None;
    for part in body.split_whitespace() {
        match part.split_once('=') {
            Some(("arms", v)) => arms = v.parse().ok(),
            Some(("dim", v)) => dim = v.parse().ok(),
            _ => {}
        }
    }
    match (arms, dim) {
        (Some(a), Some(d)) if a > 0 && d > 0 => Ok((a, d)),
        _ => Err(Error::config(
            "log.header",
            "expected `#arms=A dim=d` with positive values",
        )),
    }
}

/// Generator settings for a synthetic logistic log.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLogSpec {
    pub arms: usize,
    pub dim: usize,
    pub records: usize,
    /// Standard deviation of each true parameter coordinate.
    pub param_scale: f64,
    pub seed: u64,
}

impl SyntheticLogSpec {
    pub fn validate(&self) -> Result<()> {
        if self.arms == 0 {
            return Err(Error::config("log.arms", "must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::config("log.dim", "must be at least 1"));
        }
        if !(self.param_scale > 0.0 && self.param_scale.is_finite()) {
            return Err(Error::config("log.scale", "must be positive"));
        }
        Ok(())
    }
}

/// Records with standard normal contexts, a uniformly displayed arm and a
/// logistic reward under `thetas[arm]`.
pub fn generate_log(thetas: &[Vec<f64>], records: usize, rng: &mut RngStream) -> Result<InteractionLog> {
    let arms = thetas.len();
    let dim = thetas.first().map_or(0, |t| t.len());
    if arms == 0 || dim == 0 || thetas.iter().any(|t| t.len() != dim) {
        return Err(Error::contract(
            "need at least one arm and equal-length nonempty parameters",
        ));
    }
    let mut out = Vec::with_capacity(records);
    for round in 0..records {
        let context: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        let arm = rng.index(arms);
        let z: f64 = thetas[arm].iter().zip(&context).map(|(a, b)| a * b).sum();
        let reward = if rng.uniform() < sigmoid(z) { 1.0 } else { 0.0 };
        out.push(LogRecord {
            round: round as u64 + 1,
            arm,
            reward,
            context,
        });
    }
    Ok(InteractionLog {
        arms,
        dim,
        records: out,
    })
}

/// Draws true parameters from N(0, scale²I), then a log from them. Returns
/// the log and the parameters.
pub fn generate_synthetic_log(spec: &SyntheticLogSpec) -> Result<(InteractionLog, Vec<Vec<f64>>)> {
    spec.validate()?;
    let root = RngStream::new(spec.seed);
    let mut param_rng = root.derive(1);
    let thetas: Vec<Vec<f64>> = (0..spec.arms)
        .map(|_| {
            (0..spec.dim)
                .map(|_| spec.param_scale * standard_normal(&mut param_rng))
                .collect()
        })
        .collect();
    let log = generate_log(&thetas, spec.records, &mut root.derive(2))?;
    Ok((log, thetas))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayResult {
    pub policy: String,
    pub matches: u64,
    pub clicks: f64,
    pub baseline_matches: u64,
    pub baseline_clicks: f64,
}

impl ReplayResult {
    /// Click-through rate over matched rounds; NaN with no matches.
    pub fn ctr(&self) -> f64 {
        self.clicks / self.matches as f64
    }

    pub fn baseline_ctr(&self) -> f64 {
        self.baseline_clicks / self.baseline_matches as f64
    }

    /// Policy CTR divided by the uniform baseline's CTR.
    pub fn normalized_ctr(&self) -> f64 {
        self.ctr() / self.baseline_ctr()
    }
}

/// Replays `log` against `policy`, alongside a uniform random baseline
/// drawing from `baseline_rng`.
pub fn replay_evaluate(
    log: &InteractionLog,
    name: &str,
    policy: &mut Policy,
    baseline_rng: &mut RngStream,
) -> Result<ReplayResult> {
    if policy.arm_count() != log.arms {
        return Err(Error::contract(format!(
            "policy has {} arms, log has {}",
            policy.arm_count(),
            log.arms
        )));
    }
    let mut out = ReplayResult {
        policy: name.to_string(),
        matches: 0,
        clicks: 0.0,
        baseline_matches: 0,
        baseline_clicks: 0.0,
    };
    for r in &log.records {
        if baseline_rng.index(log.arms) == r.arm {
            out.baseline_matches += 1;
            out.baseline_clicks += r.reward;
        }
        let arm = policy.select(&r.context)?;
        if arm == r.arm {
            out.matches += 1;
            out.clicks += r.reward;
            policy.update(arm, &r.context, r.reward)?;
        }
    }
    Ok(out)
}

/// Settings for the `replay` command.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    pub seed: u64,
    pub particles: usize,
    pub resampling: ResamplingScheme,
    pub policies: Vec<PolicyConfig>,
    pub output_dir: Option<PathBuf>,
}

impl ReplayConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let doc = ConfigDocument::parse(text)?;
        let empty = BTreeMap::new();
        let exp = Section::new("experiment", doc.section("experiment").unwrap_or(&empty));
        exp.only(&["seed", "particles", "resampling", "output_dir"])?;
        let resampling = match exp.str("resampling") {
            None | Some("multinomial") => ResamplingScheme::Multinomial,
            Some("systematic") => ResamplingScheme::Systematic,
            Some(other) => {
                return Err(Error::config(
                    "experiment.resampling",
                    format!("unknown scheme `{other}`"),
                ))
            }
        };
        let mut policies = Vec::new();
        for (name, map) in &doc.sections {
            match name.strip_prefix("policy.") {
                Some(p) => {
                    let mut pc = super::config::policy_from(p, &Section::new(name, map))?;
                    if pc.choice == PolicyChoice::Oracle {
                        return Err(Error::config(
                            format!("{name}.kind"),
                            "no oracle exists for logged data",
                        ));
                    }
                    // A static particle cloud never moves, so particle kinds
                    // default to a small jitter here.
                    if !map.contains_key("dynamics") {
                        if let PolicyChoice::Policy(k) = pc.choice {
                            if k.is_smc() {
                                pc.dynamics = super::config::AssumedDynamics::StaticJitter(
                                    Section::new(name, map).parse("jitter")?.unwrap_or(DEFAULT_JITTER),
                                );
                            }
                        }
                    }
                    policies.push(pc);
                }
                None if name == "experiment" => {}
                None => return Err(Error::config(name.as_str(), "unknown section")),
            }
        }
        let cfg = Self {
            seed: exp.parse("seed")?.unwrap_or(0),
            particles: exp.parse("particles")?.unwrap_or(1000),
            resampling,
            policies,
            output_dir: exp.str("output_dir").map(PathBuf::from),
        };
        if cfg.particles == 0 {
            return Err(Error::config("experiment.particles", "must be at least 1"));
        }
        if cfg.policies.is_empty() {
            return Err(Error::config(
                "policy",
                "at least one [policy.NAME] section is required",
            ));
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Evaluates every configured policy on `log`, in config order.
pub fn replay_all(log: &InteractionLog, cfg: &ReplayConfig) -> Result<Vec<ReplayResult>> {
    let model = RewardModel::Logistic { dim: log.dim };
    let env = EnvironmentSpec {
        name: "log".into(),
        model: model.clone(),
        dynamics: vec![DynamicsSpec::Static; log.arms],
        initial: InitialParams::StandardNormal,
        context: ContextSource::standard_gaussian(log.dim),
    };
    let root = RngStream::new(cfg.seed);
    let mut out = Vec::with_capacity(cfg.policies.len());
    for (i, p) in cfg.policies.iter().enumerate() {
        let PolicyChoice::Policy(kind) = p.choice else {
            unreachable!()
        };
        let settings = PolicySettings {
            particles: p.particles.unwrap_or(cfg.particles),
            alpha: p.alpha,
            resampling: cfg.resampling,
        };
        let mut policy = Policy::new(
            kind,
            settings,
            model.clone(),
            &p.dynamics.resolve(&env),
            root.derive(1000 + i as u64),
        )?;
        let mut baseline = root.derive(7);
        out.push(replay_evaluate(log, &p.name, &mut policy, &mut baseline)?);
    }
    Ok(out)
}

pub fn write_replay_csv<W: Write>(results: &[ReplayResult], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "policy,matches,clicks,ctr,baseline_matches,baseline_ctr,normalized_ctr"
    )?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.policy,
            r.matches,
            r.clicks,
            r.ctr(),
            r.baseline_matches,
            r.baseline_ctr(),
            r.normalized_ctr()
        )?;
    }
    w.flush()
}

/// Reads the `[log]` section of a `gen-log` config. Returns the spec and the
/// output path.
pub fn synthetic_log_config(text: &str) -> Result<(SyntheticLogSpec, PathBuf)> {
    let doc = ConfigDocument::parse(text)?;
    let map = doc
        .section("log")
        .ok_or_else(|| Error::config("log", "missing [log] section"))?;
    let s = Section::new("log", map);
    s.only(&["arms", "dim", "records", "scale", "seed", "output"])?;
    let spec = SyntheticLogSpec {
        arms: s.require("arms")?,
        dim: s.require("dim")?,
        records: s.require("records")?,
        param_scale: s.parse("scale")?.unwrap_or(1.0),
        seed: s.parse("seed")?.unwrap_or(0),
    };
    spec.validate()?;
    let output = PathBuf::from(s.str("output").unwrap_or("interactions.tsv"));
    Ok((spec, output))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::{AlphaSchedule, PolicyKind};

    fn small_log() -> InteractionLog {
        InteractionLog {
            arms: 2,
            dim: 1,
            records: vec![
                LogRecord {
                    round: 1,
                    arm: 0,
                    reward: 1.0,
                    context: vec![0.5],
                },
                LogRecord {
                    round: 2,
                    arm: 1,
                    reward: 0.0,
                    context: vec![-1.0],
                },
                LogRecord {
                    round: 3,
                    arm: 1,
                    reward: 1.0,
                    context: vec![2.0],
                },
            ],
        }
    }

    #[test]
    fn log_round_trip() {
        let log = small_log();
        let mut buf = Vec::new();
        log.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#arms=2 dim=1\n1\t0\t1\t0.5\n"));
        assert_eq!(InteractionLog::read_from(&buf[..]).unwrap(), log);
    }

    #[test]
    fn malformed_logs() {
        let bad = |s: &str| InteractionLog::read_from(s.as_bytes()).unwrap_err();
        assert!(matches!(bad(""), Error::Config { .. }));
        assert!(matches!(bad("arms=2 dim=1\n"), Error::Config { .. }));
        match bad("#arms=2 dim=1\n1\t5\t1\t0.5\n") {
            Error::Config { field, .. } => assert_eq!(field, "log.line 2"),
            e => panic!("{e:?}"),
        }
        assert!(matches!(bad("#arms=2 dim=1\n1\t0\t0.5\t0.5\n"), Error::Config { .. }));
        assert!(matches!(bad("#arms=2 dim=2\n1\t0\t1\t0.5\n"), Error::Config { .. }));
    }

    // Uniform random over a single arm always picks arm 0.
    fn one_arm_policy() -> Policy {
        Policy::new(
            PolicyKind::UniformRandom,
            PolicySettings::default(),
            RewardModel::Logistic { dim: 1 },
            &[DynamicsSpec::Static],
            RngStream::new(0),
        )
        .unwrap()
    }

    #[test]
    fn arm_count_mismatch_is_rejected() {
        let mut p = one_arm_policy();
        let err = replay_evaluate(&small_log(), "p", &mut p, &mut RngStream::new(1)).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn counts_only_matching_rounds() {
        let mut log = small_log();
        log.arms = 1;
        for r in &mut log.records {
            r.arm = 0;
        }
        let mut p = one_arm_policy();
        let res = replay_evaluate(&log, "p", &mut p, &mut RngStream::new(1)).unwrap();
        assert_eq!(res.matches, 3);
        assert_eq!(res.clicks, 2.0);
        assert_eq!(res.baseline_matches, 3);
        assert!((res.normalized_ctr() - 1.0).abs() < 1e-15);
        assert_eq!(p.plays(), &[3]);
    }

    #[test]
    fn zero_matches_give_nan_ctr() {
        let r = ReplayResult {
            policy: "p".into(),
            matches: 0,
            clicks: 0.0,
            baseline_matches: 1,
            baseline_clicks: 1.0,
        };
        assert!(r.ctr().is_nan());
    }

    #[test]
    fn synthetic_log_statistics() {
        let spec = SyntheticLogSpec {
            arms: 4,
            dim: 3,
            records: 40_000,
            param_scale: 1.0,
            seed: 5,
        };
        let (log, thetas) = generate_synthetic_log(&spec).unwrap();
        assert_eq!(log.records.len(), 40_000);
        assert_eq!(thetas.len(), 4);
        let mut counts = [0usize; 4];
        for r in &log.records {
            counts[r.arm] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 5.0 * 10_000f64.sqrt() * 0.9);
        }
        // Mean reward matches the mean logistic probability.
        let expected: f64 = log
            .records
            .iter()
            .map(|r| sigmoid(thetas[r.arm].iter().zip(&r.context).map(|(a, b)| a * b).sum()))
            .sum::<f64>()
            / 40_000.0;
        let observed = log.records.iter().map(|r| r.reward).sum::<f64>() / 40_000.0;
        assert!((observed - expected).abs() < 4.0 * (0.25 / 40_000f64).sqrt());
        let again = generate_synthetic_log(&spec).unwrap();
        assert_eq!(again.0, log);
    }

    #[test]
    fn replay_config_defaults_particle_kinds_to_jitter() {
        let cfg = ReplayConfig::parse("[experiment]\nseed = 4\nparticles = 300\n[policy.ts]\nkind = thompson_smc\n[policy.u]\nkind = uniform_random\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.particles, 300);
        assert_eq!(
            cfg.policies[0].dynamics,
            super::super::config::AssumedDynamics::StaticJitter(DEFAULT_JITTER)
        );
        assert_eq!(cfg.policies[1].alpha, AlphaSchedule::InverseT);
        assert!(ReplayConfig::parse("[policy.o]\nkind = oracle\n").is_err());
    }

    #[test]
    fn learning_policy_beats_uniform_on_easy_log() {
        let spec = SyntheticLogSpec {
            arms: 3,
            dim: 2,
            records: 15_000,
            param_scale: 2.0,
            seed: 9,
        };
        let (log, _) = generate_synthetic_log(&spec).unwrap();
        let cfg = ReplayConfig::parse(
            "[experiment]\nparticles = 300\n[policy.ts]\nkind = thompson_smc\n[policy.u]\nkind = uniform_random\n",
        )
        .unwrap();
        let res = replay_all(&log, &cfg).unwrap();
        assert!(res[0].normalized_ctr() > 1.2, "{:?}", res[0]);
        assert!((res[1].normalized_ctr() - 1.0).abs() < 0.1, "{:?}", res[1]);
        let mut csv = Vec::new();
        write_replay_csv(&res, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
    }

    #[test]
    fn zero_parameters_click_half_the_time() {
        let log = generate_log(&vec![vec![0.0; 3]; 5], 20_000, &mut RngStream::new(2)).unwrap();
        let ctr = log.records.iter().map(|r| r.reward).sum::<f64>() / 20_000.0;
        assert!((ctr - 0.5).abs() < 4.0 * (0.25f64 / 20_000.0).sqrt());
    }

    #[test]
    fn uniform_policy_matches_one_in_a() {
        let arms = 5;
        let n = 20_000;
        let log = generate_log(&vec![vec![0.3, -0.2]; arms], n, &mut RngStream::new(3)).unwrap();
        let mut policy = Policy::new(
            PolicyKind::UniformRandom,
            PolicySettings::default(),
            RewardModel::Logistic { dim: 2 },
            &vec![DynamicsSpec::Static; arms],
            RngStream::new(4),
        )
        .unwrap();
        let res = replay_evaluate(&log, "u", &mut policy, &mut RngStream::new(5)).unwrap();
        let p = 1.0 / arms as f64;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((res.matches as f64 - n as f64 * p).abs() < 4.0 * sd, "{res:?}");
        assert!((res.baseline_matches as f64 - n as f64 * p).abs() < 4.0 * sd, "{res:?}");
    }

    #[test]
    fn gen_log_config() {
        let (spec, out) =
            synthetic_log_config("[log]\narms = 20\ndim = 6\nrecords = 100\nseed = 3\noutput = x.tsv\n").unwrap();
        assert_eq!((spec.arms, spec.dim, spec.records, spec.seed), (20, 6, 100, 3));
        assert_eq!(out, PathBuf::from("x.tsv"));
        assert!(synthetic_log_config("[log]\narms = 0\ndim = 1\nrecords = 1\n").is_err());
    }
}
