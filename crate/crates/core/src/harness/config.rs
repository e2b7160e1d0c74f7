//! Experiment configuration files.
//!
//! The format is a flat key/value text with `[section]` headers:
//!
//! ```text
//! [experiment]
//! scenario = static_bernoulli
//! horizon = 500
//! realizations = 100
//! particles = 1000
//! seed = 7
//!
//! [arm.0]
//! theta = 0.4
//!
//! [policy.ts]
//! kind = thompson_smc
//! dynamics = static
//! ```
//!
//! Matrices are row-major comma lists. `#` and `;` start comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::distributions::SpdMatrix;
use crate::dynamics::{DynamicsSpec, DEFAULT_JITTER};
use crate::environments::{scenario_catalog, ContextSource, EnvironmentSpec, InitialParams};
use crate::error::{Error, Result};
use crate::policies::{AlphaSchedule, PolicyKind};
use crate::reward_models::RewardModel;
use crate::smc::ResamplingScheme;

/// Parsed sections in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigDocument {
    pub sections: Vec<(String, BTreeMap<String, String>)>,
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = ConfigDocument::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::config(format!("line {}", lineno + 1), "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(Error::config(format!("line {}", lineno + 1), "empty section name"));
                }
                if doc.sections.iter().any(|(n, _)| n == name) {
                    return Err(Error::config(name, "section defined twice"));
                }
                doc.sections.push((name.to_string(), BTreeMap::new()));
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", lineno + 1), "expected `key = value`"))?;
            let Some((section, map)) = doc.sections.last_mut() else {
                return Err(Error::config(
                    format!("line {}", lineno + 1),
                    "key outside of any section",
                ));
            };
            let key = key.trim().to_string();
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::config(format!("{section}.{key}"), "key given twice"));
            }
        }
        Ok(doc)
    }

    pub fn section(&self, name: &str) -> Option<&BTreeMap<String, String>> {
        self.sections.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

/// Typed access to one section, reporting errors with `section.key` paths.
pub(crate) struct Section<'a> {
    name: &'a str,
    map: &'a BTreeMap<String, String>,
}

impl<'a> Section<'a> {
    pub(crate) fn new(name: &'a str, map: &'a BTreeMap<String, String>) -> Self {
        Self { name, map }
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    pub(crate) fn only(&self, allowed: &[&str]) -> Result<()> {
        for key in self.map.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::config(self.path(key), "unknown key"));
            }
        }
        Ok(())
    }

    pub(crate) fn str(&self, key: &str) -> Option<&'a str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub(crate) fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(self.path(key), format!("cannot parse `{v}`"))),
        }
    }

    pub(crate) fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => parse_list(v).map(Some).map_err(|m| Error::config(self.path(key), m)),
        }
    }

    pub(crate) fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.parse(key)?.ok_or_else(|| Error::config(self.path(key), "missing"))
    }
}

pub(crate) fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("cannot parse `{}` as a number", s.trim()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegretMode {
    #[default]
    Pseudo,
    Realized,
}

/// Transition kernel a policy assumes for every arm.
#[derive(Debug, Clone, PartialEq)]
pub enum AssumedDynamics {
    Static,
    StaticJitter(f64),
    /// The environment's true dynamics.
    Known,
    UnknownLinear,
}

impl AssumedDynamics {
    pub fn resolve(&self, env: &EnvironmentSpec) -> Vec<DynamicsSpec> {
        let dim = env.model.param_dim();
        env.dynamics
            .iter()
            .map(|truth| match self {
                AssumedDynamics::Static => DynamicsSpec::Static,
                AssumedDynamics::StaticJitter(s) => DynamicsSpec::StaticJitter { sigma: *s },
                AssumedDynamics::Known => truth.clone(),
                AssumedDynamics::UnknownLinear => DynamicsSpec::unknown_default(dim),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyChoice {
    Policy(PolicyKind),
    /// Always plays the arm with the largest true mean.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub name: String,
    pub choice: PolicyChoice,
    pub dynamics: AssumedDynamics,
    pub alpha: AlphaSchedule,
    pub particles: Option<usize>,
}

impl PolicyConfig {
    pub fn new(name: &str, kind: PolicyKind, dynamics: AssumedDynamics) -> Self {
        Self {
            name: name.into(),
            choice: PolicyChoice::Policy(kind),
            dynamics,
            alpha: AlphaSchedule::InverseT,
            particles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub policies: Vec<PolicyConfig>,
    pub horizon: usize,
    pub realizations: usize,
    pub particles: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub regret_mode: RegretMode,
    pub jobs: usize,
    pub resampling: ResamplingScheme,
    /// Also write the per-realization CSV.
    pub raw_output: bool,
}

/// Command-line overrides of config fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub realizations: Option<usize>,
    pub particles: Option<usize>,
    pub horizon: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(environment: EnvironmentSpec, policies: Vec<PolicyConfig>) -> Self {
        Self {
            environment,
            policies,
            horizon: 1000,
            realizations: 100,
            particles: 1000,
            seed: 0,
            output_dir: PathBuf::from("output"),
            regret_mode: RegretMode::Pseudo,
            jobs: 1,
            resampling: ResamplingScheme::Multinomial,
            raw_output: true,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc = ConfigDocument::parse(text)?;
        Self::from_document(&doc)
    }

    pub fn from_document(doc: &ConfigDocument) -> Result<Self> {
        for (name, _) in &doc.sections {
            let known = name == "experiment"
                || name == "environment"
                || name == "log"
                || name.starts_with("arm.")
                || name.starts_with("policy.");
            if !known {
                return Err(Error::config(name.as_str(), "unknown section"));
            }
        }
        let empty = BTreeMap::new();
        let exp = Section::new("experiment", doc.section("experiment").unwrap_or(&empty));
        exp.only(&[
            "scenario",
            "horizon",
            "realizations",
            "particles",
            "seed",
            "output_dir",
            "regret",
            "jobs",
            "resampling",
            "raw_output",
        ])?;
        let environment = environment_from(doc, exp.str("scenario"))?;
        let mut cfg = ExperimentConfig::new(environment, Vec::new());
        if let Some(v) = exp.parse("horizon")? {
            cfg.horizon = v;
        }
        if let Some(v) = exp.parse("realizations")? {
            cfg.realizations = v;
        }
        if let Some(v) = exp.parse("particles")? {
            cfg.particles = v;
        }
        if let Some(v) = exp.parse("seed")? {
            cfg.seed = v;
        }
        if let Some(v) = exp.str("output_dir") {
            cfg.output_dir = PathBuf::from(v);
        }
        if let Some(v) = exp.parse("jobs")? {
            cfg.jobs = v;
        }
        if let Some(v) = exp.parse("raw_output")? {
            cfg.raw_output = v;
        }
        cfg.regret_mode = match exp.str("regret") {
            None | Some("pseudo") => RegretMode::Pseudo,
            Some("realized") => RegretMode::Realized,
            Some(other) => return Err(Error::config("experiment.regret", format!("unknown mode `{other}`"))),
        };
        cfg.resampling = match exp.str("resampling") {
            None | Some("multinomial") => ResamplingScheme::Multinomial,
            Some("systematic") => ResamplingScheme::Systematic,
            Some(other) => {
                return Err(Error::config(
                    "experiment.resampling",
                    format!("unknown scheme `{other}`"),
                ))
            }
        };
        for (name, map) in &doc.sections {
            if let Some(policy) = name.strip_prefix("policy.") {
                cfg.policies.push(policy_from(policy, &Section::new(name, map))?);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.realizations {
            self.realizations = v;
        }
        if let Some(v) = o.particles {
            self.particles = v;
        }
        if let Some(v) = o.horizon {
            self.horizon = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = o.jobs {
            self.jobs = v;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("experiment.horizon", "must be at least 1"));
        }
        if self.realizations == 0 {
            return Err(Error::config("experiment.realizations", "must be at least 1"));
        }
        if self.particles == 0 {
            return Err(Error::config("experiment.particles", "must be at least 1"));
        }
        if self.jobs == 0 {
            return Err(Error::config("experiment.jobs", "must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(Error::config(
                "policy",
                "at least one [policy.NAME] section is required",
            ));
        }
        for p in &self.policies {
            if p.particles == Some(0) {
                return Err(Error::config(
                    format!("policy.{}.particles", p.name),
                    "must be at least 1",
                ));
            }
            if let PolicyChoice::Policy(kind) = p.choice {
                if kind.is_exact()
                    && p.dynamics
                        .resolve(&self.environment)
                        .iter()
                        .any(|d| *d != DynamicsSpec::Static)
                {
                    return Err(Error::config(
                        format!("policy.{}.dynamics", p.name),
                        "exact policies only support static dynamics",
                    ));
                }
            }
        }
        self.environment.validate()
    }
}

pub(crate) fn policy_from(name: &str, s: &Section) -> Result<PolicyConfig> {
    s.only(&["kind", "dynamics", "jitter", "alpha", "particles"])?;
    let kind: String = s.require("kind")?;
    let choice = if kind == "oracle" {
        PolicyChoice::Oracle
    } else {
        PolicyChoice::Policy(
            PolicyKind::parse(&kind)
                .ok_or_else(|| Error::config(s.path("kind"), format!("unknown policy `{kind}`")))?,
        )
    };
    let jitter = s.parse("jitter")?.unwrap_or(DEFAULT_JITTER);
    let dynamics = match s.str("dynamics") {
        None | Some("known") => AssumedDynamics::Known,
        Some("static") => AssumedDynamics::Static,
        Some("static_jitter") => AssumedDynamics::StaticJitter(jitter),
        Some("unknown_linear") => AssumedDynamics::UnknownLinear,
        Some(other) => return Err(Error::config(s.path("dynamics"), format!("unknown dynamics `{other}`"))),
    };
    let alpha = match s.str("alpha") {
        None | Some("inverse_t") => AlphaSchedule::InverseT,
        Some(v) => {
            let a: f64 = v
                .parse()
                .map_err(|_| Error::config(s.path("alpha"), format!("cannot parse `{v}`")))?;
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::config(s.path("alpha"), "must lie in (0, 1)"));
            }
            AlphaSchedule::Constant(a)
        }
    };
    Ok(PolicyConfig {
        name: name.to_string(),
        choice,
        dynamics,
        alpha,
        particles: s.parse("particles")?,
    })
}

fn parse_model(s: &Section, current: Option<&RewardModel>) -> Result<Option<RewardModel>> {
    let dim: Option<usize> = s.parse("dim")?;
    let dim = dim.or(current.map(|m| m.context_dim()));
    let noise: Option<f64> = s.parse("noise_variance")?;
    let Some(kind) = s.str("reward") else {
        return Ok(None);
    };
    let need_dim = || dim.ok_or_else(|| Error::config(s.path("dim"), "missing"));
    let model = match kind {
        "bernoulli" => RewardModel::Bernoulli,
        "linear_gaussian" => RewardModel::LinearGaussian {
            dim: need_dim()?,
            noise_variance: Some(noise.unwrap_or(1.0)),
        },
        "logistic" => RewardModel::Logistic { dim: need_dim()? },
        "categorical" => RewardModel::CategoricalSoftmax {
            dim: need_dim()?,
            categories: s.require("categories")?,
        },
        other => {
            return Err(Error::config(
                s.path("reward"),
                format!("unknown reward model `{other}`"),
            ))
        }
    };
    Ok(Some(model))
}

fn parse_context(s: &Section, dim: usize) -> Result<Option<ContextSource>> {
    let Some(v) = s.str("context") else {
        return Ok(None);
    };
    let (kind, args) = v.split_once(':').unwrap_or((v, ""));
    let ctx = match kind.trim() {
        "constant" => {
            if args.trim().is_empty() {
                ContextSource::Constant(vec![1.0; dim])
            } else {
                ContextSource::Constant(parse_list(args).map_err(|m| Error::config(s.path("context"), m))?)
            }
        }
        "gaussian" => ContextSource::standard_gaussian(dim),
        "uniform" => {
            let b = parse_list(args).map_err(|m| Error::config(s.path("context"), m))?;
            if b.len() != 2 {
                return Err(Error::config(s.path("context"), "uniform needs `uniform:lo,hi`"));
            }
            ContextSource::UniformIid {
                dim,
                lo: b[0],
                hi: b[1],
            }
        }
        other => {
            return Err(Error::config(
                s.path("context"),
                format!("unknown context source `{other}`"),
            ))
        }
    };
    Ok(Some(ctx))
}

fn square_matrix(s: &Section, key: &str, dim: usize) -> Result<Option<Vec<f64>>> {
    match s.list(key)? {
        None => Ok(None),
        Some(v) if v.len() == 1 => {
            let mut m = vec![0.0; dim * dim];
            for i in 0..dim {
                m[i * dim + i] = v[0];
            }
            Ok(Some(m))
        }
        Some(v) if v.len() == dim * dim => Ok(Some(v)),
        Some(v) => Err(Error::config(
            s.path(key),
            format!("expected 1 or {} values, got {}", dim * dim, v.len()),
        )),
    }
}

fn arm_dynamics(s: &Section, dim: usize, current: Option<&DynamicsSpec>) -> Result<Option<DynamicsSpec>> {
    let kind = match s.str("dynamics") {
        Some(k) => k,
        None => return Ok(None),
    };
    let spec = match kind {
        "static" => DynamicsSpec::Static,
        "static_jitter" => DynamicsSpec::StaticJitter {
            sigma: s.parse("jitter")?.unwrap_or(DEFAULT_JITTER),
        },
        "known_linear" => {
            let (cur_l, cur_n) = match current {
                Some(DynamicsSpec::KnownLinear { transition, noise }) => {
                    (Some(transition.clone()), Some(noise.as_slice().to_vec()))
                }
                _ => (None, None),
            };
            let transition = square_matrix(s, "transition", dim)?
                .or(cur_l)
                .ok_or_else(|| Error::config(s.path("transition"), "missing"))?;
            let noise = square_matrix(s, "noise", dim)?
                .or(cur_n)
                .ok_or_else(|| Error::config(s.path("noise"), "missing"))?;
            let noise = SpdMatrix::new(dim, noise).map_err(|e| Error::config(s.path("noise"), e.to_string()))?;
            DynamicsSpec::KnownLinear { transition, noise }
        }
        other => return Err(Error::config(s.path("dynamics"), format!("unknown dynamics `{other}`"))),
    };
    Ok(Some(spec))
}

/// Builds the environment from a catalog scenario and/or inline sections.
fn environment_from(doc: &ConfigDocument, scenario: Option<&str>) -> Result<EnvironmentSpec> {
    let empty = BTreeMap::new();
    let env = Section::new("environment", doc.section("environment").unwrap_or(&empty));
    env.only(&[
        "reward",
        "dim",
        "categories",
        "noise_variance",
        "context",
        "arms",
        "initial",
    ])?;

    let mut spec = match scenario {
        Some(name) => scenario_catalog(name).map_err(|e| match e {
            Error::Config { message, .. } => Error::config("experiment.scenario", message),
            other => other,
        })?,
        None => {
            let model = parse_model(&env, None)?
                .ok_or_else(|| Error::config("environment.reward", "missing (or set experiment.scenario)"))?;
            let arms: usize = env.require("arms")?;
            let cdim = model.context_dim();
            EnvironmentSpec {
                name: "custom".into(),
                model,
                dynamics: vec![DynamicsSpec::Static; arms],
                initial: InitialParams::StandardNormal,
                context: ContextSource::Constant(vec![1.0; cdim]),
            }
        }
    };
    if scenario.is_some() {
        if let Some(model) = parse_model(&env, Some(&spec.model))? {
            if model.param_dim() != spec.model.param_dim() {
                return Err(Error::config(
                    "environment.reward",
                    "changes the scenario's parameter dimension",
                ));
            }
            spec.model = model;
        } else if let Some(v) = env.parse::<f64>("noise_variance")? {
            match &mut spec.model {
                RewardModel::LinearGaussian { noise_variance, .. } => *noise_variance = Some(v),
                _ => {
                    return Err(Error::config(
                        "environment.noise_variance",
                        "only for linear-Gaussian rewards",
                    ))
                }
            }
        }
        if env.str("arms").is_some() {
            return Err(Error::config("environment.arms", "fixed by the scenario"));
        }
    }
    if let Some(ctx) = parse_context(&env, spec.model.context_dim())? {
        spec.context = ctx;
    }
    match env.str("initial") {
        None => {}
        Some("random") => spec.initial = InitialParams::StandardNormal,
        Some(other) => return Err(Error::config("environment.initial", format!("unknown value `{other}`"))),
    }

    let dim = spec.model.param_dim();
    let mut pinned: Vec<Option<Vec<f64>>> = vec![None; spec.arm_count()];
    for (name, map) in &doc.sections {
        let Some(idx) = name.strip_prefix("arm.") else { continue };
        let s = Section::new(name, map);
        s.only(&["theta", "dynamics", "transition", "noise", "jitter"])?;
        let a: usize = idx
            .parse()
            .map_err(|_| Error::config(name.as_str(), "arm sections are named arm.0, arm.1, ..."))?;
        if a >= spec.arm_count() {
            return Err(Error::config(
                name.as_str(),
                format!("arm index beyond arm count {}", spec.arm_count()),
            ));
        }
        if let Some(d) = arm_dynamics(&s, dim, Some(&spec.dynamics[a]))? {
            spec.dynamics[a] = d;
        }
        if let Some(theta) = s.list("theta")? {
            pinned[a] = Some(theta);
        }
    }
    if pinned.iter().any(|p| p.is_some()) {
        let current = match &spec.initial {
            InitialParams::Fixed(v) => Some(v.clone()),
            InitialParams::StandardNormal => None,
        };
        let mut fixed = Vec::with_capacity(pinned.len());
        for (a, p) in pinned.into_iter().enumerate() {
            match (p, &current) {
                (Some(t), _) => fixed.push(t),
                (None, Some(cur)) => fixed.push(cur[a].clone()),
                (None, None) => {
                    return Err(Error::config(format!("arm.{a}.theta"), "pin either every arm or none"));
                }
            }
        }
        spec.initial = InitialParams::Fixed(fixed);
    }
    Ok(spec)
}
