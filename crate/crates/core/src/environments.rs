//! Ground-truth bandit simulators and the scenario catalog.

use crate::distributions::linalg::block_diagonal;
use crate::distributions::{sample_mvn_into, standard_normal, RngStream, SpdMatrix};
use crate::dynamics::{DynamicsSpec, TransitionKernel, TransitionStats};
use crate::error::{Error, Result};
use crate::reward_models::RewardModel;

pub const SCENARIO_NAMES: [&str; 7] = [
    "scenario_a",
    "scenario_b",
    "categorical_2arm",
    "categorical_3arm",
    "static_bernoulli",
    "static_linear_gaussian",
    "static_logistic",
];

/// Reward noise variance of the linear-Gaussian scenarios.
pub const SCENARIO_NOISE_VARIANCE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub enum ContextSource {
    Constant(Vec<f64>),
    GaussianIid { mean: Vec<f64>, cov: SpdMatrix },
    UniformIid { dim: usize, lo: f64, hi: f64 },
}

impl ContextSource {
    pub fn dim(&self) -> usize {
        match self {
            ContextSource::Constant(v) => v.len(),
            ContextSource::GaussianIid { mean, .. } => mean.len(),
            ContextSource::UniformIid { dim, .. } => *dim,
        }
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        ContextSource::GaussianIid {
            mean: vec![0.0; dim],
            cov: SpdMatrix::identity(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialParams {
    Fixed(Vec<Vec<f64>>),
    /// Each arm's θ*_0 drawn from N(0, I) once per realization.
    StandardNormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    pub name: String,
    pub model: RewardModel,
    /// True per-arm dynamics.
    pub dynamics: Vec<DynamicsSpec>,
    pub initial: InitialParams,
    pub context: ContextSource,
}

impl EnvironmentSpec {
    pub fn arm_count(&self) -> usize {
        self.dynamics.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.dynamics.is_empty() {
            return Err(Error::config("environment.arms", "need at least one arm"));
        }
        let dim = self.model.param_dim();
        for (a, d) in self.dynamics.iter().enumerate() {
            d.validate(dim).map_err(|e| match e {
                Error::Config { field, message } => Error::config(format!("arm.{a}.{field}"), message),
                other => other,
            })?;
        }
        if let InitialParams::Fixed(init) = &self.initial {
            if init.len() != self.arm_count() {
                return Err(Error::config(
                    "environment.initial",
                    "one parameter vector per arm required",
                ));
            }
            for (a, theta) in init.iter().enumerate() {
                if theta.len() != dim {
                    return Err(Error::config(
                        format!("arm.{a}.theta"),
                        format!("expected {dim} values, got {}", theta.len()),
                    ));
                }
                if matches!(self.model, RewardModel::Bernoulli) && !(0.0..=1.0).contains(&theta[0]) {
                    return Err(Error::config(
                        format!("arm.{a}.theta"),
                        "Bernoulli mean must lie in [0, 1]",
                    ));
                }
            }
        }
        if !matches!(self.model, RewardModel::Bernoulli) && self.context.dim() != self.model.context_dim() {
            return Err(Error::config(
                "environment.context",
                format!(
                    "context has dimension {}, model expects {}",
                    self.context.dim(),
                    self.model.context_dim()
                ),
            ));
        }
        if let ContextSource::UniformIid { lo, hi, .. } = self.context {
            if !(lo < hi) {
                return Err(Error::config("environment.context", "uniform bounds need lo < hi"));
            }
        }
        if let RewardModel::LinearGaussian {
            noise_variance: None, ..
        } = self.model
        {
            return Err(Error::config(
                "environment.noise_variance",
                "the simulator needs a noise variance",
            ));
        }
        Ok(())
    }
}

/// One round of interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: u64,
    pub context: Vec<f64>,
    /// True expected reward of every arm.
    pub means: Vec<f64>,
    pub arm: usize,
    pub reward: f64,
}

/// Index of the largest mean, first index on ties.
pub fn oracle_arm(means: &[f64]) -> usize {
    let mut best = 0;
    for (i, &m) in means.iter().enumerate() {
        if m > means[best] {
            best = i;
        }
    }
    best
}

/// A running restless bandit. Parameter evolution and context draws use one
/// random stream and reward draws another, so the θ* trajectory does not
/// depend on which arms are played.
#[derive(Debug, Clone)]
pub struct Environment {
    spec: EnvironmentSpec,
    theta: Vec<Vec<f64>>,
    kernels: Vec<TransitionKernel>,
    stats: Vec<TransitionStats>,
    evolve_rng: RngStream,
    reward_rng: RngStream,
    t: u64,
    context: Vec<f64>,
    means: Vec<f64>,
    in_round: bool,
    scratch: Vec<f64>,
    z: Vec<f64>,
}

impl Environment {
    pub fn new(spec: EnvironmentSpec, rng: &RngStream) -> Result<Self> {
        spec.validate()?;
        let dim = spec.model.param_dim();
        let mut evolve_rng = rng.derive(1);
        let reward_rng = rng.derive(2);
        let theta = match &spec.initial {
            InitialParams::Fixed(v) => v.clone(),
            InitialParams::StandardNormal => (0..spec.arm_count())
                .map(|_| (0..dim).map(|_| standard_normal(&mut evolve_rng)).collect())
                .collect(),
        };
        let kernels = spec
            .dynamics
            .iter()
            .map(|d| TransitionKernel::new(d, dim))
            .collect::<Result<Vec<_>>>()?;
        let stats = kernels.iter().map(|k| k.new_stats()).collect();
        let arms = spec.arm_count();
        let cdim = spec.context.dim();
        Ok(Self {
            spec,
            theta,
            kernels,
            stats,
            evolve_rng,
            reward_rng,
            t: 0,
            context: vec![0.0; cdim],
            means: vec![0.0; arms],
            in_round: false,
            scratch: vec![0.0; dim],
            z: vec![0.0; cdim],
        })
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn arm_count(&self) -> usize {
        self.spec.arm_count()
    }

    pub fn true_parameters(&self) -> &[Vec<f64>] {
        &self.theta
    }

    /// Advances every arm's θ*, draws the next context and computes all true
    /// expected rewards. Returns the round number.
    pub fn begin_round(&mut self) -> Result<u64> {
        if self.in_round {
            return Err(Error::contract("round already started"));
        }
        for a in 0..self.theta.len() {
            self.kernels[a].propagate_in_place(
                &mut self.theta[a],
                &mut self.stats[a],
                &mut self.evolve_rng,
                &mut self.scratch,
            )?;
        }
        match &self.spec.context {
            ContextSource::Constant(v) => self.context.copy_from_slice(v),
            ContextSource::GaussianIid { mean, cov } => sample_mvn_into(
                mean,
                cov.cholesky_factor(),
                &mut self.evolve_rng,
                &mut self.z,
                &mut self.context,
            ),
            ContextSource::UniformIid { lo, hi, .. } => {
                for c in &mut self.context {
                    *c = lo + (hi - lo) * self.evolve_rng.uniform();
                }
            }
        }
        let model = &self.spec.model;
        for (m, theta) in self.means.iter_mut().zip(&self.theta) {
            *m = model.expected_reward_unchecked(theta, &self.context);
        }
        self.t += 1;
        self.in_round = true;
        Ok(self.t)
    }

    pub fn context(&self) -> &[f64] {
        &self.context
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Reward of `arm` under the current round's parameters, without ending the round.
    pub fn sample_reward(&mut self, arm: usize) -> Result<f64> {
        if arm >= self.theta.len() {
            return Err(Error::contract(format!("arm {arm} out of range")));
        }
        if !self.in_round {
            return Err(Error::contract("no round in progress"));
        }
        self.spec
            .model
            .sample_reward(&self.theta[arm], &self.context, &mut self.reward_rng)
    }

    /// Plays `arm` in the current round and closes it.
    pub fn play(&mut self, arm: usize) -> Result<StepRecord> {
        let reward = self.sample_reward(arm)?;
        self.in_round = false;
        Ok(StepRecord {
            t: self.t,
            context: self.context.clone(),
            means: self.means.clone(),
            arm,
            reward,
        })
    }

    /// `begin_round` followed by `play`.
    pub fn step(&mut self, arm: usize) -> Result<StepRecord> {
        if arm >= self.theta.len() {
            return Err(Error::contract(format!("arm {arm} out of range")));
        }
        self.begin_round()?;
        self.play(arm)
    }
}

fn known(transition: &[f64], noise: f64, d: usize) -> DynamicsSpec {
    DynamicsSpec::KnownLinear {
        transition: transition.to_vec(),
        noise: SpdMatrix::scaled_identity(d, noise),
    }
}

const MIX_NEG: [f64; 4] = [0.9, -0.1, -0.1, 0.9];
const MIX_POS: [f64; 4] = [0.9, 0.1, 0.1, 0.9];
const HALF: [f64; 4] = [0.5, 0.0, 0.0, 0.5];

fn categorical(name: &str, mixes: &[[f64; 4]]) -> EnvironmentSpec {
    let c = 3;
    let d = 2;
    EnvironmentSpec {
        name: name.into(),
        model: RewardModel::CategoricalSoftmax { dim: d, categories: c },
        dynamics: mixes
            .iter()
            .map(|m| known(&block_diagonal(m, d, c), 0.1, c * d))
            .collect(),
        initial: InitialParams::StandardNormal,
        context: ContextSource::Constant(vec![1.0; d]),
    }
}

/// The named scenarios.
pub fn scenario_catalog(name: &str) -> Result<EnvironmentSpec> {
    let lg = RewardModel::LinearGaussian {
        dim: 2,
        noise_variance: Some(SCENARIO_NOISE_VARIANCE),
    };
    let spec = match name {
        "scenario_a" => EnvironmentSpec {
            name: name.into(),
            model: lg,
            dynamics: vec![known(&MIX_NEG, 0.1, 2), known(&MIX_POS, 0.1, 2)],
            initial: InitialParams::StandardNormal,
            context: ContextSource::Constant(vec![1.0; 2]),
        },
        "scenario_b" => EnvironmentSpec {
            name: name.into(),
            model: lg,
            dynamics: vec![known(&HALF, 0.1, 2), known(&MIX_POS, 0.1, 2)],
            initial: InitialParams::StandardNormal,
            context: ContextSource::Constant(vec![1.0; 2]),
        },
        "categorical_2arm" => categorical(name, &[MIX_NEG, MIX_POS]),
        "categorical_3arm" => categorical(name, &[MIX_NEG, MIX_POS, MIX_POS]),
        "static_bernoulli" => EnvironmentSpec {
            name: name.into(),
            model: RewardModel::Bernoulli,
            dynamics: vec![DynamicsSpec::Static; 2],
            initial: InitialParams::Fixed(vec![vec![0.4], vec![0.8]]),
            context: ContextSource::Constant(vec![1.0]),
        },
        "static_linear_gaussian" => EnvironmentSpec {
            name: name.into(),
            model: lg,
            dynamics: vec![DynamicsSpec::Static; 2],
            initial: InitialParams::Fixed(vec![vec![0.1, 0.2], vec![0.4, 0.3]]),
            context: ContextSource::Constant(vec![1.0; 2]),
        },
        "static_logistic" => EnvironmentSpec {
            name: name.into(),
            model: RewardModel::Logistic { dim: 2 },
            dynamics: vec![DynamicsSpec::Static; 2],
            initial: InitialParams::Fixed(vec![vec![-0.5, 0.2], vec![0.3, 0.4]]),
            context: ContextSource::Constant(vec![1.0; 2]),
        },
        _ => {
            return Err(Error::config(
                "environment.scenario",
                format!("unknown scenario `{name}`; known: {}", SCENARIO_NAMES.join(", ")),
            ))
        }
    };
    Ok(spec)
}

/// Replaces linear-Gaussian rewards of a scenario with logistic ones.
pub fn with_logistic_rewards(mut spec: EnvironmentSpec) -> EnvironmentSpec {
    let dim = spec.model.context_dim();
    spec.model = RewardModel::Logistic { dim };
    spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::symmetric_eigenvalues_2x2;
    use proptest::prelude::*;

    #[test]
    fn static_bernoulli_means_constant() {
        let spec = scenario_catalog("static_bernoulli").unwrap();
        let mut env = Environment::new(spec, &RngStream::new(1)).unwrap();
        for t in 0..50 {
            let rec = env.step(t % 2).unwrap();
            assert_eq!(rec.means, vec![0.4, 0.8]);
            assert!(rec.reward == 0.0 || rec.reward == 1.0);
        }
    }

    #[test]
    fn scenario_matrices_as_printed() {
        let a = scenario_catalog("scenario_a").unwrap();
        let DynamicsSpec::KnownLinear { transition, noise } = &a.dynamics[0] else {
            panic!()
        };
        assert_eq!(transition, &vec![0.9, -0.1, -0.1, 0.9]);
        assert_eq!(noise.as_slice(), &[0.1, 0.0, 0.0, 0.1]);
        let DynamicsSpec::KnownLinear { transition, .. } = &a.dynamics[1] else {
            panic!()
        };
        assert_eq!(transition, &vec![0.9, 0.1, 0.1, 0.9]);
        let ev = symmetric_eigenvalues_2x2(transition);
        assert!((ev[0] - 1.0).abs() < 1e-15 && (ev[1] - 0.8).abs() < 1e-15);

        let b = scenario_catalog("scenario_b").unwrap();
        let DynamicsSpec::KnownLinear { transition, .. } = &b.dynamics[0] else {
            panic!()
        };
        assert_eq!(transition, &vec![0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn categorical_three_arm_dimensions() {
        let spec = scenario_catalog("categorical_3arm").unwrap();
        assert_eq!(spec.arm_count(), 3);
        assert_eq!(spec.model.param_dim(), 6);
        assert_eq!(spec.arm_count() * spec.model.param_dim(), 18);
        let DynamicsSpec::KnownLinear { transition, noise } = &spec.dynamics[2] else {
            panic!()
        };
        assert_eq!(noise.as_slice(), SpdMatrix::scaled_identity(6, 0.1).as_slice());
        // category 1 block of arm 2
        assert_eq!(transition[2 * 6 + 2], 0.9);
        assert_eq!(transition[2 * 6 + 3], 0.1);
        assert_eq!(transition[2 * 6 + 4], 0.0);
    }

    #[test]
    fn unknown_scenario() {
        assert!(matches!(scenario_catalog("scenario_z"), Err(Error::Config { .. })));
        for name in SCENARIO_NAMES {
            scenario_catalog(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(oracle_arm(&[0.4, 0.8]), 1);
        assert_eq!(oracle_arm(&[0.5, 0.5]), 0);
        assert_eq!(oracle_arm(&[1.2, 0.1, 1.1]), 0);
    }

    #[test]
    fn arm_out_of_range() {
        let mut env = Environment::new(scenario_catalog("static_bernoulli").unwrap(), &RngStream::new(0)).unwrap();
        assert!(matches!(env.step(2), Err(Error::Contract(_))));
    }

    #[test]
    fn deterministic_replay() {
        let mut spec = scenario_catalog("scenario_a").unwrap();
        spec.dynamics = vec![known(&MIX_POS, 0.0, 2), known(&HALF, 0.0, 2)];
        spec.model = RewardModel::LinearGaussian {
            dim: 2,
            noise_variance: Some(0.0),
        };
        let run = || {
            let mut env = Environment::new(spec.clone(), &RngStream::new(17)).unwrap();
            (0..30).map(|t| env.step(t % 2).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn contracting_dynamics_converge() {
        let rho: f64 = 0.8;
        let mut spec = scenario_catalog("scenario_b").unwrap();
        spec.dynamics = vec![
            known(&[0.8, 0.0, 0.0, 0.8], 0.0, 2),
            known(&[0.7, 0.1, 0.1, 0.7], 0.0, 2),
        ];
        let mut env = Environment::new(spec, &RngStream::new(3)).unwrap();
        let start: Vec<f64> = env
            .true_parameters()
            .iter()
            .map(|t| t.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        for _ in 0..200 {
            env.step(0).unwrap();
        }
        for (theta, s) in env.true_parameters().iter().zip(start) {
            let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= rho.powi(200) * s * (1.0 + 1e-9));
        }
    }

    #[test]
    fn evolution_independent_of_choices() {
        let spec = scenario_catalog("categorical_2arm").unwrap();
        let mut e0 = Environment::new(spec.clone(), &RngStream::new(8)).unwrap();
        let mut e1 = Environment::new(spec, &RngStream::new(8)).unwrap();
        let mut rng = RngStream::new(99);
        for _ in 0..100 {
            let a = e0.step(0).unwrap();
            let b = e1.step(rng.index(2)).unwrap();
            assert_eq!(a.means, b.means);
            assert_eq!(e0.true_parameters(), e1.true_parameters());
        }
    }

    #[test]
    fn gaussian_contexts_vary() {
        let mut spec = scenario_catalog("static_logistic").unwrap();
        spec.context = ContextSource::standard_gaussian(2);
        let mut env = Environment::new(spec, &RngStream::new(1)).unwrap();
        let a = env.step(0).unwrap();
        let b = env.step(0).unwrap();
        assert_ne!(a.context, b.context);
    }

    proptest! {
        #[test]
        fn categorical_means_within_category_range(seed in any::<u64>()) {
            let spec = scenario_catalog("categorical_3arm").unwrap();
            let mut env = Environment::new(spec, &RngStream::new(seed)).unwrap();
            for _ in 0..20 {
                let rec = env.step(1).unwrap();
                prop_assert!(rec.means.iter().all(|m| (0.0..=2.0).contains(m)));
                prop_assert!((0.0..=2.0).contains(&rec.reward) && rec.reward.fract() == 0.0);
            }
        }
    }
}
