//! Arm-selection policies.
//!
//! SMC policies keep one [`WeightedParticleSet`] per arm and run the
//! select / observe / update loop; exact policies keep conjugate posteriors.

use crate::distributions::{standard_normal, RngStream};
use crate::dynamics::{DynamicsSpec, TransitionKernel};
use crate::error::{Error, Result};
use crate::reward_models::{exact_predictive, ConjugatePosterior, RewardModel, BERNOULLI_CLAMP};
use crate::smc::{uniform_quantile, ResamplingScheme, WeightedParticleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    ThompsonSmc,
    BayesUcbSmc,
    ThompsonExact,
    BayesUcbExact,
    UniformRandom,
}

impl PolicyKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "thompson_smc" => PolicyKind::ThompsonSmc,
            "bayes_ucb_smc" => PolicyKind::BayesUcbSmc,
            "thompson_exact" => PolicyKind::ThompsonExact,
            "bayes_ucb_exact" => PolicyKind::BayesUcbExact,
            "uniform_random" => PolicyKind::UniformRandom,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::ThompsonSmc => "thompson_smc",
            PolicyKind::BayesUcbSmc => "bayes_ucb_smc",
            PolicyKind::ThompsonExact => "thompson_exact",
            PolicyKind::BayesUcbExact => "bayes_ucb_exact",
            PolicyKind::UniformRandom => "uniform_random",
        }
    }

    pub fn is_smc(&self) -> bool {
        matches!(self, PolicyKind::ThompsonSmc | PolicyKind::BayesUcbSmc)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, PolicyKind::ThompsonExact | PolicyKind::BayesUcbExact)
    }
}

/// Quantile level schedule for the Bayes-UCB kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSchedule {
    /// `α_t = 1/t`
    InverseT,
    Constant(f64),
}

impl AlphaSchedule {
    /// Level for round `t ≥ 1`, clipped to `[1/M, 1 − 1/M]`.
    pub fn level(&self, t: u64, particles: usize) -> f64 {
        let raw = match *self {
            AlphaSchedule::InverseT => 1.0 / t.max(1) as f64,
            AlphaSchedule::Constant(a) => a,
        };
        let lo = 1.0 / particles.max(2) as f64;
        raw.clamp(lo, 1.0 - lo)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySettings {
    pub particles: usize,
    pub alpha: AlphaSchedule,
    pub resampling: ResamplingScheme,
}

impl Default for PolicySettings {
    fn default() -> Self {
        Self {
            particles: 1000,
            alpha: AlphaSchedule::InverseT,
            resampling: ResamplingScheme::Multinomial,
        }
    }
}

/// Posterior representation of one arm.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum ArmState {
    Smc {
        set: WeightedParticleSet,
        kernel: TransitionKernel,
    },
    Exact(ConjugatePosterior),
    Stateless,
}

impl ArmState {
    pub fn particles(&self) -> Option<&WeightedParticleSet> {
        match self {
            ArmState::Smc { set, .. } => Some(set),
            _ => None,
        }
    }
}

/// A policy instance for one realization. It owns its random stream.
#[derive(Debug, Clone)]
pub struct Policy {
    kind: PolicyKind,
    model: RewardModel,
    settings: PolicySettings,
    arms: Vec<ArmState>,
    plays: Vec<u64>,
    round: u64,
    rng: RngStream,
    degenerate_events: u64,
    log_lik: Vec<f64>,
    candidates: Vec<f64>,
    theta: Vec<f64>,
    scores: Vec<f64>,
}

impl Policy {
    /// Builds a policy over `dynamics.len()` arms. `dynamics` lists the
    /// transition kernel each arm's posterior assumes.
    pub fn new(
        kind: PolicyKind,
        settings: PolicySettings,
        model: RewardModel,
        dynamics: &[DynamicsSpec],
        mut rng: RngStream,
    ) -> Result<Self> {
        model.validate()?;
        let arm_count = dynamics.len();
        if arm_count == 0 {
            return Err(Error::config("environment.arms", "need at least one arm"));
        }
        if settings.particles == 0 {
            return Err(Error::config("experiment.particles", "must be at least 1"));
        }
        if let AlphaSchedule::Constant(a) = settings.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::config("policy.alpha", "must lie in (0, 1)"));
            }
        }
        let dim = model.param_dim();
        let mut arms = Vec::with_capacity(arm_count);
        for spec in dynamics {
            let state = match kind {
                PolicyKind::UniformRandom => ArmState::Stateless,
                PolicyKind::ThompsonExact | PolicyKind::BayesUcbExact => {
                    if *spec != DynamicsSpec::Static {
                        return Err(Error::config(
                            "policy.dynamics",
                            "exact policies only support static dynamics",
                        ));
                    }
                    ArmState::Exact(ConjugatePosterior::prior(&model)?)
                }
                PolicyKind::ThompsonSmc | PolicyKind::BayesUcbSmc => {
                    if let RewardModel::LinearGaussian { noise_variance, .. } = model {
                        if !matches!(noise_variance, Some(v) if v > 0.0) {
                            return Err(Error::UnsupportedModel(
                                "particle policies need a known positive noise variance".into(),
                            ));
                        }
                    }
                    let kernel = TransitionKernel::new(spec, dim)?;
                    let bernoulli = matches!(model, RewardModel::Bernoulli);
                    let set = WeightedParticleSet::init(
                        settings.particles,
                        dim,
                        kernel.tracks_statistics(),
                        &mut rng,
                        |r, out| {
                            if bernoulli {
                                out[0] = r.uniform();
                            } else {
                                for v in out.iter_mut() {
                                    *v = standard_normal(r);
                                }
                            }
                            Ok(())
                        },
                    )?;
                    ArmState::Smc { set, kernel }
                }
            };
            arms.push(state);
        }
        let m = settings.particles;
        Ok(Self {
            kind,
            model,
            settings,
            arms,
            plays: vec![0; arm_count],
            round: 0,
            rng,
            degenerate_events: 0,
            log_lik: vec![0.0; m],
            candidates: vec![0.0; m],
            theta: vec![0.0; dim],
            scores: vec![0.0; arm_count],
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn arm_count(&self) -> usize {
        self.arms.len()
    }

    pub fn arms(&self) -> &[ArmState] {
        &self.arms
    }

    pub fn plays(&self) -> &[u64] {
        &self.plays
    }

    /// Number of updates where every particle had zero likelihood and the
    /// weights were reset to uniform.
    pub fn degenerate_events(&self) -> u64 {
        self.degenerate_events
    }

    /// Quantile level used by the next selection.
    pub fn current_alpha(&self) -> f64 {
        self.settings.alpha.level(self.round + 1, self.settings.particles)
    }

    /// Chooses the arm to play given the next context.
    pub fn select(&mut self, x: &[f64]) -> Result<usize> {
        if x.len() != self.model.context_dim() {
            return Err(Error::contract(format!(
                "context has length {}, model expects {}",
                x.len(),
                self.model.context_dim()
            )));
        }
        match self.kind {
            PolicyKind::UniformRandom => Ok(self.rng.index(self.arms.len())),
            PolicyKind::ThompsonSmc => {
                for a in 0..self.arms.len() {
                    let ArmState::Smc { set, kernel } = &mut self.arms[a] else {
                        unreachable!()
                    };
                    let m = set.sample_index(&mut self.rng);
                    kernel.sample_next(set.theta(m), set.stats(m), &mut self.rng, &mut self.theta)?;
                    self.scores[a] = self.model.expected_reward_unchecked(&self.theta, x);
                }
                Ok(argmax_random(&self.scores, &mut self.rng))
            }
            PolicyKind::BayesUcbSmc => {
                let alpha = self.current_alpha();
                for a in 0..self.arms.len() {
                    let ArmState::Smc { set, kernel } = &mut self.arms[a] else {
                        unreachable!()
                    };
                    let n = set.len();
                    self.candidates.resize(n, 0.0);
                    for k in 0..n {
                        let m = set.sample_index(&mut self.rng);
                        kernel.sample_next(set.theta(m), set.stats(m), &mut self.rng, &mut self.theta)?;
                        self.candidates[k] = self.model.expected_reward_unchecked(&self.theta, x);
                    }
                    self.scores[a] = uniform_quantile(&mut self.candidates[..n], alpha)?;
                }
                Ok(argmax_random(&self.scores, &mut self.rng))
            }
            PolicyKind::ThompsonExact => {
                for a in 0..self.arms.len() {
                    let ArmState::Exact(post) = &self.arms[a] else {
                        unreachable!()
                    };
                    let theta = post.sample_parameters(&self.model, &mut self.rng)?;
                    self.scores[a] = self.model.expected_reward(&theta, x)?;
                }
                Ok(argmax_random(&self.scores, &mut self.rng))
            }
            PolicyKind::BayesUcbExact => {
                let alpha = self.current_alpha();
                for a in 0..self.arms.len() {
                    let ArmState::Exact(post) = &self.arms[a] else {
                        unreachable!()
                    };
                    self.scores[a] = exact_predictive(post, &self.model, x)?.quantile(1.0 - alpha)?;
                }
                Ok(argmax_random(&self.scores, &mut self.rng))
            }
        }
    }

    /// Feeds back the reward `y` observed for `arm` under context `x`.
    pub fn update(&mut self, arm: usize, x: &[f64], y: f64) -> Result<()> {
        if arm >= self.arms.len() {
            return Err(Error::contract(format!("arm {arm} out of range")));
        }
        match self.kind {
            PolicyKind::UniformRandom => {}
            PolicyKind::ThompsonExact | PolicyKind::BayesUcbExact => {
                let ArmState::Exact(post) = &self.arms[arm] else {
                    unreachable!()
                };
                self.arms[arm] = ArmState::Exact(post.update(x, y)?);
            }
            PolicyKind::ThompsonSmc | PolicyKind::BayesUcbSmc => {
                for (a, state) in self.arms.iter_mut().enumerate() {
                    let ArmState::Smc { set, kernel } = state else {
                        unreachable!()
                    };
                    set.resample(self.settings.resampling, &mut self.rng)?;
                    set.propagate(kernel, &mut self.rng, &mut self.theta)?;
                    if a == arm {
                        let n = set.len();
                        self.log_lik.resize(n, 0.0);
                        for (i, l) in self.log_lik[..n].iter_mut().enumerate() {
                            *l = particle_log_likelihood(&self.model, set.theta(i), x, y)?;
                        }
                        match set.reweight(&self.log_lik[..n]) {
                            Ok(()) => {}
                            Err(Error::DegenerateWeights) => {
                                set.reset_uniform();
                                self.degenerate_events += 1;
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
        }
        self.plays[arm] += 1;
        self.round += 1;
        Ok(())
    }
}

/// Log-likelihood used for particle weights; Bernoulli parameters that the
/// dynamics pushed outside the unit interval are clamped first.
fn particle_log_likelihood(model: &RewardModel, theta: &[f64], x: &[f64], y: f64) -> Result<f64> {
    match model {
        RewardModel::Bernoulli => {
            let p = theta[0].clamp(BERNOULLI_CLAMP, 1.0 - BERNOULLI_CLAMP);
            model.log_likelihood(&[p], x, y)
        }
        _ => model.log_likelihood(theta, x, y),
    }
}

/// Index of the largest value; ties broken uniformly at random.
pub fn argmax_random(values: &[f64], rng: &mut RngStream) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut count = 0usize;
    let mut choice = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v > best {
            best = v;
            count = 1;
            choice = i;
        } else if v == best {
            count += 1;
        }
    }
    if count <= 1 {
        return choice;
    }
    let pick = rng.index(count);
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == best)
        .nth(pick)
        .map(|(i, _)| i)
        .unwrap_or(choice)
}
