//! Per-arm reward distributions.
//!
//! A [`RewardModel`] evaluates `log p(y | x, θ)` up to an additive constant,
//! draws rewards, and reports the expected reward `E[Y | x, θ]`. Bernoulli and
//! linear-Gaussian rewards additionally have exact conjugate posteriors in
//! [`conjugate`].

pub mod conjugate;

pub use conjugate::{beta_update, exact_predictive, nig_update, BetaStats, ConjugatePosterior, NigStats};

use crate::distributions::{linalg::dot, standard_normal, RngStream};
use crate::error::{Error, Result};

/// Bernoulli success probabilities are clamped into this interval before
/// their log-likelihood is taken.
pub const BERNOULLI_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum RewardModel {
    /// Binary rewards with success probability `θ ∈ (0, 1)`; context is ignored.
    Bernoulli,
    /// `y ~ N(xᵀw, σ²)`. `noise_variance = None` means σ² is unknown and only
    /// the conjugate (Student-t) route is available.
    LinearGaussian { dim: usize, noise_variance: Option<f64> },
    /// Binary rewards with `P(y = 1) = sigmoid(xᵀθ)`.
    Logistic { dim: usize },
    /// Rewards `y = c ∈ {0, …, C−1}` with `P(c) ∝ exp(xᵀθ_c)`; `θ` stores the
    /// per-category blocks back to back.
    CategoricalSoftmax { dim: usize, categories: usize },
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl RewardModel {
    /// Context length the model expects (1 for the context-free Bernoulli model).
    pub fn context_dim(&self) -> usize {
        match *self {
            RewardModel::Bernoulli => 1,
            RewardModel::LinearGaussian { dim, .. }
            | RewardModel::Logistic { dim }
            | RewardModel::CategoricalSoftmax { dim, .. } => dim,
        }
    }

    /// Number of scalar parameters per arm.
    pub fn param_dim(&self) -> usize {
        match *self {
            RewardModel::Bernoulli => 1,
            RewardModel::LinearGaussian { dim, .. } | RewardModel::Logistic { dim } => dim,
            RewardModel::CategoricalSoftmax { dim, categories } => dim * categories,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RewardModel::Bernoulli => Ok(()),
            RewardModel::LinearGaussian { dim, noise_variance } => {
                if dim == 0 {
                    return Err(Error::config("reward.dim", "must be positive"));
                }
                match noise_variance {
                    Some(v) if !(v >= 0.0 && v.is_finite()) => {
                        Err(Error::config("reward.noise_variance", "must be a nonnegative number"))
                    }
                    _ => Ok(()),
                }
            }
            RewardModel::Logistic { dim } => {
                if dim == 0 {
                    Err(Error::config("reward.dim", "must be positive"))
                } else {
                    Ok(())
                }
            }
            RewardModel::CategoricalSoftmax { dim, categories } => {
                if dim == 0 {
                    Err(Error::config("reward.dim", "must be positive"))
                } else if categories < 2 {
                    Err(Error::config("reward.categories", "need at least two categories"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// True for rewards in {0, 1}.
    pub fn is_binary(&self) -> bool {
        matches!(self, RewardModel::Bernoulli | RewardModel::Logistic { .. })
    }

    fn check_dims(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        if theta.len() != self.param_dim() {
            return Err(Error::contract(format!(
                "parameter has length {}, model expects {}",
                theta.len(),
                self.param_dim()
            )));
        }
        if !matches!(self, RewardModel::Bernoulli) && x.len() != self.context_dim() {
            return Err(Error::contract(format!(
                "context has length {}, model expects {}",
                x.len(),
                self.context_dim()
            )));
        }
        Ok(())
    }

    /// `log p(y | x, θ)` up to an additive constant.
    pub fn log_likelihood(&self, theta: &[f64], x: &[f64], y: f64) -> Result<f64> {
        self.check_dims(theta, x)?;
        match *self {
            RewardModel::Bernoulli => {
                let p = theta[0];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::domain(format!("Bernoulli parameter {p} outside [0, 1]")));
                }
                let p = p.clamp(BERNOULLI_CLAMP, 1.0 - BERNOULLI_CLAMP);
                match binary(y)? {
                    true => Ok(p.ln()),
                    false => Ok((1.0 - p).ln()),
                }
            }
            RewardModel::LinearGaussian { noise_variance, .. } => {
                let var = match noise_variance {
                    Some(v) if v > 0.0 => v,
                    Some(_) => return Err(Error::domain("likelihood needs a positive noise variance")),
                    None => {
                        return Err(Error::UnsupportedModel(
                            "particle likelihood needs a known noise variance".into(),
                        ))
                    }
                };
                let r = y - dot(x, theta);
                Ok(-0.5 * r * r / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln())
            }
            RewardModel::Logistic { .. } => {
                let z = dot(x, theta);
                match binary(y)? {
                    true => Ok(-softplus(-z)),
                    false => Ok(-softplus(z)),
                }
            }
            RewardModel::CategoricalSoftmax { dim, categories } => {
                let c = category(y, categories)?;
                let mut max = f64::NEG_INFINITY;
                for k in 0..categories {
                    max = max.max(dot(x, &theta[k * dim..(k + 1) * dim]));
                }
                let mut sum = 0.0;
                for k in 0..categories {
                    sum += (dot(x, &theta[k * dim..(k + 1) * dim]) - max).exp();
                }
                Ok(dot(x, &theta[c * dim..(c + 1) * dim]) - max - sum.ln())
            }
        }
    }

    /// Draws a reward from `p(y | x, θ)`.
    pub fn sample_reward(&self, theta: &[f64], x: &[f64], rng: &mut RngStream) -> Result<f64> {
        self.check_dims(theta, x)?;
        match *self {
            RewardModel::Bernoulli => {
                let p = theta[0];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::domain(format!("Bernoulli parameter {p} outside [0, 1]")));
                }
                Ok(if rng.uniform() < p { 1.0 } else { 0.0 })
            }
            RewardModel::LinearGaussian { noise_variance, .. } => {
                let var = noise_variance
                    .ok_or_else(|| Error::UnsupportedModel("sampling rewards needs a noise variance".into()))?;
                let mean = dot(x, theta);
                if var == 0.0 {
                    Ok(mean)
                } else {
                    Ok(mean + var.sqrt() * standard_normal(rng))
                }
            }
            RewardModel::Logistic { .. } => {
                let p = sigmoid(dot(x, theta));
                Ok(if rng.uniform() < p { 1.0 } else { 0.0 })
            }
            RewardModel::CategoricalSoftmax { dim, categories } => {
                let probs = softmax_probabilities(theta, x, dim, categories);
                let u = rng.uniform();
                let mut acc = 0.0;
                for (c, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Ok(c as f64);
                    }
                }
                Ok((categories - 1) as f64)
            }
        }
    }

    /// `E[Y | x, θ]`.
    pub fn expected_reward(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check_dims(theta, x)?;
        Ok(self.expected_reward_unchecked(theta, x))
    }

    #[inline]
    pub(crate) fn expected_reward_unchecked(&self, theta: &[f64], x: &[f64]) -> f64 {
        match *self {
            RewardModel::Bernoulli => theta[0],
            RewardModel::LinearGaussian { .. } => dot(x, theta),
            RewardModel::Logistic { .. } => sigmoid(dot(x, theta)),
            RewardModel::CategoricalSoftmax { dim, categories } => {
                let mut max = f64::NEG_INFINITY;
                for k in 0..categories {
                    max = max.max(dot(x, &theta[k * dim..(k + 1) * dim]));
                }
                let mut num = 0.0;
                let mut den = 0.0;
                for k in 0..categories {
                    let e = (dot(x, &theta[k * dim..(k + 1) * dim]) - max).exp();
                    num += k as f64 * e;
                    den += e;
                }
                num / den
            }
        }
    }

    /// Category probabilities of the softmax model (empty for other models).
    pub fn category_probabilities(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(theta, x)?;
        match *self {
            RewardModel::CategoricalSoftmax { dim, categories } => Ok(softmax_probabilities(theta, x, dim, categories)),
            _ => Err(Error::UnsupportedModel(
                "category probabilities need a softmax model".into(),
            )),
        }
    }
}

fn softmax_probabilities(theta: &[f64], x: &[f64], dim: usize, categories: usize) -> Vec<f64> {
    let scores: Vec<f64> = (0..categories)
        .map(|k| dot(x, &theta[k * dim..(k + 1) * dim]))
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

fn binary(y: f64) -> Result<bool> {
    if y == 1.0 {
        Ok(true)
    } else if y == 0.0 {
        Ok(false)
    } else {
        Err(Error::domain(format!("binary reward expected, got {y}")))
    }
}

fn category(y: f64, categories: usize) -> Result<usize> {
    if y >= 0.0 && y.fract() == 0.0 && (y as usize) < categories {
        Ok(y as usize)
    } else {
        Err(Error::domain(format!("category index {y} outside 0..{categories}")))
    }
}
