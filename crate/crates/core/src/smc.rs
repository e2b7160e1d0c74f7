//! Weighted particle sets: the sequential importance resampling core.

use crate::distributions::{check_normalized, RngStream};
use crate::dynamics::{TransitionKernel, TransitionStats};
use crate::error::{Error, Result};

/// Tolerance used when comparing cumulative weights against a quantile level.
pub const QUANTILE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResamplingScheme {
    #[default]
    Multinomial,
    Systematic,
}

/// `M` particles `(θ, stats)` with nonnegative weights summing to one.
///
/// Parameters are stored contiguously (`M × dim`). A second set of buffers is
/// kept so resampling never allocates.
#[derive(Debug, Clone)]
pub struct WeightedParticleSet {
    dim: usize,
    thetas: Vec<f64>,
    stats: Vec<TransitionStats>,
    weights: Vec<f64>,
    uniform: bool,
    spare_thetas: Vec<f64>,
    spare_stats: Vec<TransitionStats>,
    cumulative: Vec<f64>,
}

impl WeightedParticleSet {
    /// `m` i.i.d. draws from `prior`, uniformly weighted.
    pub fn init<F>(m: usize, dim: usize, tracked: bool, rng: &mut RngStream, mut prior: F) -> Result<Self>
    where
        F: FnMut(&mut RngStream, &mut [f64]) -> Result<()>,
    {
        if m == 0 {
            return Err(Error::contract("particle count must be at least 1"));
        }
        if dim == 0 {
            return Err(Error::contract("parameter dimension must be positive"));
        }
        let mut thetas = vec![0.0; m * dim];
        for chunk in thetas.chunks_mut(dim) {
            prior(rng, chunk)?;
        }
        let stats = vec![TransitionStats::new(dim, tracked); m];
        Ok(Self::assemble(dim, thetas, stats))
    }

    /// Uniformly weighted set from flat parameters; `stats` defaults to fresh untracked records.
    pub fn from_particles(dim: usize, thetas: Vec<f64>, stats: Option<Vec<TransitionStats>>) -> Result<Self> {
        if dim == 0 || thetas.is_empty() || !thetas.len().is_multiple_of(dim) {
            return Err(Error::contract(
                "particle parameters must be a nonempty multiple of dim",
            ));
        }
        let m = thetas.len() / dim;
        let stats = match stats {
            Some(s) if s.len() == m => s,
            Some(_) => return Err(Error::contract("one stats record per particle required")),
            None => vec![TransitionStats::new(dim, false); m],
        };
        Ok(Self::assemble(dim, thetas, stats))
    }

    fn assemble(dim: usize, thetas: Vec<f64>, stats: Vec<TransitionStats>) -> Self {
        let m = stats.len();
        Self {
            dim,
            spare_thetas: thetas.clone(),
            spare_stats: stats.clone(),
            thetas,
            stats,
            weights: vec![1.0 / m as f64; m],
            uniform: true,
            cumulative: vec![0.0; m],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn theta(&self, i: usize) -> &[f64] {
        &self.thetas[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn stats(&self, i: usize) -> &TransitionStats {
        &self.stats[i]
    }

    /// All parameters, particle-major.
    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when the weights are known to be exactly uniform.
    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Replaces the weights with `w / Σw`.
    pub fn set_weights(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.len() {
            return Err(Error::contract("weight vector length differs from particle count"));
        }
        let total: f64 = w.iter().sum();
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::contract("weights must be finite and nonnegative"));
        }
        if !(total > 0.0) {
            return Err(Error::DegenerateWeights);
        }
        for (dst, v) in self.weights.iter_mut().zip(w) {
            *dst = v / total;
        }
        self.uniform = false;
        Ok(())
    }

    pub fn reset_uniform(&mut self) {
        let u = 1.0 / self.len() as f64;
        self.weights.iter_mut().for_each(|w| *w = u);
        self.uniform = true;
    }

    /// Index drawn with probability equal to its weight.
    #[inline]
    pub fn sample_index(&self, rng: &mut RngStream) -> usize {
        if self.uniform {
            rng.index(self.len())
        } else {
            crate::distributions::categorical_unchecked(&self.weights, rng)
        }
    }

    fn fill_cumulative(&mut self) -> Result<()> {
        let mut acc = 0.0;
        for (c, w) in self.cumulative.iter_mut().zip(&self.weights) {
            acc += w;
            *c = acc;
        }
        if !(acc > 0.0) {
            return Err(Error::DegenerateWeights);
        }
        Ok(())
    }

    #[inline]
    fn inverse_cdf(&self, u: f64) -> usize {
        let total = *self.cumulative.last().unwrap();
        let target = u * total;
        let i = self.cumulative.partition_point(|&c| c <= target);
        // guard against u·total landing on the final edge through rounding
        let mut i = i.min(self.len() - 1);
        while self.weights[i] == 0.0 && i > 0 {
            i -= 1;
        }
        i
    }

    /// Draws `M` offspring by `scheme` and resets the weights to `1/M`.
    /// Offspring inherit their parent's parameters and transition statistics.
    pub fn resample(&mut self, scheme: ResamplingScheme, rng: &mut RngStream) -> Result<()> {
        let m = self.len();
        let d = self.dim;
        if self.uniform && scheme == ResamplingScheme::Multinomial {
            for k in 0..m {
                let p = rng.index(m);
                self.spare_thetas[k * d..(k + 1) * d].copy_from_slice(&self.thetas[p * d..(p + 1) * d]);
                self.spare_stats[k].copy_from(&self.stats[p]);
            }
        } else {
            self.fill_cumulative()?;
            let start = rng.uniform();
            for k in 0..m {
                let u = match scheme {
                    ResamplingScheme::Multinomial => {
                        if k == 0 {
                            start
                        } else {
                            rng.uniform()
                        }
                    }
                    ResamplingScheme::Systematic => (k as f64 + start) / m as f64,
                };
                let p = self.inverse_cdf(u);
                self.spare_thetas[k * d..(k + 1) * d].copy_from_slice(&self.thetas[p * d..(p + 1) * d]);
                self.spare_stats[k].copy_from(&self.stats[p]);
            }
        }
        std::mem::swap(&mut self.thetas, &mut self.spare_thetas);
        std::mem::swap(&mut self.stats, &mut self.spare_stats);
        self.reset_uniform();
        Ok(())
    }

    /// Multiplies each weight by `exp(log_lik)` and renormalizes.
    ///
    /// When every particle has zero likelihood the weights are left as they
    /// were and [`Error::DegenerateWeights`] is returned.
    pub fn reweight(&mut self, log_lik: &[f64]) -> Result<()> {
        if log_lik.len() != self.len() {
            return Err(Error::contract("one log-likelihood per particle required"));
        }
        let mut max = f64::NEG_INFINITY;
        for (&l, &w) in log_lik.iter().zip(&self.weights) {
            if l.is_nan() || l == f64::INFINITY {
                return Err(Error::contract(format!("invalid log-likelihood {l}")));
            }
            if w > 0.0 && l > max {
                max = l;
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(Error::DegenerateWeights);
        }
        let mut total = 0.0;
        for (c, (&l, &w)) in self.cumulative.iter_mut().zip(log_lik.iter().zip(&self.weights)) {
            let v = w * (l - max).exp();
            *c = v;
            total += v;
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateWeights);
        }
        let inv = 1.0 / total;
        for (w, c) in self.weights.iter_mut().zip(&self.cumulative) {
            *w = c * inv;
        }
        self.uniform = false;
        Ok(())
    }

    /// Propagates every particle through `kernel`.
    pub fn propagate(&mut self, kernel: &mut TransitionKernel, rng: &mut RngStream, scratch: &mut [f64]) -> Result<()> {
        let d = self.dim;
        if kernel.is_identity() {
            for s in &mut self.stats {
                s.steps += 1;
            }
            return Ok(());
        }
        for (theta, stats) in self.thetas.chunks_mut(d).zip(self.stats.iter_mut()) {
            kernel.propagate_in_place(theta, stats, rng, scratch)?;
        }
        Ok(())
    }

    /// `Σ_m w_m f(θ_m)`.
    pub fn weighted_estimate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.thetas
            .chunks(self.dim)
            .zip(&self.weights)
            .map(|(t, w)| w * f(t))
            .sum()
    }

    /// `1 / Σ w²`.
    pub fn effective_sample_size(&self) -> f64 {
        effective_sample_size(&self.weights)
    }

    pub fn check(&self) -> Result<()> {
        check_normalized(&self.weights)
    }
}

pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// `Σ w_i f_i`.
pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| v * w).sum()
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("quantile level {alpha} outside (0, 1)")))
    }
}

/// Largest atom `v` whose upper tail mass `Σ_{m: μ_m ≥ v} w_m` reaches `alpha`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::contract("weighted quantile of an empty set"));
    }
    if values.len() != weights.len() {
        return Err(Error::contract("values and weights differ in length"));
    }
    check_level(alpha)?;
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::domain("NaN value in weighted quantile"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| values[b].total_cmp(&values[a]));
    let target = alpha - QUANTILE_EPS;
    let mut acc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let v = values[order[i]];
        // tied atoms enter the tail together
        while i < order.len() && values[order[i]] == v {
            acc += weights[order[i]];
            i += 1;
        }
        if acc >= target {
            return Ok(v);
        }
    }
    Ok(values[*order.last().unwrap()])
}

/// [`weighted_quantile`] for equally weighted values, by selection. Reorders `values`.
pub fn uniform_quantile(values: &mut [f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::contract("weighted quantile of an empty set"));
    }
    check_level(alpha)?;
    let m = values.len();
    let k = (((alpha - QUANTILE_EPS) * m as f64).ceil() as usize).clamp(1, m);
    let (_, v, _) = values.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    Ok(*v)
}
