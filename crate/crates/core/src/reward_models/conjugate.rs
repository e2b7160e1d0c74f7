//! Exact conjugate posteriors: Beta for Bernoulli rewards and
//! Normal-Inverse-Gamma (NIG) for linear-Gaussian rewards.

use super::RewardModel;
use crate::distributions::linalg::{add_outer, dot, mat_vec_into, quad_form, SpdMatrix};
use crate::distributions::{sample_beta, sample_inverse_gamma, sample_mvn, RngStream, Univariate};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaStats {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaStats {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::domain(format!(
                "Beta parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Sequential Beta update: `α += y`, `β += 1 − y`.
pub fn beta_update(stats: BetaStats, y: f64) -> Result<BetaStats> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::domain(format!("binary reward expected, got {y}")));
    }
    Ok(BetaStats {
        alpha: stats.alpha + y,
        beta: stats.beta + 1.0 - y,
    })
}

/// NIG posterior over `(w, σ²)`. Both `V` and `V⁻¹` are carried so that
/// updates stay O(d²).
#[derive(Debug, Clone, PartialEq)]
pub struct NigStats {
    pub dim: usize,
    pub mean: Vec<f64>,
    /// `V_t`, row-major.
    pub cov: Vec<f64>,
    /// `V_t⁻¹`, row-major.
    pub precision: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl NigStats {
    pub fn new(mean: Vec<f64>, cov: &SpdMatrix, alpha: f64, beta: f64) -> Result<Self> {
        let dim = cov.dim();
        if mean.len() != dim {
            return Err(Error::contract(format!(
                "prior mean has length {}, covariance is {dim}x{dim}",
                mean.len()
            )));
        }
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::domain("NIG shape and scale must be positive"));
        }
        let precision = cov.inverse()?;
        Ok(Self {
            dim,
            mean,
            cov: cov.as_slice().to_vec(),
            precision,
            alpha,
            beta,
        })
    }

    /// Standard prior `u = 0`, `V = I`, `α = β = 1`.
    pub fn standard(dim: usize) -> Self {
        let cov = crate::distributions::linalg::identity(dim);
        Self {
            dim,
            mean: vec![0.0; dim],
            precision: cov.clone(),
            cov,
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

/// One sequential NIG update with context `x` and reward `y`.
pub fn nig_update(stats: &NigStats, x: &[f64], y: f64) -> Result<NigStats> {
    let d = stats.dim;
    if x.len() != d {
        return Err(Error::contract(format!(
            "context has length {}, posterior dimension is {d}",
            x.len()
        )));
    }
    let mut vx = vec![0.0; d];
    mat_vec_into(&stats.cov, x, d, d, &mut vx);
    let s = dot(x, &vx);
    let denom = 1.0 + s;
    let resid = y - dot(x, &stats.mean);

    let mut cov = stats.cov.clone();
    add_outer(&mut cov, &vx, &vx, -1.0 / denom);
    let mut precision = stats.precision.clone();
    add_outer(&mut precision, x, x, 1.0);

    for i in 0..d {
        if !(cov[i * d + i] > 0.0) {
            return Err(Error::numeric("NIG covariance lost positive definiteness"));
        }
    }

    // u_t = V_t (V_{t-1}⁻¹ u_{t-1} + x y), written in Sherman-Morrison form.
    let mean: Vec<f64> = stats.mean.iter().zip(&vx).map(|(u, v)| u + v * resid / denom).collect();

    Ok(NigStats {
        dim: d,
        mean,
        cov,
        precision,
        alpha: stats.alpha + 0.5,
        beta: stats.beta + resid * resid / (2.0 * denom),
    })
}

/// Posterior state of an exactly tractable arm.
#[derive(Debug, Clone, PartialEq)]
pub enum ConjugatePosterior {
    Beta(BetaStats),
    Nig(NigStats),
}

impl ConjugatePosterior {
    /// Default prior for `model`: Beta(1, 1) or the standard NIG.
    pub fn prior(model: &RewardModel) -> Result<Self> {
        match *model {
            RewardModel::Bernoulli => Ok(ConjugatePosterior::Beta(BetaStats { alpha: 1.0, beta: 1.0 })),
            RewardModel::LinearGaussian { dim, .. } => Ok(ConjugatePosterior::Nig(NigStats::standard(dim))),
            _ => Err(Error::UnsupportedModel(format!("{model:?} has no conjugate posterior"))),
        }
    }

    pub fn update(&self, x: &[f64], y: f64) -> Result<Self> {
        match self {
            ConjugatePosterior::Beta(s) => Ok(ConjugatePosterior::Beta(beta_update(*s, y)?)),
            ConjugatePosterior::Nig(s) => Ok(ConjugatePosterior::Nig(nig_update(s, x, y)?)),
        }
    }

    /// Draws a parameter vector: `θ ~ Beta`, or `σ² ~ IG(α, β)` (unless
    /// known) followed by `w ~ N(u, σ² V)`.
    pub fn sample_parameters(&self, model: &RewardModel, rng: &mut RngStream) -> Result<Vec<f64>> {
        match (self, model) {
            (ConjugatePosterior::Beta(s), RewardModel::Bernoulli) => Ok(vec![sample_beta(s.alpha, s.beta, rng)?]),
            (ConjugatePosterior::Nig(s), RewardModel::LinearGaussian { noise_variance, .. }) => {
                let var = match noise_variance {
                    Some(v) => *v,
                    None => sample_inverse_gamma(s.alpha, s.beta, rng)?,
                };
                let cov: Vec<f64> = s.cov.iter().map(|v| v * var).collect();
                let cov = SpdMatrix::from_symmetrized(s.dim, cov)?;
                sample_mvn(&s.mean, &cov, rng)
            }
            _ => Err(Error::contract("posterior does not match reward model")),
        }
    }
}

/// Exact posterior of the expected reward `μ_a` at context `x`.
pub fn exact_predictive(posterior: &ConjugatePosterior, model: &RewardModel, x: &[f64]) -> Result<Univariate> {
    match (posterior, model) {
        (ConjugatePosterior::Beta(s), RewardModel::Bernoulli) => Ok(Univariate::Beta {
            alpha: s.alpha,
            beta: s.beta,
        }),
        (ConjugatePosterior::Nig(s), RewardModel::LinearGaussian { noise_variance, .. }) => {
            if x.len() != s.dim {
                return Err(Error::contract(format!(
                    "context has length {}, posterior dimension is {}",
                    x.len(),
                    s.dim
                )));
            }
            let loc = dot(x, &s.mean);
            let spread = quad_form(&s.cov, x, s.dim).max(0.0);
            Ok(match noise_variance {
                Some(var) => Univariate::Gaussian {
                    mean: loc,
                    variance: var * spread,
                },
                None => Univariate::StudentT {
                    dof: 2.0 * s.alpha,
                    loc,
                    scale: s.beta / s.alpha * spread,
                },
            })
        }
        (_, RewardModel::Logistic { .. } | RewardModel::CategoricalSoftmax { .. }) => Err(Error::UnsupportedModel(
            "no closed-form posterior for this reward model".into(),
        )),
        _ => Err(Error::contract("posterior does not match reward model")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::linalg::{mat_mul_into, spd_solve};
    use crate::distributions::standard_normal;
    use proptest::prelude::*;

    #[test]
    fn beta_update_examples() {
        let prior = BetaStats::new(1.0, 1.0).unwrap();
        assert_eq!(beta_update(prior, 1.0).unwrap(), BetaStats { alpha: 2.0, beta: 1.0 });
        assert_eq!(beta_update(prior, 0.0).unwrap(), BetaStats { alpha: 1.0, beta: 2.0 });
        let mut s = prior;
        for y in [1.0, 1.0, 1.0, 0.0, 0.0] {
            s = beta_update(s, y).unwrap();
        }
        assert_eq!(s, BetaStats { alpha: 4.0, beta: 3.0 });
        assert!(beta_update(prior, 0.5).is_err());
    }

    #[test]
    fn nig_update_example() {
        let s = nig_update(&NigStats::standard(2), &[1.0, 0.0], 2.0).unwrap();
        assert_eq!(s.precision, vec![2.0, 0.0, 0.0, 1.0]);
        assert_eq!(s.mean, vec![1.0, 0.0]);
        assert_eq!(s.cov, vec![0.5, 0.0, 0.0, 1.0]);
        assert_eq!(s.alpha, 1.5);
        assert_eq!(s.beta, 1.0 + 4.0 / 4.0);
    }

    #[test]
    fn nig_zero_context_leaves_location() {
        let mut prior = NigStats::standard(2);
        prior.mean = vec![0.3, -0.7];
        let s = nig_update(&prior, &[0.0, 0.0], 1.5).unwrap();
        assert_eq!(s.mean, prior.mean);
        assert_eq!(s.cov, prior.cov);
        assert_eq!(s.alpha, prior.alpha + 0.5);
        // residual is y − 0
        assert_eq!(s.beta, prior.beta + 1.5 * 1.5 / 2.0);
    }

    #[test]
    fn nig_dimension_mismatch() {
        assert!(matches!(
            nig_update(&NigStats::standard(2), &[1.0], 0.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn predictive_examples() {
        let p = exact_predictive(
            &ConjugatePosterior::Beta(BetaStats { alpha: 2.0, beta: 3.0 }),
            &RewardModel::Bernoulli,
            &[1.0],
        )
        .unwrap();
        assert!((p.mean() - 0.4).abs() < 1e-15);

        let mut s = NigStats::standard(2);
        s.mean = vec![1.0, 0.0];
        let known = RewardModel::LinearGaussian {
            dim: 2,
            noise_variance: Some(1.0),
        };
        let p = exact_predictive(&ConjugatePosterior::Nig(s.clone()), &known, &[1.0, 0.0]).unwrap();
        assert_eq!(
            p,
            Univariate::Gaussian {
                mean: 1.0,
                variance: 1.0
            }
        );

        let mut s = NigStats::standard(2);
        s.alpha = 2.0;
        s.beta = 2.0;
        let unknown = RewardModel::LinearGaussian {
            dim: 2,
            noise_variance: None,
        };
        let p = exact_predictive(&ConjugatePosterior::Nig(s.clone()), &unknown, &[1.0, 0.0]).unwrap();
        assert_eq!(
            p,
            Univariate::StudentT {
                dof: 4.0,
                loc: 0.0,
                scale: 1.0
            }
        );

        assert!(matches!(
            exact_predictive(
                &ConjugatePosterior::Nig(s),
                &RewardModel::Logistic { dim: 2 },
                &[1.0, 0.0]
            ),
            Err(Error::UnsupportedModel(_))
        ));
    }

    /// Batch NIG posterior computed directly from the stacked design matrix.
    fn batch_nig(prior: &NigStats, xs: &[Vec<f64>], ys: &[f64]) -> NigStats {
        let d = prior.dim;
        let mut precision = prior.precision.clone();
        let mut rhs = vec![0.0; d];
        mat_vec_into(&prior.precision, &prior.mean, d, d, &mut rhs);
        let mut yy = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            for i in 0..d {
                for j in 0..d {
                    precision[i * d + j] += x[i] * x[j];
                }
                rhs[i] += x[i] * y;
            }
            yy += y * y;
        }
        let mean = spd_solve(&precision, d, &rhs).unwrap();
        let mut cov = vec![0.0; d * d];
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            let col = spd_solve(&precision, d, &e).unwrap();
            for i in 0..d {
                cov[i * d + j] = col[i];
            }
        }
        let prior_q = quad_form(&prior.precision, &prior.mean, d);
        let post_q = quad_form(&precision, &mean, d);
        NigStats {
            dim: d,
            mean,
            cov,
            precision,
            alpha: prior.alpha + xs.len() as f64 / 2.0,
            beta: prior.beta + 0.5 * (yy + prior_q - post_q),
        }
    }

    #[test]
    fn five_sequential_updates_match_batch() {
        let mut rng = RngStream::new(5);
        let prior = NigStats::standard(3);
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| standard_normal(&mut rng)).collect())
            .collect();
        let ys: Vec<f64> = (0..5).map(|_| standard_normal(&mut rng)).collect();
        let mut s = prior.clone();
        for (x, &y) in xs.iter().zip(&ys) {
            s = nig_update(&s, x, y).unwrap();
        }
        let b = batch_nig(&prior, &xs, &ys);
        for (a, e) in s.mean.iter().zip(&b.mean).chain(s.cov.iter().zip(&b.cov)) {
            assert!((a - e).abs() < 1e-10);
        }
        assert!((s.beta - b.beta).abs() < 1e-10);
        assert_eq!(s.alpha, b.alpha);
    }

    #[test]
    fn cov_and_precision_stay_inverse() {
        let mut rng = RngStream::new(8);
        let mut s = NigStats::standard(3);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| standard_normal(&mut rng)).collect();
            s = nig_update(&s, &x, standard_normal(&mut rng)).unwrap();
        }
        let mut prod = vec![0.0; 9];
        mat_mul_into(&s.cov, &s.precision, 3, 3, 3, &mut prod);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i * 3 + j] - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn nig_thompson_draws_center_on_posterior_mean() {
        let mut s = NigStats::standard(2);
        s.mean = vec![2.0, -1.0];
        s.alpha = 50.0;
        s.beta = 50.0;
        let post = ConjugatePosterior::Nig(s);
        let m = RewardModel::LinearGaussian {
            dim: 2,
            noise_variance: None,
        };
        let mut rng = RngStream::new(3);
        let n = 20_000;
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let w = post.sample_parameters(&m, &mut rng).unwrap();
            acc[0] += w[0];
            acc[1] += w[1];
        }
        assert!((acc[0] / n as f64 - 2.0).abs() < 0.05);
        assert!((acc[1] / n as f64 + 1.0).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn sequential_matches_batch(seed in any::<u64>()) {
            let mut rng = RngStream::new(seed);
            let d = 2;
            let prior = NigStats::standard(d);
            let xs: Vec<Vec<f64>> = (0..50).map(|_| (0..d).map(|_| standard_normal(&mut rng)).collect()).collect();
            let ys: Vec<f64> = (0..50).map(|_| 2.0 * standard_normal(&mut rng)).collect();
            let mut s = prior.clone();
            for (x, &y) in xs.iter().zip(&ys) {
                s = nig_update(&s, x, y).unwrap();
            }
            let b = batch_nig(&prior, &xs, &ys);
            for (a, e) in s.mean.iter().zip(&b.mean).chain(s.cov.iter().zip(&b.cov)) {
                prop_assert!((a - e).abs() < 1e-10);
            }
            prop_assert!((s.beta - b.beta).abs() < 1e-10 * b.beta.max(1.0));

            let mut bs = BetaStats { alpha: 1.0, beta: 1.0 };
            let flips: Vec<f64> = ys.iter().map(|y| if *y > 0.0 { 1.0 } else { 0.0 }).collect();
            for &y in &flips {
                bs = beta_update(bs, y).unwrap();
            }
            let ones: f64 = flips.iter().sum();
            prop_assert_eq!(bs, BetaStats { alpha: 1.0 + ones, beta: 1.0 + 50.0 - ones });
        }

        #[test]
        fn precision_only_grows(seed in any::<u64>()) {
            // V_t⁻¹ − V_0⁻¹ = Σ x xᵀ is positive semidefinite.
            let mut rng = RngStream::new(seed);
            let prior = NigStats::standard(3);
            let mut s = prior.clone();
            for _ in 0..10 {
                let x: Vec<f64> = (0..3).map(|_| standard_normal(&mut rng)).collect();
                s = nig_update(&s, &x, standard_normal(&mut rng)).unwrap();
            }
            let diff: Vec<f64> = s.precision.iter().zip(&prior.precision).map(|(a, b)| a - b).collect();
            for _ in 0..20 {
                let v: Vec<f64> = (0..3).map(|_| standard_normal(&mut rng)).collect();
                prop_assert!(quad_form(&diff, &v, 3) >= -1e-10);
            }
            prop_assert_eq!(s.alpha, prior.alpha + 5.0);
        }
    }
}
