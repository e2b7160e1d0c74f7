//! Random sampling, univariate CDFs and quantiles, and the dense linear
//! algebra the rest of the engine relies on.

pub mod linalg;
mod rng;

pub use linalg::{cholesky, SpdMatrix};
pub use rng::RngStream;

use rand_distr::{Beta as BetaDist, Distribution, Gamma, StandardNormal};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Tolerance on the total mass accepted by [`sample_categorical`].
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

const QUANTILE_MAX_ITER: usize = 200;
const QUANTILE_TOL: f64 = 1e-12;

#[inline]
pub fn standard_normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

/// Gamma(shape, scale) draw.
pub fn sample_gamma(shape: f64, scale: f64, rng: &mut RngStream) -> Result<f64> {
    let g = Gamma::new(shape, scale).map_err(|e| Error::domain(format!("gamma({shape}, {scale}): {e}")))?;
    Ok(g.sample(rng))
}

/// Inverse-gamma draw with shape `alpha` and scale `beta` (mean `beta/(alpha-1)`).
pub fn sample_inverse_gamma(alpha: f64, beta: f64, rng: &mut RngStream) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::domain(format!(
            "inverse-gamma scale must be positive, got {beta}"
        )));
    }
    Ok(1.0 / sample_gamma(alpha, 1.0 / beta, rng)?)
}

pub fn sample_beta(a: f64, b: f64, rng: &mut RngStream) -> Result<f64> {
    let d = BetaDist::new(a, b).map_err(|e| Error::domain(format!("beta({a}, {b}): {e}")))?;
    Ok(d.sample(rng))
}

/// Draw from N(mean, cov).
pub fn sample_mvn(mean: &[f64], cov: &SpdMatrix, rng: &mut RngStream) -> Result<Vec<f64>> {
    if cov.dim() != mean.len() {
        return Err(Error::contract(format!(
            "covariance is {}x{} but mean has length {}",
            cov.dim(),
            cov.dim(),
            mean.len()
        )));
    }
    let d = mean.len();
    let mut z = vec![0.0; d];
    let mut out = vec![0.0; d];
    sample_mvn_into(mean, cov.cholesky_factor(), rng, &mut z, &mut out);
    Ok(out)
}

/// Allocation-free N(mean, L Lᵀ) draw given the Cholesky factor `chol`.
#[inline]
pub fn sample_mvn_into(mean: &[f64], chol: &[f64], rng: &mut RngStream, z: &mut [f64], out: &mut [f64]) {
    let d = mean.len();
    for zi in z.iter_mut().take(d) {
        *zi = standard_normal(rng);
    }
    linalg::lower_mat_vec_into(chol, z, d, out);
    for (o, m) in out.iter_mut().zip(mean) {
        *o += m;
    }
}

/// Multivariate Student-t draw: `loc + N(0, scale) · sqrt(dof / χ²(dof))`.
pub fn sample_mvt(dof: f64, loc: &[f64], scale: &SpdMatrix, rng: &mut RngStream) -> Result<Vec<f64>> {
    if scale.dim() != loc.len() {
        return Err(Error::contract("scale dimension does not match location"));
    }
    let d = loc.len();
    let mut z = vec![0.0; d];
    let mut out = vec![0.0; d];
    sample_mvt_into(dof, loc, scale.cholesky_factor(), rng, &mut z, &mut out)?;
    Ok(out)
}

pub fn sample_mvt_into(
    dof: f64,
    loc: &[f64],
    chol: &[f64],
    rng: &mut RngStream,
    z: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    if !(dof > 0.0) {
        return Err(Error::domain(format!("degrees of freedom must be positive, got {dof}")));
    }
    let d = loc.len();
    for zi in z.iter_mut().take(d) {
        *zi = standard_normal(rng);
    }
    let chi2 = sample_gamma(0.5 * dof, 2.0, rng)?;
    let f = (dof / chi2).sqrt();
    linalg::lower_mat_vec_into(chol, z, d, out);
    for (o, m) in out.iter_mut().zip(loc) {
        *o = m + *o * f;
    }
    Ok(())
}

/// Checks that `weights` is a probability vector.
pub fn check_normalized(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::contract("empty weight vector"));
    }
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::contract(format!("invalid weight {w}")));
        }
        total += w;
    }
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::contract(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Index drawn with probability proportional to `weights`, by cumulative-sum inversion.
pub fn sample_categorical(weights: &[f64], rng: &mut RngStream) -> Result<usize> {
    check_normalized(weights)?;
    Ok(categorical_unchecked(weights, rng))
}

#[inline]
pub(crate) fn categorical_unchecked(weights: &[f64], rng: &mut RngStream) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Univariate distributions with a CDF and a numerically inverted quantile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Univariate {
    Beta {
        alpha: f64,
        beta: f64,
    },
    Gaussian {
        mean: f64,
        variance: f64,
    },
    /// Location-scale Student-t; `scale` is the squared scale (variance-like) parameter.
    StudentT {
        dof: f64,
        loc: f64,
        scale: f64,
    },
}

impl Univariate {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Univariate::Beta { alpha, beta } => alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite(),
            Univariate::Gaussian { mean, variance } => mean.is_finite() && variance >= 0.0 && variance.is_finite(),
            Univariate::StudentT { dof, loc, scale } => {
                dof > 0.0 && loc.is_finite() && scale >= 0.0 && scale.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid distribution parameters {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Univariate::Beta { alpha, beta } => alpha / (alpha + beta),
            Univariate::Gaussian { mean, .. } => mean,
            Univariate::StudentT { loc, .. } => loc,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Univariate::Beta { alpha, beta } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    beta_reg(alpha, beta, x)
                }
            }
            Univariate::Gaussian { mean, variance } => {
                if variance == 0.0 {
                    return if x < mean { 0.0 } else { 1.0 };
                }
                0.5 * erfc(-(x - mean) / (2.0 * variance).sqrt())
            }
            Univariate::StudentT { dof, loc, scale } => {
                if scale == 0.0 {
                    return if x < loc { 0.0 } else { 1.0 };
                }
                let t = (x - loc) / scale.sqrt();
                let tail = 0.5 * beta_reg(0.5 * dof, 0.5, dof / (dof + t * t));
                if t > 0.0 {
                    1.0 - tail
                } else {
                    tail
                }
            }
        }
    }

    /// The `x` with `cdf(x) = p`, by bracketed bisection.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("quantile level must lie in (0, 1), got {p}")));
        }
        self.validate()?;
        let (mut lo, mut hi) = match *self {
            Univariate::Beta { .. } => (0.0, 1.0),
            Univariate::Gaussian { mean, variance } => {
                if variance == 0.0 {
                    return Ok(mean);
                }
                self.bracket(mean, variance.sqrt(), p)
            }
            Univariate::StudentT { loc, scale, .. } => {
                if scale == 0.0 {
                    return Ok(loc);
                }
                self.bracket(loc, scale.sqrt(), p)
            }
        };
        for _ in 0..QUANTILE_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= QUANTILE_TOL * mid.abs().max(1.0) {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn bracket(&self, center: f64, width: f64, p: f64) -> (f64, f64) {
        let mut w = width;
        let mut lo = center - w;
        while self.cdf(lo) >= p && w.is_finite() {
            w *= 2.0;
            lo = center - w;
        }
        let mut w = width;
        let mut hi = center + w;
        while self.cdf(hi) < p && w.is_finite() {
            w *= 2.0;
            hi = center + w;
        }
        (lo, hi)
    }
}

/// Convenience wrapper around [`Univariate::quantile`].
pub fn quantile(dist: Univariate, p: f64) -> Result<f64> {
    dist.quantile(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Maclaurin series for erf, independent of the library implementation.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        2.0 / std::f64::consts::PI.sqrt() * sum
    }

    #[test]
    fn mvn_zero_covariance_is_point_mass() {
        let mut rng = RngStream::new(1);
        let cov = SpdMatrix::new(2, vec![0.0; 4]).unwrap();
        assert_eq!(sample_mvn(&[0.0, 0.0], &cov, &mut rng).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn mvn_sample_mean() {
        let mut rng = RngStream::new(2);
        let cov = SpdMatrix::identity(2);
        let n = 100_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let x = sample_mvn(&[1.0, 2.0], &cov, &mut rng).unwrap();
            sum[0] += x[0];
            sum[1] += x[1];
        }
        assert!((sum[0] / n as f64 - 1.0).abs() < 0.02);
        assert!((sum[1] / n as f64 - 2.0).abs() < 0.02);
    }

    #[test]
    fn mvn_is_deterministic() {
        let cov = SpdMatrix::new(2, vec![2.0, 0.3, 0.3, 1.0]).unwrap();
        let a = sample_mvn(&[0.5, -1.0], &cov, &mut RngStream::new(77)).unwrap();
        let b = sample_mvn(&[0.5, -1.0], &cov, &mut RngStream::new(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mvn_dimension_mismatch() {
        let cov = SpdMatrix::identity(3);
        assert!(matches!(
            sample_mvn(&[0.0, 0.0], &cov, &mut RngStream::new(0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn mvt_zero_scale_returns_location() {
        let scale = SpdMatrix::scaled_identity(3, 0.0);
        let loc = [1.5, -2.0, 0.25];
        let x = sample_mvt(4.0, &loc, &scale, &mut RngStream::new(3)).unwrap();
        assert_eq!(x, loc.to_vec());
    }

    #[test]
    fn mvt_rejects_nonpositive_dof() {
        let scale = SpdMatrix::identity(1);
        assert!(matches!(
            sample_mvt(0.0, &[0.0], &scale, &mut RngStream::new(0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            sample_mvt(-1.0, &[0.0], &scale, &mut RngStream::new(0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn mvt_large_dof_covariance_near_scale() {
        let mut rng = RngStream::new(4);
        let scale = SpdMatrix::identity(2);
        let n = 100_000;
        let mut s = [0.0; 3];
        for _ in 0..n {
            let x = sample_mvt(1e6, &[0.0, 0.0], &scale, &mut rng).unwrap();
            s[0] += x[0] * x[0];
            s[1] += x[0] * x[1];
            s[2] += x[1] * x[1];
        }
        let nf = n as f64;
        assert!((s[0] / nf - 1.0).abs() < 0.05);
        assert!((s[2] / nf - 1.0).abs() < 0.05);
        assert!((s[1] / nf).abs() < 0.05);
    }

    #[test]
    fn mvt_three_dof_tail_mass() {
        // Two-sided 5% critical value of t(3), found by inverting the CDF.
        let crit = Univariate::StudentT {
            dof: 3.0,
            loc: 0.0,
            scale: 1.0,
        }
        .quantile(0.975)
        .unwrap();
        assert!((crit - 3.182).abs() < 1e-3);
        let mut rng = RngStream::new(5);
        let scale = SpdMatrix::identity(1);
        let n = 1_000_000;
        let mut exceed = 0usize;
        for _ in 0..n {
            let x = sample_mvt(3.0, &[0.0], &scale, &mut rng).unwrap();
            if x[0].abs() > 3.182 {
                exceed += 1;
            }
        }
        let frac = exceed as f64 / n as f64;
        assert!((frac - 0.05).abs() < 0.002, "tail fraction {frac}");
    }

    #[test]
    fn quantile_examples() {
        let q = Univariate::Beta { alpha: 1.0, beta: 1.0 }.quantile(0.5).unwrap();
        assert!((q - 0.5).abs() < 1e-10);
        let q = Univariate::Beta { alpha: 2.0, beta: 1.0 }.quantile(0.5).unwrap();
        assert!((q - 0.5f64.sqrt()).abs() < 1e-10);
        let q = Univariate::Gaussian {
            mean: 0.0,
            variance: 1.0,
        }
        .quantile(0.975)
        .unwrap();
        assert!((q - 1.959964).abs() < 1e-5);
        // cross-check against the series oracle: Φ(q) = (1 + erf(q/√2))/2
        let phi = 0.5 * (1.0 + erf_series(q / 2f64.sqrt()));
        assert!((phi - 0.975).abs() < 1e-10);
    }

    #[test]
    fn quantile_rejects_bad_levels() {
        let d = Univariate::Gaussian {
            mean: 0.0,
            variance: 1.0,
        };
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(d.quantile(p), Err(Error::Domain(_))));
        }
        assert!(Univariate::Beta { alpha: 0.0, beta: 1.0 }.quantile(0.5).is_err());
    }

    #[test]
    fn quantile_degenerate_point_mass() {
        assert_eq!(
            Univariate::Gaussian {
                mean: 3.0,
                variance: 0.0
            }
            .quantile(0.9)
            .unwrap(),
            3.0
        );
        assert_eq!(
            Univariate::StudentT {
                dof: 3.0,
                loc: -1.0,
                scale: 0.0
            }
            .quantile(0.1)
            .unwrap(),
            -1.0
        );
    }

    #[test]
    fn gaussian_cdf_matches_series() {
        for &x in &[-3.0, -1.2, -0.1, 0.0, 0.4, 1.0, 2.5] {
            let ours = Univariate::Gaussian {
                mean: 0.0,
                variance: 1.0,
            }
            .cdf(x);
            let oracle = 0.5 * (1.0 + erf_series(x / 2f64.sqrt()));
            assert!((ours - oracle).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn student_t_cdf_known_values() {
        // t(1) is Cauchy: F(x) = 1/2 + atan(x)/π
        let d = Univariate::StudentT {
            dof: 1.0,
            loc: 0.0,
            scale: 1.0,
        };
        for &x in &[-4.0, -1.0, 0.0, 0.3, 2.0] {
            let exact = 0.5 + f64::atan(x) / std::f64::consts::PI;
            assert!((d.cdf(x) - exact).abs() < 1e-12);
        }
        // t(2): F(x) = 1/2 + x / (2 sqrt(2 + x²))
        let d = Univariate::StudentT {
            dof: 2.0,
            loc: 1.0,
            scale: 4.0,
        };
        for &x in &[-3.0, 0.0, 1.0, 5.0] {
            let t: f64 = (x - 1.0) / 2.0;
            let exact = 0.5 + t / (2.0 * (2.0 + t * t).sqrt());
            assert!((d.cdf(x) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn categorical_point_masses() {
        let mut rng = RngStream::new(6);
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
            assert_eq!(sample_categorical(&[0.0, 0.0, 1.0], &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn categorical_fair_coin() {
        let mut rng = RngStream::new(7);
        let zeros = (0..10_000)
            .filter(|_| sample_categorical(&[0.5, 0.5], &mut rng).unwrap() == 0)
            .count();
        assert!((4800..=5200).contains(&zeros), "{zeros}");
    }

    #[test]
    fn categorical_rejects_bad_weights() {
        let mut rng = RngStream::new(8);
        assert!(matches!(
            sample_categorical(&[0.5, 0.4], &mut rng),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            sample_categorical(&[1.5, -0.5], &mut rng),
            Err(Error::Contract(_))
        ));
        assert!(matches!(sample_categorical(&[], &mut rng), Err(Error::Contract(_))));
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = RngStream::new(9);
        let n = 200_000;
        let mean: f64 = (0..n)
            .map(|_| sample_inverse_gamma(4.0, 3.0, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        // mean = 3 / (4 - 1) = 1, sd = 1/sqrt(2)
        assert!((mean - 1.0).abs() < 4.0 * (0.5f64).sqrt() / (n as f64).sqrt());
    }
}
