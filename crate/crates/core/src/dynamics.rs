//! Parameter transition kernels `p(θ_t | θ_{t-1})`.
//!
//! Unknown linear-Gaussian dynamics are handled by marginalizing the mixing
//! matrix and noise covariance under a matrix-normal / inverse-Wishart prior,
//! leaving a multivariate-t transition whose parameters depend on the particle's
//! own trajectory only through three running cross-product accumulators.

use crate::distributions::linalg::{
    add_outer, cholesky_in_place, mat_mul_into, mat_mul_transposed_into, mat_vec_into, quad_form, spd_inverse_into,
    symmetrize, SpdMatrix,
};
use crate::distributions::{sample_mvn_into, sample_mvt_into, standard_normal, RngStream};
use crate::error::{Error, Result};
use crate::smc::WeightedParticleSet;

/// Default jitter standard deviation for [`DynamicsSpec::StaticJitter`].
pub const DEFAULT_JITTER: f64 = 0.01;

/// Ridge added to `R_t` before factorizing it.
const SCALE_RIDGE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum DynamicsSpec {
    Static,
    /// Random walk `θ_t = θ_{t-1} + N(0, σ² I)`.
    StaticJitter {
        sigma: f64,
    },
    /// `θ_t = L θ_{t-1} + N(0, Σ)` with `L` row-major.
    KnownLinear {
        transition: Vec<f64>,
        noise: SpdMatrix,
    },
    /// Linear-Gaussian dynamics with `(L, Σ)` integrated out.
    UnknownLinear {
        l0: Vec<f64>,
        b0: SpdMatrix,
        v0: SpdMatrix,
        nu0: f64,
    },
}

impl DynamicsSpec {
    /// Weakly informative prior for unknown dynamics: `L_0 = I`, `B_0 = I`,
    /// `V_0 = 0.1 I`, `ν_0 = d + 1`.
    pub fn unknown_default(dim: usize) -> Self {
        DynamicsSpec::UnknownLinear {
            l0: crate::distributions::linalg::identity(dim),
            b0: SpdMatrix::identity(dim),
            v0: SpdMatrix::scaled_identity(dim, 0.1),
            nu0: dim as f64 + 1.0,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            DynamicsSpec::Static => Ok(()),
            DynamicsSpec::StaticJitter { sigma } => {
                if *sigma >= 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config("dynamics.sigma", "jitter must be a nonnegative number"))
                }
            }
            DynamicsSpec::KnownLinear { transition, noise } => {
                if transition.len() != dim * dim {
                    return Err(Error::config(
                        "dynamics.transition",
                        format!("expected {} entries, got {}", dim * dim, transition.len()),
                    ));
                }
                if noise.dim() != dim {
                    return Err(Error::config(
                        "dynamics.noise",
                        format!("expected a {dim}x{dim} matrix"),
                    ));
                }
                Ok(())
            }
            DynamicsSpec::UnknownLinear { l0, b0, v0, nu0 } => {
                if l0.len() != dim * dim || b0.dim() != dim || v0.dim() != dim {
                    return Err(Error::config(
                        "dynamics.prior",
                        format!("prior blocks must be {dim}x{dim}"),
                    ));
                }
                if b0.inverse().is_err() || v0.inverse().is_err() {
                    return Err(Error::config("dynamics.prior", "B0 and V0 must be positive definite"));
                }
                if !(*nu0 > dim as f64 - 1.0) {
                    return Err(Error::config(
                        "dynamics.nu0",
                        format!("must exceed {}", dim as f64 - 1.0),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn tracks_statistics(&self) -> bool {
        matches!(self, DynamicsSpec::UnknownLinear { .. })
    }
}

/// Per-particle transition history.
///
/// `steps` counts the `(θ_{k-1}, θ_k)` pairs seen so far. The accumulators are
/// only kept (and only sized) for unknown dynamics; the last state is the
/// particle's current θ.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionStats {
    pub steps: u64,
    /// `Σ θ_k θ_{k-1}ᵀ`
    pub s10: Vec<f64>,
    /// `Σ θ_{k-1} θ_{k-1}ᵀ`
    pub s00: Vec<f64>,
    /// `Σ θ_k θ_kᵀ`
    pub s11: Vec<f64>,
}

impl TransitionStats {
    pub fn new(dim: usize, tracked: bool) -> Self {
        let n = if tracked { dim * dim } else { 0 };
        Self {
            steps: 0,
            s10: vec![0.0; n],
            s00: vec![0.0; n],
            s11: vec![0.0; n],
        }
    }

    pub fn is_tracked(&self) -> bool {
        !self.s00.is_empty()
    }

    /// Rank-1 update with one transition.
    #[inline]
    pub fn record(&mut self, prev: &[f64], next: &[f64]) {
        self.steps += 1;
        if self.is_tracked() {
            add_outer(&mut self.s10, next, prev, 1.0);
            add_outer(&mut self.s00, prev, prev, 1.0);
            add_outer(&mut self.s11, next, next, 1.0);
        }
    }

    /// Overwrites `self` with `other` without reallocating.
    #[inline]
    pub fn copy_from(&mut self, other: &TransitionStats) {
        self.steps = other.steps;
        self.s10.clone_from(&other.s10);
        self.s00.clone_from(&other.s00);
        self.s11.clone_from(&other.s11);
    }
}

/// Multivariate-t transition `t_ν(m, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPosterior {
    pub dof: f64,
    pub loc: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Unknown-dynamics transition parameters `(ν_t, m_t, R_t)` from the
/// particle's accumulators and its last state.
pub fn transition_posterior_params(
    stats: &TransitionStats,
    theta_prev: &[f64],
    spec: &DynamicsSpec,
) -> Result<TransitionPosterior> {
    let d = theta_prev.len();
    spec.validate(d)?;
    let mut kernel = TransitionKernel::new(spec, d)?;
    if !stats.is_tracked() {
        return Err(Error::contract("transition statistics were not tracked"));
    }
    let dof = kernel.posterior_into(stats, theta_prev)?;
    let w = &kernel.ws;
    Ok(TransitionPosterior {
        dof,
        loc: w.m.clone(),
        scale: w.r.clone(),
    })
}

/// Scratch buffers reused across propagations.
#[derive(Debug, Clone)]
struct Workspace {
    b: Vec<f64>,
    tmp: Vec<f64>,
    tmp2: Vec<f64>,
    l: Vec<f64>,
    v: Vec<f64>,
    r: Vec<f64>,
    m: Vec<f64>,
    z: Vec<f64>,
}

impl Workspace {
    fn new(d: usize) -> Self {
        let dd = d * d;
        Self {
            b: vec![0.0; dd],
            tmp: vec![0.0; dd],
            tmp2: vec![0.0; dd],
            l: vec![0.0; dd],
            v: vec![0.0; dd],
            r: vec![0.0; dd],
            m: vec![0.0; d],
            z: vec![0.0; d],
        }
    }
}

#[derive(Debug, Clone)]
enum Prepared {
    Static,
    Jitter(f64),
    Known {
        transition: Vec<f64>,
        chol: Vec<f64>,
    },
    Unknown {
        l0: Vec<f64>,
        b0_inv: Vec<f64>,
        /// `L_0 B_0⁻¹`
        l0_b0_inv: Vec<f64>,
        v0: Vec<f64>,
        nu0: f64,
    },
}

/// A transition kernel with its constant factors precomputed and its own
/// scratch space, so that propagating a particle does not allocate.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    dim: usize,
    prepared: Prepared,
    ws: Workspace,
}

impl TransitionKernel {
    pub fn new(spec: &DynamicsSpec, dim: usize) -> Result<Self> {
        spec.validate(dim)?;
        let prepared = match spec {
            DynamicsSpec::Static => Prepared::Static,
            DynamicsSpec::StaticJitter { sigma } => {
                if *sigma == 0.0 {
                    Prepared::Static
                } else {
                    Prepared::Jitter(*sigma)
                }
            }
            DynamicsSpec::KnownLinear { transition, noise } => Prepared::Known {
                transition: transition.clone(),
                chol: noise.cholesky_factor().to_vec(),
            },
            DynamicsSpec::UnknownLinear { l0, b0, v0, nu0 } => {
                let b0_inv = b0.inverse()?;
                let mut l0_b0_inv = vec![0.0; dim * dim];
                mat_mul_into(l0, &b0_inv, dim, dim, dim, &mut l0_b0_inv);
                Prepared::Unknown {
                    l0: l0.clone(),
                    b0_inv,
                    l0_b0_inv,
                    v0: v0.as_slice().to_vec(),
                    nu0: *nu0,
                }
            }
        };
        Ok(Self {
            dim,
            prepared,
            ws: Workspace::new(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tracks_statistics(&self) -> bool {
        matches!(self.prepared, Prepared::Unknown { .. })
    }

    /// True when propagation leaves θ unchanged.
    pub fn is_identity(&self) -> bool {
        matches!(self.prepared, Prepared::Static)
    }

    pub fn new_stats(&self) -> TransitionStats {
        TransitionStats::new(self.dim, self.tracks_statistics())
    }

    /// Fills `ws.m` and `ws.r` with `m_t` and `R_t`; returns `ν_t`.
    fn posterior_into(&mut self, stats: &TransitionStats, theta: &[f64]) -> Result<f64> {
        let d = self.dim;
        let Prepared::Unknown {
            l0,
            b0_inv,
            l0_b0_inv,
            v0,
            nu0,
        } = &self.prepared
        else {
            return Err(Error::contract("transition posterior needs unknown linear dynamics"));
        };
        let t = stats.steps as f64 + 1.0;
        let nu = nu0 + t - d as f64;
        if !(nu > 0.0) {
            return Err(Error::config("dynamics.nu0", format!("ν_t = {nu} is not positive")));
        }
        let w = &mut self.ws;

        // B = (S00 + B0⁻¹)⁻¹
        for ((o, s), p) in w.tmp.iter_mut().zip(&stats.s00).zip(b0_inv) {
            *o = s + p;
        }
        spd_inverse_into(&w.tmp, d, &mut w.b, &mut w.tmp2)
            .map_err(|_| Error::numeric("transition posterior: S00 + B0⁻¹ is singular"))?;

        // L = (S10 + L0 B0⁻¹) B
        for ((o, s), p) in w.tmp.iter_mut().zip(&stats.s10).zip(l0_b0_inv) {
            *o = s + p;
        }
        mat_mul_into(&w.tmp, &w.b, d, d, d, &mut w.l);

        // V = S11 − L S10ᵀ − S10 Lᵀ + L S00 Lᵀ + (L − L0) B0⁻¹ (L − L0)ᵀ + V0
        w.v.copy_from_slice(&stats.s11);
        mat_mul_transposed_into(&w.l, &stats.s10, d, d, d, &mut w.tmp);
        for i in 0..d {
            for j in 0..d {
                w.v[i * d + j] -= w.tmp[i * d + j] + w.tmp[j * d + i];
            }
        }
        mat_mul_into(&w.l, &stats.s00, d, d, d, &mut w.tmp);
        mat_mul_transposed_into(&w.tmp, &w.l, d, d, d, &mut w.tmp2);
        for (v, x) in w.v.iter_mut().zip(&w.tmp2) {
            *v += x;
        }
        for ((o, a), b) in w.r.iter_mut().zip(&w.l).zip(l0) {
            *o = a - b;
        }
        mat_mul_into(&w.r, b0_inv, d, d, d, &mut w.tmp);
        mat_mul_transposed_into(&w.tmp, &w.r, d, d, d, &mut w.tmp2);
        for ((v, x), p) in w.v.iter_mut().zip(&w.tmp2).zip(v0) {
            *v += x + p;
        }

        mat_vec_into(&w.l, theta, d, d, &mut w.m);

        // 1 / (1 − θᵀ(θθᵀ + B⁻¹)⁻¹θ) = 1 + θᵀBθ
        let inflate = (1.0 + quad_form(&w.b, theta, d)) / nu;
        for (r, v) in w.r.iter_mut().zip(&w.v) {
            *r = v * inflate;
        }
        symmetrize(&mut w.r, d);
        Ok(nu)
    }

    /// Draws `θ_next ~ p(· | θ_prev)` into `out` without touching `stats`.
    pub fn sample_next(
        &mut self,
        theta_prev: &[f64],
        stats: &TransitionStats,
        rng: &mut RngStream,
        out: &mut [f64],
    ) -> Result<()> {
        let d = self.dim;
        match &self.prepared {
            Prepared::Static => out.copy_from_slice(theta_prev),
            Prepared::Jitter(sigma) => {
                for (o, p) in out.iter_mut().zip(theta_prev) {
                    *o = p + sigma * standard_normal(rng);
                }
            }
            Prepared::Known { transition, chol } => {
                mat_vec_into(transition, theta_prev, d, d, &mut self.ws.m);
                sample_mvn_into(&self.ws.m, chol, rng, &mut self.ws.z, out);
            }
            Prepared::Unknown { .. } => {
                let dof = self.posterior_into(stats, theta_prev)?;
                let w = &mut self.ws;
                for i in 0..d {
                    w.r[i * d + i] += SCALE_RIDGE;
                }
                cholesky_in_place(&mut w.r, d)
                    .map_err(|_| Error::numeric("transition scale is not positive definite"))?;
                sample_mvt_into(dof, &w.m, &w.r, rng, &mut w.z, out)?;
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("propagated parameter is not finite"));
        }
        Ok(())
    }

    /// Moves `theta` one step forward and records the transition in `stats`.
    /// `scratch` must hold `dim` values.
    pub fn propagate_in_place(
        &mut self,
        theta: &mut [f64],
        stats: &mut TransitionStats,
        rng: &mut RngStream,
        scratch: &mut [f64],
    ) -> Result<()> {
        if self.is_identity() {
            stats.steps += 1;
            return Ok(());
        }
        self.sample_next(theta, stats, rng, scratch)?;
        stats.record(theta, scratch);
        theta.copy_from_slice(scratch);
        Ok(())
    }
}

/// One transition of a single particle.
pub fn propagate(
    theta_prev: &[f64],
    stats: &TransitionStats,
    spec: &DynamicsSpec,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, TransitionStats)> {
    let d = theta_prev.len();
    let mut kernel = TransitionKernel::new(spec, d)?;
    let mut next = vec![0.0; d];
    kernel.sample_next(theta_prev, stats, rng, &mut next)?;
    let mut stats = stats.clone();
    stats.record(theta_prev, &next);
    Ok((next, stats))
}

/// A draw from the one-step predictive mixture `Σ_m w_m p(θ_{t+1} | θ_t^(m))`.
/// The particle set is left untouched.
pub fn predictive_mixture_sample(
    set: &WeightedParticleSet,
    kernel: &mut TransitionKernel,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if set.is_empty() {
        return Err(Error::contract("empty particle set"));
    }
    let m = set.sample_index(rng);
    let mut out = vec![0.0; set.dim()];
    kernel.sample_next(set.theta(m), set.stats(m), rng, &mut out)?;
    Ok(out)
}

/// Frobenius distance between two equally sized matrices.
pub fn frobenius_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Running estimate `L_{t-1}` of the mixing matrix under unknown dynamics.
pub fn mixing_estimate(stats: &TransitionStats, spec: &DynamicsSpec, dim: usize) -> Result<Vec<f64>> {
    let mut kernel = TransitionKernel::new(spec, dim)?;
    kernel.posterior_into(stats, &vec![0.0; dim])?;
    Ok(kernel.ws.l.clone())
}

/// Eigenvalues of a symmetric 2×2 matrix, largest first.
pub fn symmetric_eigenvalues_2x2(m: &[f64]) -> [f64; 2] {
    let (a, b, c) = (m[0], m[1], m[3]);
    let mid = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    [mid + rad, mid - rad]
}
