//! Small dense linear algebra on row-major `f64` slices.
//!
//! Matrices here are tiny (parameter dimensions of a bandit arm), so every
//! routine works in place on caller-provided buffers and never allocates on
//! the hot path.

use crate::error::{Error, Result};

/// Pivots below this fraction of the largest diagonal entry are treated as zero.
const PSD_TOL: f64 = 1e-12;

/// A symmetric positive (semi-)definite matrix together with its Cholesky factor.
///
/// The zero matrix is accepted as the degenerate point-mass limit.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    dim: usize,
    data: Vec<f64>,
    chol: Vec<f64>,
}

impl SpdMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::contract("matrix dimension must be positive"));
        }
        if data.len() != dim * dim {
            return Err(Error::contract(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("matrix has non-finite entries"));
        }
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..dim {
            for j in 0..i {
                if (data[i * dim + j] - data[j * dim + i]).abs() > 1e-12 * scale {
                    return Err(Error::numeric("matrix is not symmetric"));
                }
            }
        }
        let chol = cholesky(&data, dim)?;
        Ok(Self { dim, data, chol })
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    /// `scale * I`; a zero scale yields the degenerate zero matrix.
    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        assert!(scale >= 0.0 && scale.is_finite(), "scale must be nonnegative");
        let mut data = vec![0.0; dim * dim];
        let mut chol = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = scale;
            chol[i * dim + i] = scale.sqrt();
        }
        Self { dim, data, chol }
    }

    /// Builds from an arbitrary square matrix by symmetrizing it first.
    pub fn from_symmetrized(dim: usize, mut data: Vec<f64>) -> Result<Self> {
        symmetrize(&mut data, dim);
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Lower-triangular factor `L` with `L Lᵀ = self`.
    pub fn cholesky_factor(&self) -> &[f64] {
        &self.chol
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Inverse of a strictly positive definite matrix.
    pub fn inverse(&self) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim * self.dim];
        let mut scratch = vec![0.0; self.dim * self.dim];
        spd_inverse_into(&self.data, self.dim, &mut out, &mut scratch)?;
        Ok(out)
    }
}

/// Cholesky factorization `m = L Lᵀ`, returning `L` (row-major, lower triangular).
///
/// Positive semidefinite input is accepted when its null directions are exact
/// (zero pivots with zero remaining column), which covers the zero matrix.
pub fn cholesky(m: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = m.to_vec();
    cholesky_in_place(&mut l, d)?;
    Ok(l)
}

/// In-place Cholesky; on success `a` holds `L` with the upper triangle zeroed.
pub fn cholesky_in_place(a: &mut [f64], d: usize) -> Result<()> {
    if a.len() != d * d {
        return Err(Error::contract("cholesky: buffer is not d*d"));
    }
    let mut max_diag = 0.0f64;
    for i in 0..d {
        max_diag = max_diag.max(a[i * d + i].abs());
    }
    let tol = PSD_TOL * max_diag.max(f64::MIN_POSITIVE);
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if diag > tol {
            let ljj = diag.sqrt();
            a[j * d + j] = ljj;
            for i in (j + 1)..d {
                let mut s = a[i * d + j];
                for k in 0..j {
                    s -= a[i * d + k] * a[j * d + k];
                }
                a[i * d + j] = s / ljj;
            }
        } else if diag >= -tol {
            // Null direction: the remaining column must vanish as well.
            a[j * d + j] = 0.0;
            for i in (j + 1)..d {
                let mut s = a[i * d + j];
                for k in 0..j {
                    s -= a[i * d + k] * a[j * d + k];
                }
                if s.abs() > tol.sqrt() {
                    return Err(Error::numeric("matrix is not positive semidefinite"));
                }
                a[i * d + j] = 0.0;
            }
        } else {
            return Err(Error::numeric(format!(
                "matrix is not positive definite (pivot {diag:e} at column {j})"
            )));
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            a[i * d + j] = 0.0;
        }
    }
    Ok(())
}

/// Inverse of an SPD matrix via its Cholesky factor. `scratch` needs `d*d` slots.
pub fn spd_inverse_into(m: &[f64], d: usize, out: &mut [f64], scratch: &mut [f64]) -> Result<()> {
    scratch[..d * d].copy_from_slice(&m[..d * d]);
    cholesky_in_place(&mut scratch[..d * d], d)?;
    let l = &scratch[..d * d];
    for i in 0..d {
        if l[i * d + i] <= 0.0 {
            return Err(Error::numeric("matrix is singular"));
        }
    }
    // Solve L Lᵀ X = I column by column.
    for c in 0..d {
        // forward: L y = e_c, stored in out column c
        for i in 0..d {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[i * d + k] * out[k * d + c];
            }
            out[i * d + c] = s / l[i * d + i];
        }
        // backward: Lᵀ x = y
        for i in (0..d).rev() {
            let mut s = out[i * d + c];
            for k in (i + 1)..d {
                s -= l[k * d + i] * out[k * d + c];
            }
            out[i * d + c] = s / l[i * d + i];
        }
    }
    symmetrize(&mut out[..d * d], d);
    Ok(())
}

/// Solves `m x = b` for SPD `m`.
pub fn spd_solve(m: &[f64], d: usize, b: &[f64]) -> Result<Vec<f64>> {
    let l = cholesky(m, d)?;
    for i in 0..d {
        if l[i * d + i] <= 0.0 {
            return Err(Error::numeric("matrix is singular"));
        }
    }
    let mut y = b.to_vec();
    for i in 0..d {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * d + k] * y[k];
        }
        y[i] = s / l[i * d + i];
    }
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in (i + 1)..d {
            s -= l[k * d + i] * y[k];
        }
        y[i] = s / l[i * d + i];
    }
    Ok(y)
}

pub fn symmetrize(a: &mut [f64], d: usize) {
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (a[i * d + j] + a[j * d + i]);
            a[i * d + j] = v;
            a[j * d + i] = v;
        }
    }
}

/// `out = a (n×k) · b (k×m)`.
pub fn mat_mul_into(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * m + j];
            }
            out[i * m + j] = s;
        }
    }
}

/// `out = a (n×k) · bᵀ` where `b` is `m×k`.
pub fn mat_mul_transposed_into(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[j * k + p];
            }
            out[i * m + j] = s;
        }
    }
}

/// `out = a (n×m) · x`.
#[inline]
pub fn mat_vec_into(a: &[f64], x: &[f64], n: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let row = &a[i * m..(i + 1) * m];
        out[i] = dot(row, x);
    }
}

/// `out = l · z` for lower-triangular `l` (d×d).
#[inline]
pub fn lower_mat_vec_into(l: &[f64], z: &[f64], d: usize, out: &mut [f64]) {
    for i in 0..d {
        let mut s = 0.0;
        for k in 0..=i {
            s += l[i * d + k] * z[k];
        }
        out[i] = s;
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `xᵀ a x`.
pub fn quad_form(a: &[f64], x: &[f64], d: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        let mut r = 0.0;
        for j in 0..d {
            r += a[i * d + j] * x[j];
        }
        s += x[i] * r;
    }
    s
}

/// `a += scale · u vᵀ`.
#[inline]
pub fn add_outer(a: &mut [f64], u: &[f64], v: &[f64], scale: f64) {
    let m = v.len();
    for (i, ui) in u.iter().enumerate() {
        let f = scale * ui;
        for (j, vj) in v.iter().enumerate() {
            a[i * m + j] += f * vj;
        }
    }
}

pub fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

/// Block-diagonal matrix with `blocks` copies of the `d×d` matrix `b`.
pub fn block_diagonal(b: &[f64], d: usize, blocks: usize) -> Vec<f64> {
    let n = d * blocks;
    let mut out = vec![0.0; n * n];
    for k in 0..blocks {
        for i in 0..d {
            for j in 0..d {
                out[(k * d + i) * n + k * d + j] = b[i * d + j];
            }
        }
    }
    out
}
