//! Dense kernels used by balancing and CME integration.
//!
//! Matrices are `faer::Mat<f64>` (column-major). The real Schur form and the
//! Bartels–Stewart Lyapunov solver are implemented here on top of faer's
//! blocked Hessenberg reduction; symmetric eigen- and singular value
//! decompositions delegate to faer.

mod expm;
mod lyapunov;
mod schur;

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::Side;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::expm::expm;
pub use self::lyapunov::{lyapunov_residual, solve_lyapunov, solve_lyapunov_schur};
pub use self::schur::{schur, Eigenvalue, SchurForm};

pub type DenseMatrix = faer::Mat<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("{what} did not converge within the iteration cap")]
    NoConvergence { what: &'static str },
    #[error("matrix is not numerically stable (spectral abscissa {abscissa:e})")]
    NotStable { abscissa: f64 },
    #[error("singular block in Sylvester solve (eigenvalues {0:e} and {1:e} sum to ~0)")]
    SingularBlock(f64, f64),
    #[error("singular matrix")]
    Singular,
    #[error("matrix exponential overflows (needs {squarings} squarings)")]
    ExpmOverflow { squarings: u32 },
    #[error("non-finite entries in input")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Numerical tolerances shared by the whole pipeline. All are relative unless
/// noted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Generator columns must sum to zero within this fraction of their
    /// largest entry.
    pub column_sum: f64,
    /// Eigenvalues must satisfy `Re λ < -stability_margin` (absolute, s⁻¹).
    pub stability_margin: f64,
    /// Gramian eigenvalues below `gramian_clip * λ_max` are set to zero. The
    /// default sits at machine epsilon, the resolution of the symmetric
    /// eigensolver.
    pub gramian_clip: f64,
    /// Hankel singular values below `hankel_cutoff * σ₁` are non-minimal.
    pub hankel_cutoff: f64,
    /// Target relative Lyapunov residual.
    pub lyapunov_residual: f64,
    /// Distributions must sum to one within this (absolute).
    pub probability_sum: f64,
    /// Smallest admissible probability entry (absolute, negative).
    pub probability_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            column_sum: 1e-12,
            stability_margin: 1e-12,
            gramian_clip: f64::EPSILON,
            hankel_cutoff: 1e-12,
            lyapunov_residual: 1e-8,
            probability_sum: 1e-8,
            probability_floor: -1e-10,
        }
    }
}

fn check_finite(a: &DenseMatrix) -> Result<(), LinalgError> {
    for j in 0..a.ncols() {
        if a.col(j).iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
    }
    Ok(())
}

fn check_square(a: &DenseMatrix, what: &str) -> Result<(), LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::Dimension(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Frobenius norm.
pub fn fro(a: &DenseMatrix) -> f64 {
    a.norm_l2()
}

/// Symmetric eigendecomposition `S = V diag(λ) Vᵀ`, eigenvalues descending.
pub fn sym_eig(s: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix), LinalgError> {
    check_square(s, "sym_eig input")?;
    check_finite(s)?;
    let n = s.nrows();
    if n == 0 {
        return Ok((Vec::new(), DenseMatrix::zeros(0, 0)));
    }
    let evd = s
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| LinalgError::NoConvergence { what: "symmetric eigensolver" })?;
    let vals: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let u = evd.U();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| u[(i, order[j])]);
    Ok((order.iter().map(|&i| vals[i]).collect(), vectors))
}

/// Singular value decomposition.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    /// Descending, nonnegative.
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

/// Full SVD `M = U diag(s) Vᵀ`.
pub fn svd(m: &DenseMatrix) -> Result<Svd, LinalgError> {
    check_finite(m)?;
    let (r, c) = (m.nrows(), m.ncols());
    if r == 0 || c == 0 {
        return Ok(Svd {
            u: DenseMatrix::identity(r, r),
            s: Vec::new(),
            v: DenseMatrix::identity(c, c),
        });
    }
    let dec = m
        .svd()
        .map_err(|_| LinalgError::NoConvergence { what: "SVD" })?;
    let vals: Vec<f64> = dec.S().column_vector().iter().copied().collect();
    let k = vals.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let (u0, v0) = (dec.U(), dec.V());
    let u = DenseMatrix::from_fn(r, r, |i, j| if j < k { u0[(i, order[j])] } else { u0[(i, j)] });
    let v = DenseMatrix::from_fn(c, c, |i, j| if j < k { v0[(i, order[j])] } else { v0[(i, j)] });
    Ok(Svd { u, s: order.iter().map(|&i| vals[i].max(0.0)).collect(), v })
}

/// Solves `A X = B` by LU with partial pivoting, rejecting numerically
/// singular `A`.
pub fn solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    check_square(a, "solve lhs")?;
    if a.nrows() != b.nrows() {
        return Err(LinalgError::Dimension(format!(
            "lhs is {}x{}, rhs has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    if a.nrows() == 0 {
        return Ok(b.clone());
    }
    check_finite(a)?;
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let diag: Vec<f64> = (0..a.nrows()).map(|i| u[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 || min <= f64::EPSILON * a.nrows() as f64 * max {
        return Err(LinalgError::Singular);
    }
    let x = lu.solve(b);
    check_finite(&x).map_err(|_| LinalgError::Singular)?;
    Ok(x)
}

/// Inverse via LU.
pub fn inverse(a: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    check_square(a, "inverse input")?;
    solve(a, &DenseMatrix::identity(a.nrows(), a.nrows()))?;
    Ok(a.partial_piv_lu().inverse())
}

/// Diagonal similarity `D⁻¹ A D` (powers of two) that balances row and
/// column norms, in the manner of EISPACK's `balanc`. Returns the diagonal of
/// `D` and the scaled matrix.
pub fn diagonal_balance(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix), LinalgError> {
    check_square(a, "balancing input")?;
    check_finite(a)?;
    const RADIX: f64 = 2.0;
    const LIMIT: f64 = 1e150;
    let n = a.nrows();
    let mut m = a.clone();
    let mut d = vec![1.0; n];
    loop {
        let mut done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g && d[i] * f < LIMIT {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c >= g && d[i] / f > 1.0 / LIMIT {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                d[i] *= f;
                for j in 0..n {
                    m[(i, j)] /= f;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
    Ok((d, m))
}

/// Eigenvalues of a general real matrix, via the real Schur form of its
/// diagonally balanced similar matrix.
pub fn eigenvalues(a: &DenseMatrix) -> Result<Vec<Eigenvalue>, LinalgError> {
    let (_, m) = diagonal_balance(a)?;
    Ok(schur(&m)?.eigenvalues())
}

/// Largest real part of the spectrum.
pub fn spectral_abscissa(a: &DenseMatrix) -> Result<f64, LinalgError> {
    Ok(eigenvalues(a)?.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Column vector as an `n × 1` matrix.
pub fn column(v: &[f64]) -> DenseMatrix {
    DenseMatrix::from_fn(v.len(), 1, |i, _| v[i])
}

/// `A x`.
pub fn mat_vec(a: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            for (yi, aij) in y.iter_mut().zip(a.col(j).iter()) {
                *yi += aij * xj;
            }
        }
    }
    y
}

#[cfg(test)]
pub(crate) mod testing {
    use super::DenseMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    /// Random matrix shifted so every eigenvalue has real part below `-margin`.
    pub fn random_stable(n: usize, seed: u64) -> DenseMatrix {
        let mut a = random(n, n, seed);
        let shift = a.norm_l2() + 0.5;
        for i in 0..n {
            a[(i, i)] -= shift;
        }
        a
    }

    pub fn random_spd(n: usize, seed: u64) -> DenseMatrix {
        let g = random(n, n, seed);
        &g * g.transpose() + DenseMatrix::identity(n, n) * 1e-3
    }
}
