//! Numerical substrate: Cholesky factorization with a jitter policy,
//! multivariate normal sampling, and uniform sampling from ellipsoid
//! volumes.
//!
//! All applications of Σ⁻¹ go through triangular solves on the stored
//! Cholesky factor; an explicit inverse is never formed.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Relative symmetry tolerance required of matrices handed to
/// [`cholesky_spd`].
const SYMMETRY_TOL: f64 = 1e-12;

/// Result of a jittered Cholesky factorization.
#[derive(Debug, Clone)]
pub struct CholFactor {
    /// Lower-triangular factor `L` with `L Lᵀ = Σ + jitter·I`.
    pub lower: DMatrix<f64>,
    /// Diagonal jitter that had to be added (0 when the matrix was
    /// cleanly positive definite).
    pub jitter: f64,
}

/// Cholesky factorization of a symmetric positive (semi-)definite matrix.
///
/// If the plain factorization fails, `1e-10·mean(diag)` is added to the
/// diagonal, escalating by factors of 10 up to `1e-6·mean(diag)` before
/// giving up. Applied jitter is reported in the result and logged.
pub fn cholesky_spd(matrix: &DMatrix<f64>) -> Result<CholFactor> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(Error::Config(format!(
            "cholesky_spd needs a square non-empty matrix, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let scale = matrix.abs().max();
    for i in 0..n {
        for j in (i + 1)..n {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > SYMMETRY_TOL * scale.max(1.0) {
                return Err(Error::Numerical(format!(
                    "cholesky_spd requires a symmetric matrix; entry ({i},{j}) differs"
                )));
            }
        }
    }
    if let Some(chol) = Cholesky::new(matrix.clone()) {
        return Ok(CholFactor {
            lower: chol.unpack(),
            jitter: 0.0,
        });
    }
    let mean_diag = matrix.diagonal().mean().abs().max(f64::MIN_POSITIVE);
    let mut jitter = 1e-10 * mean_diag;
    let max_jitter = 1e-6 * mean_diag;
    while jitter <= max_jitter * (1.0 + 1e-12) {
        let mut bumped = matrix.clone();
        for i in 0..n {
            bumped[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(bumped) {
            log::info!("cholesky_spd: added diagonal jitter {jitter:.3e}");
            return Ok(CholFactor {
                lower: chol.unpack(),
                jitter,
            });
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(
        "cholesky_spd: jitter escalation exhausted; matrix is not positive definite".into(),
    ))
}

/// A symmetric positive-definite matrix with its cached Cholesky factor.
///
/// Stores `Σ` together with the lower factor `L` (`L Lᵀ = Σ`) so that
/// draws from `N(0, Σ)` and `N(0, Σ⁻¹)`, quadratic forms in `Σ` and
/// `Σ⁻¹`, and log-determinants are all cheap and stable.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    lower: DMatrix<f64>,
    jitter: f64,
    log_det: f64,
}

impl SpdMatrix {
    /// Wrap a symmetric positive-definite matrix, factorizing it with the
    /// jitter policy of [`cholesky_spd`].
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let CholFactor { lower, jitter } = cholesky_spd(&matrix)?;
        let log_det = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            matrix,
            lower,
            jitter,
            log_det,
        })
    }

    /// The identity matrix of dimension `n`.
    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is SPD")
    }

    /// A diagonal matrix with the given positive entries.
    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Dimension `n`.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The stored matrix `Σ` (without jitter).
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The lower-triangular Cholesky factor.
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Diagonal jitter that was applied during factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `log |Σ|` (of the factorized, possibly jittered matrix).
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `Σ x`.
    pub fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    /// `Σ⁻¹ x` via two triangular solves.
    pub fn solve(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        self.lower
            .solve_lower_triangular_mut(&mut y);
        self.lower
            .tr_solve_lower_triangular_mut(&mut y);
        y
    }

    /// `xᵀ Σ⁻¹ x = ‖L⁻¹x‖²`.
    pub fn quad_inv(&self, x: &DVector<f64>) -> f64 {
        let mut y = x.clone();
        self.lower
            .solve_lower_triangular_mut(&mut y);
        y.norm_squared()
    }

    /// `xᵀ Σ x`.
    pub fn quad(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.matrix * x))
    }

    /// One draw from `N(0, Σ)`, computed as `L z`.
    pub fn sample(&self, rng: &mut RngStream) -> DVector<f64> {
        let z = standard_normal_vector(self.dim(), rng);
        &self.lower * z
    }

    /// One draw from `N(0, Σ⁻¹)`, computed as `L⁻ᵀ z`.
    pub fn sample_inv(&self, rng: &mut RngStream) -> DVector<f64> {
        let mut z = standard_normal_vector(self.dim(), rng);
        self.lower
            .tr_solve_lower_triangular_mut(&mut z);
        z
    }

    /// Log density of `N(0, Σ)` at `x`, including normalization.
    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let n = self.dim() as f64;
        -0.5 * self.quad_inv(x) - 0.5 * self.log_det - 0.5 * n * LN_2PI
    }

    /// Log density of `N(0, Σ⁻¹)` at `x`, including normalization.
    pub fn log_density_inv(&self, x: &DVector<f64>) -> f64 {
        let n = self.dim() as f64;
        -0.5 * self.quad(x) + 0.5 * self.log_det - 0.5 * n * LN_2PI
    }
}

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837877066409345483560659472811;

/// Vector of `n` iid standard normal draws.
pub fn standard_normal_vector(n: usize, rng: &mut RngStream) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.standard_normal())
}

/// One draw from `N(mean, L Lᵀ)`, computed as `mean + L z`.
pub fn mvn_sample(mean: &DVector<f64>, chol_lower: &DMatrix<f64>, rng: &mut RngStream) -> DVector<f64> {
    assert_eq!(
        mean.len(),
        chol_lower.nrows(),
        "mvn_sample: mean/factor dimension mismatch"
    );
    let z = standard_normal_vector(mean.len(), rng);
    mean + chol_lower * z
}

/// Uniform draw from the unit ball in `R^n`: `y = (z/‖z‖)·u^{1/n}` with
/// `z` standard normal and `u` uniform. A zero-norm `z` (probability
/// zero) is resampled.
pub fn unit_ball_uniform(n: usize, rng: &mut RngStream) -> DVector<f64> {
    assert!(n >= 1, "unit_ball_uniform: dimension must be positive");
    loop {
        let z = standard_normal_vector(n, rng);
        let norm = z.norm();
        if norm > 0.0 {
            let radius = rng.uniform().powf(1.0 / n as f64);
            return z * (radius / norm);
        }
    }
}

/// Uniform draw from the ellipsoid volume `{v : vᵀ Σ v ≤ ρ}`.
///
/// With `y` uniform on the unit ball, `v = L⁻ᵀ y √ρ` satisfies
/// `vᵀΣv = ρ‖y‖² ≤ ρ` and is uniform on the ellipsoid (the linear map
/// has constant Jacobian).
pub fn ellipsoid_uniform(sigma: &SpdMatrix, rho: f64, rng: &mut RngStream) -> Result<DVector<f64>> {
    if !(rho > 0.0) {
        return Err(Error::Contract(format!(
            "ellipsoid_uniform: radius must be positive, got {rho}"
        )));
    }
    let mut y = unit_ball_uniform(sigma.dim(), rng);
    sigma
        .lower()
        .tr_solve_lower_triangular_mut(&mut y);
    Ok(y * rho.sqrt())
}
