//! Self-inverse deterministic mappings `T: (θ, V) → (ξ, W)` with exact
//! log-Jacobians.
//!
//! Each mapping satisfies `T(T(x)) = x` and the Jacobian antisymmetry
//! `log|J(x)| + log|J(T(x))| = 0`, the two structural hypotheses the
//! generalised acceptance test relies on. Auxiliary variables are packed
//! into a single flat vector per mapping (documented on each type) so the
//! whole family can be exercised by one involution test suite via
//! [`SelfInverseMap`].
//!
//! ```
//! use nalgebra::DVector;
//! use gmh::maps::directional_map;
//!
//! let theta = DVector::from_column_slice(&[0.4, -1.2, 0.7]);
//! let v = DVector::from_column_slice(&[1.0, 0.3, -0.5]);
//! let image = directional_map(&theta, 0.6, &v, -1.0)?;
//! // Applying the map to its own image returns the starting point …
//! let back = directional_map(&image.xi, image.s, &image.w, -1.0)?;
//! assert!((&back.xi - &theta).amax() < 1e-12);
//! // … and the two log-Jacobians cancel exactly (antisymmetry).
//! assert!((image.log_abs_jacobian + back.log_abs_jacobian).abs() < 1e-12);
//! # Ok::<(), gmh::Error>(())
//! ```

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernel::TargetDensity;
use crate::linalg::SpdMatrix;

/// Mean and covariance of the Gaussian approximation that defines an
/// elliptical trajectory.
///
/// Stores μ, Σ and the lower Cholesky factor of Σ; all Σ⁻¹ applications
/// go through triangular solves on the factor.
#[derive(Debug, Clone)]
pub struct EllipseParams {
    mu: DVector<f64>,
    sigma: SpdMatrix,
}

impl EllipseParams {
    /// Build from a mean and SPD covariance.
    pub fn new(mu: DVector<f64>, sigma: SpdMatrix) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(Error::Config(format!(
                "EllipseParams: mean dim {} != covariance dim {}",
                mu.len(),
                sigma.dim()
            )));
        }
        Ok(Self { mu, sigma })
    }

    /// Standard-normal approximation: μ = 0, Σ = I.
    pub fn standard(n: usize) -> Self {
        Self {
            mu: DVector::zeros(n),
            sigma: SpdMatrix::identity(n),
        }
    }

    /// Dimension n_θ.
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Mean μ.
    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    /// Covariance Σ with its Cholesky factor.
    pub fn sigma(&self) -> &SpdMatrix {
        &self.sigma
    }

    /// The approximate Hamiltonian `H̃(θ,v) = ½[(θ−μ)ᵀΣ⁻¹(θ−μ) + vᵀΣv]`,
    /// exactly conserved along [`elliptical_map`] trajectories.
    pub fn approx_hamiltonian(&self, theta: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let d = theta - &self.mu;
        0.5 * (self.sigma.quad_inv(&d) + self.sigma.quad(v))
    }
}

/// Translation: `ξ = θ + V`, `W = −V`; unity Jacobian.
pub fn translation_map(
    theta: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if theta.len() != v.len() {
        return Err(Error::Config(format!(
            "translation_map: dim(θ) = {} but dim(V) = {}",
            theta.len(),
            v.len()
        )));
    }
    Ok((theta + v, -v))
}

/// Gibbs block swap: `ξ` equals `θ` off-block and `V` on-block; `W`
/// collects the replaced block of `θ`. Unity Jacobian.
pub fn gibbs_swap_map(
    theta: &DVector<f64>,
    v: &DVector<f64>,
    block: &[usize],
) -> Result<(DVector<f64>, DVector<f64>)> {
    if block.is_empty() {
        return Err(Error::Config("gibbs_swap_map: empty block".into()));
    }
    if v.len() != block.len() {
        return Err(Error::Config(format!(
            "gibbs_swap_map: block has {} coordinates but V has {}",
            block.len(),
            v.len()
        )));
    }
    let mut xi = theta.clone();
    let mut w = DVector::zeros(block.len());
    for (slot, &d) in block.iter().enumerate() {
        if d >= theta.len() {
            return Err(Error::Config(format!(
                "gibbs_swap_map: coordinate {d} out of range for dim {}",
                theta.len()
            )));
        }
        w[slot] = theta[d];
        xi[d] = v[slot];
    }
    Ok((xi, w))
}

/// Result of one directional-map application.
#[derive(Debug, Clone)]
pub struct DirectionalImage {
    /// Mapped position `ξ = θ + r(v + ρθ)`.
    pub xi: DVector<f64>,
    /// Mapped line parameter `s = −r/(1 + rρ)`.
    pub s: f64,
    /// Direction (carried unchanged): `w = v`.
    pub w: DVector<f64>,
    /// `log|J| = (n_θ − 2)·log|1 + rρ|`.
    pub log_abs_jacobian: f64,
}

/// Validate a directional-sampling ρ; only `0` and `−1` are admissible.
pub fn validate_rho(rho: f64) -> Result<()> {
    if rho == 0.0 || rho == -1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "directional map: ρ must be 0 or −1, got {rho}"
        )))
    }
}

/// Directional map `ξ = θ + r(v + ρθ)`, `s = −r/(1+rρ)`, `w = v`, with
/// `log|J| = (n_θ−2)·log|1+rρ|`. For ρ = 0 this is the plain line move
/// with zero log-Jacobian.
pub fn directional_map(
    theta: &DVector<f64>,
    r: f64,
    v: &DVector<f64>,
    rho: f64,
) -> Result<DirectionalImage> {
    validate_rho(rho)?;
    if theta.len() != v.len() {
        return Err(Error::Config(format!(
            "directional_map: dim(θ) = {} but dim(v) = {}",
            theta.len(),
            v.len()
        )));
    }
    if theta.len() < 2 && rho != 0.0 {
        return Err(Error::Config(
            "directional_map: n_θ = 1 supports ρ = 0 only".into(),
        ));
    }
    let denom = 1.0 + r * rho;
    if denom.abs() < 1e-12 {
        return Err(Error::Contract(format!(
            "directional_map: singular integration time, |1 + rρ| = {} < 1e-12",
            denom.abs()
        )));
    }
    let xi = theta + (v + theta * rho) * r;
    let s = -r / denom;
    let log_abs_jacobian = (theta.len() as f64 - 2.0) * denom.abs().ln();
    Ok(DirectionalImage {
        xi,
        s,
        w: v.clone(),
        log_abs_jacobian,
    })
}

/// Elliptical map: the closed-form Hamiltonian trajectory of the
/// Gaussian approximation, evaluated at integration time `r`:
///
/// ```text
/// ξ = (θ−μ)cos r + Σv sin r + μ
/// w = v cos r − Σ⁻¹(θ−μ) sin r
/// ```
///
/// Together with `r ↦ −r` this is self-inverse with unity Jacobian, and
/// it conserves [`EllipseParams::approx_hamiltonian`] exactly.
pub fn elliptical_map(
    theta: &DVector<f64>,
    v: &DVector<f64>,
    r: f64,
    params: &EllipseParams,
) -> (DVector<f64>, DVector<f64>) {
    let d = theta - params.mu();
    let (sin_r, cos_r) = r.sin_cos();
    let xi = &d * cos_r + params.sigma().mul(v) * sin_r + params.mu();
    let w = v * cos_r - params.sigma().solve(&d) * sin_r;
    (xi, w)
}

/// Leapfrog integration of the Hamiltonian dynamics with kinetic energy
/// `½ vᵀ M⁻¹ v`, followed by momentum negation (which makes the composite
/// map self-inverse). Volume-preserving: unity Jacobian.
///
/// With `n_steps = 1` and `mass = Σ⁻¹` this reproduces the preconditioned
/// Langevin (MALA) proposal mean `θ + (ε²/2) Σ ∇log π(θ)`.
///
/// Returns `Ok(None)` when the trajectory leaves the finite domain
/// (non-finite position or gradient); callers treat that as a `−∞`
/// proposal. A target without gradients is a configuration error.
pub fn leapfrog_map(
    target: &dyn TargetDensity,
    theta: &DVector<f64>,
    v: &DVector<f64>,
    step_size: f64,
    n_steps: u32,
    mass: &SpdMatrix,
) -> Result<Option<(DVector<f64>, DVector<f64>)>> {
    if step_size <= 0.0 || n_steps == 0 {
        return Err(Error::Config(format!(
            "leapfrog_map: need step_size > 0 and n_steps ≥ 1, got ε = {step_size}, L = {n_steps}"
        )));
    }
    let grad = |x: &DVector<f64>| -> Result<DVector<f64>> {
        target.gradient(x).ok_or_else(|| {
            Error::Config("leapfrog_map: target does not provide a gradient".into())
        })
    };
    let finite = |x: &DVector<f64>| x.iter().all(|c| c.is_finite());
    let mut q = theta.clone();
    let mut p = v.clone();
    let mut g = grad(&q)?;
    if !finite(&g) {
        return Ok(None);
    }
    for _ in 0..n_steps {
        p += &g * (0.5 * step_size);
        q += mass.solve(&p) * step_size;
        if !finite(&q) {
            return Ok(None);
        }
        g = grad(&q)?;
        if !finite(&g) {
            return Ok(None);
        }
        p += &g * (0.5 * step_size);
    }
    Ok(Some((q, -p)))
}

/// A self-inverse mapping on the flattened space `(θ, aux)`, the uniform
/// interface the involution test suite drives.
pub trait SelfInverseMap {
    /// Dimensions `(n_θ, n_aux)` of the two input blocks.
    fn input_dims(&self) -> (usize, usize);

    /// Apply the mapping, returning the image `(ξ, aux')`.
    fn apply(&self, theta: &DVector<f64>, aux: &DVector<f64>)
        -> Result<(DVector<f64>, DVector<f64>)>;

    /// `log|J|` of the mapping at `(θ, aux)`.
    fn log_abs_jacobian(&self, theta: &DVector<f64>, aux: &DVector<f64>) -> Result<f64>;
}

/// [`translation_map`] as a [`SelfInverseMap`]; aux = V.
pub struct TranslationMap {
    /// State dimension.
    pub dim: usize,
}

impl SelfInverseMap for TranslationMap {
    fn input_dims(&self) -> (usize, usize) {
        (self.dim, self.dim)
    }

    fn apply(
        &self,
        theta: &DVector<f64>,
        aux: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        translation_map(theta, aux)
    }

    fn log_abs_jacobian(&self, _theta: &DVector<f64>, _aux: &DVector<f64>) -> Result<f64> {
        Ok(0.0)
    }
}

/// [`gibbs_swap_map`] as a [`SelfInverseMap`]; aux = the replacement
/// block values.
pub struct GibbsSwapMap {
    /// State dimension.
    pub dim: usize,
    /// Coordinates to swap.
    pub block: Vec<usize>,
}

impl SelfInverseMap for GibbsSwapMap {
    fn input_dims(&self) -> (usize, usize) {
        (self.dim, self.block.len())
    }

    fn apply(
        &self,
        theta: &DVector<f64>,
        aux: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        gibbs_swap_map(theta, aux, &self.block)
    }

    fn log_abs_jacobian(&self, _theta: &DVector<f64>, _aux: &DVector<f64>) -> Result<f64> {
        Ok(0.0)
    }
}

/// [`directional_map`] as a [`SelfInverseMap`]; aux = `[r, v…]`.
pub struct DirectionalMap {
    /// State dimension.
    pub dim: usize,
    /// ρ ∈ {0, −1}.
    pub rho: f64,
}

impl DirectionalMap {
    fn split<'a>(&self, aux: &'a DVector<f64>) -> (f64, DVector<f64>) {
        let _ = self;
        (aux[0], DVector::from_iterator(aux.len() - 1, aux.iter().skip(1).copied()))
    }
}

impl SelfInverseMap for DirectionalMap {
    fn input_dims(&self) -> (usize, usize) {
        (self.dim, self.dim + 1)
    }

    fn apply(
        &self,
        theta: &DVector<f64>,
        aux: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let (r, v) = self.split(aux);
        let image = directional_map(theta, r, &v, self.rho)?;
        let mut out = DVector::zeros(aux.len());
        out[0] = image.s;
        for i in 0..v.len() {
            out[i + 1] = image.w[i];
        }
        Ok((image.xi, out))
    }

    fn log_abs_jacobian(&self, theta: &DVector<f64>, aux: &DVector<f64>) -> Result<f64> {
        let (r, v) = self.split(aux);
        Ok(directional_map(theta, r, &v, self.rho)?.log_abs_jacobian)
    }
}

/// [`elliptical_map`] as a [`SelfInverseMap`]; aux = `[v…, r]`.
pub struct EllipticalMap {
    /// Gaussian approximation defining the ellipse.
    pub params: EllipseParams,
}

impl SelfInverseMap for EllipticalMap {
    fn input_dims(&self) -> (usize, usize) {
        (self.params.dim(), self.params.dim() + 1)
    }

    fn apply(
        &self,
        theta: &DVector<f64>,
        aux: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.params.dim();
        let v = DVector::from_iterator(n, aux.iter().take(n).copied());
        let r = aux[n];
        let (xi, w) = elliptical_map(theta, &v, r, &self.params);
        let mut out = DVector::zeros(n + 1);
        for i in 0..n {
            out[i] = w[i];
        }
        out[n] = -r;
        Ok((xi, out))
    }

    fn log_abs_jacobian(&self, _theta: &DVector<f64>, _aux: &DVector<f64>) -> Result<f64> {
        Ok(0.0)
    }
}

/// [`leapfrog_map`] as a [`SelfInverseMap`]; aux = the momentum v.
pub struct LeapfrogMap {
    /// Target whose gradient drives the dynamics.
    pub target: std::sync::Arc<dyn TargetDensity>,
    /// Step size ε.
    pub step_size: f64,
    /// Number of leapfrog steps L.
    pub n_steps: u32,
    /// Mass matrix of the kinetic energy.
    pub mass: SpdMatrix,
}

impl SelfInverseMap for LeapfrogMap {
    fn input_dims(&self) -> (usize, usize) {
        (self.target.dim(), self.target.dim())
    }

    fn apply(
        &self,
        theta: &DVector<f64>,
        aux: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        leapfrog_map(
            self.target.as_ref(),
            theta,
            aux,
            self.step_size,
            self.n_steps,
            &self.mass,
        )?
        .ok_or_else(|| Error::Contract("leapfrog trajectory left the finite domain".into()))
    }

    fn log_abs_jacobian(&self, _theta: &DVector<f64>, _aux: &DVector<f64>) -> Result<f64> {
        Ok(0.0)
    }
}
