//! Reference target densities and data generators, each with exact
//! oracles where available: Gaussian targets (closed-form moments and
//! conditionals), the scalar and joint toy posteriors, a Student-t
//! stress target, and a linear Gaussian state-space model with a Kalman
//! likelihood oracle.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{FactoredTarget, TargetDensity};
use crate::linalg::{SpdMatrix, LN_2PI};
use crate::rng::RngStream;

/// `log(1 + e^x)`, stable for large |x|.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `1 / (1 + e^{-x})`, stable for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ---------------------------------------------------------------------------
// Gaussian target
// ---------------------------------------------------------------------------

/// A multivariate normal `N(μ, Σ)` with exact sampler, gradient and
/// conditional distributions — the workhorse oracle target.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    mean: DVector<f64>,
    cov: SpdMatrix,
}

impl GaussianTarget {
    /// Build from a mean and SPD covariance.
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::Config(format!(
                "GaussianTarget: mean dim {} != covariance dim {}",
                mean.len(),
                cov.dim()
            )));
        }
        Ok(Self { mean, cov })
    }

    /// Standard normal in `n` dimensions.
    pub fn standard(n: usize) -> Self {
        Self {
            mean: DVector::zeros(n),
            cov: SpdMatrix::identity(n),
        }
    }

    /// Zero-mean 2-D Gaussian with unit variances and correlation `rho`.
    pub fn correlated_2d(rho: f64) -> Result<Self> {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        Self::new(DVector::zeros(2), SpdMatrix::new(cov)?)
    }

    /// The mean μ.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// The covariance Σ.
    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    /// One exact draw from the target.
    pub fn sample(&self, rng: &mut RngStream) -> DVector<f64> {
        &self.mean + self.cov.sample(rng)
    }
}

impl TargetDensity for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, theta: &DVector<f64>) -> f64 {
        let d = theta - &self.mean;
        -0.5 * self.cov.quad_inv(&d) - 0.5 * self.cov.log_det()
            - 0.5 * self.dim() as f64 * LN_2PI
    }

    fn gradient(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let d = theta - &self.mean;
        Some(-self.cov.solve(&d))
    }

    fn sample_conditional(
        &self,
        theta: &DVector<f64>,
        block: &[usize],
        rng: &mut RngStream,
    ) -> Option<DVector<f64>> {
        let n = self.dim();
        if block.is_empty() || block.iter().any(|&d| d >= n) {
            return None;
        }
        let rest: Vec<usize> = (0..n).filter(|i| !block.contains(i)).collect();
        if rest.is_empty() {
            return Some(self.sample(rng));
        }
        let sigma = self.cov.matrix();
        let pick = |rows: &[usize], cols: &[usize]| {
            DMatrix::from_fn(rows.len(), cols.len(), |i, j| sigma[(rows[i], cols[j])])
        };
        let s_bb = pick(block, block);
        let s_ba = pick(block, &rest);
        let s_aa = SpdMatrix::new(pick(&rest, &rest)).ok()?;
        let d_a = DVector::from_fn(rest.len(), |i, _| theta[rest[i]] - self.mean[rest[i]]);
        // Conditional mean μ_b + Σ_ba Σ_aa⁻¹ (θ_a − μ_a) and covariance
        // Σ_bb − Σ_ba Σ_aa⁻¹ Σ_ab (Schur complement).
        let solve_da = s_aa.solve(&d_a);
        let mut cond_mean = DVector::from_fn(block.len(), |i, _| self.mean[block[i]]);
        cond_mean += &s_ba * solve_da;
        let mut cond_cov = s_bb.clone();
        let s_ab_solved = {
            // Σ_aa⁻¹ Σ_ab, column by column.
            let s_ab = s_ba.transpose();
            let mut out = DMatrix::zeros(rest.len(), block.len());
            for j in 0..block.len() {
                let col = s_ab.column(j).into_owned();
                out.set_column(j, &s_aa.solve(&col));
            }
            out
        };
        cond_cov -= &s_ba * s_ab_solved;
        // Symmetrize rounding noise before factorizing.
        let cond_cov = (&cond_cov + cond_cov.transpose()) * 0.5;
        let chol = SpdMatrix::new(cond_cov).ok()?;
        Some(crate::linalg::mvn_sample(&cond_mean, chol.lower(), rng))
    }
}

// ---------------------------------------------------------------------------
// Student-t stress target
// ---------------------------------------------------------------------------

/// Univariate Student-t with `nu` degrees of freedom (heavy-tailed
/// stress target for slice kernels).
#[derive(Debug, Clone)]
pub struct StudentTTarget {
    /// Degrees of freedom ν > 0.
    pub nu: f64,
}

impl TargetDensity for StudentTTarget {
    fn dim(&self) -> usize {
        1
    }

    fn log_density(&self, theta: &DVector<f64>) -> f64 {
        let x = theta[0];
        -0.5 * (self.nu + 1.0) * (x * x / self.nu).ln_1p()
    }

    fn gradient(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let x = theta[0];
        let g = -(self.nu + 1.0) * x / (self.nu + x * x);
        Some(DVector::from_column_slice(&[g]))
    }
}

// ---------------------------------------------------------------------------
// Toy model (Appendix E)
// ---------------------------------------------------------------------------

/// The reference dataset: T = 100 observations simulated from the toy
/// model with true υ = 0 under seed 20170401, checked in so experiments
/// are deterministic.
pub fn reference_toy_data() -> Vec<f64> {
    const RAW: &str = include_str!("../data/toy_y100.csv");
    RAW.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('y'))
        .map(|l| l.parse().expect("embedded dataset is valid"))
        .collect()
}

/// Simulate `y_t = x_t + ε_t` with `x_t ~ N(0,1)`, `ε_t ~ N(0, e^υ)`;
/// equivalently `y_t ~ N(0, 1 + e^υ)`.
pub fn simulate_toy_data(t: usize, true_upsilon: f64, rng: &mut RngStream) -> Vec<f64> {
    assert!(t >= 1, "simulate_toy_data: T must be ≥ 1");
    let noise_sd = (true_upsilon / 2.0).exp();
    (0..t)
        .map(|_| rng.standard_normal() + noise_sd * rng.standard_normal())
        .collect()
}

/// Marginal posterior of the log noise variance υ in the toy model:
///
/// ```text
/// log π̃(υ) = −υ²/2 − (T/2)·log(1+e^υ) − Σ y_t² / (2(1+e^υ))
/// ```
///
/// with a standard normal prior on υ.
#[derive(Debug, Clone)]
pub struct ToyScalarTarget {
    data: Vec<f64>,
    sum_sq: f64,
}

impl ToyScalarTarget {
    /// Build from an observation series.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Config("ToyScalarTarget: empty data".into()));
        }
        let sum_sq = data.iter().map(|y| y * y).sum();
        Ok(Self { data, sum_sq })
    }

    /// On the checked-in reference dataset.
    pub fn reference() -> Self {
        Self::new(reference_toy_data()).expect("reference data is non-empty")
    }

    /// The observation series.
    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

impl TargetDensity for ToyScalarTarget {
    fn dim(&self) -> usize {
        1
    }

    fn log_density(&self, theta: &DVector<f64>) -> f64 {
        let ups = theta[0];
        let t = self.data.len() as f64;
        -0.5 * ups * ups - 0.5 * t * softplus(ups) - 0.5 * self.sum_sq * sigmoid(-ups)
    }

    fn gradient(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let ups = theta[0];
        let t = self.data.len() as f64;
        let s = sigmoid(ups);
        // d/dυ [−Σy²/(2(1+e^υ))] = Σy²·e^υ/(2(1+e^υ)²) = (Σy²/2)·σ(υ)σ(−υ)
        let g = -ups - 0.5 * t * s + 0.5 * self.sum_sq * s * sigmoid(-ups);
        Some(DVector::from_column_slice(&[g]))
    }
}

/// Joint posterior over `θ = [υ, x_1 … x_T]` of the toy model:
///
/// ```text
/// log π̃(θ) = −υ²/2 − (T/2)υ + Σ_t [ −x_t²/2 − (y_t−x_t)²/(2e^υ) ]
/// ```
///
/// Exposes exact conditionals for each `x_t` (a product of two Gaussians
/// collapses to one) and per-factor slice-interval solvers, making it the
/// reference target for Gibbs and auxiliary-variable kernels.
///
/// Note on the conditional mean: completing the square in the factor
/// `exp(−x²/2 − (y−x)²/(2e^υ))` gives `x | rest ~ N(y/(1+e^υ), σ²)` with
/// `σ² = e^υ/(1+e^υ)`; the amplitude constant is `s_t/σ` with
/// `s_t = exp(−y²/(2(1+e^υ)))/√(1+e^υ)`.
#[derive(Debug, Clone)]
pub struct ToyJointTarget {
    data: Vec<f64>,
}

impl ToyJointTarget {
    /// Build from an observation series.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Config("ToyJointTarget: empty data".into()));
        }
        Ok(Self { data })
    }

    /// On the checked-in reference dataset.
    pub fn reference() -> Self {
        Self::new(reference_toy_data()).expect("reference data is non-empty")
    }

    /// Horizon T (the state dimension is T + 1).
    pub fn horizon(&self) -> usize {
        self.data.len()
    }

    /// The observation series.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Conditional moments of `x_t | υ`: `(μ_t, σ²)` with
    /// `μ_t = y_t/(1+e^υ)` and `σ² = e^υ/(1+e^υ) = σ(υ)`.
    pub fn x_conditional_moments(&self, upsilon: f64, t: usize) -> (f64, f64) {
        let var = sigmoid(upsilon);
        (self.data[t] * sigmoid(-upsilon), var)
    }

}

impl TargetDensity for ToyJointTarget {
    fn dim(&self) -> usize {
        self.data.len() + 1
    }

    fn log_density(&self, theta: &DVector<f64>) -> f64 {
        let ups = theta[0];
        let t = self.data.len() as f64;
        let inv_noise = (-ups).exp();
        let mut lp = -0.5 * ups * ups - 0.5 * t * ups;
        for (i, y) in self.data.iter().enumerate() {
            let x = theta[i + 1];
            let resid = y - x;
            lp += -0.5 * x * x - 0.5 * resid * resid * inv_noise;
        }
        lp
    }

    fn gradient(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let ups = theta[0];
        let t = self.data.len() as f64;
        let inv_noise = (-ups).exp();
        let mut g = DVector::zeros(self.dim());
        let mut sum_resid_sq = 0.0;
        for (i, y) in self.data.iter().enumerate() {
            let x = theta[i + 1];
            let resid = y - x;
            sum_resid_sq += resid * resid;
            g[i + 1] = -x + resid * inv_noise;
        }
        g[0] = -ups - 0.5 * t + 0.5 * sum_resid_sq * inv_noise;
        Some(g)
    }

    fn sample_conditional(
        &self,
        theta: &DVector<f64>,
        block: &[usize],
        rng: &mut RngStream,
    ) -> Option<DVector<f64>> {
        // Exact conditionals exist for blocks of x-coordinates only.
        if block.is_empty() || block.iter().any(|&d| d == 0 || d >= self.dim()) {
            return None;
        }
        let ups = theta[0];
        let mut out = DVector::zeros(block.len());
        for (slot, &d) in block.iter().enumerate() {
            let (mu, var) = self.x_conditional_moments(ups, d - 1);
            out[slot] = mu + var.sqrt() * rng.standard_normal();
        }
        Some(out)
    }
}

impl FactoredTarget for ToyJointTarget {
    fn num_factors(&self) -> usize {
        self.data.len() + 1
    }

    fn log_factor(&self, n: usize, theta: &DVector<f64>) -> f64 {
        let ups = theta[0];
        if n == 0 {
            // l_0 = prior on υ
            return -0.5 * ups * ups;
        }
        let x = theta[n];
        let resid = self.data[n - 1] - x;
        -0.5 * x * x - 0.5 * resid * resid * (-ups).exp() - 0.5 * ups
    }

    fn factor_touches(&self, n: usize, coord: usize) -> bool {
        if n == 0 {
            coord == 0
        } else {
            coord == 0 || coord == n
        }
    }

    fn factor_slice_interval(
        &self,
        n: usize,
        coord: usize,
        log_h: f64,
        theta: &DVector<f64>,
    ) -> Option<Result<(f64, f64)>> {
        if n == 0 || coord != n {
            return None; // only the x_t-direction of factor t is solvable
        }
        Some(conditional_interval(log_h, theta[0], self.data[n - 1]))
    }
}

/// Exact slice interval of the toy factor: the solution of
/// `log l_t(x) ≥ log h` is `μ_t ± σ√(−2·log(σ h_t / s_t))`.
///
/// Requires `h_t ≤ max_x l_t(x)` (guaranteed by slice construction); a
/// square-root argument below `−1e-12` is a contract violation, smaller
/// negative rounding noise is clamped to a degenerate interval.
pub fn conditional_interval(log_h: f64, upsilon: f64, y: f64) -> Result<(f64, f64)> {
    let var = sigmoid(upsilon);
    let sigma = var.sqrt();
    let mu = y * sigmoid(-upsilon);
    let log_s = -0.5 * y * y * sigmoid(-upsilon) - 0.5 * softplus(upsilon);
    // −2·log(σh/s) = −2(log h + log σ − log s)
    let arg = -2.0 * (log_h + sigma.ln() - log_s);
    if arg < -1e-12 {
        return Err(Error::Contract(format!(
            "conditional_interval: slice height above the factor maximum (arg = {arg})"
        )));
    }
    let delta = sigma * arg.max(0.0).sqrt();
    Ok((mu - delta, mu + delta))
}

// ---------------------------------------------------------------------------
// Linear Gaussian state-space model
// ---------------------------------------------------------------------------

/// How the observation noise variance of [`LinearGaussianSsm`] is
/// specified.
#[derive(Debug, Clone, Copy)]
pub enum ObsVariance {
    /// Known fixed variance (θ is ignored; `param_dim = 0`).
    Fixed(f64),
    /// Parameterized as `e^υ` with `θ = [υ]` and a standard normal prior
    /// on υ.
    LogParam,
}

/// Scalar linear Gaussian state-space model
///
/// ```text
/// x_1 ~ N(0, init_var),  x_{t+1} = φ x_t + N(0, state_var),
/// y_t = x_t + N(0, r)
/// ```
///
/// with `r` fixed or parameterized as `e^υ`. Its likelihood is exactly
/// computable by the Kalman recursion, making it the oracle model for
/// every pseudo-marginal test. The toy model is the special case φ = 0.
#[derive(Debug, Clone)]
pub struct LinearGaussianSsm {
    /// State transition coefficient φ.
    pub phi: f64,
    /// State innovation variance.
    pub state_var: f64,
    /// Variance of the initial state.
    pub init_var: f64,
    /// Observation noise specification.
    pub obs: ObsVariance,
}

impl LinearGaussianSsm {
    /// The toy model of Appendix E as an SSM: φ = 0, unit variances,
    /// observation variance `e^υ`.
    pub fn toy() -> Self {
        Self {
            phi: 0.0,
            state_var: 1.0,
            init_var: 1.0,
            obs: ObsVariance::LogParam,
        }
    }

    /// Number of unknown parameters (0 or 1).
    pub fn param_dim(&self) -> usize {
        match self.obs {
            ObsVariance::Fixed(_) => 0,
            ObsVariance::LogParam => 1,
        }
    }

    /// Observation noise variance under parameter `theta`.
    pub fn obs_var(&self, theta: &DVector<f64>) -> f64 {
        match self.obs {
            ObsVariance::Fixed(r) => r,
            ObsVariance::LogParam => theta[0].exp(),
        }
    }

    /// Log prior over the unknown parameters (standard normal on υ; zero
    /// for fully specified models).
    pub fn log_prior(&self, theta: &DVector<f64>) -> f64 {
        match self.obs {
            ObsVariance::Fixed(_) => 0.0,
            ObsVariance::LogParam => -0.5 * theta[0] * theta[0] - 0.5 * LN_2PI,
        }
    }

    /// Draw the initial state.
    pub fn sample_initial_state(&self, rng: &mut RngStream) -> f64 {
        self.init_var.sqrt() * rng.standard_normal()
    }

    /// Draw `x_{t+1} | x_t`.
    pub fn sample_transition(&self, x: f64, rng: &mut RngStream) -> f64 {
        self.phi * x + self.state_var.sqrt() * rng.standard_normal()
    }

    /// `log g(y | x)` under parameter `theta`.
    pub fn log_observation_density(&self, theta: &DVector<f64>, y: f64, x: f64) -> f64 {
        let r = self.obs_var(theta);
        let resid = y - x;
        -0.5 * resid * resid / r - 0.5 * r.ln() - 0.5 * LN_2PI
    }

    /// Draw `y | x` under parameter `theta` (ABC surrogate sampling).
    pub fn sample_observation(&self, theta: &DVector<f64>, x: f64, rng: &mut RngStream) -> f64 {
        x + self.obs_var(theta).sqrt() * rng.standard_normal()
    }

    /// Simulate a series of `t` observations under parameter `theta`.
    pub fn simulate(&self, theta: &DVector<f64>, t: usize, rng: &mut RngStream) -> Vec<f64> {
        let mut x = self.sample_initial_state(rng);
        let mut ys = Vec::with_capacity(t);
        for i in 0..t {
            if i > 0 {
                x = self.sample_transition(x, rng);
            }
            ys.push(self.sample_observation(theta, x, rng));
        }
        ys
    }
}

/// Exact log-likelihood `log p(Y_T | θ)` by the prediction-error
/// decomposition of the Kalman filter.
pub fn kalman_log_likelihood(
    model: &LinearGaussianSsm,
    theta: &DVector<f64>,
    data: &[f64],
) -> Result<f64> {
    let r = model.obs_var(theta);
    if !(r > 0.0) || !(model.state_var >= 0.0) || !(model.init_var >= 0.0) {
        return Err(Error::Numerical(format!(
            "kalman_log_likelihood: invalid variances (obs {r}, state {}, init {})",
            model.state_var, model.init_var
        )));
    }
    let mut mean = 0.0; // predictive mean of x_t
    let mut var = model.init_var; // predictive variance of x_t
    let mut ll = 0.0;
    for &y in data {
        let innov_var = var + r;
        if !(innov_var > 0.0) {
            return Err(Error::Numerical(
                "kalman_log_likelihood: non-positive innovation variance".into(),
            ));
        }
        let innov = y - mean;
        ll += -0.5 * (innov_var.ln() + innov * innov / innov_var + LN_2PI);
        // Filter update, then one-step prediction.
        let gain = var / innov_var;
        let filt_mean = mean + gain * innov;
        let filt_var = var * (1.0 - gain);
        mean = model.phi * filt_mean;
        var = model.phi * model.phi * filt_var + model.state_var;
    }
    Ok(ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_log_density_closed_form() {
        let g = GaussianTarget::standard(2);
        let x = DVector::from_column_slice(&[1.0, -1.0]);
        assert_abs_diff_eq!(g.log_density(&x), -1.0 - LN_2PI, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_gradient_matches_finite_differences() {
        let g = GaussianTarget::correlated_2d(0.8).unwrap();
        let x = DVector::from_column_slice(&[0.7, -0.3]);
        let grad = g.gradient(&x).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (g.log_density(&xp) - g.log_density(&xm)) / (2.0 * h);
            assert!((fd - grad[i]).abs() / grad[i].abs().max(1.0) < 1e-4);
        }
    }

    #[test]
    fn gaussian_conditional_moments() {
        // For unit variances and correlation ρ: x0 | x1 ~ N(ρ x1, 1−ρ²).
        let g = GaussianTarget::correlated_2d(0.8).unwrap();
        let theta = DVector::from_column_slice(&[0.0, 1.5]);
        let mut rng = RngStream::new(4, 0);
        let n = 50_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x = g.sample_conditional(&theta, &[0], &mut rng).unwrap();
            s += x[0];
            s2 += x[0] * x[0];
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 0.8 * 1.5).abs() < 0.02, "mean = {mean}");
        assert!((var - 0.36).abs() < 0.02, "var = {var}");
    }

    #[test]
    fn toy_scalar_matches_naive_formula() {
        let target = ToyScalarTarget::new(vec![1.0, -0.5, 2.0]).unwrap();
        for &ups in &[-2.0_f64, 0.0, 1.5] {
            let naive = -0.5 * ups * ups
                - 1.5 * (1.0 + ups.exp()).ln()
                - (1.0 + 0.25 + 4.0) / (2.0 * (1.0 + ups.exp()));
            let got = target.log_density(&DVector::from_column_slice(&[ups]));
            assert_abs_diff_eq!(got, naive, epsilon = 1e-12);
        }
    }

    #[test]
    fn toy_scalar_gradient_matches_finite_differences() {
        let target = ToyScalarTarget::reference();
        for &ups in &[-1.0, 0.0, 0.7, 3.0] {
            let x = DVector::from_column_slice(&[ups]);
            let g = target.gradient(&x).unwrap()[0];
            let h = 1e-6;
            let fd = (target.log_density(&DVector::from_column_slice(&[ups + h]))
                - target.log_density(&DVector::from_column_slice(&[ups - h])))
                / (2.0 * h);
            assert!((fd - g).abs() / g.abs().max(1.0) < 1e-4, "υ = {ups}");
        }
    }

    #[test]
    fn toy_joint_matches_scalar_after_integrating_states() {
        // Integrating each x_t out of the joint analytically gives the
        // scalar posterior up to a υ-independent constant:
        // ∫ exp(−x²/2 − (y−x)²/(2e^υ)) dx = √(2π)·σ(υ)^½·e^{υ/2}·exp(−y²/(2(1+e^υ)))·e^{-υ/2}·…
        // Checking the difference is constant in υ is the assertable form.
        let data = vec![0.3, -1.2, 2.1, 0.0, -0.4];
        let joint = ToyJointTarget::new(data.clone()).unwrap();
        let scalar = ToyScalarTarget::new(data.clone()).unwrap();
        let log_marginal = |ups: f64| {
            // log ∫ π̃_joint dx, by summing the per-factor Gaussian
            // integrals: ∫ exp(−x²/2 − (y−x)²/(2e^υ)) dx
            //   = √(2πσ²)·exp(−y²/(2(1+e^υ)))  with σ² = e^υ/(1+e^υ).
            let mut lp = -0.5 * ups * ups - 0.5 * data.len() as f64 * ups;
            for &y in &data {
                let var = sigmoid(ups);
                lp += 0.5 * (2.0 * std::f64::consts::PI * var).ln()
                    - 0.5 * y * y * sigmoid(-ups);
            }
            lp
        };
        let offsets: Vec<f64> = [-1.0, 0.0, 0.5, 2.0]
            .iter()
            .map(|&u| log_marginal(u) - scalar.log_density(&DVector::from_column_slice(&[u])))
            .collect();
        for w in offsets.windows(2) {
            assert_abs_diff_eq!(w[0], w[1], epsilon = 1e-8);
        }
        // And the joint evaluates finite everywhere sensible.
        let theta = DVector::from_column_slice(&[0.1, 0.2, -0.3, 1.0, 0.5, -0.2]);
        assert!(joint.log_density(&theta).is_finite());
    }

    #[test]
    fn toy_joint_conditional_matches_numeric_integration() {
        // Brute-force the conditional moments of x_1 | rest by quadrature
        // of the joint and compare with the closed form.
        let data = vec![1.3, -0.7];
        let joint = ToyJointTarget::new(data).unwrap();
        let ups = 0.6;
        let mut theta = DVector::from_column_slice(&[ups, 0.0, 0.4]);
        let mut z = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        let n = 4000;
        for i in 0..n {
            let x = -8.0 + 16.0 * (i as f64 + 0.5) / n as f64;
            theta[1] = x;
            let w = joint.log_density(&theta).exp();
            z += w;
            m1 += w * x;
            m2 += w * x * x;
        }
        let mean = m1 / z;
        let var = m2 / z - mean * mean;
        let (mu, sig2) = joint.x_conditional_moments(ups, 0);
        assert_abs_diff_eq!(mean, mu, epsilon = 1e-6);
        assert_abs_diff_eq!(var, sig2, epsilon = 1e-6);
    }

    #[test]
    fn conditional_interval_endpoints_reproduce_height() {
        let data = vec![1.7];
        let joint = ToyJointTarget::new(data).unwrap();
        let ups = -0.4;
        let theta = DVector::from_column_slice(&[ups, 0.3]);
        let log_l = joint.log_factor(1, &theta);
        let log_h = log_l - 1.3; // strictly below the current value
        let (lo, hi) = joint
            .factor_slice_interval(1, 1, log_h, &theta)
            .unwrap()
            .unwrap();
        assert!(lo <= 0.3 && 0.3 <= hi, "current point must lie inside");
        for &end in &[lo, hi] {
            let mut at_end = theta.clone();
            at_end[1] = end;
            let l_end = joint.log_factor(1, &at_end);
            assert!((l_end - log_h).abs() < 1e-9 * log_h.abs().max(1.0));
        }
    }

    #[test]
    fn conditional_interval_at_mode_degenerates() {
        let y = 0.9;
        let ups = 0.2;
        let joint = ToyJointTarget::new(vec![y]).unwrap();
        let (mu, _) = joint.x_conditional_moments(ups, 0);
        // height = factor maximum (the factor evaluated at x = μ) ⇒ [μ, μ]
        let log_max = joint.log_factor(1, &DVector::from_column_slice(&[ups, mu]));
        let (lo, hi) = conditional_interval(log_max, ups, y).unwrap();
        assert_abs_diff_eq!(lo, mu, epsilon = 1e-9);
        assert_abs_diff_eq!(hi, mu, epsilon = 1e-9);
    }

    #[test]
    fn conditional_interval_rejects_impossible_height() {
        assert!(conditional_interval(10.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn simulate_toy_data_variance() {
        let mut rng = RngStream::new(123, 0);
        let y = simulate_toy_data(4000, 0.0, &mut rng);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (y.len() - 1) as f64;
        // Var(y) = 1 + e^0 = 2; SE ≈ 2√(2/n) ≈ 0.045, allow 4 SEs.
        assert!((var - 2.0).abs() < 0.2, "var = {var}");
    }

    #[test]
    fn kalman_single_observation() {
        let model = LinearGaussianSsm {
            phi: 0.5,
            state_var: 0.3,
            init_var: 1.2,
            obs: ObsVariance::Fixed(0.7),
        };
        let theta = DVector::zeros(0);
        let y = 0.9;
        let got = kalman_log_likelihood(&model, &theta, &[y]).unwrap();
        let var: f64 = 1.2 + 0.7;
        let want = -0.5 * (var.ln() + y * y / var + LN_2PI);
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn kalman_matches_toy_scalar_likelihood() {
        // The toy model's Kalman likelihood equals the ToyScalarTarget
        // density minus the υ-prior term.
        let data = reference_toy_data();
        let model = LinearGaussianSsm::toy();
        let scalar = ToyScalarTarget::reference();
        for &ups in &[-1.0, 0.0, 0.8] {
            let theta = DVector::from_column_slice(&[ups]);
            let kalman = kalman_log_likelihood(&model, &theta, &data).unwrap();
            let scalar_ll = scalar.log_density(&theta) + 0.5 * ups * ups;
            // ToyScalarTarget drops the (2π)^{-T/2} constant.
            let constant = -0.5 * data.len() as f64 * LN_2PI;
            assert_abs_diff_eq!(kalman, scalar_ll + constant, epsilon = 1e-8);
        }
    }

    #[test]
    fn kalman_decreases_with_shrinking_obs_variance_on_mismatched_data() {
        let theta = DVector::zeros(0);
        let data = [5.0, -4.0, 6.0];
        let mut prev = f64::INFINITY;
        for &r in &[4.0, 1.0, 0.25, 0.05] {
            let model = LinearGaussianSsm {
                phi: 0.9,
                state_var: 0.1,
                init_var: 0.1,
                obs: ObsVariance::Fixed(r),
            };
            let ll = kalman_log_likelihood(&model, &theta, &data).unwrap();
            assert!(ll < prev, "likelihood should fall as r → 0 on bad data");
            prev = ll;
        }
    }

    #[test]
    fn toy_scalar_mode_near_zero_on_reference_data() {
        // Golden-section search for the posterior mode vs a fine grid.
        let target = ToyScalarTarget::reference();
        let f = |u: f64| target.log_density(&DVector::from_column_slice(&[u]));
        let (mut a, mut b) = (-3.0, 3.0);
        let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
        while b - a > 1e-10 {
            let c = b - inv_phi * (b - a);
            let d = a + inv_phi * (b - a);
            if f(c) >= f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let golden = 0.5 * (a + b);
        let mut best = (f64::NEG_INFINITY, 0.0);
        let n = 600_000;
        for i in 0..n {
            let u = -3.0 + 6.0 * i as f64 / (n - 1) as f64;
            let v = f(u);
            if v > best.0 {
                best = (v, u);
            }
        }
        assert!((golden - best.1).abs() < 1e-4, "golden {golden} grid {}", best.1);
    }
}
