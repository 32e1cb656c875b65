//! Shared helpers for the acceptance suite: criterion reporting, a
//! finite-difference Jacobian oracle, and small adapter types.

use nalgebra::{DMatrix, DVector};

use gmh::diagnostics::iact_sokal;
use gmh::kernel::{FactoredTarget, TargetDensity};
use gmh::pseudo_marginal::LikelihoodEstimator;
use gmh::rng::RngStream;
use gmh::targets::GaussianTarget;
use gmh::Result;

/// Print the single pass/fail line for one acceptance criterion, then
/// assert it.
pub fn report(number: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "acceptance criterion {number:02} [{name}]: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {number:02} [{name}] failed: {detail}");
}

/// Central finite-difference Jacobian determinant of `f: R^n → R^n`.
pub fn fd_jacobian_det(f: &dyn Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, h: f64) -> f64 {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[j] += h;
        minus[j] -= h;
        let df = (f(&plus) - f(&minus)) / (2.0 * h);
        jac.set_column(j, &df);
    }
    jac.determinant()
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of a chain mean, inflated by the integrated
/// autocorrelation time (clamped below at the i.i.d. rate).
pub fn chain_se(xs: &[f64]) -> f64 {
    let tau = iact_sokal(xs).unwrap().tau.max(1.0);
    (variance(xs) * tau / xs.len() as f64).sqrt()
}

/// Kolmogorov–Smirnov distance of a sample against U[0,1].
pub fn ks_uniform(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((v - lo).abs()).max((hi - v).abs());
    }
    d
}

/// A Gaussian target exposed as a single-factor [`FactoredTarget`], so
/// the auxiliary-variable Gibbs kernel can run on a dense target (the
/// factor admits no closed-form slice interval, exercising the
/// stepping-out fallback).
pub struct FactoredGaussian(pub GaussianTarget);

impl TargetDensity for FactoredGaussian {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn log_density(&self, theta: &DVector<f64>) -> f64 {
        self.0.log_density(theta)
    }

    fn gradient(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        self.0.gradient(theta)
    }
}

impl FactoredTarget for FactoredGaussian {
    fn num_factors(&self) -> usize {
        1
    }

    fn log_factor(&self, _n: usize, theta: &DVector<f64>) -> f64 {
        self.0.log_density(theta)
    }

    fn factor_touches(&self, _n: usize, _coord: usize) -> bool {
        true
    }
}

/// Deterministic (zero-variance) likelihood estimator returning a fixed
/// value for every θ.
pub struct ConstantLikelihood {
    pub dim: usize,
    pub value: f64,
}

impl LikelihoodEstimator for ConstantLikelihood {
    fn param_dim(&self) -> usize {
        self.dim
    }

    fn log_estimate(&self, _theta: &DVector<f64>, _rng: &mut RngStream) -> Result<f64> {
        Ok(self.value)
    }
}
