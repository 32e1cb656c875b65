//! Adaptive Metropolis: Gaussian random-walk proposals `V ~ N(0, s·Σ̂)`
//! with a running covariance estimate Σ̂ and Robbins–Monro adaptation of
//! the log scale toward a target acceptance rate — plus the refresh-V
//! variant that keeps the proposal draw persistent between iterations and
//! replaces the accept/reject by a slice membership test.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{
    generalized_accept, ChainState, GenerationSnapshot, Kernel, KernelStep, TargetDensity,
};
use crate::linalg::{unit_ball_uniform, SpdMatrix};
use crate::rng::RngStream;

/// Robbins–Monro step-size exponent: η_k = k^{-0.6} (any exponent in
/// (0.5, 1] is valid; fixed for reproducibility).
const RM_EXPONENT: f64 = -0.6;

/// Diagonal regularization factor added to Σ̂ before factorizing:
/// `1e-8·trace(Σ̂)/n`.
const COV_REG: f64 = 1e-8;

/// Running proposal-adaptation state: mean and covariance of the chain
/// history plus the Robbins–Monro log scale.
#[derive(Debug, Clone)]
pub struct AdaptiveMetropolisState {
    running_mean: DVector<f64>,
    m2: DMatrix<f64>, // Σ_i (θ_i − μ_i)(θ_i − μ_{i−1})ᵀ, so m2/k is the batch covariance
    log_scale: f64,
    target_rate: f64,
    sample_count: u64,
}

impl AdaptiveMetropolisState {
    /// Fresh state: Σ̂ = I (until enough samples accumulate),
    /// s = 2.38²/n, the usual asymptotically optimal random-walk scale.
    pub fn new(dim: usize, target_rate: f64) -> Result<Self> {
        if !(target_rate > 0.0 && target_rate < 1.0) {
            return Err(Error::Config(format!(
                "target acceptance rate must be in (0,1), got {target_rate}"
            )));
        }
        if !(0.15..=0.5).contains(&target_rate) {
            log::warn!(
                "target acceptance rate {target_rate} is outside the recommended [0.15, 0.5]"
            );
        }
        Ok(Self {
            running_mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
            log_scale: (2.38 * 2.38 / dim as f64).ln(),
            target_rate,
            sample_count: 0,
        })
    }

    /// Number of chain samples folded into the moments.
    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    /// Running mean of the chain history.
    pub fn running_mean(&self) -> &DVector<f64> {
        &self.running_mean
    }

    /// Running covariance with 1/k normalization (the batch formula).
    pub fn running_covariance(&self) -> DMatrix<f64> {
        if self.sample_count == 0 {
            return DMatrix::zeros(self.running_mean.len(), self.running_mean.len());
        }
        let cov = &self.m2 / self.sample_count as f64;
        (&cov + cov.transpose()) * 0.5
    }

    /// Current Robbins–Monro log scale.
    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Configured target acceptance rate.
    pub fn target_rate(&self) -> f64 {
        self.target_rate
    }

    /// Fold one realized chain state into the running moments (Welford's
    /// update, algebraically equal to the batch formulas).
    fn update_moments(&mut self, theta: &DVector<f64>) {
        self.sample_count += 1;
        let k = self.sample_count as f64;
        let delta = theta - &self.running_mean;
        self.running_mean += &delta / k;
        let delta2 = theta - &self.running_mean;
        self.m2 += &delta * delta2.transpose();
    }

    /// Robbins–Monro scale update: `log s += k^{-0.6}(α_k − ᾱ)`.
    fn update_scale(&mut self, alpha: f64) {
        let eta = (self.sample_count.max(1) as f64).powf(RM_EXPONENT);
        self.log_scale += eta * (alpha - self.target_rate);
    }

    /// Proposal covariance `s·Σ̂` with the identity fallback (used until
    /// 2n samples accumulate or while Σ̂ is degenerate) and diagonal
    /// regularization.
    fn proposal_cov(&self, dim: usize) -> DMatrix<f64> {
        let scale = self.log_scale.exp();
        let cov = self.running_covariance();
        let trace: f64 = cov.diagonal().sum();
        if self.sample_count < 2 * dim as u64 || trace < 1e-12 {
            return DMatrix::identity(dim, dim) * scale;
        }
        let reg = COV_REG * trace / dim as f64;
        let mut out = cov * scale;
        for i in 0..dim {
            out[(i, i)] += scale * reg;
        }
        out
    }
}

/// Adaptive Metropolis kernel.
///
/// Plain variant: `V ~ N(0, s·Σ̂)`, translation mapping, standard
/// Metropolis acceptance. Refresh-V variant: the draw `V` is a persistent
/// coordinate of an extended chain; each step draws a slice height under
/// the extended density `π̃(θ)q(V|θ)`, refreshes `V` uniformly on the
/// induced ellipsoid, and accepts the translated point iff it stays in
/// the slice (keeping `−V` on acceptance). The refresh-V coupling
/// recycles the proposal draw and typically lowers autocorrelation.
pub struct AdaptiveMetropolis {
    target: Arc<dyn TargetDensity>,
    state: AdaptiveMetropolisState,
    refresh_v: bool,
    freeze_after: Option<u64>,
    v: Option<DVector<f64>>,
}

impl AdaptiveMetropolis {
    /// Plain adaptive Metropolis with the given target acceptance rate.
    pub fn new(target: Arc<dyn TargetDensity>, target_rate: f64) -> Result<Self> {
        let state = AdaptiveMetropolisState::new(target.dim(), target_rate)?;
        Ok(Self {
            target,
            state,
            refresh_v: false,
            freeze_after: None,
            v: None,
        })
    }

    /// The refresh-V variant (persistent proposal draw + slice test).
    pub fn with_refresh_v(target: Arc<dyn TargetDensity>, target_rate: f64) -> Result<Self> {
        let mut k = Self::new(target, target_rate)?;
        k.refresh_v = true;
        Ok(k)
    }

    /// Freeze all adaptation (covariance and scale) after `iteration`
    /// kernel applications; `Some(0)` makes the kernel a plain
    /// fixed-scale random-walk Metropolis.
    pub fn freeze_after(mut self, iteration: u64) -> Self {
        self.freeze_after = Some(iteration);
        self
    }

    /// Override the initial log proposal scale (`s = e^{log_scale}`).
    pub fn with_log_scale(mut self, log_scale: f64) -> Self {
        self.state.log_scale = log_scale;
        self
    }

    /// The adaptation state (running moments, scale).
    pub fn state(&self) -> &AdaptiveMetropolisState {
        &self.state
    }

    fn adapting(&self) -> bool {
        self.freeze_after
            .map_or(true, |f| self.state.sample_count < f)
    }

    fn plain_step(
        &mut self,
        state: &mut ChainState,
        spd: &SpdMatrix,
        rng: &mut RngStream,
    ) -> Result<(bool, f64)> {
        let v = spd.sample(rng);
        // translation map: ξ = θ + V (symmetric draw ⇒ the q-ratio cancels)
        let xi = &state.position + &v;
        let lp_xi = self.target.log_density(&xi);
        let log_alpha = if lp_xi == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            (lp_xi - state.cached_log_density).min(0.0)
        };
        let u = rng.uniform();
        let accepted = generalized_accept(state.cached_log_density, lp_xi, 0.0, u)?;
        if accepted {
            state.position = xi;
            state.cached_log_density = lp_xi;
        }
        Ok((accepted, log_alpha))
    }

    fn refresh_v_step(
        &mut self,
        state: &mut ChainState,
        spd: &SpdMatrix,
        rng: &mut RngStream,
    ) -> Result<(bool, f64)> {
        let lp = state.cached_log_density;
        let v_cur = match self.v.take() {
            // The proposal covariance drifts while V persists; treat V as
            // fresh whenever its density under the current covariance is
            // what enters the slice height (diminishing adaptation keeps
            // this asymptotically exact, as for plain AM).
            Some(v) if v.len() == spd.dim() => v,
            _ => spd.sample(rng),
        };
        let log_q_cur = spd.log_density(&v_cur);
        let log_h = lp + log_q_cur - rng.exp1();
        // {V : log π̃(θ) + log q(V) ≥ log h} is the ellipsoid
        // Vᵀ(sΣ̂)⁻¹V ≤ ρ with ρ = −2(log h − log π̃(θ)) − n·ln2π − log|sΣ̂|.
        let n = spd.dim() as f64;
        let rho = -2.0 * (log_h - lp) - n * crate::linalg::LN_2PI - spd.log_det();
        if !(rho > 0.0) {
            return Err(Error::Contract(format!(
                "refresh-V: nonpositive slice ellipsoid radius {rho}"
            )));
        }
        let v_new = spd.lower() * unit_ball_uniform(spd.dim(), rng) * rho.sqrt();
        let xi = &state.position + &v_new;
        let lp_xi = self.target.log_density(&xi);
        let accepted = lp_xi + spd.log_density(&v_new) >= log_h;
        if accepted {
            state.position = xi;
            state.cached_log_density = lp_xi;
            self.v = Some(-v_new);
        } else {
            self.v = Some(v_new);
        }
        let log_alpha = if accepted { 0.0 } else { f64::NEG_INFINITY };
        Ok((accepted, log_alpha))
    }
}

impl Kernel for AdaptiveMetropolis {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn init_state(&mut self, position: DVector<f64>, _rng: &mut RngStream) -> Result<ChainState> {
        let lp = self.target.log_density(&position);
        Ok(ChainState::new(position, lp))
    }

    fn step(
        &mut self,
        state: &mut ChainState,
        _snapshot: Option<&GenerationSnapshot<'_>>,
        rng: &mut RngStream,
    ) -> Result<KernelStep> {
        let spd = SpdMatrix::new(self.state.proposal_cov(self.dim()))?;
        let (accepted, log_alpha) = if self.refresh_v {
            self.refresh_v_step(state, &spd, rng)?
        } else {
            self.plain_step(state, &spd, rng)?
        };
        if self.adapting() {
            self.state.update_moments(&state.position);
            let alpha = log_alpha.exp();
            self.state.update_scale(alpha);
        }
        Ok(KernelStep {
            accepted,
            proposals_evaluated: 1,
            log_alpha,
        })
    }

    fn log_target(&self, position: &DVector<f64>) -> Option<f64> {
        Some(self.target.log_density(position))
    }
}
