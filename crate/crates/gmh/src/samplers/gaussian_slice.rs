//! Recursive Gaussian slice sampling: unity-acceptance slice moves whose
//! translation offsets come from an artificial-posterior recursion over
//! Gaussian pseudo-observations.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernel::{ChainState, GenerationSnapshot, Kernel, KernelStep, TargetDensity};
use crate::linalg::SpdMatrix;
use crate::rng::RngStream;

/// Hard cap on recursive proposals per step; exceeding it signals a
/// pathological target/scale combination rather than bad luck, since the
/// proposal variance shrinks as 1/n.
const PROPOSAL_CAP: u32 = 10_000;

/// Slice sampler with recursive Gaussian proposal generation.
///
/// Each step draws a height `log h = log π̃(θ) − Exp(1)`, then generates
/// pseudo-observations `C_i ~ N(0, sΣ)` and proposes
/// `ξ_n = θ + V_n` with `V_n ~ N(mean(C_{1:n}), (1/n)·sΣ)` until the
/// proposal lands in the slice. The recursion makes successive proposals
/// concentrate around the current point, so a slice member is found
/// almost surely and the move is accepted with probability one.
pub struct RecursiveGaussianSlice {
    target: Arc<dyn TargetDensity>,
    scaled_sigma: SpdMatrix,
}

impl RecursiveGaussianSlice {
    /// Build from a target and the scaled covariance `sΣ` of the
    /// pseudo-observations.
    pub fn new(target: Arc<dyn TargetDensity>, scaled_sigma: SpdMatrix) -> Result<Self> {
        if scaled_sigma.dim() != target.dim() {
            return Err(Error::Config(format!(
                "RecursiveGaussianSlice: covariance dim {} does not match target dim {}",
                scaled_sigma.dim(),
                target.dim()
            )));
        }
        Ok(Self {
            target,
            scaled_sigma,
        })
    }

    /// Isotropic variant with `sΣ = scale²·I`.
    pub fn isotropic(target: Arc<dyn TargetDensity>, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::Config(format!(
                "RecursiveGaussianSlice: scale must be positive, got {scale}"
            )));
        }
        let dim = target.dim();
        let sigma = SpdMatrix::diagonal(&vec![scale * scale; dim])?;
        Self::new(target, sigma)
    }
}

impl Kernel for RecursiveGaussianSlice {
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
        let log_h = state.cached_log_density - rng.exp1();
        let mut c_sum = DVector::zeros(self.dim());
        let mut n: u32 = 0;
        loop {
            n += 1;
            if n > PROPOSAL_CAP {
                return Err(Error::Contract(format!(
                    "RecursiveGaussianSlice: no slice member after {PROPOSAL_CAP} proposals"
                )));
            }
            c_sum += self.scaled_sigma.sample(rng);
            let inv_n = 1.0 / f64::from(n);
            // V_n ~ N(mean(C_{1:n}), (1/n)·sΣ): mean plus a fresh draw
            // shrunk by 1/√n.
            let v = &c_sum * inv_n + self.scaled_sigma.sample(rng) * inv_n.sqrt();
            let xi = &state.position + v;
            let lp_xi = self.target.log_density(&xi);
            if lp_xi >= log_h {
                state.position = xi;
                state.cached_log_density = lp_xi;
                return Ok(KernelStep {
                    accepted: true,
                    proposals_evaluated: n,
                    log_alpha: 0.0,
                });
            }
        }
    }

    fn log_target(&self, position: &DVector<f64>) -> Option<f64> {
        Some(self.target.log_density(position))
    }
}
