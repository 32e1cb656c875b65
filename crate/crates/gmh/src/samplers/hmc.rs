//! Hamiltonian Monte Carlo and its single-step MALA special case: a
//! Gaussian momentum draw followed by the leapfrog mapping, accepted under
//! the joint density with unity Jacobian (leapfrog is volume-preserving).
//!
//! ```
//! use std::sync::Arc;
//! use nalgebra::DVector;
//! use gmh::kernel::run_chain;
//! use gmh::linalg::SpdMatrix;
//! use gmh::rng::RngStream;
//! use gmh::samplers::Hmc;
//! use gmh::targets::GaussianTarget;
//!
//! let target = Arc::new(GaussianTarget::correlated_2d(0.6)?);
//! let mut kernel = Hmc::new(target, 0.3, 5, SpdMatrix::identity(2))?;
//! let mut rng = RngStream::new(3, 0);
//! let trace = run_chain(&mut kernel, &DVector::zeros(2), 2_000, &mut rng)?;
//! // Small steps on a smooth target: the energy error, and hence the
//! // rejection rate, stays tiny.
//! assert!(trace.acceptance_rate() > 0.9);
//! # Ok::<(), gmh::Error>(())
//! ```

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernel::{
    generalized_accept, ChainState, GenerationSnapshot, Kernel, KernelStep, TargetDensity,
};
use crate::linalg::SpdMatrix;
use crate::maps::leapfrog_map;
use crate::rng::RngStream;

/// HMC kernel: momentum `p ~ N(0, M)`, `L` leapfrog steps of size `ε`
/// with kinetic energy `½pᵀM⁻¹p`, Metropolis accept under the joint
/// `π̃(θ)·N(p; 0, M)`.
///
/// With `L = 1` and `M = Σ⁻¹` the proposal mean reduces to the
/// preconditioned Langevin drift `θ + (ε²/2)Σ∇log π̃(θ)` (MALA).
pub struct Hmc {
    target: Arc<dyn TargetDensity>,
    step_size: f64,
    n_steps: u32,
    mass: SpdMatrix,
}

impl Hmc {
    /// Build an HMC kernel; the target must provide gradients.
    pub fn new(
        target: Arc<dyn TargetDensity>,
        step_size: f64,
        n_steps: u32,
        mass: SpdMatrix,
    ) -> Result<Self> {
        if !(step_size > 0.0) {
            return Err(Error::Config(format!(
                "Hmc: step size must be positive, got {step_size}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::Config("Hmc: need at least one leapfrog step".into()));
        }
        if mass.dim() != target.dim() {
            return Err(Error::Config(format!(
                "Hmc: mass matrix dim {} does not match target dim {}",
                mass.dim(),
                target.dim()
            )));
        }
        Ok(Self {
            target,
            step_size,
            n_steps,
            mass,
        })
    }

    /// MALA: single-step HMC.
    pub fn mala(target: Arc<dyn TargetDensity>, step_size: f64, mass: SpdMatrix) -> Result<Self> {
        Self::new(target, step_size, 1, mass)
    }
}

impl Kernel for Hmc {
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
        let p = self.mass.sample(rng);
        let joint_cur = state.cached_log_density + self.mass.log_density(&p);
        let image = leapfrog_map(
            self.target.as_ref(),
            &state.position,
            &p,
            self.step_size,
            self.n_steps,
            &self.mass,
        )?;
        let u = rng.uniform();
        let (accepted, log_alpha) = match image {
            // Trajectory left the finite domain: treat as a −∞ proposal.
            None => (false, f64::NEG_INFINITY),
            Some((xi, w)) => {
                let lp_xi = self.target.log_density(&xi);
                let joint_prop = lp_xi + self.mass.log_density(&w);
                let log_alpha = if joint_prop == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    (joint_prop - joint_cur).min(0.0)
                };
                let accepted = generalized_accept(joint_cur, joint_prop, 0.0, u)?;
                if accepted {
                    state.position = xi;
                    state.cached_log_density = lp_xi;
                }
                (accepted, log_alpha)
            }
        };
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
