//! Gibbs-style kernels: block sweeps with exact-conditional, random-walk
//! or slice inner updates (MH-within-Gibbs), and the auxiliary-variable
//! Gibbs scheme with one slice height per target factor.
//!
//! ```
//! use std::sync::Arc;
//! use nalgebra::DVector;
//! use gmh::kernel::run_chain;
//! use gmh::rng::RngStream;
//! use gmh::samplers::{BlockUpdate, GibbsSweep};
//! use gmh::targets::GaussianTarget;
//!
//! let target = Arc::new(GaussianTarget::correlated_2d(0.8)?);
//! let mut kernel = GibbsSweep::per_coordinate(target, BlockUpdate::Exact)?;
//! let mut rng = RngStream::new(5, 0);
//! let trace = run_chain(&mut kernel, &DVector::zeros(2), 1_000, &mut rng)?;
//! // Exact conditional draws are always accepted.
//! assert!(trace.accepted().iter().all(|&a| a));
//! # Ok::<(), gmh::Error>(())
//! ```

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernel::{
    generalized_accept, ChainState, FactoredTarget, GenerationSnapshot, Kernel, KernelStep,
    TargetDensity,
};
use crate::rng::RngStream;
use crate::samplers::slice::{slice_line, slice_update_coordinate};

/// Inner update applied to one block of a [`GibbsSweep`].
#[derive(Debug, Clone)]
pub enum BlockUpdate {
    /// Draw the block exactly from its conditional (Gibbs proper, α = 1);
    /// requires the target's `sample_conditional` to support the block.
    Exact,
    /// Random-walk Metropolis on the block: `V ~ N(0, scale²·I_{|d|})`.
    /// The conditional density ratio equals the joint ratio with
    /// off-block coordinates frozen, so no conditional evaluator is
    /// needed.
    RandomWalk {
        /// Proposal standard deviation per coordinate.
        scale: f64,
    },
    /// Univariate slice update of each coordinate in the block.
    Slice {
        /// Initial bracket width.
        width: f64,
    },
}

/// One block of a Gibbs sweep.
#[derive(Debug, Clone)]
pub struct GibbsBlock {
    /// Coordinate indices the block updates.
    pub coords: Vec<usize>,
    /// How the block is updated.
    pub update: BlockUpdate,
}

/// MH-within-Gibbs sweep kernel: applies each block's inner update in
/// order, targeting the conditional `π(θ^d | θ^{−d})` via the frozen
/// joint.
pub struct GibbsSweep {
    target: Arc<dyn TargetDensity>,
    blocks: Vec<GibbsBlock>,
}

impl GibbsSweep {
    /// Build and validate a sweep over the given blocks.
    pub fn new(target: Arc<dyn TargetDensity>, blocks: Vec<GibbsBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Config("GibbsSweep: no blocks configured".into()));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.coords.is_empty() {
                return Err(Error::Config(format!("GibbsSweep: block {i} is empty")));
            }
            if let Some(&d) = b.coords.iter().find(|&&d| d >= target.dim()) {
                return Err(Error::Config(format!(
                    "GibbsSweep: block {i} coordinate {d} out of range for dim {}",
                    target.dim()
                )));
            }
            match b.update {
                BlockUpdate::RandomWalk { scale } if !(scale > 0.0) => {
                    return Err(Error::Config(format!(
                        "GibbsSweep: block {i} random-walk scale must be positive"
                    )));
                }
                BlockUpdate::Slice { width } if !(width > 0.0) => {
                    return Err(Error::Config(format!(
                        "GibbsSweep: block {i} slice width must be positive"
                    )));
                }
                _ => {}
            }
        }
        Ok(Self { target, blocks })
    }

    /// Sweep over `{0}, {1}, …, {n−1}` with the same inner update.
    pub fn per_coordinate(target: Arc<dyn TargetDensity>, update: BlockUpdate) -> Result<Self> {
        let blocks = (0..target.dim())
            .map(|d| GibbsBlock {
                coords: vec![d],
                update: update.clone(),
            })
            .collect();
        Self::new(target, blocks)
    }
}

impl Kernel for GibbsSweep {
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
        let mut evals: u32 = 0;
        let mut all_accepted = true;
        let mut last_log_alpha = 0.0;
        for block in &self.blocks {
            match block.update {
                BlockUpdate::Exact => {
                    let vals = self
                        .target
                        .sample_conditional(&state.position, &block.coords, rng)
                        .ok_or_else(|| {
                            Error::Config(format!(
                                "GibbsSweep: target has no exact conditional for block {:?}",
                                block.coords
                            ))
                        })?;
                    for (slot, &d) in block.coords.iter().enumerate() {
                        state.position[d] = vals[slot];
                    }
                    state.cached_log_density = self.target.log_density(&state.position);
                    evals += 1;
                    last_log_alpha = 0.0;
                }
                BlockUpdate::RandomWalk { scale } => {
                    let mut xi = state.position.clone();
                    for &d in &block.coords {
                        xi[d] += scale * rng.standard_normal();
                    }
                    let lp_xi = self.target.log_density(&xi);
                    evals += 1;
                    let log_alpha = if lp_xi == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        (lp_xi - state.cached_log_density).min(0.0)
                    };
                    let u = rng.uniform();
                    if generalized_accept(state.cached_log_density, lp_xi, 0.0, u)? {
                        state.position = xi;
                        state.cached_log_density = lp_xi;
                    } else {
                        all_accepted = false;
                    }
                    last_log_alpha = log_alpha;
                }
                BlockUpdate::Slice { width } => {
                    for &d in &block.coords {
                        evals += slice_update_coordinate(
                            self.target.as_ref(),
                            &mut state.position,
                            &mut state.cached_log_density,
                            d,
                            width,
                            rng,
                        )?;
                    }
                    last_log_alpha = 0.0;
                }
            }
        }
        Ok(KernelStep {
            accepted: all_accepted,
            proposals_evaluated: evals.max(1),
            log_alpha: last_log_alpha,
        })
    }

    fn log_target(&self, position: &DVector<f64>) -> Option<f64> {
        Some(self.target.log_density(position))
    }
}

/// Auxiliary-variable Gibbs: one slice height per factor of
/// `π̃(θ) = Π_n l_n(θ)`, then a per-coordinate update from the uniform
/// conditional on `{θ^d : log l_n(θ) ≥ log h_n ∀n}` — by exact interval
/// intersection where the target supplies solvers, by stepping-out
/// otherwise. Unity acceptance.
pub struct AuxiliaryGibbs<T: FactoredTarget> {
    target: Arc<T>,
    width: f64,
}

impl<T: FactoredTarget> AuxiliaryGibbs<T> {
    /// Build with a stepping-out width for unsolvable coordinates.
    pub fn new(target: Arc<T>, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Config(format!(
                "AuxiliaryGibbs: width must be positive, got {width}"
            )));
        }
        Ok(Self { target, width })
    }
}

impl<T: FactoredTarget + 'static> Kernel for AuxiliaryGibbs<T> {
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
        let n_factors = self.target.num_factors();
        let mut evals: u32 = 0;
        // Stage 1: one height per factor, log h_n = log l_n(θ) − Exp(1).
        let log_h: Vec<f64> = (0..n_factors)
            .map(|n| self.target.log_factor(n, &state.position) - rng.exp1())
            .collect();
        evals += 1;
        // Stage 2: per coordinate, sample uniformly from the intersection
        // of the touching factors' slices.
        for d in 0..self.target.dim() {
            let touching: Vec<usize> = (0..n_factors)
                .filter(|&n| self.target.factor_touches(n, d))
                .collect();
            if touching.is_empty() {
                continue;
            }
            let exact: Option<Vec<(f64, f64)>> = touching
                .iter()
                .map(|&n| {
                    self.target
                        .factor_slice_interval(n, d, log_h[n], &state.position)
                        .map(|r| r.ok())
                        .flatten()
                })
                .collect();
            if let Some(intervals) = exact {
                let lo = intervals.iter().map(|i| i.0).fold(f64::NEG_INFINITY, f64::max);
                let hi = intervals.iter().map(|i| i.1).fold(f64::INFINITY, f64::min);
                if lo > hi {
                    return Err(Error::Contract(format!(
                        "AuxiliaryGibbs: empty slice intersection on coordinate {d}"
                    )));
                }
                state.position[d] = if lo == hi {
                    lo
                } else {
                    rng.uniform_range(lo, hi)
                };
            } else {
                // Stepping-out on the joint constraint: in slice iff
                // every touching factor clears its height.
                let x0 = state.position[d];
                let mut probe = state.position.clone();
                let width = self.width;
                let target = self.target.as_ref();
                let out = slice_line(
                    0.0,
                    |t| {
                        probe[d] = x0 + t * width;
                        touching
                            .iter()
                            .map(|&n| target.log_factor(n, &probe) - log_h[n])
                            .fold(f64::INFINITY, f64::min)
                    },
                    rng,
                )?;
                evals += out.evals;
                state.position[d] = x0 + out.r * width;
            }
        }
        state.cached_log_density = self.target.log_density(&state.position);
        evals += 1;
        Ok(KernelStep {
            accepted: true,
            proposals_evaluated: evals,
            log_alpha: 0.0,
        })
    }

    fn log_target(&self, position: &DVector<f64>) -> Option<f64> {
        Some(self.target.log_density(position))
    }
}
