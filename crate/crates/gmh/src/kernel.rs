//! Core abstractions: target densities, the generalised acceptance test,
//! transition kernels, and the chain-running loops.
//!
//! Every sampler in this crate is one instance of the same scheme: draw
//! auxiliary randomness `V ~ q(V|θ)`, map `(θ, V)` through a self-inverse
//! transformation `T` with tracked Jacobian, and accept the image with
//! probability
//!
//! ```text
//! α = min{1, π(ξ) q(W|ξ) / (π(θ) q(V|θ)) · |J_T(θ,V)|}.
//! ```
//!
//! [`generalized_accept`] implements that test in the log domain;
//! [`run_chain`] and [`run_ensemble`] iterate any [`Kernel`] built on it.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// An unnormalized target density π̃(θ) on R^{n_θ}.
///
/// `log_density` must return `-∞` (never NaN) outside the support.
/// Gradients and exact conditional samplers are optional capabilities
/// that gradient-based and Gibbs-style kernels probe for.
pub trait TargetDensity: Send + Sync {
    /// Dimension n_θ of the parameter space.
    fn dim(&self) -> usize;

    /// Log of the unnormalized density; `-∞` outside the support.
    fn log_density(&self, theta: &DVector<f64>) -> f64;

    /// Gradient of the log density, if available.
    fn gradient(&self, _theta: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    /// Draw the coordinates in `block` exactly from their conditional
    /// distribution given the rest of `theta`, if the target knows how.
    fn sample_conditional(
        &self,
        _theta: &DVector<f64>,
        _block: &[usize],
        _rng: &mut RngStream,
    ) -> Option<DVector<f64>> {
        None
    }
}

/// A target that factorizes as `π̃(θ) = Π_n l_n(θ)`, enabling the
/// auxiliary-variable Gibbs scheme (one slice height per factor).
pub trait FactoredTarget: TargetDensity {
    /// Number of factors N.
    fn num_factors(&self) -> usize;

    /// `log l_n(θ)` for factor `n`.
    fn log_factor(&self, n: usize, theta: &DVector<f64>) -> f64;

    /// Whether factor `n` depends on coordinate `coord`.
    fn factor_touches(&self, n: usize, coord: usize) -> bool;

    /// Exact solution of `{x : log l_n(θ[coord ← x]) ≥ log_h}` as an
    /// interval, when the factor admits one. `None` falls back to the
    /// stepping-out procedure.
    fn factor_slice_interval(
        &self,
        _n: usize,
        _coord: usize,
        _log_h: f64,
        _theta: &DVector<f64>,
    ) -> Option<Result<(f64, f64)>> {
        None
    }
}

/// Current position of one chain plus cached bookkeeping.
#[derive(Debug, Clone)]
pub struct ChainState {
    /// Current position θ_k.
    pub position: DVector<f64>,
    /// Cached log target at `position`. For pseudo-marginal kernels this
    /// is the *retained estimate*, not a deterministic function of the
    /// position.
    pub cached_log_density: f64,
    /// Number of kernel applications so far.
    pub iteration: u64,
}

impl ChainState {
    /// A fresh state at `position` with the given cached log density.
    pub fn new(position: DVector<f64>, cached_log_density: f64) -> Self {
        Self {
            position,
            cached_log_density,
            iteration: 0,
        }
    }
}

/// Metadata describing one kernel application.
#[derive(Debug, Clone, Copy)]
pub struct KernelStep {
    /// Whether the final proposal was accepted. Unity-acceptance kernels
    /// (the slice family, exact Gibbs) report `true` on every step.
    pub accepted: bool,
    /// Number of target (or estimator) evaluations spent this step;
    /// always ≥ 1.
    pub proposals_evaluated: u32,
    /// Log acceptance probability of the final proposal; 0 for
    /// unity-acceptance kernels.
    pub log_alpha: f64,
}

/// Read-only view of the previous generation of an ensemble, handed to
/// kernels that consume cross-chain information (directional slice).
#[derive(Debug)]
pub struct GenerationSnapshot<'a> {
    /// Index of the chain currently being stepped.
    pub chain_index: usize,
    /// Positions of all chains at the end of the previous generation.
    pub positions: &'a [DVector<f64>],
}

/// A Markov transition kernel.
///
/// Kernels own their target (and any adaptive state, which is chain-local
/// because one kernel instance drives exactly one chain). The split
/// between deterministic and estimated targets is hidden behind
/// [`Kernel::init_state`]: pseudo-marginal kernels run their estimator
/// there.
pub trait Kernel: Send {
    /// Dimension of the state space the kernel operates on.
    fn dim(&self) -> usize;

    /// Evaluate the (possibly estimated) log target at `position` and
    /// build the initial chain state.
    fn init_state(&mut self, position: DVector<f64>, rng: &mut RngStream) -> Result<ChainState>;

    /// Advance `state` by one transition.
    fn step(
        &mut self,
        state: &mut ChainState,
        snapshot: Option<&GenerationSnapshot<'_>>,
        rng: &mut RngStream,
    ) -> Result<KernelStep>;

    /// Whether this kernel needs cross-chain snapshots from
    /// [`run_ensemble`] (≥ 3 chains).
    fn requires_ensemble(&self) -> bool {
        false
    }

    /// Deterministic log target at `position`, if one exists. Used by
    /// debug-build consistency checks; pseudo-marginal kernels return
    /// `None` because their cached value is a retained stochastic
    /// estimate.
    fn log_target(&self, _position: &DVector<f64>) -> Option<f64> {
        None
    }
}

/// The generalised Metropolis–Hastings acceptance test, in log domain.
///
/// Accepts iff `log u ≤ min(0, log_joint_proposed − log_joint_current +
/// log_abs_jacobian)`, with ties accepted (fixes determinism on the
/// measure-zero boundary). The "joints" are `log[π̃(θ) q(V|θ)]` evaluated
/// at the current and mapped points.
///
/// A proposed log joint of `-∞` rejects without error; a current log
/// joint of `-∞` or any NaN input is a contract violation (the chain must
/// never sit at a zero-density point, and NaN surfaces target bugs).
///
/// ```
/// use gmh::kernel::generalized_accept;
///
/// // ratio exactly 1: always accepted
/// assert!(generalized_accept(-1.0, -1.0, 0.0, 0.999).unwrap());
/// // α = 0.5: accepted iff u ≤ 0.5
/// assert!(generalized_accept(0.0, 0.5_f64.ln(), 0.0, 0.4).unwrap());
/// assert!(!generalized_accept(0.0, 0.5_f64.ln(), 0.0, 0.6).unwrap());
/// ```
pub fn generalized_accept(
    log_joint_current: f64,
    log_joint_proposed: f64,
    log_abs_jacobian: f64,
    u: f64,
) -> Result<bool> {
    if log_joint_current.is_nan()
        || log_joint_proposed.is_nan()
        || log_abs_jacobian.is_nan()
        || u.is_nan()
    {
        return Err(Error::Contract(
            "generalized_accept: NaN in acceptance computation".into(),
        ));
    }
    if log_joint_current == f64::NEG_INFINITY {
        return Err(Error::Contract(
            "generalized_accept: current state has zero density".into(),
        ));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Contract(format!(
            "generalized_accept: u = {u} outside [0,1]"
        )));
    }
    if log_joint_proposed == f64::NEG_INFINITY {
        return Ok(false);
    }
    let log_alpha = (log_joint_proposed - log_joint_current + log_abs_jacobian).min(0.0);
    Ok(u.ln() <= log_alpha)
}

/// Ordered record of one chain: an M×n_θ sample matrix plus per-row
/// metadata, the input to every diagnostic.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    dim: usize,
    samples: Vec<f64>, // row-major M×dim
    log_density: Vec<f64>,
    accepted: Vec<bool>,
    proposals_evaluated: Vec<u32>,
}

impl ChainTrace {
    /// An empty trace with capacity for `iterations` rows.
    pub fn with_capacity(dim: usize, iterations: usize) -> Self {
        Self {
            dim,
            samples: Vec::with_capacity(dim * iterations),
            log_density: Vec::with_capacity(iterations),
            accepted: Vec::with_capacity(iterations),
            proposals_evaluated: Vec::with_capacity(iterations),
        }
    }

    /// Append one row.
    pub fn push(&mut self, state: &ChainState, step: &KernelStep) {
        debug_assert_eq!(state.position.len(), self.dim);
        self.samples.extend(state.position.iter());
        self.log_density.push(state.cached_log_density);
        self.accepted.push(step.accepted);
        self.proposals_evaluated.push(step.proposals_evaluated);
    }

    /// Number of rows M.
    pub fn len(&self) -> usize {
        self.log_density.len()
    }

    /// Whether the trace has no rows.
    pub fn is_empty(&self) -> bool {
        self.log_density.is_empty()
    }

    /// State dimension n_θ.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row `k` as a slice of length n_θ.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.samples[k * self.dim..(k + 1) * self.dim]
    }

    /// Column `j` collected into a vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        assert!(j < self.dim, "column {j} out of range");
        (0..self.len()).map(|k| self.samples[k * self.dim + j]).collect()
    }

    /// Per-row cached log densities.
    pub fn log_density(&self) -> &[f64] {
        &self.log_density
    }

    /// Per-row acceptance flags.
    pub fn accepted(&self) -> &[bool] {
        &self.accepted
    }

    /// Per-row target-evaluation counts.
    pub fn proposals_evaluated(&self) -> &[u32] {
        &self.proposals_evaluated
    }

    /// Fraction of rows with `accepted = true`.
    pub fn acceptance_rate(&self) -> f64 {
        if self.is_empty() {
            return f64::NAN;
        }
        self.accepted.iter().filter(|a| **a).count() as f64 / self.len() as f64
    }

    /// Drop the first `burn_in` rows.
    pub fn discard_burn_in(&mut self, burn_in: usize) {
        let burn_in = burn_in.min(self.len());
        self.samples.drain(..burn_in * self.dim);
        self.log_density.drain(..burn_in);
        self.accepted.drain(..burn_in);
        self.proposals_evaluated.drain(..burn_in);
    }
}

/// Run one chain for `iterations` steps from `initial`.
///
/// Row `k` of the returned trace is the state after `k + 1` kernel
/// applications; the initial point is not recorded. Fails fast if the
/// initial point has zero density.
pub fn run_chain(
    kernel: &mut dyn Kernel,
    initial: &DVector<f64>,
    iterations: usize,
    rng: &mut RngStream,
) -> Result<ChainTrace> {
    if iterations == 0 {
        return Err(Error::Config("run_chain: iterations must be ≥ 1".into()));
    }
    if kernel.requires_ensemble() {
        return Err(Error::Config(
            "run_chain: this kernel consumes cross-chain directions; use run_ensemble with ≥ 3 chains"
                .into(),
        ));
    }
    let mut state = kernel.init_state(initial.clone(), rng)?;
    if state.cached_log_density == f64::NEG_INFINITY {
        return Err(Error::Config(
            "run_chain: initial point has zero target density".into(),
        ));
    }
    let mut trace = ChainTrace::with_capacity(kernel.dim(), iterations);
    for _ in 0..iterations {
        let step = kernel.step(&mut state, None, rng)?;
        state.iteration += 1;
        debug_check_consistency(kernel, &state);
        trace.push(&state, &step);
    }
    Ok(trace)
}

/// In debug builds, spot-check that the cached log density matches a
/// fresh evaluation (for kernels with a deterministic target).
fn debug_check_consistency(kernel: &dyn Kernel, state: &ChainState) {
    if cfg!(debug_assertions) && state.iteration % 97 == 0 {
        if let Some(lp) = kernel.log_target(&state.position) {
            let cached = state.cached_log_density;
            let scale = cached.abs().max(1.0);
            debug_assert!(
                (lp - cached).abs() <= 1e-8 * scale,
                "cached_log_density {cached} != fresh evaluation {lp} at iteration {}",
                state.iteration
            );
        }
    }
}

/// Run an ensemble of chains in lockstep generations.
///
/// Chain `i` uses `RngStream::new(seed, i)`. Within one generation all
/// chains step in parallel; a full barrier between generations guarantees
/// that kernels reading the [`GenerationSnapshot`] see only completed
/// previous-generation states. A kernel that requests cross-chain
/// directions requires at least 3 chains.
///
/// ```
/// use std::sync::Arc;
/// use nalgebra::DVector;
/// use gmh::kernel::{run_ensemble, Kernel};
/// use gmh::samplers::{DirectionSource, DirectionalSlice};
/// use gmh::targets::GaussianTarget;
///
/// let target = Arc::new(GaussianTarget::standard(2));
/// let kernels: Vec<Box<dyn Kernel>> = (0..3)
///     .map(|_| {
///         Box::new(DirectionalSlice::new(target.clone(), DirectionSource::CrossChain))
///             as Box<dyn Kernel>
///     })
///     .collect();
/// let initials = vec![
///     DVector::from_column_slice(&[0.0, 0.0]),
///     DVector::from_column_slice(&[1.0, 0.0]),
///     DVector::from_column_slice(&[0.0, 1.0]),
/// ];
/// let traces = run_ensemble(kernels, &initials, 200, 9)?;
/// assert_eq!(traces.len(), 3);
/// # Ok::<(), gmh::Error>(())
/// ```
pub fn run_ensemble(
    kernels: Vec<Box<dyn Kernel>>,
    initials: &[DVector<f64>],
    iterations: usize,
    seed: u64,
) -> Result<Vec<ChainTrace>> {
    if kernels.is_empty() || kernels.len() != initials.len() {
        return Err(Error::Config(format!(
            "run_ensemble: {} kernels but {} initial points",
            kernels.len(),
            initials.len()
        )));
    }
    if iterations == 0 {
        return Err(Error::Config("run_ensemble: iterations must be ≥ 1".into()));
    }
    let n_chains = kernels.len();
    if kernels.iter().any(|k| k.requires_ensemble()) && n_chains < 3 {
        return Err(Error::Config(format!(
            "run_ensemble: a direction-consuming kernel needs ≥ 3 chains, got {n_chains}"
        )));
    }

    struct Slot {
        kernel: Box<dyn Kernel>,
        state: ChainState,
        rng: RngStream,
        trace: ChainTrace,
    }

    let mut slots = Vec::with_capacity(n_chains);
    for (i, (mut kernel, initial)) in kernels.into_iter().zip(initials).enumerate() {
        let mut rng = RngStream::new(seed, i as u64);
        let state = kernel.init_state(initial.clone(), &mut rng)?;
        if state.cached_log_density == f64::NEG_INFINITY {
            return Err(Error::Config(format!(
                "run_ensemble: initial point of chain {i} has zero target density"
            )));
        }
        let trace = ChainTrace::with_capacity(kernel.dim(), iterations);
        slots.push(Slot {
            kernel,
            state,
            rng,
            trace,
        });
    }

    for _ in 0..iterations {
        let snapshot_positions: Vec<DVector<f64>> =
            slots.iter().map(|s| s.state.position.clone()).collect();
        slots
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(i, slot)| -> Result<()> {
                let snapshot = GenerationSnapshot {
                    chain_index: i,
                    positions: &snapshot_positions,
                };
                let step = slot.kernel.step(&mut slot.state, Some(&snapshot), &mut slot.rng)?;
                slot.state.iteration += 1;
                debug_check_consistency(slot.kernel.as_ref(), &slot.state);
                slot.trace.push(&slot.state, &step);
                Ok(())
            })?;
    }
    Ok(slots.into_iter().map(|s| s.trace).collect())
}
