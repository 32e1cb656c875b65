//! Elliptical slice sampling and Hamiltonian slice sampling: angle-shrink
//! slice moves along the closed elliptical trajectories that exactly
//! conserve the Gaussian approximate Hamiltonian.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernel::{ChainState, GenerationSnapshot, Kernel, KernelStep, TargetDensity};
use crate::linalg::{ellipsoid_uniform, LN_2PI};
use crate::maps::{elliptical_map, EllipseParams};
use crate::rng::RngStream;
use crate::samplers::slice::slice_shrink;

/// Elliptical slice sampler for targets of the form
/// `π(θ) ∝ ψ(θ)·L(θ)` with Gaussian prior `ψ = N(μ, Σ)`.
///
/// Each step draws momentum `v ~ N(0, Σ⁻¹)`, a likelihood slice height
/// `h ~ U[0, L(θ)]`, then shrinks an angle bracket `[u − 2π, u]` along
/// the ellipse through `(θ, v)` until `L(ξ) ≥ h`. The prior and momentum
/// terms cancel along the trajectory (the approximate Hamiltonian is
/// conserved), so only the likelihood enters the slice test and the move
/// is accepted with probability one.
pub struct EllipticalSlice {
    target: Arc<dyn TargetDensity>,
    params: EllipseParams,
}

impl EllipticalSlice {
    /// Build from the full target and its Gaussian prior factor.
    pub fn new(target: Arc<dyn TargetDensity>, params: EllipseParams) -> Result<Self> {
        if params.dim() != target.dim() {
            return Err(Error::Config(format!(
                "EllipticalSlice: prior dim {} does not match target dim {}",
                params.dim(),
                target.dim()
            )));
        }
        Ok(Self { target, params })
    }

    /// Log prior `log ψ(θ)` under `N(μ, Σ)`.
    fn log_prior(&self, theta: &DVector<f64>) -> f64 {
        self.params.sigma().log_density(&(theta - self.params.mu()))
    }
}

impl Kernel for EllipticalSlice {
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
        let log_lik_cur = state.cached_log_density - self.log_prior(&state.position);
        if !log_lik_cur.is_finite() {
            return Err(Error::Contract(format!(
                "EllipticalSlice: non-finite current log likelihood {log_lik_cur}"
            )));
        }
        let v = self.params.sigma().sample_inv(rng);
        let log_h = log_lik_cur - rng.exp1();
        let u = rng.uniform_range(0.0, 2.0 * PI);
        let theta = state.position.clone();
        let params = &self.params;
        let target = self.target.as_ref();
        let out = slice_shrink(
            u - 2.0 * PI,
            u,
            log_h,
            |r| {
                let (xi, _) = elliptical_map(&theta, &v, r, params);
                target.log_density(&xi) - params.sigma().log_density(&(&xi - params.mu()))
            },
            rng,
        )?;
        let (xi, _) = elliptical_map(&theta, &v, out.r, params);
        state.cached_log_density = self.target.log_density(&xi);
        state.position = xi;
        Ok(KernelStep {
            accepted: true,
            proposals_evaluated: out.evals,
            log_alpha: 0.0,
        })
    }

    fn log_target(&self, position: &DVector<f64>) -> Option<f64> {
        Some(self.target.log_density(position))
    }
}

/// Hamiltonian slice sampler: a Gibbs scheme on `(θ, v, h)` under the
/// extended density `π̃(θ)·q(v)` with `q = N(0, Σ⁻¹)`.
///
/// Each step (1) draws a height `log h = log π̃(θ) + log q(v) − Exp(1)`,
/// (2) refreshes `v` uniformly on the momentum slice — the ellipsoid
/// `vᵀΣv ≤ ρ` — and (3) moves `(θ, v)` along the elliptical trajectory
/// with the angle-shrink procedure until the extended density clears the
/// height. Both the refresh and the trajectory move are unity-acceptance
/// slice updates; the momentum persists across steps.
pub struct HamiltonianSlice {
    target: Arc<dyn TargetDensity>,
    params: EllipseParams,
    v: Option<DVector<f64>>,
}

impl HamiltonianSlice {
    /// Build from a target and the Gaussian approximation defining the
    /// trajectories.
    pub fn new(target: Arc<dyn TargetDensity>, params: EllipseParams) -> Result<Self> {
        if params.dim() != target.dim() {
            return Err(Error::Config(format!(
                "HamiltonianSlice: params dim {} does not match target dim {}",
                params.dim(),
                target.dim()
            )));
        }
        Ok(Self {
            target,
            params,
            v: None,
        })
    }

    /// Log momentum density `log q(v)` under `N(0, Σ⁻¹)`.
    fn log_q(&self, v: &DVector<f64>) -> f64 {
        self.params.sigma().log_density_inv(v)
    }
}

impl Kernel for HamiltonianSlice {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn init_state(&mut self, position: DVector<f64>, rng: &mut RngStream) -> Result<ChainState> {
        self.v = Some(self.params.sigma().sample_inv(rng));
        let lp = self.target.log_density(&position);
        Ok(ChainState::new(position, lp))
    }

    fn step(
        &mut self,
        state: &mut ChainState,
        _snapshot: Option<&GenerationSnapshot<'_>>,
        rng: &mut RngStream,
    ) -> Result<KernelStep> {
        let lp = state.cached_log_density;
        let v_cur = match self.v.take() {
            Some(v) if v.len() == self.dim() => v,
            _ => self.params.sigma().sample_inv(rng),
        };
        let log_h = lp + self.log_q(&v_cur) - rng.exp1();
        // Momentum slice {v : log π̃(θ) + log q(v) ≥ log h} is the
        // ellipsoid vᵀΣv ≤ ρ with ρ = −2(log h − log π̃(θ)) − n·ln2π
        // + log|Σ|; ρ = v_curᵀΣv_cur + 2·Exp > 0 almost surely.
        let n = self.dim() as f64;
        let rho = -2.0 * (log_h - lp) - n * LN_2PI + self.params.sigma().log_det();
        let v = ellipsoid_uniform(self.params.sigma(), rho, rng)?;
        // Trajectory move: shrink the angle until the extended density
        // clears the height. r = 0 reproduces (θ, v), which is in the
        // slice by construction, so termination is guaranteed.
        let u = rng.uniform_range(0.0, 2.0 * PI);
        let theta = state.position.clone();
        let params = &self.params;
        let target = self.target.as_ref();
        let sigma = self.params.sigma();
        let out = slice_shrink(
            u - 2.0 * PI,
            u,
            log_h,
            |r| {
                let (xi, w) = elliptical_map(&theta, &v, r, params);
                target.log_density(&xi) + sigma.log_density_inv(&w)
            },
            rng,
        )?;
        let (xi, w) = elliptical_map(&theta, &v, out.r, params);
        state.cached_log_density = self.target.log_density(&xi);
        state.position = xi;
        self.v = Some(w);
        Ok(KernelStep {
            accepted: true,
            proposals_evaluated: out.evals,
            log_alpha: 0.0,
        })
    }

    fn log_target(&self, position: &DVector<f64>) -> Option<f64> {
        Some(self.target.log_density(position))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::moment_test;
    use crate::kernel::run_chain;
    use crate::linalg::SpdMatrix;
    use crate::targets::GaussianTarget;

    /// Gaussian prior N(0, I) times Gaussian likelihood N(y, I): posterior
    /// N(y/2, I/2) per coordinate.
    struct PriorTimesLikelihood {
        prior: GaussianTarget,
        y: DVector<f64>,
    }

    impl TargetDensity for PriorTimesLikelihood {
        fn dim(&self) -> usize {
            self.prior.dim()
        }

        fn log_density(&self, theta: &DVector<f64>) -> f64 {
            let r = theta - &self.y;
            self.prior.log_density(theta) - 0.5 * r.dot(&r)
        }
    }

    #[test]
    fn elliptical_slice_matches_conjugate_posterior() {
        let dim = 2;
        let y = DVector::from_column_slice(&[1.0, -0.5]);
        let target = Arc::new(PriorTimesLikelihood {
            prior: GaussianTarget::standard(dim),
            y: y.clone(),
        });
        let mut kernel =
            EllipticalSlice::new(target, EllipseParams::standard(dim)).unwrap();
        let mut rng = RngStream::new(71, 0);
        let initial = DVector::from_column_slice(&[0.5, -0.25]);
        let trace = run_chain(&mut kernel, &initial, 50_000, &mut rng).unwrap();
        assert!(trace.accepted().iter().all(|&a| a));
        let report = moment_test(&trace, &[0.5, -0.25], &[0.5, 0.5]).unwrap();
        assert!(report.all_within(4.0), "max |z| = {}", report.max_abs_z());
    }

    #[test]
    fn elliptical_slice_constant_likelihood_accepts_first_angle() {
        // Target identical to the prior: L ≡ 1, so every angle is in the
        // slice and exactly one proposal is evaluated per step.
        let target = Arc::new(GaussianTarget::standard(3));
        let mut kernel =
            EllipticalSlice::new(target, EllipseParams::standard(3)).unwrap();
        let mut rng = RngStream::new(72, 0);
        let mut state = kernel
            .init_state(DVector::zeros(3), &mut rng)
            .unwrap();
        for _ in 0..200 {
            let step = kernel.step(&mut state, None, &mut rng).unwrap();
            assert!(step.accepted);
            assert_eq!(step.proposals_evaluated, 1);
        }
    }

    #[test]
    fn hamiltonian_slice_gaussian_invariance() {
        let target = Arc::new(GaussianTarget::correlated_2d(0.7).unwrap());
        let params = EllipseParams::standard(2);
        let mut kernel = HamiltonianSlice::new(target.clone(), params).unwrap();
        let mut rng = RngStream::new(73, 0);
        let initial = target.sample(&mut rng);
        let trace = run_chain(&mut kernel, &initial, 50_000, &mut rng).unwrap();
        assert!(trace.accepted().iter().all(|&a| a));
        let report = moment_test(&trace, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(report.all_within(4.0), "max |z| = {}", report.max_abs_z());
    }

    #[test]
    fn hamiltonian_slice_exact_params_accept_first_angle() {
        // When the target equals N(μ, Σ) with the same params, the
        // trajectory conserves the extended density exactly, so the first
        // angle always clears the height.
        let cov = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let sigma = SpdMatrix::new(cov).unwrap();
        let mu = DVector::from_column_slice(&[0.3, -1.2]);
        let target = Arc::new(GaussianTarget::new(mu.clone(), sigma.clone()).unwrap());
        let params = EllipseParams::new(mu.clone(), sigma).unwrap();
        let mut kernel = HamiltonianSlice::new(target, params).unwrap();
        let mut rng = RngStream::new(74, 0);
        let mut state = kernel.init_state(mu, &mut rng).unwrap();
        for _ in 0..200 {
            let step = kernel.step(&mut state, None, &mut rng).unwrap();
            assert!(step.accepted);
            assert_eq!(step.proposals_evaluated, 1);
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let target = Arc::new(GaussianTarget::standard(2));
        assert!(EllipticalSlice::new(target.clone(), EllipseParams::standard(3)).is_err());
        assert!(HamiltonianSlice::new(target, EllipseParams::standard(3)).is_err());
    }
}
