//! Concrete transition kernels assembled from proposal draws plus
//! self-inverse mappings: adaptive Metropolis (with and without
//! persistent slice momentum), Gibbs sweeps, auxiliary-variable Gibbs,
//! the slice family (univariate, recursive Gaussian, directional,
//! elliptical, Hamiltonian), and MALA/HMC.

pub mod adaptive_metropolis;
pub mod elliptical;
pub mod gaussian_slice;
pub mod gibbs;
pub mod hmc;
pub mod slice;

pub use adaptive_metropolis::{AdaptiveMetropolis, AdaptiveMetropolisState};
pub use elliptical::{EllipticalSlice, HamiltonianSlice};
pub use gaussian_slice::RecursiveGaussianSlice;
pub use gibbs::{AuxiliaryGibbs, BlockUpdate, GibbsBlock, GibbsSweep};
pub use hmc::Hmc;
pub use slice::{CoordinateSlice, DirectionSource, DirectionalSlice};
