//! Experiment configuration: a flat `key = value` text format with
//! `[section]` headers, parsed strictly — unknown keys, duplicate keys
//! and malformed lines are all errors.
//!
//! Schema (top-level keys may appear before any section header):
//!
//! ```text
//! # toy_metropolis.cfg
//! name       = toy-metropolis     # optional, defaults to the file stem
//! seed       = 20170401
//! iterations = 60000
//! burn_in    = 10000              # optional, default 0
//! chains     = 1                  # optional, default 1
//! output_dir = out                # optional, default "."
//!
//! [target]
//! kind = toy_scalar               # toy_scalar | toy_joint | gaussian |
//!                                 # lgssm_toy
//! data = reference                # reference | simulate (toy/lgssm kinds)
//!
//! [sampler]
//! kind = adaptive_metropolis
//! target_rate = 0.44
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Raw sectioned key-value parsing
// ---------------------------------------------------------------------------

/// Parsed but untyped config: section name (empty for top level) →
/// key → value. Consumption is tracked so leftover keys can be rejected.
#[derive(Debug, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    /// Parse the sectioned `key = value` text. `#` starts a comment;
    /// blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    Error::Config(format!("line {}: unterminated section header", lineno + 1))
                })?;
                current = name.trim().to_string();
                if current.is_empty() {
                    return Err(Error::Config(format!(
                        "line {}: empty section name",
                        lineno + 1
                    )));
                }
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got {line:?}", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            let section = sections.entry(current.clone()).or_default();
            if section.insert(key.clone(), value).is_some() {
                let loc = if current.is_empty() {
                    key.clone()
                } else {
                    format!("{current}.{key}")
                };
                return Err(Error::Config(format!("line {}: duplicate key {loc}", lineno + 1)));
            }
        }
        Ok(Self { sections })
    }

    /// Remove and return a key from a section (empty section name for the
    /// top level).
    pub fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.sections.get_mut(section)?.remove(key)
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, section: &str, key: &str) -> Result<Option<T>> {
        match self.take(section, key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!(
                    "invalid value {v:?} for {}{key}",
                    if section.is_empty() {
                        String::new()
                    } else {
                        format!("{section}.")
                    }
                ))
            }),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, section: &str, key: &str) -> Result<T> {
        self.take_parsed(section, key)?.ok_or_else(|| {
            Error::Config(format!(
                "missing required key {}{key}",
                if section.is_empty() {
                    String::new()
                } else {
                    format!("{section}.")
                }
            ))
        })
    }

    /// Error if any key was never consumed (fail-fast on typos).
    pub fn finish(self) -> Result<()> {
        for (section, keys) in &self.sections {
            if let Some(key) = keys.keys().next() {
                let loc = if section.is_empty() {
                    key.clone()
                } else {
                    format!("{section}.{key}")
                };
                return Err(Error::Config(format!("unknown config key: {loc}")));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Typed experiment configuration
// ---------------------------------------------------------------------------

/// Where a toy / state-space observation series comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataConfig {
    /// The shipped T = 100 reference series.
    Reference,
    /// Simulate from the generative model under a dedicated seed.
    Simulate {
        /// Series length T.
        horizon: usize,
        /// True observation log-variance υ.
        true_upsilon: f64,
        /// Data-generation seed (independent of the chain seed).
        seed: u64,
    },
}

/// Declarative target choice.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetConfig {
    /// Marginal posterior of υ (Appendix-style toy model).
    ToyScalar {
        /// Observation series.
        data: DataConfig,
    },
    /// Joint posterior of (υ, x_1..x_T).
    ToyJoint {
        /// Observation series.
        data: DataConfig,
    },
    /// Zero-mean Gaussian with unit variances and common correlation
    /// (`rho = 0` gives the standard normal).
    Gaussian {
        /// Dimension.
        dim: usize,
        /// Pairwise correlation (2-D only when nonzero).
        rho: f64,
    },
    /// Parameter posterior of the toy linear Gaussian SSM (υ unknown),
    /// for the pseudo-marginal samplers.
    LgssmToy {
        /// Observation series.
        data: DataConfig,
    },
}

/// Declarative sampler choice with its tuning knobs.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplerConfig {
    /// Plain adaptive Metropolis.
    AdaptiveMetropolis {
        /// Robbins–Monro target acceptance rate.
        target_rate: f64,
    },
    /// Adaptive Metropolis with the persistent refresh-V coupling.
    RefreshV {
        /// Robbins–Monro target acceptance rate.
        target_rate: f64,
    },
    /// Gibbs sweep: exact conditionals where the target provides them
    /// (x-coordinates of the toy joint, all coordinates of a Gaussian),
    /// univariate slice for the rest.
    Gibbs {
        /// Slice bracket width for non-exact coordinates.
        width: f64,
    },
    /// MH-within-Gibbs: per-coordinate random-walk updates.
    MhGibbs {
        /// Per-coordinate proposal standard deviation.
        scale: f64,
    },
    /// Auxiliary-variable Gibbs over target factors.
    AuxiliaryGibbs {
        /// Stepping-out width for unsolvable coordinates.
        width: f64,
    },
    /// Univariate slice sampling, coordinate by coordinate.
    CoordinateSlice {
        /// Initial bracket width.
        width: f64,
    },
    /// Recursive Gaussian slice sampling.
    GaussianSlice {
        /// Isotropic proposal scale (sΣ = scale²·I).
        scale: f64,
    },
    /// Directional slice sampling on cross-chain directions (needs an
    /// ensemble of ≥ 3 chains).
    DirectionalSlice,
    /// Elliptical slice sampling with a standard normal prior factor.
    EllipticalSlice,
    /// Hamiltonian slice sampling with standard ellipse parameters.
    HamiltonianSlice,
    /// Hamiltonian Monte Carlo with identity mass.
    Hmc {
        /// Leapfrog step size ε.
        step_size: f64,
        /// Leapfrog steps L.
        n_steps: u32,
    },
    /// MALA (single-step HMC).
    Mala {
        /// Leapfrog step size ε.
        step_size: f64,
    },
    /// Particle marginal Metropolis–Hastings (LGSSM target only).
    Pmmh {
        /// Particle count.
        particles: usize,
        /// Random-walk proposal standard deviation on υ.
        proposal_sd: f64,
    },
    /// Pseudo-marginal Hamiltonian slice sampling (LGSSM target only).
    PmHamiltonianSlice {
        /// Particle count.
        particles: usize,
        /// r-proposal base scale σ.
        sigma: f64,
        /// r-proposal depth exponent ζ.
        zeta: f64,
    },
}

impl SamplerConfig {
    /// Human-readable kind name, as accepted by `sampler.kind`.
    pub fn kind_name(&self) -> &'static str {
        match self {
            SamplerConfig::AdaptiveMetropolis { .. } => "adaptive_metropolis",
            SamplerConfig::RefreshV { .. } => "refresh_v",
            SamplerConfig::Gibbs { .. } => "gibbs",
            SamplerConfig::MhGibbs { .. } => "mh_gibbs",
            SamplerConfig::AuxiliaryGibbs { .. } => "auxiliary_gibbs",
            SamplerConfig::CoordinateSlice { .. } => "coordinate_slice",
            SamplerConfig::GaussianSlice { .. } => "gaussian_slice",
            SamplerConfig::DirectionalSlice => "directional_slice",
            SamplerConfig::EllipticalSlice => "elliptical_slice",
            SamplerConfig::HamiltonianSlice => "hamiltonian_slice",
            SamplerConfig::Hmc { .. } => "hmc",
            SamplerConfig::Mala { .. } => "mala",
            SamplerConfig::Pmmh { .. } => "pmmh",
            SamplerConfig::PmHamiltonianSlice { .. } => "pm_hamiltonian_slice",
        }
    }
}

/// All sampler kinds with a one-line description (for `list-samplers`).
pub const SAMPLER_KINDS: &[(&str, &str)] = &[
    ("adaptive_metropolis", "random-walk Metropolis with adaptive covariance and scale"),
    ("refresh_v", "adaptive Metropolis with the persistent refresh-V slice coupling"),
    ("gibbs", "Gibbs sweep: exact conditionals where available, slice elsewhere"),
    ("mh_gibbs", "Metropolis-within-Gibbs with per-coordinate random walks"),
    ("auxiliary_gibbs", "auxiliary-variable Gibbs with per-factor slice heights"),
    ("coordinate_slice", "univariate slice sampling with stepping-out/shrinkage"),
    ("gaussian_slice", "recursive Gaussian slice sampling (unity acceptance)"),
    ("directional_slice", "slice sampling along cross-chain ensemble directions"),
    ("elliptical_slice", "elliptical slice sampling under a Gaussian prior"),
    ("hamiltonian_slice", "Hamiltonian slice sampling on exact elliptical trajectories"),
    ("hmc", "Hamiltonian Monte Carlo (leapfrog + Metropolis correction)"),
    ("mala", "Metropolis-adjusted Langevin (single-step HMC)"),
    ("pmmh", "particle marginal Metropolis-Hastings"),
    ("pm_hamiltonian_slice", "pseudo-marginal Hamiltonian slice sampling"),
];

/// Fully validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Experiment name (prefix of all output files).
    pub name: String,
    /// Master seed for the chains.
    pub seed: u64,
    /// Iterations per chain (post-initialization).
    pub iterations: usize,
    /// Rows dropped before computing summaries (traces keep all rows).
    pub burn_in: usize,
    /// Number of chains.
    pub chains: usize,
    /// Output directory.
    pub output_dir: PathBuf,
    /// Target choice.
    pub target: TargetConfig,
    /// Sampler choice.
    pub sampler: SamplerConfig,
}

impl ExperimentConfig {
    /// Parse and validate a config file's text; `fallback_name` (usually
    /// the file stem) is used when `name` is absent.
    pub fn from_text(text: &str, fallback_name: &str) -> Result<Self> {
        let mut raw = RawConfig::parse(text)?;
        let name = raw
            .take("", "name")
            .unwrap_or_else(|| fallback_name.to_string());
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid experiment name {name:?}")));
        }
        let seed: u64 = raw.require("", "seed")?;
        let iterations: usize = raw.require("", "iterations")?;
        if iterations == 0 {
            return Err(Error::Config("iterations must be ≥ 1".into()));
        }
        let burn_in: usize = raw.take_parsed("", "burn_in")?.unwrap_or(0);
        if burn_in >= iterations {
            return Err(Error::Config(format!(
                "burn_in {burn_in} must be smaller than iterations {iterations}"
            )));
        }
        let chains: usize = raw.take_parsed("", "chains")?.unwrap_or(1);
        if chains == 0 {
            return Err(Error::Config("chains must be ≥ 1".into()));
        }
        let output_dir = PathBuf::from(raw.take("", "output_dir").unwrap_or_else(|| ".".into()));

        let target = Self::parse_target(&mut raw)?;
        let sampler = Self::parse_sampler(&mut raw)?;
        raw.finish()?;

        let cfg = Self {
            name,
            seed,
            iterations,
            burn_in,
            chains,
            output_dir,
            target,
            sampler,
        };
        cfg.validate_combination()?;
        Ok(cfg)
    }

    /// Read a config file from disk (the file stem becomes the default
    /// experiment name).
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("experiment");
        Self::from_text(&text, stem)
    }

    fn parse_data(raw: &mut RawConfig) -> Result<DataConfig> {
        match raw.take("target", "data").as_deref() {
            None | Some("reference") => Ok(DataConfig::Reference),
            Some("simulate") => Ok(DataConfig::Simulate {
                horizon: raw.take_parsed("target", "horizon")?.unwrap_or(100),
                true_upsilon: raw.take_parsed("target", "true_upsilon")?.unwrap_or(0.0),
                seed: raw.take_parsed("target", "data_seed")?.unwrap_or(20170401),
            }),
            Some(other) => Err(Error::Config(format!(
                "target.data must be `reference` or `simulate`, got {other:?}"
            ))),
        }
    }

    fn parse_target(raw: &mut RawConfig) -> Result<TargetConfig> {
        let kind = raw
            .take("target", "kind")
            .ok_or_else(|| Error::Config("missing required key target.kind".into()))?;
        match kind.as_str() {
            "toy_scalar" => Ok(TargetConfig::ToyScalar {
                data: Self::parse_data(raw)?,
            }),
            "toy_joint" => Ok(TargetConfig::ToyJoint {
                data: Self::parse_data(raw)?,
            }),
            "gaussian" => {
                let dim: usize = raw.take_parsed("target", "dim")?.unwrap_or(2);
                let rho: f64 = raw.take_parsed("target", "rho")?.unwrap_or(0.0);
                if dim == 0 {
                    return Err(Error::Config("target.dim must be ≥ 1".into()));
                }
                if rho != 0.0 && dim != 2 {
                    return Err(Error::Config(
                        "target.rho ≠ 0 is only supported for dim = 2".into(),
                    ));
                }
                if !(-1.0..1.0).contains(&rho) {
                    return Err(Error::Config(format!(
                        "target.rho must lie in (−1, 1), got {rho}"
                    )));
                }
                Ok(TargetConfig::Gaussian { dim, rho })
            }
            "lgssm_toy" => Ok(TargetConfig::LgssmToy {
                data: Self::parse_data(raw)?,
            }),
            other => Err(Error::Config(format!("unknown target.kind {other:?}"))),
        }
    }

    fn parse_sampler(raw: &mut RawConfig) -> Result<SamplerConfig> {
        let kind = raw
            .take("sampler", "kind")
            .ok_or_else(|| Error::Config("missing required key sampler.kind".into()))?;
        let positive = |v: f64, key: &str| -> Result<f64> {
            if v > 0.0 {
                Ok(v)
            } else {
                Err(Error::Config(format!("sampler.{key} must be positive, got {v}")))
            }
        };
        match kind.as_str() {
            "adaptive_metropolis" => Ok(SamplerConfig::AdaptiveMetropolis {
                target_rate: raw.take_parsed("sampler", "target_rate")?.unwrap_or(0.44),
            }),
            "refresh_v" => Ok(SamplerConfig::RefreshV {
                target_rate: raw.take_parsed("sampler", "target_rate")?.unwrap_or(0.44),
            }),
            "gibbs" => Ok(SamplerConfig::Gibbs {
                width: positive(raw.take_parsed("sampler", "width")?.unwrap_or(1.0), "width")?,
            }),
            "mh_gibbs" => Ok(SamplerConfig::MhGibbs {
                scale: positive(raw.take_parsed("sampler", "scale")?.unwrap_or(1.0), "scale")?,
            }),
            "auxiliary_gibbs" => Ok(SamplerConfig::AuxiliaryGibbs {
                width: positive(raw.take_parsed("sampler", "width")?.unwrap_or(1.0), "width")?,
            }),
            "coordinate_slice" => Ok(SamplerConfig::CoordinateSlice {
                width: positive(raw.take_parsed("sampler", "width")?.unwrap_or(1.0), "width")?,
            }),
            "gaussian_slice" => Ok(SamplerConfig::GaussianSlice {
                scale: positive(raw.take_parsed("sampler", "scale")?.unwrap_or(1.0), "scale")?,
            }),
            "directional_slice" => Ok(SamplerConfig::DirectionalSlice),
            "elliptical_slice" => Ok(SamplerConfig::EllipticalSlice),
            "hamiltonian_slice" => Ok(SamplerConfig::HamiltonianSlice),
            "hmc" => Ok(SamplerConfig::Hmc {
                step_size: positive(
                    raw.take_parsed("sampler", "step_size")?.unwrap_or(0.2),
                    "step_size",
                )?,
                n_steps: raw.take_parsed("sampler", "n_steps")?.unwrap_or(10),
            }),
            "mala" => Ok(SamplerConfig::Mala {
                step_size: positive(
                    raw.take_parsed("sampler", "step_size")?.unwrap_or(0.5),
                    "step_size",
                )?,
            }),
            "pmmh" => Ok(SamplerConfig::Pmmh {
                particles: raw.take_parsed("sampler", "particles")?.unwrap_or(128),
                proposal_sd: positive(
                    raw.take_parsed("sampler", "proposal_sd")?.unwrap_or(0.5),
                    "proposal_sd",
                )?,
            }),
            "pm_hamiltonian_slice" => Ok(SamplerConfig::PmHamiltonianSlice {
                particles: raw.take_parsed("sampler", "particles")?.unwrap_or(128),
                sigma: positive(raw.take_parsed("sampler", "sigma")?.unwrap_or(1.0), "sigma")?,
                zeta: positive(raw.take_parsed("sampler", "zeta")?.unwrap_or(1.0), "zeta")?,
            }),
            other => Err(Error::Config(format!("unknown sampler.kind {other:?}"))),
        }
    }

    fn validate_combination(&self) -> Result<()> {
        let pseudo_marginal = matches!(
            self.sampler,
            SamplerConfig::Pmmh { .. } | SamplerConfig::PmHamiltonianSlice { .. }
        );
        let lgssm = matches!(self.target, TargetConfig::LgssmToy { .. });
        if pseudo_marginal != lgssm {
            return Err(Error::Config(format!(
                "sampler {:?} requires target kind lgssm_toy (and vice versa)",
                self.sampler.kind_name()
            )));
        }
        if matches!(self.sampler, SamplerConfig::DirectionalSlice) && self.chains < 3 {
            return Err(Error::Config(format!(
                "directional_slice needs chains ≥ 3, got {}",
                self.chains
            )));
        }
        if matches!(self.sampler, SamplerConfig::AuxiliaryGibbs { .. })
            && !matches!(self.target, TargetConfig::ToyJoint { .. })
        {
            return Err(Error::Config(
                "auxiliary_gibbs requires the factored target kind toy_joint".into(),
            ));
        }
        if let SamplerConfig::Hmc { n_steps, .. } = self.sampler {
            if n_steps == 0 {
                return Err(Error::Config("sampler.n_steps must be ≥ 1".into()));
            }
        }
        if let SamplerConfig::Pmmh { particles, .. }
        | SamplerConfig::PmHamiltonianSlice { particles, .. } = self.sampler
        {
            if particles < 2 {
                return Err(Error::Config("sampler.particles must be ≥ 2".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "\
seed = 7
iterations = 1000
burn_in = 100

[target]
kind = toy_scalar

[sampler]
kind = adaptive_metropolis
target_rate = 0.44
";

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_text(TOY, "toy").unwrap();
        assert_eq!(cfg.name, "toy");
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.iterations, 1000);
        assert_eq!(cfg.burn_in, 100);
        assert_eq!(cfg.chains, 1);
        assert_eq!(
            cfg.target,
            TargetConfig::ToyScalar {
                data: DataConfig::Reference
            }
        );
        assert_eq!(
            cfg.sampler,
            SamplerConfig::AdaptiveMetropolis { target_rate: 0.44 }
        );
    }

    #[test]
    fn unknown_key_is_error() {
        let text = format!("{TOY}\nbogus_key = 1\n");
        let err = ExperimentConfig::from_text(&text, "toy").unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn unknown_section_key_is_error() {
        let text = TOY.replace("target_rate = 0.44", "target_rate = 0.44\nwhatever = 2");
        let err = ExperimentConfig::from_text(&text, "toy").unwrap_err();
        assert!(err.to_string().contains("sampler.whatever"), "{err}");
    }

    #[test]
    fn duplicate_key_is_error() {
        let text = format!("{TOY}\n[sampler]\n"); // reopening is fine…
        ExperimentConfig::from_text(&text, "toy").unwrap();
        let dup = TOY.replace("seed = 7", "seed = 7\nseed = 8");
        assert!(ExperimentConfig::from_text(&dup, "toy").is_err());
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = format!("# header\n\n{TOY}  # trailing\n");
        ExperimentConfig::from_text(&text, "toy").unwrap();
    }

    #[test]
    fn invalid_combinations_rejected() {
        let pm = TOY
            .replace("kind = toy_scalar", "kind = toy_scalar")
            .replace("kind = adaptive_metropolis", "kind = pmmh");
        assert!(ExperimentConfig::from_text(&pm, "toy").is_err());
        let ds = TOY.replace("kind = adaptive_metropolis", "kind = directional_slice");
        assert!(ExperimentConfig::from_text(&ds, "toy").is_err());
        let bad_burn = TOY.replace("burn_in = 100", "burn_in = 1000");
        assert!(ExperimentConfig::from_text(&bad_burn, "toy").is_err());
    }

    #[test]
    fn simulate_data_block() {
        let text = TOY.replace(
            "kind = toy_scalar",
            "kind = toy_scalar\ndata = simulate\nhorizon = 50\ntrue_upsilon = -1.0\ndata_seed = 3",
        );
        let cfg = ExperimentConfig::from_text(&text, "toy").unwrap();
        assert_eq!(
            cfg.target,
            TargetConfig::ToyScalar {
                data: DataConfig::Simulate {
                    horizon: 50,
                    true_upsilon: -1.0,
                    seed: 3
                }
            }
        );
    }
}
