//! Experiment execution: turn a validated [`ExperimentConfig`] into
//! kernels and chains, persist traces as headered CSV (atomic renames,
//! round-trip float precision) and emit per-coordinate diagnostic
//! summaries as CSV and JSON lines.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;

use crate::config::{DataConfig, ExperimentConfig, SamplerConfig, TargetConfig};
use crate::diagnostics::summarize_trace;
use crate::error::{Error, Result};
use crate::kernel::{run_chain, run_ensemble, ChainState, ChainTrace, Kernel, KernelStep, TargetDensity};
use crate::linalg::SpdMatrix;
use crate::maps::EllipseParams;
use crate::pseudo_marginal::{PfLikelihood, PmHamiltonianSlice, Pmmh, RProposal};
use crate::rng::RngStream;
use crate::samplers::{
    AdaptiveMetropolis, AuxiliaryGibbs, BlockUpdate, CoordinateSlice, DirectionSource,
    DirectionalSlice, EllipticalSlice, GibbsBlock, GibbsSweep, HamiltonianSlice, Hmc,
    RecursiveGaussianSlice,
};
use crate::targets::{
    reference_toy_data, simulate_toy_data, GaussianTarget, LinearGaussianSsm, ToyJointTarget,
    ToyScalarTarget,
};

// ---------------------------------------------------------------------------
// Target and kernel construction
// ---------------------------------------------------------------------------

fn resolve_data(data: &DataConfig) -> Vec<f64> {
    match *data {
        DataConfig::Reference => reference_toy_data(),
        DataConfig::Simulate {
            horizon,
            true_upsilon,
            seed,
        } => {
            let mut rng = RngStream::new(seed, 0);
            simulate_toy_data(horizon, true_upsilon, &mut rng)
        }
    }
}

/// Concrete target built from a [`TargetConfig`].
enum BuiltTarget {
    Dense(Arc<dyn TargetDensity>),
    ToyJoint(Arc<ToyJointTarget>),
    Lgssm {
        model: LinearGaussianSsm,
        data: Vec<f64>,
    },
}

impl BuiltTarget {
    fn dim(&self) -> usize {
        match self {
            BuiltTarget::Dense(t) => t.dim(),
            BuiltTarget::ToyJoint(t) => t.dim(),
            BuiltTarget::Lgssm { model, .. } => model.param_dim(),
        }
    }

    fn dense(&self) -> Option<Arc<dyn TargetDensity>> {
        match self {
            BuiltTarget::Dense(t) => Some(t.clone()),
            BuiltTarget::ToyJoint(t) => Some(t.clone() as Arc<dyn TargetDensity>),
            BuiltTarget::Lgssm { .. } => None,
        }
    }
}

fn build_target(cfg: &TargetConfig) -> Result<BuiltTarget> {
    Ok(match cfg {
        TargetConfig::ToyScalar { data } => {
            BuiltTarget::Dense(Arc::new(ToyScalarTarget::new(resolve_data(data))?))
        }
        TargetConfig::ToyJoint { data } => {
            BuiltTarget::ToyJoint(Arc::new(ToyJointTarget::new(resolve_data(data))?))
        }
        TargetConfig::Gaussian { dim, rho } => {
            let target = if *rho == 0.0 {
                GaussianTarget::standard(*dim)
            } else {
                GaussianTarget::correlated_2d(*rho)?
            };
            BuiltTarget::Dense(Arc::new(target))
        }
        TargetConfig::LgssmToy { data } => BuiltTarget::Lgssm {
            model: LinearGaussianSsm::toy(),
            data: resolve_data(data),
        },
    })
}

fn gibbs_blocks(target: &BuiltTarget, width: f64) -> Result<Vec<GibbsBlock>> {
    match target {
        // Slice υ, exact conditionals for each latent state.
        BuiltTarget::ToyJoint(t) => {
            let mut blocks = vec![GibbsBlock {
                coords: vec![0],
                update: BlockUpdate::Slice { width },
            }];
            for t_idx in 1..t.dim() {
                blocks.push(GibbsBlock {
                    coords: vec![t_idx],
                    update: BlockUpdate::Exact,
                });
            }
            Ok(blocks)
        }
        BuiltTarget::Dense(t) => Ok((0..t.dim())
            .map(|d| GibbsBlock {
                coords: vec![d],
                update: BlockUpdate::Exact,
            })
            .collect()),
        BuiltTarget::Lgssm { .. } => Err(Error::Config(
            "gibbs is not available for the lgssm_toy target".into(),
        )),
    }
}

/// Build one kernel instance for one chain of the experiment.
fn build_kernel(cfg: &ExperimentConfig, target: &BuiltTarget) -> Result<Box<dyn Kernel>> {
    let dense = |t: &BuiltTarget| -> Result<Arc<dyn TargetDensity>> {
        t.dense().ok_or_else(|| {
            Error::Config(format!(
                "sampler {} requires a tractable target density",
                cfg.sampler.kind_name()
            ))
        })
    };
    Ok(match &cfg.sampler {
        SamplerConfig::AdaptiveMetropolis { target_rate } => {
            Box::new(AdaptiveMetropolis::new(dense(target)?, *target_rate)?)
        }
        SamplerConfig::RefreshV { target_rate } => {
            Box::new(AdaptiveMetropolis::with_refresh_v(dense(target)?, *target_rate)?)
        }
        SamplerConfig::Gibbs { width } => Box::new(GibbsSweep::new(
            dense(target)?,
            gibbs_blocks(target, *width)?,
        )?),
        SamplerConfig::MhGibbs { scale } => Box::new(GibbsSweep::per_coordinate(
            dense(target)?,
            BlockUpdate::RandomWalk { scale: *scale },
        )?),
        SamplerConfig::AuxiliaryGibbs { width } => match target {
            BuiltTarget::ToyJoint(t) => Box::new(AuxiliaryGibbs::new(t.clone(), *width)?),
            _ => {
                return Err(Error::Config(
                    "auxiliary_gibbs requires the factored target kind toy_joint".into(),
                ))
            }
        },
        SamplerConfig::CoordinateSlice { width } => {
            Box::new(CoordinateSlice::new(dense(target)?, *width)?)
        }
        SamplerConfig::GaussianSlice { scale } => {
            Box::new(RecursiveGaussianSlice::isotropic(dense(target)?, *scale)?)
        }
        SamplerConfig::DirectionalSlice => Box::new(DirectionalSlice::new(
            dense(target)?,
            DirectionSource::CrossChain,
        )),
        SamplerConfig::EllipticalSlice => {
            let t = dense(target)?;
            let params = EllipseParams::standard(t.dim());
            Box::new(EllipticalSlice::new(t, params)?)
        }
        SamplerConfig::HamiltonianSlice => {
            let t = dense(target)?;
            let params = EllipseParams::standard(t.dim());
            Box::new(HamiltonianSlice::new(t, params)?)
        }
        SamplerConfig::Hmc { step_size, n_steps } => {
            let t = dense(target)?;
            let mass = SpdMatrix::identity(t.dim());
            Box::new(Hmc::new(t, *step_size, *n_steps, mass)?)
        }
        SamplerConfig::Mala { step_size } => {
            let t = dense(target)?;
            let mass = SpdMatrix::identity(t.dim());
            Box::new(Hmc::mala(t, *step_size, mass)?)
        }
        SamplerConfig::Pmmh {
            particles,
            proposal_sd,
        } => match target {
            BuiltTarget::Lgssm { model, data } => {
                let est = PfLikelihood::new(model.clone(), data.clone(), *particles)?;
                let prior = Arc::new(GaussianTarget::standard(1));
                let proposal = SpdMatrix::diagonal(&[proposal_sd * proposal_sd])?;
                Box::new(Pmmh::new(est, prior, proposal)?)
            }
            _ => return Err(Error::Config("pmmh requires target kind lgssm_toy".into())),
        },
        SamplerConfig::PmHamiltonianSlice {
            particles,
            sigma,
            zeta,
        } => match target {
            BuiltTarget::Lgssm { model, data } => {
                let est = PfLikelihood::new(model.clone(), data.clone(), *particles)?;
                let prior = Arc::new(GaussianTarget::standard(1));
                let params = EllipseParams::standard(1);
                let r_prop = RProposal::ScaledGaussian {
                    sigma: *sigma,
                    zeta: *zeta,
                };
                Box::new(PmHamiltonianSlice::new(est, prior, params, r_prop)?)
            }
            _ => {
                return Err(Error::Config(
                    "pm_hamiltonian_slice requires target kind lgssm_toy".into(),
                ))
            }
        },
    })
}

// ---------------------------------------------------------------------------
// Trace persistence
// ---------------------------------------------------------------------------

/// Write `content` to `path` atomically: write a sibling temp file, then
/// rename over the destination.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Render a trace as headered CSV with round-trip float precision:
/// `iteration,coord_0..coord_{n−1},log_density,accepted,proposals_evaluated`.
pub fn trace_to_csv(trace: &ChainTrace) -> String {
    let dim = trace.dim();
    let mut out = String::with_capacity(trace.len() * (dim + 3) * 20);
    out.push_str("iteration");
    for j in 0..dim {
        out.push_str(&format!(",coord_{j}"));
    }
    out.push_str(",log_density,accepted,proposals_evaluated\n");
    for k in 0..trace.len() {
        out.push_str(&format!("{k}"));
        for &x in trace.row(k) {
            out.push_str(&format!(",{x:?}"));
        }
        out.push_str(&format!(
            ",{:?},{},{}\n",
            trace.log_density()[k],
            u8::from(trace.accepted()[k]),
            trace.proposals_evaluated()[k]
        ));
    }
    out
}

/// Parse a trace CSV produced by [`trace_to_csv`].
pub fn trace_from_csv(text: &str) -> Result<ChainTrace> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("trace file is empty".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let dim = cols
        .iter()
        .filter(|c| c.starts_with("coord_"))
        .count();
    if dim == 0
        || cols.first() != Some(&"iteration")
        || !cols.ends_with(&["log_density", "accepted", "proposals_evaluated"])
    {
        return Err(Error::Config(format!("unrecognized trace header {header:?}")));
    }
    let expected = dim + 4;
    let mut trace = ChainTrace::with_capacity(dim, 128);
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(Error::Config(format!(
                "trace line {}: expected {expected} fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("trace line {}: bad float {s:?}", lineno + 2)))
        };
        let mut position = DVector::zeros(dim);
        for j in 0..dim {
            position[j] = parse(fields[1 + j])?;
        }
        let log_density = parse(fields[dim + 1])?;
        let accepted = match fields[dim + 2] {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Config(format!(
                    "trace line {}: bad accepted flag {other:?}",
                    lineno + 2
                )))
            }
        };
        let proposals: u32 = fields[dim + 3].parse().map_err(|_| {
            Error::Config(format!(
                "trace line {}: bad proposal count {:?}",
                lineno + 2,
                fields[dim + 3]
            ))
        })?;
        let state = ChainState::new(position, log_density);
        let step = KernelStep {
            accepted,
            proposals_evaluated: proposals,
            log_alpha: 0.0,
        };
        trace.push(&state, &step);
    }
    if trace.is_empty() {
        return Err(Error::Config("trace file has a header but no rows".into()));
    }
    Ok(trace)
}

// ---------------------------------------------------------------------------
// Running experiments
// ---------------------------------------------------------------------------

/// Files produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunOutputs {
    /// One trace CSV per chain, in chain order.
    pub trace_paths: Vec<PathBuf>,
    /// Summary CSV over all chains.
    pub summary_csv: PathBuf,
    /// Summary as JSON lines.
    pub summary_json: PathBuf,
}

/// Per-trace diagnostics summary: one CSV row group / JSON line per
/// (trace, coordinate) with mean, variance, τ̂, ESS and acceptance rate.
pub fn summary_documents(traces: &[(String, ChainTrace)]) -> Result<(String, String)> {
    let mut csv =
        String::from("trace,coordinate,mean,var,tau,ess,acceptance_rate\n");
    let mut json = String::new();
    for (label, trace) in traces {
        let report = summarize_trace(trace)?;
        let acc = trace.acceptance_rate();
        for row in &report.rows {
            csv.push_str(&format!(
                "{label},{},{:?},{:?},{:?},{:?},{acc:?}\n",
                row.coordinate, row.mean, row.var, row.tau, row.ess
            ));
            json.push_str(&format!(
                "{{\"trace\":{},\"coordinate\":{},\"mean\":{},\"var\":{},\"tau\":{},\"ess\":{},\"acceptance_rate\":{}}}\n",
                serde_json::to_string(label).expect("string serializes"),
                row.coordinate,
                serde_json::Number::from_f64(row.mean).map_or("null".into(), |n| n.to_string()),
                serde_json::Number::from_f64(row.var).map_or("null".into(), |n| n.to_string()),
                serde_json::Number::from_f64(row.tau).map_or("null".into(), |n| n.to_string()),
                serde_json::Number::from_f64(row.ess).map_or("null".into(), |n| n.to_string()),
                serde_json::Number::from_f64(acc).map_or("null".into(), |n| n.to_string()),
            ));
        }
    }
    Ok((csv, json))
}

/// Execute a validated experiment: run all chains, write per-chain trace
/// CSVs and the diagnostics summary into `config.output_dir`.
///
/// Outputs are a pure function of (config, seed): re-running never
/// changes an emitted byte.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutputs> {
    let target = build_target(&config.target)?;
    let dim = target.dim();
    let initial = DVector::zeros(dim);

    log::info!(
        "running {}: sampler={} chains={} iterations={}",
        config.name,
        config.sampler.kind_name(),
        config.chains,
        config.iterations
    );

    let needs_ensemble = matches!(config.sampler, SamplerConfig::DirectionalSlice);
    let mut traces: Vec<ChainTrace> = if config.chains == 1 && !needs_ensemble {
        let mut kernel = build_kernel(config, &target)?;
        let mut rng = RngStream::new(config.seed, 0);
        vec![run_chain(kernel.as_mut(), &initial, config.iterations, &mut rng)?]
    } else {
        let kernels: Vec<Box<dyn Kernel>> = (0..config.chains)
            .map(|_| build_kernel(config, &target))
            .collect::<Result<_>>()?;
        // Ensemble chains need distinct starting points: cross-chain
        // direction kernels degenerate when two chains coincide. Jitter
        // each start deterministically on a stream disjoint from the
        // per-chain stepping streams used by `run_ensemble`.
        let initials: Vec<DVector<f64>> = (0..config.chains)
            .map(|i| {
                let mut rng = RngStream::new(config.seed, (1 << 32) | i as u64);
                &initial + 0.5 * crate::linalg::standard_normal_vector(dim, &mut rng)
            })
            .collect();
        run_ensemble(kernels, &initials, config.iterations, config.seed)?
    };

    fs::create_dir_all(&config.output_dir)?;
    let mut trace_paths = Vec::with_capacity(traces.len());
    for (i, trace) in traces.iter().enumerate() {
        let path = config
            .output_dir
            .join(format!("{}_chain{}.csv", config.name, i));
        write_atomic(&path, &trace_to_csv(trace))?;
        trace_paths.push(path);
    }

    // Summaries are computed post burn-in; the trace files keep all rows.
    let labeled: Vec<(String, ChainTrace)> = traces
        .iter_mut()
        .enumerate()
        .map(|(i, t)| {
            t.discard_burn_in(config.burn_in);
            (format!("chain{i}"), std::mem::replace(t, ChainTrace::with_capacity(dim, 0)))
        })
        .collect();
    let (csv, json) = summary_documents(&labeled)?;
    let summary_csv = config
        .output_dir
        .join(format!("{}_summary.csv", config.name));
    let summary_json = config
        .output_dir
        .join(format!("{}_summary.json", config.name));
    write_atomic(&summary_csv, &csv)?;
    write_atomic(&summary_json, &json)?;

    Ok(RunOutputs {
        trace_paths,
        summary_csv,
        summary_json,
    })
}

/// Summarize existing trace files into `out_dir/summary.{csv,json}`.
pub fn summarize_traces(paths: &[PathBuf], out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if paths.is_empty() {
        return Err(Error::Config("summarize: no trace files given".into()));
    }
    let mut labeled = Vec::with_capacity(paths.len());
    for path in paths {
        let text = fs::read_to_string(path)?;
        // Malformed input traces are runtime failures (exit 3), not
        // experiment-config errors.
        let trace = trace_from_csv(&text)
            .map_err(|e| Error::Contract(format!("{}: {e}", path.display())))?;
        let label = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("trace")
            .to_string();
        labeled.push((label, trace));
    }
    let (csv, json) = summary_documents(&labeled)?;
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("summary.csv");
    let json_path = out_dir.join("summary.json");
    write_atomic(&csv_path, &csv)?;
    write_atomic(&json_path, &json)?;
    Ok((csv_path, json_path))
}

/// Tune the particle count for a pseudo-marginal experiment config at
/// `θ_ref = 0`, using the default variance band.
pub fn tune_particles_for_config(config: &ExperimentConfig, replicates: usize) -> Result<usize> {
    match build_target(&config.target)? {
        BuiltTarget::Lgssm { model, data } => {
            let mut rng = RngStream::new(config.seed, 0);
            let theta_ref = DVector::zeros(model.param_dim());
            crate::pseudo_marginal::tune_particle_count(
                move |n| PfLikelihood::new(model.clone(), data.clone(), n),
                &theta_ref,
                replicates,
                crate::pseudo_marginal::DEFAULT_VARIANCE_BAND,
                &mut rng,
            )
        }
        _ => Err(Error::Config(
            "tune-particles requires target kind lgssm_toy".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config(dir: &Path) -> ExperimentConfig {
        let text = format!(
            "seed = 11\niterations = 500\nburn_in = 100\noutput_dir = {}\n\n\
             [target]\nkind = toy_scalar\n\n[sampler]\nkind = adaptive_metropolis\n",
            dir.display()
        );
        ExperimentConfig::from_text(&text, "toy").unwrap()
    }

    #[test]
    fn run_writes_traces_and_summary() {
        let dir = std::env::temp_dir().join("gmh_experiment_test_run");
        let _ = fs::remove_dir_all(&dir);
        let cfg = toy_config(&dir);
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.trace_paths.len(), 1);
        let text = fs::read_to_string(&out.trace_paths[0]).unwrap();
        assert!(text.starts_with("iteration,coord_0,log_density,accepted,proposals_evaluated"));
        assert_eq!(text.lines().count(), 501);
        let summary = fs::read_to_string(&out.summary_csv).unwrap();
        assert!(summary.starts_with("trace,coordinate,mean,var,tau,ess,acceptance_rate"));
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn rerun_is_byte_identical() {
        let dir = std::env::temp_dir().join("gmh_experiment_test_det");
        let _ = fs::remove_dir_all(&dir);
        let cfg = toy_config(&dir);
        let out1 = run_experiment(&cfg).unwrap();
        let bytes1 = fs::read(&out1.trace_paths[0]).unwrap();
        let out2 = run_experiment(&cfg).unwrap();
        let bytes2 = fs::read(&out2.trace_paths[0]).unwrap();
        assert_eq!(bytes1, bytes2);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn trace_csv_round_trips() {
        let dir = std::env::temp_dir().join("gmh_experiment_test_rt");
        let _ = fs::remove_dir_all(&dir);
        let cfg = toy_config(&dir);
        let out = run_experiment(&cfg).unwrap();
        let text = fs::read_to_string(&out.trace_paths[0]).unwrap();
        let trace = trace_from_csv(&text).unwrap();
        assert_eq!(trace.len(), 500);
        assert_eq!(trace.dim(), 1);
        assert_eq!(trace_to_csv(&trace), text);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn malformed_trace_rejected() {
        assert!(trace_from_csv("").is_err());
        assert!(trace_from_csv("iteration,coord_0,log_density,accepted,proposals_evaluated\n").is_err());
        assert!(trace_from_csv("nonsense header\n1,2,3\n").is_err());
        assert!(trace_from_csv(
            "iteration,coord_0,log_density,accepted,proposals_evaluated\n0,0.5,-1.0,yes,1\n"
        )
        .is_err());
    }

    #[test]
    fn ensemble_directional_slice_runs() {
        let dir = std::env::temp_dir().join("gmh_experiment_test_ens");
        let _ = fs::remove_dir_all(&dir);
        let text = format!(
            "seed = 12\niterations = 300\nchains = 4\noutput_dir = {}\n\n\
             [target]\nkind = gaussian\ndim = 2\nrho = 0.5\n\n[sampler]\nkind = directional_slice\n",
            dir.display()
        );
        let cfg = ExperimentConfig::from_text(&text, "ens").unwrap();
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.trace_paths.len(), 4);
        let _ = fs::remove_dir_all(&dir);
    }
}
