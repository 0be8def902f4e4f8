use std::path::Path;

use af_relay::sim::{self, DesignSpec, PointStatus};
use af_relay::verify::{self, CorpusOptions};
use af_relay::{channel, Error, Execution};
use serde::Serialize;

use crate::{Cli, CliError, RunConfig};

/// Random stream id of the channel draw used by `design`.
const DESIGN_STREAM: u64 = 0xde5;

pub fn configure_threads(jobs: Option<u32>) -> Result<Execution, CliError> {
    match jobs {
        None => Ok(Execution::Parallel),
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(n as usize)
                .build_global()
                .map_err(|e| CliError::Config(format!("--jobs {n}: {e}")))?;
            #[cfg(not(feature = "parallel"))]
            eprintln!("note: built without parallel support, --jobs {n} runs on one thread");
            Ok(Execution::Parallel)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::Config("--config <PATH> is required".into()))?;
    let mut cfg = RunConfig::load(path).map_err(CliError::Config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
pub struct DesignReport {
    pub seed: u64,
    pub snr_db: f64,
    pub antennas: Vec<usize>,
    pub streams: usize,
    pub sigma_e_sq: f64,
    /// With zero error variance the robust design is the perfect-CSI design.
    pub perfect_csi_equivalent: bool,
    pub power_budget: f64,
    pub designs: Vec<DesignEntryReport>,
}

#[derive(Serialize)]
pub struct DesignEntryReport {
    pub kind: String,
    pub objective: String,
    /// `h_{k,i}` per hop.
    pub gains: Vec<Vec<f64>>,
    /// `f_{k,i}²` per hop.
    pub allocation: Vec<Vec<f64>>,
    pub xi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub objective_value: f64,
    pub allocation_converged: Option<bool>,
}

pub fn design_report(cfg: &RunConfig) -> Result<DesignReport, CliError> {
    let section = cfg.design.as_ref().ok_or_else(|| CliError::Config("missing [design] section".into()))?;
    let template = cfg.template().map_err(CliError::Config)?;
    let models = template.error_models().map_err(|e| CliError::Config(e.to_string()))?;
    let mut rng = channel::stream_rng(cfg.seed, &[DESIGN_STREAM]);
    let chain = template
        .draw_chain(&models, section.snr_db, &mut rng)
        .map_err(|e| CliError::Run(e.to_string()))?;

    let designs = section
        .objectives
        .iter()
        .map(|&obj| {
            let spec = DesignSpec::new(section.kind, obj);
            let sol = spec.design(&chain).map_err(|e| match e {
                Error::StructureUnsupported { .. } => CliError::Run(format!("cannot design {obj}: {e}")),
                other => CliError::Run(format!("design {obj} failed: {other}")),
            })?;
            Ok(DesignEntryReport {
                kind: section.kind.name().into(),
                objective: obj.name().into(),
                gains: sol.gains.clone(),
                allocation: sol.lambda_f.iter().map(|l| l.iter().map(|f| f * f).collect()).collect(),
                xi: sol.xi.clone(),
                gamma: sol.theta_spectrum.clone(),
                objective_value: sol.objective_value(&chain).map_err(|e| CliError::Run(e.to_string()))?,
                allocation_converged: sol.allocation.as_ref().map(|a| a.converged),
            })
        })
        .collect::<Result<_, CliError>>()?;

    Ok(DesignReport {
        seed: cfg.seed,
        snr_db: section.snr_db,
        antennas: template.antennas.clone(),
        streams: template.n_streams,
        sigma_e_sq: template.sigma_e_sq,
        perfect_csi_equivalent: template.sigma_e_sq == 0.0,
        power_budget: chain.hop(0).power_budget,
        designs,
    })
}

pub fn design(cli: &Cli, _exec: Execution) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let report = design_report(&cfg)?;
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Run(e.to_string()))?;
    text.push('\n');
    emit(cli.out.as_deref(), &text)
}

pub fn sweep(cli: &Cli, exec: Execution) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let sim_cfg = cfg.sim_config().map_err(CliError::Config)?;
    let result = sim::run_sweep(&sim_cfg, exec).map_err(|e| CliError::Config(e.to_string()))?;
    let out = cli.out.as_deref().or(cfg.sweep.as_ref().and_then(|s| s.output.as_deref()));
    emit(out, &result.to_csv())?;

    let failed: Vec<_> = result.points.iter().filter(|p| !p.is_ok()).collect();
    for p in &failed {
        if let PointStatus::Failed(msg) = &p.status {
            eprintln!(
                "warning: {} {} at {} dB failed: {msg}",
                p.design.kind.name(),
                p.design.objective,
                p.snr_db
            );
        }
    }
    if failed.len() == result.points.len() {
        return Err(CliError::Run("every sweep point failed".into()));
    }
    Ok(())
}

pub fn verify(cli: &Cli, exec: Execution) -> Result<(), CliError> {
    let mut opts = CorpusOptions {
        exec,
        ..CorpusOptions::default()
    };
    if cli.config.is_some() {
        opts.seed = load_config(cli)?.seed;
    } else if let Some(seed) = cli.seed {
        opts.seed = seed;
    }
    let report = verify::run_corpus(&opts);
    emit(cli.out.as_deref(), &format!("{report}\n"))?;
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("{} of {} checks", report.failures(), report.checks.len())))
    }
}
