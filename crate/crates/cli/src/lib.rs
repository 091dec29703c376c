//! Config-driven runner for the `nvmech` simulations.
//!
//! A config names one experiment kind plus its parameters. Running it writes
//! `<stem>.csv` with the numeric result and `<stem>.json` with the resolved
//! config, the constants in use, derived quantities and warnings.

pub mod config;
pub mod output;
mod run;

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub use config::{ExperimentConfig, ExperimentKind};
pub use output::{emit_results, RunOutput, Table, WrittenFiles};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<nvmech::Error> for CliError {
    fn from(e: nvmech::Error) -> Self {
        match e {
            nvmech::Error::InvalidParameter { .. } => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Runs the configured experiment. Relative input paths resolve against
/// `base_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path) -> Result<RunOutput, CliError> {
    use ExperimentKind::*;
    let consts = cfg.physical_constants()?;
    let missing = || CliError::Config(format!("missing [{}] section", cfg.kind));
    match cfg.kind {
        OdmsrScan => run::odmsr(cfg.odmsr_scan.as_ref().ok_or_else(missing)?, cfg.seed, &consts),
        RabiStyle => run::rabi(cfg.rabi_style.as_ref().ok_or_else(missing)?, cfg.seed, &consts),
        DepthScan => run::depth_scan(cfg.depth_scan.as_ref().ok_or_else(missing)?),
        StrayFieldControl => run::stray_field(cfg.stray_field_control.as_ref().ok_or_else(missing)?, cfg.seed, &consts),
        QCircle => run::q_circle(cfg.q_circle.as_ref().ok_or_else(missing)?, base_dir, &consts),
        ResonanceComb => run::comb(cfg.resonance_comb.as_ref().ok_or_else(missing)?, base_dir, &consts),
        CalibrationReport => run::calibration(cfg.calibration_report.as_ref().ok_or_else(missing)?, cfg.seed, &consts),
        PerturbationReport => run::perturbation(cfg.perturbation_report.as_ref().ok_or_else(missing)?, &consts),
    }
}

/// Sidecar contents: no timestamps or host details, so identical runs give
/// identical files.
pub fn metadata(cfg: &ExperimentConfig, out: &RunOutput) -> Result<Value, CliError> {
    let consts = cfg.physical_constants()?;
    Ok(json!({
        "program": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "kind": cfg.kind.name(),
        "config": cfg,
        "constants": {
            "zero_field_splitting_hz": consts.zero_field_splitting,
            "gyromagnetic_ratio_hz_per_g": consts.gyromagnetic_ratio,
            "stress_coupling_hz_per_pa": consts.stress_coupling,
            "electric_coupling_hz_cm_per_v": consts.electric_coupling,
            "hyperfine_hz": consts.hyperfine,
        },
        "derived": out.derived,
        "rows": out.table.len(),
        "columns": out.table.columns,
        "warnings": out.warnings,
    }))
}

/// Loads `config_path`, applies the seed override, runs and writes outputs to
/// `out_dir` (default: the current directory).
pub fn run_config_file(
    config_path: &Path,
    out_dir: Option<&Path>,
    seed: Option<u64>,
) -> Result<(WrittenFiles, RunOutput), CliError> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    // Echo input paths resolved so the sidecar re-runs from anywhere.
    cfg.absolutize_paths(&base);
    let out = run_experiment(&cfg, &base)?;
    let meta = metadata(&cfg, &out)?;
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let files = emit_results(&out, &meta, &dir, cfg.output_stem())?;
    Ok((files, out))
}
