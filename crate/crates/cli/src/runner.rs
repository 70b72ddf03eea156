//! Executes a config and lays out its artifacts:
//!
//! ```text
//! <out>/config.json     effective config
//! <out>/metrics.csv     one row per cell
//! <out>/telemetry.csv   per-step gradient norms of every cell
//! <out>/models/*.cfnn   trained models
//! <out>/datasets/*.json provenance sidecar of every dataset the cells used
//! <out>/plots/*.csv     plot-ready families, see `plots`
//! <out>/summary.json    protocol tables
//! <out>/error.json      only when the run failed
//! ```
//!
//! Cells run on a rayon pool of `CFNN_THREADS` threads and are collected in
//! plan order, so the files do not depend on scheduling.

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use cfnn::Error;

use crate::config::ExperimentConfig;
use crate::persist::save_model;
use crate::plots::emit_plot_data;
use crate::protocols::{build_dataset, plan, run_cell, Cell, CellOutcome};
use crate::summary::{summarize, CellRecord, Summary};

pub const THREADS_ENV: &str = "CFNN_THREADS";

#[derive(Debug)]
pub struct RunError {
    /// Cell that failed, if the failure belongs to one.
    pub cell: Option<String>,
    pub error: Error,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.cell {
            Some(c) => write!(f, "cell {c}: {}", self.error),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for RunError {
    fn from(error: Error) -> Self {
        RunError { cell: None, error }
    }
}

impl RunError {
    /// Machine-readable form written to `error.json` and stderr.
    pub fn record(&self) -> serde_json::Value {
        json!({
            "status": "error",
            "kind": error_kind(&self.error),
            "cell": self.cell,
            "message": self.error.to_string(),
        })
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::NonFiniteValue { .. } => "non_finite_value",
        Error::UnknownOperand { .. } => "unknown_operand",
        Error::Arity { .. } => "arity",
        Error::NonFiniteGradient { .. } => "non_finite_gradient",
        Error::InvalidConfig(_) => "invalid_config",
        Error::Domain { .. } => "domain",
        Error::Excluded { .. } => "excluded",
        Error::Sample { source, .. } => error_kind(source),
        Error::ConvergenceFailure(_) => "convergence_failure",
        Error::InfeasibleRatio { .. } => "infeasible_ratio",
        Error::Parse { .. } => "parse",
        Error::NonNumericCell { .. } => "non_numeric_cell",
        Error::DegenerateTarget => "degenerate_target",
        Error::UndefinedLead => "undefined_lead",
        Error::BadLength(_) => "bad_length",
        Error::TooManyFeatures { .. } => "too_many_features",
        Error::DivergenceAbort { .. } => "divergence_abort",
        Error::Shape(_) => "shape",
        Error::Format(_) => "format",
        Error::Checksum(_) => "checksum",
        Error::Io { .. } => "io",
        Error::Json(_) => "json",
    }
}

pub struct RunOutput {
    pub dir: PathBuf,
    pub summary: Summary,
    pub outcomes: Vec<CellOutcome>,
}

/// Pool size from `CFNN_THREADS`, else the machine's parallelism.
pub fn threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Validates and enumerates the cells without training anything.
pub fn dry_run(cfg: &ExperimentConfig) -> Result<Vec<Cell>, RunError> {
    Ok(plan(cfg)?)
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let _ = std::fs::remove_file(dir.join("error.json"));
    let result = plan(cfg)
        .map_err(RunError::from)
        .and_then(|cells| execute(cfg, &cells, &dir));
    if let Err(e) = &result {
        let path = dir.join("error.json");
        if let Err(w) = write_json(&path, &e.record()) {
            log::error!("could not write {}: {w}", path.display());
        }
    }
    result.map(|(summary, outcomes)| RunOutput {
        dir,
        summary,
        outcomes,
    })
}

fn execute(
    cfg: &ExperimentConfig,
    cells: &[Cell],
    dir: &Path,
) -> Result<(Summary, Vec<CellOutcome>), RunError> {
    write_json(
        &dir.join("config.json"),
        &serde_json::to_value(cfg).map_err(Error::from)?,
    )?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads())
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    log::info!(
        "{}: {} cells on {} threads",
        cfg.protocol.name(),
        cells.len(),
        pool.current_num_threads()
    );
    let results: Vec<Result<CellOutcome, RunError>> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| {
                let r = run_cell(cfg, c);
                log::info!("{} done", c.id);
                r.map_err(|error| RunError {
                    cell: Some(c.id.clone()),
                    error,
                })
            })
            .collect()
    });
    let outcomes = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(cfg, &outcomes)?;

    write_metrics(&dir.join("metrics.csv"), &summary.cells)?;
    write_telemetry(&dir.join("telemetry.csv"), &outcomes)?;
    if cfg.params.save_models {
        let models = dir.join("models");
        std::fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
        for o in &outcomes {
            save_model(&o.model, &models.join(format!("{}.cfnn", o.cell.id)))?;
        }
    }
    write_provenance(cfg, cells, &dir.join("datasets"))?;
    emit_plot_data(&dir.join("plots"), &outcomes, &summary)?;
    write_json(
        &dir.join("summary.json"),
        &serde_json::to_value(&summary).map_err(Error::from)?,
    )?;
    Ok((summary, outcomes))
}

fn write_provenance(cfg: &ExperimentConfig, cells: &[Cell], dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut seen = std::collections::BTreeSet::new();
    for c in cells {
        let name = match c.target {
            Some(t) => format!("{t}_s{}", c.seed),
            None => format!("data_s{}", c.seed),
        };
        if seen.insert(name.clone()) {
            build_dataset(&cfg.dataset, c.target, c.seed)?
                .write_provenance(&dir.join(format!("{name}.json")))?;
        }
    }
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

fn write_metrics(path: &Path, cells: &[CellRecord]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "cell",
        "model",
        "group",
        "target",
        "scale",
        "seed",
        "family",
        "param_count",
        "effective_params",
        "epochs",
        "mse",
        "rmse",
        "mae",
        "r2",
        "grad_std",
        "grad_mean",
        "grad_max",
        "anomalies",
        "diverged",
    ])
    .map_err(|e| csv_err(path, e))?;
    for c in cells {
        w.write_record([
            c.id.clone(),
            c.model.clone(),
            c.group.clone().unwrap_or_default(),
            c.target.map(|t| t.to_string()).unwrap_or_default(),
            c.scale.map(|s| s.to_string()).unwrap_or_default(),
            c.seed.to_string(),
            c.family.to_string(),
            c.param_count.to_string(),
            c.effective_params.to_string(),
            c.epochs.to_string(),
            c.mse.to_string(),
            c.rmse.to_string(),
            c.mae.to_string(),
            c.r2.to_string(),
            c.grad.std.to_string(),
            c.grad.mean.to_string(),
            c.grad.max.to_string(),
            c.grad.anomalies.to_string(),
            u8::from(c.diverged).to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_telemetry(path: &Path, outcomes: &[CellOutcome]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["cell", "phase", "step", "grad_norm", "loss", "anomaly"])
        .map_err(|e| csv_err(path, e))?;
    for o in outcomes {
        for (phase, h) in o.histories.iter().enumerate() {
            for (i, s) in h.steps.iter().enumerate() {
                w.write_record([
                    o.cell.id.clone(),
                    phase.to_string(),
                    i.to_string(),
                    s.grad_norm.to_string(),
                    s.loss.to_string(),
                    u8::from(s.anomalous).to_string(),
                ])
                .map_err(|e| csv_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
