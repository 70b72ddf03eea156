//! Plot-ready CSV files, one per figure family.
//!
//! | file                     | header |
//! |--------------------------|--------|
//! | `loss_curves.csv`        | `epoch,model,seed,train_loss,val_loss` |
//! | `grad_std.csv`           | `model,target,seed,grad_std,grad_mean,grad_max,anomalies` |
//! | `depth_scaling.csv`      | `model,target,depth,seed,param_count,epochs,test_rmse` |
//! | `band_errors.csv`        | `model,band,mean_relative_psd` |
//! | `cumulative_spectrum.csv`| `model,bin,frequency,relative_psd,cumulative,floored` |
//! | `pareto.csv`             | `target,model,param_count,test_mse,seed` |
//! | `importance.csv`         | `model,seed,feature,role,importance,std,rank` |
//!
//! Multi-epoch ensembles (boosting stages, expert growth) continue the
//! epoch count across training phases.

use std::path::Path;

use cfnn::metrics::ranks;
use cfnn::{Error, Result};

use crate::protocols::CellOutcome;
use crate::summary::Summary;

pub const LOSS_CURVES: &str = "loss_curves.csv";
pub const GRAD_STD: &str = "grad_std.csv";
pub const DEPTH_SCALING: &str = "depth_scaling.csv";
pub const BAND_ERRORS: &str = "band_errors.csv";
pub const CUMULATIVE_SPECTRUM: &str = "cumulative_spectrum.csv";
pub const PARETO: &str = "pareto.csv";
pub const IMPORTANCE: &str = "importance.csv";

struct Sheet {
    path: std::path::PathBuf,
    w: csv::Writer<std::fs::File>,
}

impl Sheet {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let w = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
        let mut s = Sheet { path, w };
        s.row(header.iter().map(|h| h.to_string()))?;
        Ok(s)
    }

    fn row(&mut self, fields: impl IntoIterator<Item = String>) -> Result<()> {
        let fields: Vec<String> = fields.into_iter().collect();
        self.w.write_record(&fields).map_err(|e| io(&self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Writes every family the run has data for and returns the file names.
pub fn emit_plot_data(
    dir: &Path,
    outcomes: &[CellOutcome],
    summary: &Summary,
) -> Result<Vec<&'static str>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let many_groups = outcomes
        .iter()
        .map(|o| &o.cell.group)
        .collect::<std::collections::HashSet<_>>()
        .len()
        > 1;
    let many_targets = outcomes
        .iter()
        .map(|o| o.cell.target)
        .collect::<std::collections::HashSet<_>>()
        .len()
        > 1;
    let label = |o: &CellOutcome| {
        let mut l = o.cell.label(many_groups, many_targets);
        if let Some(s) = o.cell.scale {
            l = format!("{l}/L{s}");
        }
        l
    };
    let mut written = vec![LOSS_CURVES, GRAD_STD];

    let mut s = Sheet::create(
        dir,
        LOSS_CURVES,
        &["epoch", "model", "seed", "train_loss", "val_loss"],
    )?;
    for o in outcomes {
        let mut epoch = 0;
        for h in &o.histories {
            for (t, v) in h.train_loss.iter().zip(&h.val_loss) {
                s.row([
                    epoch.to_string(),
                    label(o),
                    o.cell.seed.to_string(),
                    t.to_string(),
                    v.to_string(),
                ])?;
                epoch += 1;
            }
        }
    }
    s.finish()?;

    let mut s = Sheet::create(
        dir,
        GRAD_STD,
        &[
            "model",
            "target",
            "seed",
            "grad_std",
            "grad_mean",
            "grad_max",
            "anomalies",
        ],
    )?;
    for o in outcomes {
        let g = o.grad;
        s.row([
            label(o),
            o.cell.target.map(|t| t.to_string()).unwrap_or_default(),
            o.cell.seed.to_string(),
            g.std.to_string(),
            g.mean.to_string(),
            g.max.to_string(),
            g.anomalies.to_string(),
        ])?;
    }
    s.finish()?;

    if !summary.depth_scaling.is_empty() {
        let mut s = Sheet::create(
            dir,
            DEPTH_SCALING,
            &[
                "model",
                "target",
                "depth",
                "seed",
                "param_count",
                "epochs",
                "test_rmse",
            ],
        )?;
        for c in &summary.cells {
            s.row([
                c.model.clone(),
                c.target.map(|t| t.to_string()).unwrap_or_default(),
                c.scale.unwrap_or_default().to_string(),
                c.seed.to_string(),
                c.param_count.to_string(),
                c.epochs.to_string(),
                c.rmse.to_string(),
            ])?;
        }
        s.finish()?;
        written.push(DEPTH_SCALING);
    }

    if !summary.spectral.is_empty() {
        let many = summary
            .spectral
            .iter()
            .map(|r| r.target)
            .collect::<std::collections::HashSet<_>>()
            .len()
            > 1;
        let name = |r: &crate::summary::SpectralRow| {
            if many {
                format!("{}@{}", r.model, r.target)
            } else {
                r.model.clone()
            }
        };
        let mut b = Sheet::create(dir, BAND_ERRORS, &["model", "band", "mean_relative_psd"])?;
        let mut c = Sheet::create(
            dir,
            CUMULATIVE_SPECTRUM,
            &[
                "model",
                "bin",
                "frequency",
                "relative_psd",
                "cumulative",
                "floored",
            ],
        )?;
        for r in &summary.spectral {
            b.row([name(r), "low".into(), r.low_band_mean.to_string()])?;
            b.row([name(r), "high".into(), r.high_band_mean.to_string()])?;
            let rep = &r.report;
            for k in 0..rep.relative_psd.len() {
                c.row([
                    name(r),
                    k.to_string(),
                    rep.frequencies[k].to_string(),
                    rep.relative_psd[k].to_string(),
                    rep.cumulative[k].to_string(),
                    u8::from(rep.floored[k]).to_string(),
                ])?;
            }
        }
        b.finish()?;
        c.finish()?;
        written.extend([BAND_ERRORS, CUMULATIVE_SPECTRUM]);
    }

    if !summary.pareto.is_empty() {
        let mut s = Sheet::create(
            dir,
            PARETO,
            &["target", "model", "param_count", "test_mse", "seed"],
        )?;
        for r in &summary.pareto {
            for p in &r.frontier {
                s.row([
                    r.target.to_string(),
                    p.model.clone(),
                    p.param_count.to_string(),
                    p.test_mse.to_string(),
                    p.seed.to_string(),
                ])?;
            }
        }
        s.finish()?;
        written.push(PARETO);
    }

    if outcomes.iter().any(|o| o.attribution.is_some()) {
        let mut s = Sheet::create(
            dir,
            IMPORTANCE,
            &[
                "model",
                "seed",
                "feature",
                "role",
                "importance",
                "std",
                "rank",
            ],
        )?;
        for o in outcomes {
            let Some(a) = &o.attribution else { continue };
            let r = ranks(&a.estimate.mean);
            for (j, feature) in a.features.iter().enumerate() {
                let role = serde_json::to_value(a.roles[j])?;
                s.row([
                    label(o),
                    o.cell.seed.to_string(),
                    feature.clone(),
                    role.as_str().unwrap_or_default().to_owned(),
                    a.estimate.mean[j].to_string(),
                    a.estimate.std[j].to_string(),
                    r[j].to_string(),
                ])?;
            }
        }
        s.finish()?;
        written.push(IMPORTANCE);
    }
    Ok(written)
}
