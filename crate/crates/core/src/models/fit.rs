//! One entry point that trains any family with its own procedure.

use serde::{Deserialize, Serialize};

use super::boost::fit_boost;
use super::moe::{fit_moe, GrowOutcome, GrowthConfig};
use super::{Family, Model};
use crate::datagen::Samples;
use crate::error::{Error, Result};
use crate::optim::{self, TrainConfig, TrainHistory};
use crate::scalar::Scalar;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub growth: GrowthConfig,
    /// Per-stage epoch budget for boosting; `cfg.epochs` when absent.
    pub stage_epochs: Option<usize>,
}

/// Histories in training order plus family-specific outcomes.
#[derive(Clone, Debug)]
pub struct FitReport {
    pub histories: Vec<TrainHistory>,
    pub stages_accepted: Vec<bool>,
    pub growth: Vec<GrowOutcome>,
    /// Set when a plain fit hit the divergence guard; the history up to the
    /// abort is kept in `histories`.
    pub diverged: bool,
}

impl FitReport {
    pub fn grad_norms(&self) -> Vec<f64> {
        self.histories.iter().flat_map(|h| h.grad_norms()).collect()
    }

    pub fn anomalies(&self) -> usize {
        self.histories.iter().map(|h| h.anomalies).sum()
    }
}

/// Trains `model` in place. MoE requires a validation split; the other
/// families use it for early stopping when given.
pub fn fit<T: Scalar>(
    model: &mut Model<T>,
    train: &Samples<T>,
    val: Option<&Samples<T>>,
    cfg: &TrainConfig,
    options: &FitOptions,
) -> Result<FitReport> {
    let mut report = FitReport {
        histories: Vec::new(),
        stages_accepted: Vec::new(),
        growth: Vec::new(),
        diverged: false,
    };
    match model.family() {
        Family::Cfnn | Family::Hybrid | Family::Mlp => match optim::train(model, train, val, cfg) {
            Ok(h) => report.histories.push(h),
            Err(Error::DivergenceAbort { history, .. }) => {
                report.histories.push(*history);
                report.diverged = true;
            }
            Err(e) => return Err(e),
        },
        Family::Boost => {
            let stage_cfg = TrainConfig {
                epochs: options.stage_epochs.unwrap_or(cfg.epochs),
                ..cfg.clone()
            };
            for s in fit_boost(model, train, val, &stage_cfg)? {
                report.stages_accepted.push(s.accepted);
                report.histories.push(s.history);
            }
        }
        Family::Moe => {
            let val = val.ok_or_else(|| Error::config("moe training needs a validation split"))?;
            let r = fit_moe(model, train, val, cfg, &options.growth)?;
            report.histories = r.histories;
            report.growth = r.outcomes;
        }
    }
    Ok(report)
}
