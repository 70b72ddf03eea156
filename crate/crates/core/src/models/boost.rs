//! Stage-wise boosting of shallow continued-fraction networks.
//!
//! Output is `F_0 + eta * sum_j f_j(x)` over the fitted stages, where `F_0`
//! is the training-target mean and each `f_j` was trained on the residuals
//! left by the stages before it.

use crate::autodiff::Graph;
use crate::datagen::Samples;
use crate::error::{Error, Result};
use crate::optim::{self, TrainConfig, TrainHistory};
use crate::scalar::Scalar;

use super::cfnn::CfnnLayout;
use super::{Layout, Model, ModelConfig, ModelState};

pub(crate) fn forward<T: Scalar, G: Graph<T>>(
    g: &mut G,
    xs: &[G::Var],
    stages: &[CfnnLayout],
    state: &ModelState,
    config: &ModelConfig,
) -> Result<G::Var> {
    let (f0, fitted) = match *state {
        ModelState::Boost { f0, stages } => (f0, stages),
        _ => (0.0, stages.len()),
    };
    let mut y = g.constant(T::of(f0))?;
    if fitted == 0 {
        return Ok(y);
    }
    let eps = T::of(config.eps_den);
    let mut sum = stages[0].forward(g, xs, eps)?;
    for s in &stages[1..fitted.min(stages.len())] {
        let f = s.forward(g, xs, eps)?;
        sum = g.add(sum, f)?;
    }
    let eta = g.constant(T::of(config.shrinkage))?;
    let scaled = g.mul(eta, sum)?;
    y = g.add(y, scaled)?;
    Ok(y)
}

/// Per-stage record of a boosting run.
#[derive(Clone, Debug)]
pub struct StageReport {
    pub history: TrainHistory,
    /// Ensemble train MSE before and after this stage was considered.
    pub mse_before: f64,
    pub mse_after: f64,
    pub accepted: bool,
}

impl<T: Scalar> Model<T> {
    /// Number of fitted stages and the constant initial predictor.
    pub fn boost_stages(&self) -> Option<(usize, f64)> {
        match *self.state() {
            ModelState::Boost { f0, stages } => Some((stages, f0)),
            _ => None,
        }
    }

    /// Resets the ensemble to the constant predictor `mean(train.y)`.
    pub fn boost_reset(&mut self, train: &Samples<T>) -> Result<()> {
        let f0 = train.y_mean().f64();
        match self.state_mut() {
            ModelState::Boost { f0: s_f0, stages } => {
                *s_f0 = f0;
                *stages = 0;
                Ok(())
            }
            _ => Err(Error::config("boost_reset requires a boost model")),
        }
    }

    /// Trains a fresh shallow CFNN on the current residuals and appends it
    /// if it strictly lowers the ensemble's train MSE. Returns `None` when
    /// every stage slot is already used.
    pub fn boost_fit_stage(
        &mut self,
        train: &Samples<T>,
        val: Option<&Samples<T>>,
        cfg: &TrainConfig,
    ) -> Result<Option<StageReport>> {
        let Some((fitted, _)) = self.boost_stages() else {
            return Err(Error::config("boost_fit_stage requires a boost model"));
        };
        if fitted >= self.config().units {
            return Ok(None);
        }
        let residual = |m: &Model<T>, data: &Samples<T>| -> Result<Samples<T>> {
            let preds = m.predict_all(data)?;
            let r = data.y.iter().zip(&preds).map(|(&y, &p)| y - p).collect();
            Ok(data.with_targets(r))
        };
        let r_train = residual(self, train)?;
        let r_val = val.map(|v| residual(self, v)).transpose()?;
        let mse_before = mean_sq(&r_train.y);

        let stage_seed = cfg.seed.wrapping_add(fitted as u64);
        let mut stage = Model::init(self.config().stage_config(), stage_seed, Some(&r_train))?;
        let eta = T::of(self.config().shrinkage);
        let stage_cfg = TrainConfig {
            seed: stage_seed,
            ..cfg.clone()
        };
        // the stage minimizes the ensemble loss of F + eta * f, not |r - f|^2
        let history =
            match optim::train_scaled(&mut stage, &r_train, r_val.as_ref(), &stage_cfg, eta) {
                Ok(h) => h,
                Err(Error::DivergenceAbort { history, .. }) => *history,
                Err(e) => return Err(e),
            };

        let after: Option<Vec<T>> = (0..r_train.len())
            .map(|i| {
                stage
                    .predict(r_train.row(i))
                    .ok()
                    .map(|f| r_train.y[i] - eta * f)
            })
            .collect();
        let mse_after = after.as_deref().map_or(f64::INFINITY, mean_sq);
        let accepted = mse_after < mse_before;
        if accepted {
            let Layout::Boost(layouts) = self.layout() else {
                unreachable!("boost models carry a boost layout")
            };
            let slot = &layouts[fitted];
            let range = slot.start..slot.start + slot.len;
            self.params_mut().values_mut()[range].copy_from_slice(stage.params().values());
            if let ModelState::Boost { stages, .. } = self.state_mut() {
                *stages += 1;
            }
        }
        Ok(Some(StageReport {
            history,
            mse_before,
            mse_after,
            accepted,
        }))
    }
}

fn mean_sq<T: Scalar>(r: &[T]) -> f64 {
    r.iter().map(|&v| v.f64() * v.f64()).sum::<f64>() / r.len() as f64
}

/// Fits up to `units` stages, stopping at the first rejected stage.
/// `cfg.epochs` is the per-stage budget.
pub fn fit_boost<T: Scalar>(
    model: &mut Model<T>,
    train: &Samples<T>,
    val: Option<&Samples<T>>,
    cfg: &TrainConfig,
) -> Result<Vec<StageReport>> {
    model.boost_reset(train)?;
    let mut reports = Vec::new();
    while let Some(r) = model.boost_fit_stage(train, val, cfg)? {
        let accepted = r.accepted;
        reports.push(r);
        if !accepted {
            break;
        }
    }
    Ok(reports)
}
