//! Adam training loop with global-norm clipping, early stopping and
//! per-step gradient telemetry.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::datagen::Samples;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::scalar::Scalar;

/// Train loss above this for [`DIVERGENCE_EPOCHS`] consecutive epochs aborts.
pub const DIVERGENCE_LOSS: f64 = 1e10;
pub const DIVERGENCE_EPOCHS: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Mse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Zero means full batch.
    pub batch_size: usize,
    pub clip_threshold: f64,
    /// Epochs without validation improvement before stopping; zero disables.
    pub patience: usize,
    pub seed: u64,
    pub loss: Loss,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 500,
            batch_size: 0,
            clip_threshold: 1.0,
            patience: 15,
            seed: 42,
            loss: Loss::Mse,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.clip_threshold > 0.0) {
            return Err(Error::config("clip_threshold must be positive"));
        }
        Ok(())
    }
}

/// Epoch budget that grows with depth: `base * L / 2`, at least one epoch.
pub fn depth_epochs(base: usize, depth: usize) -> usize {
    (base * depth / 2).max(1)
}

/// Adam moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u32,
}

impl<T: Scalar> AdamState<T> {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step<T: Scalar>(params: &mut [T], grads: &[T], state: &mut AdamState<T>, lr: T) {
    let (b1, b2) = (T::of(AdamState::<T>::BETA1), T::of(AdamState::<T>::BETA2));
    let eps = T::of(AdamState::<T>::EPS);
    state.t += 1;
    let c1 = T::one() - b1.powi(state.t as i32);
    let c2 = T::one() - b2.powi(state.t as i32);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let mh = *m / c1;
        let vh = *v / c2;
        *p = *p - lr * mh / (vh.sqrt() + eps);
    }
}

pub fn global_norm<T: Scalar>(grads: &[T]) -> T {
    grads.iter().map(|&g| g * g).sum::<T>().sqrt()
}

/// Rescales `grads` so their global L2 norm is at most `threshold`.
/// Returns the norm before clipping.
pub fn clip_gradients<T: Scalar>(grads: &mut [T], threshold: T) -> T {
    let norm = global_norm(grads);
    if norm > threshold {
        let s = threshold / norm;
        for g in grads.iter_mut() {
            *g = *g * s;
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Global gradient norm before clipping; NaN for anomalous steps.
    pub grad_norm: f64,
    /// Mean batch loss; NaN when the forward pass failed.
    pub loss: f64,
    pub anomalous: bool,
}

/// Telemetry of one training run. Losses are stored as `f64` whatever the
/// model scalar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    /// NaN when no validation split was given.
    pub val_loss: Vec<f64>,
    pub steps: Vec<StepRecord>,
    /// Steps skipped because the loss or a gradient was NaN/Inf.
    pub anomalies: usize,
    /// Epochs whose mean train loss was not finite.
    pub anomalous_epochs: Vec<usize>,
    pub best_epoch: usize,
    pub best_params: Vec<f64>,
    pub stopped_early: bool,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    pub fn grad_norms(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.grad_norm).collect()
    }

    /// Writes `step,grad_norm,loss,anomaly` rows.
    pub fn write_telemetry_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["step", "grad_norm", "loss", "anomaly"])
            .map_err(|e| csv_io(path, e))?;
        for (i, s) in self.steps.iter().enumerate() {
            w.write_record([
                i.to_string(),
                s.grad_norm.to_string(),
                s.loss.to_string(),
                u8::from(s.anomalous).to_string(),
            ])
            .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Summary of a gradient-norm series. Anomalous (NaN) steps are excluded
/// from the moments and counted separately.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
    pub anomalies: usize,
}

pub fn gradient_stats(history: &TrainHistory) -> GradientStats {
    let mut s = series_stats(&history.grad_norms());
    s.anomalies = history.anomalies;
    s
}

pub fn series_stats(series: &[f64]) -> GradientStats {
    let finite: Vec<f64> = series.iter().copied().filter(|v| v.is_finite()).collect();
    let n = finite.len().max(1) as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    GradientStats {
        mean,
        std: var.sqrt(),
        max: finite.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        anomalies: series.len() - finite.len(),
    }
}

/// Patience-based stopping on a loss that should decrease.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    waited: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            waited: 0,
        }
    }

    /// Records `loss` for `epoch`; true when it is a new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.waited = 0;
            true
        } else {
            self.waited += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.patience > 0 && self.waited >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Per-thread scratch reused between steps.
struct Workspace<T> {
    tape: Tape<T>,
    adjoint: Vec<T>,
    grads: Vec<T>,
}

/// Mean loss and summed gradient of one batch for the prediction
/// `scale * f(x)`; `None` on any non-finite value.
fn batch_gradient<T: Scalar>(
    model: &Model<T>,
    data: &Samples<T>,
    batch: &[usize],
    scale: T,
    ws: &mut Workspace<T>,
) -> Option<T> {
    ws.grads.iter_mut().for_each(|g| *g = T::zero());
    let inv_n = T::one() / T::of(batch.len() as f64);
    let two = T::of(2.0);
    let mut loss = T::zero();
    for &i in batch {
        ws.tape.reset(model.params().values());
        let out = model.forward(&mut ws.tape, data.row(i)).ok()?;
        let diff = scale * ws.tape.value(out) - data.y[i];
        loss = loss + diff * diff;
        ws.tape
            .backward_into(
                out,
                two * diff * scale * inv_n,
                &mut ws.adjoint,
                &mut ws.grads,
            )
            .ok()?;
    }
    let loss = loss * inv_n;
    (loss.is_finite() && ws.grads.iter().all(|g| g.is_finite())).then_some(loss)
}

fn scaled_mse<T: Scalar>(model: &Model<T>, data: &Samples<T>, scale: T) -> Result<f64> {
    let preds = model.predict_all(data)?;
    let sum: f64 = preds
        .iter()
        .zip(&data.y)
        .map(|(&p, &y)| (scale * p - y).f64().powi(2))
        .sum();
    Ok(sum / data.len() as f64)
}

/// Trains `model` in place with Adam on the MSE loss.
///
/// The returned history carries the best checkpoint (lowest validation
/// loss, or train loss without a validation split), which is also loaded
/// back into `model`.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    train: &Samples<T>,
    val: Option<&Samples<T>>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    train_scaled(model, train, val, cfg, T::one())
}

/// [`train`] against the loss of `scale * f(x)`; boosting stages use the
/// shrinkage rate here.
pub(crate) fn train_scaled<T: Scalar>(
    model: &mut Model<T>,
    train: &Samples<T>,
    val: Option<&Samples<T>>,
    cfg: &TrainConfig,
    scale: T,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Shape("empty training split".into()));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = train.len();
    let batch = if cfg.batch_size == 0 {
        n
    } else {
        cfg.batch_size.min(n)
    };
    let lr = T::of(cfg.learning_rate);
    let clip = T::of(cfg.clip_threshold);

    let p = model.param_count();
    let mut ws = Workspace {
        tape: Tape::new(),
        adjoint: Vec::new(),
        grads: vec![T::zero(); p],
    };
    let mut adam = AdamState::new(p);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.params().values().to_vec();

    let mut h = TrainHistory {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
        steps: Vec::new(),
        anomalies: 0,
        anomalous_epochs: Vec::new(),
        best_epoch: 0,
        best_params: Vec::new(),
        stopped_early: false,
        wall_clock_secs: 0.0,
    };
    let mut diverging = 0;

    for epoch in 0..cfg.epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for chunk in order.chunks(batch) {
            match batch_gradient(model, train, chunk, scale, &mut ws) {
                Some(loss) => {
                    let norm = clip_gradients(&mut ws.grads, clip);
                    adam_step(model.params_mut().values_mut(), &ws.grads, &mut adam, lr);
                    loss_sum += loss.f64();
                    loss_count += 1;
                    h.steps.push(StepRecord {
                        grad_norm: norm.f64(),
                        loss: loss.f64(),
                        anomalous: false,
                    });
                }
                None => {
                    h.anomalies += 1;
                    h.steps.push(StepRecord {
                        grad_norm: f64::NAN,
                        loss: f64::NAN,
                        anomalous: true,
                    });
                }
            }
        }
        let train_loss = if loss_count > 0 {
            loss_sum / loss_count as f64
        } else {
            f64::NAN
        };
        if !train_loss.is_finite() {
            h.anomalous_epochs.push(epoch);
        }
        h.train_loss.push(train_loss);

        let monitored = match val {
            Some(v) => {
                let l = scaled_mse(model, v, scale).unwrap_or(f64::INFINITY);
                h.val_loss.push(l);
                l
            }
            None => {
                h.val_loss.push(f64::NAN);
                train_loss
            }
        };
        if stopper.observe(
            epoch,
            if monitored.is_nan() {
                f64::INFINITY
            } else {
                monitored
            },
        ) {
            best.copy_from_slice(model.params().values());
        }

        if !(train_loss <= DIVERGENCE_LOSS) {
            diverging += 1;
        } else {
            diverging = 0;
        }
        if diverging >= DIVERGENCE_EPOCHS {
            h.best_epoch = stopper.best_epoch();
            h.best_params = best.iter().map(|v| v.f64()).collect();
            h.wall_clock_secs = started.elapsed().as_secs_f64();
            return Err(Error::DivergenceAbort {
                epoch,
                history: Box::new(h),
            });
        }
        if stopper.should_stop() {
            h.stopped_early = true;
            break;
        }
    }

    if !h.train_loss.is_empty() {
        model.params_mut().values_mut().copy_from_slice(&best);
    }
    h.best_epoch = stopper.best_epoch();
    h.best_params = best.iter().map(|v| v.f64()).collect();
    h.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(h)
}

/// Appends `epoch,train_loss,val_loss` rows to any writer.
pub fn write_loss_rows(w: &mut impl Write, h: &TrainHistory) -> std::io::Result<()> {
    for (e, (t, v)) in h.train_loss.iter().zip(&h.val_loss).enumerate() {
        writeln!(w, "{e},{t},{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelConfig;

    #[test]
    fn first_adam_step_is_learning_rate_sized() {
        let mut p = [0.0f64];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 1e-3);
        let expect = -1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - expect).abs() < 1e-15);
        assert!((p[0] + 0.000999999).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = [0.3f64, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 1e-3);
        assert_eq!(p, [0.3, -2.0]);
    }

    #[test]
    fn equal_gradients_give_equal_updates() {
        let mut p = [1.0f64, 1.0];
        let mut s = AdamState::new(2);
        for _ in 0..5 {
            adam_step(&mut p, &[0.7, 0.7], &mut s, 1e-2);
        }
        assert_eq!(p[0], p[1]);
    }

    #[test]
    fn clipping_cases() {
        let mut g = [2.0f64, 0.0];
        clip_gradients(&mut g, 1.0);
        assert_eq!(g, [1.0, 0.0]);
        let mut g = [0.3f64, 0.4];
        assert_eq!(clip_gradients(&mut g, 1.0), 0.5);
        assert_eq!(g, [0.3, 0.4]);
        let mut g = [3.0f64, 4.0];
        assert_eq!(clip_gradients(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn population_std() {
        assert_eq!(series_stats(&[1.0, 1.0, 1.0]).std, 0.0);
        let s = series_stats(&[0.0, 2.0]);
        assert_eq!((s.mean, s.std, s.max), (1.0, 1.0, 2.0));
    }

    #[test]
    fn patience_counts_non_improving_epochs() {
        let mut es = EarlyStopping::new(15);
        let mut stopped_at = None;
        for epoch in 1..=100 {
            es.observe(epoch, epoch as f64);
            if es.should_stop() {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(16));
        assert_eq!(es.best_epoch(), 1);
    }

    #[test]
    fn depth_schedule() {
        assert_eq!(depth_epochs(500, 2), 500);
        assert_eq!(depth_epochs(500, 6), 1500);
        assert_eq!(depth_epochs(500, 0), 1);
    }

    fn affine_data() -> Samples<f64> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            let (a, b) = (-1.0 + 0.1 * i as f64, ((i * 7) % 11) as f64 / 11.0 - 0.5);
            x.extend([a, b]);
            y.push(1.5 * a - 0.5 * b + 0.25);
        }
        Samples::new(x, y, 2).unwrap()
    }

    #[test]
    fn affine_model_fits_affine_data() {
        let data = affine_data();
        let mut m: Model<f64> = Model::init(ModelConfig::hybrid(2, 0, 1), 1, None).unwrap();
        let cfg = TrainConfig {
            epochs: 2000,
            learning_rate: 0.01,
            patience: 0,
            ..TrainConfig::default()
        };
        let h = train(&mut m, &data, None, &cfg).unwrap();
        assert_eq!(h.steps.len(), 2000);
        assert!(m.mse(&data).unwrap() < 1e-6);
    }

    #[test]
    fn training_is_deterministic() {
        let data = affine_data();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m: Model<f64> = Model::init(ModelConfig::hybrid(2, 3, 2), 9, None).unwrap();
            let mut h = train(&mut m, &data, Some(&data), &cfg).unwrap();
            h.wall_clock_secs = 0.0;
            (h, m.params().values().to_vec())
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a, b);
        assert!(pa.iter().zip(&pb).all(|(u, v)| u.to_bits() == v.to_bits()));
        assert_eq!(a.steps.len(), 30 * 3);
    }

    #[test]
    fn anomalous_steps_leave_parameters_untouched() {
        // gamma = 0 and a zero denominator make every forward pass fail
        let mut c = ModelConfig::hybrid(1, 1, 1);
        c.gamma = 0.0;
        let mut m: Model<f64> = Model::zeroed(c).unwrap();
        m.params_mut().get_mut("unit0.p_coef").unwrap()[0] = 1.0;
        let before = m.params().values().to_vec();
        let data = Samples::new(vec![0.0, 1.0], vec![0.0, 1.0], 1).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let h = train(&mut m, &data, None, &cfg).unwrap();
        assert_eq!(h.anomalies, 3);
        assert!(h.steps.iter().all(|s| s.anomalous && s.grad_norm.is_nan()));
        assert!(m
            .params()
            .values()
            .iter()
            .zip(&before)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn persistent_blowup_aborts() {
        let mut m: Model<f64> = Model::zeroed(ModelConfig::hybrid(1, 0, 1)).unwrap();
        let data = Samples::new(vec![0.0, 1.0], vec![1e6, -1e6], 1).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            patience: 0,
            ..TrainConfig::default()
        };
        match train(&mut m, &data, None, &cfg) {
            Err(Error::DivergenceAbort { epoch, history }) => {
                assert_eq!(epoch, DIVERGENCE_EPOCHS - 1);
                assert_eq!(history.epochs(), DIVERGENCE_EPOCHS);
            }
            other => panic!("expected divergence abort, got {other:?}"),
        }
    }
}
