//! Model-agnostic feature importance: permutation importance, sampled
//! Shapley values and exact Shapley enumeration for small inputs.
//!
//! Absent features are imputed with a single background vector, the mean
//! of the background rows.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::Samples;
use crate::error::{Error, Result};
use crate::models::Predictor;
use crate::optim::csv_io;
use crate::scalar::Scalar;

pub const MAX_EXACT_FEATURES: usize = 10;
pub const MAX_SAMPLED_FEATURES: usize = 32;
pub const MIN_SAMPLES_PER_FEATURE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Permutation,
    SampledShapley,
    ExactShapley,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Permutation => "permutation",
            Method::SampledShapley => "sampled_shapley",
            Method::ExactShapley => "exact_shapley",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEstimate {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub method: Method,
    /// Repeats for permutation importance, permutations per row for Shapley.
    pub budget: usize,
    pub seed: u64,
}

impl ImportanceEstimate {
    /// Writes `feature,mean,std,method,seed` rows.
    pub fn write_csv(&self, path: &Path, names: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["feature", "mean", "std", "method", "seed"])
            .map_err(|e| csv_io(path, e))?;
        for (j, (m, s)) in self.mean.iter().zip(&self.std).enumerate() {
            w.write_record([
                names[j].clone(),
                m.to_string(),
                s.to_string(),
                self.method.name().to_owned(),
                self.seed.to_string(),
            ])
            .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len().max(1) as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn check_dim<T, P: Predictor<T> + ?Sized>(model: &P, dim: usize) -> Result<()> {
    if model.input_dim() != dim {
        return Err(Error::Shape(format!(
            "model takes {} features, data has {dim}",
            model.input_dim()
        )));
    }
    Ok(())
}

fn mse_of<T: Scalar, P: Predictor<T> + ?Sized>(
    model: &P,
    x: &[T],
    y: &[T],
    dim: usize,
) -> Result<f64> {
    let mut s = 0.0;
    for (row, &t) in x.chunks_exact(dim).zip(y) {
        let e = (model.predict(row)? - t).f64();
        s += e * e;
    }
    Ok(s / y.len() as f64)
}

/// Mean increase in MSE when one column is shuffled, clamped at zero.
/// Column `j` uses its own RNG stream so results do not depend on `d`.
pub fn permutation_importance<T: Scalar, P: Predictor<T> + ?Sized>(
    model: &P,
    data: &Samples<T>,
    repeats: usize,
    seed: u64,
) -> Result<ImportanceEstimate> {
    if repeats < 2 {
        return Err(Error::config(
            "permutation importance needs at least 2 repeats",
        ));
    }
    if data.is_empty() {
        return Err(Error::Shape("empty split".into()));
    }
    let d = data.dim();
    check_dim(model, d)?;
    let base = mse_of(model, &data.x, &data.y, d)?;
    let mut mean = Vec::with_capacity(d);
    let mut std = Vec::with_capacity(d);
    let mut work = data.x.clone();
    for j in 0..d {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let col = data.column(j);
        let mut deltas = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let mut shuffled = col.clone();
            shuffled.shuffle(&mut rng);
            for (i, v) in shuffled.into_iter().enumerate() {
                work[i * d + j] = v;
            }
            deltas.push(mse_of(model, &work, &data.y, d)? - base);
        }
        for i in 0..data.len() {
            work[i * d + j] = col[i];
        }
        let (m, s) = mean_std(&deltas);
        mean.push(m.max(0.0));
        std.push(s);
    }
    Ok(ImportanceEstimate {
        mean,
        std,
        method: Method::Permutation,
        budget: repeats,
        seed,
    })
}

/// Column means of `data`.
pub fn background_mean<T: Scalar>(data: &Samples<T>) -> Vec<T> {
    let n = T::of(data.len().max(1) as f64);
    (0..data.dim())
        .map(|j| data.column(j).into_iter().sum::<T>() / n)
        .collect()
}

/// Shapley values of one row by Monte-Carlo permutation sampling.
pub fn shapley_row<T: Scalar, P: Predictor<T> + ?Sized>(
    model: &P,
    background: &[T],
    x: &[T],
    permutations: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let d = x.len();
    let mut phi = vec![0.0; d];
    let mut order: Vec<usize> = (0..d).collect();
    let mut z = background.to_vec();
    let empty = model.predict(background)?.f64();
    for _ in 0..permutations {
        order.shuffle(rng);
        z.copy_from_slice(background);
        let mut prev = empty;
        for &j in &order {
            z[j] = x[j];
            let v = model.predict(&z)?.f64();
            phi[j] += v - prev;
            prev = v;
        }
    }
    phi.iter_mut().for_each(|p| *p /= permutations as f64);
    Ok(phi)
}

/// Sampled Shapley attributions for every explained row plus the global
/// importance `mean_i |phi_ij|`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapleyResult {
    pub estimate: ImportanceEstimate,
    pub values: Vec<Vec<f64>>,
}

pub fn sampled_shapley<T: Scalar, P: Predictor<T> + Sync + ?Sized>(
    model: &P,
    background: &Samples<T>,
    explain: &Samples<T>,
    samples_per_feature: usize,
    seed: u64,
) -> Result<ShapleyResult> {
    let d = explain.dim();
    if d > MAX_SAMPLED_FEATURES {
        return Err(Error::TooManyFeatures {
            got: d,
            max: MAX_SAMPLED_FEATURES,
        });
    }
    if samples_per_feature < MIN_SAMPLES_PER_FEATURE {
        return Err(Error::config(format!(
            "samples_per_feature must be at least {MIN_SAMPLES_PER_FEATURE}"
        )));
    }
    check_dim(model, d)?;
    if background.dim() != d {
        return Err(Error::Shape(
            "background and explain splits differ in width".into(),
        ));
    }
    let bg = background_mean(background);
    let values = (0..explain.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            shapley_row(model, &bg, explain.row(i), samples_per_feature, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut mean, mut std) = (Vec::with_capacity(d), Vec::with_capacity(d));
    for j in 0..d {
        let abs: Vec<f64> = values.iter().map(|v| v[j].abs()).collect();
        let (m, s) = mean_std(&abs);
        mean.push(m);
        std.push(s);
    }
    Ok(ShapleyResult {
        estimate: ImportanceEstimate {
            mean,
            std,
            method: Method::SampledShapley,
            budget: samples_per_feature,
            seed,
        },
        values,
    })
}

/// Exact Shapley values of `x` by enumerating all `2^d` coalitions.
pub fn exact_shapley_smalld<T: Scalar, P: Predictor<T> + ?Sized>(
    model: &P,
    background: &[T],
    x: &[T],
) -> Result<Vec<f64>> {
    let d = x.len();
    if d > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures {
            got: d,
            max: MAX_EXACT_FEATURES,
        });
    }
    check_dim(model, d)?;
    let mut value = vec![0.0; 1 << d];
    let mut z = background.to_vec();
    for (mask, v) in value.iter_mut().enumerate() {
        for j in 0..d {
            z[j] = if mask >> j & 1 == 1 {
                x[j]
            } else {
                background[j]
            };
        }
        *v = model.predict(&z)?.f64();
    }
    // weight |S|! (d - |S| - 1)! / d! by coalition size
    let mut fact = vec![1.0f64; d + 1];
    for k in 1..=d {
        fact[k] = fact[k - 1] * k as f64;
    }
    let weight: Vec<f64> = (0..d)
        .map(|s| fact[s] * fact[d - s - 1] / fact[d])
        .collect();
    let mut phi = vec![0.0; d];
    for (mask, &v) in value.iter().enumerate() {
        let size = (mask as u32).count_ones() as usize;
        for (j, p) in phi.iter_mut().enumerate() {
            if mask >> j & 1 == 0 {
                *p += weight[size] * (value[mask | 1 << j] - v);
            }
        }
    }
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FnPredictor;
    use rand::Rng;

    fn random_samples(n: usize, d: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> Samples<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = x.chunks(d).map(&f).collect();
        Samples::new(x, y, d).unwrap()
    }

    #[test]
    fn disconnected_feature_has_no_importance() {
        let f = |x: &[f64]| 1.5 * x[0] - 0.5 * x[2];
        let data = random_samples(300, 3, 1, f);
        let model = FnPredictor { dim: 3, f };
        let imp = permutation_importance(&model, &data, 5, 7).unwrap();
        assert!(imp.mean[1] < 1e-6);
        assert!(imp.mean[0] > imp.mean[2] && imp.mean[2] > 0.0);
    }

    #[test]
    fn linear_feature_matches_the_shuffle_expectation() {
        // E[shuffled MSE] = 4 * 2 * Var(x1) for y = 2 x1 under a uniform permutation
        let f = |x: &[f64]| 2.0 * x[0];
        let data = random_samples(400, 2, 3, f);
        let model = FnPredictor { dim: 2, f };
        let imp = permutation_importance(&model, &data, 200, 11).unwrap();
        let col = data.column(0);
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64;
        let expect = 8.0 * var;
        let mc_err = 4.0 * imp.std[0] / (200f64).sqrt();
        assert!(
            (imp.mean[0] - expect).abs() < mc_err,
            "{} vs {expect}",
            imp.mean[0]
        );
        assert!(imp.mean[1] < 1e-6);
    }

    #[test]
    fn symmetric_features_get_similar_importance() {
        let f = |x: &[f64]| x[0] + x[1];
        let data = random_samples(500, 2, 5, f);
        let imp = permutation_importance(&FnPredictor { dim: 2, f }, &data, 20, 2).unwrap();
        assert!((imp.mean[0] - imp.mean[1]).abs() < 0.1 * imp.mean[0]);
    }

    #[test]
    fn too_few_repeats() {
        let f = |x: &[f64]| x[0];
        let data = random_samples(20, 1, 0, f);
        assert!(permutation_importance(&FnPredictor { dim: 1, f }, &data, 1, 0).is_err());
    }

    #[test]
    fn exact_shapley_axioms() {
        let f = |x: &[f64]| x[0] * x[1] + 3.0 * x[2] + x[0].sin();
        let model = FnPredictor { dim: 4, f };
        let bg = [0.1, -0.2, 0.3, 0.0];
        let x = [0.7, 0.7, -0.4, 5.0];
        let phi = exact_shapley_smalld(&model, &bg, &x).unwrap();
        let total: f64 = phi.iter().sum();
        assert!((total - (f(&x) - f(&bg))).abs() < 1e-12);
        assert_eq!(phi[3], 0.0);
        let sym = FnPredictor {
            dim: 2,
            f: |x: &[f64]| x[0] * x[1],
        };
        let p = exact_shapley_smalld(&sym, &[0.0, 0.0], &[2.0, 2.0]).unwrap();
        assert_eq!(p[0], p[1]);
        assert!(matches!(
            exact_shapley_smalld(
                &FnPredictor {
                    dim: 11,
                    f: |_: &[f64]| 0.0
                },
                &[0.0; 11],
                &[0.0; 11]
            ),
            Err(Error::TooManyFeatures { got: 11, max: 10 })
        ));
    }

    #[test]
    fn two_feature_enumeration_by_hand() {
        // phi_1 = 1/2 [v(1) - v(0)] + 1/2 [v(12) - v(2)]
        let f = |x: &[f64]| x[0] * x[1] + x[0];
        let model = FnPredictor { dim: 2, f };
        let (bg, x) = ([0.5, 1.0], [2.0, 3.0]);
        let v = |a: f64, b: f64| f(&[a, b]);
        let phi1 = 0.5 * (v(2.0, 1.0) - v(0.5, 1.0)) + 0.5 * (v(2.0, 3.0) - v(0.5, 3.0));
        let phi = exact_shapley_smalld(&model, &bg, &x).unwrap();
        assert!((phi[0] - phi1).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sampled = shapley_row(&model, &bg, &x, 400, &mut rng).unwrap();
        assert!((sampled[0] - phi1).abs() < 0.1 * phi1.abs());
    }

    #[test]
    fn additive_model_is_recovered_exactly_per_row() {
        // every permutation gives g_j(x_j) - g_j(bg_j) for an additive model
        let f = |x: &[f64]| x[0].powi(3) + (2.0 * x[1]).cos();
        let data = random_samples(40, 2, 9, f);
        let res = sampled_shapley(&FnPredictor { dim: 2, f }, &data, &data, 16, 3).unwrap();
        let bg = background_mean(&data);
        for (i, phi) in res.values.iter().enumerate() {
            let x = data.row(i);
            assert!((phi[0] - (x[0].powi(3) - bg[0].powi(3))).abs() < 1e-12);
            assert!((phi[1] - ((2.0 * x[1]).cos() - (2.0 * bg[1]).cos())).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_model_has_zero_attribution() {
        let f = |_: &[f64]| 4.0;
        let data = random_samples(30, 3, 2, f);
        let res = sampled_shapley(&FnPredictor { dim: 3, f }, &data, &data, 16, 0).unwrap();
        assert!(res.estimate.mean.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn sampled_shapley_is_deterministic_per_seed() {
        let f = |x: &[f64]| x[0] * x[1] - x[2];
        let data = random_samples(25, 3, 4, f);
        let m = FnPredictor { dim: 3, f };
        let a = sampled_shapley(&m, &data, &data, 16, 8).unwrap();
        let b = sampled_shapley(&m, &data, &data, 16, 8).unwrap();
        assert_eq!(a, b);
        assert!(sampled_shapley(&m, &data, &data, 8, 8).is_err());
    }
}
