//! Accuracy, lead, spectral and interpretability metrics.

mod fft;
mod spectral;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::FeatureRole;
use crate::error::{Error, Result};
use crate::optim::csv_io;
use crate::scalar::Scalar;

pub use fft::{fft, fft_in_place, one_sided_energy, psd};
pub use spectral::{
    average_reports, spectral_report, SpectralReport, BAND_SPLIT_FRACTION, PSD_FLOOR,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

/// MSE, RMSE, MAE and `R^2 = 1 - SS_res / SS_tot`.
pub fn accuracy_metrics<T: Scalar>(pred: &[T], truth: &[T]) -> Result<Accuracy> {
    if pred.len() != truth.len() || truth.len() < 2 {
        return Err(Error::Shape(format!(
            "accuracy needs equal lengths >= 2, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let n = truth.len() as f64;
    let mean = truth.iter().map(|v| v.f64()).sum::<f64>() / n;
    let (mut ss_res, mut abs, mut ss_tot) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (p, t) = (p.f64(), t.f64());
        ss_res += (p - t) * (p - t);
        abs += (p - t).abs();
        ss_tot += (t - mean) * (t - mean);
    }
    if ss_tot == 0.0 {
        return Err(Error::DegenerateTarget);
    }
    let mse = ss_res / n;
    Ok(Accuracy {
        mse,
        rmse: mse.sqrt(),
        mae: abs / n,
        r2: 1.0 - ss_res / ss_tot,
    })
}

/// Percent improvement of `cfnn` over `mlp` on a lower-is-better metric.
pub fn lead(metric_mlp: f64, metric_cfnn: f64) -> Result<f64> {
    if metric_mlp == 0.0 {
        return Err(Error::UndefinedLead);
    }
    Ok((metric_mlp - metric_cfnn) / metric_mlp * 100.0)
}

/// Feature indices by descending importance, ties broken by index.
pub fn ranking(importance: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..importance.len()).collect();
    order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    order
}

/// 1-based rank of every feature under [`ranking`].
pub fn ranks(importance: &[f64]) -> Vec<usize> {
    let mut r = vec![0; importance.len()];
    for (pos, i) in ranking(importance).into_iter().enumerate() {
        r[i] = pos + 1;
    }
    r
}

/// Spearman correlation of two importance vectors (Pearson on their ranks).
pub fn spearman_rho(a: &[f64], b: &[f64]) -> f64 {
    let ra: Vec<f64> = ranks(a).into_iter().map(|v| v as f64).collect();
    let rb: Vec<f64> = ranks(b).into_iter().map(|v| v as f64).collect();
    crate::datagen::pearson(&ra, &rb)
}

/// Fraction of `(a, b)` pairs with `importance[a] > importance[b]`.
pub fn ranking_consistency(importance: &[f64], pairs: &[(usize, usize)]) -> f64 {
    if pairs.is_empty() {
        return f64::NAN;
    }
    let ok = pairs
        .iter()
        .filter(|&&(a, b)| importance[a] > importance[b])
        .count();
    ok as f64 / pairs.len() as f64
}

/// Overlap of the top-`k` features of two importance vectors, over `k`.
pub fn top_k_agreement(importance: &[f64], reference: &[f64], k: usize) -> f64 {
    let k = k.min(importance.len());
    let a = &ranking(importance)[..k];
    let b = &ranking(reference)[..k];
    a.iter().filter(|i| b.contains(i)).count() as f64 / k as f64
}

/// Agreement of an importance vector with a domain-knowledge reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainScores {
    pub spearman_rho: f64,
    /// NaN when no key pairs were supplied.
    pub ranking_consistency: f64,
    pub top3_accuracy: f64,
}

/// `reference` holds expected importances (any monotone scores); `pairs`
/// lists `(a, b)` with `a` expected to outrank `b`.
pub fn domain_scores(
    importance: &[f64],
    reference: &[f64],
    pairs: &[(usize, usize)],
) -> Result<DomainScores> {
    if importance.len() != reference.len() {
        return Err(Error::Shape(format!(
            "{} importances for {} reference scores",
            importance.len(),
            reference.len()
        )));
    }
    if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a.max(b) >= importance.len()) {
        return Err(Error::Shape(format!("key pair ({a}, {b}) out of range")));
    }
    Ok(DomainScores {
        spearman_rho: spearman_rho(importance, reference),
        ranking_consistency: ranking_consistency(importance, pairs),
        top3_accuracy: top_k_agreement(importance, reference, 3),
    })
}

/// Attribution quality against known feature roles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub importance: Vec<f64>,
    pub ranking: Vec<usize>,
    /// Nuisance over signal attribution mass; infinite when the signal
    /// features received no attribution.
    pub nsr: f64,
    pub zero_signal_attribution: bool,
    /// Mean 1-based rank of the signal features.
    pub mir: f64,
    pub topk_accuracy: f64,
    pub k: usize,
    /// `nsr / reference_nsr` when a reference is supplied.
    pub suppression: Option<f64>,
}

impl AttributionReport {
    /// Writes `feature,role,importance,rank` rows.
    pub fn write_csv(&self, path: &Path, names: &[String], roles: &[FeatureRole]) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["feature", "role", "importance", "rank"])
            .map_err(|e| csv_io(path, e))?;
        let r = ranks(&self.importance);
        for j in 0..self.importance.len() {
            let role = serde_json::to_value(roles[j])?;
            w.write_record([
                names[j].clone(),
                role.as_str().unwrap_or_default().to_owned(),
                self.importance[j].to_string(),
                r[j].to_string(),
            ])
            .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Scores importances against feature roles; `k` is the top-k cut and
/// `reference_nsr` the baseline for suppression.
pub fn interpretability_scores(
    importance: &[f64],
    roles: &[FeatureRole],
    k: usize,
    reference_nsr: Option<f64>,
) -> Result<AttributionReport> {
    if importance.len() != roles.len() {
        return Err(Error::Shape(format!(
            "{} importances for {} roles",
            importance.len(),
            roles.len()
        )));
    }
    let signal: Vec<usize> = (0..roles.len())
        .filter(|&j| roles[j] == FeatureRole::Signal)
        .collect();
    if signal.is_empty() {
        return Err(Error::Shape("no signal features".into()));
    }
    let mass = |pred: &dyn Fn(FeatureRole) -> bool| -> f64 {
        importance
            .iter()
            .zip(roles)
            .filter(|(_, &r)| pred(r))
            .map(|(v, _)| v.abs())
            .sum()
    };
    let sig = mass(&|r| r == FeatureRole::Signal);
    let nuisance = mass(&|r| r.is_uninformative());
    let zero_signal_attribution = sig == 0.0;
    let nsr = if zero_signal_attribution {
        f64::INFINITY
    } else {
        nuisance / sig
    };
    let order = ranking(importance);
    let r = ranks(importance);
    let k_eff = k.min(order.len());
    let hits = order[..k_eff].iter().filter(|j| signal.contains(j)).count();
    Ok(AttributionReport {
        importance: importance.to_vec(),
        ranking: order,
        nsr,
        zero_signal_attribution,
        mir: signal.iter().map(|&j| r[j] as f64).sum::<f64>() / signal.len() as f64,
        topk_accuracy: hits as f64 / signal.len() as f64,
        k,
        suppression: reference_nsr.map(|refn| nsr / refn),
    })
}
