//! Per-protocol tables computed from finished cells.

use serde::{Deserialize, Serialize};

use cfnn::funcs::TargetId;
use cfnn::metrics::{
    average_reports, domain_scores, interpretability_scores, lead, DomainScores, SpectralReport,
};
use cfnn::models::Family;
use cfnn::optim::GradientStats;
use cfnn::{Error, Result};

use crate::config::{ExperimentConfig, ProtocolId};
use crate::pareto::{pareto_front, threshold_params, ParetoPoint};
use crate::protocols::CellOutcome;

/// One row per cell; NaN metrics mark a model that failed on the test split.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellRecord {
    pub id: String,
    pub model: String,
    pub group: Option<String>,
    pub target: Option<TargetId>,
    pub scale: Option<usize>,
    pub seed: u64,
    pub family: Family,
    pub param_count: usize,
    pub effective_params: usize,
    pub epochs: usize,
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub grad: GradientStats,
    pub diverged: bool,
    pub stages_accepted: Vec<bool>,
}

impl CellRecord {
    pub fn from_outcome(o: &CellOutcome) -> Self {
        let nan = f64::NAN;
        let (mse, rmse, mae, r2) = o
            .accuracy
            .map_or((nan, nan, nan, nan), |a| (a.mse, a.rmse, a.mae, a.r2));
        CellRecord {
            id: o.cell.id.clone(),
            model: o.cell.tag.clone(),
            group: o.cell.group.clone(),
            target: o.cell.target,
            scale: o.cell.scale,
            seed: o.cell.seed,
            family: o.cell.model.family,
            param_count: o.model.param_count(),
            effective_params: o.model.effective_param_count(),
            epochs: o.histories.iter().map(|h| h.epochs()).sum(),
            mse,
            rmse,
            mae,
            r2,
            grad: o.grad,
            diverged: o.diverged,
            stages_accepted: o.stages_accepted.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityRow {
    pub target: TargetId,
    pub model: String,
    /// Mean over seeds of the per-run gradient-norm standard deviation.
    pub grad_std: f64,
    pub grad_std_min: f64,
    pub grad_std_max: f64,
    pub anomalies: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub target: TargetId,
    pub model: String,
    pub scale: usize,
    pub param_count: usize,
    pub epochs: usize,
    pub rmse: Vec<f64>,
    pub median_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeadRow {
    pub group: Option<String>,
    pub target: TargetId,
    pub model: String,
    pub param_count: usize,
    pub mlp_param_count: usize,
    /// Test RMSE averaged over seeds.
    pub rmse: f64,
    pub mlp_rmse: f64,
    /// Percent; `None` when the baseline RMSE is zero.
    pub lead: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    Unreached,
}

/// Minimum parameter count below an MSE threshold, or the unreached marker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Params(usize),
    Marker(Marker),
}

impl From<Option<usize>> for Threshold {
    fn from(v: Option<usize>) -> Self {
        v.map_or(Threshold::Marker(Marker::Unreached), Threshold::Params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParetoRow {
    pub target: TargetId,
    pub model: String,
    pub frontier: Vec<ParetoPoint>,
    pub mse_threshold: f64,
    pub threshold_params: Threshold,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralRow {
    pub target: TargetId,
    pub model: String,
    pub low_band_mean: f64,
    pub high_band_mean: f64,
    pub band_ratio: f64,
    #[serde(skip)]
    pub report: SpectralReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseRow {
    pub model: String,
    pub seed: u64,
    pub mse: f64,
    pub mae: f64,
    pub r2: f64,
    /// MSE over the reference model's MSE.
    pub relative_mse: Option<f64>,
    pub nsr: f64,
    pub zero_signal_attribution: bool,
    pub topk_accuracy: f64,
    pub k: usize,
    pub mir: f64,
    /// NSR over the reference model's NSR.
    pub suppression: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttributionRow {
    pub model: String,
    pub seed: u64,
    pub features: Vec<String>,
    pub importance: Vec<f64>,
    pub ranking: Vec<String>,
    pub domain: Option<DomainScores>,
}

/// Machine-readable outcome of a run. Contains no timings, so identical
/// configs produce identical files.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub protocol: ProtocolId,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub stability: Vec<StabilityRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub depth_scaling: Vec<ScalingRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub leads: Vec<LeadRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub pareto: Vec<ParetoRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub spectral: Vec<SpectralRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub noise: Vec<NoiseRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub attribution: Vec<AttributionRow>,
}

fn distinct<K: PartialEq + Clone>(items: impl Iterator<Item = K>) -> Vec<K> {
    let mut out = Vec::new();
    for k in items {
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

pub fn summarize(cfg: &ExperimentConfig, outcomes: &[CellOutcome]) -> Result<Summary> {
    let cells: Vec<CellRecord> = outcomes.iter().map(CellRecord::from_outcome).collect();
    let mut s = Summary {
        protocol: cfg.protocol,
        seeds: cfg.seeds.clone(),
        cells,
        stability: Vec::new(),
        depth_scaling: Vec::new(),
        leads: Vec::new(),
        pareto: Vec::new(),
        spectral: Vec::new(),
        noise: Vec::new(),
        attribution: Vec::new(),
    };
    match cfg.protocol {
        ProtocolId::Stability => s.stability = stability(&s.cells),
        ProtocolId::DepthScaling => s.depth_scaling = scaling(&s.cells),
        ProtocolId::LeadGrid => s.leads = leads(&s.cells)?,
        ProtocolId::Pareto => s.pareto = pareto(&s.cells, cfg.params.mse_threshold),
        ProtocolId::Spectral => s.spectral = spectral(outcomes)?,
        ProtocolId::Noise => s.noise = noise(cfg, outcomes)?,
        ProtocolId::Attribution => s.attribution = attribution(cfg, outcomes)?,
    }
    Ok(s)
}

fn stability(cells: &[CellRecord]) -> Vec<StabilityRow> {
    let mut rows = Vec::new();
    for t in distinct(cells.iter().filter_map(|c| c.target)) {
        for m in distinct(cells.iter().map(|c| c.model.clone())) {
            let runs: Vec<&CellRecord> = cells
                .iter()
                .filter(|c| c.target == Some(t) && c.model == m)
                .collect();
            if runs.is_empty() {
                continue;
            }
            let stds: Vec<f64> = runs.iter().map(|c| c.grad.std).collect();
            rows.push(StabilityRow {
                target: t,
                model: m,
                grad_std: mean(stds.iter().copied()),
                grad_std_min: stds.iter().copied().fold(f64::INFINITY, f64::min),
                grad_std_max: stds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                anomalies: runs.iter().map(|c| c.grad.anomalies).sum(),
            });
        }
    }
    rows
}

fn scaling(cells: &[CellRecord]) -> Vec<ScalingRow> {
    let mut rows = Vec::new();
    for t in distinct(cells.iter().filter_map(|c| c.target)) {
        for m in distinct(cells.iter().map(|c| c.model.clone())) {
            for l in distinct(cells.iter().filter_map(|c| c.scale)) {
                let runs: Vec<&CellRecord> = cells
                    .iter()
                    .filter(|c| c.target == Some(t) && c.model == m && c.scale == Some(l))
                    .collect();
                if runs.is_empty() {
                    continue;
                }
                let rmse: Vec<f64> = runs.iter().map(|c| c.rmse).collect();
                rows.push(ScalingRow {
                    target: t,
                    model: m.clone(),
                    scale: l,
                    param_count: runs[0].param_count,
                    epochs: runs[0].epochs,
                    median_rmse: median(&rmse),
                    rmse,
                });
            }
        }
    }
    rows
}

fn leads(cells: &[CellRecord]) -> Result<Vec<LeadRow>> {
    let mut rows = Vec::new();
    for g in distinct(cells.iter().map(|c| c.group.clone())) {
        for t in distinct(cells.iter().filter_map(|c| c.target)) {
            let here: Vec<&CellRecord> = cells
                .iter()
                .filter(|c| c.group == g && c.target == Some(t))
                .collect();
            let base: Vec<&&CellRecord> = here.iter().filter(|c| c.family == Family::Mlp).collect();
            let Some(b0) = base.first() else {
                return Err(Error::InvalidConfig(format!(
                    "group {g:?} has no mlp baseline"
                )));
            };
            let mlp_rmse = mean(base.iter().map(|c| c.rmse));
            for m in distinct(
                here.iter()
                    .filter(|c| c.family != Family::Mlp)
                    .map(|c| c.model.clone()),
            ) {
                let runs: Vec<&&CellRecord> = here.iter().filter(|c| c.model == m).collect();
                let rmse = mean(runs.iter().map(|c| c.rmse));
                rows.push(LeadRow {
                    group: g.clone(),
                    target: t,
                    model: m,
                    param_count: runs[0].param_count,
                    mlp_param_count: b0.param_count,
                    rmse,
                    mlp_rmse,
                    lead: lead(mlp_rmse, rmse).ok(),
                });
            }
        }
    }
    Ok(rows)
}

fn pareto(cells: &[CellRecord], threshold: f64) -> Vec<ParetoRow> {
    let mut rows = Vec::new();
    for t in distinct(cells.iter().filter_map(|c| c.target)) {
        for m in distinct(cells.iter().map(|c| c.model.clone())) {
            let points: Vec<ParetoPoint> = cells
                .iter()
                .filter(|c| c.target == Some(t) && c.model == m && c.mse.is_finite())
                .map(|c| ParetoPoint {
                    param_count: c.param_count,
                    test_mse: c.mse,
                    model: c
                        .group
                        .clone()
                        .map_or_else(|| c.model.clone(), |g| format!("{}#{g}", c.model)),
                    seed: c.seed,
                })
                .collect();
            if points.is_empty() && !cells.iter().any(|c| c.target == Some(t) && c.model == m) {
                continue;
            }
            let frontier = pareto_front(&points);
            rows.push(ParetoRow {
                target: t,
                model: m,
                threshold_params: threshold_params(&frontier, threshold).into(),
                frontier,
                mse_threshold: threshold,
            });
        }
    }
    rows
}

fn spectral(outcomes: &[CellOutcome]) -> Result<Vec<SpectralRow>> {
    let mut rows = Vec::new();
    for t in distinct(outcomes.iter().filter_map(|o| o.cell.target)) {
        for m in distinct(outcomes.iter().map(|o| o.cell.tag.clone())) {
            let reports: Vec<SpectralReport> = outcomes
                .iter()
                .filter(|o| o.cell.target == Some(t) && o.cell.tag == m)
                .map(|o| {
                    o.spectral
                        .clone()
                        .ok_or_else(|| crate::protocols::missing("spectrum", &o.cell))
                })
                .collect::<Result<_>>()?;
            if reports.is_empty() {
                continue;
            }
            let report = average_reports(&reports)?;
            rows.push(SpectralRow {
                target: t,
                model: m,
                low_band_mean: report.low_band_mean,
                high_band_mean: report.high_band_mean,
                band_ratio: report.band_ratio(),
                report,
            });
        }
    }
    Ok(rows)
}

fn reference_tag(cfg: &ExperimentConfig, outcomes: &[CellOutcome]) -> Option<String> {
    cfg.params.attribution.reference_model.clone().or_else(|| {
        outcomes
            .iter()
            .find(|o| o.cell.model.family == Family::Hybrid)
            .map(|o| o.cell.tag.clone())
    })
}

fn noise(cfg: &ExperimentConfig, outcomes: &[CellOutcome]) -> Result<Vec<NoiseRow>> {
    let k = cfg.params.attribution.top_k;
    let reference = reference_tag(cfg, outcomes);
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for o in outcomes {
        let a = o
            .attribution
            .as_ref()
            .ok_or_else(|| crate::protocols::missing("attribution", &o.cell))?;
        reports.push(interpretability_scores(
            &a.estimate.mean,
            &a.roles,
            k,
            None,
        )?);
    }
    for (o, r) in outcomes.iter().zip(&reports) {
        let rec = CellRecord::from_outcome(o);
        let reference_of = |seed: u64| {
            outcomes
                .iter()
                .zip(&reports)
                .find(|(p, _)| Some(&p.cell.tag) == reference.as_ref() && p.cell.seed == seed)
                .map(|(p, rep)| (CellRecord::from_outcome(p).mse, rep.nsr))
        };
        let refs = reference_of(o.cell.seed);
        rows.push(NoiseRow {
            model: rec.model,
            seed: rec.seed,
            mse: rec.mse,
            mae: rec.mae,
            r2: rec.r2,
            relative_mse: refs.map(|(m, _)| rec.mse / m),
            nsr: r.nsr,
            zero_signal_attribution: r.zero_signal_attribution,
            topk_accuracy: r.topk_accuracy,
            k,
            mir: r.mir,
            suppression: refs.map(|(_, n)| r.nsr / n),
        });
    }
    Ok(rows)
}

fn attribution(cfg: &ExperimentConfig, outcomes: &[CellOutcome]) -> Result<Vec<AttributionRow>> {
    let p = &cfg.params.attribution;
    let mut rows = Vec::new();
    for o in outcomes {
        let a = o
            .attribution
            .as_ref()
            .ok_or_else(|| crate::protocols::missing("attribution", &o.cell))?;
        let index = |name: &str| {
            a.features
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown feature {name:?}")))
        };
        let domain = if p.domain_ranking.is_empty() {
            None
        } else {
            // reference scores: d for the first listed feature down to 1,
            // zero for features the ranking leaves out
            let mut reference = vec![0.0; a.features.len()];
            let n = p.domain_ranking.len();
            for (pos, name) in p.domain_ranking.iter().enumerate() {
                reference[index(name)?] = (n - pos) as f64;
            }
            let pairs = p
                .key_pairs
                .iter()
                .map(|(x, y)| Ok((index(x)?, index(y)?)))
                .collect::<Result<Vec<_>>>()?;
            Some(domain_scores(&a.estimate.mean, &reference, &pairs)?)
        };
        let order = cfnn::metrics::ranking(&a.estimate.mean);
        rows.push(AttributionRow {
            model: o.cell.tag.clone(),
            seed: o.cell.seed,
            features: a.features.clone(),
            importance: a.estimate.mean.clone(),
            ranking: order.iter().map(|&j| a.features[j].clone()).collect(),
            domain,
        });
    }
    Ok(rows)
}
