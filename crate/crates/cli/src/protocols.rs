//! Turns a config into independent cells and runs one cell.
//!
//! A cell is one (model, target, scale, seed) combination: build the data,
//! train, evaluate on the test split, then compute whatever the protocol
//! adds on top (residual spectra or feature attribution).

use serde::Serialize;

use cfnn::attribution::{permutation_importance, sampled_shapley, ImportanceEstimate, Method};
use cfnn::datagen::{
    gen_noise_benchmark_columns, load_csv_with, noise_benchmark, sample_function_with, Dataset,
    FeatureRole, Samples,
};
use cfnn::funcs::TargetId;
use cfnn::metrics::{accuracy_metrics, average_reports, spectral_report, Accuracy, SpectralReport};
use cfnn::models::{fit, param_count, Family, FitOptions, Model, ModelConfig};
use cfnn::optim::{depth_epochs, series_stats, GradientStats, TrainConfig, TrainHistory};
use cfnn::{Error, Result};

use crate::config::{DatasetSpec, ExperimentConfig, ModelEntry, ProtocolId};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub index: usize,
    pub id: String,
    pub tag: String,
    pub group: Option<String>,
    pub target: Option<TargetId>,
    /// Depth-scaling knob value.
    pub scale: Option<usize>,
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub fit: FitOptions,
}

impl Cell {
    /// Model name used in plot files: the tag, qualified by group and target
    /// when the run has more than one of them.
    pub fn label(&self, many_groups: bool, many_targets: bool) -> String {
        let mut s = self.tag.clone();
        if let (true, Some(g)) = (many_groups, &self.group) {
            s = format!("{s}#{g}");
        }
        if let (true, Some(t)) = (many_targets, self.target) {
            s = format!("{s}@{t}");
        }
        s
    }
}

/// Enumerates every cell of `cfg` in a fixed order.
pub fn plan(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    cfg.validate()?;
    let targets: Vec<Option<TargetId>> = match cfg.dataset {
        DatasetSpec::Function { .. } => cfg.targets().into_iter().map(Some).collect(),
        _ => vec![None],
    };
    let scales: Vec<Option<usize>> = match cfg.protocol {
        ProtocolId::DepthScaling => cfg.params.depths.iter().copied().map(Some).collect(),
        _ => vec![None],
    };
    let mut cells = Vec::new();
    for &target in &targets {
        let dim = input_dim(&cfg.dataset, target)?;
        for entry in &cfg.models {
            for &scale in &scales {
                let (model, mut train) = resolve(cfg, entry, dim, scale)?;
                for &seed in &cfg.seeds {
                    train.seed = seed;
                    let index = cells.len();
                    let mut id = format!("{index:04}_{}", entry.tag);
                    if let Some(g) = &entry.group {
                        id = format!("{id}_{g}");
                    }
                    if let Some(t) = target {
                        id = format!("{id}_{t}");
                    }
                    if let Some(l) = scale {
                        id = format!("{id}_L{l}");
                    }
                    id = format!("{id}_s{seed}");
                    cells.push(Cell {
                        index,
                        id: sanitize(&id),
                        tag: entry.tag.clone(),
                        group: entry.group.clone(),
                        target,
                        scale,
                        seed,
                        model: model.clone(),
                        train: train.clone(),
                        fit: entry.fit.clone().unwrap_or_else(|| cfg.fit.clone()),
                    });
                }
            }
        }
    }
    Ok(cells)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "_-.".contains(c) {
                c
            } else {
                '-'
            }
        })
        .collect()
}

fn resolve(
    cfg: &ExperimentConfig,
    entry: &ModelEntry,
    dim: usize,
    scale: Option<usize>,
) -> Result<(ModelConfig, TrainConfig)> {
    let mut model = ModelConfig {
        input_dim: dim,
        ..entry.config.clone()
    };
    let mut train = entry.train.clone().unwrap_or_else(|| cfg.train.clone());
    if let Some(l) = scale {
        model = apply_scale(&model, l);
        train.epochs = depth_epochs(cfg.params.base_epochs, l);
    }
    let budget = match &entry.budget_from {
        Some(src) => {
            let source = cfg
                .models
                .iter()
                .find(|m| &m.tag == src && m.group == entry.group)
                .expect("validated");
            Some(param_count(&resolve(cfg, source, dim, scale)?.0)?)
        }
        None => entry.budget,
    };
    if let Some(budget) = budget {
        model = size_to_budget(&model, budget)?;
    }
    model.validate()?;
    Ok((model, train))
}

/// Sets the depth-scaling knob: continued-fraction depth, hybrid unit
/// count, or the number of MLP hidden layers.
pub fn apply_scale(config: &ModelConfig, l: usize) -> ModelConfig {
    let mut c = config.clone();
    match c.family {
        Family::Cfnn | Family::Boost | Family::Moe => c.depth = l,
        Family::Hybrid => c.units = l,
        Family::Mlp => {
            let w = c.hidden_widths.first().copied().unwrap_or(8);
            c.hidden_widths = vec![w; l];
        }
    }
    c
}

/// Picks the unit count (MLP: common hidden width) whose parameter count
/// is closest to `budget`, preferring the smaller model on ties.
pub fn size_to_budget(config: &ModelConfig, budget: usize) -> Result<ModelConfig> {
    let with = |k: usize| {
        let mut c = config.clone();
        match c.family {
            Family::Mlp => {
                let layers = c.hidden_widths.len().max(1);
                c.hidden_widths = vec![k; layers];
            }
            _ => c.units = k,
        }
        c
    };
    let mut best: Option<(usize, ModelConfig)> = None;
    for k in 1.. {
        let c = with(k);
        let n = param_count(&c)?;
        let gap = n.abs_diff(budget);
        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
            best = Some((gap, c));
        }
        if n >= budget {
            break;
        }
    }
    Ok(best.expect("loop runs at least once").1)
}

fn input_dim(spec: &DatasetSpec, target: Option<TargetId>) -> Result<usize> {
    match spec {
        DatasetSpec::Function { .. } => {
            Ok(target.expect("function data has a target").target().arity())
        }
        DatasetSpec::NoiseBenchmark { noise, .. } => {
            let columns = match *noise {
                cfnn::datagen::NoiseSpec::Ratio(a) => cfnn::datagen::noise_columns_for(a)?,
                cfnn::datagen::NoiseSpec::Columns(c) => c,
            };
            Ok(7 + columns)
        }
        DatasetSpec::Csv {
            path,
            options,
            proportions,
            ..
        } => Ok(load_csv_with(path, options, *proportions)?.dim),
    }
}

pub fn build_dataset(
    spec: &DatasetSpec,
    target: Option<TargetId>,
    run_seed: u64,
) -> Result<Dataset<f64>> {
    match spec {
        DatasetSpec::Function {
            n,
            seed,
            proportions,
            ..
        } => {
            let t = target.expect("function data has a target").target();
            sample_function_with(&t, *n, seed.unwrap_or(run_seed), *proportions)
        }
        DatasetSpec::NoiseBenchmark {
            n,
            noise,
            obs_sigma,
            seed,
            proportions,
        } => {
            let seed = seed.unwrap_or(run_seed);
            if *proportions == cfnn::datagen::DEFAULT_PROPORTIONS {
                if let cfnn::datagen::NoiseSpec::Columns(c) = noise {
                    return gen_noise_benchmark_columns(*n, *c, *obs_sigma, seed);
                }
            }
            noise_benchmark(*n, *noise, *obs_sigma, seed, *proportions)
        }
        DatasetSpec::Csv {
            path,
            options,
            proportions,
            split_per_seed,
        } => {
            let mut options = options.clone();
            if *split_per_seed {
                options.split_seed = run_seed;
            }
            load_csv_with(path, &options, *proportions)
        }
    }
}

/// Feature attribution of one trained model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Attribution {
    pub estimate: ImportanceEstimate,
    pub features: Vec<String>,
    pub roles: Vec<FeatureRole>,
}

/// Everything one cell produces.
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub cell: Cell,
    pub model: Model<f64>,
    pub histories: Vec<TrainHistory>,
    pub stages_accepted: Vec<bool>,
    pub diverged: bool,
    /// `None` when the trained model could not be evaluated on every test row.
    pub accuracy: Option<Accuracy>,
    pub grad: GradientStats,
    pub spectral: Option<SpectralReport>,
    pub attribution: Option<Attribution>,
}

pub fn run_cell(cfg: &ExperimentConfig, cell: &Cell) -> Result<CellOutcome> {
    let data = build_dataset(&cfg.dataset, cell.target, cell.seed)?;
    let (train, val, test) = (data.train(), data.val(), data.test());
    let mut model = Model::init(cell.model.clone(), cell.seed, Some(&train))?;
    let val = (!val.is_empty()).then_some(&val);
    let report = fit(&mut model, &train, val, &cell.train, &cell.fit)?;
    let accuracy = match model.predict_all(&test) {
        Ok(pred) => Some(accuracy_metrics(&pred, &test.y)?),
        Err(e) => {
            log::warn!("{}: test evaluation failed: {e}", cell.id);
            None
        }
    };
    let mut grad = series_stats(&report.grad_norms());
    grad.anomalies = report.anomalies();
    let spectral = match (cfg.protocol, cell.target) {
        (ProtocolId::Spectral, Some(t)) => Some(slice_spectrum(&model, t, cfg)?),
        _ => None,
    };
    let attribution = match cfg.protocol {
        ProtocolId::Noise | ProtocolId::Attribution => {
            Some(attribute(&model, &train, &test, &data, cfg, cell.seed)?)
        }
        _ => None,
    };
    Ok(CellOutcome {
        cell: cell.clone(),
        model,
        histories: report.histories,
        stages_accepted: report.stages_accepted,
        diverged: report.diverged,
        accuracy,
        grad,
        spectral,
        attribution,
    })
}

/// Residual spectrum averaged over 1D sweeps of coordinate 0, one sweep
/// per anchor of the remaining coordinates.
pub fn slice_spectrum(
    model: &Model<f64>,
    target: TargetId,
    cfg: &ExperimentConfig,
) -> Result<SpectralReport> {
    let t = target.target();
    let (lo, hi) = t.domain[0];
    let n = cfg.params.slice_points;
    let mut reports = Vec::with_capacity(cfg.params.slice_anchors.len());
    for anchor in &cfg.params.slice_anchors {
        let mut truth = Vec::with_capacity(n);
        let mut resid = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = Vec::with_capacity(anchor.len() + 1);
            x.push(lo + (hi - lo) * i as f64 / (n - 1) as f64);
            x.extend_from_slice(anchor);
            let y = t.eval(&x)?;
            truth.push(y);
            resid.push(model.predict(&x)? - y);
        }
        reports.push(spectral_report(&resid, &truth)?);
    }
    average_reports(&reports)
}

fn head(s: &Samples<f64>, rows: usize) -> Result<Samples<f64>> {
    let k = rows.min(s.len());
    let x = (0..k).flat_map(|i| s.row(i).iter().copied()).collect();
    Samples::new(x, s.y[..k].to_vec(), s.dim())
}

fn attribute(
    model: &Model<f64>,
    train: &Samples<f64>,
    test: &Samples<f64>,
    data: &Dataset<f64>,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Attribution> {
    let p = &cfg.params.attribution;
    let estimate = match p.method {
        Method::Permutation => permutation_importance(model, test, p.budget, seed)?,
        Method::SampledShapley => {
            sampled_shapley(model, train, &head(test, p.explain_rows)?, p.budget, seed)?.estimate
        }
        Method::ExactShapley => {
            let bg = cfnn::attribution::background_mean(train);
            let explain = head(test, p.explain_rows)?;
            let d = explain.dim();
            let mut sum = vec![0.0; d];
            let mut sq = vec![0.0; d];
            for i in 0..explain.len() {
                let phi = cfnn::attribution::exact_shapley_smalld(model, &bg, explain.row(i))?;
                for j in 0..d {
                    sum[j] += phi[j].abs();
                    sq[j] += phi[j] * phi[j];
                }
            }
            let n = explain.len() as f64;
            let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
            let std = sq
                .iter()
                .zip(&mean)
                .map(|(q, m)| (q / n - m * m).max(0.0).sqrt())
                .collect();
            ImportanceEstimate {
                mean,
                std,
                method: Method::ExactShapley,
                budget: 0,
                seed,
            }
        }
    };
    Ok(Attribution {
        estimate,
        features: data.names.clone(),
        roles: data.roles.clone(),
    })
}

/// Fails with the config error the runner reports when a protocol needs
/// something a cell did not produce.
pub(crate) fn missing(what: &str, cell: &Cell) -> Error {
    Error::InvalidConfig(format!("cell {} produced no {what}", cell.id))
}
