//! Experiment configuration files.
//!
//! A config is a single JSON document. Grids are explicit lists so every
//! run can be read off the file; see `configs/` for one file per protocol.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cfnn::attribution::Method;
use cfnn::datagen::{CsvOptions, NoiseSpec, DEFAULT_PROPORTIONS};
use cfnn::funcs::TargetId;
use cfnn::models::{FitOptions, ModelConfig};
use cfnn::optim::TrainConfig;
use cfnn::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolId {
    Stability,
    DepthScaling,
    LeadGrid,
    Pareto,
    Spectral,
    Noise,
    Attribution,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 7] = [
        ProtocolId::Stability,
        ProtocolId::DepthScaling,
        ProtocolId::LeadGrid,
        ProtocolId::Pareto,
        ProtocolId::Spectral,
        ProtocolId::Noise,
        ProtocolId::Attribution,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolId::Stability => "stability",
            ProtocolId::DepthScaling => "depth_scaling",
            ProtocolId::LeadGrid => "lead_grid",
            ProtocolId::Pareto => "pareto",
            ProtocolId::Spectral => "spectral",
            ProtocolId::Noise => "noise",
            ProtocolId::Attribution => "attribution",
        }
    }

    /// Targets used when the config lists none.
    pub fn default_targets(self) -> Vec<TargetId> {
        match self {
            ProtocolId::Stability => vec![TargetId::ExpSin3pi, TargetId::HighfreqGauss],
            ProtocolId::DepthScaling => vec![TargetId::ExpSum3],
            ProtocolId::LeadGrid => TargetId::LEAD_SET.to_vec(),
            ProtocolId::Pareto => TargetId::SPECIAL_SET.to_vec(),
            ProtocolId::Spectral => vec![TargetId::Ratio3],
            ProtocolId::Noise | ProtocolId::Attribution => vec![],
        }
    }
}

impl std::str::FromStr for ProtocolId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProtocolId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown protocol {s:?}")))
    }
}

/// Where the data comes from. `seed` defaults to the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Uniform samples of a target function; `target` is filled from the
    /// protocol's target list when absent.
    Function {
        #[serde(default)]
        target: Option<TargetId>,
        n: usize,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_proportions")]
        proportions: [f64; 3],
    },
    NoiseBenchmark {
        n: usize,
        noise: NoiseSpec,
        #[serde(default = "default_obs_sigma")]
        obs_sigma: f64,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_proportions")]
        proportions: [f64; 3],
    },
    Csv {
        path: PathBuf,
        options: CsvOptions,
        #[serde(default = "default_proportions")]
        proportions: [f64; 3],
        /// Draw the split from the run seed instead of `options.split_seed`.
        #[serde(default)]
        split_per_seed: bool,
    },
}

fn default_proportions() -> [f64; 3] {
    DEFAULT_PROPORTIONS
}

fn default_obs_sigma() -> f64 {
    0.05
}

/// One model of the experiment. `input_dim` is overwritten from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub tag: String,
    /// Lead-grid combination this entry belongs to.
    #[serde(default)]
    pub group: Option<String>,
    pub config: ModelConfig,
    /// Sizes the model to the unit count (hidden width for the MLP) whose
    /// parameter count is closest to this.
    #[serde(default)]
    pub budget: Option<usize>,
    /// Sizes the model to the parameter count of the entry with this tag in
    /// the same group.
    #[serde(default)]
    pub budget_from: Option<String>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub fit: Option<FitOptions>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributionParams {
    pub method: Method,
    /// Permutations per row for Shapley, repeats for permutation importance.
    pub budget: usize,
    /// Leading test rows explained by Shapley methods.
    pub explain_rows: usize,
    pub top_k: usize,
    /// Model whose NSR normalizes the suppression score.
    pub reference_model: Option<String>,
    /// Feature names from most to least important, per domain knowledge.
    pub domain_ranking: Vec<String>,
    /// `(a, b)` feature names with `a` expected to outrank `b`.
    pub key_pairs: Vec<(String, String)>,
}

impl Default for AttributionParams {
    fn default() -> Self {
        AttributionParams {
            method: Method::SampledShapley,
            budget: 32,
            explain_rows: 200,
            top_k: 5,
            reference_model: None,
            domain_ranking: Vec::new(),
            key_pairs: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolParams {
    pub targets: Vec<TargetId>,
    /// Scaling knob values of the depth-scaling protocol: depth for the
    /// continued-fraction families, units for the hybrid, hidden layers
    /// for the MLP.
    pub depths: Vec<usize>,
    /// Epochs at depth 2 under the depth-proportional schedule.
    pub base_epochs: usize,
    pub slice_points: usize,
    /// Values of coordinates `1..d` for each 1D slice along coordinate 0.
    pub slice_anchors: Vec<Vec<f64>>,
    pub mse_threshold: f64,
    pub attribution: AttributionParams,
    pub save_models: bool,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        let mut anchors = Vec::new();
        for x2 in [0.5, 1.25, 2.0] {
            for x3 in [1.0, 2.0, 3.0] {
                anchors.push(vec![x2, x3]);
            }
        }
        ProtocolParams {
            targets: Vec::new(),
            depths: vec![2, 4, 6, 8, 10, 12, 15],
            base_epochs: 500,
            slice_points: 512,
            slice_anchors: anchors,
            mse_threshold: 0.01,
            attribution: AttributionParams::default(),
            save_models: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub protocol: ProtocolId,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub params: ProtocolParams,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config; a relative CSV path is resolved against the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let DatasetSpec::Csv { path: csv, .. } = &mut cfg.dataset {
            if csv.is_relative() {
                if let Some(dir) = path.parent() {
                    *csv = dir.join(&*csv);
                }
            }
        }
        Ok(cfg)
    }

    pub fn targets(&self) -> Vec<TargetId> {
        if let DatasetSpec::Function {
            target: Some(t), ..
        } = self.dataset
        {
            return vec![t];
        }
        if self.params.targets.is_empty() {
            self.protocol.default_targets()
        } else {
            self.params.targets.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.models.is_empty() {
            return bad("models must not be empty".into());
        }
        let mut tags: Vec<(&str, Option<&str>)> = Vec::new();
        for m in &self.models {
            let key = (m.tag.as_str(), m.group.as_deref());
            if m.tag.is_empty() || m.tag.contains(['/', '\\', ',']) {
                return bad(format!(
                    "model tag {:?} must be non-empty without '/', '\\' or ','",
                    m.tag
                ));
            }
            if tags.contains(&key) {
                return bad(format!(
                    "duplicate model tag {:?} in group {:?}",
                    m.tag, m.group
                ));
            }
            tags.push(key);
            if m.budget.is_some() && m.budget_from.is_some() {
                return bad(format!(
                    "model {:?} sets both budget and budget_from",
                    m.tag
                ));
            }
            if let Some(src) = &m.budget_from {
                let found = self
                    .models
                    .iter()
                    .find(|o| &o.tag == src && o.group == m.group);
                match found {
                    None => {
                        return bad(format!(
                            "budget_from {src:?} names no model in group {:?}",
                            m.group
                        ))
                    }
                    Some(o) if o.budget_from.is_some() => {
                        return bad(format!("budget_from {src:?} is itself derived"))
                    }
                    _ => {}
                }
            }
            m.config.validate()?;
            m.train.as_ref().unwrap_or(&self.train).validate()?;
        }
        self.train.validate()?;
        let function_data = matches!(self.dataset, DatasetSpec::Function { .. });
        match self.protocol {
            ProtocolId::Stability
            | ProtocolId::DepthScaling
            | ProtocolId::LeadGrid
            | ProtocolId::Pareto
            | ProtocolId::Spectral => {
                if !function_data {
                    return bad(format!(
                        "protocol {} needs a function dataset",
                        self.protocol.name()
                    ));
                }
                if self.targets().is_empty() {
                    return bad("no targets".into());
                }
            }
            ProtocolId::Noise => {
                if !matches!(self.dataset, DatasetSpec::NoiseBenchmark { .. }) {
                    return bad("protocol noise needs a noise_benchmark dataset".into());
                }
            }
            ProtocolId::Attribution => {}
        }
        match self.protocol {
            ProtocolId::DepthScaling
                if self.params.depths.is_empty() || self.params.depths.contains(&0) =>
            {
                bad("depths must be a non-empty list of positive integers".into())
            }
            ProtocolId::LeadGrid => {
                if !self
                    .models
                    .iter()
                    .any(|m| m.config.family == cfnn::models::Family::Mlp)
                {
                    return bad("lead_grid needs an mlp baseline in every group".into());
                }
                for g in self.groups() {
                    let in_group = |m: &&ModelEntry| m.group.as_deref() == g.as_deref();
                    let mlps = self
                        .models
                        .iter()
                        .filter(in_group)
                        .filter(|m| m.config.family == cfnn::models::Family::Mlp)
                        .count();
                    if mlps != 1 {
                        return bad(format!(
                            "group {g:?} needs exactly one mlp entry, found {mlps}"
                        ));
                    }
                }
                Ok(())
            }
            ProtocolId::Spectral => {
                let arity = self
                    .targets()
                    .iter()
                    .map(|t| t.target().arity())
                    .max()
                    .unwrap_or(1);
                if !self.params.slice_points.is_power_of_two() || self.params.slice_points < 2 {
                    return bad("slice_points must be a power of two".into());
                }
                if self.params.slice_anchors.is_empty()
                    || self
                        .params
                        .slice_anchors
                        .iter()
                        .any(|a| a.len() + 1 != arity)
                {
                    return bad(format!("slice anchors must each hold {} values", arity - 1));
                }
                Ok(())
            }
            ProtocolId::Pareto
                if self.params.mse_threshold.is_nan() || self.params.mse_threshold <= 0.0 =>
            {
                bad("mse_threshold must be positive".into())
            }
            _ => Ok(()),
        }
    }

    /// Distinct groups in first-appearance order.
    pub fn groups(&self) -> Vec<Option<String>> {
        let mut out: Vec<Option<String>> = Vec::new();
        for m in &self.models {
            if !out.contains(&m.group) {
                out.push(m.group.clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "protocol": "stability",
        "seeds": [42],
        "output_dir": "out",
        "dataset": {"kind": "function", "n": 200},
        "models": [{"tag": "hybrid", "config": {"family": "hybrid", "units": 3, "poly_degree": 3}}]
    }"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(
            c.targets(),
            vec![TargetId::ExpSin3pi, TargetId::HighfreqGauss]
        );
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.params.slice_anchors.len(), 9);
        let DatasetSpec::Function {
            proportions, seed, ..
        } = c.dataset
        else {
            panic!()
        };
        assert_eq!((proportions, seed), (DEFAULT_PROPORTIONS, None));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.seeds.clear();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.models.push(c.models[0].clone());
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.protocol = ProtocolId::LeadGrid;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        c.protocol = ProtocolId::Noise;
        assert!(c.validate().is_err());
        assert!("nonsense".parse::<ProtocolId>().is_err());
        assert!(ExperimentConfig::from_json(&MINIMAL.replace("stability", "nonsense")).is_err());
    }

    #[test]
    fn protocol_names_round_trip() {
        for p in ProtocolId::ALL {
            assert_eq!(p.name().parse::<ProtocolId>().unwrap(), p);
            let json = serde_json::to_string(&p).unwrap();
            assert_eq!(json, format!("\"{}\"", p.name()));
        }
    }
}
