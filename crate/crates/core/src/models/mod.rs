//! The continued-fraction model family and the MLP baseline.
//!
//! Every model is a pure forward function over a flat [`ParamStore`],
//! written against [`Graph`] so the same code serves inference and
//! training. Architecture-specific pieces live in the submodules.

pub mod boost;
pub mod cfnn;
mod fit;
pub mod hybrid;
pub mod mlp;
pub mod moe;
mod params;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ValueGraph};
use crate::datagen::Samples;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use fit::{fit, FitOptions, FitReport};
pub use params::{ParamBlock, ParamStore};

use self::cfnn::CfnnLayout;
use self::hybrid::HybridLayout;
use self::mlp::MlpLayout;
use self::moe::MoeLayout;
use params::LayoutBuilder;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Cfnn,
    Boost,
    Moe,
    Hybrid,
    Mlp,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Cfnn,
        Family::Boost,
        Family::Moe,
        Family::Hybrid,
        Family::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Cfnn => "cfnn",
            Family::Boost => "boost",
            Family::Moe => "moe",
            Family::Hybrid => "hybrid",
            Family::Mlp => "mlp",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::config(format!("unknown model family {s:?}")))
    }
}

/// Hidden-layer nonlinearity of the MLP baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

/// Architecture hyperparameters.
///
/// `depth` is the continued-fraction depth for `cfnn`, the per-stage depth
/// for `boost` and the expert recursion depth for `moe`. `units` counts
/// hybrid rational units, boosting stages or MoE experts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub family: Family,
    pub input_dim: usize,
    pub depth: usize,
    pub poly_degree: usize,
    pub units: usize,
    pub gamma: f64,
    pub shrinkage: f64,
    pub eps_den: f64,
    pub eps_gate: f64,
    /// Stabilizer added to the next-level output in the expert recursion.
    pub eps_expert: f64,
    /// Width of the tanh latent projection inside each MoE expert.
    pub latent_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            family: Family::Cfnn,
            input_dim: 1,
            depth: 1,
            poly_degree: 1,
            units: 1,
            gamma: 1.0,
            shrinkage: 1.0,
            eps_den: 1e-6,
            eps_gate: 1e-6,
            eps_expert: 1e-6,
            latent_dim: 4,
            hidden_widths: vec![],
            activation: Activation::Relu,
        }
    }
}

impl ModelConfig {
    pub fn cfnn(input_dim: usize, depth: usize, poly_degree: usize) -> Self {
        ModelConfig {
            family: Family::Cfnn,
            input_dim,
            depth,
            poly_degree,
            ..Default::default()
        }
    }

    pub fn boost(
        input_dim: usize,
        stages: usize,
        depth: usize,
        poly_degree: usize,
        shrinkage: f64,
    ) -> Self {
        ModelConfig {
            family: Family::Boost,
            input_dim,
            depth,
            poly_degree,
            units: stages,
            shrinkage,
            ..Default::default()
        }
    }

    pub fn moe(
        input_dim: usize,
        experts: usize,
        depth: usize,
        poly_degree: usize,
        latent_dim: usize,
    ) -> Self {
        ModelConfig {
            family: Family::Moe,
            input_dim,
            depth,
            poly_degree,
            units: experts,
            latent_dim,
            ..Default::default()
        }
    }

    pub fn hybrid(input_dim: usize, units: usize, poly_degree: usize) -> Self {
        ModelConfig {
            family: Family::Hybrid,
            input_dim,
            poly_degree,
            units,
            ..Default::default()
        }
    }

    pub fn mlp(input_dim: usize, hidden_widths: Vec<usize>, activation: Activation) -> Self {
        ModelConfig {
            family: Family::Mlp,
            input_dim,
            hidden_widths,
            activation,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("{}: {m}", self.family)));
        if self.input_dim == 0 {
            return bad("input_dim must be positive");
        }
        match self.family {
            Family::Cfnn | Family::Boost | Family::Hybrid | Family::Moe
                if self.poly_degree == 0 =>
            {
                return bad("poly_degree must be positive")
            }
            Family::Boost | Family::Moe if self.units == 0 => return bad("units must be positive"),
            Family::Moe if self.depth == 0 => return bad("expert depth must be at least 1"),
            Family::Moe if self.latent_dim == 0 => return bad("latent_dim must be positive"),
            Family::Mlp if self.hidden_widths.contains(&0) => {
                return bad("hidden widths must be positive")
            }
            _ => {}
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be non-negative");
        }
        if self.family == Family::Boost && !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return bad("shrinkage must lie in (0, 1]");
        }
        for (name, v) in [
            ("eps_den", self.eps_den),
            ("eps_gate", self.eps_gate),
            ("eps_expert", self.eps_expert),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    /// Configuration of one boosting stage.
    pub fn stage_config(&self) -> ModelConfig {
        ModelConfig {
            family: Family::Cfnn,
            units: 1,
            ..self.clone()
        }
    }
}

/// Exact number of learnable parameters allocated for `config`.
pub fn param_count(config: &ModelConfig) -> Result<usize> {
    config.validate()?;
    let (d, l, p, n) = (
        config.input_dim,
        config.depth,
        config.poly_degree,
        config.units,
    );
    Ok(match config.family {
        // a_0..a_L and b_0..b_{L-1}; each term is a projection plus p+1 coefficients
        Family::Cfnn => (2 * l + 1) * (d + 1 + p + 1),
        Family::Boost => n * (2 * l + 1) * (d + 1 + p + 1),
        Family::Hybrid => (d + 1) + n * ((d + 1) + 2 * (p + 1)),
        Family::Mlp => {
            let mut prev = d;
            let mut total = 0;
            for &w in config.hidden_widths.iter().chain(std::iter::once(&1)) {
                total += (prev + 1) * w;
                prev = w;
            }
            total
        }
        Family::Moe => n * moe::expert_param_count(config),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Layout {
    Cfnn(CfnnLayout),
    Boost(Vec<CfnnLayout>),
    Moe(MoeLayout),
    Hybrid(HybridLayout),
    Mlp(MlpLayout),
}

impl Layout {
    fn build(config: &ModelConfig) -> (Layout, Vec<ParamBlock>) {
        let mut b = LayoutBuilder::default();
        let layout = match config.family {
            Family::Cfnn => Layout::Cfnn(CfnnLayout::build(&mut b, "", config)),
            Family::Boost => Layout::Boost(
                (0..config.units)
                    .map(|s| CfnnLayout::build(&mut b, &format!("stage{s}."), config))
                    .collect(),
            ),
            Family::Moe => Layout::Moe(MoeLayout::build(&mut b, config)),
            Family::Hybrid => Layout::Hybrid(HybridLayout::build(&mut b, config)),
            Family::Mlp => Layout::Mlp(MlpLayout::build(&mut b, config)),
        };
        (layout, b.finish())
    }
}

/// Non-parameter state carried by the ensemble families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelState {
    Plain,
    /// Constant initial predictor and the number of fitted stages.
    Boost {
        f0: f64,
        stages: usize,
    },
    /// Experts `0..active` take part in the forward pass.
    Moe {
        active: usize,
        locked: bool,
    },
}

/// Random draws used by the initializers.
pub(crate) struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn normal<T: Scalar>(&mut self, out: &mut [T], std: f64) {
        let dist = Normal::new(0.0, std).expect("positive std");
        for v in out {
            *v = T::of(dist.sample(&mut self.rng));
        }
    }
}

pub(crate) const COEF_STD: f64 = 0.1;

pub(crate) fn projection_std(input_dim: usize) -> f64 {
    (1.0 / input_dim as f64).sqrt()
}

/// A model instance: configuration, parameters and ensemble state.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    layout: Layout,
    params: ParamStore<T>,
    state: ModelState,
}

impl<T: Scalar> Model<T> {
    /// Allocates and randomly initializes a model. MoE centers and widths
    /// are drawn from `train` when given.
    pub fn init(config: ModelConfig, seed: u64, train: Option<&Samples<T>>) -> Result<Self> {
        let mut model = Model::zeroed(config)?;
        let mut init = Init::new(seed);
        match &model.layout {
            Layout::Cfnn(l) => l.init(&mut init, &mut model.params, &model.config),
            Layout::Boost(stages) => {
                for l in stages {
                    l.init(&mut init, &mut model.params, &model.config);
                }
            }
            Layout::Hybrid(l) => l.init(&mut init, &mut model.params, &model.config),
            Layout::Mlp(l) => l.init(&mut init, &mut model.params, &model.config),
            Layout::Moe(l) => {
                let width = moe::initial_width(train, &mut init);
                for k in 0..model.config.units {
                    l.init_expert(
                        k,
                        &mut init,
                        &mut model.params,
                        &model.config,
                        train,
                        None,
                        width,
                    );
                }
            }
        }
        if let (ModelState::Boost { f0, .. }, Some(train)) = (&mut model.state, train) {
            *f0 = train.y_mean().f64();
        }
        Ok(model)
    }

    /// All-zero parameters; useful for hand-constructed fixtures.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (layout, blocks) = Layout::build(&config);
        let params = ParamStore::zeros(blocks);
        debug_assert_eq!(params.len(), param_count(&config)?);
        let state = match config.family {
            Family::Boost => ModelState::Boost { f0: 0.0, stages: 0 },
            Family::Moe => ModelState::Moe {
                active: 1,
                locked: false,
            },
            _ => ModelState::Plain,
        };
        Ok(Model {
            config,
            layout,
            params,
            state,
        })
    }

    /// Reassembles a model from saved parts; the name table must match the
    /// layout implied by `config`.
    pub fn from_parts(
        config: ModelConfig,
        state: ModelState,
        blocks: Vec<ParamBlock>,
        values: Vec<T>,
    ) -> Result<Self> {
        let mut model = Model::zeroed(config)?;
        if model.params.blocks() != blocks.as_slice() {
            return Err(Error::Format(
                "parameter name table does not match configuration".into(),
            ));
        }
        model.params = ParamStore::from_parts(blocks, values)
            .ok_or_else(|| Error::Format("parameter vector length".into()))?;
        let state_ok = matches!(
            (&model.state, &state),
            (ModelState::Plain, ModelState::Plain)
                | (ModelState::Boost { .. }, ModelState::Boost { .. })
                | (ModelState::Moe { .. }, ModelState::Moe { .. })
        );
        if !state_ok {
            return Err(Error::Format("model state does not match family".into()));
        }
        model.state = state;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn family(&self) -> Family {
        self.config.family
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub(crate) fn state_mut(&mut self) -> &mut ModelState {
        &mut self.state
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Parameters that currently influence the output: fitted boosting
    /// stages and active experts only.
    pub fn effective_param_count(&self) -> usize {
        match self.state {
            ModelState::Boost { stages, .. } => {
                stages * self.config.stage_config().param_count_unchecked()
            }
            ModelState::Moe { active, .. } => active * moe::expert_param_count(&self.config),
            ModelState::Plain => self.param_count(),
        }
    }

    /// Scalar output for one input row.
    pub fn forward<G: Graph<T>>(&self, g: &mut G, x: &[T]) -> Result<G::Var> {
        if x.len() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.config.input_dim
            )));
        }
        let xs = g.inputs(x)?;
        match &self.layout {
            Layout::Cfnn(l) => l.forward(g, &xs, T::of(self.config.eps_den)),
            Layout::Boost(stages) => boost::forward(g, &xs, stages, &self.state, &self.config),
            Layout::Moe(l) => l.forward(g, &xs, &self.state, &self.config),
            Layout::Hybrid(l) => l.forward(g, &xs, T::of(self.config.gamma)),
            Layout::Mlp(l) => l.forward(g, &xs, self.config.activation),
        }
    }

    pub fn predict(&self, x: &[T]) -> Result<T> {
        let mut g = ValueGraph::new(self.params.values());
        self.forward(&mut g, x)
    }

    pub fn predict_all(&self, data: &Samples<T>) -> Result<Vec<T>> {
        (0..data.len())
            .map(|i| {
                self.predict(data.row(i)).map_err(|e| Error::Sample {
                    index: i,
                    source: Box::new(e),
                })
            })
            .collect()
    }

    /// Mean squared error over `data`.
    pub fn mse(&self, data: &Samples<T>) -> Result<T> {
        let preds = self.predict_all(data)?;
        let n = T::of(data.len() as f64);
        Ok(preds
            .iter()
            .zip(&data.y)
            .map(|(&p, &y)| (p - y) * (p - y))
            .sum::<T>()
            / n)
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }
}

impl ModelConfig {
    pub(crate) fn param_count_unchecked(&self) -> usize {
        param_count(self).unwrap_or(0)
    }
}

/// Anything that maps an input row to a scalar prediction.
pub trait Predictor<T> {
    fn input_dim(&self) -> usize;
    fn predict(&self, x: &[T]) -> Result<T>;
}

impl<T: Scalar> Predictor<T> for Model<T> {
    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn predict(&self, x: &[T]) -> Result<T> {
        Model::predict(self, x)
    }
}

/// Adapts a closure into a [`Predictor`].
pub struct FnPredictor<F> {
    pub dim: usize,
    pub f: F,
}

impl<T, F: Fn(&[T]) -> T> Predictor<T> for FnPredictor<F> {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &[T]) -> Result<T> {
        Ok((self.f)(x))
    }
}
