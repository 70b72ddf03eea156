//! Mixture of continued-fraction experts under an anisotropic RBF gate.
//!
//! Expert `k` maps `x` to a latent `z = tanh(W x + b)`, reduces it to power
//! means `m_j = mean_h z_h^j`, and feeds the polynomials
//! `P_i = sum_j c_{i,j} m_j` through a backward recursion
//! `O_D = softplus(P_D) + 1`, `O_i = P_i + softplus(beta_i) / (O_{i+1} + eps)`.
//! The gate weight is `g_k = exp(-sum_j lambda_kj (x_j - mu_kj)^2 / (2 sigma_k^2 + eps))`
//! normalized over the active experts.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ValueGraph};
use crate::datagen::Samples;
use crate::error::{Error, Result};
use crate::optim::{self, TrainConfig, TrainHistory};
use crate::scalar::{softplus_inv, Scalar};

use super::params::LayoutBuilder;
use super::{Init, Layout, Model, ModelConfig, ModelState, ParamStore, COEF_STD};

/// Learnable parameters of one expert including its gate.
pub fn expert_param_count(config: &ModelConfig) -> usize {
    let (d, h, depth, p) = (
        config.input_dim,
        config.latent_dim,
        config.depth,
        config.poly_degree,
    );
    h * d + h + depth * (p + 1) + (depth - 1) + 2 * d + 1
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Expert {
    pub latent_w: usize,
    pub latent_b: usize,
    pub poly: usize,
    pub coupling: usize,
    pub center: usize,
    pub scale: usize,
    pub width: usize,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct MoeLayout {
    pub experts: Vec<Expert>,
    pub input_dim: usize,
    pub latent: usize,
    pub depth: usize,
    pub degree: usize,
}

impl MoeLayout {
    pub fn build(b: &mut LayoutBuilder, config: &ModelConfig) -> Self {
        let (d, h, depth, p) = (
            config.input_dim,
            config.latent_dim,
            config.depth,
            config.poly_degree,
        );
        let experts = (0..config.units)
            .map(|k| {
                let start = b.len();
                let latent_w = b.block(format!("expert{k}.latent.w"), h * d);
                let latent_b = b.block(format!("expert{k}.latent.b"), h);
                // row i - 1 holds the coefficients of P_i
                let poly = b.block(format!("expert{k}.p_coef"), depth * (p + 1));
                let coupling = b.block(format!("expert{k}.coupling"), depth - 1);
                let center = b.block(format!("expert{k}.center"), d);
                let scale = b.block(format!("expert{k}.scale"), d);
                let width = b.block(format!("expert{k}.width"), 1);
                Expert {
                    latent_w,
                    latent_b,
                    poly,
                    coupling,
                    center,
                    scale,
                    width,
                    start,
                    len: b.len() - start,
                }
            })
            .collect();
        MoeLayout {
            experts,
            input_dim: d,
            latent: h,
            depth,
            degree: p,
        }
    }

    /// Initializes expert `k`. The center is `center` when given, else a
    /// random training row (or a standard normal draw without data).
    #[allow(clippy::too_many_arguments)]
    pub fn init_expert<T: Scalar>(
        &self,
        k: usize,
        init: &mut Init,
        params: &mut ParamStore<T>,
        config: &ModelConfig,
        train: Option<&Samples<T>>,
        center: Option<&[T]>,
        width: f64,
    ) {
        let e = &self.experts[k];
        let (d, h) = (self.input_dim, self.latent);
        let v = params.values_mut();
        init.normal(
            &mut v[e.latent_w..e.latent_w + h * d],
            super::projection_std(config.input_dim),
        );
        v[e.latent_b..e.latent_b + h].fill(T::zero());
        init.normal(
            &mut v[e.poly..e.poly + self.depth * (self.degree + 1)],
            COEF_STD,
        );
        v[e.coupling..e.coupling + self.depth - 1].fill(T::zero());
        match (center, train) {
            (Some(c), _) => v[e.center..e.center + d].copy_from_slice(c),
            (None, Some(t)) if !t.is_empty() => {
                let i = sample(init.rng(), t.len(), 1).index(0);
                v[e.center..e.center + d].copy_from_slice(t.row(i));
            }
            _ => init.normal(&mut v[e.center..e.center + d], 1.0),
        }
        v[e.scale..e.scale + d].fill(softplus_inv(T::one()));
        v[e.width] = T::of(width);
    }

    fn expert<T: Scalar, G: Graph<T>>(
        &self,
        g: &mut G,
        xs: &[G::Var],
        e: &Expert,
        eps: T,
    ) -> Result<G::Var> {
        let (d, h, p) = (self.input_dim, self.latent, self.degree);
        let mut z = Vec::with_capacity(h);
        for r in 0..h {
            let pre = g.affine(e.latent_w + r * d, e.latent_b + r, xs)?;
            z.push(g.tanh(pre)?);
        }
        // power means m_1..m_p of the latent vector
        let inv_h = g.constant(T::one() / T::of(h as f64))?;
        let mut pw = z.clone();
        let mut means = Vec::with_capacity(p);
        for j in 1..=p {
            if j > 1 {
                for (w, &zi) in pw.iter_mut().zip(&z) {
                    *w = g.mul(*w, zi)?;
                }
            }
            let mut s = pw[0];
            for &w in &pw[1..] {
                s = g.add(s, w)?;
            }
            means.push(g.mul(s, inv_h)?);
        }
        let poly = |g: &mut G, i: usize| -> Result<G::Var> {
            let base = e.poly + (i - 1) * (p + 1);
            let mut acc = g.param(base);
            for (j, &m) in means.iter().enumerate() {
                let c = g.param(base + j + 1);
                let t = g.mul(c, m)?;
                acc = g.add(acc, t)?;
            }
            Ok(acc)
        };
        let one = g.constant(T::one())?;
        let eps = g.constant(eps)?;
        let pd = poly(g, self.depth)?;
        let sp = g.softplus(pd)?;
        let mut out = g.add(sp, one)?;
        for i in (1..self.depth).rev() {
            let pi = poly(g, i)?;
            let beta = g.param(e.coupling + i - 1);
            let num = g.softplus(beta)?;
            let den = g.add(out, eps)?;
            let q = g.div(num, den)?;
            out = g.add(pi, q)?;
        }
        Ok(out)
    }

    /// Unnormalized gate activations of the first `active` experts.
    fn gates<T: Scalar, G: Graph<T>>(
        &self,
        g: &mut G,
        xs: &[G::Var],
        active: usize,
        eps: T,
    ) -> Result<Vec<G::Var>> {
        let d = self.input_dim;
        let two = g.constant(T::of(2.0))?;
        let eps = g.constant(eps)?;
        self.experts[..active]
            .iter()
            .map(|e| {
                let mut dist: Option<G::Var> = None;
                for (j, &x) in xs.iter().enumerate().take(d) {
                    let mu = g.param(e.center + j);
                    let diff = g.sub(x, mu)?;
                    let sq = g.mul(diff, diff)?;
                    let raw = g.param(e.scale + j);
                    let lam = g.softplus(raw)?;
                    let t = g.mul(lam, sq)?;
                    dist = Some(match dist {
                        None => t,
                        Some(s) => g.add(s, t)?,
                    });
                }
                let sigma = g.param(e.width);
                let s2 = g.mul(sigma, sigma)?;
                let s2 = g.mul(two, s2)?;
                let den = g.add(s2, eps)?;
                let dist = match dist {
                    Some(v) => v,
                    None => g.constant(T::zero())?,
                };
                let q = g.div(dist, den)?;
                let zero = g.constant(T::zero())?;
                let neg = g.sub(zero, q)?;
                g.exp(neg)
            })
            .collect()
    }

    /// Normalized gate weights; uniform when every activation underflows.
    fn weights<T: Scalar, G: Graph<T>>(
        &self,
        g: &mut G,
        xs: &[G::Var],
        active: usize,
        eps: T,
    ) -> Result<Vec<G::Var>> {
        let gs = self.gates(g, xs, active, eps)?;
        if gs.iter().all(|&v| g.value(v) == T::zero()) {
            log::debug!("all {active} gate activations underflowed; using uniform weights");
            let u = g.constant(T::one() / T::of(active as f64))?;
            return Ok(vec![u; active]);
        }
        let mut total = gs[0];
        for &v in &gs[1..] {
            total = g.add(total, v)?;
        }
        gs.into_iter().map(|v| g.div(v, total)).collect()
    }

    pub fn forward<T: Scalar, G: Graph<T>>(
        &self,
        g: &mut G,
        xs: &[G::Var],
        state: &ModelState,
        config: &ModelConfig,
    ) -> Result<G::Var> {
        let active = match *state {
            ModelState::Moe { active, .. } => active.clamp(1, self.experts.len()),
            _ => self.experts.len(),
        };
        let eps_expert = T::of(config.eps_expert);
        let w = self.weights(g, xs, active, T::of(config.eps_gate))?;
        let mut y: Option<G::Var> = None;
        for (e, &wk) in self.experts[..active].iter().zip(&w) {
            let ek = self.expert(g, xs, e, eps_expert)?;
            let t = g.mul(wk, ek)?;
            y = Some(match y {
                None => t,
                Some(s) => g.add(s, t)?,
            });
        }
        Ok(y.expect("at least one active expert"))
    }
}

/// Median pairwise Euclidean distance over at most 256 random rows, or 1
/// without data.
pub(crate) fn initial_width<T: Scalar>(train: Option<&Samples<T>>, init: &mut Init) -> f64 {
    let Some(t) = train.filter(|t| t.len() >= 2) else {
        return 1.0;
    };
    let rows = sample(init.rng(), t.len(), t.len().min(256)).into_vec();
    let mut dists = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            let s: f64 = t
                .row(i)
                .iter()
                .zip(t.row(j))
                .map(|(&u, &v)| (u - v).f64().powi(2))
                .sum();
            dists.push(s.sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let med = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Loss-weighted centroid of the worst decile of rows by loss. Ties in the
/// ranking go to the lower row index; zero total loss falls back to the
/// plain mean of the selected rows.
pub fn growth_center<T: Scalar>(data: &Samples<T>, losses: &[T]) -> Vec<T> {
    assert_eq!(data.len(), losses.len());
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        losses[b]
            .partial_cmp(&losses[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let take = n.div_ceil(10).max(1);
    let worst = &order[..take];
    let total: T = worst.iter().map(|&i| losses[i]).sum();
    let uniform = !(total > T::zero()) || !total.is_finite();
    let mut c = vec![T::zero(); data.dim()];
    for &i in worst {
        let w = if uniform {
            T::one() / T::of(take as f64)
        } else {
            losses[i] / total
        };
        for (cj, &xj) in c.iter_mut().zip(data.row(i)) {
            *cj = *cj + w * xj;
        }
    }
    c
}

/// Growth schedule for [`fit_moe`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowthConfig {
    /// Joint training epochs after each growth event.
    pub grow_epochs: usize,
    /// Minimum relative validation improvement that keeps a new expert.
    pub rollback_threshold: f64,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        GrowthConfig {
            grow_epochs: 100,
            rollback_threshold: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowOutcome {
    Accepted,
    RolledBack,
    /// Growth was not attempted: no free slot or the topology is locked.
    Unavailable,
}

/// Result of a full growth run.
#[derive(Clone, Debug)]
pub struct MoeReport {
    pub histories: Vec<TrainHistory>,
    pub outcomes: Vec<GrowOutcome>,
}

impl<T: Scalar> Model<T> {
    /// Normalized gate weights of the active experts at `x`.
    pub fn gate_weights(&self, x: &[T]) -> Result<Vec<T>> {
        let Layout::Moe(l) = self.layout() else {
            return Err(Error::config("gate_weights requires a moe model"));
        };
        let ModelState::Moe { active, .. } = *self.state() else {
            unreachable!("moe models carry moe state")
        };
        let mut g = ValueGraph::new(self.params().values());
        let xs = g.inputs(x)?;
        l.weights(&mut g, &xs, active, T::of(self.config().eps_gate))
    }

    pub fn active_experts(&self) -> Option<usize> {
        match *self.state() {
            ModelState::Moe { active, .. } => Some(active),
            _ => None,
        }
    }

    /// Activates expert `k` (the first inactive one) with the given center.
    fn activate_expert(&mut self, center: &[T], width: f64, seed: u64, train: &Samples<T>) {
        let Layout::Moe(l) = self.layout().clone() else {
            unreachable!()
        };
        let ModelState::Moe { active, .. } = *self.state() else {
            unreachable!()
        };
        let config = self.config().clone();
        let mut init = Init::new(seed);
        l.init_expert(
            active,
            &mut init,
            self.params_mut(),
            &config,
            Some(train),
            Some(center),
            width,
        );
        if let ModelState::Moe { active, .. } = self.state_mut() {
            *active += 1;
        }
    }

    /// Activates one expert centered on the worst-fit training region,
    /// trains jointly and keeps it only if validation loss improves by at
    /// least `growth.rollback_threshold` (relative). Otherwise parameters
    /// are restored exactly and the topology is locked.
    pub fn moe_grow(
        &mut self,
        train: &Samples<T>,
        val: &Samples<T>,
        cfg: &TrainConfig,
        growth: &GrowthConfig,
    ) -> Result<(GrowOutcome, Option<TrainHistory>)> {
        let ModelState::Moe { active, locked } = *self.state() else {
            return Err(Error::config("moe_grow requires a moe model"));
        };
        if locked || active >= self.config().units {
            return Ok((GrowOutcome::Unavailable, None));
        }
        let checkpoint = self.params().clone();
        let before = self.mse(val)?;
        let preds = self.predict_all(train)?;
        let losses: Vec<T> = preds
            .iter()
            .zip(&train.y)
            .map(|(&p, &y)| (p - y) * (p - y))
            .collect();
        let center = growth_center(train, &losses);
        let width = self.params().values()[match self.layout() {
            Layout::Moe(l) => l.experts[0].width,
            _ => unreachable!(),
        }]
        .f64()
        .abs()
        .max(1e-3);
        let seed = cfg
            .seed
            .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(active as u64));
        self.activate_expert(&center, width, seed, train);

        let joint = TrainConfig {
            epochs: growth.grow_epochs,
            ..cfg.clone()
        };
        let history = match optim::train(self, train, Some(val), &joint) {
            Ok(h) => Some(h),
            Err(Error::DivergenceAbort { history, .. }) => Some(*history),
            Err(e) => return Err(e),
        };
        let after = self.mse(val).unwrap_or(T::infinity());
        let improvement = ((before - after) / before).f64();
        if !(improvement >= growth.rollback_threshold) || before == T::zero() {
            *self.params_mut() = checkpoint;
            *self.state_mut() = ModelState::Moe {
                active,
                locked: true,
            };
            return Ok((GrowOutcome::RolledBack, history));
        }
        Ok((GrowOutcome::Accepted, history))
    }
}

/// Trains a single expert to a plateau, then grows greedily until every
/// slot is used or a growth step is rolled back.
pub fn fit_moe<T: Scalar>(
    model: &mut Model<T>,
    train: &Samples<T>,
    val: &Samples<T>,
    cfg: &TrainConfig,
    growth: &GrowthConfig,
) -> Result<MoeReport> {
    if !matches!(model.state(), ModelState::Moe { .. }) {
        return Err(Error::config("fit_moe requires a moe model"));
    }
    let mut histories = vec![optim::train(model, train, Some(val), cfg)?];
    let mut outcomes = Vec::new();
    loop {
        let (outcome, h) = model.moe_grow(train, val, cfg, growth)?;
        histories.extend(h);
        let stop = outcome != GrowOutcome::Accepted;
        if outcome != GrowOutcome::Unavailable {
            outcomes.push(outcome);
        }
        if stop {
            break;
        }
    }
    Ok(MoeReport {
        histories,
        outcomes,
    })
}
