//! Foundational continued-fraction network.
//!
//! `f(x) = a_0 + b_0 / (a_1 + b_1 / (... + b_{L-1} / a_L))`, where every
//! term is a univariate polynomial of its own scalar projection of `x`.

use crate::autodiff::Graph;
use crate::error::Result;
use crate::scalar::Scalar;

use super::params::LayoutBuilder;
use super::{Init, ModelConfig, ParamStore, COEF_STD};

/// Offsets of one polynomial-of-projection term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Term {
    pub w: usize,
    pub c: usize,
    pub coef: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct CfnnLayout {
    pub a: Vec<Term>,
    /// One shorter than `a`: the deepest level has no numerator.
    pub b: Vec<Term>,
    pub degree: usize,
    pub input_dim: usize,
    pub start: usize,
    pub len: usize,
}

impl CfnnLayout {
    pub fn build(b: &mut LayoutBuilder, prefix: &str, config: &ModelConfig) -> Self {
        let (d, l, p) = (config.input_dim, config.depth, config.poly_degree);
        let start = b.len();
        let term = |b: &mut LayoutBuilder, level: usize, side: &str, coef: &str| Term {
            w: b.block(format!("{prefix}level{level}.proj_{side}.w"), d),
            c: b.block(format!("{prefix}level{level}.proj_{side}.c"), 1),
            coef: b.block(format!("{prefix}level{level}.{coef}"), p + 1),
        };
        let mut a = Vec::with_capacity(l + 1);
        let mut bs = Vec::with_capacity(l);
        for level in 0..=l {
            a.push(term(b, level, "a", "coef_alpha"));
            if level < l {
                bs.push(term(b, level, "b", "coef_beta"));
            }
        }
        CfnnLayout {
            a,
            b: bs,
            degree: p,
            input_dim: d,
            start,
            len: b.len() - start,
        }
    }

    pub fn depth(&self) -> usize {
        self.b.len()
    }

    pub fn init<T: Scalar>(
        &self,
        init: &mut Init,
        params: &mut ParamStore<T>,
        config: &ModelConfig,
    ) {
        let proj = super::projection_std(config.input_dim);
        let d = self.input_dim;
        let values = params.values_mut();
        for (level, t) in self.a.iter().enumerate() {
            init.normal(&mut values[t.w..t.w + d], proj);
            init.normal(&mut values[t.c..t.c + 1], proj);
            init.normal(&mut values[t.coef..=t.coef + self.degree], COEF_STD);
            if level >= 1 {
                // keeps the initial denominators near one
                values[t.coef] = T::one();
            }
        }
        for t in &self.b {
            init.normal(&mut values[t.w..t.w + d], proj);
            init.normal(&mut values[t.c..t.c + 1], proj);
            init.normal(&mut values[t.coef..=t.coef + self.degree], COEF_STD);
        }
    }

    fn term<T: Scalar, G: Graph<T>>(&self, g: &mut G, xs: &[G::Var], t: Term) -> Result<G::Var> {
        let z = g.affine(t.w, t.c, xs)?;
        g.horner(t.coef, self.degree, z)
    }

    pub fn forward<T: Scalar, G: Graph<T>>(
        &self,
        g: &mut G,
        xs: &[G::Var],
        eps: T,
    ) -> Result<G::Var> {
        let l = self.depth();
        let mut den = self.term(g, xs, self.a[l])?;
        for i in (0..l).rev() {
            let a = self.term(g, xs, self.a[i])?;
            let b = self.term(g, xs, self.b[i])?;
            let safe = g.clamp_magnitude(den, eps)?;
            let q = g.div(b, safe)?;
            den = g.add(a, q)?;
        }
        Ok(den)
    }
}
