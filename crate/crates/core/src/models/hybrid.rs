//! Linear skip connection plus parallel regularized rational units.
//!
//! `y = W x + b + sum_i P_i(z_i) / (Q_i(z_i)^2 + gamma)` with a private
//! projection `z_i = w_i . x + c_i` per unit.

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::params::LayoutBuilder;
use super::{Init, Layout, Model, ModelConfig, ParamStore, COEF_STD};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Unit {
    pub w: usize,
    pub c: usize,
    pub p: usize,
    pub q: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct HybridLayout {
    pub skip_w: usize,
    pub skip_b: usize,
    pub units: Vec<Unit>,
    pub degree: usize,
    pub input_dim: usize,
}

impl HybridLayout {
    pub fn build(b: &mut LayoutBuilder, config: &ModelConfig) -> Self {
        let (d, p) = (config.input_dim, config.poly_degree);
        let skip_w = b.block("skip.w", d);
        let skip_b = b.block("skip.b", 1);
        let units = (0..config.units)
            .map(|i| Unit {
                w: b.block(format!("unit{i}.proj.w"), d),
                c: b.block(format!("unit{i}.proj.c"), 1),
                p: b.block(format!("unit{i}.p_coef"), p + 1),
                q: b.block(format!("unit{i}.q_coef"), p + 1),
            })
            .collect();
        HybridLayout {
            skip_w,
            skip_b,
            units,
            degree: p,
            input_dim: d,
        }
    }

    pub fn init<T: Scalar>(
        &self,
        init: &mut Init,
        params: &mut ParamStore<T>,
        config: &ModelConfig,
    ) {
        let d = self.input_dim;
        let proj = super::projection_std(config.input_dim);
        let v = params.values_mut();
        init.normal(&mut v[self.skip_w..self.skip_w + d], COEF_STD);
        v[self.skip_b] = T::zero();
        for u in &self.units {
            init.normal(&mut v[u.w..u.w + d], proj);
            init.normal(&mut v[u.c..u.c + 1], proj);
            init.normal(&mut v[u.p..=u.p + self.degree], COEF_STD);
            init.normal(&mut v[u.q..=u.q + self.degree], COEF_STD);
        }
    }

    fn denominator<T: Scalar, G: Graph<T>>(
        &self,
        g: &mut G,
        u: Unit,
        z: G::Var,
        gamma: T,
    ) -> Result<G::Var> {
        let q = g.horner(u.q, self.degree, z)?;
        let q2 = g.mul(q, q)?;
        let gm = g.constant(gamma)?;
        g.add(q2, gm)
    }

    pub fn forward<T: Scalar, G: Graph<T>>(
        &self,
        g: &mut G,
        xs: &[G::Var],
        gamma: T,
    ) -> Result<G::Var> {
        let mut y = g.affine(self.skip_w, self.skip_b, xs)?;
        for &u in &self.units {
            let z = g.affine(u.w, u.c, xs)?;
            let num = g.horner(u.p, self.degree, z)?;
            let den = self.denominator(g, u, z, gamma)?;
            let r = g.div(num, den)?;
            y = g.add(y, r)?;
        }
        Ok(y)
    }
}

impl<T: Scalar> Model<T> {
    /// Per-unit denominators `Q_i(z_i)^2 + gamma` of a hybrid model at `x`.
    pub fn hybrid_denominators(&self, x: &[T]) -> Result<Vec<T>> {
        let Layout::Hybrid(l) = self.layout() else {
            return Err(Error::config("hybrid_denominators requires a hybrid model"));
        };
        let mut g = crate::autodiff::ValueGraph::new(self.params().values());
        let xs = g.inputs(x)?;
        let gamma = T::of(self.config().gamma);
        l.units
            .iter()
            .map(|&u| {
                let z = g.affine(u.w, u.c, &xs)?;
                l.denominator(&mut g, u, z, gamma)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{check_gradient, Tape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_units_is_affine() {
        let mut m = Model::zeroed(ModelConfig::hybrid(3, 0, 4)).unwrap();
        m.params_mut()
            .get_mut("skip.w")
            .unwrap()
            .copy_from_slice(&[1.0, -2.0, 0.5]);
        m.params_mut().get_mut("skip.b").unwrap()[0] = 0.25;
        assert_eq!(m.predict(&[2.0, 1.0, 4.0]).unwrap(), 2.0 - 2.0 + 2.0 + 0.25);
    }

    #[test]
    fn constant_numerator_over_gamma() {
        let mut m = Model::zeroed(ModelConfig::hybrid(1, 1, 2)).unwrap();
        m.params_mut().get_mut("unit0.p_coef").unwrap()[0] = 2.0;
        for x in [-5.0, 0.0, 3.0] {
            assert_eq!(m.predict(&[x]).unwrap(), 2.0);
        }
    }

    #[test]
    fn gamma_one_keeps_denominators_at_least_one() {
        let m: Model<f64> = Model::init(ModelConfig::hybrid(2, 6, 4), 3, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20_000 {
            let x = [rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3)];
            for den in m.hybrid_denominators(&x).unwrap() {
                assert!(den >= 1.0);
            }
        }
    }

    #[test]
    fn zero_gamma_can_hit_a_pole() {
        let mut c = ModelConfig::hybrid(1, 1, 1);
        c.gamma = 0.0;
        let mut m = Model::zeroed(c).unwrap();
        m.params_mut().get_mut("unit0.p_coef").unwrap()[0] = 1.0;
        assert!(matches!(
            m.predict(&[0.0]),
            Err(Error::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m: Model<f64> = Model::init(ModelConfig::hybrid(3, 5, 4), 42, None).unwrap();
        let x = [0.2, -0.6, 0.9];
        let r = check_gradient(
            |t: &mut Tape<f64>| m.forward(t, &x),
            m.params().values(),
            50,
            1e-4,
            1e-5,
            42,
        );
        assert!(r.passed(), "{r:?}");
    }
}
