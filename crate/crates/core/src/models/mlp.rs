//! Fully connected baseline with a scalar head.

use crate::autodiff::Graph;
use crate::error::Result;
use crate::scalar::Scalar;

use super::params::LayoutBuilder;
use super::{Activation, Init, ModelConfig, ParamStore};

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Dense {
    pub w: usize,
    pub b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct MlpLayout {
    pub layers: Vec<Dense>,
}

impl MlpLayout {
    pub fn build(b: &mut LayoutBuilder, config: &ModelConfig) -> Self {
        let mut fan_in = config.input_dim;
        let widths = config
            .hidden_widths
            .iter()
            .copied()
            .chain(std::iter::once(1));
        let layers = widths
            .enumerate()
            .map(|(l, fan_out)| {
                // row-major: weight (o, i) sits at w + o * fan_in + i
                let layer = Dense {
                    w: b.block(format!("layer{l}.w"), fan_in * fan_out),
                    b: b.block(format!("layer{l}.b"), fan_out),
                    fan_in,
                    fan_out,
                };
                fan_in = fan_out;
                layer
            })
            .collect();
        MlpLayout { layers }
    }

    pub fn init<T: Scalar>(
        &self,
        init: &mut Init,
        params: &mut ParamStore<T>,
        config: &ModelConfig,
    ) {
        let gain = match config.activation {
            Activation::Relu => 2.0,
            Activation::Tanh => 1.0,
        };
        let v = params.values_mut();
        for layer in &self.layers {
            let std = (gain / layer.fan_in as f64).sqrt();
            init.normal(&mut v[layer.w..layer.w + layer.fan_in * layer.fan_out], std);
        }
    }

    pub fn forward<T: Scalar, G: Graph<T>>(
        &self,
        g: &mut G,
        xs: &[G::Var],
        act: Activation,
    ) -> Result<G::Var> {
        let mut h = xs.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.fan_out);
            for o in 0..layer.fan_out {
                let pre = g.affine(layer.w + o * layer.fan_in, layer.b + o, &h)?;
                next.push(match (l == last, act) {
                    (true, _) => pre,
                    (false, Activation::Relu) => g.relu(pre)?,
                    (false, Activation::Tanh) => g.tanh(pre)?,
                });
            }
            h = next;
        }
        Ok(h[0])
    }
}

#[cfg(test)]
mod tests {
    use crate::autodiff::{check_gradient, Tape};
    use crate::models::{param_count, Activation, Model, ModelConfig};

    #[test]
    fn zero_weights_give_the_output_bias() {
        let mut m = Model::zeroed(ModelConfig::mlp(3, vec![4, 4], Activation::Relu)).unwrap();
        m.params_mut().get_mut("layer2.b").unwrap()[0] = -1.5;
        assert_eq!(m.predict(&[1.0, 2.0, 3.0]).unwrap(), -1.5);
    }

    #[test]
    fn one_wide_network_is_relu() {
        let mut m = Model::zeroed(ModelConfig::mlp(1, vec![1, 1], Activation::Relu)).unwrap();
        for l in 0..3 {
            m.params_mut().get_mut(&format!("layer{l}.w")).unwrap()[0] = 1.0;
        }
        for x in [-2.0, -0.1, 0.0, 0.7, 3.0] {
            assert_eq!(m.predict(&[x]).unwrap(), f64::max(x, 0.0));
        }
    }

    #[test]
    fn width_near_two_hundred_parameters() {
        // the baseline at the ~200 parameter scale used for 1D fits
        let c = ModelConfig::mlp(1, vec![12, 12], Activation::Relu);
        assert_eq!(param_count(&c).unwrap(), 193);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m: Model<f64> =
            Model::init(ModelConfig::mlp(3, vec![6, 5], Activation::Tanh), 42, None).unwrap();
        let x = [0.4, -1.1, 0.3];
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
