use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ad::Real;
use crate::error::{Error, Result};

/// Number of sinusoid octaves in the optional input encoding.
pub const ENCODING_OCTAVES: usize = 4;

/// Fully connected network on a scalar time input: tanh hidden layers,
/// linear output. Parameters are stored flat, layer by layer, each layer
/// as a row-major `out x in` weight block followed by `out` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    encoding: bool,
    params: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform hidden layers, zero output layer, zero biases, so the
    /// network starts as the zero function.
    pub fn new(hidden: &[usize], outputs: usize, encoding: bool, rng: &mut impl Rng) -> Mlp {
        let inputs = if encoding { 1 + 2 * ENCODING_OCTAVES } else { 1 };
        let mut layer_sizes = vec![inputs];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(outputs);
        let n_layers = layer_sizes.len() - 1;
        let mut params = Vec::new();
        for l in 0..n_layers {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let last = l + 1 == n_layers;
            for _ in 0..fan_in * fan_out {
                params.push(if last { 0.0 } else { rng.random_range(-limit..limit) });
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Mlp {
            layer_sizes,
            encoding,
            params,
        }
    }

    pub fn from_parts(layer_sizes: Vec<usize>, encoding: bool, params: Vec<f64>) -> Result<Mlp> {
        let m = Mlp {
            layer_sizes,
            encoding,
            params,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let inputs = if self.encoding { 1 + 2 * ENCODING_OCTAVES } else { 1 };
        if self.layer_sizes.len() < 2 || self.layer_sizes[0] != inputs || self.layer_sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "bad MLP layer sizes {:?}",
                self.layer_sizes
            )));
        }
        if self.params.len() != Self::count(&self.layer_sizes) {
            return Err(Error::InvalidConfig(format!(
                "MLP expects {} parameters, got {}",
                Self::count(&self.layer_sizes),
                self.params.len()
            )));
        }
        if !self.params.iter().all(|p| p.is_finite()) {
            return Err(Error::InvalidConfig("non-finite MLP parameter".into()));
        }
        Ok(())
    }

    fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn encoding(&self) -> bool {
        self.encoding
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn features(&self, t: f64) -> Vec<f64> {
        let mut x = vec![t];
        if self.encoding {
            for k in 0..ENCODING_OCTAVES {
                let a = (1u32 << k) as f64 * std::f64::consts::PI * t;
                x.push(a.sin());
                x.push(a.cos());
            }
        }
        x
    }

    /// Network output at input `t` with its own parameters.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.forward(&self.params, t)
    }

    /// Network output at input `t` with the parameters taken from `p`,
    /// which must have this network's layout.
    pub fn forward<S: Real>(&self, p: &[S], t: f64) -> Vec<S> {
        debug_assert_eq!(p.len(), self.params.len());
        let x0 = self.features(t);
        let n_layers = self.layer_sizes.len() - 1;
        let mut off = 0;
        // first layer reads constant inputs
        let (fi, fo) = (self.layer_sizes[0], self.layer_sizes[1]);
        let mut h: Vec<S> = (0..fo)
            .map(|o| {
                let mut acc = p[off + fi * fo + o];
                for (i, xi) in x0.iter().enumerate() {
                    acc = acc + p[off + o * fi + i] * *xi;
                }
                acc
            })
            .collect();
        off += fi * fo + fo;
        for l in 1..n_layers {
            let h_act: Vec<S> = h.iter().map(|v| v.tanh()).collect();
            let (fi, fo) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            h = (0..fo)
                .map(|o| {
                    let mut acc = p[off + fi * fo + o];
                    for (i, xi) in h_act.iter().enumerate() {
                        acc = acc + p[off + o * fi + i] * *xi;
                    }
                    acc
                })
                .collect();
            off += fi * fo + fo;
        }
        h
    }

    /// Upper bound on the Lipschitz constant of `t -> output` (product of
    /// layer Frobenius norms, times the encoding's input gain).
    pub fn lipschitz_bound(&self) -> f64 {
        let mut off = 0;
        let mut bound = if self.encoding {
            // d/dt of each feature is bounded by its angular frequency
            let mut g2 = 1.0;
            for k in 0..ENCODING_OCTAVES {
                g2 += ((1u32 << k) as f64 * std::f64::consts::PI).powi(2);
            }
            g2.sqrt()
        } else {
            1.0
        };
        for w in self.layer_sizes.windows(2) {
            let n = w[0] * w[1];
            let f: f64 = self.params[off..off + n].iter().map(|x| x * x).sum::<f64>().sqrt();
            bound *= f;
            off += n + w[1];
        }
        bound
    }
}
