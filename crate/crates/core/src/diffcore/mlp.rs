//! Fully connected networks over flat parameter slices.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Softplus,
}

/// Shape of a network: softplus between every pair of affine layers, the
/// final layer affine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpArch {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        MlpArch {
            input_dim,
            hidden: hidden.to_vec(),
            output_dim,
            activation: Activation::Softplus,
        }
    }

    /// `(fan_in, fan_out)` for every affine layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|&(i, o)| i * o + o).sum()
    }
}

/// A network whose parameters occupy `offset..offset + num_params` of a
/// model's flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub arch: MlpArch,
    pub offset: usize,
}

impl Mlp {
    pub fn new(arch: MlpArch, offset: usize) -> Self {
        Mlp { arch, offset }
    }

    pub fn num_params(&self) -> usize {
        self.arch.num_params()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.num_params()
    }

    /// Glorot-uniform weights, zero biases. With `zero_last`, the output
    /// layer's weights are zero as well.
    pub fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng, zero_last: bool) {
        let layers = self.arch.layers();
        let mut off = self.offset;
        for (k, &(fan_in, fan_out)) in layers.iter().enumerate() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let last = k + 1 == layers.len();
            for p in &mut params[off..off + fan_in * fan_out] {
                *p = if last && zero_last { 0.0 } else { rng.gen_range(-bound..bound) };
            }
            off += fan_in * fan_out;
            for p in &mut params[off..off + fan_out] {
                *p = 0.0;
            }
            off += fan_out;
        }
    }

    /// Evaluate the network. `params` is the full flat parameter vector.
    pub fn forward<S: Scalar>(&self, params: &[S::Leaf], input: &[S]) -> Result<Vec<S>> {
        if input.len() != self.arch.input_dim {
            return Err(Error::Config(format!(
                "network expects input dimension {}, got {}",
                self.arch.input_dim,
                input.len()
            )));
        }
        if params.len() < self.offset + self.num_params() {
            return Err(Error::Config(format!(
                "parameter vector too short: need {}, have {}",
                self.offset + self.num_params(),
                params.len()
            )));
        }
        let layers = self.arch.layers();
        let mut off = self.offset;
        let mut h: Vec<S> = input.to_vec();
        for (k, &(fan_in, fan_out)) in layers.iter().enumerate() {
            let w = &params[off..off + fan_in * fan_out];
            off += fan_in * fan_out;
            let b = &params[off..off + fan_out];
            off += fan_out;
            h = S::affine(w, Some(b), &h);
            if k + 1 < layers.len() {
                for v in &mut h {
                    *v = v.softplus();
                }
            }
        }
        Ok(h)
    }
}

/// Deterministic generator for parameter initialisation.
pub fn init_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
