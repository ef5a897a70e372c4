//! Parameter containers. Gradients use the same types as the parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::Matrix;

/// A named, flat view of a group of parameter tensors.
pub trait ParamGroup {
    fn tensors(&self) -> Vec<(&'static str, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;

    /// Shape of each tensor, in [`tensors`](Self::tensors) order.
    fn shapes(&self) -> Vec<Vec<usize>> {
        self.tensors().iter().map(|(_, t)| vec![t.len()]).collect()
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn fill_zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Owned copy of every tensor, for snapshots and gradient checks.
    fn to_named_vec(&self) -> Vec<(String, Vec<f64>)> {
        self.tensors().into_iter().map(|(n, t)| (n.to_string(), t.to_vec())).collect()
    }
}

/// Houlsby-style bottleneck: `h + up · tanh(down · h + b_down) + b_up`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterParams {
    pub down: Matrix,
    pub down_bias: Vec<f64>,
    pub up: Matrix,
    pub up_bias: Vec<f64>,
}

impl AdapterParams {
    /// Down-projection random, up-projection zero: the adapter starts as the identity.
    pub fn new<R: Rng + ?Sized>(dim: usize, width: usize, rng: &mut R) -> Self {
        AdapterParams {
            down: Matrix::xavier(width, dim, rng),
            down_bias: vec![0.0; width],
            up: Matrix::zeros(dim, width),
            up_bias: vec![0.0; dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        AdapterParams {
            down: Matrix::zeros(self.down.rows, self.down.cols),
            down_bias: vec![0.0; self.down_bias.len()],
            up: Matrix::zeros(self.up.rows, self.up.cols),
            up_bias: vec![0.0; self.up_bias.len()],
        }
    }
}

/// Token embeddings, mean pooling, one affine-tanh layer, optional adapter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub embed: Matrix,
    pub hidden: Matrix,
    pub hidden_bias: Vec<f64>,
    pub adapter: Option<AdapterParams>,
}

impl EncoderParams {
    pub fn new<R: Rng + ?Sized>(vocab_size: usize, embed_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        EncoderParams {
            embed: Matrix::random(vocab_size, embed_dim, 1.0, rng),
            hidden: Matrix::xavier(hidden_dim, embed_dim, rng),
            hidden_bias: vec![0.0; hidden_dim],
            adapter: None,
        }
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            embed: Matrix::zeros(self.embed.rows, self.embed.cols),
            hidden: Matrix::zeros(self.hidden.rows, self.hidden.cols),
            hidden_bias: vec![0.0; self.hidden_bias.len()],
            adapter: self.adapter.as_ref().map(AdapterParams::zeros_like),
        }
    }
}

impl ParamGroup for EncoderParams {
    fn shapes(&self) -> Vec<Vec<usize>> {
        let mut v = vec![
            vec![self.embed.rows, self.embed.cols],
            vec![self.hidden.rows, self.hidden.cols],
            vec![self.hidden_bias.len()],
        ];
        if let Some(a) = &self.adapter {
            v.push(vec![a.down.rows, a.down.cols]);
            v.push(vec![a.down_bias.len()]);
            v.push(vec![a.up.rows, a.up.cols]);
            v.push(vec![a.up_bias.len()]);
        }
        v
    }

    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut v: Vec<(&'static str, &[f64])> = vec![
            ("encoder.embed.weight", &self.embed.data),
            ("encoder.hidden.weight", &self.hidden.data),
            ("encoder.hidden.bias", &self.hidden_bias),
        ];
        if let Some(a) = &self.adapter {
            v.push(("adapter.down.weight", &a.down.data));
            v.push(("adapter.down.bias", &a.down_bias));
            v.push(("adapter.up.weight", &a.up.data));
            v.push(("adapter.up.bias", &a.up_bias));
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut v: Vec<(&'static str, &mut [f64])> = vec![
            ("encoder.embed.weight", &mut self.embed.data),
            ("encoder.hidden.weight", &mut self.hidden.data),
            ("encoder.hidden.bias", &mut self.hidden_bias),
        ];
        if let Some(a) = &mut self.adapter {
            v.push(("adapter.down.weight", &mut a.down.data));
            v.push(("adapter.down.bias", &mut a.down_bias));
            v.push(("adapter.up.weight", &mut a.up.data));
            v.push(("adapter.up.bias", &mut a.up_bias));
        }
        v
    }
}

/// Affine classification head over `[h; extra_features]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl HeadParams {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Self {
        HeadParams { weight: Matrix::xavier(2, input_dim, rng), bias: vec![0.0; 2] }
    }

    pub fn zeros(input_dim: usize) -> Self {
        HeadParams { weight: Matrix::zeros(2, input_dim), bias: vec![0.0; 2] }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.weight.cols)
    }
}

impl ParamGroup for HeadParams {
    fn shapes(&self) -> Vec<Vec<usize>> {
        vec![vec![self.weight.rows, self.weight.cols], vec![self.bias.len()]]
    }

    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![("head.weight", &self.weight.data), ("head.bias", &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![("head.weight", &mut self.weight.data), ("head.bias", &mut self.bias)]
    }
}

pub fn is_adapter_tensor(name: &str) -> bool {
    name.starts_with("adapter.")
}

pub fn is_head_tensor(name: &str) -> bool {
    name.starts_with("head.")
}
