use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tape::{conv_output_len, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Number of parameter blocks in an encoder: two convolutions, one
/// self-attention block and one feed-forward block.
pub const ENCODER_LAYERS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// `[B, channels, timesteps]` → `[B, width]`.
    Encoder {
        channels: usize,
        timesteps: usize,
        width: usize,
        kernel: usize,
    },
    /// `[B, input]` → `[B, output]` through one hidden GELU layer.
    Projector {
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
    },
    /// `[B, input]` → row-stochastic `[B, class_count]`.
    Head { input_dim: usize, class_count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub id: String,
    pub params: Vec<Param>,
}

impl Layer {
    pub fn sum_squares(&self) -> f64 {
        self.params.iter().map(|p| p.value.sum_squares()).sum()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// A differentiable model whose parameters are grouped into ordered layer
/// blocks. The blocks partition the parameters: every parameter belongs to
/// exactly one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredModel {
    pub arch: Architecture,
    pub layers: Vec<Layer>,
}

fn xavier(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    Tensor {
        shape: shape.to_vec(),
        data: (0..n).map(|_| rng.gen_range(-bound..bound)).collect(),
    }
}

fn param(name: &str, value: Tensor) -> Param {
    Param {
        name: name.to_owned(),
        value,
    }
}

fn dense(id: &str, input: usize, output: usize, rng: &mut Rng) -> Layer {
    Layer {
        id: id.to_owned(),
        params: vec![
            param("weight", xavier(&[input, output], input, output, rng)),
            param("bias", Tensor::zeros(&[output])),
        ],
    }
}

fn ones(n: usize) -> Tensor {
    Tensor {
        shape: vec![n],
        data: vec![1.0; n],
    }
}

pub fn build_encoder(
    channels: usize,
    timesteps: usize,
    width: usize,
    kernel: usize,
    rng: &mut Rng,
) -> Result<LayeredModel> {
    if channels == 0 || width < 2 {
        return Err(Error::Shape(format!(
            "encoder needs channels >= 1 and width >= 2, got {channels} and {width}"
        )));
    }
    if kernel == 0 || kernel % 2 == 0 {
        return Err(Error::Shape(format!("kernel must be odd, got {kernel}")));
    }
    if timesteps < kernel {
        return Err(Error::Shape(format!(
            "{timesteps} timesteps is shorter than the convolution kernel ({kernel})"
        )));
    }
    let conv = |id: &str, cin: usize, rng: &mut Rng| Layer {
        id: id.to_owned(),
        params: vec![
            param(
                "weight",
                xavier(&[width, cin, kernel], cin * kernel, width * kernel, rng),
            ),
            param("bias", Tensor::zeros(&[width])),
        ],
    };
    let conv1 = conv("conv1", channels, rng);
    let conv2 = conv("conv2", width, rng);
    let mut attn = Vec::new();
    for name in ["query", "key", "value", "output"] {
        attn.push(param(
            &format!("{name}_weight"),
            xavier(&[width, width], width, width, rng),
        ));
        attn.push(param(&format!("{name}_bias"), Tensor::zeros(&[width])));
    }
    attn.push(param("norm_gain", ones(width)));
    attn.push(param("norm_bias", Tensor::zeros(&[width])));
    let hidden = 2 * width;
    let ffn = vec![
        param("in_weight", xavier(&[width, hidden], width, hidden, rng)),
        param("in_bias", Tensor::zeros(&[hidden])),
        param("out_weight", xavier(&[hidden, width], hidden, width, rng)),
        param("out_bias", Tensor::zeros(&[width])),
        param("norm_gain", ones(width)),
        param("norm_bias", Tensor::zeros(&[width])),
    ];
    Ok(LayeredModel {
        arch: Architecture::Encoder {
            channels,
            timesteps,
            width,
            kernel,
        },
        layers: vec![
            conv1,
            conv2,
            Layer {
                id: "attention".into(),
                params: attn,
            },
            Layer {
                id: "feedforward".into(),
                params: ffn,
            },
        ],
    })
}

pub fn build_projector(input_dim: usize, output_dim: usize, rng: &mut Rng) -> Result<LayeredModel> {
    if output_dim < 2 {
        return Err(Error::Shape(format!(
            "projector output dimension must be at least 2, got {output_dim}"
        )));
    }
    if input_dim == 0 {
        return Err(Error::Shape("projector input dimension must be positive".into()));
    }
    let hidden_dim = input_dim.max(output_dim);
    Ok(LayeredModel {
        arch: Architecture::Projector {
            input_dim,
            hidden_dim,
            output_dim,
        },
        layers: vec![
            dense("dense1", input_dim, hidden_dim, rng),
            dense("dense2", hidden_dim, output_dim, rng),
        ],
    })
}

pub fn build_head(input_dim: usize, class_count: usize, rng: &mut Rng) -> Result<LayeredModel> {
    if class_count < 2 {
        return Err(Error::Shape(format!(
            "a classifier head needs at least 2 classes, got {class_count}"
        )));
    }
    if input_dim == 0 {
        return Err(Error::Shape("head input dimension must be positive".into()));
    }
    Ok(LayeredModel {
        arch: Architecture::Head {
            input_dim,
            class_count,
        },
        layers: vec![dense("linear", input_dim, class_count, rng)],
    })
}

impl LayeredModel {
    pub fn layer_ids(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.id.as_str()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.layers.iter().map(Layer::sum_squares).sum()
    }

    /// Parameters in forward order, flattened across layers.
    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| l.params.iter().map(|p| &p.value))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params.iter_mut().map(|p| &mut p.value))
    }

    /// Output width of the model.
    pub fn output_dim(&self) -> usize {
        match self.arch {
            Architecture::Encoder { width, .. } => width,
            Architecture::Projector { output_dim, .. } => output_dim,
            Architecture::Head { class_count, .. } => class_count,
        }
    }

    /// Record every parameter on `tape` as a leaf, in [`Self::params`] order.
    pub fn bind(&self, tape: &Tape) -> Vec<Var> {
        self.params().map(|p| tape.leaf(p.clone())).collect()
    }

    /// Differentiable forward pass using parameters previously bound with
    /// [`Self::bind`].
    pub fn forward(&self, tape: &Tape, params: &[Var], x: Var) -> Result<Var> {
        let shape = tape.shape(x);
        match self.arch {
            Architecture::Encoder {
                channels,
                timesteps,
                width,
                kernel,
            } => {
                if shape.len() != 3 || shape[1] != channels || shape[2] != timesteps {
                    return Err(Error::Shape(format!(
                        "encoder expects [B, {channels}, {timesteps}], got {shape:?}"
                    )));
                }
                let b = shape[0];
                let pad = kernel / 2;
                let p = params;
                let h = tape.gelu(tape.conv1d(x, p[0], p[1], 1, pad));
                let h = tape.gelu(tape.conv1d(h, p[2], p[3], 2, pad));
                let t2 = tape.shape(h)[2];
                let seq = tape.reshape(tape.swap_last2(h), &[b * t2, width]);
                let proj = |w: Var, bias: Var| {
                    tape.reshape(tape.add_bias(tape.matmul(seq, w), bias), &[b, t2, width])
                };
                let q = proj(p[4], p[5]);
                let k = proj(p[6], p[7]);
                let v = proj(p[8], p[9]);
                let scores = tape.scale(tape.batch_matmul(q, k, true), 1.0 / (width as f64).sqrt());
                let attn = tape.batch_matmul(tape.softmax_last(scores), v, false);
                let attn = tape.reshape(attn, &[b * t2, width]);
                let attn = tape.add_bias(tape.matmul(attn, p[10]), p[11]);
                let r = tape.layer_norm(tape.add(attn, seq), p[12], p[13]);
                let f = tape.gelu(tape.add_bias(tape.matmul(r, p[14]), p[15]));
                let f = tape.add_bias(tape.matmul(f, p[16]), p[17]);
                let out = tape.layer_norm(tape.add(f, r), p[18], p[19]);
                Ok(tape.mean_axis1(tape.reshape(out, &[b, t2, width])))
            }
            Architecture::Projector { input_dim, .. } => {
                check_matrix(&shape, input_dim, "projector")?;
                let h = tape.gelu(tape.add_bias(tape.matmul(x, params[0]), params[1]));
                Ok(tape.add_bias(tape.matmul(h, params[2]), params[3]))
            }
            Architecture::Head { input_dim, .. } => {
                check_matrix(&shape, input_dim, "head")?;
                let logits = tape.add_bias(tape.matmul(x, params[0]), params[1]);
                Ok(tape.softmax_last(logits))
            }
        }
    }

    /// Inference-mode forward pass.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let params = self.bind(&tape);
        let input = tape.leaf(x.clone());
        let out = self.forward(&tape, &params, input)?;
        let value = tape.value(out).clone();
        Ok(value)
    }
}

fn check_matrix(shape: &[usize], cols: usize, what: &str) -> Result<()> {
    if shape.len() != 2 || shape[1] != cols {
        return Err(Error::Shape(format!(
            "{what} expects [B, {cols}], got {shape:?}"
        )));
    }
    Ok(())
}

/// Temporal length seen by the attention block of an encoder.
pub fn encoder_sequence_len(timesteps: usize, kernel: usize) -> Option<usize> {
    let pad = kernel / 2;
    let t1 = conv_output_len(timesteps, kernel, 1, pad)?;
    conv_output_len(t1, kernel, 2, pad)
}
