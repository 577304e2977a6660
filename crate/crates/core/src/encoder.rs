//! Glyph encoder: a per-image CNN followed by an LSTM over the token sequence.
//!
//! Per image: conv(3x3 -> 32) / ReLU / pool, conv / ReLU / pool, conv / ReLU,
//! flatten, linear(-> 128) / ReLU, linear(128 -> 128) / ReLU. The CNN features
//! of a token sequence drive a unidirectional LSTM with hidden size 128 and
//! zero initial state; the sequence embedding is the temporal mean of the
//! hidden states.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::glyph::{Canvas, GlyphImage, Granularity};
use crate::params::{Binding, ModelParams};
use crate::tensor::{Scalar, Tensor};

pub const CONV_CHANNELS: usize = 32;
pub const FC_WIDTH: usize = 128;
pub const LSTM_HIDDEN: usize = 128;
pub const DEFAULT_DROPOUT: f64 = 0.3;

pub(crate) const CONV: [(&str, &str); 3] = [
    ("cnn.conv1.weight", "cnn.conv1.bias"),
    ("cnn.conv2.weight", "cnn.conv2.bias"),
    ("cnn.conv3.weight", "cnn.conv3.bias"),
];
pub(crate) const FC1: (&str, &str) = ("cnn.fc1.weight", "cnn.fc1.bias");
pub(crate) const FC2: (&str, &str) = ("cnn.fc2.weight", "cnn.fc2.bias");
pub(crate) const LSTM_W_IH: &str = "lstm.w_ih";
pub(crate) const LSTM_W_HH: &str = "lstm.w_hh";
pub(crate) const LSTM_BIAS: &str = "lstm.bias";

/// CNN geometry. Channel counts and kernel size are fixed; the input canvas
/// and per-layer paddings are configurable, and the flatten extent follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub canvas: Canvas,
    pub paddings: [usize; 3],
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            canvas: Canvas::DEFAULT,
            paddings: [1, 1, 1],
        }
    }
}

impl CnnConfig {
    /// 34x34 canvas with unpadded convolutions: 34 -> 32 -> 16 -> 14 -> 7 -> 5,
    /// giving an 800-wide flatten.
    pub fn paper_800() -> Self {
        CnnConfig {
            canvas: Canvas { height: 34, width: 34 },
            paddings: [0, 0, 0],
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "paper-800" => Ok(Self::paper_800()),
            other => Err(Error::Config(format!("unknown CNN preset `{other}`"))),
        }
    }

    /// Spatial extent `(h, w)` after the last convolution.
    pub fn feature_map(&self) -> Result<(usize, usize)> {
        let mut h = self.canvas.height;
        let mut w = self.canvas.width;
        for (layer, &p) in self.paddings.iter().enumerate() {
            if h + 2 * p < 3 || w + 2 * p < 3 {
                return Err(Error::Config(format!("conv{} input {h}x{w} too small", layer + 1)));
            }
            h = h + 2 * p - 2;
            w = w + 2 * p - 2;
            if layer < 2 {
                if h < 2 || w < 2 {
                    return Err(Error::Config(format!("pool{} input {h}x{w} too small", layer + 1)));
                }
                h /= 2;
                w /= 2;
            }
        }
        Ok((h, w))
    }

    pub fn flatten_dim(&self) -> Result<usize> {
        let (h, w) = self.feature_map()?;
        Ok(CONV_CHANNELS * h * w)
    }
}

/// Sequence-level visual embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct VisualEmbedding<T = f32> {
    pub vector: Vec<T>,
    pub granularity: Granularity,
    pub token_count: usize,
}

fn uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let bound = (1.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.gen_range(-bound..=bound))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// Adds freshly initialized CNN and LSTM parameters to `params`.
///
/// Weights are uniform in `±sqrt(1/fan_in)`, biases zero except the LSTM
/// forget-gate slice, which starts at 1.0.
pub fn init_visual_params<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    config: &CnnConfig,
    params: &mut ModelParams<T>,
) -> Result<()> {
    let flatten = config.flatten_dim()?;
    let mut c_in = 1;
    for (w, b) in CONV {
        params.insert(w, uniform(rng, &[CONV_CHANNELS, c_in, 3, 3], c_in * 9));
        params.insert(b, Tensor::zeros(&[CONV_CHANNELS]));
        c_in = CONV_CHANNELS;
    }
    params.insert(FC1.0, uniform(rng, &[FC_WIDTH, flatten], flatten));
    params.insert(FC1.1, Tensor::zeros(&[FC_WIDTH]));
    params.insert(FC2.0, uniform(rng, &[FC_WIDTH, FC_WIDTH], FC_WIDTH));
    params.insert(FC2.1, Tensor::zeros(&[FC_WIDTH]));

    let gates = 4 * LSTM_HIDDEN;
    params.insert(LSTM_W_IH, uniform(rng, &[gates, FC_WIDTH], FC_WIDTH));
    params.insert(LSTM_W_HH, uniform(rng, &[gates, LSTM_HIDDEN], LSTM_HIDDEN));
    let mut bias = Tensor::zeros(&[gates]);
    bias.data_mut()[LSTM_HIDDEN..2 * LSTM_HIDDEN]
        .iter_mut()
        .for_each(|v| *v = T::one());
    params.insert(LSTM_BIAS, bias);
    Ok(())
}

/// CNN features `[128]` for one image.
pub fn encode_image_on<'a, T: Scalar>(
    tape: &mut Tape<'a, T>,
    binding: &Binding,
    config: &CnnConfig,
    image: &GlyphImage,
) -> Result<Var> {
    if image.canvas() != config.canvas {
        return Err(Error::dim(
            "encode_image",
            format!(
                "image is {}x{} but the encoder expects {}x{}",
                image.canvas().height,
                image.canvas().width,
                config.canvas.height,
                config.canvas.width
            ),
        ));
    }
    let pixels = image.pixels().iter().map(|&p| T::lit(p as f64)).collect();
    let mut x = tape.constant(&[1, config.canvas.height, config.canvas.width], pixels)?;
    for (layer, (w, b)) in CONV.iter().enumerate() {
        x = tape.conv2d(x, binding.get(w)?, binding.get(b)?, config.paddings[layer])?;
        x = tape.relu(x);
        if layer < 2 {
            x = tape.maxpool2d(x)?;
        }
    }
    let x = tape.linear(x, binding.get(FC1.0)?, binding.get(FC1.1)?)?;
    let x = tape.relu(x);
    let x = tape.linear(x, binding.get(FC2.0)?, binding.get(FC2.1)?)?;
    Ok(tape.relu(x))
}

/// One LSTM step with gate order input, forget, cell, output.
pub fn lstm_step<'a, T: Scalar>(
    tape: &mut Tape<'a, T>,
    binding: &Binding,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    let hs = LSTM_HIDDEN;
    let gx = tape.linear(x, binding.get(LSTM_W_IH)?, binding.get(LSTM_BIAS)?)?;
    let gh = tape.matvec(h_prev, binding.get(LSTM_W_HH)?)?;
    let gates = tape.add(gx, gh)?;
    let i = tape.slice(gates, 0, hs)?;
    let f = tape.slice(gates, hs, hs)?;
    let g = tape.slice(gates, 2 * hs, hs)?;
    let o = tape.slice(gates, 3 * hs, hs)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Mean LSTM hidden state over a sequence of images. Dropout is applied to
/// each hidden output (not the recurrent state) when `training`.
pub fn encode_sequence_on<'a, T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<'a, T>,
    binding: &Binding,
    config: &CnnConfig,
    images: &[GlyphImage],
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    if images.is_empty() {
        return Err(Error::Invalid("cannot encode an empty token sequence".into()));
    }
    let mut h = tape.constant(&[LSTM_HIDDEN], vec![T::zero(); LSTM_HIDDEN])?;
    let mut c = tape.constant(&[LSTM_HIDDEN], vec![T::zero(); LSTM_HIDDEN])?;
    let mut outputs = Vec::with_capacity(images.len());
    for image in images {
        let feat = encode_image_on(tape, binding, config, image)?;
        (h, c) = lstm_step(tape, binding, feat, h, c)?;
        outputs.push(tape.dropout(h, dropout, training, rng)?);
    }
    tape.mean(&outputs)
}

/// Convenience wrapper around [`encode_image_on`].
pub fn encode_image<T: Scalar>(params: &ModelParams<T>, config: &CnnConfig, image: &GlyphImage) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let v = encode_image_on(&mut tape, &b, config, image)?;
    Ok(tape.tensor(v))
}

/// Convenience wrapper around [`encode_sequence_on`].
pub fn encode_sequence<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    config: &CnnConfig,
    images: &[GlyphImage],
    granularity: Granularity,
    training: bool,
    rng: &mut R,
) -> Result<VisualEmbedding<T>> {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let v = encode_sequence_on(&mut tape, &b, config, images, DEFAULT_DROPOUT, training, rng)?;
    Ok(VisualEmbedding {
        vector: tape.value(v).to_vec(),
        granularity,
        token_count: images.len(),
    })
}
