//! Late fusion of visual and contextual embeddings plus the MLP classifier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::encoder::{self, CnnConfig, FC_WIDTH, LSTM_HIDDEN};
use crate::error::{Error, Result};
use crate::glyph::GlyphImage;
use crate::params::{Binding, ModelParams};
use crate::tensor::{Scalar, Tensor};

pub(crate) const PROJ_VISUAL: (&str, &str) = ("proj_visual.weight", "proj_visual.bias");
pub(crate) const PROJ_CONTEXT: (&str, &str) = ("proj_context.weight", "proj_context.bias");
pub(crate) const MLP_FC1: (&str, &str) = ("mlp.fc1.weight", "mlp.fc1.bias");
pub(crate) const MLP_FC2: (&str, &str) = ("mlp.fc2.weight", "mlp.fc2.bias");

/// Full model geometry: encoder, both projections and the classifier head.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub cnn: CnnConfig,
    pub context_dim: usize,
    pub proj_visual: usize,
    pub proj_context: usize,
    pub mlp_hidden: usize,
    pub n_classes: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            cnn: CnnConfig::default(),
            context_dim: 128,
            proj_visual: 128,
            proj_context: 128,
            mlp_hidden: 256,
            n_classes: 3,
            dropout: encoder::DEFAULT_DROPOUT,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.n_classes
            )));
        }
        if self.context_dim == 0 || self.proj_visual == 0 || self.proj_context == 0 || self.mlp_hidden == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        self.cnn.flatten_dim()?;
        Ok(())
    }

    pub fn fused_width(&self) -> usize {
        self.proj_visual + self.proj_context
    }
}

/// Where the visual branch gets its input.
#[derive(Clone, Copy, Debug)]
pub enum VisualInput<'i> {
    Images(&'i [GlyphImage]),
    /// Visual embedding replaced by zeros (context-only model).
    Zero,
}

fn uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor<T> {
    let bound = (1.0 / cols as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::lit(rng.gen_range(-bound..=bound)))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

/// Initializes every parameter of the NLI model.
pub fn init_params<T: Scalar, R: Rng + ?Sized>(rng: &mut R, config: &ModelConfig) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut p = ModelParams::new();
    encoder::init_visual_params(rng, &config.cnn, &mut p)?;
    for ((w, b), rows, cols) in [
        (PROJ_VISUAL, config.proj_visual, LSTM_HIDDEN),
        (PROJ_CONTEXT, config.proj_context, config.context_dim),
        (MLP_FC1, config.mlp_hidden, config.fused_width()),
        (MLP_FC2, config.n_classes, config.mlp_hidden),
    ] {
        p.insert(w, uniform(rng, rows, cols));
        p.insert(b, Tensor::zeros(&[rows]));
    }
    Ok(p)
}

/// `concat(affine_v(v), affine_c(c))`.
pub fn fuse<T: Scalar>(tape: &mut Tape<'_, T>, binding: &Binding, visual: Var, context: Var) -> Result<Var> {
    let pv = tape.linear(visual, binding.get(PROJ_VISUAL.0)?, binding.get(PROJ_VISUAL.1)?)?;
    let pc = tape.linear(context, binding.get(PROJ_CONTEXT.0)?, binding.get(PROJ_CONTEXT.1)?)?;
    tape.concat(&[pv, pc])
}

/// Two-layer MLP producing class logits.
pub fn classify<T: Scalar>(tape: &mut Tape<'_, T>, binding: &Binding, fused: Var) -> Result<Var> {
    let h = tape.linear(fused, binding.get(MLP_FC1.0)?, binding.get(MLP_FC1.1)?)?;
    let h = tape.relu(h);
    tape.linear(h, binding.get(MLP_FC2.0)?, binding.get(MLP_FC2.1)?)
}

/// Premise tokens, separator, hypothesis tokens.
pub fn pair_sequence(premise: &[GlyphImage], hypothesis: &[GlyphImage]) -> Vec<GlyphImage> {
    let canvas = premise
        .first()
        .or(hypothesis.first())
        .map(GlyphImage::canvas)
        .unwrap_or_default();
    let mut seq = Vec::with_capacity(premise.len() + hypothesis.len() + 1);
    seq.extend_from_slice(premise);
    seq.push(GlyphImage::separator(canvas));
    seq.extend_from_slice(hypothesis);
    seq
}

/// Logits for one sentence pair. `images` is the full token sequence
/// (see [`pair_sequence`]); `context` the pair's contextual embedding.
pub fn forward_nli<'a, T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<'a, T>,
    binding: &Binding,
    config: &ModelConfig,
    visual: VisualInput<'_>,
    context: &[T],
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    if context.len() != config.context_dim {
        return Err(Error::dim(
            "fuse",
            format!(
                "contextual embedding width: expected {}, got {}",
                config.context_dim,
                context.len()
            ),
        ));
    }
    let v = match visual {
        VisualInput::Images(images) => {
            encoder::encode_sequence_on(tape, binding, &config.cnn, images, config.dropout, training, rng)?
        }
        VisualInput::Zero => tape.constant(&[LSTM_HIDDEN], vec![T::zero(); LSTM_HIDDEN])?,
    };
    let c = tape.constant(&[context.len()], context.to_vec())?;
    let fused = fuse(tape, binding, v, c)?;
    classify(tape, binding, fused)
}

/// Inference-mode logits without keeping the tape.
pub fn predict_logits<T: Scalar>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    visual: VisualInput<'_>,
    context: &[T],
) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    // dropout is inactive so the rng is never drawn from
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let z = forward_nli(&mut tape, &b, config, visual, context, false, &mut rng)?;
    Ok(tape.value(z).to_vec())
}

/// Character-recognition head on top of the CNN: linear(128 -> n_classes).
pub(crate) const CHARREC_HEAD: (&str, &str) = ("charrec.head.weight", "charrec.head.bias");

pub fn init_charrec_params<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    cnn: &CnnConfig,
    n_classes: usize,
) -> Result<ModelParams<T>> {
    if n_classes < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {n_classes}")));
    }
    let mut all = ModelParams::new();
    encoder::init_visual_params(rng, cnn, &mut all)?;
    let mut p = ModelParams::new();
    for (name, t) in all.iter() {
        if name.starts_with("cnn.") {
            p.insert(name, t.clone());
        }
    }
    p.insert(CHARREC_HEAD.0, uniform(rng, n_classes, FC_WIDTH));
    p.insert(CHARREC_HEAD.1, Tensor::zeros(&[n_classes]));
    Ok(p)
}

pub fn charrec_logits_on<T: Scalar>(
    tape: &mut Tape<'_, T>,
    binding: &Binding,
    cnn: &CnnConfig,
    image: &GlyphImage,
) -> Result<Var> {
    let f = encoder::encode_image_on(tape, binding, cnn, image)?;
    tape.linear(f, binding.get(CHARREC_HEAD.0)?, binding.get(CHARREC_HEAD.1)?)
}
