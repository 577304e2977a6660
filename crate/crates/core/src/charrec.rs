//! Character recognition on noisy glyph renders, using the same CNN as the
//! NLI model with a linear softmax head.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{argmax, Tape};
use crate::encoder::CnnConfig;
use crate::error::{Error, Result};
use crate::fusion;
use crate::glyph::{BitmapFont, GlyphImage, GlyphSource};
use crate::optim::{OptimizerKind, OptimizerState};
use crate::params::ModelParams;
use crate::train::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CharrecConfig {
    pub classes: usize,
    pub samples_per_class: usize,
    /// Per-pixel flip probability.
    pub noise: f64,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub cnn: CnnConfig,
}

impl Default for CharrecConfig {
    fn default() -> Self {
        CharrecConfig {
            classes: 10,
            samples_per_class: 50,
            noise: 0.05,
            seed: 0,
            epochs: 8,
            lr: 1e-3,
            batch_size: 16,
            cnn: CnnConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharrecReport {
    pub characters: Vec<char>,
    pub n_train: usize,
    pub n_test: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// The `n` glyphs of `font` with the most ink, lowest codepoint first on ties.
pub fn pick_characters(font: &BitmapFont, n: usize) -> Result<Vec<char>> {
    let mut inked: Vec<(usize, char)> = font
        .glyphs()
        .iter()
        .filter(|(_, g)| g.ink_count() > 0)
        .map(|(&c, g)| (g.ink_count(), c))
        .collect();
    inked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let chars: Vec<char> = inked.into_iter().take(n).map(|(_, c)| c).collect();
    if chars.len() < n {
        return Err(Error::Config(format!(
            "font has {} inked glyphs, {n} classes requested",
            chars.len()
        )));
    }
    Ok(chars)
}

/// Copy of `image` with each pixel inverted with probability `p`.
pub fn flip_noise<R: Rng + ?Sized>(image: &GlyphImage, p: f64, rng: &mut R) -> GlyphImage {
    let pixels = image
        .pixels()
        .iter()
        .map(|&v| if rng.gen_bool(p) { 1.0 - v } else { v })
        .collect();
    GlyphImage::new(image.canvas(), pixels, image.source_text()).expect("same canvas")
}

fn run(
    params: &ModelParams<f32>,
    cnn: &CnnConfig,
    image: &GlyphImage,
    label: usize,
    grad_scale: Option<f32>,
) -> Result<(usize, Option<Vec<Vec<f32>>>)> {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let z = fusion::charrec_logits_on(&mut tape, &b, cnn, image)?;
    let pred = argmax(tape.value(z));
    let grads = match grad_scale {
        Some(s) => {
            let loss = tape.softmax_cross_entropy(z, label)?;
            if !tape.value(loss)[0].is_finite() {
                return Err(Error::NonFinite("character recognition loss".into()));
            }
            let loss = tape.scale(loss, s);
            let mut g = tape.backward(loss)?;
            Some(params.collect_grads(&b, &mut g))
        }
        None => None,
    };
    Ok((pred, grads))
}

fn accuracy(params: &ModelParams<f32>, cnn: &CnnConfig, data: &[(GlyphImage, usize)]) -> Result<f64> {
    let preds = data
        .par_iter()
        .map(|(img, label)| run(params, cnn, img, *label, None).map(|(p, _)| p))
        .collect::<Result<Vec<_>>>()?;
    let correct = preds.iter().zip(data).filter(|(p, (_, l))| **p == *l).count();
    Ok(correct as f64 / data.len().max(1) as f64)
}

/// Renders `samples_per_class` noisy copies of each character, trains on
/// the first 80% of every class and reports accuracy on the rest.
pub fn run_charrec(font: &BitmapFont, config: &CharrecConfig) -> Result<CharrecReport> {
    if !(0.0..=1.0).contains(&config.noise) {
        return Err(Error::Config(format!("noise must be in [0,1], got {}", config.noise)));
    }
    if config.samples_per_class < 2 || config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Config(
            "need samples_per_class >= 2, epochs >= 1, batch_size >= 1".into(),
        ));
    }
    let characters = pick_characters(font, config.classes)?;
    let n_train_per = ((config.samples_per_class * 4) / 5).clamp(1, config.samples_per_class - 1);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, &c) in characters.iter().enumerate() {
        let clean = font.render(&c.to_string(), config.cnn.canvas)?;
        for s in 0..config.samples_per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, 0x5555, label as u64, s as u64]));
            let img = flip_noise(&clean, config.noise, &mut rng);
            if s < n_train_per {
                train.push((img, label));
            } else {
                test.push((img, label));
            }
        }
    }

    let mut init = ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, 0x6666]));
    let mut params = fusion::init_charrec_params::<f32, _>(&mut init, &config.cnn, characters.len())?;
    let mut opt = OptimizerState::new(OptimizerKind::Adam, config.lr, &params, |_| true)?;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[
            config.seed,
            0x7777,
            epoch as u64,
        ])));
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f32;
            let grads = batch
                .par_iter()
                .map(|&i| run(&params, &config.cnn, &train[i].0, train[i].1, Some(scale)))
                .collect::<Result<Vec<_>>>()?;
            params.zero_grads();
            for (_, g) in &grads {
                params.accumulate_grads(g.as_ref().expect("training pass"))?;
            }
            opt.step(&mut params)?;
        }
        log::info!("charrec epoch {} done", epoch + 1);
    }
    Ok(CharrecReport {
        characters,
        n_train: train.len(),
        n_test: test.len(),
        train_accuracy: accuracy(&params, &config.cnn, &train)?,
        test_accuracy: accuracy(&params, &config.cnn, &test)?,
    })
}
