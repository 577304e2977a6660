//! Training loop, dev-loss model selection and the evaluation modes.
//!
//! Each example runs on its own tape. Within a minibatch the examples are
//! processed in parallel and their gradients are summed in batch order, so
//! results do not depend on the number of worker threads.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{argmax, Tape};
use crate::data::hash_emb::mix64;
use crate::data::{count_unk, EmbeddingTable, Example, Label, Vocab};
use crate::error::{Error, Result};
use crate::fusion::{self, ModelConfig, VisualInput};
use crate::glyph::{Canvas, GlyphImage, GlyphSource, Granularity, Segmenter};
use crate::optim::{OptimizerKind, OptimizerState};
use crate::params::ModelParams;
use crate::report::{EvalReport, TargetedSummary};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// Every token image, separator included, is replaced by a seeded
    /// Bernoulli(0.5) image.
    RandomImage,
    /// The visual embedding is replaced by zeros.
    ContextOnly,
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Ablation::None),
            "random_image" | "random-image" => Ok(Ablation::RandomImage),
            "context_only" | "context-only" => Ok(Ablation::ContextOnly),
            other => Err(Error::Config(format!("unknown ablation `{other}`"))),
        }
    }
}

/// One point of a learning-rate / batch-size sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lr_visual: f64,
    pub lr_head: f64,
    pub batch_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Learning rate of the CNN and LSTM.
    pub lr_visual: f64,
    /// Learning rate of the projections and the MLP.
    #[serde(alias = "lr_fusion_mlp")]
    pub lr_head: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub granularity: Granularity,
    pub ablation: Ablation,
    pub optimizer: OptimizerKind,
    pub model: ModelConfig,
    pub grid: Vec<GridPoint>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            lr_visual: 4e-6,
            lr_head: 1e-3,
            batch_size: 16,
            seed: 0,
            granularity: Granularity::Word,
            ablation: Ablation::None,
            optimizer: OptimizerKind::Adam,
            model: ModelConfig::default(),
            grid: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        for (name, lr) in [("lr_visual", self.lr_visual), ("lr_head", self.lr_head)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        for p in &self.grid {
            TrainConfig {
                lr_visual: p.lr_visual,
                lr_head: p.lr_head,
                batch_size: p.batch_size,
                grid: Vec::new(),
                ..self.clone()
            }
            .validate()?;
        }
        self.model.validate()
    }

    /// Flat `key -> value` echo for reports.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("epochs".into(), self.epochs.to_string());
        m.insert("lr_visual".into(), self.lr_visual.to_string());
        m.insert("lr_head".into(), self.lr_head.to_string());
        m.insert("batch_size".into(), self.batch_size.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("granularity".into(), self.granularity.to_string());
        m.insert("ablation".into(), format!("{:?}", self.ablation));
        m.insert("optimizer".into(), format!("{:?}", self.optimizer));
        m
    }
}

/// Examples of one split together with their contextual embeddings.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub embeddings: EmbeddingTable,
}

impl Dataset {
    /// Fails with the first example id that has no embedding.
    pub fn new(examples: Vec<Example>, embeddings: EmbeddingTable) -> Result<Self> {
        if let Some(e) = examples.iter().find(|e| embeddings.get(e.id).is_none()) {
            return Err(Error::MissingEmbedding(e.id));
        }
        Ok(Dataset { examples, embeddings })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn subset(&self, keep: impl Fn(&Example) -> bool) -> Dataset {
        Dataset {
            examples: self.examples.iter().filter(|e| keep(e)).cloned().collect(),
            embeddings: self.embeddings.clone(),
        }
    }
}

/// Which split an example came from; part of the random-image key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train = 0,
    Dev = 1,
    Test = 2,
}

/// Folds several words into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5851_f42d_4c95_7f2d, |acc, &p| mix64(acc ^ mix64(p)))
}

/// Seed of the random image replacing token `token` of example `id`.
pub fn random_image_seed(seed: u64, split: Split, id: u64, token: usize) -> u64 {
    derive_seed(&[seed, 0x1111, split as u64, id, token as u64])
}

enum Tokens {
    Rendered(Vec<Arc<GlyphImage>>),
    Random(Vec<u64>),
    Zero,
}

struct Prepared {
    id: u64,
    label: Label,
    context: Vec<f32>,
    tokens: Tokens,
}

impl Prepared {
    fn images(&self, canvas: Canvas) -> Option<Vec<GlyphImage>> {
        match &self.tokens {
            Tokens::Rendered(imgs) => Some(imgs.iter().map(|i| GlyphImage::clone(i)).collect()),
            Tokens::Random(seeds) => Some(
                seeds
                    .iter()
                    .map(|&s| GlyphImage::random(&mut ChaCha8Rng::seed_from_u64(s), canvas))
                    .collect(),
            ),
            Tokens::Zero => None,
        }
    }
}

/// Turns examples into token image sequences, rendering each distinct
/// segment once.
struct Preparer<'s> {
    source: &'s dyn GlyphSource,
    segmenter: &'s Segmenter,
    canvas: Canvas,
    ablation: Ablation,
    seed: u64,
    cache: HashMap<String, Arc<GlyphImage>>,
    separator: Arc<GlyphImage>,
}

impl<'s> Preparer<'s> {
    fn new(source: &'s dyn GlyphSource, segmenter: &'s Segmenter, config: &TrainConfig) -> Self {
        let canvas = config.model.cnn.canvas;
        Preparer {
            source,
            segmenter,
            canvas,
            ablation: config.ablation,
            seed: config.seed,
            cache: HashMap::new(),
            separator: Arc::new(GlyphImage::separator(canvas)),
        }
    }

    fn segment_count(&self, e: &Example) -> usize {
        self.segmenter.segment(&e.premise).len() + 1 + self.segmenter.segment(&e.hypothesis).len()
    }

    fn rendered(&mut self, segment: String) -> Result<Arc<GlyphImage>> {
        if let Some(img) = self.cache.get(&segment) {
            return Ok(img.clone());
        }
        let img = Arc::new(self.source.render(&segment, self.canvas)?);
        self.cache.insert(segment, img.clone());
        Ok(img)
    }

    fn prepare(&mut self, data: &Dataset, split: Split, context_dim: usize) -> Result<Vec<Prepared>> {
        if data.embeddings.dim() != context_dim {
            return Err(Error::dim(
                "dataset",
                format!(
                    "{split:?} embeddings have dim {}, expected {context_dim}",
                    data.embeddings.dim()
                ),
            ));
        }
        let mut out = Vec::with_capacity(data.len());
        for e in &data.examples {
            let context = data.embeddings.get(e.id).ok_or(Error::MissingEmbedding(e.id))?.to_vec();
            let tokens = match self.ablation {
                Ablation::None => {
                    let mut seq = Vec::new();
                    for s in self.segmenter.segment(&e.premise) {
                        seq.push(self.rendered(s)?);
                    }
                    seq.push(self.separator.clone());
                    for s in self.segmenter.segment(&e.hypothesis) {
                        seq.push(self.rendered(s)?);
                    }
                    Tokens::Rendered(seq)
                }
                Ablation::RandomImage => Tokens::Random(
                    (0..self.segment_count(e))
                        .map(|t| random_image_seed(self.seed, split, e.id, t))
                        .collect(),
                ),
                Ablation::ContextOnly => Tokens::Zero,
            };
            out.push(Prepared {
                id: e.id,
                label: e.label,
                context,
                tokens,
            });
        }
        Ok(out)
    }
}

/// Loss, logits and optional per-parameter gradients.
type ExampleOutput = (f64, Vec<f32>, Option<Vec<Vec<f32>>>);

/// Loss and, when `grad_scale` is set, per-parameter gradients scaled by it.
fn run_example(
    params: &ModelParams<f32>,
    model: &ModelConfig,
    ex: &Prepared,
    training: bool,
    dropout_seed: u64,
    grad_scale: Option<f32>,
) -> Result<ExampleOutput> {
    let images = ex.images(model.cnn.canvas);
    let visual = match &images {
        Some(imgs) => VisualInput::Images(imgs),
        None => VisualInput::Zero,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let mut tape = Tape::new();
    let binding = params.bind(&mut tape);
    let logits = fusion::forward_nli(&mut tape, &binding, model, visual, &ex.context, training, &mut rng)?;
    let z = tape.value(logits).to_vec();
    let loss = tape.softmax_cross_entropy(logits, ex.label.index())?;
    let loss_value = tape.value(loss)[0] as f64;
    if !loss_value.is_finite() {
        return Err(Error::NonFinite(format!("loss for example {}", ex.id)));
    }
    let grads = match grad_scale {
        Some(s) => {
            let scaled = tape.scale(loss, s);
            let mut g = tape.backward(scaled)?;
            Some(params.collect_grads(&binding, &mut g))
        }
        None => None,
    };
    Ok((loss_value, z, grads))
}

struct Scored {
    loss: f64,
    gold: Label,
    predicted: Label,
}

fn score(params: &ModelParams<f32>, model: &ModelConfig, data: &[Prepared]) -> Result<Vec<Scored>> {
    data.par_iter()
        .map(|ex| {
            let (loss, z, _) = run_example(params, model, ex, false, 0, None)?;
            Ok(Scored {
                loss,
                gold: ex.label,
                predicted: Label::from_index(argmax(&z)).expect("three logits"),
            })
        })
        .collect()
}

fn mean_loss(scored: &[Scored]) -> f64 {
    if scored.is_empty() {
        return 0.0;
    }
    scored.iter().map(|s| s.loss).sum::<f64>() / scored.len() as f64
}

fn accuracy(scored: &[Scored]) -> f64 {
    if scored.is_empty() {
        return 0.0;
    }
    scored.iter().filter(|s| s.gold == s.predicted).count() as f64 / scored.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_accuracy: f64,
}

pub fn is_visual_param(name: &str) -> bool {
    name.starts_with("cnn.") || name.starts_with("lstm.")
}

/// Stepwise trainer. [`train`] drives it for `config.epochs` epochs.
pub struct Trainer {
    config: TrainConfig,
    model: ModelConfig,
    params: ModelParams<f32>,
    visual_opt: OptimizerState<f32>,
    head_opt: OptimizerState<f32>,
    train: Vec<Prepared>,
    dev: Vec<Prepared>,
    epoch: usize,
}

impl Trainer {
    pub fn new(
        config: &TrainConfig,
        train: &Dataset,
        dev: &Dataset,
        source: &dyn GlyphSource,
        segmenter: &Segmenter,
    ) -> Result<Self> {
        config.validate()?;
        if segmenter.mode() != config.granularity {
            return Err(Error::Config(format!(
                "segmenter granularity {} differs from config granularity {}",
                segmenter.mode(),
                config.granularity
            )));
        }
        if train.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let mut model = config.model;
        model.context_dim = train.embeddings.dim();
        model.validate()?;
        let mut prep = Preparer::new(source, segmenter, config);
        let train_p = prep.prepare(train, Split::Train, model.context_dim)?;
        let dev_p = prep.prepare(dev, Split::Dev, model.context_dim)?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, 0x2222]));
        let params = fusion::init_params(&mut init_rng, &model)?;
        let visual_opt = OptimizerState::new(config.optimizer, config.lr_visual, &params, is_visual_param)?;
        let head_opt = OptimizerState::new(config.optimizer, config.lr_head, &params, |n| !is_visual_param(n))?;
        Ok(Trainer {
            config: config.clone(),
            model,
            params,
            visual_opt,
            head_opt,
            train: train_p,
            dev: dev_p,
            epoch: 0,
        })
    }

    pub fn params(&self) -> &ModelParams<f32> {
        &self.params
    }

    /// The model configuration with the context width resolved from the data.
    pub fn model_config(&self) -> &ModelConfig {
        &self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One pass over the shuffled training set; returns the mean train loss.
    pub fn train_epoch(&mut self) -> Result<f64> {
        let epoch = self.epoch;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[
            self.config.seed,
            0x3333,
            epoch as u64,
        ])));
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let scale = 1.0 / batch.len() as f32;
            let results: Vec<ExampleOutput> = batch
                .par_iter()
                .map(|&i| {
                    let ex = &self.train[i];
                    let seed = derive_seed(&[self.config.seed, 0x4444, epoch as u64, ex.id]);
                    run_example(&self.params, &self.model, ex, true, seed, Some(scale))
                })
                .collect::<Result<_>>()?;
            self.params.zero_grads();
            for (loss, _, grads) in &results {
                total += loss;
                self.params.accumulate_grads(grads.as_ref().expect("training pass"))?;
            }
            self.visual_opt.step(&mut self.params)?;
            self.head_opt.step(&mut self.params)?;
        }
        for (name, t) in self.params.iter() {
            if !t.all_finite() {
                return Err(Error::NonFinite(format!(
                    "parameter `{name}` after epoch {}",
                    epoch + 1
                )));
            }
        }
        self.epoch += 1;
        Ok(total / self.train.len() as f64)
    }

    /// Dropout-off accuracy on the training set.
    pub fn train_accuracy(&self) -> Result<f64> {
        Ok(accuracy(&score(&self.params, &self.model, &self.train)?))
    }

    /// Dropout-off `(loss, accuracy)` on the dev set.
    pub fn dev_metrics(&self) -> Result<(f64, f64)> {
        let s = score(&self.params, &self.model, &self.dev)?;
        Ok((mean_loss(&s), accuracy(&s)))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best_params: ModelParams<f32>,
    /// 1-based epoch the parameters were taken from.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub model: ModelConfig,
}

/// Index of the smallest dev loss, earliest on ties.
pub fn select_epoch(history: &[EpochRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in history.iter().enumerate() {
        if best.is_none_or(|b| r.dev_loss < history[b].dev_loss) {
            best = Some(i);
        }
    }
    best
}

/// Trains for `config.epochs` epochs and keeps the parameters of the epoch
/// with the lowest dev loss.
pub fn train(
    train_set: &Dataset,
    dev_set: &Dataset,
    config: &TrainConfig,
    source: &dyn GlyphSource,
    segmenter: &Segmenter,
) -> Result<TrainOutcome> {
    if dev_set.is_empty() {
        return Err(Error::Config("dev set is empty; model selection needs dev loss".into()));
    }
    let mut t = Trainer::new(config, train_set, dev_set, source, segmenter)?;
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, ModelParams<f32>)> = None;
    for _ in 0..config.epochs {
        let train_loss = t.train_epoch()?;
        let (dev_loss, dev_accuracy) = t.dev_metrics()?;
        log::info!(
            "epoch {} train_loss {train_loss:.6} dev_loss {dev_loss:.6} dev_acc {dev_accuracy:.4}",
            t.epochs_done()
        );
        history.push(EpochRecord {
            epoch: t.epochs_done(),
            train_loss,
            dev_loss,
            dev_accuracy,
        });
        if best.as_ref().is_none_or(|(l, _)| dev_loss < *l) {
            best = Some((dev_loss, t.params().clone()));
        }
    }
    let best_epoch = select_epoch(&history).expect("at least one epoch") + 1;
    let (_, best_params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best_params,
        best_epoch,
        history,
        model: t.model,
    })
}

/// Runs [`train`] once per grid point and returns the run with the lowest
/// selected dev loss (earliest grid point on ties) with its point.
pub fn grid_search(
    train_set: &Dataset,
    dev_set: &Dataset,
    config: &TrainConfig,
    source: &dyn GlyphSource,
    segmenter: &Segmenter,
) -> Result<(GridPoint, TrainOutcome)> {
    if config.grid.is_empty() {
        return Err(Error::Config("grid search needs at least one grid point".into()));
    }
    let mut best: Option<(f64, GridPoint, TrainOutcome)> = None;
    for &p in &config.grid {
        let cfg = TrainConfig {
            lr_visual: p.lr_visual,
            lr_head: p.lr_head,
            batch_size: p.batch_size,
            grid: Vec::new(),
            ..config.clone()
        };
        let out = train(train_set, dev_set, &cfg, source, segmenter)?;
        let loss = out.history[out.best_epoch - 1].dev_loss;
        if best.as_ref().is_none_or(|(l, _, _)| loss < *l) {
            best = Some((loss, p, out));
        }
    }
    let (_, p, out) = best.expect("non-empty grid");
    Ok((p, out))
}

/// Dropout-off accuracy and confusion on `test_set`. Parameters are only read.
pub fn evaluate(
    params: &ModelParams<f32>,
    model: &ModelConfig,
    test_set: &Dataset,
    config: &TrainConfig,
    source: &dyn GlyphSource,
    segmenter: &Segmenter,
) -> Result<EvalReport> {
    let mut prep = Preparer::new(source, segmenter, config);
    let data = prep.prepare(test_set, Split::Test, model.context_dim)?;
    let scored = score(params, model, &data)?;
    let mut report = EvalReport::from_predictions(scored.iter().map(|s| (s.gold, s.predicted)));
    report.config = config.echo();
    Ok(report)
}

/// Examples with at least one segment outside `vocab`.
pub fn unk_subset(test_set: &Dataset, vocab: &Vocab, segmenter: &Segmenter) -> Dataset {
    test_set.subset(|e| count_unk(e, vocab, segmenter) >= 1)
}

/// [`evaluate`] restricted to the examples containing an unknown token.
pub fn targeted_eval(
    params: &ModelParams<f32>,
    model: &ModelConfig,
    test_set: &Dataset,
    vocab: &Vocab,
    segmenter: &Segmenter,
    config: &TrainConfig,
    source: &dyn GlyphSource,
) -> Result<EvalReport> {
    let subset = unk_subset(test_set, vocab, segmenter);
    let mut report = evaluate(params, model, &subset, config, source, segmenter)?;
    report.targeted = Some(TargetedSummary {
        accuracy: report.accuracy,
        unk_sentences: subset.len(),
        empty: subset.is_empty(),
    });
    if subset.is_empty() {
        log::warn!("targeted evaluation: no test example contains an unknown token");
    }
    Ok(report)
}

/// Trains and evaluates with every glyph image replaced by random images.
pub fn ablation_run(
    train_set: &Dataset,
    dev_set: &Dataset,
    test_set: &Dataset,
    config: &TrainConfig,
    source: &dyn GlyphSource,
    segmenter: &Segmenter,
) -> Result<EvalReport> {
    let cfg = TrainConfig {
        ablation: Ablation::RandomImage,
        ..config.clone()
    };
    let out = train(train_set, dev_set, &cfg, source, segmenter)?;
    evaluate(&out.best_params, &out.model, test_set, &cfg, source, segmenter)
}
