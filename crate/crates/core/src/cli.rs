//! Command-line front end. Exit codes: 0 success, 2 usage or input error,
//! 3 numerical failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::charrec::{run_charrec, CharrecConfig};
use crate::data::{
    gen_hash_embeddings, load_checkpoint_for, read_gemb, read_tsv, read_vocab, save_checkpoint, write_gemb,
    EmbeddingTable,
};
use crate::error::{Error, Result};
use crate::fusion::ModelConfig;
use crate::glyph::{BitmapFont, GlyphSource, Granularity, Segmenter};
use crate::report::{emit_report, markdown_table, EvalReport, ReportFormat};
use crate::train::{self, Ablation, Dataset, TrainConfig, TrainOutcome};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "glyphfuse",
    version,
    about = "Glyph-image + contextual embedding NLI toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render text segments to PGM images.
    Render(RenderArgs),
    /// Train a model and save its checkpoint.
    Train(RunArgs),
    /// Evaluate a checkpoint on a test split.
    Eval(RunArgs),
    /// Train and evaluate once per visual-input variant.
    Ablate(AblateArgs),
    /// Evaluate on the test examples containing unknown tokens.
    Targeted(RunArgs),
    /// Character recognition on noisy glyph renders.
    Charrec(CharrecArgs),
    /// Write hash-based stand-in embeddings for a TSV split.
    GenEmb(GenEmbArgs),
    /// Write the bundled synthetic fixtures.
    GenFixtures(GenFixturesArgs),
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long)]
    pub text: String,
    #[arg(long)]
    pub font: PathBuf,
    #[arg(long, default_value = "word")]
    pub mode: Granularity,
    #[arg(long)]
    pub dict: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// GEMB file, or a directory holding `<tsv stem>.gemb` per split.
    #[arg(long, conflicts_with = "fake_emb", required_unless_present = "fake_emb")]
    pub emb: Option<PathBuf>,
    /// Hash embeddings of width DIM from SEED instead of a GEMB file.
    #[arg(long, num_args = 2, value_names = ["DIM", "SEED"])]
    pub fake_emb: Option<Vec<u64>>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub font: PathBuf,
    #[arg(long)]
    pub mode: Option<Granularity>,
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// TOML training configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// CNN preset: `default` (30x60 canvas) or `paper-800`.
    #[arg(long)]
    pub preset: Option<String>,
    /// Checkpoint to evaluate instead of training.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Sweep the `grid` points of the configuration and keep the best.
    #[arg(long)]
    pub grid: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated list of none, random_image, context_only.
    #[arg(long, default_value = "none,random_image", value_delimiter = ',')]
    pub variants: Vec<String>,
}

#[derive(Args, Debug)]
pub struct CharrecArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 50)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long)]
    pub font: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenEmbArgs {
    #[arg(long)]
    pub tsv: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenFixturesArgs {
    #[arg(long)]
    pub out: PathBuf,
}

/// Everything needed to reproduce a run.
#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a C,
    inputs: BTreeMap<&'a str, String>,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    results: BTreeMap<String, String>,
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// Output paths are recorded relative to the manifest's directory.
fn output_name(p: &Path) -> String {
    p.file_name()
        .map_or_else(|| display(p), |n| n.to_string_lossy().into_owned())
}

fn write_manifest<C: Serialize>(out: &Path, manifest: &Manifest<'_, C>) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Invalid(e.to_string()))?;
    std::fs::write(out.join("manifest.json"), json + "\n")?;
    Ok(())
}

fn need<'p>(p: &'p Option<PathBuf>, flag: &str) -> Result<&'p Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("--{flag} is required for this command")))
}

fn segmenter(mode: Granularity, dict: Option<&Path>) -> Result<Segmenter> {
    match dict {
        Some(d) => Segmenter::load_dictionary(mode, d),
        None => Ok(Segmenter::new(mode)),
    }
}

struct Loaded {
    config: TrainConfig,
    font: BitmapFont,
    segmenter: Segmenter,
    inputs: BTreeMap<&'static str, String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<Loaded> {
        let mut config: TrainConfig = match &self.config {
            Some(p) => {
                let text = crate::error::read_text(p)?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => TrainConfig::default(),
        };
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(e) = self.epochs {
            config.epochs = e;
        }
        if let Some(m) = self.mode {
            config.granularity = m;
        }
        if let Some(p) = &self.preset {
            config.model.cnn = crate::encoder::CnnConfig::preset(p)?;
        }
        if let Some(d) = self.fake_dim()? {
            config.model.context_dim = d;
        }
        config.validate()?;
        let font = BitmapFont::load_bdf(&self.font)?;
        let segmenter = segmenter(config.granularity, self.dict.as_deref())?;
        let mut inputs = BTreeMap::new();
        inputs.insert("font", display(&self.font));
        for (k, v) in [
            ("train", &self.train),
            ("dev", &self.dev),
            ("test", &self.test),
            ("emb", &self.emb),
            ("vocab", &self.vocab),
            ("dict", &self.dict),
            ("config", &self.config),
            ("checkpoint", &self.checkpoint),
        ] {
            if let Some(p) = v {
                inputs.insert(k, display(p));
            }
        }
        if let Some(f) = &self.fake_emb {
            inputs.insert("fake_emb", format!("{} {}", f[0], f[1]));
        }
        Ok(Loaded {
            config,
            font,
            segmenter,
            inputs,
        })
    }

    fn fake_dim(&self) -> Result<Option<usize>> {
        match &self.fake_emb {
            Some(v) if v[0] == 0 => Err(Error::Config("--fake-emb DIM must be positive".into())),
            Some(v) => Ok(Some(v[0] as usize)),
            None => Ok(None),
        }
    }

    fn dataset(&self, tsv: &Path) -> Result<Dataset> {
        let examples = read_tsv(tsv)?;
        let embeddings: EmbeddingTable = match (&self.fake_emb, &self.emb) {
            (Some(f), _) => gen_hash_embeddings(&examples, f[0] as usize, f[1])?,
            (None, Some(e)) if e.is_dir() => {
                let stem = tsv
                    .file_stem()
                    .ok_or_else(|| Error::Config(format!("{} has no file name", tsv.display())))?;
                read_gemb(e.join(stem).with_extension("gemb"))?
            }
            (None, Some(e)) => read_gemb(e)?,
            (None, None) => return Err(Error::Config("one of --emb or --fake-emb is required".into())),
        };
        Dataset::new(examples, embeddings)
    }
}

fn write_reports(out: &Path, stem: &str, label: &str, report: &EvalReport, outputs: &mut Vec<String>) -> Result<()> {
    let csv = out.join(format!("{stem}.csv"));
    let md = out.join(format!("{stem}.md"));
    emit_report(report, label, &csv, ReportFormat::Csv)?;
    emit_report(report, label, &md, ReportFormat::Markdown)?;
    outputs.push(output_name(&csv));
    outputs.push(output_name(&md));
    Ok(())
}

fn write_history(out: &Path, outcome: &TrainOutcome, outputs: &mut Vec<String>) -> Result<()> {
    let mut s = String::from("epoch,train_loss,dev_loss,dev_accuracy\n");
    for r in &outcome.history {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.epoch, r.train_loss, r.dev_loss, r.dev_accuracy
        ));
    }
    let path = out.join("history.csv");
    std::fs::write(&path, s)?;
    outputs.push(output_name(&path));
    Ok(())
}

/// Trains (or loads `--checkpoint`) and returns the parameters, the
/// resolved model configuration and the training outcome if any.
fn obtain_model(
    args: &RunArgs,
    l: &Loaded,
    config: &TrainConfig,
    outputs: &mut Vec<String>,
    results: &mut BTreeMap<String, String>,
) -> Result<(crate::params::ModelParams<f32>, ModelConfig)> {
    if let Some(ck) = &args.checkpoint {
        let mut model = config.model;
        if let Some(test) = &args.test {
            model.context_dim = args.dataset(test)?.embeddings.dim();
        }
        let params = load_checkpoint_for(ck, &model)?;
        return Ok((params, model));
    }
    let train_set = args.dataset(need(&args.train, "train")?)?;
    let dev_set = args.dataset(need(&args.dev, "dev")?)?;
    let source: &dyn GlyphSource = &l.font;
    let outcome = if args.grid {
        let (point, outcome) = train::grid_search(&train_set, &dev_set, config, source, &l.segmenter)?;
        results.insert("grid_lr_visual".into(), point.lr_visual.to_string());
        results.insert("grid_lr_head".into(), point.lr_head.to_string());
        results.insert("grid_batch_size".into(), point.batch_size.to_string());
        outcome
    } else {
        train::train(&train_set, &dev_set, config, source, &l.segmenter)?
    };
    results.insert("best_epoch".into(), outcome.best_epoch.to_string());
    let ck = args.out.join("model.gfck");
    save_checkpoint(&outcome.best_params, &ck)?;
    outputs.push(output_name(&ck));
    write_history(&args.out, &outcome, outputs)?;
    Ok((outcome.best_params, outcome.model))
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let l = args.resolve()?;
    std::fs::create_dir_all(&args.out)?;
    let mut outputs = Vec::new();
    let mut results = BTreeMap::new();
    if args.checkpoint.is_some() {
        return Err(Error::Config("train does not take --checkpoint".into()));
    }
    let (params, model) = obtain_model(args, &l, &l.config, &mut outputs, &mut results)?;
    if let Some(test) = &args.test {
        let test_set = args.dataset(test)?;
        let report = train::evaluate(&params, &model, &test_set, &l.config, &l.font, &l.segmenter)?;
        results.insert("test_accuracy".into(), format!("{:.4}", report.accuracy));
        write_reports(&args.out, "report", "fused", &report, &mut outputs)?;
    }
    let config = TrainConfig {
        model,
        ..l.config.clone()
    };
    write_manifest(
        &args.out,
        &Manifest {
            command: "train",
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config: &config,
            inputs: l.inputs,
            outputs,
            results,
        },
    )
}

fn cmd_eval(args: &RunArgs, targeted: bool) -> Result<()> {
    let l = args.resolve()?;
    std::fs::create_dir_all(&args.out)?;
    let mut outputs = Vec::new();
    let mut results = BTreeMap::new();
    if !targeted && args.checkpoint.is_none() {
        return Err(Error::Config("eval requires --checkpoint".into()));
    }
    let test_set = args.dataset(need(&args.test, "test")?)?;
    let (params, model) = obtain_model(args, &l, &l.config, &mut outputs, &mut results)?;
    let report = if targeted {
        let vocab = read_vocab(need(&args.vocab, "vocab")?)?;
        train::targeted_eval(&params, &model, &test_set, &vocab, &l.segmenter, &l.config, &l.font)?
    } else {
        train::evaluate(&params, &model, &test_set, &l.config, &l.font, &l.segmenter)?
    };
    results.insert("accuracy".into(), format!("{:.4}", report.accuracy));
    let stem = if targeted { "targeted" } else { "report" };
    write_reports(&args.out, stem, "fused", &report, &mut outputs)?;
    let config = TrainConfig {
        model,
        ..l.config.clone()
    };
    write_manifest(
        &args.out,
        &Manifest {
            command: if targeted { "targeted" } else { "eval" },
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config: &config,
            inputs: l.inputs,
            outputs,
            results,
        },
    )
}

fn variant_label(a: Ablation) -> &'static str {
    match a {
        Ablation::None => "fused",
        Ablation::RandomImage => "random images",
        Ablation::ContextOnly => "context only",
    }
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let run = &args.run;
    let l = run.resolve()?;
    std::fs::create_dir_all(&run.out)?;
    let train_set = run.dataset(need(&run.train, "train")?)?;
    let dev_set = run.dataset(need(&run.dev, "dev")?)?;
    let test_set = run.dataset(need(&run.test, "test")?)?;
    let mut outputs = Vec::new();
    let mut results = BTreeMap::new();
    let mut reports = Vec::new();
    for v in &args.variants {
        let ablation: Ablation = v.trim().parse()?;
        let cfg = TrainConfig {
            ablation,
            ..l.config.clone()
        };
        let outcome = train::train(&train_set, &dev_set, &cfg, &l.font, &l.segmenter)?;
        let report = train::evaluate(
            &outcome.best_params,
            &outcome.model,
            &test_set,
            &cfg,
            &l.font,
            &l.segmenter,
        )?;
        let stem = format!("report_{}", v.trim());
        write_reports(&run.out, &stem, variant_label(ablation), &report, &mut outputs)?;
        results.insert(format!("{}_accuracy", v.trim()), format!("{:.4}", report.accuracy));
        reports.push((variant_label(ablation), report));
    }
    let table = run.out.join("ablation.md");
    let rows: Vec<(&str, &EvalReport)> = reports.iter().map(|(n, r)| (*n, r)).collect();
    std::fs::write(&table, markdown_table(&rows))?;
    outputs.push(output_name(&table));
    write_manifest(
        &run.out,
        &Manifest {
            command: "ablate",
            version: env!("CARGO_PKG_VERSION"),
            seed: l.config.seed,
            config: &l.config,
            inputs: l.inputs,
            outputs,
            results,
        },
    )
}

fn cmd_render(args: &RenderArgs) -> Result<()> {
    let font = BitmapFont::load_bdf(&args.font)?;
    let seg = segmenter(args.mode, args.dict.as_deref())?;
    std::fs::create_dir_all(&args.out)?;
    for (i, s) in seg.segment(&args.text).iter().enumerate() {
        let img = crate::glyph::render(s, &font)?;
        std::fs::write(args.out.join(format!("seg_{i}.pgm")), img.to_pgm())?;
    }
    Ok(())
}

fn cmd_charrec(args: &CharrecArgs) -> Result<()> {
    let font = BitmapFont::load_bdf(&args.font)?;
    let mut config = CharrecConfig {
        classes: args.classes,
        samples_per_class: args.samples_per_class,
        noise: args.noise,
        seed: args.seed,
        ..Default::default()
    };
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    let report = run_charrec(&font, &config)?;
    std::fs::create_dir_all(&args.out)?;
    let csv = args.out.join("charrec.csv");
    std::fs::write(
        &csv,
        format!(
            "metric,value\ntest_accuracy,{:.4}\ntrain_accuracy,{:.4}\nn_train,{}\nn_test,{}\n",
            report.test_accuracy, report.train_accuracy, report.n_train, report.n_test
        ),
    )?;
    let mut inputs = BTreeMap::new();
    inputs.insert("font", display(&args.font));
    let mut results = BTreeMap::new();
    results.insert("test_accuracy".into(), format!("{:.4}", report.test_accuracy));
    results.insert("characters".into(), report.characters.iter().collect());
    println!("test_accuracy {:.4}", report.test_accuracy);
    write_manifest(
        &args.out,
        &Manifest {
            command: "charrec",
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config: &config,
            inputs,
            outputs: vec![output_name(&csv)],
            results,
        },
    )
}

fn cmd_gen_emb(args: &GenEmbArgs) -> Result<()> {
    let examples = read_tsv(&args.tsv)?;
    write_gemb(&gen_hash_embeddings(&examples, args.dim, args.seed)?, &args.out)
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Render(a) => cmd_render(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a, false),
        Command::Targeted(a) => cmd_eval(a, true),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Charrec(a) => cmd_charrec(a),
        Command::GenEmb(a) => cmd_gen_emb(a),
        Command::GenFixtures(a) => crate::synth::write_fixtures(&a.out).map(|_| ()),
    }
}

/// Caps the rayon pool at `GLYPHFUSE_THREADS` when set.
fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("GLYPHFUSE_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("GLYPHFUSE_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

pub fn exit_code(err: &Error) -> u8 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|_| dispatch(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
