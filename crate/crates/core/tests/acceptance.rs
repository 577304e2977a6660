//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::{checks, fixtures, formats, unk_scan};
use glyphfuse::data::{gen_hash_embeddings, read_gemb, read_tsv, read_vocab, write_tsv};
use glyphfuse::glyph::{BitmapFont, Granularity, Segmenter};
use glyphfuse::synth::{synthetic_nli, Script};
use glyphfuse::train::{ablation_run, targeted_eval, train, unk_subset, Ablation, Dataset, TrainConfig, Trainer};
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let r = f();
    let took = start.elapsed();
    match r {
        Ok(d) if took <= limit => Ok(format!("{d}; {:.1}s", took.as_secs_f64())),
        Ok(d) => Err(format!("{d}; {:.1}s exceeds {}s", took.as_secs_f64(), limit.as_secs())),
        Err(d) => Err(format!("{d}; {:.1}s", took.as_secs_f64())),
    }
}

fn gradients() -> Outcome {
    let per_op = checks::per_op_errors();
    let (name, worst) = per_op
        .iter()
        .copied()
        .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let (e2e, n) = checks::end_to_end_error(3);
    ensure(
        worst < 1e-4 && e2e < 1e-3,
        format!(
            "{} ops, worst {name} {worst:.2e}; end-to-end {e2e:.2e} over {n} coords",
            per_op.len()
        ),
    )
}

fn oracles() -> Outcome {
    let d = checks::oracle_max_diff(100, 5);
    ensure(d < 1e-6, format!("max |diff| {d:.2e} over 100 instances"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_glyphfuse"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn train_args(out: &Path) -> Vec<String> {
    let f = fixtures();
    let s = |p: &Path| p.to_string_lossy().into_owned();
    vec![
        "train".into(),
        "--train".into(),
        s(&f.join("latin_train.tsv")),
        "--dev".into(),
        s(&f.join("latin_dev.tsv")),
        "--test".into(),
        s(&f.join("latin_test.tsv")),
        "--font".into(),
        s(&f.join("synthetic.bdf")),
        "--fake-emb".into(),
        "128".into(),
        "7".into(),
        "--epochs".into(),
        "3".into(),
        "--out".into(),
        s(out),
    ]
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let args = train_args(dir);
        run_cli(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
    }
    let files = ["model.gfck", "report.csv", "report.md", "history.csv", "manifest.json"];
    let mut differing = Vec::new();
    for f in files {
        let x = std::fs::read(a.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = std::fs::read(b.join(f)).map_err(|e| format!("{f}: {e}"))?;
        if x != y {
            differing.push(f);
        }
    }
    ensure(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} files byte-identical", files.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn round_trips() -> Outcome {
    let mut runner = TestRunner::new(Config {
        failure_persistence: None,
        ..Config::with_cases(100)
    });
    runner
        .run(&formats::gemb_table(), |t| formats::gemb_round_trip(&t))
        .map_err(|e| format!("GEMB: {e}"))?;
    runner
        .run(&formats::model_params(), |p| formats::gfck_round_trip(&p))
        .map_err(|e| format!("GFCK: {e}"))?;
    runner
        .run(&formats::font(), |f| formats::bdf_round_trip(&f))
        .map_err(|e| format!("BDF: {e}"))?;
    let f = fixtures();
    let font_text = std::fs::read_to_string(f.join("synthetic.bdf")).map_err(|e| e.to_string())?;
    let font = BitmapFont::load_bdf(f.join("synthetic.bdf")).map_err(|e| e.to_string())?;
    let gemb = std::fs::read(f.join("glyph_train.gemb")).map_err(|e| e.to_string())?;
    let table = read_gemb(f.join("glyph_train.gemb")).map_err(|e| e.to_string())?;
    ensure(
        font.to_bdf("glyphfuse-synthetic") == font_text && table.to_bytes() == gemb,
        "GEMB, GFCK, BDF: 100 cases each plus bundled fixtures".into(),
    )
}

fn latin_set(split: &str) -> Result<Dataset, String> {
    let ex = read_tsv(fixtures().join(format!("latin_{split}.tsv"))).map_err(|e| e.to_string())?;
    let emb = gen_hash_embeddings(&ex, 128, 7).map_err(|e| e.to_string())?;
    Dataset::new(ex, emb).map_err(|e| e.to_string())
}

fn overfit() -> Outcome {
    let (tr, dv) = (latin_set("train")?, latin_set("dev")?);
    let font = BitmapFont::load_bdf(fixtures().join("synthetic.bdf")).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        epochs: 300,
        ..Default::default()
    };
    let seg = Segmenter::new(Granularity::Word);
    let mut t = Trainer::new(&config, &tr, &dv, &font, &seg).map_err(|e| e.to_string())?;
    let mut acc = 0.0;
    for epoch in 1..=300 {
        t.train_epoch().map_err(|e| e.to_string())?;
        if epoch % 5 == 0 {
            acc = t.train_accuracy().map_err(|e| e.to_string())?;
            if acc == 1.0 {
                return Ok(format!("train accuracy 1.0 at epoch {epoch} on {} examples", tr.len()));
            }
        }
    }
    Err(format!("train accuracy {acc:.4} after 300 epochs"))
}

struct Glyph {
    train: Dataset,
    dev: Dataset,
    test: Dataset,
    vocab_lines: Vec<String>,
    font: BitmapFont,
}

fn glyph_data() -> Result<Glyph, String> {
    let f = fixtures();
    let load = |split: &str| -> Result<Dataset, String> {
        let ex = read_tsv(f.join(format!("glyph_{split}.tsv"))).map_err(|e| e.to_string())?;
        let emb = read_gemb(f.join(format!("glyph_{split}.gemb"))).map_err(|e| e.to_string())?;
        Dataset::new(ex, emb).map_err(|e| e.to_string())
    };
    let vocab_lines = std::fs::read_to_string(f.join("glyph_vocab.txt"))
        .map_err(|e| e.to_string())?
        .lines()
        .map(String::from)
        .filter(|l| !l.is_empty())
        .collect();
    Ok(Glyph {
        train: load("train")?,
        dev: load("dev")?,
        test: load("test")?,
        vocab_lines,
        font: BitmapFont::load_bdf(f.join("synthetic.bdf")).map_err(|e| e.to_string())?,
    })
}

fn glyph_config() -> TrainConfig {
    TrainConfig {
        epochs: 12,
        lr_visual: 1e-3,
        seed: 1,
        granularity: Granularity::Char,
        ..Default::default()
    }
}

fn ablation(g: &Glyph) -> Outcome {
    let seg = Segmenter::new(Granularity::Char);
    let cfg = glyph_config();
    let fused = train(&g.train, &g.dev, &cfg, &g.font, &seg).map_err(|e| e.to_string())?;
    let real = glyphfuse::train::evaluate(&fused.best_params, &fused.model, &g.test, &cfg, &g.font, &seg)
        .map_err(|e| e.to_string())?
        .accuracy;
    let random = ablation_run(&g.train, &g.dev, &g.test, &cfg, &g.font, &seg)
        .map_err(|e| e.to_string())?
        .accuracy;
    ensure(
        real - random >= 0.10,
        format!(
            "real {real:.4} vs random {random:.4}, gap {:.1} points",
            100.0 * (real - random)
        ),
    )
}

fn targeted(g: &Glyph) -> Outcome {
    let f = fixtures();
    let ex = read_tsv(f.join("targeted.tsv")).map_err(|e| e.to_string())?;
    let vocab = read_vocab(f.join("targeted_vocab.txt")).map_err(|e| e.to_string())?;
    let lines: Vec<String> = std::fs::read_to_string(f.join("targeted_vocab.txt"))
        .map_err(|e| e.to_string())?
        .lines()
        .map(String::from)
        .collect();
    let words: Vec<&str> = lines.iter().map(String::as_str).collect();
    let word_seg = Segmenter::new(Granularity::Word);
    let emb = gen_hash_embeddings(&ex, 8, 1).map_err(|e| e.to_string())?;
    let ds = Dataset::new(ex, emb).map_err(|e| e.to_string())?;
    let picked: Vec<u64> = unk_subset(&ds, &vocab, &word_seg)
        .examples
        .iter()
        .map(|e| e.id)
        .collect();
    let oracle = unk_scan(&ds.examples, &words, false);
    if picked != oracle {
        return Err(format!("word subset {picked:?} != oracle {oracle:?}"));
    }

    let char_seg = Segmenter::new(Granularity::Char);
    let glyph_vocab = read_vocab(f.join("glyph_vocab.txt")).map_err(|e| e.to_string())?;
    let gw: Vec<&str> = g.vocab_lines.iter().map(String::as_str).collect();
    let picked: Vec<u64> = unk_subset(&g.test, &glyph_vocab, &char_seg)
        .examples
        .iter()
        .map(|e| e.id)
        .collect();
    let oracle_c = unk_scan(&g.test.examples, &gw, true);
    if picked != oracle_c {
        return Err(format!(
            "char subset ({} ids) != oracle ({} ids)",
            picked.len(),
            oracle_c.len()
        ));
    }

    let cfg = glyph_config();
    let fused = train(&g.train, &g.dev, &cfg, &g.font, &char_seg).map_err(|e| e.to_string())?;
    let fused_acc = targeted_eval(
        &fused.best_params,
        &fused.model,
        &g.test,
        &glyph_vocab,
        &char_seg,
        &cfg,
        &g.font,
    )
    .map_err(|e| e.to_string())?
    .accuracy;
    let ctx_cfg = TrainConfig {
        ablation: Ablation::ContextOnly,
        ..glyph_config()
    };
    let ctx = train(&g.train, &g.dev, &ctx_cfg, &g.font, &char_seg).map_err(|e| e.to_string())?;
    let ctx_acc = targeted_eval(
        &ctx.best_params,
        &ctx.model,
        &g.test,
        &glyph_vocab,
        &char_seg,
        &ctx_cfg,
        &g.font,
    )
    .map_err(|e| e.to_string())?
    .accuracy;
    ensure(
        fused_acc >= ctx_acc,
        format!(
            "subsets match oracle ({} word, {} char); fused {fused_acc:.4} vs context-only {ctx_acc:.4}",
            oracle.len(),
            oracle_c.len()
        ),
    )
}

fn charrec() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let font = fixtures().join("synthetic.bdf");
    run_cli(&[
        "charrec",
        "--classes",
        "10",
        "--samples-per-class",
        "50",
        "--noise",
        "0.05",
        "--font",
        &font.to_string_lossy(),
        "--out",
        &tmp.path().to_string_lossy(),
    ])?;
    let csv = std::fs::read_to_string(tmp.path().join("charrec.csv")).map_err(|e| e.to_string())?;
    let acc: f64 = csv
        .lines()
        .find_map(|l| l.strip_prefix("test_accuracy,"))
        .ok_or("no test_accuracy row")?
        .parse()
        .map_err(|e| format!("{e}"))?;
    ensure(acc >= 0.95, format!("test accuracy {acc:.4}"))
}

fn splits() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut sizes = Vec::new();
    for (name, n, seed) in [("train", 4509, 1), ("dev", 501, 2), ("test", 2490, 3)] {
        let path = tmp.path().join(format!("{name}.tsv"));
        write_tsv(&path, &synthetic_nli(Script::Cjk, n, seed)).map_err(|e| e.to_string())?;
        let ex = read_tsv(&path).map_err(|e| e.to_string())?;
        let emb = gen_hash_embeddings(&ex, 128, 7).map_err(|e| e.to_string())?;
        let ds = Dataset::new(ex, emb).map_err(|e| e.to_string())?;
        if ds.len() != n {
            return Err(format!("{name}: loaded {} of {n}", ds.len()));
        }
        sizes.push(ds.len().to_string());
    }
    Ok(format!("loaded {}", sizes.join("/")))
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let glyph = glyph_data();
    let glyph = &glyph;
    let with_glyph = |f: fn(&Glyph) -> Outcome| -> Outcome {
        match glyph {
            Ok(g) => f(g),
            Err(e) => Err(format!("glyph fixtures: {e}")),
        }
    };
    let criteria: Vec<Criterion<'_>> = vec![
        ("gradient correctness", Box::new(move || timed(secs(60), gradients))),
        ("oracle equivalence", Box::new(move || timed(secs(10), oracles))),
        ("determinism", Box::new(move || timed(secs(120), determinism))),
        ("format round-trips", Box::new(round_trips)),
        ("overfit sanity", Box::new(move || timed(secs(300), overfit))),
        (
            "ablation direction",
            Box::new(move || timed(secs(300), || with_glyph(ablation))),
        ),
        ("targeted-eval mechanics", Box::new(move || with_glyph(targeted))),
        ("character recognition", Box::new(move || timed(secs(180), charrec))),
        ("data-split fidelity", Box::new(move || timed(secs(10), splits))),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let r = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match r {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
        }
    }
    println!("acceptance: {} criteria, {failed} failed", 9);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
