//! Procedural fixtures: a bitmap font covering Latin, Devanagari and a CJK
//! block, small NLI sets per script, and a task whose labels are readable
//! from the glyphs alone.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{gen_hash_embeddings, write_gemb, write_tsv, EmbeddingTable, Example, Label, Vocab};
use crate::error::Result;
use crate::glyph::{Bitmap, BitmapFont};

pub const FONT_HEIGHT: usize = 16;
pub const LATIN_WIDTH: usize = 8;
pub const DEVANAGARI_WIDTH: usize = 12;
pub const CJK_WIDTH: usize = 16;

/// First and count of the CJK ideographs in the synthetic font.
pub const CJK_FIRST: u32 = 0x4E00;
pub const CJK_COUNT: u32 = 256;
/// Devanagari consonants KA..HA.
pub const DEVANAGARI_FIRST: u32 = 0x0915;
pub const DEVANAGARI_LAST: u32 = 0x0939;

const RADICALS: usize = 8;

fn hline(b: &mut Bitmap, y: usize, x0: usize, x1: usize) {
    for x in x0..=x1 {
        b.set(x, y, true);
    }
}

fn vline(b: &mut Bitmap, x: usize, y0: usize, y1: usize) {
    for y in y0..=y1 {
        b.set(x, y, true);
    }
}

/// `n` random horizontal or vertical strokes inside the inclusive box.
fn strokes<R: Rng>(rng: &mut R, b: &mut Bitmap, (x0, y0, x1, y1): (usize, usize, usize, usize), n: usize) {
    for _ in 0..n {
        if rng.gen_bool(0.5) {
            let y = rng.gen_range(y0..=y1);
            let a = rng.gen_range(x0..=x1);
            let c = rng.gen_range(x0..=x1);
            hline(b, y, a.min(c), a.max(c));
        } else {
            let x = rng.gen_range(x0..=x1);
            let a = rng.gen_range(y0..=y1);
            let c = rng.gen_range(y0..=y1);
            vline(b, x, a.min(c), a.max(c));
        }
    }
}

fn radical(index: usize) -> Bitmap {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCA11 + index as u64);
    let mut b = Bitmap::blank(CJK_WIDTH, FONT_HEIGHT);
    vline(&mut b, 1 + index % 3, 1, 14);
    strokes(&mut rng, &mut b, (0, 1, 5, 14), 4);
    b
}

/// Radical index of a synthetic CJK ideograph.
pub fn cjk_radical(c: char) -> Option<usize> {
    let k = (c as u32).checked_sub(CJK_FIRST)?;
    (k < CJK_COUNT).then_some(k as usize % RADICALS)
}

/// Draws glyphs until one differs from everything already in `seen`.
fn distinct(seen: &mut BTreeSet<Vec<bool>>, mut draw: impl FnMut() -> Bitmap) -> Bitmap {
    loop {
        let b = draw();
        if b.ink_count() > 0 && seen.insert(b.bits().to_vec()) {
            return b;
        }
    }
}

/// Deterministic 16-px font: printable ASCII, Devanagari consonants and
/// 256 ideographs from U+4E00, each built from one of 8 left-hand radicals
/// and a random right-hand component.
pub fn synthetic_font() -> BitmapFont {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6C79_7068);
    let mut glyphs = BTreeMap::new();
    let mut seen = BTreeSet::new();
    glyphs.insert(' ', Bitmap::blank(LATIN_WIDTH / 2, FONT_HEIGHT));
    for c in '!'..='~' {
        let b = distinct(&mut seen, || {
            let mut b = Bitmap::blank(LATIN_WIDTH, FONT_HEIGHT);
            let n = rng.gen_range(3..=5);
            strokes(&mut rng, &mut b, (1, 3, 6, 13), n);
            b
        });
        glyphs.insert(c, b);
    }
    for cp in DEVANAGARI_FIRST..=DEVANAGARI_LAST {
        let b = distinct(&mut seen, || {
            let mut b = Bitmap::blank(DEVANAGARI_WIDTH, FONT_HEIGHT);
            hline(&mut b, 2, 0, DEVANAGARI_WIDTH - 1);
            let n = rng.gen_range(3..=5);
            strokes(&mut rng, &mut b, (1, 3, 10, 14), n);
            b
        });
        glyphs.insert(char::from_u32(cp).expect("valid codepoint"), b);
    }
    let radicals: Vec<Bitmap> = (0..RADICALS).map(radical).collect();
    for k in 0..CJK_COUNT {
        let r = &radicals[k as usize % RADICALS];
        let b = distinct(&mut seen, || {
            let mut b = r.clone();
            let n = rng.gen_range(4..=7);
            strokes(&mut rng, &mut b, (7, 1, 14, 14), n);
            b
        });
        glyphs.insert(char::from_u32(CJK_FIRST + k).expect("valid codepoint"), b);
    }
    BitmapFont::new(FONT_HEIGHT, glyphs, LATIN_WIDTH).expect("consistent synthetic font")
}

/// Script family of a synthetic NLI fixture.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Script {
    Latin,
    Devanagari,
    Cjk,
}

impl Script {
    pub const ALL: [Script; 3] = [Script::Latin, Script::Devanagari, Script::Cjk];

    pub fn name(self) -> &'static str {
        match self {
            Script::Latin => "latin",
            Script::Devanagari => "devanagari",
            Script::Cjk => "cjk",
        }
    }

    fn letter<R: Rng>(self, rng: &mut R) -> char {
        let cp = match self {
            Script::Latin => rng.gen_range('a' as u32..='z' as u32),
            Script::Devanagari => rng.gen_range(DEVANAGARI_FIRST..=DEVANAGARI_LAST),
            Script::Cjk => rng.gen_range(CJK_FIRST..CJK_FIRST + CJK_COUNT),
        };
        char::from_u32(cp).expect("valid codepoint")
    }

    fn word<R: Rng>(self, rng: &mut R) -> String {
        let len = match self {
            Script::Latin => rng.gen_range(2..=4),
            Script::Devanagari => rng.gen_range(2..=3),
            Script::Cjk => rng.gen_range(1..=2),
        };
        (0..len).map(|_| self.letter(rng)).collect()
    }
}

/// `n` examples of two-word sentences with balanced labels in random order.
pub fn synthetic_nli(script: Script, n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (script as u64 + 1).wrapping_mul(0x9E37));
    let lexicon: Vec<String> = (0..24).map(|_| script.word(&mut rng)).collect();
    let mut labels: Vec<Label> = (0..n).map(|i| Label::ALL[i % 3]).collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let mut sentence = || {
                format!(
                    "{} {}",
                    lexicon.choose(&mut rng).unwrap(),
                    lexicon.choose(&mut rng).unwrap()
                )
            };
            Example {
                id: i as u64,
                premise: sentence(),
                hypothesis: sentence(),
                label,
            }
        })
        .collect()
}

/// A 10-example set where exactly examples 1, 4, 6 and 9 contain a word
/// missing from [`targeted_vocab`].
pub fn targeted_fixture() -> Vec<Example> {
    let rows = [
        ("the cat sat", "a cat rested", Label::Entailment),
        ("the dog ran", "zorblax ran", Label::Neutral),
        ("a bird sang", "the bird sang", Label::Entailment),
        ("the cat ran", "the dog sat", Label::Contradiction),
        ("quuxen sat", "a cat sat", Label::Neutral),
        ("a dog rested", "the dog rested", Label::Entailment),
        ("the bird flew", "a bird flew far", Label::Neutral),
        ("a cat sang", "the cat sat", Label::Contradiction),
        ("the dog sang", "a dog sang", Label::Entailment),
        ("blorf ran", "wibble sat", Label::Contradiction),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, &(p, h, label))| Example {
            id: i as u64,
            premise: p.into(),
            hypothesis: h.into(),
            label,
        })
        .collect()
}

const TARGETED_WORDS: [&str; 10] = ["a", "bird", "cat", "dog", "flew", "ran", "rested", "sang", "sat", "the"];

pub fn targeted_vocab() -> Vocab {
    Vocab::new(TARGETED_WORDS.into_iter().map(String::from))
}

/// Token standing in for a glyph-task marker in the context-side text.
pub const UNK: &str = "[UNK]";

/// A split of the glyph-determined task.
#[derive(Clone, Debug)]
pub struct GlyphTaskSplit {
    pub examples: Vec<Example>,
    pub embeddings: EmbeddingTable,
}

/// Three-class task over the synthetic CJK block. The hypothesis is a
/// single marker ideograph whose radical (0, 1 or 2) is the label; the
/// premise is a filler ideograph with radical 3..8. Context embeddings are
/// computed with the marker replaced by [`UNK`], so they carry no label
/// information and only the glyph images can separate the classes.
#[derive(Clone, Debug)]
pub struct GlyphTask {
    pub train: GlyphTaskSplit,
    pub dev: GlyphTaskSplit,
    pub test: GlyphTaskSplit,
    /// Contains the fillers only, so every example has an unknown token.
    pub vocab: Vocab,
    pub markers: Vec<char>,
    pub fillers: Vec<char>,
}

const MARKERS_PER_CLASS: usize = 4;
const FILLERS: usize = 10;

fn cjk(k: u32) -> char {
    char::from_u32(CJK_FIRST + k).expect("valid codepoint")
}

pub fn glyph_task(sizes: (usize, usize, usize), dim: usize, seed: u64) -> Result<GlyphTask> {
    let markers: Vec<char> = (0..3u32)
        .flat_map(|r| (0..MARKERS_PER_CLASS as u32).map(move |j| cjk(r + RADICALS as u32 * j)))
        .collect();
    let fillers: Vec<char> = (0..FILLERS as u32)
        .map(|j| cjk(3 + (j % 5) + RADICALS as u32 * (j / 5)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6A_5C);
    let mut split = |n: usize| -> Result<GlyphTaskSplit> {
        let mut examples = Vec::with_capacity(n);
        let mut masked = Vec::with_capacity(n);
        for i in 0..n {
            let label = Label::ALL[i % 3];
            let marker = markers[label.index() * MARKERS_PER_CLASS + rng.gen_range(0..MARKERS_PER_CLASS)];
            let filler = *fillers.choose(&mut rng).unwrap();
            let e = Example {
                id: i as u64,
                premise: filler.to_string(),
                hypothesis: marker.to_string(),
                label,
            };
            masked.push(Example {
                hypothesis: UNK.into(),
                ..e.clone()
            });
            examples.push(e);
        }
        let embeddings = gen_hash_embeddings(&masked, dim, seed)?;
        Ok(GlyphTaskSplit { examples, embeddings })
    };
    let train = split(sizes.0)?;
    let dev = split(sizes.1)?;
    let test = split(sizes.2)?;
    Ok(GlyphTask {
        train,
        dev,
        test,
        vocab: Vocab::new(fillers.iter().map(|c| c.to_string())),
        markers,
        fillers,
    })
}

/// Sizes of the glyph-task splits in the bundled fixtures.
pub const GLYPH_TASK_SIZES: (usize, usize, usize) = (90, 30, 60);
pub const FIXTURE_DIM: usize = 128;
pub const FIXTURE_SEED: u64 = 7;

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut s = String::new();
    for l in lines {
        s.push_str(&l);
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Writes every bundled fixture into `dir` and returns the paths written.
pub fn write_fixtures(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    let font = dir.join("synthetic.bdf");
    std::fs::write(&font, synthetic_font().to_bdf("glyphfuse-synthetic"))?;
    out.push(font);
    for script in Script::ALL {
        let all = synthetic_nli(script, 90, FIXTURE_SEED);
        for (split, range) in [("train", 0..60), ("dev", 60..75), ("test", 75..90)] {
            let mut part = all[range].to_vec();
            for (i, e) in part.iter_mut().enumerate() {
                e.id = i as u64;
            }
            let path = dir.join(format!("{}_{split}.tsv", script.name()));
            write_tsv(&path, &part)?;
            out.push(path);
        }
    }
    let task = glyph_task(GLYPH_TASK_SIZES, FIXTURE_DIM, FIXTURE_SEED)?;
    for (split, data) in [("train", &task.train), ("dev", &task.dev), ("test", &task.test)] {
        let tsv = dir.join(format!("glyph_{split}.tsv"));
        write_tsv(&tsv, &data.examples)?;
        let gemb = dir.join(format!("glyph_{split}.gemb"));
        write_gemb(&data.embeddings, &gemb)?;
        out.extend([tsv, gemb]);
    }
    let vocab = dir.join("glyph_vocab.txt");
    write_lines(&vocab, task.fillers.iter().map(|c| c.to_string()))?;
    out.push(vocab);
    let targeted = dir.join("targeted.tsv");
    write_tsv(&targeted, &targeted_fixture())?;
    out.push(targeted);
    let tv = dir.join("targeted_vocab.txt");
    write_lines(&tv, TARGETED_WORDS.into_iter().map(String::from))?;
    out.push(tv);
    Ok(out)
}
