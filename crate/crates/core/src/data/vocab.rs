use std::collections::HashSet;
use std::path::Path;

use super::Example;
use crate::error::Result;
use crate::glyph::Segmenter;

/// Token inventory of a contextual model; anything else counts as UNK.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    tokens: HashSet<String>,
}

impl Vocab {
    pub fn new(tokens: impl IntoIterator<Item = String>) -> Self {
        Vocab {
            tokens: tokens.into_iter().filter(|t| !t.is_empty()).collect(),
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One token per line; empty lines are skipped.
pub fn read_vocab(path: impl AsRef<Path>) -> Result<Vocab> {
    let text = crate::error::read_text(path)?;
    Ok(Vocab::new(
        text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l).to_string()),
    ))
}

/// Number of premise and hypothesis segments missing from `vocab`.
pub fn count_unk(example: &Example, vocab: &Vocab, segmenter: &Segmenter) -> usize {
    segmenter
        .segment(&example.premise)
        .into_iter()
        .chain(segmenter.segment(&example.hypothesis))
        .filter(|t| !vocab.contains(t))
        .count()
}
