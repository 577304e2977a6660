//! Dataset, embedding, vocabulary and checkpoint I/O.

pub mod checkpoint;
pub mod gemb;
pub mod hash_emb;
pub mod tsv;
pub mod vocab;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint};
pub use gemb::{read_gemb, write_gemb, EmbeddingTable};
pub use hash_emb::gen_hash_embeddings;
pub use tsv::{read_tsv, write_tsv};
pub use vocab::{count_unk, read_vocab, Vocab};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Entailment,
    Neutral,
    Contradiction,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Entailment, Label::Neutral, Label::Contradiction];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Neutral => "neutral",
            Label::Contradiction => "contradiction",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entailment" => Ok(Label::Entailment),
            "neutral" => Ok(Label::Neutral),
            "contradiction" => Ok(Label::Contradiction),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

/// One sentence pair. `id` is the 0-based line number in its source file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub id: u64,
    pub premise: String,
    pub hypothesis: String,
    pub label: Label,
}
