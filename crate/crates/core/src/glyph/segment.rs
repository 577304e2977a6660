use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Word,
    Char,
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "word" => Ok(Granularity::Word),
            "char" => Ok(Granularity::Char),
            other => Err(format!("unknown granularity `{other}` (expected word or char)")),
        }
    }
}

impl std::fmt::Display for Granularity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Granularity::Word => "word",
            Granularity::Char => "char",
        })
    }
}

/// Splits text into the units that get rendered as images.
///
/// Word mode splits on whitespace. A chunk containing any codepoint that
/// appears in a dictionary entry is further split by greedy longest match
/// from the left; codepoints matched by no entry become single segments.
#[derive(Clone, Debug, Default)]
pub struct Segmenter {
    mode: Granularity,
    dictionary: Option<BTreeSet<String>>,
    covered: HashSet<char>,
    max_entry_chars: usize,
}

impl Segmenter {
    pub fn new(mode: Granularity) -> Self {
        Segmenter {
            mode,
            ..Default::default()
        }
    }

    pub fn with_dictionary(mode: Granularity, entries: impl IntoIterator<Item = String>) -> Self {
        let dictionary: BTreeSet<String> = entries
            .into_iter()
            .map(|e| e.trim().to_string())
            .filter(|e| !e.is_empty())
            .collect();
        let covered = dictionary.iter().flat_map(|e| e.chars()).collect();
        let max_entry_chars = dictionary.iter().map(|e| e.chars().count()).max().unwrap_or(0);
        Segmenter {
            mode,
            dictionary: Some(dictionary),
            covered,
            max_entry_chars,
        }
    }

    /// Reads a UTF-8 dictionary with one entry per line.
    pub fn load_dictionary(mode: Granularity, path: impl AsRef<Path>) -> Result<Self> {
        let text = crate::error::read_text(path)?;
        Ok(Self::with_dictionary(mode, text.lines().map(String::from)))
    }

    pub fn mode(&self) -> Granularity {
        self.mode
    }

    pub fn dictionary(&self) -> Option<&BTreeSet<String>> {
        self.dictionary.as_ref()
    }

    pub fn segment(&self, text: &str) -> Vec<String> {
        match self.mode {
            Granularity::Char => text.chars().filter(|c| !c.is_whitespace()).map(String::from).collect(),
            Granularity::Word => {
                let mut out = Vec::new();
                for chunk in text.split_whitespace() {
                    match &self.dictionary {
                        Some(dict) if chunk.chars().any(|c| self.covered.contains(&c)) => {
                            self.longest_match(chunk, dict, &mut out)
                        }
                        _ => out.push(chunk.to_string()),
                    }
                }
                out
            }
        }
    }

    fn longest_match(&self, chunk: &str, dict: &BTreeSet<String>, out: &mut Vec<String>) {
        let chars: Vec<char> = chunk.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let longest = self.max_entry_chars.min(chars.len() - i);
            let mut taken = 1;
            for len in (1..=longest).rev() {
                let cand: String = chars[i..i + len].iter().collect();
                if dict.contains(&cand) {
                    taken = len;
                    break;
                }
            }
            out.push(chars[i..i + taken].iter().collect());
            i += taken;
        }
    }
}
