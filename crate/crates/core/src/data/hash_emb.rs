//! Deterministic stand-in for contextual embeddings.
//!
//! Each token maps to a pseudorandom vector: FNV-1a 64 over its UTF-8 bytes,
//! xor-ed with the mixed seed and passed through the SplitMix64 finalizer,
//! seeds an MMIX LCG that emits one coordinate per step. An example's vector
//! is the unit-normalized sum over its premise and hypothesis tokens.

use super::{EmbeddingTable, Example};
use crate::error::Result;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const LCG_MUL: u64 = 6_364_136_223_846_793_005;
const LCG_INC: u64 = 1_442_695_040_888_963_407;

/// Streaming FNV-1a 64.
#[derive(Clone, Copy, Debug)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}

impl Fnv1a {
    pub fn new() -> Self {
        Fnv1a(FNV_OFFSET)
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = Fnv1a::new();
    h.write(bytes);
    h.finish()
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F)
}

/// Whitespace chunks; chunks containing CJK ideographs are split per codepoint.
pub fn hash_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if chunk.chars().any(is_cjk) {
            out.extend(chunk.chars().map(String::from));
        } else {
            out.push(chunk.to_string());
        }
    }
    out
}

/// Pseudorandom vector in `[-1, 1)^dim` for one token.
pub fn token_vector(token: &str, seed: u64, dim: usize) -> Vec<f64> {
    let mut state = mix64(fnv1a64(token.as_bytes()) ^ mix64(seed));
    (0..dim)
        .map(|_| {
            state = state.wrapping_mul(LCG_MUL).wrapping_add(LCG_INC);
            ((state >> 11) as f64) * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

/// Embedding of the concatenated premise and hypothesis tokens. Returns the
/// zero vector when there are no tokens or the sum cancels exactly.
pub fn embed_pair(premise: &str, hypothesis: &str, dim: usize, seed: u64) -> Vec<f32> {
    let mut acc = vec![0.0f64; dim];
    for tok in hash_tokens(premise).iter().chain(&hash_tokens(hypothesis)) {
        for (a, v) in acc.iter_mut().zip(token_vector(tok, seed, dim)) {
            *a += v;
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; dim];
    }
    acc.iter().map(|v| (v / norm) as f32).collect()
}

pub fn gen_hash_embeddings(examples: &[Example], dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(dim)?;
    for e in examples {
        table.insert(e.id, embed_pair(&e.premise, &e.hypothesis, dim, seed))?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;

    fn ex(id: u64, p: &str, h: &str) -> Example {
        Example {
            id,
            premise: p.into(),
            hypothesis: h.into(),
            label: Label::Neutral,
        }
    }

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn identical_examples_identical_vectors() {
        let t = gen_hash_embeddings(&[ex(0, "the cat", "a dog"), ex(1, "the cat", "a dog")], 32, 7).unwrap();
        assert_eq!(t.get(0), t.get(1));
    }

    #[test]
    fn unit_norm() {
        let v = embed_pair("alpha beta", "gamma", 128, 3);
        let n: f64 = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
    }

    #[test]
    fn disjoint_tokens_nearly_orthogonal() {
        let a = embed_pair("red green", "blue", 128, 11);
        let b = embed_pair("one two", "three", 128, 11);
        let cos: f64 = a.iter().zip(&b).map(|(&x, &y)| x as f64 * y as f64).sum();
        assert!(cos.abs() < 0.3, "{cos}");
    }

    #[test]
    fn cjk_chunks_split_per_codepoint() {
        assert_eq!(hash_tokens("abc 中文 x"), vec!["abc", "中", "文", "x"]);
    }

    #[test]
    fn seed_changes_vectors() {
        assert_ne!(embed_pair("a", "b", 8, 1), embed_pair("a", "b", 8, 2));
    }

    #[test]
    fn empty_text_is_zero() {
        assert_eq!(embed_pair(" ", "", 4, 1), vec![0.0; 4]);
    }
}
