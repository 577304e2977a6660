//! Independent oracles shared by the integration tests and the acceptance
//! harness. Nothing here calls into the operations it checks.

#![allow(dead_code)]

use std::collections::HashSet;
use std::path::PathBuf;

use glyphfuse::autodiff::{Tape, Var};
use glyphfuse::data::Example;
use glyphfuse::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Direct 6-deep loop over `[c_in,h,w]` with implicit zero padding.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv2d(
    x: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    k: &[f64],
    c_out: usize,
    b: &[f64],
    pad: usize,
) -> Vec<f64> {
    let ho = h + 2 * pad - 2;
    let wo = w + 2 * pad - 2;
    let mut out = vec![0.0; c_out * ho * wo];
    for o in 0..c_out {
        for y in 0..ho {
            for xx in 0..wo {
                let mut acc = b[o];
                for i in 0..c_in {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let sy = (y + ky) as isize - pad as isize;
                            let sx = (xx + kx) as isize - pad as isize;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            acc += k[((o * c_in + i) * 3 + ky) * 3 + kx] * x[(i * h + sy as usize) * w + sx as usize];
                        }
                    }
                }
                out[(o * ho + y) * wo + xx] = acc;
            }
        }
    }
    out
}

/// 2x2 stride-2 max pooling, trailing odd row/column dropped.
pub fn naive_maxpool(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for y in 0..ho {
            for xx in 0..wo {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        m = m.max(x[(ch * h + 2 * y + dy) * w + 2 * xx + dx]);
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

pub fn naive_linear(wt: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    b.iter()
        .enumerate()
        .map(|(r, &bias)| bias + (0..n).map(|c| wt[r * n + c] * x[c]).sum::<f64>())
        .collect()
}

/// Scalar probe `sum(out * r)` with fixed random `r`, so every output
/// coordinate contributes to the checked gradient.
fn probe(tape: &mut Tape<'_, f64>, out: Var, seed: u64) -> Var {
    let n = tape.value(out).len();
    let r = uniform(&mut rng(seed), n, -1.0, 1.0);
    let rv = tape.constant(tape.shape(out).to_vec().as_slice(), r).unwrap();
    let prod = tape.mul(out, rv).unwrap();
    tape.sum(prod)
}

/// Central-difference check of `f` against reverse mode over every input
/// coordinate. Returns the largest relative error.
pub fn check_op(inputs: &[Tensor<f64>], f: &dyn Fn(&mut Tape<'_, f64>, &[Var]) -> Var) -> f64 {
    let eval = |xs: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let l = probe(&mut tape, out, 99);
        tape.value(l)[0]
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_requires_grad(true)))
        .collect();
    let out = f(&mut tape, &vars);
    let l = probe(&mut tape, out, 99);
    let grads = tape.backward(l).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[i])
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; t.len()]);
        for (j, &a) in analytic.iter().enumerate() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(a, numeric));
        }
    }
    worst
}

pub fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    tensor(shape, uniform(rng, n, -1.0, 1.0))
}

/// Ids of examples with at least one whitespace token (or, in char mode,
/// non-space character) missing from `vocab`.
pub fn unk_scan(examples: &[Example], vocab: &[&str], char_mode: bool) -> Vec<u64> {
    let known: HashSet<&str> = vocab.iter().copied().collect();
    let mut ids = Vec::new();
    for e in examples {
        let text = format!("{} {}", e.premise, e.hypothesis);
        let mut unk = false;
        if char_mode {
            for c in text.chars().filter(|c| !c.is_whitespace()) {
                let mut buf = [0u8; 4];
                if !known.contains(&*c.encode_utf8(&mut buf)) {
                    unk = true;
                }
            }
        } else {
            for tok in text.split(|c: char| c.is_whitespace()).filter(|t| !t.is_empty()) {
                if !known.contains(tok) {
                    unk = true;
                }
            }
        }
        if unk {
            ids.push(e.id);
        }
    }
    ids
}

pub mod checks;
pub mod formats;
