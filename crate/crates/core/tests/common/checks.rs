//! Gradient and oracle sweeps, returning their worst errors so callers can
//! assert or report them.

use glyphfuse::autodiff::{Tape, Var};
use glyphfuse::fusion::{self, ModelConfig, VisualInput};
use glyphfuse::glyph::{Canvas, GlyphImage};
use glyphfuse::params::ModelParams;
use rand::Rng;

use super::*;

type OpFn = Box<dyn Fn(&mut Tape<'_, f64>, &[Var]) -> Var>;

/// `(op name, worst relative error)` for every differentiable op.
pub fn per_op_errors() -> Vec<(&'static str, f64)> {
    let mut r = rng(11);
    let mut cases: Vec<(&'static str, Vec<Tensor<f64>>, OpFn)> = Vec::new();
    for pad in [0usize, 1] {
        let x = random_tensor(&mut r, &[2, 5, 6]);
        let k = random_tensor(&mut r, &[3, 2, 3, 3]);
        let b = random_tensor(&mut r, &[3]);
        cases.push((
            if pad == 0 { "conv2d(pad 0)" } else { "conv2d(pad 1)" },
            vec![x, k, b],
            Box::new(move |t, v| t.conv2d(v[0], v[1], v[2], pad).unwrap()),
        ));
    }
    cases.push((
        "maxpool2d",
        vec![random_tensor(&mut r, &[2, 5, 7])],
        Box::new(|t, v| t.maxpool2d(v[0]).unwrap()),
    ));
    // keep inputs away from the kink at zero
    let relu_in: Vec<f64> = uniform(&mut r, 12, 0.05, 1.0)
        .into_iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { v } else { -v })
        .collect();
    cases.push(("relu", vec![tensor(&[12], relu_in)], Box::new(|t, v| t.relu(v[0]))));
    cases.push((
        "sigmoid",
        vec![random_tensor(&mut r, &[7])],
        Box::new(|t, v| t.sigmoid(v[0])),
    ));
    cases.push(("tanh", vec![random_tensor(&mut r, &[7])], Box::new(|t, v| t.tanh(v[0]))));
    cases.push((
        "linear",
        vec![
            random_tensor(&mut r, &[6]),
            random_tensor(&mut r, &[4, 6]),
            random_tensor(&mut r, &[4]),
        ],
        Box::new(|t, v| t.linear(v[0], v[1], v[2]).unwrap()),
    ));
    cases.push((
        "linear(flattened input)",
        vec![
            random_tensor(&mut r, &[2, 2, 3]),
            random_tensor(&mut r, &[3, 12]),
            random_tensor(&mut r, &[3]),
        ],
        Box::new(|t, v| t.linear(v[0], v[1], v[2]).unwrap()),
    ));
    cases.push((
        "matvec",
        vec![random_tensor(&mut r, &[5]), random_tensor(&mut r, &[3, 5])],
        Box::new(|t, v| t.matvec(v[0], v[1]).unwrap()),
    ));
    cases.push((
        "add",
        vec![random_tensor(&mut r, &[5]), random_tensor(&mut r, &[5])],
        Box::new(|t, v| t.add(v[0], v[1]).unwrap()),
    ));
    cases.push((
        "mul",
        vec![random_tensor(&mut r, &[5]), random_tensor(&mut r, &[5])],
        Box::new(|t, v| t.mul(v[0], v[1]).unwrap()),
    ));
    cases.push((
        "scale",
        vec![random_tensor(&mut r, &[5])],
        Box::new(|t, v| t.scale(v[0], -1.7)),
    ));
    cases.push((
        "slice",
        vec![random_tensor(&mut r, &[9])],
        Box::new(|t, v| t.slice(v[0], 2, 4).unwrap()),
    ));
    cases.push((
        "concat",
        vec![random_tensor(&mut r, &[3]), random_tensor(&mut r, &[4])],
        Box::new(|t, v| t.concat(&[v[0], v[1]]).unwrap()),
    ));
    cases.push((
        "mean",
        vec![
            random_tensor(&mut r, &[4]),
            random_tensor(&mut r, &[4]),
            random_tensor(&mut r, &[4]),
        ],
        Box::new(|t, v| t.mean(&[v[0], v[1], v[2]]).unwrap()),
    ));
    cases.push((
        "dropout",
        vec![random_tensor(&mut r, &[10])],
        Box::new(|t, v| t.dropout(v[0], 0.3, true, &mut rng(4)).unwrap()),
    ));
    cases.push(("sum", vec![random_tensor(&mut r, &[6])], Box::new(|t, v| t.sum(v[0]))));
    cases.push((
        "softmax_cross_entropy",
        vec![random_tensor(&mut r, &[3])],
        Box::new(|t, v| t.softmax_cross_entropy(v[0], 2).unwrap()),
    ));
    cases
        .into_iter()
        .map(|(name, inputs, f)| (name, check_op(&inputs, &*f)))
        .collect()
}

fn nli_grads(params: &ModelParams<f64>, cfg: &ModelConfig, images: &[GlyphImage], ctx: &[f64]) -> Vec<Vec<f64>> {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let z = fusion::forward_nli(&mut tape, &b, cfg, VisualInput::Images(images), ctx, true, &mut rng(3)).unwrap();
    let l = tape.softmax_cross_entropy(z, 1).unwrap();
    let mut g = tape.backward(l).unwrap();
    params.collect_grads(&b, &mut g)
}

fn nli_value(params: &ModelParams<f64>, cfg: &ModelConfig, images: &[GlyphImage], ctx: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let z = fusion::forward_nli(&mut tape, &b, cfg, VisualInput::Images(images), ctx, true, &mut rng(3)).unwrap();
    let l = tape.softmax_cross_entropy(z, 1).unwrap();
    tape.value(l)[0]
}

/// Worst relative error of the full CNN + LSTM + fusion + MLP network over
/// `per_tensor` sampled coordinates of every parameter, dropout active with
/// a fixed mask.
pub fn end_to_end_error(per_tensor: usize) -> (f64, usize) {
    let cfg = ModelConfig {
        context_dim: 16,
        ..Default::default()
    };
    let mut r = rng(21);
    let mut params: ModelParams<f64> = fusion::init_params::<f32, _>(&mut r, &cfg).unwrap().cast();
    for (name, t) in params.iter_mut() {
        if name.ends_with("bias") {
            for v in t.data_mut() {
                *v += r.gen_range(-0.1..0.1);
            }
        }
    }
    let canvas = Canvas::DEFAULT;
    let images: Vec<GlyphImage> = (0..3)
        .map(|i| {
            let px: Vec<f32> = (0..canvas.pixels()).map(|_| r.gen_range(0.0..1.0)).collect();
            GlyphImage::new(canvas, px, format!("t{i}")).unwrap()
        })
        .collect();
    let ctx = uniform(&mut r, 16, -0.3, 0.3);
    let grads = nli_grads(&params, &cfg, &images, &ctx);
    let names: Vec<String> = params.names().map(String::from).collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (ti, name) in names.iter().enumerate() {
        let len = params.get(name).unwrap().len();
        for _ in 0..per_tensor {
            let j = r.gen_range(0..len);
            let orig = params.get(name).unwrap().data()[j];
            params.get_mut(name).unwrap().data_mut()[j] = orig + h;
            let lp = nli_value(&params, &cfg, &images, &ctx);
            params.get_mut(name).unwrap().data_mut()[j] = orig - h;
            let lm = nli_value(&params, &cfg, &images, &ctx);
            params.get_mut(name).unwrap().data_mut()[j] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            worst = worst.max(rel_err(grads[ti][j], numeric));
            checked += 1;
        }
    }
    (worst, checked)
}

/// Largest absolute deviation between the tape's conv2d / maxpool2d /
/// linear forward values and the naive loops over `cases` random instances.
pub fn oracle_max_diff(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let c_in = r.gen_range(1..=4);
        let c_out = r.gen_range(1..=4);
        let h = r.gen_range(3..=16);
        let w = r.gen_range(3..=16);
        let pad = r.gen_range(0..=1);
        let x = uniform(&mut r, c_in * h * w, -1.0, 1.0);
        let k = uniform(&mut r, c_out * c_in * 9, -1.0, 1.0);
        let b = uniform(&mut r, c_out, -1.0, 1.0);
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(&[c_in, h, w], x.clone()).unwrap();
        let kv = tape.constant(&[c_out, c_in, 3, 3], k.clone()).unwrap();
        let bv = tape.constant(&[c_out], b.clone()).unwrap();
        let y = tape.conv2d(xv, kv, bv, pad).unwrap();
        let want = naive_conv2d(&x, c_in, h, w, &k, c_out, &b, pad);
        worst = tape
            .value(y)
            .iter()
            .zip(&want)
            .fold(worst, |m, (a, b)| m.max((a - b).abs()));

        let (ph, pw) = (r.gen_range(2..=16), r.gen_range(2..=16));
        let pc = r.gen_range(1..=4);
        let px = uniform(&mut r, pc * ph * pw, -1.0, 1.0);
        let pv = tape.constant(&[pc, ph, pw], px.clone()).unwrap();
        let p = tape.maxpool2d(pv).unwrap();
        let want = naive_maxpool(&px, pc, ph, pw);
        assert_eq!(tape.value(p).len(), want.len());
        worst = tape
            .value(p)
            .iter()
            .zip(&want)
            .fold(worst, |m, (a, b)| m.max((a - b).abs()));

        let (rows, cols) = (r.gen_range(1..=16), r.gen_range(1..=4 * 16 * 16));
        let wt = uniform(&mut r, rows * cols, -1.0, 1.0);
        let lb = uniform(&mut r, rows, -1.0, 1.0);
        let lx = uniform(&mut r, cols, -1.0, 1.0);
        let wv = tape.constant(&[rows, cols], wt.clone()).unwrap();
        let bv = tape.constant(&[rows], lb.clone()).unwrap();
        let xv = tape.constant(&[cols], lx.clone()).unwrap();
        let l = tape.linear(xv, wv, bv).unwrap();
        let want = naive_linear(&wt, &lb, &lx);
        worst = tape
            .value(l)
            .iter()
            .zip(&want)
            .fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    worst
}
