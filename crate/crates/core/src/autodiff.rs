//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value and enough saved
//! state to run its vector-Jacobian product. Nodes are stored in creation
//! order, which is already a topological order, so [`Tape::backward`] is a
//! single reverse sweep. Parameters enter the tape by reference and are never
//! copied.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Storage<'a, T> {
    Owned(Vec<T>),
    Borrowed(&'a [T]),
}

impl<T> Storage<'_, T> {
    fn as_slice(&self) -> &[T] {
        match self {
            Storage::Owned(v) => v,
            Storage::Borrowed(s) => s,
        }
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        padding: usize,
    },
    MaxPool2d {
        input: Var,
        argmax: Vec<usize>,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Slice {
        input: Var,
        start: usize,
    },
    Concat(Vec<Var>),
    Mean(Vec<Var>),
    Dropout {
        input: Var,
        mask: Vec<T>,
    },
    Sum(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        label: usize,
        probs: Vec<T>,
    },
}

struct Node<'a, T> {
    shape: Vec<usize>,
    value: Storage<'a, T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recording context for one forward pass. Single-threaded by construction;
/// build one tape per example to parallelize.
pub struct Tape<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn check_len(op: &'static str, what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::dim(op, format!("{what}: expected {want} values, got {got}")));
    }
    Ok(())
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value: Storage::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.as_slice()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).unwrap_or_else(|_| Tensor::zeros(self.shape(v)))
    }

    /// Owned leaf. Participates in differentiation iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let rg = t.requires_grad();
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, rg)
    }

    /// Constant input that never receives a gradient.
    pub fn constant(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var> {
        check_len("constant", "data", data.len(), shape.iter().product())?;
        Ok(self.push(shape.to_vec(), data, Op::Leaf, false))
    }

    /// Borrowed trainable leaf; the tensor is not copied.
    pub fn param(&mut self, t: &'a Tensor<T>) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: Storage::Borrowed(t.data()),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// 3x3 cross-correlation, stride 1, symmetric zero padding.
    /// `input` is `[C_in, H, W]`, `kernel` `[C_out, C_in, 3, 3]`, `bias` `[C_out]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, padding: usize) -> Result<Var> {
        let (c_in, h, w) = match *self.shape(input) {
            [c, h, w] => (c, h, w),
            ref s => return Err(Error::dim("conv2d", format!("input must be [C,H,W], got {s:?}"))),
        };
        let c_out = match *self.shape(kernel) {
            [co, ci, 3, 3] if ci == c_in => co,
            [_, ci, 3, 3] => {
                return Err(Error::dim(
                    "conv2d",
                    format!("kernel input channels (axis 1) = {ci} but input channels (axis 0) = {c_in}"),
                ))
            }
            ref s => {
                return Err(Error::dim(
                    "conv2d",
                    format!("kernel must be [C_out,C_in,3,3], got {s:?} (axes 2,3 must be 3)"),
                ))
            }
        };
        if self.shape(bias) != [c_out] {
            return Err(Error::dim(
                "conv2d",
                format!(
                    "bias must be [{c_out}] to match kernel axis 0, got {:?}",
                    self.shape(bias)
                ),
            ));
        }
        let (hp, wp) = (h + 2 * padding, w + 2 * padding);
        if hp < 3 || wp < 3 {
            return Err(Error::dim(
                "conv2d",
                format!("padded spatial extent {hp}x{wp} (axes 1,2) smaller than 3x3 kernel"),
            ));
        }
        let (ho, wo) = (hp - 2, wp - 2);
        let padded = pad_planes(self.value(input), c_in, h, w, padding);
        let k = self.value(kernel);
        let b = self.value(bias);
        let mut out = vec![T::zero(); c_out * ho * wo];
        for o in 0..c_out {
            let plane_out = &mut out[o * ho * wo..(o + 1) * ho * wo];
            plane_out.iter_mut().for_each(|v| *v = b[o]);
            for i in 0..c_in {
                let plane = &padded[i * hp * wp..(i + 1) * hp * wp];
                let kk = &k[(o * c_in + i) * 9..(o * c_in + i + 1) * 9];
                for y in 0..ho {
                    let dst = &mut plane_out[y * wo..(y + 1) * wo];
                    for ky in 0..3 {
                        let row = &plane[(y + ky) * wp..(y + ky + 1) * wp];
                        for kx in 0..3 {
                            let wgt = kk[ky * 3 + kx];
                            for (d, &s) in dst.iter_mut().zip(&row[kx..kx + wo]) {
                                *d += wgt * s;
                            }
                        }
                    }
                }
            }
        }
        let rg = self.rg(input) || self.rg(kernel) || self.rg(bias);
        Ok(self.push(
            vec![c_out, ho, wo],
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
                padding,
            },
            rg,
        ))
    }

    /// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn maxpool2d(&mut self, input: Var) -> Result<Var> {
        let (c, h, w) = match *self.shape(input) {
            [c, h, w] => (c, h, w),
            ref s => return Err(Error::dim("maxpool2d", format!("input must be [C,H,W], got {s:?}"))),
        };
        if h < 2 || w < 2 {
            return Err(Error::dim(
                "maxpool2d",
                format!("spatial extent {h}x{w} (axes 1,2) must be at least 2x2"),
            ));
        }
        let (ho, wo) = (h / 2, w / 2);
        let x = self.value(input);
        let mut out = Vec::with_capacity(c * ho * wo);
        let mut argmax = Vec::with_capacity(c * ho * wo);
        for ch in 0..c {
            let base = ch * h * w;
            for y in 0..ho {
                for xo in 0..wo {
                    let mut best = base + 2 * y * w + 2 * xo;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * y + dy) * w + 2 * xo + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        let rg = self.rg(input);
        Ok(self.push(vec![c, ho, wo], out, Op::MaxPool2d { input, argmax }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self
            .value(x)
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, out, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, out, Op::Sigmoid(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|v| v.tanh()).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, out, Op::Tanh(x), rg)
    }

    /// `weight · input + bias`, with `weight` `[M, N]` and `input` of any shape
    /// holding `N` values (flattened row-major).
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        self.affine(input, weight, Some(bias))
    }

    /// `weight · input` without a bias term.
    pub fn matvec(&mut self, input: Var, weight: Var) -> Result<Var> {
        self.affine(input, weight, None)
    }

    fn affine(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let (m, n) = match *self.shape(weight) {
            [m, n] => (m, n),
            ref s => return Err(Error::dim("linear", format!("weight must be [M,N], got {s:?}"))),
        };
        let x_len = self.value(input).len();
        if x_len != n {
            return Err(Error::dim(
                "linear",
                format!("input has {x_len} values but weight expects N = {n} (axis 1)"),
            ));
        }
        if let Some(b) = bias {
            if self.shape(b) != [m] {
                return Err(Error::dim(
                    "linear",
                    format!("bias must be [{m}] to match weight axis 0, got {:?}", self.shape(b)),
                ));
            }
        }
        let x = self.value(input);
        let wt = self.value(weight);
        let out = (0..m)
            .map(|r| {
                let acc = dot(&wt[r * n..(r + 1) * n], x);
                match bias {
                    Some(b) => acc + self.value(b)[r],
                    None => acc,
                }
            })
            .collect();
        let rg = self.rg(input) || self.rg(weight) || bias.is_some_and(|b| self.rg(b));
        Ok(self.push(vec![m], out, Op::Linear { input, weight, bias }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, out, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).iter().map(|&v| v * s).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, out, Op::Scale(x, s), rg)
    }

    /// Contiguous 1-D slice `[start, start + len)` of the flattened input.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let total = self.value(x).len();
        if len == 0 || start + len > total {
            return Err(Error::dim(
                "slice",
                format!("range {start}..{} out of bounds for length {total}", start + len),
            ));
        }
        let out = self.value(x)[start..start + len].to_vec();
        let rg = self.rg(x);
        Ok(self.push(vec![len], out, Op::Slice { input: x, start }, rg))
    }

    /// 1-D concatenation of the flattened inputs.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::dim("concat", "no inputs"));
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let n = out.len();
        Ok(self.push(vec![n], out, Op::Concat(parts.to_vec()), rg))
    }

    /// Elementwise mean of equally sized inputs.
    pub fn mean(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::dim("mean", "empty sequence"));
        };
        let n = self.value(first).len();
        let mut out = vec![T::zero(); n];
        for &p in parts {
            check_len("mean", "element", self.value(p).len(), n)?;
            for (o, &v) in out.iter_mut().zip(self.value(p)) {
                *o += v;
            }
        }
        let inv = T::one() / T::from_usize(parts.len()).unwrap();
        out.iter_mut().for_each(|v| *v *= inv);
        let shape = self.shape(first).to_vec();
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(shape, out, Op::Mean(parts.to_vec()), rg))
    }

    /// Inverted dropout. Identity (the same `Var`) when not training or `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let out = self.value(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape, out, Op::Dropout { input: x, mask }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().copied().sum();
        let rg = self.rg(x);
        self.push(vec![1], vec![s], Op::Sum(x), rg)
    }

    /// `-log softmax(logits)[label]`, stabilized by max subtraction.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let z = self.value(logits);
        if label >= z.len() {
            return Err(Error::Invalid(format!(
                "label {label} out of range for {} classes",
                z.len()
            )));
        }
        let probs = softmax(z);
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        let loss = lse - z[label];
        let rg = self.rg(logits);
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::SoftmaxCrossEntropy { logits, label, probs },
            rg,
        ))
    }

    fn same_len(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (la, lb) = (self.value(a).len(), self.value(b).len());
        if la != lb {
            return Err(Error::dim(op, format!("operand lengths differ: {la} vs {lb}")));
        }
        Ok(())
    }

    /// Reverse sweep from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::dim(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        if !lv[0].is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.rg(loss) {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            // intermediate gradients are dropped once propagated
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<'a, T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                padding,
            } => {
                let (c_in, h, w) = {
                    let s = self.shape(*input);
                    (s[0], s[1], s[2])
                };
                let c_out = node.shape[0];
                let (ho, wo) = (node.shape[1], node.shape[2]);
                let p = *padding;
                let (hp, wp) = (h + 2 * p, w + 2 * p);
                if self.rg(*bias) {
                    let gb = slot(grads, *bias, c_out);
                    for o in 0..c_out {
                        gb[o] += g[o * ho * wo..(o + 1) * ho * wo].iter().copied().sum::<T>();
                    }
                }
                if self.rg(*kernel) {
                    let padded = pad_planes(self.value(*input), c_in, h, w, p);
                    let gk = slot(grads, *kernel, c_out * c_in * 9);
                    for o in 0..c_out {
                        let go = &g[o * ho * wo..(o + 1) * ho * wo];
                        for i in 0..c_in {
                            let plane = &padded[i * hp * wp..(i + 1) * hp * wp];
                            let kk = &mut gk[(o * c_in + i) * 9..(o * c_in + i + 1) * 9];
                            for y in 0..ho {
                                let grow = &go[y * wo..(y + 1) * wo];
                                for ky in 0..3 {
                                    let row = &plane[(y + ky) * wp..(y + ky + 1) * wp];
                                    for kx in 0..3 {
                                        kk[ky * 3 + kx] += dot(grow, &row[kx..kx + wo]);
                                    }
                                }
                            }
                        }
                    }
                }
                if self.rg(*input) {
                    let k = self.value(*kernel);
                    let mut gp = vec![T::zero(); c_in * hp * wp];
                    for o in 0..c_out {
                        let go = &g[o * ho * wo..(o + 1) * ho * wo];
                        for i in 0..c_in {
                            let plane = &mut gp[i * hp * wp..(i + 1) * hp * wp];
                            let kk = &k[(o * c_in + i) * 9..(o * c_in + i + 1) * 9];
                            for y in 0..ho {
                                let grow = &go[y * wo..(y + 1) * wo];
                                for ky in 0..3 {
                                    let row = &mut plane[(y + ky) * wp..(y + ky + 1) * wp];
                                    for kx in 0..3 {
                                        let wgt = kk[ky * 3 + kx];
                                        for (d, &s) in row[kx..kx + wo].iter_mut().zip(grow) {
                                            *d += wgt * s;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    let gi = slot(grads, *input, c_in * h * w);
                    for i in 0..c_in {
                        for y in 0..h {
                            let src = &gp[i * hp * wp + (y + p) * wp + p..][..w];
                            let dst = &mut gi[i * h * w + y * w..][..w];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                }
            }
            Op::MaxPool2d { input, argmax } => {
                let n = self.value(*input).len();
                let gi = slot(grads, *input, n);
                for (&src, &gv) in argmax.iter().zip(g) {
                    gi[src] += gv;
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let gi = slot(grads, *x, xv.len());
                for ((d, &v), &gv) in gi.iter_mut().zip(xv).zip(g) {
                    if v > T::zero() {
                        *d += gv;
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.as_slice();
                let gi = slot(grads, *x, y.len());
                for ((d, &yv), &gv) in gi.iter_mut().zip(y).zip(g) {
                    *d += gv * yv * (T::one() - yv);
                }
            }
            Op::Tanh(x) => {
                let y = node.value.as_slice();
                let gi = slot(grads, *x, y.len());
                for ((d, &yv), &gv) in gi.iter_mut().zip(y).zip(g) {
                    *d += gv * (T::one() - yv * yv);
                }
            }
            Op::Linear { input, weight, bias } => {
                let (m, n) = (self.shape(*weight)[0], self.shape(*weight)[1]);
                if let Some(b) = bias.filter(|&b| self.rg(b)) {
                    let gb = slot(grads, b, m);
                    for (d, &gv) in gb.iter_mut().zip(g) {
                        *d += gv;
                    }
                }
                if self.rg(*weight) {
                    let x = self.value(*input);
                    let gw = slot(grads, *weight, m * n);
                    for (r, &gv) in g.iter().enumerate() {
                        if gv == T::zero() {
                            continue;
                        }
                        for (d, &xv) in gw[r * n..(r + 1) * n].iter_mut().zip(x) {
                            *d += gv * xv;
                        }
                    }
                }
                if self.rg(*input) {
                    let wt = self.value(*weight);
                    let gi = slot(grads, *input, n);
                    for (r, &gv) in g.iter().enumerate() {
                        if gv == T::zero() {
                            continue;
                        }
                        for (d, &wv) in gi.iter_mut().zip(&wt[r * n..(r + 1) * n]) {
                            *d += gv * wv;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.rg(v) {
                        let gi = slot(grads, v, g.len());
                        for (d, &gv) in gi.iter_mut().zip(g) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    if self.rg(v) {
                        let ov = self.value(other);
                        let gi = slot(grads, v, g.len());
                        for ((d, &gv), &o) in gi.iter_mut().zip(g).zip(ov) {
                            *d += gv * o;
                        }
                    }
                }
            }
            Op::Scale(x, s) => {
                let gi = slot(grads, *x, g.len());
                for (d, &gv) in gi.iter_mut().zip(g) {
                    *d += gv * *s;
                }
            }
            Op::Slice { input, start } => {
                let n = self.value(*input).len();
                let gi = slot(grads, *input, n);
                for (d, &gv) in gi[*start..*start + g.len()].iter_mut().zip(g) {
                    *d += gv;
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.rg(p) {
                        let gi = slot(grads, p, n);
                        for (d, &gv) in gi.iter_mut().zip(&g[off..off + n]) {
                            *d += gv;
                        }
                    }
                    off += n;
                }
            }
            Op::Mean(parts) => {
                let inv = T::one() / T::from_usize(parts.len()).unwrap();
                for &p in parts {
                    if self.rg(p) {
                        let gi = slot(grads, p, g.len());
                        for (d, &gv) in gi.iter_mut().zip(g) {
                            *d += gv * inv;
                        }
                    }
                }
            }
            Op::Dropout { input, mask } => {
                let gi = slot(grads, *input, g.len());
                for ((d, &gv), &m) in gi.iter_mut().zip(g).zip(mask) {
                    *d += gv * m;
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                let gi = slot(grads, *x, n);
                for d in gi.iter_mut() {
                    *d += g[0];
                }
            }
            Op::SoftmaxCrossEntropy { logits, label, probs } => {
                let gi = slot(grads, *logits, probs.len());
                for (k, (d, &p)) in gi.iter_mut().zip(probs).enumerate() {
                    let target = if k == *label { T::one() } else { T::zero() };
                    *d += g[0] * (p - target);
                }
            }
        }
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: PartialOrd + Copy>(z: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

fn pad_planes<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, p: usize) -> Vec<T> {
    if p == 0 {
        return x.to_vec();
    }
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    let mut out = vec![T::zero(); c * hp * wp];
    for ch in 0..c {
        for y in 0..h {
            out[ch * hp * wp + (y + p) * wp + p..][..w].copy_from_slice(&x[ch * h * w + y * w..][..w]);
        }
    }
    out
}
