//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation applied during one forward pass. Calling
//! [`Tape::backward`] with seed gradients for any set of recorded values
//! propagates them to every ancestor, accumulating where a value is used more
//! than once (e.g. a head shared across modalities).

use std::cell::{Ref, RefCell};

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    },
    SwapLast2(Var),
    Reshape(Var),
    BatchMatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    SoftmaxLast(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
    },
    MeanAxis1(Var),
    RowL2Norm(Var),
    BatchStandardize(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Gradients of the seeded outputs with respect to every recorded value.
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }
}

fn accumulate(slot: &mut Option<Tensor>, shape: &[usize], f: impl FnOnce(&mut [f64])) {
    let t = slot.get_or_insert_with(|| Tensor::zeros(shape));
    f(&mut t.data);
}

fn dims3(t: &Tensor) -> (usize, usize, usize) {
    assert_eq!(t.rank(), 3, "expected rank-3 tensor, got {:?}", t.shape);
    (t.shape[0], t.shape[1], t.shape[2])
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Unfold one `[C,T]` sample into `[T', C·K]` rows of receptive fields,
/// zero where the window overhangs the padding.
fn im2col(x: &[f64], c: usize, t: usize, k: usize, stride: usize, pad: usize, col: &mut [f64]) {
    let width = c * k;
    for (to, row) in col.chunks_mut(width).enumerate() {
        let start = (to * stride) as isize - pad as isize;
        for ci in 0..c {
            let xrow = &x[ci * t..(ci + 1) * t];
            for (ki, v) in row[ci * k..(ci + 1) * k].iter_mut().enumerate() {
                let ti = start + ki as isize;
                *v = if ti >= 0 && (ti as usize) < t { xrow[ti as usize] } else { 0.0 };
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add field rows back onto the sample.
fn col2im_add(col: &[f64], c: usize, t: usize, k: usize, stride: usize, pad: usize, x: &mut [f64]) {
    let width = c * k;
    for (to, row) in col.chunks(width).enumerate() {
        let start = (to * stride) as isize - pad as isize;
        for ci in 0..c {
            for (ki, v) in row[ci * k..(ci + 1) * k].iter().enumerate() {
                let ti = start + ki as isize;
                if ti >= 0 && (ti as usize) < t {
                    x[ci * t + ti as usize] += v;
                }
            }
        }
    }
}

fn conv_out_len(t: usize, k: usize, stride: usize, pad: usize) -> usize {
    (t + 2 * pad - k) / stride + 1
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.value(v).shape.clone()
    }

    /// `[n×k] · [k×m]`.
    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let out = {
            let (av, bv) = (self.value(a), self.value(b));
            assert!(av.rank() == 2 && bv.rank() == 2 && av.shape[1] == bv.shape[0]);
            let (n, k, m) = (av.shape[0], av.shape[1], bv.shape[1]);
            let mut out = Tensor::zeros(&[n, m]);
            gemm(&av.data, &bv.data, &mut out.data, n, k, m, false, false);
            out
        };
        self.push(out, Op::MatMul(a, b))
    }

    /// Adds a vector along the last axis.
    pub fn add_bias(&self, x: Var, b: Var) -> Var {
        let out = {
            let (xv, bv) = (self.value(x), self.value(b));
            let d = bv.len();
            assert_eq!(xv.cols(), d);
            let mut out = xv.clone();
            for chunk in out.data.chunks_mut(d) {
                for (o, bb) in chunk.iter_mut().zip(&bv.data) {
                    *o += bb;
                }
            }
            out
        };
        self.push(out, Op::AddBias(x, b))
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let out = {
            let (av, bv) = (self.value(a), self.value(b));
            assert_eq!(av.shape, bv.shape);
            let mut out = av.clone();
            for (o, v) in out.data.iter_mut().zip(&bv.data) {
                *o += v;
            }
            out
        };
        self.push(out, Op::Add(a, b))
    }

    pub fn scale(&self, x: Var, s: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        self.push(out, Op::Scale(x, s))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = gelu(*v));
        self.push(out, Op::Gelu(x))
    }

    /// Temporal convolution: x `[B,C,T]`, w `[O,C,K]`, b `[O]` → `[B,O,T']`.
    pub fn conv1d(&self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let out = {
            let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
            let (bs, c, t) = dims3(&xv);
            let (o, wc, k) = dims3(&wv);
            assert_eq!(c, wc, "conv channel mismatch");
            assert!(t + 2 * pad >= k, "input shorter than kernel");
            let tout = conv_out_len(t, k, stride, pad);
            let mut out = Tensor::zeros(&[bs, o, tout]);
            let mut col = vec![0.0; tout * c * k];
            for bi in 0..bs {
                im2col(&xv.data[bi * c * t..(bi + 1) * c * t], c, t, k, stride, pad, &mut col);
                let ob = &mut out.data[bi * o * tout..(bi + 1) * o * tout];
                for (row, bias) in ob.chunks_mut(tout).zip(&bv.data) {
                    row.iter_mut().for_each(|v| *v = *bias);
                }
                gemm(&wv.data, &col, ob, o, c * k, tout, false, true);
            }
            out
        };
        self.push(
            out,
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                pad,
            },
        )
    }

    /// `[B,M,N]` → `[B,N,M]`.
    pub fn swap_last2(&self, x: Var) -> Var {
        let out = {
            let xv = self.value(x);
            let (b, m, n) = dims3(&xv);
            let mut out = Tensor::zeros(&[b, n, m]);
            for bi in 0..b {
                for i in 0..m {
                    for j in 0..n {
                        out.data[(bi * n + j) * m + i] = xv.data[(bi * m + i) * n + j];
                    }
                }
            }
            out
        };
        self.push(out, Op::SwapLast2(x))
    }

    pub fn reshape(&self, x: Var, shape: &[usize]) -> Var {
        let out = self.value(x).clone().reshaped(shape);
        self.push(out, Op::Reshape(x))
    }

    /// Batched `a[B,n,k] · b[B,k,m]`, or `a · bᵀ` with `b[B,m,k]` when `trans_b`.
    pub fn batch_matmul(&self, a: Var, b: Var, trans_b: bool) -> Var {
        let out = {
            let (av, bv) = (self.value(a), self.value(b));
            let (bs, n, k) = dims3(&av);
            let (bb, b1, b2) = dims3(&bv);
            assert_eq!(bs, bb);
            let m = if trans_b {
                assert_eq!(b2, k);
                b1
            } else {
                assert_eq!(b1, k);
                b2
            };
            let mut out = Tensor::zeros(&[bs, n, m]);
            for i in 0..bs {
                gemm(
                    &av.data[i * n * k..(i + 1) * n * k],
                    &bv.data[i * k * m..(i + 1) * k * m],
                    &mut out.data[i * n * m..(i + 1) * n * m],
                    n,
                    k,
                    m,
                    false,
                    trans_b,
                );
            }
            out
        };
        self.push(out, Op::BatchMatMul { a, b, trans_b })
    }

    /// Softmax along the last axis, max-shifted.
    pub fn softmax_last(&self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        let d = out.cols();
        for row in out.data.chunks_mut(d) {
            softmax_in_place(row);
        }
        self.push(out, Op::SoftmaxLast(x))
    }

    /// Layer normalization over the last axis with learned gain and bias.
    pub fn layer_norm(&self, x: Var, gain: Var, bias: Var) -> Var {
        let out = {
            let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
            let d = xv.cols();
            let mut out = xv.clone();
            for row in out.data.chunks_mut(d) {
                let (mean, rstd) = moments(row);
                for (j, v) in row.iter_mut().enumerate() {
                    *v = (*v - mean) * rstd * gv.data[j] + bv.data[j];
                }
            }
            out
        };
        self.push(out, Op::LayerNorm { x, gain, bias })
    }

    /// `[B,T,D]` → `[B,D]`, averaging over the middle axis.
    pub fn mean_axis1(&self, x: Var) -> Var {
        let out = {
            let xv = self.value(x);
            let (b, t, d) = dims3(&xv);
            let mut out = Tensor::zeros(&[b, d]);
            for bi in 0..b {
                for ti in 0..t {
                    let src = &xv.data[(bi * t + ti) * d..(bi * t + ti + 1) * d];
                    for (o, s) in out.data[bi * d..(bi + 1) * d].iter_mut().zip(src) {
                        *o += s;
                    }
                }
            }
            out.data.iter_mut().for_each(|v| *v /= t as f64);
            out
        };
        self.push(out, Op::MeanAxis1(x))
    }

    /// Divide each row of a `[N,d]` value by its Euclidean norm.
    pub fn row_l2_normalize(&self, x: Var) -> Result<Var> {
        let out = {
            let mut out = self.value(x).clone();
            let d = out.cols();
            for (i, row) in out.data.chunks_mut(d).enumerate() {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !(norm >= 1e-12) {
                    return Err(Error::Input(format!(
                        "row {i} has norm {norm:e}; cannot normalize a degenerate feature"
                    )));
                }
                row.iter_mut().for_each(|v| *v /= norm);
            }
            out
        };
        Ok(self.push(out, Op::RowL2Norm(x)))
    }

    /// Standardize each column of a `[N,d]` value over the batch.
    pub fn batch_standardize(&self, x: Var) -> Var {
        let out = {
            let xv = self.value(x);
            let t = xv.transpose2();
            let mut cols = t.clone();
            let n = xv.rows();
            for col in cols.data.chunks_mut(n) {
                let (mean, rstd) = moments(col);
                col.iter_mut().for_each(|v| *v = (*v - mean) * rstd);
            }
            cols.transpose2()
        };
        self.push(out, Op::BatchStandardize(x))
    }

    /// Propagate `seeds` (value, dL/dvalue) back through the tape.
    pub fn backward(&self, seeds: &[(Var, Tensor)]) -> Grads {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        let mut start = 0;
        for (v, g) in seeds {
            assert_eq!(nodes[v.0].value.shape, g.shape, "seed shape mismatch");
            accumulate(&mut grads[v.0], &g.shape, |d| {
                d.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b)
            });
            start = start.max(v.0 + 1);
        }
        for id in (0..start).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let val = |v: Var| &nodes[v.0].value;
            match node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(a), val(b));
                    let (n, k, m) = (av.shape[0], av.shape[1], bv.shape[1]);
                    accumulate(&mut grads[a.0], &av.shape, |d| {
                        gemm(&g.data, &bv.data, d, n, m, k, false, true)
                    });
                    accumulate(&mut grads[b.0], &bv.shape, |d| {
                        gemm(&av.data, &g.data, d, k, n, m, true, false)
                    });
                }
                Op::AddBias(x, b) => {
                    let (xv, bv) = (val(x), val(b));
                    let dcols = bv.len();
                    accumulate(&mut grads[b.0], &bv.shape, |d| {
                        for chunk in g.data.chunks(dcols) {
                            d.iter_mut().zip(chunk).for_each(|(a, c)| *a += c);
                        }
                    });
                    accumulate(&mut grads[x.0], &xv.shape, |d| {
                        d.iter_mut().zip(&g.data).for_each(|(a, c)| *a += c)
                    });
                }
                Op::Add(a, b) => {
                    for v in [a, b] {
                        accumulate(&mut grads[v.0], &g.shape, |d| {
                            d.iter_mut().zip(&g.data).for_each(|(a, c)| *a += c)
                        });
                    }
                }
                Op::Scale(x, s) => {
                    accumulate(&mut grads[x.0], &g.shape, |d| {
                        d.iter_mut().zip(&g.data).for_each(|(a, c)| *a += s * c)
                    });
                }
                Op::Gelu(x) => {
                    let xv = val(x);
                    accumulate(&mut grads[x.0], &xv.shape, |d| {
                        for ((a, c), xi) in d.iter_mut().zip(&g.data).zip(&xv.data) {
                            *a += c * gelu_grad(*xi);
                        }
                    });
                }
                Op::Conv1d {
                    x,
                    w,
                    b,
                    stride,
                    pad,
                } => {
                    let (xv, wv) = (val(x), val(w));
                    let (bs, c, t) = dims3(xv);
                    let (o, _, k) = dims3(wv);
                    let tout = g.shape[2];
                    let mut dx = Tensor::zeros(&xv.shape);
                    let mut dw = Tensor::zeros(&wv.shape);
                    let mut db = Tensor::zeros(&[o]);
                    let mut col = vec![0.0; tout * c * k];
                    let mut dcol = vec![0.0; tout * c * k];
                    for bi in 0..bs {
                        let gb = &g.data[bi * o * tout..(bi + 1) * o * tout];
                        for (oi, grow) in gb.chunks(tout).enumerate() {
                            db.data[oi] += grow.iter().sum::<f64>();
                        }
                        let xb = &xv.data[bi * c * t..(bi + 1) * c * t];
                        im2col(xb, c, t, k, stride, pad, &mut col);
                        gemm(gb, &col, &mut dw.data, o, tout, c * k, false, false);
                        dcol.iter_mut().for_each(|v| *v = 0.0);
                        gemm(gb, &wv.data, &mut dcol, tout, o, c * k, true, false);
                        col2im_add(&dcol, c, t, k, stride, pad, &mut dx.data[bi * c * t..(bi + 1) * c * t]);
                    }
                    for (v, t) in [(x, dx), (w, dw), (b, db)] {
                        accumulate(&mut grads[v.0], &t.shape, |d| {
                            d.iter_mut().zip(&t.data).for_each(|(a, c)| *a += c)
                        });
                    }
                }
                Op::SwapLast2(x) => {
                    let (b, n, m) = dims3(&g);
                    let xshape = val(x).shape.clone();
                    accumulate(&mut grads[x.0], &xshape, |d| {
                        for bi in 0..b {
                            for j in 0..n {
                                for i in 0..m {
                                    d[(bi * m + i) * n + j] += g.data[(bi * n + j) * m + i];
                                }
                            }
                        }
                    });
                }
                Op::Reshape(x) => {
                    let xshape = val(x).shape.clone();
                    accumulate(&mut grads[x.0], &xshape, |d| {
                        d.iter_mut().zip(&g.data).for_each(|(a, c)| *a += c)
                    });
                }
                Op::BatchMatMul { a, b, trans_b } => {
                    let (av, bv) = (val(a), val(b));
                    let (bs, n, k) = dims3(av);
                    let m = g.shape[2];
                    let mut da = Tensor::zeros(&av.shape);
                    let mut db = Tensor::zeros(&bv.shape);
                    for i in 0..bs {
                        let gs = &g.data[i * n * m..(i + 1) * n * m];
                        let as_ = &av.data[i * n * k..(i + 1) * n * k];
                        let bsl = &bv.data[i * k * m..(i + 1) * k * m];
                        let da_s = &mut da.data[i * n * k..(i + 1) * n * k];
                        let db_s = &mut db.data[i * k * m..(i + 1) * k * m];
                        if trans_b {
                            // y = a·bᵀ with b [m,k]
                            gemm(gs, bsl, da_s, n, m, k, false, false);
                            gemm(gs, as_, db_s, m, n, k, true, false);
                        } else {
                            gemm(gs, bsl, da_s, n, m, k, false, true);
                            gemm(as_, gs, db_s, k, n, m, true, false);
                        }
                    }
                    for (v, t) in [(a, da), (b, db)] {
                        accumulate(&mut grads[v.0], &t.shape, |d| {
                            d.iter_mut().zip(&t.data).for_each(|(a, c)| *a += c)
                        });
                    }
                }
                Op::SoftmaxLast(x) => {
                    let y = &node.value;
                    let dcols = y.cols();
                    accumulate(&mut grads[x.0], &y.shape, |d| {
                        for ((drow, grow), yrow) in d
                            .chunks_mut(dcols)
                            .zip(g.data.chunks(dcols))
                            .zip(y.data.chunks(dcols))
                        {
                            let s: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                            for ((dv, gv), yv) in drow.iter_mut().zip(grow).zip(yrow) {
                                *dv += yv * (gv - s);
                            }
                        }
                    });
                }
                Op::LayerNorm { x, gain, bias } => {
                    let (xv, gv) = (val(x), val(gain));
                    let dcols = xv.cols();
                    let mut dx = Tensor::zeros(&xv.shape);
                    let mut dgain = Tensor::zeros(&gv.shape);
                    let mut dbias = Tensor::zeros(&gv.shape);
                    for ((xrow, grow), dxrow) in xv
                        .data
                        .chunks(dcols)
                        .zip(g.data.chunks(dcols))
                        .zip(dx.data.chunks_mut(dcols))
                    {
                        let (mean, rstd) = moments(xrow);
                        let xhat: Vec<f64> = xrow.iter().map(|v| (v - mean) * rstd).collect();
                        let dxhat: Vec<f64> =
                            grow.iter().zip(&gv.data).map(|(a, b)| a * b).collect();
                        let m1 = dxhat.iter().sum::<f64>() / dcols as f64;
                        let m2 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>()
                            / dcols as f64;
                        for j in 0..dcols {
                            dgain.data[j] += grow[j] * xhat[j];
                            dbias.data[j] += grow[j];
                            dxrow[j] = rstd * (dxhat[j] - m1 - xhat[j] * m2);
                        }
                    }
                    for (v, t) in [(x, dx), (gain, dgain), (bias, dbias)] {
                        accumulate(&mut grads[v.0], &t.shape, |d| {
                            d.iter_mut().zip(&t.data).for_each(|(a, c)| *a += c)
                        });
                    }
                }
                Op::MeanAxis1(x) => {
                    let xv = val(x);
                    let (b, t, dd) = dims3(xv);
                    accumulate(&mut grads[x.0], &xv.shape, |d| {
                        for bi in 0..b {
                            for ti in 0..t {
                                for j in 0..dd {
                                    d[(bi * t + ti) * dd + j] += g.data[bi * dd + j] / t as f64;
                                }
                            }
                        }
                    });
                }
                Op::RowL2Norm(x) => {
                    let (xv, y) = (val(x), &node.value);
                    let dcols = y.cols();
                    accumulate(&mut grads[x.0], &y.shape, |d| {
                        for (((drow, grow), yrow), xrow) in d
                            .chunks_mut(dcols)
                            .zip(g.data.chunks(dcols))
                            .zip(y.data.chunks(dcols))
                            .zip(xv.data.chunks(dcols))
                        {
                            let norm = xrow.iter().map(|v| v * v).sum::<f64>().sqrt();
                            let s: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                            for ((dv, gv), yv) in drow.iter_mut().zip(grow).zip(yrow) {
                                *dv += (gv - yv * s) / norm;
                            }
                        }
                    });
                }
                Op::BatchStandardize(x) => {
                    let xv = val(x);
                    let n = xv.rows();
                    let xt = xv.transpose2();
                    let gt = g.transpose2();
                    let mut dxt = Tensor::zeros(&xt.shape);
                    for ((xc, gc), dc) in xt
                        .data
                        .chunks(n)
                        .zip(gt.data.chunks(n))
                        .zip(dxt.data.chunks_mut(n))
                    {
                        let (mean, rstd) = moments(xc);
                        let yc: Vec<f64> = xc.iter().map(|v| (v - mean) * rstd).collect();
                        let m1 = gc.iter().sum::<f64>() / n as f64;
                        let m2 = gc.iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for j in 0..n {
                            dc[j] = rstd * (gc[j] - m1 - yc[j] * m2);
                        }
                    }
                    let dx = dxt.transpose2();
                    accumulate(&mut grads[x.0], &xv.shape, |d| {
                        d.iter_mut().zip(&dx.data).for_each(|(a, c)| *a += c)
                    });
                }
            }
        }
        Grads { grads }
    }
}

/// Mean and reciprocal standard deviation (population variance + eps).
fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LN_EPS).sqrt())
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

pub(crate) fn conv_output_len(t: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if t + 2 * pad < k || stride == 0 {
        None
    } else {
        Some(conv_out_len(t, k, stride, pad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn random(shape: &[usize], rng: &mut crate::seed::Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Checks d(sum(out ⊙ probe))/d(input) against central differences for
    /// every entry of every input.
    fn check(inputs: Vec<Tensor>, f: impl Fn(&Tape, &[Var]) -> Var) {
        let mut rng = crate::seed::rng(99);
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().cloned().map(|t| tape.leaf(t)).collect();
        let out = f(&tape, &vars);
        let probe = random(&tape.shape(out), &mut rng);
        let grads = tape.backward(&[(out, probe.clone())]);
        let eval = |ins: &[Tensor]| {
            let t = Tape::new();
            let vs: Vec<Var> = ins.iter().cloned().map(|x| t.leaf(x)).collect();
            let o = f(&t, &vs);
            let v = t.value(o);
            v.data.iter().zip(&probe.data).map(|(a, b)| a * b).sum::<f64>()
        };
        let h = 1e-5;
        for (vi, input) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[vi]).expect("gradient reaches input");
            for j in 0..input.len() {
                let mut plus = inputs.clone();
                plus[vi].data[j] += h;
                let mut minus = inputs.clone();
                minus[vi].data[j] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.data[j];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(err < 1e-6, "input {vi} entry {j}: analytic {a} numeric {numeric}");
            }
        }
    }

    #[test]
    fn elementwise_and_linear_ops() {
        let mut rng = crate::seed::rng(1);
        check(vec![random(&[3, 4], &mut rng), random(&[4, 2], &mut rng)], |t, v| {
            t.matmul(v[0], v[1])
        });
        check(vec![random(&[2, 3, 4], &mut rng), random(&[4], &mut rng)], |t, v| {
            t.gelu(t.add_bias(v[0], v[1]))
        });
        check(vec![random(&[3, 4], &mut rng), random(&[3, 4], &mut rng)], |t, v| {
            t.scale(t.add(v[0], v[1]), 0.7)
        });
    }

    #[test]
    fn conv_and_sequence_ops() {
        let mut rng = crate::seed::rng(2);
        for (stride, pad) in [(1, 2), (2, 2), (2, 0)] {
            check(
                vec![
                    random(&[2, 3, 9], &mut rng),
                    random(&[4, 3, 5], &mut rng),
                    random(&[4], &mut rng),
                ],
                |t, v| t.conv1d(v[0], v[1], v[2], stride, pad),
            );
        }
        check(vec![random(&[2, 3, 5], &mut rng)], |t, v| {
            t.mean_axis1(t.swap_last2(v[0]))
        });
        check(vec![random(&[2, 3, 4], &mut rng), random(&[2, 4, 5], &mut rng)], |t, v| {
            t.batch_matmul(v[0], v[1], false)
        });
        check(vec![random(&[2, 3, 4], &mut rng), random(&[2, 5, 4], &mut rng)], |t, v| {
            t.batch_matmul(v[0], v[1], true)
        });
    }

    #[test]
    fn normalization_ops() {
        let mut rng = crate::seed::rng(3);
        check(vec![random(&[4, 5], &mut rng)], |t, v| t.softmax_last(v[0]));
        check(
            vec![random(&[4, 5], &mut rng), random(&[5], &mut rng), random(&[5], &mut rng)],
            |t, v| t.layer_norm(v[0], v[1], v[2]),
        );
        check(vec![random(&[4, 5], &mut rng)], |t, v| {
            t.row_l2_normalize(v[0]).unwrap()
        });
        check(vec![random(&[6, 3], &mut rng)], |t, v| t.batch_standardize(v[0]));
    }

    #[test]
    fn shared_use_accumulates() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let y = tape.add(x, x);
        let g = tape.backward(&[(y, Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap())]);
        assert_eq!(g.get(x).unwrap().data, vec![2.0, 2.0]);
    }

    #[test]
    fn degenerate_row_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap());
        assert!(tape.row_l2_normalize(x).is_err());
    }
}
