//! A recording tape for the handful of operators the network uses, with exact
//! reverse-mode gradients.
//!
//! Every activation is a `(channels, height, width)` tensor. Nodes are appended
//! in evaluation order, so walking the tape backwards visits each node after all
//! of its consumers.

use crate::image::{bilinear_taps, reflect_index};

use super::scalar::{gemm, MatRef};
use super::{ParameterStore, Real, Tensor};

pub(crate) type NodeId = usize;

/// Variance offset inside the normalisation layers.
pub const NORM_EPS: f64 = 1e-5;

/// Gradients aligned index-for-index with a [`ParameterStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub grads: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(store: &ParameterStore<T>) -> Self {
        Gradients { grads: store.iter().map(|p| vec![T::zero(); p.tensor.len()]).collect() }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<T>> {
        self.grads.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.is_finite())
    }
}

#[derive(Debug)]
enum Op<T> {
    Input,
    Conv { x: NodeId, weight: usize, bias: Option<usize>, kernel: usize, stride: usize },
    Norm { x: NodeId, scale: usize, shift: usize, xhat: Vec<T>, inv_std: Vec<T> },
    LeakyRelu { x: NodeId, slope: T },
    Sigmoid { x: NodeId },
    Upsample { x: NodeId },
    Concat { a: NodeId, b: NodeId },
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    needs_grad: bool,
}

pub(crate) struct Tape<'p, T> {
    params: &'p ParameterStore<T>,
    nodes: Vec<Node<T>>,
}

/// Source coordinate lookup for every (kernel offset, output position) pair.
fn conv_taps(n_in: usize, n_out: usize, kernel: usize, stride: usize) -> Vec<usize> {
    let pad = (kernel / 2) as isize;
    let mut taps = Vec::with_capacity(kernel * n_out);
    for k in 0..kernel {
        for o in 0..n_out {
            taps.push(reflect_index((o * stride + k) as isize - pad, n_in));
        }
    }
    taps
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    kernel: usize,
    ytaps: Vec<usize>,
    xtaps: Vec<usize>,
}

impl ConvGeom {
    fn new(c: usize, h: usize, w: usize, kernel: usize, stride: usize) -> Self {
        let pad = kernel / 2;
        let ho = (h + 2 * pad - kernel) / stride + 1;
        let wo = (w + 2 * pad - kernel) / stride + 1;
        ConvGeom {
            c,
            h,
            w,
            ho,
            wo,
            kernel,
            ytaps: conv_taps(h, ho, kernel, stride),
            xtaps: conv_taps(w, wo, kernel, stride),
        }
    }

    /// A 1x1 stride-1 convolution reads its input directly as the column matrix.
    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.ho == self.h && self.wo == self.w
    }

    fn rows(&self) -> usize {
        self.c * self.kernel * self.kernel
    }

    fn im2col<T: Real>(&self, x: &[T]) -> Vec<T> {
        let (k, n) = (self.kernel, self.ho * self.wo);
        let mut cols = vec![T::zero(); self.rows() * n];
        for ci in 0..self.c {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let r = (ci * k + ky) * k + kx;
                    let dst = &mut cols[r * n..(r + 1) * n];
                    let xt = &self.xtaps[kx * self.wo..(kx + 1) * self.wo];
                    for oy in 0..self.ho {
                        let sy = self.ytaps[ky * self.ho + oy];
                        let src = &plane[sy * self.w..(sy + 1) * self.w];
                        let d = &mut dst[oy * self.wo..(oy + 1) * self.wo];
                        for (dv, &sx) in d.iter_mut().zip(xt) {
                            *dv = src[sx];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im_add<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let (k, n) = (self.kernel, self.ho * self.wo);
        for ci in 0..self.c {
            let plane = &mut dx[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ky in 0..k {
                for kx in 0..k {
                    let r = (ci * k + ky) * k + kx;
                    let src = &cols[r * n..(r + 1) * n];
                    let xt = &self.xtaps[kx * self.wo..(kx + 1) * self.wo];
                    for oy in 0..self.ho {
                        let sy = self.ytaps[ky * self.ho + oy];
                        let row = &mut plane[sy * self.w..(sy + 1) * self.w];
                        for (&g, &sx) in src[oy * self.wo..(oy + 1) * self.wo].iter().zip(xt) {
                            row[sx] += g;
                        }
                    }
                }
            }
        }
    }
}

fn slot<T: Real>(grads: &mut [Option<Vec<T>>], id: NodeId, len: usize) -> &mut Vec<T> {
    grads[id].get_or_insert_with(|| vec![T::zero(); len])
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParameterStore<T>) -> Self {
        Tape { params, nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id].value
    }

    pub fn into_value(mut self, id: NodeId) -> Tensor<T> {
        std::mem::replace(&mut self.nodes[id].value, Tensor::from_parts(vec![1], vec![T::zero()]))
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, needs_grad });
        self.nodes.len() - 1
    }

    fn param(&self, index: usize) -> &'p [T] {
        self.params.params[index].tensor.data()
    }

    pub fn input(&mut self, t: Tensor<T>) -> NodeId {
        self.push(Op::Input, t, false)
    }

    /// Convolution with reflection padding of `kernel / 2`. Weights are
    /// `(out, in, kernel, kernel)`.
    pub fn conv(&mut self, x: NodeId, weight: usize, bias: Option<usize>, kernel: usize, stride: usize) -> NodeId {
        let (c, h, w) = self.nodes[x].value.dims3();
        let wshape = self.params.params[weight].tensor.shape();
        let co = wshape[0];
        debug_assert_eq!(wshape, &[co, c, kernel, kernel]);
        let geom = ConvGeom::new(c, h, w, kernel, stride);
        let n = geom.ho * geom.wo;
        let mut out = vec![T::zero(); co * n];
        let wmat = MatRef::new(self.param(weight), co, geom.rows());
        if geom.is_pointwise() {
            gemm(wmat, MatRef::new(self.nodes[x].value.data(), c, n), T::zero(), &mut out);
        } else {
            let cols = geom.im2col(self.nodes[x].value.data());
            gemm(wmat, MatRef::new(&cols, geom.rows(), n), T::zero(), &mut out);
        }
        if let Some(b) = bias {
            for (row, &bv) in out.chunks_mut(n).zip(self.param(b)) {
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
        let value = Tensor::from_parts(vec![co, geom.ho, geom.wo], out);
        self.push(Op::Conv { x, weight, bias, kernel, stride }, value, true)
    }

    /// Per-channel normalisation over spatial positions with learned scale and shift.
    pub fn norm(&mut self, x: NodeId, scale: usize, shift: usize) -> NodeId {
        let (c, h, w) = self.nodes[x].value.dims3();
        let n = h * w;
        let (gamma, beta) = (self.param(scale), self.param(shift));
        let src = self.nodes[x].value.data();
        let mut xhat = vec![T::zero(); c * n];
        let mut out = vec![T::zero(); c * n];
        let mut inv_std = Vec::with_capacity(c);
        for ch in 0..c {
            let xs = &src[ch * n..(ch + 1) * n];
            let mean = xs.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
            let var = xs.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + NORM_EPS).sqrt();
            let (mean_t, is_t) = (T::of(mean), T::of(is));
            inv_std.push(is_t);
            let xh = &mut xhat[ch * n..(ch + 1) * n];
            let o = &mut out[ch * n..(ch + 1) * n];
            for ((xv, hv), ov) in xs.iter().zip(xh.iter_mut()).zip(o.iter_mut()) {
                *hv = (*xv - mean_t) * is_t;
                *ov = gamma[ch] * *hv + beta[ch];
            }
        }
        let value = Tensor::from_parts(vec![c, h, w], out);
        self.push(Op::Norm { x, scale, shift, xhat, inv_std }, value, true)
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let slope = T::of(slope);
        let src = &self.nodes[x].value;
        let out = src.data().iter().map(|&v| if v > T::zero() { v } else { v * slope }).collect();
        let value = Tensor::from_parts(src.shape().to_vec(), out);
        let needs = self.nodes[x].needs_grad;
        self.push(Op::LeakyRelu { x, slope }, value, needs)
    }

    /// Logistic sigmoid, kept strictly inside `(0, 1)` at the precision of `T`.
    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let lo = T::min_positive_value();
        let hi = T::one() - T::epsilon() / T::of(2.0);
        let src = &self.nodes[x].value;
        let out = src.data().iter().map(|&v| (T::one() / (T::one() + (-v).exp())).max(lo).min(hi)).collect();
        let value = Tensor::from_parts(src.shape().to_vec(), out);
        let needs = self.nodes[x].needs_grad;
        self.push(Op::Sigmoid { x }, value, needs)
    }

    /// Bilinear 2x upsampling with half-pixel centres and edge clamping.
    pub fn upsample2x(&mut self, x: NodeId) -> NodeId {
        let (c, h, w) = self.nodes[x].value.dims3();
        let (xt, yt) = (bilinear_taps(w, 2 * w), bilinear_taps(h, 2 * h));
        let src = self.nodes[x].value.data();
        let (h2, w2) = (2 * h, 2 * w);
        let mut tmp = vec![T::zero(); c * h * w2];
        for (row_in, row_out) in src.chunks(w).zip(tmp.chunks_mut(w2)) {
            for (o, &(i0, i1, t)) in row_out.iter_mut().zip(&xt) {
                let t = T::of(t);
                *o = (T::one() - t) * row_in[i0] + t * row_in[i1];
            }
        }
        let mut out = vec![T::zero(); c * h2 * w2];
        for ch in 0..c {
            let plane = &tmp[ch * h * w2..(ch + 1) * h * w2];
            for (oy, &(j0, j1, t)) in yt.iter().enumerate() {
                let t = T::of(t);
                let (r0, r1) = (&plane[j0 * w2..(j0 + 1) * w2], &plane[j1 * w2..(j1 + 1) * w2]);
                let dst = &mut out[(ch * h2 + oy) * w2..(ch * h2 + oy + 1) * w2];
                for ((d, &a), &b) in dst.iter_mut().zip(r0).zip(r1) {
                    *d = (T::one() - t) * a + t * b;
                }
            }
        }
        let value = Tensor::from_parts(vec![c, h2, w2], out);
        let needs = self.nodes[x].needs_grad;
        self.push(Op::Upsample { x }, value, needs)
    }

    /// Channel concatenation `[a; b]`.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ca, h, w) = self.nodes[a].value.dims3();
        let (cb, hb, wb) = self.nodes[b].value.dims3();
        assert_eq!((h, w), (hb, wb), "concat spatial mismatch");
        let mut out = Vec::with_capacity((ca + cb) * h * w);
        out.extend_from_slice(self.nodes[a].value.data());
        out.extend_from_slice(self.nodes[b].value.data());
        let value = Tensor::from_parts(vec![ca + cb, h, w], out);
        let needs = self.nodes[a].needs_grad || self.nodes[b].needs_grad;
        self.push(Op::Concat { a, b }, value, needs)
    }

    /// Propagates `d_out` (gradient of the loss with respect to node `out`)
    /// back to every parameter. Nodes after `out` are ignored.
    pub fn backward(&self, out: NodeId, d_out: Vec<T>) -> Gradients<T> {
        assert_eq!(d_out.len(), self.nodes[out].value.len());
        let mut pgrads = Gradients::zeros_like(self.params);
        let mut grads: Vec<Option<Vec<T>>> = (0..=out).map(|_| None).collect();
        grads[out] = Some(d_out);

        for id in (0..=out).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input => {}
                &Op::Conv { x, weight, bias, kernel, stride } => {
                    let xin = &self.nodes[x].value;
                    let (c, h, w) = xin.dims3();
                    let geom = ConvGeom::new(c, h, w, kernel, stride);
                    let (co, n) = (node.value.dims3().0, geom.ho * geom.wo);
                    let gmat = MatRef::new(&g, co, n);
                    if let Some(b) = bias {
                        for (db, row) in pgrads.grads[b].iter_mut().zip(g.chunks(n)) {
                            *db += row.iter().copied().sum::<T>();
                        }
                    }
                    let cols_owned;
                    let cols: &[T] = if geom.is_pointwise() {
                        xin.data()
                    } else {
                        cols_owned = geom.im2col(xin.data());
                        &cols_owned
                    };
                    gemm(gmat, MatRef::new(cols, geom.rows(), n).t(), T::one(), &mut pgrads.grads[weight]);
                    if self.nodes[x].needs_grad {
                        let wt = MatRef::new(self.param(weight), co, geom.rows()).t();
                        let dx = slot(&mut grads, x, xin.len());
                        if geom.is_pointwise() {
                            gemm(wt, gmat, T::one(), dx);
                        } else {
                            let mut dcols = vec![T::zero(); geom.rows() * n];
                            gemm(wt, gmat, T::zero(), &mut dcols);
                            geom.col2im_add(&dcols, dx);
                        }
                    }
                }
                Op::Norm { x, scale, shift, xhat, inv_std } => {
                    let (c, h, w) = node.value.dims3();
                    let n = h * w;
                    let gamma = self.param(*scale);
                    let need_x = self.nodes[*x].needs_grad;
                    for ch in 0..c {
                        let gs = &g[ch * n..(ch + 1) * n];
                        let xh = &xhat[ch * n..(ch + 1) * n];
                        let sum_g: f64 = gs.iter().map(|v| v.as_f64()).sum();
                        let sum_gx: f64 = gs.iter().zip(xh).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
                        pgrads.grads[*scale][ch] += T::of(sum_gx);
                        pgrads.grads[*shift][ch] += T::of(sum_g);
                        if need_x {
                            let k = gamma[ch] * inv_std[ch];
                            let (mg, mgx) = (T::of(sum_g / n as f64), T::of(sum_gx / n as f64));
                            let dx = &mut slot(&mut grads, *x, c * n)[ch * n..(ch + 1) * n];
                            for ((d, &gv), &hv) in dx.iter_mut().zip(gs).zip(xh) {
                                *d += k * (gv - mg - hv * mgx);
                            }
                        }
                    }
                }
                &Op::LeakyRelu { x, slope } => {
                    if self.nodes[x].needs_grad {
                        let dx = slot(&mut grads, x, g.len());
                        for ((d, &gv), &y) in dx.iter_mut().zip(&g).zip(node.value.data()) {
                            *d += if y > T::zero() { gv } else { gv * slope };
                        }
                    }
                }
                &Op::Sigmoid { x } => {
                    if self.nodes[x].needs_grad {
                        let dx = slot(&mut grads, x, g.len());
                        for ((d, &gv), &y) in dx.iter_mut().zip(&g).zip(node.value.data()) {
                            *d += gv * y * (T::one() - y);
                        }
                    }
                }
                &Op::Upsample { x } => {
                    if self.nodes[x].needs_grad {
                        let (c, h, w) = self.nodes[x].value.dims3();
                        let (h2, w2) = (2 * h, 2 * w);
                        let (xt, yt) = (bilinear_taps(w, w2), bilinear_taps(h, h2));
                        let mut tmp = vec![T::zero(); c * h * w2];
                        for ch in 0..c {
                            let plane = &mut tmp[ch * h * w2..(ch + 1) * h * w2];
                            for (oy, &(j0, j1, t)) in yt.iter().enumerate() {
                                let t = T::of(t);
                                let src = &g[(ch * h2 + oy) * w2..(ch * h2 + oy + 1) * w2];
                                for (i, &gv) in src.iter().enumerate() {
                                    plane[j0 * w2 + i] += (T::one() - t) * gv;
                                    plane[j1 * w2 + i] += t * gv;
                                }
                            }
                        }
                        let dx = slot(&mut grads, x, c * h * w);
                        for (row_g, row_dx) in tmp.chunks(w2).zip(dx.chunks_mut(w)) {
                            for (&gv, &(i0, i1, t)) in row_g.iter().zip(&xt) {
                                let t = T::of(t);
                                row_dx[i0] += (T::one() - t) * gv;
                                row_dx[i1] += t * gv;
                            }
                        }
                    }
                }
                &Op::Concat { a, b } => {
                    let la = self.nodes[a].value.len();
                    if self.nodes[a].needs_grad {
                        let da = slot(&mut grads, a, la);
                        da.iter_mut().zip(&g[..la]).for_each(|(d, &v)| *d += v);
                    }
                    if self.nodes[b].needs_grad {
                        let db = slot(&mut grads, b, g.len() - la);
                        db.iter_mut().zip(&g[la..]).for_each(|(d, &v)| *d += v);
                    }
                }
            }
        }
        pgrads
    }
}
