//! Reverse-mode automatic differentiation over a linear operation tape.
//!
//! Every op appends a node holding the forward value, parent ids, and a
//! backward closure that maps the node's output gradient to per-parent
//! gradient contributions. `backward()` walks the tape in reverse and
//! accumulates. Nodes are appended in execution order, so the tape is
//! topologically sorted by construction.

use super::array::{matmul, matmul_nt, matmul_tn, Array};
use super::conv::{col2im, conv_out_dim, im2col};
use crate::error::{Error, Result};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(pub(crate) usize);

/// (out_value, out_grad, parent_values, parent_needs_grad) -> per-parent grads.
type BackwardFn = Box<dyn Fn(&Array, &Array, &[&Array], &[bool]) -> Vec<Option<Array>>>;

struct Node {
    value: Array,
    parents: Vec<TensorId>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Recorded computation; owns all forward values and, after `backward()`,
/// the gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Array>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a recorded tensor.
    pub fn value(&self, id: TensorId) -> &Array {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward()` loss w.r.t. this tensor, if tracked.
    pub fn grad(&self, id: TensorId) -> Option<&Array> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(
        &mut self,
        value: Array,
        parents: Vec<TensorId>,
        backward: Option<BackwardFn>,
    ) -> TensorId {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            parents,
            backward,
            requires_grad,
        });
        TensorId(self.nodes.len() - 1)
    }

    /// Record a leaf tensor.
    pub fn leaf(&mut self, value: Array, requires_grad: bool) -> TensorId {
        self.nodes.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad,
        });
        TensorId(self.nodes.len() - 1)
    }

    /// Record a non-differentiable constant.
    pub fn constant(&mut self, value: Array) -> TensorId {
        self.leaf(value, false)
    }

    /// Record a custom differentiable node. Used by ops defined outside this
    /// module (e.g. the Chamfer loss).
    pub(crate) fn custom(
        &mut self,
        value: Array,
        parents: Vec<TensorId>,
        backward: BackwardFn,
    ) -> TensorId {
        self.push(value, parents, Some(backward))
    }

    fn shapes_match(&self, a: TensorId, b: TensorId, context: &'static str) -> Result<()> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch {
                expected: va.shape().to_vec(),
                got: vb.shape().to_vec(),
                context,
            });
        }
        Ok(())
    }

    // ---- elementwise ----------------------------------------------------

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.shapes_match(a, b, "add operands")?;
        let mut v = self.nodes[a.0].value.clone();
        v.accumulate(&self.nodes[b.0].value);
        Ok(self.push(
            v,
            vec![a, b],
            Some(Box::new(|_, g, _, needs| {
                vec![
                    needs[0].then(|| g.clone()),
                    needs[1].then(|| g.clone()),
                ]
            })),
        ))
    }

    /// `[r×c] + [c]` row-broadcast bias add.
    pub fn add_bias(&mut self, m: TensorId, bias: TensorId) -> Result<TensorId> {
        let (r, c) = self.nodes[m.0].value.dims2()?;
        let bshape = self.nodes[bias.0].value.shape().to_vec();
        if bshape != [c] {
            return Err(Error::ShapeMismatch {
                expected: vec![c],
                got: bshape,
                context: "add_bias bias vector",
            });
        }
        let mut data = self.nodes[m.0].value.data().to_vec();
        let b = self.nodes[bias.0].value.data();
        for row in data.chunks_mut(c) {
            for (x, bv) in row.iter_mut().zip(b) {
                *x += bv;
            }
        }
        let v = Array::new(vec![r, c], data)?;
        Ok(self.push(
            v,
            vec![m, bias],
            Some(Box::new(move |_, g, _, needs| {
                let gb = needs[1].then(|| {
                    let mut acc = vec![0.0; c];
                    for row in g.data().chunks(c) {
                        for (a, &x) in acc.iter_mut().zip(row) {
                            *a += x;
                        }
                    }
                    Array::new(vec![c], acc).unwrap()
                });
                vec![needs[0].then(|| g.clone()), gb]
            })),
        ))
    }

    /// Multiply by a compile-time constant.
    pub fn scale(&mut self, a: TensorId, k: f64) -> TensorId {
        let v = self.nodes[a.0].value.map(|x| k * x);
        self.push(
            v,
            vec![a],
            Some(Box::new(move |_, g, _, needs| {
                vec![needs[0].then(|| g.map(|x| k * x))]
            })),
        )
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.shapes_match(a, b, "mul operands")?;
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let v = Array::new(va.shape().to_vec(), data)?;
        Ok(self.push(
            v,
            vec![a, b],
            Some(Box::new(|_, g, pv, needs| {
                let ga = needs[0].then(|| {
                    let data = g.data().iter().zip(pv[1].data()).map(|(&x, &y)| x * y);
                    Array::new(g.shape().to_vec(), data.collect()).unwrap()
                });
                let gb = needs[1].then(|| {
                    let data = g.data().iter().zip(pv[0].data()).map(|(&x, &y)| x * y);
                    Array::new(g.shape().to_vec(), data.collect()).unwrap()
                });
                vec![ga, gb]
            })),
        ))
    }

    /// Rectified linear unit. Subgradient 0 at the kink.
    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let v = self.nodes[a.0].value.map(|x| x.max(0.0));
        self.push(
            v,
            vec![a],
            Some(Box::new(|_, g, pv, needs| {
                vec![needs[0].then(|| {
                    let data = g
                        .data()
                        .iter()
                        .zip(pv[0].data())
                        .map(|(&gv, &x)| if x > 0.0 { gv } else { 0.0 });
                    Array::new(g.shape().to_vec(), data.collect()).unwrap()
                })]
            })),
        )
    }

    /// Logistic sigmoid.
    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let v = self.nodes[a.0].value.map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(
            v,
            vec![a],
            Some(Box::new(|out, g, _, needs| {
                vec![needs[0].then(|| {
                    let data = g
                        .data()
                        .iter()
                        .zip(out.data())
                        .map(|(&gv, &y)| gv * y * (1.0 - y));
                    Array::new(g.shape().to_vec(), data.collect()).unwrap()
                })]
            })),
        )
    }

    // ---- structure ------------------------------------------------------

    /// View under a new shape with the same element count.
    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        let v = &self.nodes[a.0].value;
        let n: usize = shape.iter().product();
        if n != v.numel() {
            return Err(Error::ShapeMismatch {
                expected: vec![v.numel()],
                got: vec![n],
                context: "reshape element count",
            });
        }
        let old_shape = v.shape().to_vec();
        let v = Array::new(shape, v.data().to_vec())?;
        Ok(self.push(
            v,
            vec![a],
            Some(Box::new(move |_, g, _, needs| {
                vec![needs[0]
                    .then(|| Array::new(old_shape.clone(), g.data().to_vec()).unwrap())]
            })),
        ))
    }

    /// Concatenate rank-2 tensors along columns (axis 1).
    pub fn concat_cols(&mut self, ids: &[TensorId]) -> Result<TensorId> {
        if ids.is_empty() {
            return Err(Error::invalid("concat_cols: empty input list"));
        }
        let (rows, _) = self.nodes[ids[0].0].value.dims2()?;
        let mut widths = Vec::with_capacity(ids.len());
        for &id in ids {
            let (r, c) = self.nodes[id.0].value.dims2()?;
            if r != rows {
                return Err(Error::ShapeMismatch {
                    expected: vec![rows],
                    got: vec![r],
                    context: "concat_cols row counts",
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut off = 0;
        for (&id, &c) in ids.iter().zip(&widths) {
            let src = self.nodes[id.0].value.data();
            for r in 0..rows {
                data[r * total + off..r * total + off + c]
                    .copy_from_slice(&src[r * c..(r + 1) * c]);
            }
            off += c;
        }
        let v = Array::new(vec![rows, total], data)?;
        let widths_b = widths.clone();
        Ok(self.push(
            v,
            ids.to_vec(),
            Some(Box::new(move |_, g, _, needs| {
                let mut out = Vec::with_capacity(widths_b.len());
                let mut off = 0;
                for (k, &c) in widths_b.iter().enumerate() {
                    out.push(needs[k].then(|| {
                        let mut part = vec![0.0; rows * c];
                        for r in 0..rows {
                            part[r * c..(r + 1) * c]
                                .copy_from_slice(&g.data()[r * total + off..r * total + off + c]);
                        }
                        Array::new(vec![rows, c], part).unwrap()
                    }));
                    off += c;
                }
                out
            })),
        ))
    }

    /// Concatenate rank-2 tensors along rows (axis 0).
    pub fn concat_rows(&mut self, ids: &[TensorId]) -> Result<TensorId> {
        if ids.is_empty() {
            return Err(Error::invalid("concat_rows: empty input list"));
        }
        let (_, cols) = self.nodes[ids[0].0].value.dims2()?;
        let mut heights = Vec::with_capacity(ids.len());
        for &id in ids {
            let (r, c) = self.nodes[id.0].value.dims2()?;
            if c != cols {
                return Err(Error::ShapeMismatch {
                    expected: vec![cols],
                    got: vec![c],
                    context: "concat_rows column counts",
                });
            }
            heights.push(r);
        }
        let total: usize = heights.iter().sum();
        let mut data = Vec::with_capacity(total * cols);
        for &id in ids {
            data.extend_from_slice(self.nodes[id.0].value.data());
        }
        let v = Array::new(vec![total, cols], data)?;
        let heights_b = heights.clone();
        Ok(self.push(
            v,
            ids.to_vec(),
            Some(Box::new(move |_, g, _, needs| {
                let mut out = Vec::with_capacity(heights_b.len());
                let mut off = 0;
                for (k, &r) in heights_b.iter().enumerate() {
                    out.push(needs[k].then(|| {
                        Array::new(
                            vec![r, cols],
                            g.data()[off * cols..(off + r) * cols].to_vec(),
                        )
                        .unwrap()
                    }));
                    off += r;
                }
                out
            })),
        ))
    }

    /// Concatenate rank-3 feature maps along the channel axis.
    pub fn concat_channels(&mut self, ids: &[TensorId]) -> Result<TensorId> {
        if ids.is_empty() {
            return Err(Error::invalid("concat_channels: empty input list"));
        }
        let (_, h, w) = self.nodes[ids[0].0].value.dims3()?;
        let mut chans = Vec::with_capacity(ids.len());
        for &id in ids {
            let (c, hh, ww) = self.nodes[id.0].value.dims3()?;
            if hh != h || ww != w {
                return Err(Error::ShapeMismatch {
                    expected: vec![h, w],
                    got: vec![hh, ww],
                    context: "concat_channels spatial dims",
                });
            }
            chans.push(c);
        }
        let total: usize = chans.iter().sum();
        let mut data = Vec::with_capacity(total * h * w);
        for &id in ids {
            data.extend_from_slice(self.nodes[id.0].value.data());
        }
        let v = Array::new(vec![total, h, w], data)?;
        let chans_b = chans.clone();
        Ok(self.push(
            v,
            ids.to_vec(),
            Some(Box::new(move |_, g, _, needs| {
                let plane = h * w;
                let mut out = Vec::with_capacity(chans_b.len());
                let mut off = 0;
                for (k, &c) in chans_b.iter().enumerate() {
                    out.push(needs[k].then(|| {
                        Array::new(
                            vec![c, h, w],
                            g.data()[off * plane..(off + c) * plane].to_vec(),
                        )
                        .unwrap()
                    }));
                    off += c;
                }
                out
            })),
        ))
    }

    /// Tile a `[c]` vector into `[rows×c]`.
    pub fn broadcast_row(&mut self, v: TensorId, rows: usize) -> Result<TensorId> {
        let src = &self.nodes[v.0].value;
        if src.shape().len() != 1 {
            return Err(Error::ShapeMismatch {
                expected: vec![1],
                got: src.shape().to_vec(),
                context: "broadcast_row expects rank-1 input",
            });
        }
        let c = src.numel();
        let mut data = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            data.extend_from_slice(src.data());
        }
        let out = Array::new(vec![rows, c], data)?;
        Ok(self.push(
            out,
            vec![v],
            Some(Box::new(move |_, g, _, needs| {
                vec![needs[0].then(|| {
                    let mut acc = vec![0.0; c];
                    for row in g.data().chunks(c) {
                        for (a, &x) in acc.iter_mut().zip(row) {
                            *a += x;
                        }
                    }
                    Array::new(vec![c], acc).unwrap()
                })]
            })),
        ))
    }

    /// Repeat each row `k` times consecutively: `[r×c] -> [r*k×c]`.
    pub fn repeat_rows(&mut self, a: TensorId, k: usize) -> Result<TensorId> {
        let (r, c) = self.nodes[a.0].value.dims2()?;
        let src = self.nodes[a.0].value.data();
        let mut data = Vec::with_capacity(r * k * c);
        for row in src.chunks(c) {
            for _ in 0..k {
                data.extend_from_slice(row);
            }
        }
        let v = Array::new(vec![r * k, c], data)?;
        Ok(self.push(
            v,
            vec![a],
            Some(Box::new(move |_, g, _, needs| {
                vec![needs[0].then(|| {
                    let mut acc = vec![0.0; r * c];
                    for (i, row) in g.data().chunks(c).enumerate() {
                        let dst = &mut acc[(i / k) * c..(i / k + 1) * c];
                        for (a, &x) in dst.iter_mut().zip(row) {
                            *a += x;
                        }
                    }
                    Array::new(vec![r, c], acc).unwrap()
                })]
            })),
        ))
    }

    // ---- reductions -----------------------------------------------------

    /// Column-wise max over rows: `[r×c] -> [c]`. Gradient routes to the
    /// first row attaining the max in each column.
    pub fn max_over_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = self.nodes[a.0].value.dims2()?;
        if r == 0 {
            return Err(Error::invalid("max_over_rows: zero rows"));
        }
        let src = self.nodes[a.0].value.data();
        let mut best = src[..c].to_vec();
        let mut arg = vec![0usize; c];
        for i in 1..r {
            let row = &src[i * c..(i + 1) * c];
            for j in 0..c {
                if row[j] > best[j] {
                    best[j] = row[j];
                    arg[j] = i;
                }
            }
        }
        let v = Array::new(vec![c], best)?;
        Ok(self.push(
            v,
            vec![a],
            Some(Box::new(move |_, g, _, needs| {
                vec![needs[0].then(|| {
                    let mut out = vec![0.0; r * c];
                    for j in 0..c {
                        out[arg[j] * c + j] = g.data()[j];
                    }
                    Array::new(vec![r, c], out).unwrap()
                })]
            })),
        ))
    }

    /// Sum of all elements.
    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let total: f64 = self.nodes[a.0].value.data().iter().sum();
        let shape = self.nodes[a.0].value.shape().to_vec();
        self.push(
            Array::scalar(total),
            vec![a],
            Some(Box::new(move |_, g, _, needs| {
                vec![needs[0].then(|| Array::filled(shape.clone(), g.scalar_value()))]
            })),
        )
    }

    /// Mean of all elements.
    pub fn mean(&mut self, a: TensorId) -> TensorId {
        let n = self.nodes[a.0].value.numel() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    // ---- spatial ops ----------------------------------------------------

    /// 2-D convolution: input `[ci,h,w]`, kernels `[co,ci,kh,kw]`, bias `[co]`.
    pub fn conv2d(
        &mut self,
        input: TensorId,
        kernels: TensorId,
        bias: TensorId,
        stride: usize,
        pad: usize,
    ) -> Result<TensorId> {
        let (ci, h, w) = self.nodes[input.0].value.dims3()?;
        let kshape = self.nodes[kernels.0].value.shape().to_vec();
        let [co, kci, kh, kw] = match kshape.as_slice() {
            &[a, b, c, d] => [a, b, c, d],
            _ => {
                return Err(Error::ShapeMismatch {
                    expected: vec![4],
                    got: kshape,
                    context: "conv2d kernel rank",
                })
            }
        };
        if kci != ci {
            return Err(Error::ShapeMismatch {
                expected: vec![ci],
                got: vec![kci],
                context: "conv2d kernel input channels",
            });
        }
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(Error::invalid(format!(
                "conv2d: kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d: stride must be positive"));
        }
        let ho = conv_out_dim(h, kh, stride, pad);
        let wo = conv_out_dim(w, kw, stride, pad);

        let col = im2col(self.nodes[input.0].value.data(), ci, h, w, kh, kw, stride, pad);
        let wmat = Array::new(
            vec![co, ci * kh * kw],
            self.nodes[kernels.0].value.data().to_vec(),
        )?;
        let mut out = matmul(&wmat, &col)?; // [co, ho*wo]
        {
            let b = self.nodes[bias.0].value.data().to_vec();
            if b.len() != co {
                return Err(Error::ShapeMismatch {
                    expected: vec![co],
                    got: vec![b.len()],
                    context: "conv2d bias",
                });
            }
            let data = out.data_mut();
            for c in 0..co {
                for v in &mut data[c * ho * wo..(c + 1) * ho * wo] {
                    *v += b[c];
                }
            }
        }
        let v = Array::new(vec![co, ho, wo], out.into_data())?;

        Ok(self.push(
            v,
            vec![input, kernels, bias],
            Some(Box::new(move |_, g, pv, needs| {
                let gmat = Array::new(vec![co, ho * wo], g.data().to_vec()).unwrap();
                // Recompute im2col of the input; cheaper than retaining it.
                let col = im2col(pv[0].data(), ci, h, w, kh, kw, stride, pad);
                let g_in = needs[0].then(|| {
                    let wmat =
                        Array::new(vec![co, ci * kh * kw], pv[1].data().to_vec()).unwrap();
                    let gcol = matmul_tn(&wmat, &gmat).unwrap(); // [ci*kh*kw, ho*wo]
                    col2im(gcol.data(), ci, h, w, kh, kw, stride, pad)
                });
                let g_w = needs[1].then(|| {
                    let gw = matmul_nt(&gmat, &col).unwrap(); // [co, ci*kh*kw]
                    Array::new(vec![co, ci, kh, kw], gw.into_data()).unwrap()
                });
                let g_b = needs[2].then(|| {
                    let data = g.data();
                    let gb = (0..co)
                        .map(|c| data[c * ho * wo..(c + 1) * ho * wo].iter().sum())
                        .collect();
                    Array::new(vec![co], gb).unwrap()
                });
                vec![g_in, g_w, g_b]
            })),
        ))
    }

    /// Max pooling with square kernel and equal stride. Gradient routes to
    /// the first element attaining the window max.
    pub fn maxpool2d(&mut self, input: TensorId, kernel: usize) -> Result<TensorId> {
        let (c, h, w) = self.nodes[input.0].value.dims3()?;
        if kernel == 0 || kernel > h || kernel > w {
            return Err(Error::invalid(format!(
                "maxpool2d: kernel {kernel} incompatible with input {h}x{w}"
            )));
        }
        let ho = h / kernel;
        let wo = w / kernel;
        let src = self.nodes[input.0].value.data();
        let mut out = vec![f64::NEG_INFINITY; c * ho * wo];
        let mut arg = vec![0usize; c * ho * wo];
        for ch in 0..c {
            let plane = &src[ch * h * w..(ch + 1) * h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let oi = (ch * ho + oy) * wo + ox;
                    for i in 0..kernel {
                        let row = (oy * kernel + i) * w + ox * kernel;
                        for j in 0..kernel {
                            let v = plane[row + j];
                            if v > out[oi] {
                                out[oi] = v;
                                arg[oi] = ch * h * w + row + j;
                            }
                        }
                    }
                }
            }
        }
        let v = Array::new(vec![c, ho, wo], out)?;
        Ok(self.push(
            v,
            vec![input],
            Some(Box::new(move |_, g, _, needs| {
                vec![needs[0].then(|| {
                    let mut out = vec![0.0; c * h * w];
                    for (oi, &src_i) in arg.iter().enumerate() {
                        out[src_i] += g.data()[oi];
                    }
                    Array::new(vec![c, h, w], out).unwrap()
                })]
            })),
        ))
    }

    /// Transposed convolution: input `[ci,h,w]`, kernels `[ci,co,kh,kw]`,
    /// bias `[co]`. Output is `[(h-1)*stride+kh, (w-1)*stride+kw]`; with
    /// `kh=kw=stride=2` it exactly doubles the spatial dims.
    pub fn deconv2d(
        &mut self,
        input: TensorId,
        kernels: TensorId,
        bias: TensorId,
        stride: usize,
    ) -> Result<TensorId> {
        let (ci, h, w) = self.nodes[input.0].value.dims3()?;
        let kshape = self.nodes[kernels.0].value.shape().to_vec();
        let [kci, co, kh, kw] = match kshape.as_slice() {
            &[a, b, c, d] => [a, b, c, d],
            _ => {
                return Err(Error::ShapeMismatch {
                    expected: vec![4],
                    got: kshape,
                    context: "deconv2d kernel rank",
                })
            }
        };
        if kci != ci {
            return Err(Error::ShapeMismatch {
                expected: vec![ci],
                got: vec![kci],
                context: "deconv2d kernel input channels",
            });
        }
        if stride == 0 {
            return Err(Error::invalid("deconv2d: stride must be positive"));
        }
        let ho = (h - 1) * stride + kh;
        let wo = (w - 1) * stride + kw;
        let x = self.nodes[input.0].value.data();
        let ker = self.nodes[kernels.0].value.data();
        let b = self.nodes[bias.0].value.data();
        if b.len() != co {
            return Err(Error::ShapeMismatch {
                expected: vec![co],
                got: vec![b.len()],
                context: "deconv2d bias",
            });
        }
        let mut out = vec![0.0; co * ho * wo];
        for c in 0..co {
            for v in &mut out[c * ho * wo..(c + 1) * ho * wo] {
                *v = b[c];
            }
        }
        for cin in 0..ci {
            let plane = &x[cin * h * w..(cin + 1) * h * w];
            for cout in 0..co {
                let kbase = ((cin * co) + cout) * kh * kw;
                let obase = cout * ho * wo;
                for iy in 0..h {
                    for ix in 0..w {
                        let v = plane[iy * w + ix];
                        if v == 0.0 {
                            continue;
                        }
                        for i in 0..kh {
                            let orow = obase + (iy * stride + i) * wo + ix * stride;
                            let krow = kbase + i * kw;
                            for j in 0..kw {
                                out[orow + j] += v * ker[krow + j];
                            }
                        }
                    }
                }
            }
        }
        let v = Array::new(vec![co, ho, wo], out)?;
        Ok(self.push(
            v,
            vec![input, kernels, bias],
            Some(Box::new(move |_, g, pv, needs| {
                let gd = g.data();
                let g_in = needs[0].then(|| {
                    let ker = pv[1].data();
                    let mut out = vec![0.0; ci * h * w];
                    for cin in 0..ci {
                        for cout in 0..co {
                            let kbase = ((cin * co) + cout) * kh * kw;
                            let obase = cout * ho * wo;
                            for iy in 0..h {
                                for ix in 0..w {
                                    let mut acc = 0.0;
                                    for i in 0..kh {
                                        let orow = obase + (iy * stride + i) * wo + ix * stride;
                                        let krow = kbase + i * kw;
                                        for j in 0..kw {
                                            acc += gd[orow + j] * ker[krow + j];
                                        }
                                    }
                                    out[cin * h * w + iy * w + ix] += acc;
                                }
                            }
                        }
                    }
                    Array::new(vec![ci, h, w], out).unwrap()
                });
                let g_w = needs[1].then(|| {
                    let x = pv[0].data();
                    let mut out = vec![0.0; ci * co * kh * kw];
                    for cin in 0..ci {
                        let plane = &x[cin * h * w..(cin + 1) * h * w];
                        for cout in 0..co {
                            let kbase = ((cin * co) + cout) * kh * kw;
                            let obase = cout * ho * wo;
                            for iy in 0..h {
                                for ix in 0..w {
                                    let v = plane[iy * w + ix];
                                    if v == 0.0 {
                                        continue;
                                    }
                                    for i in 0..kh {
                                        let orow = obase + (iy * stride + i) * wo + ix * stride;
                                        let krow = kbase + i * kw;
                                        for j in 0..kw {
                                            out[krow + j] += v * gd[orow + j];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    Array::new(vec![ci, co, kh, kw], out).unwrap()
                });
                let g_b = needs[2].then(|| {
                    let gb = (0..co)
                        .map(|c| gd[c * ho * wo..(c + 1) * ho * wo].iter().sum())
                        .collect();
                    Array::new(vec![co], gb).unwrap()
                });
                vec![g_in, g_w, g_b]
            })),
        ))
    }

    // ---- losses ----------------------------------------------------------

    /// Mean binary cross-entropy of probabilities against a 0/1 target.
    /// Probabilities are clamped to `[1e-12, 1-1e-12]` before the log.
    pub fn bce_loss(&mut self, pred: TensorId, target: &Array) -> Result<TensorId> {
        let p = &self.nodes[pred.0].value;
        if p.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                expected: target.shape().to_vec(),
                got: p.shape().to_vec(),
                context: "bce_loss prediction vs target",
            });
        }
        const EPS: f64 = 1e-12;
        let n = p.numel() as f64;
        let mut loss = 0.0;
        for (&pv, &y) in p.data().iter().zip(target.data()) {
            let pc = pv.clamp(EPS, 1.0 - EPS);
            loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        }
        loss /= n;
        let target = target.clone();
        Ok(self.push(
            Array::scalar(loss),
            vec![pred],
            Some(Box::new(move |_, g, pv, needs| {
                vec![needs[0].then(|| {
                    let gs = g.scalar_value() / n;
                    let data = pv[0]
                        .data()
                        .iter()
                        .zip(target.data())
                        .map(|(&pvv, &y)| {
                            let pc = pvv.clamp(EPS, 1.0 - EPS);
                            gs * (pc - y) / (pc * (1.0 - pc))
                        })
                        .collect();
                    Array::new(pv[0].shape().to_vec(), data).unwrap()
                })]
            })),
        ))
    }

    // ---- backward ---------------------------------------------------------

    /// Reverse sweep from a scalar loss. Fails if any accumulated gradient on
    /// a tracked node is non-finite.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::invalid("backward: loss must be a scalar"));
        }
        let n = self.nodes.len();
        self.grads = vec![None; n];
        self.grads[loss.0] = Some(Array::new(
            self.nodes[loss.0].value.shape().to_vec(),
            vec![1.0],
        )?);
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            if !node.requires_grad || node.backward.is_none() {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let f = node.backward.as_ref().unwrap();
            let pvals: Vec<&Array> = node.parents.iter().map(|p| &nodes[p.0].value).collect();
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|p| nodes[p.0].requires_grad)
                .collect();
            let pgrads = f(&node.value, &g, &pvals, &needs);
            debug_assert_eq!(pgrads.len(), node.parents.len());
            for (p, pg) in node.parents.iter().zip(pgrads) {
                let Some(pg) = pg else { continue };
                debug_assert_eq!(pg.shape(), nodes[p.0].value.shape());
                match &mut grads[p.0] {
                    Some(acc) => acc.accumulate(&pg),
                    slot => *slot = Some(pg),
                }
            }
            grads[id] = Some(g);
        }
        for (id, g) in self.grads.iter().enumerate() {
            if let Some(g) = g {
                if self.nodes[id].requires_grad && !g.all_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite gradient on tape node {id}"
                    )));
                }
            }
        }
        Ok(())
    }
}
