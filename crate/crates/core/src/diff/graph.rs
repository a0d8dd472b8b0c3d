//! Tape-style computation graph with reverse-mode differentiation.
//!
//! Every primitive appends one [`Node`] holding its forward value and the
//! references needed for its backward rule. Nodes are stored in creation order,
//! so the tape is already topologically sorted and the backward sweep is a single
//! reverse pass that visits each node once.

use std::sync::Arc;

use super::kernels::{bilinear_taps, col2im, gemm, im2col, ConvGeom};
use super::tensor::{broadcast_shape, broadcast_strides, for_each_broadcast, strides_of, DenseArray};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnaryKind {
    Relu,
    Exp,
    Log,
    Abs,
    Sqrt,
    Square,
    Softplus,
}

/// Denominator floor used by cosine similarity.
pub const COSINE_FLOOR: f64 = 1e-12;

enum Op {
    Leaf,
    Binary { kind: BinaryKind, a: Var, b: Var },
    Unary { kind: UnaryKind, a: Var },
    Scale { a: Var, c: f64 },
    AddScalar { a: Var },
    Matmul { a: Var, b: Var, ta: bool, tb: bool },
    Reshape { a: Var },
    Permute { a: Var, perm: Vec<usize> },
    BroadcastTo { a: Var },
    Sum { a: Var },
    SumAxis { a: Var, axis: usize },
    Softmax { a: Var },
    LayerNorm { a: Var, inv_std: Vec<f64> },
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    MaxPool2d { x: Var, argmax: Vec<usize> },
    Upsample { x: Var, factor: usize },
    Concat { parts: Vec<Var>, axis: usize },
    IndexSelect { a: Var, indices: Vec<usize> },
    ScatterRows { a: Var, indices: Vec<usize> },
    Cosine { a: Var, b: Var },
    External { a: Var, grad: DenseArray },
}

struct Node {
    value: Arc<DenseArray>,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<DenseArray>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&DenseArray> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<DenseArray> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseArray {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: DenseArray, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value: Arc::new(value), op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: impl Into<Arc<DenseArray>>) -> Var {
        self.nodes.push(Node { value: value.into(), op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: impl Into<Arc<DenseArray>>) -> Var {
        self.nodes.push(Node { value: value.into(), op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(DenseArray::scalar(value))
    }

    /// Same value, cut from the gradient tape.
    pub fn detach(&mut self, a: Var) -> Var {
        let value = Arc::clone(&self.nodes[a.0].value);
        self.constant(value)
    }

    // ----- elementwise -------------------------------------------------------------

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let out_shape = broadcast_shape(va.shape(), vb.shape()).ok_or_else(|| {
            Error::shape(format!("{kind:?}: cannot broadcast {:?} with {:?}", va.shape(), vb.shape()))
        })?;
        let sa = broadcast_strides(va.shape(), &out_shape);
        let sb = broadcast_strides(vb.shape(), &out_shape);
        let (da, db) = (va.data(), vb.data());
        let mut out = vec![0.0; out_shape.iter().product()];
        if va.shape() == vb.shape() {
            for ((o, &x), &y) in out.iter_mut().zip(da).zip(db) {
                *o = apply_binary(kind, x, y);
            }
        } else {
            for_each_broadcast(&out_shape, &sa, &sb, |o, ia, ib| out[o] = apply_binary(kind, da[ia], db[ib]));
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(DenseArray::new(out_shape, out)?, Op::Binary { kind, a, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    fn unary(&mut self, kind: UnaryKind, a: Var) -> Var {
        let value = self.value(a).map(|x| apply_unary(kind, x));
        let rg = self.rg(&[a]);
        self.push(value, Op::Unary { kind, a }, rg)
    }

    /// ReLU with subgradient 0 at the kink.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Relu, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Exp, a)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Log, a)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Abs, a)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Sqrt, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Square, a)
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Softplus, a)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale { a, c }, rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        let rg = self.rg(&[a]);
        self.push(value, Op::AddScalar { a }, rg)
    }

    // ----- linear algebra ----------------------------------------------------------

    /// Matrix product of 2-D operands, or batched product of 3-D operands with equal
    /// leading extent. `ta`/`tb` transpose the trailing two axes of each operand.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let dims = matmul_dims(&sa, &sb, ta, tb)?;
        let MatmulDims { batch, m, k, n } = dims;
        let mut out = vec![0.0; batch * m * n];
        {
            let (da, db) = (self.value(a).data(), self.value(b).data());
            for bi in 0..batch {
                let a_blk = &da[bi * m * k..(bi + 1) * m * k];
                let b_blk = &db[bi * k * n..(bi + 1) * k * n];
                gemm(
                    m,
                    k,
                    n,
                    1.0,
                    a_blk,
                    dims.a_strides(ta),
                    b_blk,
                    dims.b_strides(tb),
                    0.0,
                    &mut out[bi * m * n..(bi + 1) * m * n],
                    (n, 1),
                );
            }
        }
        let shape = if sa.len() == 3 { vec![batch, m, n] } else { vec![m, n] };
        let rg = self.rg(&[a, b]);
        Ok(self.push(DenseArray::new(shape, out)?, Op::Matmul { a, b, ta, tb }, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    // ----- shape -------------------------------------------------------------------

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshaped(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Reshape { a }, rg))
    }

    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let src = self.value(a);
        let nd = src.ndim();
        let mut seen = vec![false; nd];
        if perm.len() != nd || perm.iter().any(|&p| p >= nd || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::shape(format!("permute {:?} invalid for shape {:?}", perm, src.shape())));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| src.shape()[p]).collect();
        let data = permute_data(src.data(), src.shape(), perm);
        let rg = self.rg(&[a]);
        Ok(self.push(DenseArray::new(out_shape, data)?, Op::Permute { a, perm: perm.to_vec() }, rg))
    }

    /// Tile `a` up to `shape` under broadcasting rules.
    pub fn broadcast_to(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let src = self.value(a);
        match broadcast_shape(src.shape(), shape) {
            Some(s) if s == shape => {}
            _ => {
                return Err(Error::shape(format!("cannot broadcast {:?} to {:?}", src.shape(), shape)));
            }
        }
        let sa = broadcast_strides(src.shape(), shape);
        let zeros = vec![0; shape.len()];
        let mut out = vec![0.0; shape.iter().product()];
        let d = src.data();
        for_each_broadcast(shape, &sa, &zeros, |o, ia, _| out[o] = d[ia]);
        let rg = self.rg(&[a]);
        Ok(self.push(DenseArray::new(shape.to_vec(), out)?, Op::BroadcastTo { a }, rg))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(*parts.first().ok_or(Error::EmptyInput)?).to_vec();
        if axis >= first.len() {
            return Err(Error::shape(format!("concat axis {axis} out of range for {first:?}")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape(format!("concat along {axis}: {first:?} vs {s:?}")));
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let chunk = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let rg = self.rg(parts);
        Ok(self.push(DenseArray::new(shape, out)?, Op::Concat { parts: parts.to_vec(), axis }, rg))
    }

    /// Gather rows (slices along axis 0) by index.
    pub fn index_select(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let src = self.value(a);
        let rows = *src.shape().first().ok_or_else(|| Error::shape("index_select on a scalar"))?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::shape(format!("row index {bad} out of range for {:?}", src.shape())));
        }
        let inner = src.len() / rows.max(1);
        let mut out = Vec::with_capacity(indices.len() * inner);
        for &i in indices {
            out.extend_from_slice(&src.data()[i * inner..(i + 1) * inner]);
        }
        let mut shape = src.shape().to_vec();
        shape[0] = indices.len();
        let rg = self.rg(&[a]);
        Ok(self.push(DenseArray::new(shape, out)?, Op::IndexSelect { a, indices: indices.to_vec() }, rg))
    }

    /// Rows `start..start+len` along axis 0.
    pub fn narrow(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let idx: Vec<usize> = (start..start + len).collect();
        self.index_select(a, &idx)
    }

    /// Scatter-add rows of `a` into a zero array with `rows` rows: `out[indices[i]] += a[i]`.
    pub fn scatter_rows(&mut self, a: Var, indices: &[usize], rows: usize) -> Result<Var> {
        let src = self.value(a);
        if src.ndim() == 0 || src.shape()[0] != indices.len() {
            return Err(Error::shape(format!("scatter {} indices from {:?}", indices.len(), src.shape())));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::shape(format!("scatter target row {bad} >= {rows}")));
        }
        let inner = if indices.is_empty() { src.shape()[1..].iter().product() } else { src.len() / indices.len() };
        let mut out = vec![0.0; rows * inner];
        for (r, &i) in indices.iter().enumerate() {
            for (o, &v) in out[i * inner..(i + 1) * inner].iter_mut().zip(&src.data()[r * inner..]) {
                *o += v;
            }
        }
        let mut shape = src.shape().to_vec();
        shape[0] = rows;
        let rg = self.rg(&[a]);
        Ok(self.push(DenseArray::new(shape, out)?, Op::ScatterRows { a, indices: indices.to_vec() }, rg))
    }

    // ----- reductions --------------------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let value = DenseArray::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(value, Op::Sum { a }, rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Sum over `axis`, removing it.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let src = self.value(a);
        if axis >= src.ndim() {
            return Err(Error::shape(format!("sum axis {axis} out of range for {:?}", src.shape())));
        }
        let (outer, len, inner) = split_axis(src.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let row = &src.data()[(o * len + j) * inner..][..inner];
                for (dst, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *dst += v;
                }
            }
        }
        let mut shape = src.shape().to_vec();
        shape.remove(axis);
        let rg = self.rg(&[a]);
        Ok(self.push(DenseArray::new(shape, out)?, Op::SumAxis { a, axis }, rg))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let len = *self.shape(a).get(axis).unwrap_or(&1);
        let s = self.sum_axis(a, axis)?;
        Ok(self.scale(s, 1.0 / len.max(1) as f64))
    }

    /// Sum of absolute values.
    pub fn l1_norm(&mut self, a: Var) -> Var {
        let abs = self.abs(a);
        self.sum(abs)
    }

    /// Sum of squares.
    pub fn l2_norm_sq(&mut self, a: Var) -> Var {
        let sq = self.square(a);
        self.sum(sq)
    }

    pub fn l2_norm(&mut self, a: Var) -> Var {
        let s = self.l2_norm_sq(a);
        self.sqrt(s)
    }

    // ----- normalisation -----------------------------------------------------------

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let d = *src.shape().last().ok_or_else(|| Error::shape("softmax of a scalar"))?;
        let mut out = src.data().to_vec();
        if d > 0 {
            for row in out.chunks_mut(d) {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - m).exp();
                    z += *v;
                }
                for v in row.iter_mut() {
                    *v /= z;
                }
            }
        }
        let shape = src.shape().to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(DenseArray::new(shape, out)?, Op::Softmax { a }, rg))
    }

    /// Zero-mean unit-variance normalisation over the last axis (no affine part).
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Result<Var> {
        let src = self.value(a);
        let d = *src.shape().last().ok_or_else(|| Error::shape("layer_norm of a scalar"))?;
        let mut out = src.data().to_vec();
        let mut inv_std = Vec::with_capacity(out.len() / d.max(1));
        if d > 0 {
            for row in out.chunks_mut(d) {
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let is = 1.0 / (var + eps).sqrt();
                for v in row.iter_mut() {
                    *v = (*v - mean) * is;
                }
                inv_std.push(is);
            }
        }
        let shape = src.shape().to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(DenseArray::new(shape, out)?, Op::LayerNorm { a, inv_std }, rg))
    }

    /// Row-wise cosine similarity of two equal-shape `[.., d]` arrays; the
    /// norm product is floored at [`COSINE_FLOOR`].
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() || va.ndim() == 0 {
            return Err(Error::shape(format!("cosine {:?} vs {:?}", va.shape(), vb.shape())));
        }
        let d = *va.shape().last().unwrap();
        let rows = if d == 0 { 0 } else { va.len() / d };
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let (x, y) = (&va.data()[r * d..(r + 1) * d], &vb.data()[r * d..(r + 1) * d]);
            let (dot, nx, ny) = cos_parts(x, y);
            out.push(dot / (nx * ny).max(COSINE_FLOOR));
        }
        let shape = va.shape()[..va.ndim() - 1].to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(DenseArray::new(shape, out)?, Op::Cosine { a, b }, rg))
    }

    // ----- spatial -----------------------------------------------------------------

    /// 2-D cross-correlation with zero padding. `x: [B, Cin, H, W]`,
    /// `w: [Cout, Cin, kh, kw]`, optional `b: [Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] || stride == 0 {
            return Err(Error::shape(format!("conv2d input {sx:?} with kernel {sw:?} (stride {stride})")));
        }
        if let Some(b) = b {
            if self.shape(b) != [sw[0]] {
                return Err(Error::shape(format!("conv2d bias {:?} for {} filters", self.shape(b), sw[0])));
            }
        }
        let (batch, c_in, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
        let (c_out, kh, kw) = (sw[0], sw[2], sw[3]);
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(Error::shape(format!("conv2d kernel {kh}x{kw} larger than padded input {h}x{wd}")));
        }
        let geom = ConvGeom {
            c_in,
            h,
            w: wd,
            kh,
            kw,
            stride,
            pad,
            h_out: (h + 2 * pad - kh) / stride + 1,
            w_out: (wd + 2 * pad - kw) / stride + 1,
        };
        let (k, p) = (geom.patch(), geom.positions());
        let mut out = vec![0.0; batch * c_out * p];
        {
            let xd = self.value(x).data();
            let wdat = self.value(w).data();
            let mut cols = if geom.is_pointwise() { Vec::new() } else { vec![0.0; k * p] };
            for bi in 0..batch {
                let img = &xd[bi * c_in * h * wd..(bi + 1) * c_in * h * wd];
                let colm: &[f64] = if geom.is_pointwise() {
                    img
                } else {
                    im2col(img, &geom, &mut cols);
                    &cols
                };
                let dst = &mut out[bi * c_out * p..(bi + 1) * c_out * p];
                if let Some(b) = b {
                    for (co, bias) in self.value(b).data().iter().enumerate() {
                        dst[co * p..(co + 1) * p].fill(*bias);
                    }
                }
                let beta = if b.is_some() { 1.0 } else { 0.0 };
                gemm(c_out, k, p, 1.0, wdat, (k, 1), colm, (p, 1), beta, dst, (p, 1));
            }
        }
        let shape = vec![batch, c_out, geom.h_out, geom.w_out];
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let rg = self.rg(&inputs);
        Ok(self.push(DenseArray::new(shape, out)?, Op::Conv2d { x, w, b, geom }, rg))
    }

    /// Non-overlapping `k x k` max pooling on `[B, C, H, W]` (trailing rows/cols dropped).
    pub fn max_pool2d(&mut self, x: Var, k: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || k == 0 || s[2] < k || s[3] < k {
            return Err(Error::shape(format!("max_pool2d({k}) on {s:?}")));
        }
        let (bc, h, w) = (s[0] * s[1], s[2], s[3]);
        let (ho, wo) = (h / k, w / k);
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(bc * ho * wo);
        let mut argmax = Vec::with_capacity(bc * ho * wo);
        for plane in 0..bc {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + oy * k * w + ox * k;
                    for dy in 0..k {
                        for dx in 0..k {
                            let i = base + (oy * k + dy) * w + ox * k + dx;
                            if xd[i] > xd[best] {
                                best = i;
                            }
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(DenseArray::new(vec![s[0], s[1], ho, wo], out)?, Op::MaxPool2d { x, argmax }, rg))
    }

    /// Bilinear upsampling of `[B, C, H, W]` by an integer factor, half-pixel
    /// centres (align-corners = false).
    pub fn upsample_bilinear(&mut self, x: Var, factor: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || factor == 0 || s[2] == 0 || s[3] == 0 {
            return Err(Error::shape(format!("upsample x{factor} on {s:?}")));
        }
        let (bc, h, w) = (s[0] * s[1], s[2], s[3]);
        let (ho, wo) = (h * factor, w * factor);
        let (ty, tx) = (bilinear_taps(h, factor), bilinear_taps(w, factor));
        let xd = self.value(x).data();
        let mut out = vec![0.0; bc * ho * wo];
        let mut rowbuf = vec![0.0; wo];
        for plane in 0..bc {
            let src = &xd[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out[plane * ho * wo..(plane + 1) * ho * wo];
            for (oy, &(y0, y1, t)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, u)) in tx.iter().enumerate() {
                    let top = (1.0 - u) * src[y0 * w + x0] + u * src[y0 * w + x1];
                    let bot = (1.0 - u) * src[y1 * w + x0] + u * src[y1 * w + x1];
                    rowbuf[ox] = (1.0 - t) * top + t * bot;
                }
                dst[oy * wo..(oy + 1) * wo].copy_from_slice(&rowbuf);
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(DenseArray::new(vec![s[0], s[1], ho, wo], out)?, Op::Upsample { x, factor }, rg))
    }

    // ----- external ----------------------------------------------------------------

    /// Scalar node whose value and gradient w.r.t. `a` were computed outside the tape.
    pub fn external_scalar(&mut self, a: Var, value: f64, grad: DenseArray) -> Result<Var> {
        if grad.shape() != self.shape(a) {
            return Err(Error::shape(format!(
                "external gradient {:?} for input {:?}",
                grad.shape(),
                self.shape(a)
            )));
        }
        let rg = self.rg(&[a]);
        Ok(self.push(DenseArray::scalar(value), Op::External { a, grad }, rg))
    }

    // ----- backward ----------------------------------------------------------------

    /// Reverse sweep from a scalar `output`. Gradients are kept for every node that
    /// requires one.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(Error::NonScalarOutput(out.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(vec![1.0]);
        for id in (0..=output.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.backprop_node(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.map(|g| DenseArray::new(n.value.shape().to_vec(), g).expect("gradient shape")))
            .collect();
        Ok(Gradients { grads })
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn backprop_node(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Binary { kind, a, b } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let out_shape = node.value.shape();
                let sa = broadcast_strides(va.shape(), out_shape);
                let sb = broadcast_strides(vb.shape(), out_shape);
                let (da, db) = (va.data(), vb.data());
                if let Some(ga) = self.acc(grads, *a) {
                    for_each_broadcast(out_shape, &sa, &sb, |o, ia, ib| {
                        ga[ia] += g[o]
                            * match kind {
                                BinaryKind::Add | BinaryKind::Sub => 1.0,
                                BinaryKind::Mul => db[ib],
                                BinaryKind::Div => 1.0 / db[ib],
                            };
                    });
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for_each_broadcast(out_shape, &sa, &sb, |o, ia, ib| {
                        gb[ib] += g[o]
                            * match kind {
                                BinaryKind::Add => 1.0,
                                BinaryKind::Sub => -1.0,
                                BinaryKind::Mul => da[ia],
                                BinaryKind::Div => -da[ia] / (db[ib] * db[ib]),
                            };
                    });
                }
            }
            Op::Unary { kind, a } => {
                let x = self.value(*a).data();
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * unary_derivative(*kind, x[i], y[i]);
                    }
                }
            }
            Op::Scale { a, c } => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(d, &v)| *d += c * v);
                }
            }
            Op::AddScalar { a } | Op::Reshape { a } => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(d, &v)| *d += v);
                }
            }
            Op::Matmul { a, b, ta, tb } => {
                let dims = matmul_dims(self.shape(*a), self.shape(*b), *ta, *tb).expect("validated in forward");
                let MatmulDims { batch, m, k, n } = dims;
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(grads, *a) {
                    // d op(A) = G * op(B)^T, written straight into A's storage layout.
                    let (rsb, csb) = dims.b_strides(*tb);
                    let dst = if *ta { (1, m) } else { (k, 1) };
                    for bi in 0..batch {
                        gemm(
                            m,
                            n,
                            k,
                            1.0,
                            &g[bi * m * n..(bi + 1) * m * n],
                            (n, 1),
                            &db[bi * k * n..(bi + 1) * k * n],
                            (csb, rsb),
                            1.0,
                            &mut ga[bi * m * k..(bi + 1) * m * k],
                            dst,
                        );
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    // d op(B) = op(A)^T * G
                    let (rsa, csa) = dims.a_strides(*ta);
                    let dst = if *tb { (1, k) } else { (n, 1) };
                    for bi in 0..batch {
                        gemm(
                            k,
                            m,
                            n,
                            1.0,
                            &da[bi * m * k..(bi + 1) * m * k],
                            (csa, rsa),
                            &g[bi * m * n..(bi + 1) * m * n],
                            (n, 1),
                            1.0,
                            &mut gb[bi * k * n..(bi + 1) * k * n],
                            dst,
                        );
                    }
                }
            }
            Op::Permute { a, perm } => {
                if let Some(ga) = self.acc(grads, *a) {
                    let mut inverse = vec![0; perm.len()];
                    for (i, &p) in perm.iter().enumerate() {
                        inverse[p] = i;
                    }
                    let back = permute_data(g, node.value.shape(), &inverse);
                    ga.iter_mut().zip(&back).for_each(|(d, &v)| *d += v);
                }
            }
            Op::BroadcastTo { a } => {
                let out_shape = node.value.shape();
                let sa = broadcast_strides(self.shape(*a), out_shape);
                let zeros = vec![0; out_shape.len()];
                if let Some(ga) = self.acc(grads, *a) {
                    for_each_broadcast(out_shape, &sa, &zeros, |o, ia, _| ga[ia] += g[o]);
                }
            }
            Op::Sum { a } => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::SumAxis { a, axis } => {
                let (outer, len, inner) = split_axis(self.shape(*a), *axis);
                if let Some(ga) = self.acc(grads, *a) {
                    for o in 0..outer {
                        for j in 0..len {
                            let dst = &mut ga[(o * len + j) * inner..][..inner];
                            for (d, &v) in dst.iter_mut().zip(&g[o * inner..(o + 1) * inner]) {
                                *d += v;
                            }
                        }
                    }
                }
            }
            Op::Softmax { a } => {
                let d = *node.value.shape().last().unwrap();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((gy, yy), gx) in g.chunks(d).zip(y.chunks(d)).zip(ga.chunks_mut(d)) {
                        let dot: f64 = gy.iter().zip(yy).map(|(u, v)| u * v).sum();
                        for i in 0..d {
                            gx[i] += yy[i] * (gy[i] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm { a, inv_std } => {
                let d = *node.value.shape().last().unwrap();
                if let Some(ga) = self.acc(grads, *a) {
                    for (r, ((gy, xh), gx)) in g.chunks(d).zip(y.chunks(d)).zip(ga.chunks_mut(d)).enumerate() {
                        let mg = gy.iter().sum::<f64>() / d as f64;
                        let mgx = gy.iter().zip(xh).map(|(u, v)| u * v).sum::<f64>() / d as f64;
                        for i in 0..d {
                            gx[i] += inv_std[r] * (gy[i] - mg - xh[i] * mgx);
                        }
                    }
                }
            }
            Op::Cosine { a, b } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let d = *va.shape().last().unwrap();
                let rows = g.len();
                let mut da_buf = vec![0.0; va.len()];
                let mut db_buf = vec![0.0; vb.len()];
                for r in 0..rows {
                    let (x, z) = (&va.data()[r * d..(r + 1) * d], &vb.data()[r * d..(r + 1) * d]);
                    let (_, nx, nz) = cos_parts(x, z);
                    let c = y[r];
                    let gr = g[r];
                    if nx * nz > COSINE_FLOOR {
                        let inv = 1.0 / (nx * nz);
                        for i in 0..d {
                            da_buf[r * d + i] = gr * (z[i] * inv - c * x[i] / (nx * nx));
                            db_buf[r * d + i] = gr * (x[i] * inv - c * z[i] / (nz * nz));
                        }
                    } else {
                        for i in 0..d {
                            da_buf[r * d + i] = gr * z[i] / COSINE_FLOOR;
                            db_buf[r * d + i] = gr * x[i] / COSINE_FLOOR;
                        }
                    }
                }
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(&da_buf).for_each(|(d, &v)| *d += v);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.iter_mut().zip(&db_buf).for_each(|(d, &v)| *d += v);
                }
            }
            Op::Conv2d { x, w, b, geom } => self.conv2d_backward(*x, *w, *b, geom, g, grads),
            Op::MaxPool2d { x, argmax } => {
                if let Some(gx) = self.acc(grads, *x) {
                    for (o, &i) in argmax.iter().enumerate() {
                        gx[i] += g[o];
                    }
                }
            }
            Op::Upsample { x, factor } => {
                let s = self.shape(*x).to_vec();
                let (bc, h, w) = (s[0] * s[1], s[2], s[3]);
                let (ho, wo) = (h * factor, w * factor);
                let (ty, tx) = (bilinear_taps(h, *factor), bilinear_taps(w, *factor));
                if let Some(gx) = self.acc(grads, *x) {
                    for plane in 0..bc {
                        let src = &g[plane * ho * wo..(plane + 1) * ho * wo];
                        let dst = &mut gx[plane * h * w..(plane + 1) * h * w];
                        for (oy, &(y0, y1, t)) in ty.iter().enumerate() {
                            for (ox, &(x0, x1, u)) in tx.iter().enumerate() {
                                let v = src[oy * wo + ox];
                                dst[y0 * w + x0] += (1.0 - t) * (1.0 - u) * v;
                                dst[y0 * w + x1] += (1.0 - t) * u * v;
                                dst[y1 * w + x0] += t * (1.0 - u) * v;
                                dst[y1 * w + x1] += t * u * v;
                            }
                        }
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let shape = node.value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let chunk = self.shape(p)[*axis] * inner;
                    if let Some(gp) = self.acc(grads, p) {
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + chunk];
                            for (d, &v) in gp[o * chunk..(o + 1) * chunk].iter_mut().zip(src) {
                                *d += v;
                            }
                        }
                    }
                    offset += chunk;
                }
            }
            Op::IndexSelect { a, indices } => {
                let inner = self.value(*a).len() / self.shape(*a)[0].max(1);
                if let Some(ga) = self.acc(grads, *a) {
                    for (r, &i) in indices.iter().enumerate() {
                        for (d, &v) in ga[i * inner..(i + 1) * inner].iter_mut().zip(&g[r * inner..]) {
                            *d += v;
                        }
                    }
                }
            }
            Op::ScatterRows { a, indices } => {
                let inner = node.value.len() / node.value.shape()[0].max(1);
                if let Some(ga) = self.acc(grads, *a) {
                    for (r, &i) in indices.iter().enumerate() {
                        for (d, &v) in ga[r * inner..(r + 1) * inner].iter_mut().zip(&g[i * inner..]) {
                            *d += v;
                        }
                    }
                }
            }
            Op::External { a, grad } => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(grad.data()).for_each(|(d, &v)| *d += g[0] * v);
                }
            }
        }
    }

    fn conv2d_backward(
        &self,
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: &ConvGeom,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let batch = self.shape(x)[0];
        let c_out = self.shape(w)[0];
        let (k, p) = (geom.patch(), geom.positions());
        let img_len = geom.c_in * geom.h * geom.w;
        let xd = self.value(x).data();
        let wd = self.value(w).data();

        if let Some(b) = b {
            if let Some(gb) = self.acc(grads, b) {
                for bi in 0..batch {
                    for (co, d) in gb.iter_mut().enumerate() {
                        *d += g[(bi * c_out + co) * p..][..p].iter().sum::<f64>();
                    }
                }
            }
        }
        let want_w = self.nodes[w.0].requires_grad;
        let want_x = self.nodes[x.0].requires_grad;
        if !want_w && !want_x {
            return;
        }
        let mut cols = vec![0.0; if geom.is_pointwise() { 0 } else { k * p }];
        let mut dcols = vec![0.0; if want_x && !geom.is_pointwise() { k * p } else { 0 }];
        for bi in 0..batch {
            let gout = &g[bi * c_out * p..(bi + 1) * c_out * p];
            let img = &xd[bi * img_len..(bi + 1) * img_len];
            if want_w {
                let colm: &[f64] = if geom.is_pointwise() {
                    img
                } else {
                    im2col(img, geom, &mut cols);
                    &cols
                };
                let gw = self.acc(grads, w).unwrap();
                gemm(c_out, p, k, 1.0, gout, (p, 1), colm, (1, p), 1.0, gw, (k, 1));
            }
            if want_x {
                let gx = self.acc(grads, x).unwrap();
                let dst = &mut gx[bi * img_len..(bi + 1) * img_len];
                if geom.is_pointwise() {
                    gemm(k, c_out, p, 1.0, wd, (1, k), gout, (p, 1), 1.0, dst, (p, 1));
                } else {
                    gemm(k, c_out, p, 1.0, wd, (1, k), gout, (p, 1), 0.0, &mut dcols, (p, 1));
                    col2im(&dcols, geom, dst);
                }
            }
        }
    }
}

fn apply_binary(kind: BinaryKind, x: f64, y: f64) -> f64 {
    match kind {
        BinaryKind::Add => x + y,
        BinaryKind::Sub => x - y,
        BinaryKind::Mul => x * y,
        BinaryKind::Div => x / y,
    }
}

fn apply_unary(kind: UnaryKind, x: f64) -> f64 {
    match kind {
        UnaryKind::Relu => x.max(0.0),
        UnaryKind::Exp => x.exp(),
        UnaryKind::Log => x.ln(),
        UnaryKind::Abs => x.abs(),
        UnaryKind::Sqrt => x.sqrt(),
        UnaryKind::Square => x * x,
        UnaryKind::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
    }
}

fn unary_derivative(kind: UnaryKind, x: f64, y: f64) -> f64 {
    match kind {
        UnaryKind::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        UnaryKind::Exp => y,
        UnaryKind::Log => 1.0 / x,
        UnaryKind::Abs => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        UnaryKind::Sqrt => 0.5 / y,
        UnaryKind::Square => 2.0 * x,
        UnaryKind::Softplus => 1.0 / (1.0 + (-x).exp()),
    }
}

fn cos_parts(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mut dot = 0.0;
    let mut nx = 0.0;
    let mut ny = 0.0;
    for (a, b) in x.iter().zip(y) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    (dot, nx.sqrt(), ny.sqrt())
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn permute_data(src: &[f64], shape: &[usize], perm: &[usize]) -> Vec<f64> {
    let in_strides = strides_of(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let gather: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let zeros = vec![0; out_shape.len()];
    let mut out = vec![0.0; src.len()];
    for_each_broadcast(&out_shape, &gather, &zeros, |o, i, _| out[o] = src[i]);
    out
}

#[derive(Clone, Copy)]
struct MatmulDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
}

impl MatmulDims {
    /// Strides of op(A) (`m x k`) over A's storage.
    fn a_strides(&self, ta: bool) -> (usize, usize) {
        if ta {
            (1, self.m)
        } else {
            (self.k, 1)
        }
    }

    /// Strides of op(B) (`k x n`) over B's storage.
    fn b_strides(&self, tb: bool) -> (usize, usize) {
        if tb {
            (1, self.k)
        } else {
            (self.n, 1)
        }
    }
}

fn matmul_dims(sa: &[usize], sb: &[usize], ta: bool, tb: bool) -> Result<MatmulDims> {
    let err = || Error::shape(format!("matmul {sa:?} (t={ta}) x {sb:?} (t={tb})"));
    let (batch, a2, b2) = match (sa.len(), sb.len()) {
        (2, 2) => (1, sa, sb),
        (3, 3) if sa[0] == sb[0] => (sa[0], &sa[1..], &sb[1..]),
        _ => return Err(err()),
    };
    let (m, ka) = if ta { (a2[1], a2[0]) } else { (a2[0], a2[1]) };
    let (kb, n) = if tb { (b2[1], b2[0]) } else { (b2[0], b2[1]) };
    if ka != kb {
        return Err(err());
    }
    Ok(MatmulDims { batch, m, k: ka, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr(shape: &[usize], data: &[f64]) -> DenseArray {
        DenseArray::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn pointwise_conv_scales_input() {
        let mut g = Graph::new();
        let x = g.constant(arr(&[1, 1, 2, 2], &[1.0, -2.0, 3.0, 0.5]));
        let w = g.constant(arr(&[1, 1, 1, 1], &[2.0]));
        let y = g.conv2d(x, w, None, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), &[2.0, -4.0, 6.0, 1.0]);
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i = g.constant(arr(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let b = g.constant(arr(&[2, 2], &[3.0, -1.0, 4.5, 2.0]));
        let y = g.matmul(i, b).unwrap();
        assert_eq!(g.value(y).data(), g.value(b).data());
    }

    #[test]
    fn softmax_of_equal_logits() {
        let mut g = Graph::new();
        let x = g.constant(arr(&[2], &[0.0, 0.0]));
        let y = g.softmax(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn grad_of_sum_of_squares() {
        let mut g = Graph::new();
        let x = g.param(arr(&[2], &[1.0, 2.0]));
        let s = g.l2_norm_sq(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn grad_of_softmax_first_component() {
        let mut g = Graph::new();
        let x = g.param(arr(&[2], &[0.0, 0.0]));
        let p = g.softmax(x).unwrap();
        let p0 = g.index_select(p, &[0]).unwrap();
        let s = g.sum(p0);
        let grads = g.backward(s).unwrap();
        let d = grads.get(x).unwrap().data();
        assert!((d[0] - 0.25).abs() < 1e-15 && (d[1] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn grad_of_relu_sum() {
        let mut g = Graph::new();
        let x = g.param(arr(&[2], &[-1.0, 2.0]));
        let r = g.relu(x);
        let s = g.sum(r);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn relu_kink_has_zero_subgradient() {
        let mut g = Graph::new();
        let x = g.param(arr(&[1], &[0.0]));
        let r = g.relu(x);
        let s = g.sum(r);
        assert_eq!(g.backward(s).unwrap().get(x).unwrap().data(), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(arr(&[2], &[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::NonScalarOutput(s)) if s == vec![2]));
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut g = Graph::new();
        let a = g.constant(DenseArray::zeros(&[2, 3]));
        let b = g.constant(DenseArray::zeros(&[2, 3]));
        assert!(matches!(g.matmul(a, b), Err(Error::ShapeMismatch(_))));
        let c = g.constant(DenseArray::zeros(&[2]));
        assert!(g.add(a, c).is_err());
        assert!(g.concat(&[a, c], 0).is_err());
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let x = g.param(arr(&[2], &[1.0, 2.0]));
        let c = g.constant(arr(&[2], &[3.0, 4.0]));
        let y = g.mul(x, c).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut g = Graph::new();
        let x = g.param(arr(&[1], &[3.0]));
        let d = g.detach(x);
        let y = g.mul(x, d).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[3.0]);
    }

    #[test]
    fn upsample_of_constant_is_constant() {
        let mut g = Graph::new();
        let x = g.constant(DenseArray::full(&[1, 2, 2, 2], 1.5));
        let y = g.upsample_bilinear(x, 4).unwrap();
        assert_eq!(g.shape(y), &[1, 2, 8, 8]);
        assert!(g.value(y).data().iter().all(|&v| (v - 1.5).abs() < 1e-15));
    }

    #[test]
    fn max_pool_picks_maximum() {
        let mut g = Graph::new();
        let x = g.constant(arr(&[1, 1, 2, 4], &[1.0, 5.0, 2.0, 0.0, 3.0, 4.0, -1.0, 7.0]));
        let y = g.max_pool2d(x, 2).unwrap();
        assert_eq!(g.value(y).data(), &[5.0, 7.0]);
    }

    #[test]
    fn cosine_with_zero_vector_uses_floor() {
        let mut g = Graph::new();
        let a = g.param(arr(&[1, 2], &[0.0, 0.0]));
        let b = g.constant(arr(&[1, 2], &[1.0, 0.0]));
        let c = g.cosine(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[0.0]);
        let s = g.sum(c);
        assert!(g.backward(s).unwrap().get(a).unwrap().all_finite());
    }
}
