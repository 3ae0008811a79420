use super::conv::{col2im_accumulate, im2col, ConvDims};
use super::matmul::{gemm_ab, gemm_abt, gemm_atb};
use super::{AutodiffError, Real, Result, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum OpKind<T: Real> {
    /// Tracked leaf: gradient accumulates here.
    Leaf,
    /// Untracked leaf: gradient never flows in.
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Neg(Var),
    Relu(Var),
    LeakyRelu(Var, T),
    Exp(Var),
    Log(Var),
    Matmul(Var, Var),
    Transpose(Var),
    SoftmaxRows(Var, Vec<bool>),
    Concat(Vec<Var>, usize),
    Conv2d {
        input: Var,
        kernels: Var,
        bias: Var,
        dims: ConvDims,
        patches: Vec<T>,
    },
    GlobalAvgPool(Var),
    SelectRow(Var, usize),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
}

struct Node<T: Real> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    op: OpKind<T>,
    tracked: bool,
}

/// Wengert list: records every operation of a forward pass in topological
/// order and replays it backward to accumulate gradients.
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register a tracked leaf; its gradient is available after `backward`.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, OpKind::Leaf, true)
    }

    /// Register an untracked value; gradient never accumulates here.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, OpKind::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` calls, if this node is tracked and
    /// reachable from the loss.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor<T>, op: OpKind<T>, tracked: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor<T>, op: OpKind<T>) -> Var {
        let tracked = match &op {
            OpKind::Leaf => true,
            OpKind::Constant => false,
            OpKind::Add(a, b) | OpKind::Sub(a, b) | OpKind::Mul(a, b) | OpKind::Matmul(a, b) => {
                self.nodes[a.0].tracked || self.nodes[b.0].tracked
            }
            OpKind::Scale(a, _)
            | OpKind::Neg(a)
            | OpKind::Relu(a)
            | OpKind::LeakyRelu(a, _)
            | OpKind::Exp(a)
            | OpKind::Log(a)
            | OpKind::Transpose(a)
            | OpKind::SoftmaxRows(a, _)
            | OpKind::GlobalAvgPool(a)
            | OpKind::SelectRow(a, _)
            | OpKind::Reshape(a)
            | OpKind::Sum(a)
            | OpKind::Mean(a) => self.nodes[a.0].tracked,
            OpKind::Concat(vars, _) => vars.iter().any(|v| self.nodes[v.0].tracked),
            OpKind::Conv2d {
                input,
                kernels,
                bias,
                ..
            } => {
                self.nodes[input.0].tracked
                    || self.nodes[kernels.0].tracked
                    || self.nodes[bias.0].tracked
            }
        };
        self.push(value, op, tracked)
    }

    // ---- elementwise -----------------------------------------------------

    fn binary_shapes(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
    ) -> Result<(Vec<usize>, bool, bool)> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        let na = self.value(a).numel();
        let nb = self.value(b).numel();
        if sa == sb {
            Ok((sa.to_vec(), false, false))
        } else if na == 1 {
            Ok((sb.to_vec(), true, false))
        } else if nb == 1 {
            Ok((sa.to_vec(), false, true))
        } else {
            Err(AutodiffError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            })
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, ba, bb) = self.binary_shapes("add", a, b)?;
        let out = self.zip(a, b, &shape, ba, bb, |x, y| x + y);
        Ok(self.push_op(out, OpKind::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, ba, bb) = self.binary_shapes("sub", a, b)?;
        let out = self.zip(a, b, &shape, ba, bb, |x, y| x - y);
        Ok(self.push_op(out, OpKind::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, ba, bb) = self.binary_shapes("mul", a, b)?;
        let out = self.zip(a, b, &shape, ba, bb, |x, y| x * y);
        Ok(self.push_op(out, OpKind::Mul(a, b)))
    }

    fn zip(
        &self,
        a: Var,
        b: Var,
        shape: &[usize],
        broadcast_a: bool,
        broadcast_b: bool,
        f: impl Fn(T, T) -> T,
    ) -> Tensor<T> {
        let da = self.value(a).data();
        let db = self.value(b).data();
        let numel: usize = shape.iter().product();
        let mut out = Vec::with_capacity(numel);
        for i in 0..numel {
            let x = if broadcast_a { da[0] } else { da[i] };
            let y = if broadcast_b { db[0] } else { db[i] };
            out.push(f(x, y));
        }
        Tensor::from_vec(shape, out).expect("zip shape")
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push_op(out, OpKind::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| -x);
        self.push_op(out, OpKind::Neg(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let z = T::zero();
        let out = self.value(a).map(|x| if x > z { x } else { z });
        self.push_op(out, OpKind::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let z = T::zero();
        let out = self.value(a).map(|x| if x > z { x } else { slope * x });
        self.push_op(out, OpKind::LeakyRelu(a, slope))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.exp());
        self.push_op(out, OpKind::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(&bad) = self.value(a).data().iter().find(|&&x| x <= T::zero()) {
            return Err(AutodiffError::LogDomain {
                value: bad.to_f64(),
            });
        }
        let out = self.value(a).map(|x| x.ln());
        Ok(self.push_op(out, OpKind::Log(a)))
    }

    // ---- linear algebra --------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ta = self.value(a);
        let tb = self.value(b);
        if ta.rank() != 2 {
            return Err(AutodiffError::BadRank {
                op: "matmul",
                expected: 2,
                shape: ta.shape().to_vec(),
            });
        }
        if tb.rank() != 2 {
            return Err(AutodiffError::BadRank {
                op: "matmul",
                expected: 2,
                shape: tb.shape().to_vec(),
            });
        }
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let (k2, n) = (tb.shape()[0], tb.shape()[1]);
        if k != k2 {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let mut out = Tensor::zeros(&[m, n]);
        gemm_ab(ta.data(), tb.data(), out.data_mut(), m, k, n);
        Ok(self.push_op(out, OpKind::Matmul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(AutodiffError::BadRank {
                op: "transpose",
                expected: 2,
                shape: ta.shape().to_vec(),
            });
        }
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let mut out = Tensor::zeros(&[n, m]);
        for i in 0..m {
            for j in 0..n {
                out.data_mut()[j * m + i] = ta.data()[i * n + j];
            }
        }
        Ok(self.push_op(out, OpKind::Transpose(a)))
    }

    /// Row-wise masked softmax over a 2-d tensor. Masked entries are exactly
    /// zero in the output; unmasked entries of each row sum to one.
    pub fn softmax_rows(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(AutodiffError::BadRank {
                op: "softmax_rows",
                expected: 2,
                shape: ta.shape().to_vec(),
            });
        }
        if mask.len() != ta.numel() {
            return Err(AutodiffError::BadMask {
                mask: mask.len(),
                len: ta.numel(),
            });
        }
        let (n, m) = (ta.shape()[0], ta.shape()[1]);
        let mut out = vec![T::zero(); n * m];
        for r in 0..n {
            let row = &ta.data()[r * m..(r + 1) * m];
            let rmask = &mask[r * m..(r + 1) * m];
            let mut maxv: Option<T> = None;
            for (x, &keep) in row.iter().zip(rmask) {
                if keep {
                    maxv = Some(match maxv {
                        Some(mv) if mv >= *x => mv,
                        _ => *x,
                    });
                }
            }
            let maxv = maxv.ok_or(AutodiffError::FullyMaskedRow { row: r })?;
            let mut denom = T::zero();
            for (j, (&x, &keep)) in row.iter().zip(rmask).enumerate() {
                if keep {
                    let e = (x - maxv).exp();
                    out[r * m + j] = e;
                    denom = denom + e;
                }
            }
            for j in 0..m {
                if rmask[j] {
                    out[r * m + j] = out[r * m + j] / denom;
                }
            }
        }
        let out = Tensor::from_vec(&[n, m], out)?;
        Ok(self.push_op(out, OpKind::SoftmaxRows(a, mask.to_vec())))
    }

    /// Concatenate along `axis`. Inputs must agree on all other extents.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        if inputs.is_empty() {
            return Err(AutodiffError::EmptyConcat);
        }
        let rank = self.value(inputs[0]).rank();
        if axis >= rank {
            return Err(AutodiffError::BadAxis {
                op: "concat",
                axis,
                rank,
            });
        }
        let mut shape = self.value(inputs[0]).shape().to_vec();
        for &v in &inputs[1..] {
            let s = self.value(v).shape();
            if s.len() != rank
                || s.iter()
                    .enumerate()
                    .any(|(i, &e)| i != axis && e != shape[i])
            {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    lhs: shape.clone(),
                    rhs: s.to_vec(),
                });
            }
            shape[axis] += s[axis];
        }
        let out = match (rank, axis) {
            (1, 0) => {
                let mut data = Vec::new();
                for &v in inputs {
                    data.extend_from_slice(self.value(v).data());
                }
                Tensor::from_vec(&shape, data)?
            }
            (2, 0) => {
                let mut data = Vec::new();
                for &v in inputs {
                    data.extend_from_slice(self.value(v).data());
                }
                Tensor::from_vec(&shape, data)?
            }
            (2, 1) => {
                let rows = shape[0];
                let total_cols = shape[1];
                let mut data = vec![T::zero(); rows * total_cols];
                let mut col0 = 0;
                for &v in inputs {
                    let t = self.value(v);
                    let cols = t.shape()[1];
                    for r in 0..rows {
                        data[r * total_cols + col0..r * total_cols + col0 + cols]
                            .copy_from_slice(&t.data()[r * cols..(r + 1) * cols]);
                    }
                    col0 += cols;
                }
                Tensor::from_vec(&shape, data)?
            }
            _ => {
                return Err(AutodiffError::BadAxis {
                    op: "concat",
                    axis,
                    rank,
                })
            }
        };
        Ok(self.push_op(out, OpKind::Concat(inputs.to_vec(), axis)))
    }

    // ---- convolution -----------------------------------------------------

    /// 2-d cross-correlation over a [C x H x W] input with kernels
    /// [O x C x KH x KW], per-output-channel bias [O].
    pub fn conv2d(
        &mut self,
        input: Var,
        kernels: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let tx = self.value(input);
        let tk = self.value(kernels);
        let tb = self.value(bias);
        if tx.rank() != 3 {
            return Err(AutodiffError::BadRank {
                op: "conv2d input",
                expected: 3,
                shape: tx.shape().to_vec(),
            });
        }
        if tk.rank() != 4 {
            return Err(AutodiffError::BadRank {
                op: "conv2d kernels",
                expected: 4,
                shape: tk.shape().to_vec(),
            });
        }
        let (in_c, in_h, in_w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let (out_c, kc, kh, kw) = (tk.shape()[0], tk.shape()[1], tk.shape()[2], tk.shape()[3]);
        if kc != in_c {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv2d",
                lhs: tx.shape().to_vec(),
                rhs: tk.shape().to_vec(),
            });
        }
        if tb.shape() != [out_c] {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv2d bias",
                lhs: vec![out_c],
                rhs: tb.shape().to_vec(),
            });
        }
        let (ph, pw) = (in_h + 2 * padding, in_w + 2 * padding);
        if kh > ph || kw > pw {
            return Err(AutodiffError::KernelTooLarge {
                kh,
                kw,
                h: ph,
                w: pw,
            });
        }
        let dims = ConvDims {
            in_c,
            in_h,
            in_w,
            out_c,
            kh,
            kw,
            stride,
            padding,
            out_h: (ph - kh) / stride + 1,
            out_w: (pw - kw) / stride + 1,
        };
        let patches = im2col(tx.data(), &dims);
        // out_mat [positions x out_c] = patches x kernels^T
        let positions = dims.positions();
        let plen = dims.patch_len();
        let mut out_mat = vec![T::zero(); positions * out_c];
        gemm_abt(&patches, tk.data(), &mut out_mat, positions, plen, out_c);
        let mut out = vec![T::zero(); out_c * positions];
        for r in 0..positions {
            for o in 0..out_c {
                out[o * positions + r] = out_mat[r * out_c + o] + tb.data()[o];
            }
        }
        let out = Tensor::from_vec(&[out_c, dims.out_h, dims.out_w], out)?;
        Ok(self.push_op(
            out,
            OpKind::Conv2d {
                input,
                kernels,
                bias,
                dims,
                patches,
            },
        ))
    }

    /// [C x H x W] -> [C], mean over the spatial extent of each channel.
    pub fn global_avg_pool(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 3 {
            return Err(AutodiffError::BadRank {
                op: "global_avg_pool",
                expected: 3,
                shape: ta.shape().to_vec(),
            });
        }
        let (c, h, w) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
        let area = T::from_f64((h * w) as f64);
        let mut out = Vec::with_capacity(c);
        for ch in 0..c {
            let mut acc = T::zero();
            for &v in &ta.data()[ch * h * w..(ch + 1) * h * w] {
                acc = acc + v;
            }
            out.push(acc / area);
        }
        let out = Tensor::from_vec(&[c], out)?;
        Ok(self.push_op(out, OpKind::GlobalAvgPool(a)))
    }

    // ---- shape ops -------------------------------------------------------

    /// Extract row `r` of a 2-d tensor as a 1-d tensor.
    pub fn select_row(&mut self, a: Var, r: usize) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(AutodiffError::BadRank {
                op: "select_row",
                expected: 2,
                shape: ta.shape().to_vec(),
            });
        }
        let (n, m) = (ta.shape()[0], ta.shape()[1]);
        if r >= n {
            return Err(AutodiffError::IndexOutOfRange {
                op: "select_row",
                index: r,
                extent: n,
            });
        }
        let out = Tensor::from_vec(&[m], ta.data()[r * m..(r + 1) * m].to_vec())?;
        Ok(self.push_op(out, OpKind::SelectRow(a, r)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        let out = Tensor::from_vec(shape, ta.data().to_vec())?;
        Ok(self.push_op(out, OpKind::Reshape(a)))
    }

    // ---- reductions ------------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let mut acc = T::zero();
        for &v in self.value(a).data() {
            acc = acc + v;
        }
        self.push_op(Tensor::scalar(acc), OpKind::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = T::from_f64(self.value(a).numel() as f64);
        let mut acc = T::zero();
        for &v in self.value(a).data() {
            acc = acc + v;
        }
        self.push_op(Tensor::scalar(acc / n), OpKind::Mean(a))
    }

    // ---- backward --------------------------------------------------------

    /// Reverse sweep from a scalar loss. Every tracked leaf reachable from
    /// the loss receives dLoss/dLeaf; repeated calls accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(AutodiffError::NonScalarLoss {
                shape: self.nodes[loss.0].value.shape().to_vec(),
            });
        }
        let upto = loss.0 + 1;
        let mut scratch: Vec<Option<Vec<T>>> = Vec::with_capacity(upto);
        scratch.resize_with(upto, || None);
        if self.nodes[loss.0].tracked {
            scratch[loss.0] = Some(vec![T::one()]);
        }
        for id in (0..upto).rev() {
            let Some(g) = scratch[id].take() else {
                continue;
            };
            Self::distribute(&self.nodes, &mut scratch, id, &g);
            let node = &mut self.nodes[id];
            let grad = node
                .grad
                .get_or_insert_with(|| Tensor::zeros(node.value.shape()));
            for (dst, src) in grad.data_mut().iter_mut().zip(&g) {
                *dst = *dst + *src;
            }
        }
        Ok(())
    }

    fn stash(nodes: &[Node<T>], scratch: &mut [Option<Vec<T>>], target: Var, f: impl FnOnce(&mut [T])) {
        if !nodes[target.0].tracked {
            return;
        }
        let buf = scratch[target.0]
            .get_or_insert_with(|| vec![T::zero(); nodes[target.0].value.numel()]);
        f(buf);
    }

    /// Either add the full gradient or, for a broadcast scalar operand, its sum.
    fn stash_maybe_reduced(
        nodes: &[Node<T>],
        scratch: &mut [Option<Vec<T>>],
        target: Var,
        g: impl Iterator<Item = T>,
    ) {
        if !nodes[target.0].tracked {
            return;
        }
        let numel = nodes[target.0].value.numel();
        Self::stash(nodes, scratch, target, |buf| {
            if numel == 1 {
                let mut acc = T::zero();
                for v in g {
                    acc = acc + v;
                }
                buf[0] = buf[0] + acc;
            } else {
                for (dst, v) in buf.iter_mut().zip(g) {
                    *dst = *dst + v;
                }
            }
        });
    }

    fn distribute(nodes: &[Node<T>], scratch: &mut [Option<Vec<T>>], id: usize, g: &[T]) {
        let node = &nodes[id];
        match &node.op {
            OpKind::Leaf | OpKind::Constant => {}
            OpKind::Add(a, b) => {
                Self::stash_maybe_reduced(nodes, scratch, *a, g.iter().copied());
                Self::stash_maybe_reduced(nodes, scratch, *b, g.iter().copied());
            }
            OpKind::Sub(a, b) => {
                Self::stash_maybe_reduced(nodes, scratch, *a, g.iter().copied());
                Self::stash_maybe_reduced(nodes, scratch, *b, g.iter().map(|&v| -v));
            }
            OpKind::Mul(a, b) => {
                let da = nodes[a.0].value.data();
                let db = nodes[b.0].value.data();
                let pick = |d: &[T], i: usize| if d.len() == 1 { d[0] } else { d[i] };
                Self::stash_maybe_reduced(
                    nodes,
                    scratch,
                    *a,
                    g.iter().enumerate().map(|(i, &v)| v * pick(db, i)),
                );
                Self::stash_maybe_reduced(
                    nodes,
                    scratch,
                    *b,
                    g.iter().enumerate().map(|(i, &v)| v * pick(da, i)),
                );
            }
            OpKind::Scale(a, c) => {
                let c = *c;
                Self::stash_maybe_reduced(nodes, scratch, *a, g.iter().map(|&v| v * c));
            }
            OpKind::Neg(a) => {
                Self::stash_maybe_reduced(nodes, scratch, *a, g.iter().map(|&v| -v));
            }
            OpKind::Relu(a) => {
                let x = nodes[a.0].value.data();
                Self::stash(nodes, scratch, *a, |buf| {
                    for i in 0..buf.len() {
                        if x[i] > T::zero() {
                            buf[i] = buf[i] + g[i];
                        }
                    }
                });
            }
            OpKind::LeakyRelu(a, slope) => {
                let x = nodes[a.0].value.data();
                let s = *slope;
                Self::stash(nodes, scratch, *a, |buf| {
                    for i in 0..buf.len() {
                        let d = if x[i] > T::zero() { g[i] } else { s * g[i] };
                        buf[i] = buf[i] + d;
                    }
                });
            }
            OpKind::Exp(a) => {
                let y = node.value.data();
                Self::stash(nodes, scratch, *a, |buf| {
                    for i in 0..buf.len() {
                        buf[i] = buf[i] + g[i] * y[i];
                    }
                });
            }
            OpKind::Log(a) => {
                let x = nodes[a.0].value.data();
                Self::stash(nodes, scratch, *a, |buf| {
                    for i in 0..buf.len() {
                        buf[i] = buf[i] + g[i] / x[i];
                    }
                });
            }
            OpKind::Matmul(a, b) => {
                let ta = &nodes[a.0].value;
                let tb = &nodes[b.0].value;
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                Self::stash(nodes, scratch, *a, |buf| {
                    gemm_abt(g, tb.data(), buf, m, n, k);
                });
                Self::stash(nodes, scratch, *b, |buf| {
                    gemm_atb(ta.data(), g, buf, m, k, n);
                });
            }
            OpKind::Transpose(a) => {
                let (n, m) = {
                    let s = node.value.shape();
                    (s[0], s[1])
                };
                Self::stash(nodes, scratch, *a, |buf| {
                    // buf is [m x n], g is [n x m]
                    for i in 0..n {
                        for j in 0..m {
                            buf[j * n + i] = buf[j * n + i] + g[i * m + j];
                        }
                    }
                });
            }
            OpKind::SoftmaxRows(a, mask) => {
                let y = node.value.data();
                let (n, m) = {
                    let s = node.value.shape();
                    (s[0], s[1])
                };
                Self::stash(nodes, scratch, *a, |buf| {
                    for r in 0..n {
                        let base = r * m;
                        let mut dot = T::zero();
                        for j in 0..m {
                            dot = dot + g[base + j] * y[base + j];
                        }
                        for j in 0..m {
                            if mask[base + j] {
                                buf[base + j] =
                                    buf[base + j] + y[base + j] * (g[base + j] - dot);
                            }
                        }
                    }
                });
            }
            OpKind::Concat(inputs, axis) => match (nodes[inputs[0].0].value.rank(), axis) {
                (_, 0) => {
                    let mut offset = 0;
                    for &v in inputs {
                        let len = nodes[v.0].value.numel();
                        Self::stash(nodes, scratch, v, |buf| {
                            for i in 0..len {
                                buf[i] = buf[i] + g[offset + i];
                            }
                        });
                        offset += len;
                    }
                }
                (2, 1) => {
                    let rows = node.value.shape()[0];
                    let total_cols = node.value.shape()[1];
                    let mut col0 = 0;
                    for &v in inputs {
                        let cols = nodes[v.0].value.shape()[1];
                        Self::stash(nodes, scratch, v, |buf| {
                            for r in 0..rows {
                                for c in 0..cols {
                                    buf[r * cols + c] =
                                        buf[r * cols + c] + g[r * total_cols + col0 + c];
                                }
                            }
                        });
                        col0 += cols;
                    }
                }
                _ => unreachable!("concat axis validated at forward"),
            },
            OpKind::Conv2d {
                input,
                kernels,
                bias,
                dims,
                patches,
            } => {
                let positions = dims.positions();
                let plen = dims.patch_len();
                let out_c = dims.out_c;
                // g arrives as [out_c x positions]; transpose to [positions x out_c]
                let mut gmat = vec![T::zero(); positions * out_c];
                for o in 0..out_c {
                    for r in 0..positions {
                        gmat[r * out_c + o] = g[o * positions + r];
                    }
                }
                Self::stash(nodes, scratch, *bias, |buf| {
                    for o in 0..out_c {
                        let mut acc = T::zero();
                        for r in 0..positions {
                            acc = acc + gmat[r * out_c + o];
                        }
                        buf[o] = buf[o] + acc;
                    }
                });
                Self::stash(nodes, scratch, *kernels, |buf| {
                    // gW [out_c x plen] += gmat^T [out_c x positions] * patches
                    gemm_atb(&gmat, patches, buf, positions, out_c, plen);
                });
                if nodes[input.0].tracked {
                    let tk = &nodes[kernels.0].value;
                    let mut gpatches = vec![T::zero(); positions * plen];
                    gemm_ab(&gmat, tk.data(), &mut gpatches, positions, out_c, plen);
                    Self::stash(nodes, scratch, *input, |buf| {
                        col2im_accumulate(&gpatches, buf, dims);
                    });
                }
            }
            OpKind::GlobalAvgPool(a) => {
                let s = nodes[a.0].value.shape();
                let (c, h, w) = (s[0], s[1], s[2]);
                let area = T::from_f64((h * w) as f64);
                Self::stash(nodes, scratch, *a, |buf| {
                    for ch in 0..c {
                        let gc = g[ch] / area;
                        for v in &mut buf[ch * h * w..(ch + 1) * h * w] {
                            *v = *v + gc;
                        }
                    }
                });
            }
            OpKind::SelectRow(a, r) => {
                let m = node.value.numel();
                Self::stash(nodes, scratch, *a, |buf| {
                    for j in 0..m {
                        buf[r * m + j] = buf[r * m + j] + g[j];
                    }
                });
            }
            OpKind::Reshape(a) => {
                Self::stash_maybe_reduced(nodes, scratch, *a, g.iter().copied());
            }
            OpKind::Sum(a) => {
                let gv = g[0];
                Self::stash(nodes, scratch, *a, |buf| {
                    for v in buf.iter_mut() {
                        *v = *v + gv;
                    }
                });
            }
            OpKind::Mean(a) => {
                let n = T::from_f64(nodes[a.0].value.numel() as f64);
                let gv = g[0] / n;
                Self::stash(nodes, scratch, *a, |buf| {
                    for v in buf.iter_mut() {
                        *v = *v + gv;
                    }
                });
            }
        }
    }
}
