//! Define-by-run tape with reverse-mode differentiation.
//!
//! Each op computes its value eagerly when inserted; `backward` walks the
//! tape in reverse, accumulating gradients by summation over fan-out. A
//! graph instance is single-threaded; independent graphs share nothing.

use crate::error::CoreError;
use crate::Result;

use super::{Scalar, Tensor};

/// Handle to a node in one specific [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    MatMul(NodeId, NodeId),
    Conv1d {
        x: NodeId,
        w: NodeId,
        dilation: usize,
    },
    BiasAdd {
        x: NodeId,
        b: NodeId,
    },
    ChannelAdd {
        x: NodeId,
        v: NodeId,
    },
    Silu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    EmbedLookup {
        table: NodeId,
        indices: Vec<usize>,
    },
    Reshape(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    MeanAxis {
        x: NodeId,
        axis: usize,
    },
    MseLoss(NodeId, NodeId),
    Concat {
        inputs: Vec<NodeId>,
        axis: usize,
    },
    Slice {
        x: NodeId,
        axis: usize,
        start: usize,
        end: usize,
    },
}

struct Node<T> {
    op: Op,
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    needs_grad: bool,
}

/// A single forward/backward tape.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Tensor<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            grad: None,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Trainable leaf (parameters).
    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// Non-trainable input.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated by the last `backward`; `None` for nodes outside
    /// the differentiated cone.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.nodes[id.0].grad.as_ref()
    }

    // ---- elementwise ----------------------------------------------------

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(CoreError::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let mut out = va.clone();
        out.data_mut()
            .iter_mut()
            .zip(vb.data())
            .for_each(|(o, &r)| *o = *o + r);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), out, ng))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(CoreError::ShapeMismatch(format!(
                "mul: {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let mut out = va.clone();
        out.data_mut()
            .iter_mut()
            .zip(vb.data())
            .for_each(|(o, &r)| *o = *o * r);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), out, ng))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let cv = T::from_f64(c);
        let mut out = self.nodes[a.0].value.clone();
        out.data_mut().iter_mut().for_each(|o| *o = *o * cv);
        let ng = self.needs(a);
        self.push(Op::Scale(a, c), out, ng)
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(T) -> T, op: Op) -> NodeId {
        let mut out = self.nodes[a.0].value.clone();
        out.data_mut().iter_mut().for_each(|o| *o = f(*o));
        let ng = self.needs(a);
        self.push(op, out, ng)
    }

    pub fn silu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x * sigmoid(x), Op::Silu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    // ---- linear algebra --------------------------------------------------

    /// `[m,k] × [k,n] → [m,n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (sa, sb) = (va.shape(), vb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(CoreError::ShapeMismatch(format!(
                "matmul: {sa:?} × {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = Tensor::zeros(&[m, n]);
        matmul_into(va.data(), vb.data(), out.data_mut(), m, k, n);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul(a, b), out, ng))
    }

    /// Dilated "same" 1-D convolution over the last axis.
    /// `x: [B, Cin, T]`, `w: [Cout, Cin, K]` → `[B, Cout, T]`.
    /// Zero padding of `(K−1)·d / 2` per side keeps the length.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, dilation: usize) -> Result<NodeId> {
        let (vx, vw) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
        let (sx, sw) = (vx.shape(), vw.shape());
        if sx.len() != 3 || sw.len() != 3 || sx[1] != sw[1] {
            return Err(CoreError::ShapeMismatch(format!(
                "conv1d: x {sx:?}, w {sw:?}"
            )));
        }
        if dilation == 0 {
            return Err(CoreError::InvalidConfig("conv1d dilation must be ≥ 1".into()));
        }
        let (k, d) = (sw[2], dilation);
        if (k - 1) * d % 2 != 0 {
            return Err(CoreError::InvalidConfig(format!(
                "conv1d: (K−1)·dilation = {} is odd, \"same\" padding impossible",
                (k - 1) * d
            )));
        }
        let (bsz, cin, t) = (sx[0], sx[1], sx[2]);
        let cout = sw[0];
        let pad = (k - 1) * d / 2;
        let mut out = Tensor::zeros(&[bsz, cout, t]);
        conv1d_forward(
            vx.data(),
            vw.data(),
            out.data_mut(),
            bsz,
            cin,
            cout,
            t,
            k,
            d,
            pad,
        );
        let ng = self.needs(x) || self.needs(w);
        Ok(self.push(Op::Conv1d { x, w, dilation }, out, ng))
    }

    /// Adds `b[C]` along axis 1 of `x` (`[B, C]` or `[B, C, T]`).
    pub fn bias_add(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (vx, vb) = (&self.nodes[x.0].value, &self.nodes[b.0].value);
        let sx = vx.shape();
        if sx.len() < 2 || vb.shape().len() != 1 || vb.shape()[0] != sx[1] {
            return Err(CoreError::ShapeMismatch(format!(
                "bias_add: x {sx:?}, b {:?}",
                vb.shape()
            )));
        }
        let c = sx[1];
        let inner: usize = sx[2..].iter().product();
        let outer = sx[0];
        let mut out = vx.clone();
        {
            let od = out.data_mut();
            let bd = vb.data();
            for o in 0..outer {
                for ci in 0..c {
                    let base = (o * c + ci) * inner;
                    let bv = bd[ci];
                    for v in &mut od[base..base + inner] {
                        *v = *v + bv;
                    }
                }
            }
        }
        let ng = self.needs(x) || self.needs(b);
        Ok(self.push(Op::BiasAdd { x, b }, out, ng))
    }

    /// Adds `v[B, C]` to `x[B, C, T]`, broadcast along time.
    pub fn channel_add(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        let (vx, vv) = (&self.nodes[x.0].value, &self.nodes[v.0].value);
        let (sx, sv) = (vx.shape(), vv.shape());
        if sx.len() != 3 || sv.len() != 2 || sv[0] != sx[0] || sv[1] != sx[1] {
            return Err(CoreError::ShapeMismatch(format!(
                "channel_add: x {sx:?}, v {sv:?}"
            )));
        }
        let (bsz, c, t) = (sx[0], sx[1], sx[2]);
        let mut out = vx.clone();
        {
            let od = out.data_mut();
            let vd = vv.data();
            for bc in 0..bsz * c {
                let add = vd[bc];
                for val in &mut od[bc * t..(bc + 1) * t] {
                    *val = *val + add;
                }
            }
        }
        let ng = self.needs(x) || self.needs(v);
        Ok(self.push(Op::ChannelAdd { x, v }, out, ng))
    }

    /// Row lookup: `table[V, D]`, `indices[B]` → `[B, D]`.
    pub fn embedding_lookup(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        let vt = &self.nodes[table.0].value;
        let st = vt.shape();
        if st.len() != 2 {
            return Err(CoreError::ShapeMismatch(format!(
                "embedding_lookup: table {st:?}"
            )));
        }
        let (v, d) = (st[0], st[1]);
        let mut out = Tensor::zeros(&[indices.len(), d]);
        for (row, &idx) in indices.iter().enumerate() {
            if idx >= v {
                return Err(CoreError::Condition(format!(
                    "embedding index {idx} out of range 0..{v}"
                )));
            }
            out.data_mut()[row * d..(row + 1) * d].copy_from_slice(&vt.data()[idx * d..(idx + 1) * d]);
        }
        let ng = self.needs(table);
        Ok(self.push(
            Op::EmbedLookup {
                table,
                indices: indices.to_vec(),
            },
            out,
            ng,
        ))
    }

    // ---- shape ops -------------------------------------------------------

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let va = &self.nodes[a.0].value;
        if shape.iter().product::<usize>() != va.numel() {
            return Err(CoreError::ShapeMismatch(format!(
                "reshape: {:?} → {shape:?}",
                va.shape()
            )));
        }
        let out = Tensor::from_vec(shape, va.data().to_vec())?;
        let ng = self.needs(a);
        Ok(self.push(Op::Reshape(a), out, ng))
    }

    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        if inputs.is_empty() {
            return Err(CoreError::InvalidConfig("concat of zero tensors".into()));
        }
        let first = self.nodes[inputs[0].0].value.shape().to_vec();
        if axis >= first.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "concat axis {axis} out of rank {}",
                first.len()
            )));
        }
        let mut axis_total = 0usize;
        for &id in inputs {
            let s = self.nodes[id.0].value.shape();
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(CoreError::ShapeMismatch(format!(
                    "concat: {s:?} incompatible with {first:?} on axis {axis}"
                )));
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = Tensor::zeros(&out_shape);
        {
            let od = out.data_mut();
            let mut dst_off = 0usize;
            for &id in inputs {
                let v = &self.nodes[id.0].value;
                let mid = v.shape()[axis];
                for o in 0..outer {
                    let src = &v.data()[o * mid * inner..(o + 1) * mid * inner];
                    let dst_base = o * axis_total * inner + dst_off * inner;
                    od[dst_base..dst_base + mid * inner].copy_from_slice(src);
                }
                dst_off += mid;
            }
        }
        let ng = inputs.iter().any(|&i| self.needs(i));
        Ok(self.push(
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            out,
            ng,
        ))
    }

    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, end: usize) -> Result<NodeId> {
        let vx = &self.nodes[x.0].value;
        let s = vx.shape();
        if axis >= s.len() || start >= end || end > s[axis] {
            return Err(CoreError::ShapeMismatch(format!(
                "slice: {start}..{end} on axis {axis} of {s:?}"
            )));
        }
        let outer: usize = s[..axis].iter().product();
        let mid = s[axis];
        let inner: usize = s[axis + 1..].iter().product();
        let new_mid = end - start;
        let mut out_shape = s.to_vec();
        out_shape[axis] = new_mid;
        let mut out = Tensor::zeros(&out_shape);
        {
            let od = out.data_mut();
            for o in 0..outer {
                let src = &vx.data()[(o * mid + start) * inner..(o * mid + end) * inner];
                od[o * new_mid * inner..(o + 1) * new_mid * inner].copy_from_slice(src);
            }
        }
        let ng = self.needs(x);
        Ok(self.push(
            Op::Slice {
                x,
                axis,
                start,
                end,
            },
            out,
            ng,
        ))
    }

    // ---- reductions & loss -------------------------------------------------

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s = self.nodes[a.0]
            .value
            .data()
            .iter()
            .fold(T::zero(), |acc, &v| acc + v);
        let ng = self.needs(a);
        self.push(Op::SumAll(a), Tensor::scalar(s), ng)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.nodes[a.0].value.numel();
        let s = self.nodes[a.0]
            .value
            .data()
            .iter()
            .fold(T::zero(), |acc, &v| acc + v)
            / T::from_f64(n as f64);
        let ng = self.needs(a);
        self.push(Op::MeanAll(a), Tensor::scalar(s), ng)
    }

    /// Mean over one axis, removing it.
    pub fn mean_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let vx = &self.nodes[x.0].value;
        let s = vx.shape();
        if axis >= s.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "mean_axis {axis} out of rank {}",
                s.len()
            )));
        }
        let outer: usize = s[..axis].iter().product();
        let mid = s[axis];
        let inner: usize = s[axis + 1..].iter().product();
        let mut out_shape: Vec<usize> = s.to_vec();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let mut out = Tensor::zeros(&out_shape);
        {
            let od = out.data_mut();
            let xd = vx.data();
            let invm = T::from_f64(1.0 / mid as f64);
            for o in 0..outer {
                for m in 0..mid {
                    let src = &xd[(o * mid + m) * inner..(o * mid + m + 1) * inner];
                    let dst = &mut od[o * inner..(o + 1) * inner];
                    for (dv, &sv) in dst.iter_mut().zip(src) {
                        *dv = *dv + sv * invm;
                    }
                }
            }
        }
        let ng = self.needs(x);
        Ok(self.push(Op::MeanAxis { x, axis }, out, ng))
    }

    /// Mean squared error over all elements → scalar.
    pub fn mse_loss(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() {
            return Err(CoreError::ShapeMismatch(format!(
                "mse_loss: {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let n = va.numel();
        let mut acc = T::zero();
        for (&x, &y) in va.data().iter().zip(vb.data()) {
            let d = x - y;
            acc = acc + d * d;
        }
        let loss = acc / T::from_f64(n as f64);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MseLoss(a, b), Tensor::scalar(loss), ng))
    }

    // ---- backward ---------------------------------------------------------

    /// Reverse traversal from a scalar loss node. Gradients accumulate by
    /// summation over fan-out into every node with `needs_grad`.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(CoreError::ShapeMismatch(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            let g = self.nodes[i].grad.clone().unwrap();
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accum(a, g.data());
                    self.accum(b, g.data());
                }
                Op::Mul(a, b) => {
                    let ga: Vec<T> = g
                        .data()
                        .iter()
                        .zip(self.nodes[b.0].value.data())
                        .map(|(&gv, &bv)| gv * bv)
                        .collect();
                    let gb: Vec<T> = g
                        .data()
                        .iter()
                        .zip(self.nodes[a.0].value.data())
                        .map(|(&gv, &av)| gv * av)
                        .collect();
                    self.accum(a, &ga);
                    self.accum(b, &gb);
                }
                Op::Scale(a, c) => {
                    let cv = T::from_f64(c);
                    let ga: Vec<T> = g.data().iter().map(|&gv| gv * cv).collect();
                    self.accum(a, &ga);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = {
                        let sa = self.nodes[a.0].value.shape();
                        (sa[0], sa[1])
                    };
                    let n = self.nodes[b.0].value.shape()[1];
                    if self.needs(a) {
                        // dA = dC · Bᵀ
                        let mut ga = vec![T::zero(); m * k];
                        let bd = self.nodes[b.0].value.data();
                        for i2 in 0..m {
                            for l in 0..k {
                                let mut acc = T::zero();
                                let grow = &g.data()[i2 * n..(i2 + 1) * n];
                                let brow = &bd[l * n..(l + 1) * n];
                                for j in 0..n {
                                    acc = acc + grow[j] * brow[j];
                                }
                                ga[i2 * k + l] = acc;
                            }
                        }
                        self.accum(a, &ga);
                    }
                    if self.needs(b) {
                        // dB = Aᵀ · dC
                        let mut gb = vec![T::zero(); k * n];
                        let ad = self.nodes[a.0].value.data();
                        for i2 in 0..m {
                            let grow = &g.data()[i2 * n..(i2 + 1) * n];
                            for l in 0..k {
                                let av = ad[i2 * k + l];
                                let dst = &mut gb[l * n..(l + 1) * n];
                                for j in 0..n {
                                    dst[j] = dst[j] + av * grow[j];
                                }
                            }
                        }
                        self.accum(b, &gb);
                    }
                }
                Op::Conv1d { x, w, dilation } => {
                    let sx = self.nodes[x.0].value.shape().to_vec();
                    let sw = self.nodes[w.0].value.shape().to_vec();
                    let (bsz, cin, t) = (sx[0], sx[1], sx[2]);
                    let (cout, k) = (sw[0], sw[2]);
                    let pad = (k - 1) * dilation / 2;
                    if self.needs(x) {
                        let mut gx = vec![T::zero(); bsz * cin * t];
                        conv1d_backward_x(
                            g.data(),
                            self.nodes[w.0].value.data(),
                            &mut gx,
                            bsz,
                            cin,
                            cout,
                            t,
                            k,
                            dilation,
                            pad,
                        );
                        self.accum(x, &gx);
                    }
                    if self.needs(w) {
                        let mut gw = vec![T::zero(); cout * cin * k];
                        conv1d_backward_w(
                            g.data(),
                            self.nodes[x.0].value.data(),
                            &mut gw,
                            bsz,
                            cin,
                            cout,
                            t,
                            k,
                            dilation,
                            pad,
                        );
                        self.accum(w, &gw);
                    }
                }
                Op::BiasAdd { x, b } => {
                    if self.needs(x) {
                        self.accum(x, g.data());
                    }
                    if self.needs(b) {
                        let sx = self.nodes[x.0].value.shape();
                        let c = sx[1];
                        let inner: usize = sx[2..].iter().product();
                        let outer = sx[0];
                        let mut gb = vec![T::zero(); c];
                        for o in 0..outer {
                            for ci in 0..c {
                                let base = (o * c + ci) * inner;
                                let mut acc = T::zero();
                                for &gv in &g.data()[base..base + inner] {
                                    acc = acc + gv;
                                }
                                gb[ci] = gb[ci] + acc;
                            }
                        }
                        self.accum(b, &gb);
                    }
                }
                Op::ChannelAdd { x, v } => {
                    if self.needs(x) {
                        self.accum(x, g.data());
                    }
                    if self.needs(v) {
                        let sx = self.nodes[x.0].value.shape();
                        let (bsz, c, t) = (sx[0], sx[1], sx[2]);
                        let mut gv = vec![T::zero(); bsz * c];
                        for bc in 0..bsz * c {
                            let mut acc = T::zero();
                            for &gvv in &g.data()[bc * t..(bc + 1) * t] {
                                acc = acc + gvv;
                            }
                            gv[bc] = acc;
                        }
                        self.accum(v, &gv);
                    }
                }
                Op::Silu(a) => {
                    let ga: Vec<T> = g
                        .data()
                        .iter()
                        .zip(self.nodes[a.0].value.data())
                        .map(|(&gv, &x)| {
                            let s = sigmoid(x);
                            gv * s * (T::one() + x * (T::one() - s))
                        })
                        .collect();
                    self.accum(a, &ga);
                }
                Op::Tanh(a) => {
                    let ga: Vec<T> = g
                        .data()
                        .iter()
                        .zip(self.nodes[i].value.data())
                        .map(|(&gv, &y)| gv * (T::one() - y * y))
                        .collect();
                    self.accum(a, &ga);
                }
                Op::Sigmoid(a) => {
                    let ga: Vec<T> = g
                        .data()
                        .iter()
                        .zip(self.nodes[i].value.data())
                        .map(|(&gv, &y)| gv * y * (T::one() - y))
                        .collect();
                    self.accum(a, &ga);
                }
                Op::EmbedLookup { table, indices } => {
                    if self.needs(table) {
                        let d = self.nodes[table.0].value.shape()[1];
                        let vsz = self.nodes[table.0].value.shape()[0];
                        let mut gt = vec![T::zero(); vsz * d];
                        for (row, &idx) in indices.iter().enumerate() {
                            let src = &g.data()[row * d..(row + 1) * d];
                            let dst = &mut gt[idx * d..(idx + 1) * d];
                            for (dv, &sv) in dst.iter_mut().zip(src) {
                                *dv = *dv + sv;
                            }
                        }
                        self.accum(table, &gt);
                    }
                }
                Op::Reshape(a) => {
                    self.accum(a, g.data());
                }
                Op::SumAll(a) => {
                    let gv = g.item();
                    let n = self.nodes[a.0].value.numel();
                    self.accum(a, &vec![gv; n]);
                }
                Op::MeanAll(a) => {
                    let n = self.nodes[a.0].value.numel();
                    let gv = g.item() / T::from_f64(n as f64);
                    self.accum(a, &vec![gv; n]);
                }
                Op::MeanAxis { x, axis } => {
                    let s = self.nodes[x.0].value.shape().to_vec();
                    let outer: usize = s[..axis].iter().product();
                    let mid = s[axis];
                    let inner: usize = s[axis + 1..].iter().product();
                    let invm = T::from_f64(1.0 / mid as f64);
                    let mut gx = vec![T::zero(); self.nodes[x.0].value.numel()];
                    for o in 0..outer {
                        let src = &g.data()[o * inner..(o + 1) * inner];
                        for m in 0..mid {
                            let dst = &mut gx[(o * mid + m) * inner..(o * mid + m + 1) * inner];
                            for (dv, &sv) in dst.iter_mut().zip(src) {
                                *dv = *dv + sv * invm;
                            }
                        }
                    }
                    self.accum(x, &gx);
                }
                Op::MseLoss(a, b) => {
                    let n = self.nodes[a.0].value.numel();
                    let c = g.item() * T::from_f64(2.0 / n as f64);
                    if self.needs(a) {
                        let ga: Vec<T> = self.nodes[a.0]
                            .value
                            .data()
                            .iter()
                            .zip(self.nodes[b.0].value.data())
                            .map(|(&x, &y)| c * (x - y))
                            .collect();
                        self.accum(a, &ga);
                    }
                    if self.needs(b) {
                        let gb: Vec<T> = self.nodes[a.0]
                            .value
                            .data()
                            .iter()
                            .zip(self.nodes[b.0].value.data())
                            .map(|(&x, &y)| c * (y - x))
                            .collect();
                        self.accum(b, &gb);
                    }
                }
                Op::Concat { inputs, axis } => {
                    let out_shape = self.nodes[i].value.shape().to_vec();
                    let outer: usize = out_shape[..axis].iter().product();
                    let total_mid = out_shape[axis];
                    let inner: usize = out_shape[axis + 1..].iter().product();
                    let mut off = 0usize;
                    for &inp in &inputs {
                        let mid = self.nodes[inp.0].value.shape()[axis];
                        if self.needs(inp) {
                            let mut gi = vec![T::zero(); self.nodes[inp.0].value.numel()];
                            for o in 0..outer {
                                let src_base = (o * total_mid + off) * inner;
                                let src = &g.data()[src_base..src_base + mid * inner];
                                gi[o * mid * inner..(o + 1) * mid * inner].copy_from_slice(src);
                            }
                            self.accum(inp, &gi);
                        }
                        off += mid;
                    }
                }
                Op::Slice {
                    x,
                    axis,
                    start,
                    end,
                } => {
                    let s = self.nodes[x.0].value.shape().to_vec();
                    let outer: usize = s[..axis].iter().product();
                    let mid = s[axis];
                    let inner: usize = s[axis + 1..].iter().product();
                    let new_mid = end - start;
                    let mut gx = vec![T::zero(); self.nodes[x.0].value.numel()];
                    for o in 0..outer {
                        let src = &g.data()[o * new_mid * inner..(o + 1) * new_mid * inner];
                        let dst_base = (o * mid + start) * inner;
                        gx[dst_base..dst_base + new_mid * inner].copy_from_slice(src);
                    }
                    self.accum(x, &gx);
                }
            }
        }
        Ok(())
    }

    /// Accumulates `delta` (same layout as the node's value) into a node's
    /// gradient buffer if that node participates in differentiation.
    fn accum(&mut self, id: NodeId, delta: &[T]) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        let node = &mut self.nodes[id.0];
        match &mut node.grad {
            Some(gr) => {
                for (dst, &src) in gr.data_mut().iter_mut().zip(delta) {
                    *dst = *dst + src;
                }
            }
            None => {
                let shape = node.value.shape().to_vec();
                let mut gr = Tensor::zeros(&shape);
                gr.data_mut().copy_from_slice(delta);
                node.grad = Some(gr);
            }
        }
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn matmul_into<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for l in 0..k {
            let av = a[i * k + l];
            if av == T::zero() {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            for j in 0..n {
                crow[j] = crow[j] + av * brow[j];
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv1d_forward<T: Scalar>(
    x: &[T],
    w: &[T],
    out: &mut [T],
    bsz: usize,
    cin: usize,
    cout: usize,
    t: usize,
    k: usize,
    d: usize,
    pad: usize,
) {
    for b in 0..bsz {
        let xb = &x[b * cin * t..(b + 1) * cin * t];
        let ob = &mut out[b * cout * t..(b + 1) * cout * t];
        for co in 0..cout {
            let orow = &mut ob[co * t..(co + 1) * t];
            for ci in 0..cin {
                let xrow = &xb[ci * t..(ci + 1) * t];
                let wbase = (co * cin + ci) * k;
                for kk in 0..k {
                    let wv = w[wbase + kk];
                    let off = (kk * d) as isize - pad as isize;
                    let t0 = (-off).max(0) as usize;
                    let t1 = ((t as isize - off).min(t as isize)).max(0) as usize;
                    if t1 <= t0 {
                        continue;
                    }
                    let src = &xrow[(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                    for (dst, &sv) in orow[t0..t1].iter_mut().zip(src) {
                        *dst = *dst + wv * sv;
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv1d_backward_x<T: Scalar>(
    gout: &[T],
    w: &[T],
    gx: &mut [T],
    bsz: usize,
    cin: usize,
    cout: usize,
    t: usize,
    k: usize,
    d: usize,
    pad: usize,
) {
    for b in 0..bsz {
        let gob = &gout[b * cout * t..(b + 1) * cout * t];
        let gxb = &mut gx[b * cin * t..(b + 1) * cin * t];
        for co in 0..cout {
            let gorow = &gob[co * t..(co + 1) * t];
            for ci in 0..cin {
                let gxrow = &mut gxb[ci * t..(ci + 1) * t];
                let wbase = (co * cin + ci) * k;
                for kk in 0..k {
                    let wv = w[wbase + kk];
                    let off = (kk * d) as isize - pad as isize;
                    let t0 = (-off).max(0) as usize;
                    let t1 = ((t as isize - off).min(t as isize)).max(0) as usize;
                    if t1 <= t0 {
                        continue;
                    }
                    let dst = &mut gxrow[(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                    for (gx_v, &go) in dst.iter_mut().zip(&gorow[t0..t1]) {
                        *gx_v = *gx_v + wv * go;
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv1d_backward_w<T: Scalar>(
    gout: &[T],
    x: &[T],
    gw: &mut [T],
    bsz: usize,
    cin: usize,
    cout: usize,
    t: usize,
    k: usize,
    d: usize,
    pad: usize,
) {
    for b in 0..bsz {
        let xb = &x[b * cin * t..(b + 1) * cin * t];
        let gob = &gout[b * cout * t..(b + 1) * cout * t];
        for co in 0..cout {
            let gorow = &gob[co * t..(co + 1) * t];
            for ci in 0..cin {
                let xrow = &xb[ci * t..(ci + 1) * t];
                let wbase = (co * cin + ci) * k;
                for kk in 0..k {
                    let off = (kk * d) as isize - pad as isize;
                    let t0 = (-off).max(0) as usize;
                    let t1 = ((t as isize - off).min(t as isize)).max(0) as usize;
                    if t1 <= t0 {
                        continue;
                    }
                    let src = &xrow[(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                    let mut acc = T::zero();
                    for (&go, &xv) in gorow[t0..t1].iter().zip(src) {
                        acc = acc + go * xv;
                    }
                    gw[wbase + kk] = gw[wbase + kk] + acc;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests;
