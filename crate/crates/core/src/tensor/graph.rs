//! Reverse-mode differentiation over a recorded operation graph.
//!
//! A [`Graph`] owns every intermediate value of a forward pass. Operations
//! append nodes (op kind, input ids, output value); [`Graph::backward`]
//! walks the records once in reverse creation order, which is always a
//! valid topological order because inputs must exist before their outputs.

use crate::error::{Error, Result};
use crate::tensor::kernels::{
    col2im_acc, im2col, matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, ConvSpec,
};
use crate::tensor::{broadcast_shape, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf { trainable: bool },
    Add,
    Sub,
    Mul,
    Scale(f64),
    // constant kept for the record; the gradient is the identity
    AddScalar(#[allow(dead_code)] f64),
    Matmul,
    Bmm,
    Conv2d(ConvSpec),
    Reshape,
    Permute(Vec<usize>),
    SumAll,
    MeanAll,
    Silu,
    Sigmoid,
    Softmax,
    GroupNorm { groups: usize, eps: f64 },
    Concat { axis: usize },
    Narrow { axis: usize, start: usize, len: usize },
    Upsample2x,
    BceWithLogits,
}

struct Node {
    op: Op,
    inputs: Vec<Var>,
    value: Tensor,
    needs_grad: bool,
}

/// Recorded forward pass with reverse-mode differentiation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Graph::backward`].
///
/// Only leaves keep their gradient; intermediate gradients are dropped as
/// soon as they have been propagated.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

impl Graph {
    pub fn new() -> Graph {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, inputs: Vec<Var>, value: Tensor) -> Var {
        let needs_grad = match op {
            Op::Leaf { trainable } => trainable,
            _ => inputs.iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { op, inputs, value, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, op: &'static str, v: Var) -> Result<()> {
        if v.0 >= self.nodes.len() {
            return Err(Error::invalid(op, "variable does not belong to this graph (detached)"));
        }
        Ok(())
    }

    /// Registers an input value. Only trainable leaves receive gradients.
    pub fn leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        self.push(Op::Leaf { trainable }, vec![], value)
    }

    // ---- elementwise and broadcast ----

    fn broadcast_binary(
        &mut self,
        op_name: &'static str,
        op: Op,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        self.check(op_name, a)?;
        self.check(op_name, b)?;
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let shape = broadcast_shape(op_name, ta.shape(), tb.shape())?;
        let value = if ta.shape() == tb.shape() {
            let data: Vec<f64> =
                ta.data().iter().zip(tb.data().iter()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::from_vec_unchecked(shape, data)
        } else {
            broadcast_apply(ta, tb, &shape, &f)
        };
        Ok(self.push(op, vec![a, b], value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_binary("add", Op::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_binary("sub", Op::Sub, a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_binary("mul", Op::Mul, a, b, |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.check("scale", a)?;
        let value = self.nodes[a.0].value.map(|x| x * c);
        Ok(self.push(Op::Scale(c), vec![a], value))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.check("add_scalar", a)?;
        let value = self.nodes[a.0].value.map(|x| x + c);
        Ok(self.push(Op::AddScalar(c), vec![a], value))
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        self.check("silu", a)?;
        let value = self.nodes[a.0].value.map(|x| x * sigmoid(x));
        Ok(self.push(Op::Silu, vec![a], value))
    }

    pub fn sigmoid_op(&mut self, a: Var) -> Result<Var> {
        self.check("sigmoid", a)?;
        let value = self.nodes[a.0].value.map(sigmoid);
        Ok(self.push(Op::Sigmoid, vec![a], value))
    }

    // ---- structural ----

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.check("reshape", a)?;
        let value = self.nodes[a.0].value.reshape(shape)?;
        Ok(self.push(Op::Reshape, vec![a], value))
    }

    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        self.check("permute", a)?;
        let t = &self.nodes[a.0].value;
        if perm.len() != t.rank() {
            return Err(Error::shape(
                "permute",
                format!("permutation {:?} does not match rank of {:?}", perm, t.shape()),
            ));
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::invalid("permute", format!("invalid permutation {:?}", perm)));
            }
            seen[p] = true;
        }
        let value = permute_tensor(t, perm);
        Ok(self.push(Op::Permute(perm.to_vec()), vec![a], value))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat", "no inputs"));
        }
        for &v in parts {
            self.check("concat", v)?;
        }
        let first = self.nodes[parts[0].0].value.shape().to_vec();
        if axis >= first.len() {
            return Err(Error::invalid("concat", format!("axis {} out of range", axis)));
        }
        let mut total = 0usize;
        for &v in parts {
            let s = self.nodes[v.0].value.shape();
            if s.len() != first.len()
                || s.iter().zip(first.iter()).enumerate().any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(Error::shape(
                    "concat",
                    format!("incompatible input shapes {:?} vs {:?} along axis {}", s, first, axis),
                ));
            }
            total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = vec![0.0; out_shape.iter().product()];
        let row = total * inner;
        let mut offset = 0usize;
        for &v in parts {
            let t = &self.nodes[v.0].value;
            let na = t.shape()[axis];
            for o in 0..outer {
                let src = &t.data()[o * na * inner..(o + 1) * na * inner];
                let dst = &mut data[o * row + offset..o * row + offset + na * inner];
                dst.copy_from_slice(src);
            }
            offset += na * inner;
        }
        let value = Tensor::from_vec_unchecked(out_shape, data);
        Ok(self.push(Op::Concat { axis }, parts.to_vec(), value))
    }

    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.check("narrow", a)?;
        let t = &self.nodes[a.0].value;
        let shape = t.shape();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape(
                "narrow",
                format!("range {}..{} on axis {} of {:?}", start, start + len, axis, shape),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let na = shape[axis];
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let mut data = vec![0.0; outer * len * inner];
        for o in 0..outer {
            let src = &t.data()[(o * na + start) * inner..(o * na + start + len) * inner];
            data[o * len * inner..(o + 1) * len * inner].copy_from_slice(src);
        }
        let value = Tensor::from_vec_unchecked(out_shape, data);
        Ok(self.push(Op::Narrow { axis, start, len }, vec![a], value))
    }

    // ---- reductions ----

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        self.check("sum", a)?;
        let value = Tensor::scalar(self.nodes[a.0].value.sum());
        Ok(self.push(Op::SumAll, vec![a], value))
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        self.check("mean", a)?;
        let t = &self.nodes[a.0].value;
        if t.is_empty() {
            return Err(Error::invalid("mean", "empty tensor"));
        }
        let value = Tensor::scalar(t.mean());
        Ok(self.push(Op::MeanAll, vec![a], value))
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check("matmul", a)?;
        self.check("matmul", b)?;
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{:?} x {:?}", sa, sb)));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = crate::tensor::kernels::matmul(ta.data(), tb.data(), m, k, n);
        let value = Tensor::from_vec_unchecked(vec![m, n], out);
        Ok(self.push(Op::Matmul, vec![a, b], value))
    }

    /// Batched matrix product: (B,m,k) x (B,k,n) -> (B,m,n).
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check("bmm", a)?;
        self.check("bmm", b)?;
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::shape("bmm", format!("{:?} x {:?}", sa, sb)));
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut data = vec![0.0; bs * m * n];
        for i in 0..bs {
            matmul_acc(
                &ta.data()[i * m * k..(i + 1) * m * k],
                &tb.data()[i * k * n..(i + 1) * k * n],
                m,
                k,
                n,
                &mut data[i * m * n..(i + 1) * m * n],
            );
        }
        let value = Tensor::from_vec_unchecked(vec![bs, m, n], data);
        Ok(self.push(Op::Bmm, vec![a, b], value))
    }

    /// 2D convolution over (B,C,H,W) with weights (Cout,Cin,kh,kw).
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        self.check("conv2d", x)?;
        self.check("conv2d", w)?;
        let (tx, tw) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
        let (sx, sw) = (tx.shape(), tw.shape());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] {
            return Err(Error::shape("conv2d", format!("input {:?}, weight {:?}", sx, sw)));
        }
        if stride == 0 || sx[2] + 2 * pad < sw[2] || sx[3] + 2 * pad < sw[3] {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {:?} larger than padded input {:?}", sw, sx),
            ));
        }
        let spec = ConvSpec {
            in_ch: sx[1],
            out_ch: sw[0],
            kh: sw[2],
            kw: sw[3],
            stride,
            pad,
        };
        let (bs, c, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
        let (oh, ow) = spec.out_hw(h, wd);
        let ckk = c * spec.kh * spec.kw;
        let mut col = vec![0.0; ckk * oh * ow];
        let mut data = vec![0.0; bs * spec.out_ch * oh * ow];
        for ib in 0..bs {
            im2col(&tx.data()[ib * c * h * wd..(ib + 1) * c * h * wd], c, h, wd, &spec, &mut col);
            matmul_acc(
                tw.data(),
                &col,
                spec.out_ch,
                ckk,
                oh * ow,
                &mut data[ib * spec.out_ch * oh * ow..(ib + 1) * spec.out_ch * oh * ow],
            );
        }
        let value = Tensor::from_vec_unchecked(vec![bs, spec.out_ch, oh, ow], data);
        Ok(self.push(Op::Conv2d(spec), vec![x, w], value))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.check("softmax", a)?;
        let t = &self.nodes[a.0].value;
        if t.rank() == 0 {
            return Err(Error::shape("softmax", "scalar input".to_string()));
        }
        let n = *t.shape().last().unwrap();
        let rows = t.len() / n;
        let mut data = vec![0.0; t.len()];
        for r in 0..rows {
            let src = &t.data()[r * n..(r + 1) * n];
            let dst = &mut data[r * n..(r + 1) * n];
            let max = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (d, &s) in dst.iter_mut().zip(src.iter()) {
                *d = (s - max).exp();
                z += *d;
            }
            for d in dst.iter_mut() {
                *d /= z;
            }
        }
        let value = Tensor::from_vec_unchecked(t.shape().to_vec(), data);
        Ok(self.push(Op::Softmax, vec![a], value))
    }

    /// Per-sample, per-group channel normalization over (B,C,spatial...).
    /// Affine parameters are applied separately with `mul`/`add`.
    pub fn group_norm(&mut self, a: Var, groups: usize, eps: f64) -> Result<Var> {
        self.check("group_norm", a)?;
        let t = &self.nodes[a.0].value;
        let shape = t.shape();
        if shape.len() < 2 {
            return Err(Error::shape("group_norm", format!("need (B,C,..), got {:?}", shape)));
        }
        let (bs, c) = (shape[0], shape[1]);
        if groups == 0 || c % groups != 0 {
            return Err(Error::invalid(
                "group_norm",
                format!("{} channels not divisible into {} groups", c, groups),
            ));
        }
        let spatial: usize = shape[2..].iter().product();
        let gs = c / groups; // channels per group
        let m = gs * spatial; // elements per group
        let mut data = vec![0.0; t.len()];
        for b in 0..bs {
            for g in 0..groups {
                let off = b * c * spatial + g * gs * spatial;
                let src = &t.data()[off..off + m];
                let mean = src.iter().sum::<f64>() / m as f64;
                let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
                let inv = 1.0 / (var + eps).sqrt();
                for (d, &s) in data[off..off + m].iter_mut().zip(src.iter()) {
                    *d = (s - mean) * inv;
                }
            }
        }
        let value = Tensor::from_vec_unchecked(shape.to_vec(), data);
        Ok(self.push(Op::GroupNorm { groups, eps }, vec![a], value))
    }

    /// Nearest-neighbor doubling of the two trailing spatial axes of (B,C,H,W).
    pub fn upsample2x(&mut self, a: Var) -> Result<Var> {
        self.check("upsample2x", a)?;
        let t = &self.nodes[a.0].value;
        let s = t.shape();
        if s.len() != 4 {
            return Err(Error::shape("upsample2x", format!("need (B,C,H,W), got {:?}", s)));
        }
        let (bs, c, h, w) = (s[0], s[1], s[2], s[3]);
        let mut data = vec![0.0; bs * c * 4 * h * w];
        let (oh, ow) = (2 * h, 2 * w);
        for bc in 0..bs * c {
            let src = &t.data()[bc * h * w..(bc + 1) * h * w];
            let dst = &mut data[bc * oh * ow..(bc + 1) * oh * ow];
            for y in 0..oh {
                let sy = y / 2;
                for x in 0..ow {
                    dst[y * ow + x] = src[sy * w + x / 2];
                }
            }
        }
        let value = Tensor::from_vec_unchecked(vec![bs, c, oh, ow], data);
        Ok(self.push(Op::Upsample2x, vec![a], value))
    }

    /// Elementwise binary cross entropy on logits (numerically stable form).
    pub fn bce_with_logits(&mut self, logits: Var, targets: Var) -> Result<Var> {
        self.check("bce_with_logits", logits)?;
        self.check("bce_with_logits", targets)?;
        let (tl, tt) = (&self.nodes[logits.0].value, &self.nodes[targets.0].value);
        if tl.shape() != tt.shape() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("logits {:?} vs targets {:?}", tl.shape(), tt.shape()),
            ));
        }
        let data: Vec<f64> = tl
            .data()
            .iter()
            .zip(tt.data().iter())
            .map(|(&x, &t)| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p())
            .collect();
        let value = Tensor::from_vec_unchecked(tl.shape().to_vec(), data);
        Ok(self.push(Op::BceWithLogits, vec![logits, targets], value))
    }

    // ---- backward ----

    /// Gradients of a scalar output with respect to every trainable leaf.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        self.check("backward", out)?;
        let out_node = &self.nodes[out.0];
        if out_node.value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("output must be scalar, got {:?}", out_node.value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !out_node.needs_grad {
            return Ok(Gradients { grads });
        }
        grads[out.0] = Some(Tensor::from_vec_unchecked(
            out_node.value.shape().to_vec(),
            vec![1.0],
        ));
        for id in (0..=out.0).rev() {
            if !self.nodes[id].needs_grad {
                grads[id] = None;
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if matches!(node.op, Op::Leaf { .. }) {
                grads[id] = Some(g);
                continue;
            }
            self.propagate(id, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[id];
        let input_val = |i: usize| &self.nodes[node.inputs[i].0].value;
        let wants = |i: usize| self.nodes[node.inputs[i].0].needs_grad;
        let acc = |i: usize, t: Tensor, grads: &mut [Option<Tensor>]| {
            let slot = &mut grads[node.inputs[i].0];
            match slot {
                Some(existing) => {
                    let sum: Vec<f64> = existing
                        .data()
                        .iter()
                        .zip(t.data().iter())
                        .map(|(&a, &b)| a + b)
                        .collect();
                    *slot = Some(Tensor::from_vec_unchecked(existing.shape().to_vec(), sum));
                }
                None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf { .. } => {}
            Op::Add => {
                if wants(0) {
                    acc(0, reduce_to_shape(g, input_val(0).shape()), grads);
                }
                if wants(1) {
                    acc(1, reduce_to_shape(g, input_val(1).shape()), grads);
                }
            }
            Op::Sub => {
                if wants(0) {
                    acc(0, reduce_to_shape(g, input_val(0).shape()), grads);
                }
                if wants(1) {
                    let neg = g.map(|v| -v);
                    acc(1, reduce_to_shape(&neg, input_val(1).shape()), grads);
                }
            }
            Op::Mul => {
                let (a, b) = (input_val(0), input_val(1));
                if wants(0) {
                    let t = broadcast_apply(g, b, g.shape(), &|x, y| x * y);
                    acc(0, reduce_to_shape(&t, a.shape()), grads);
                }
                if wants(1) {
                    let t = broadcast_apply(g, a, g.shape(), &|x, y| x * y);
                    acc(1, reduce_to_shape(&t, b.shape()), grads);
                }
            }
            Op::Scale(c) => {
                if wants(0) {
                    acc(0, g.map(|v| v * c), grads);
                }
            }
            Op::AddScalar(_) => {
                if wants(0) {
                    acc(0, g.clone(), grads);
                }
            }
            Op::Matmul => {
                let (a, b) = (input_val(0), input_val(1));
                let (m, k) = (a.shape()[0], a.shape()[1]);
                let n = b.shape()[1];
                if wants(0) {
                    let mut da = vec![0.0; m * k];
                    matmul_a_bt_acc(g.data(), b.data(), m, n, k, &mut da);
                    acc(0, Tensor::from_vec_unchecked(vec![m, k], da), grads);
                }
                if wants(1) {
                    let mut db = vec![0.0; k * n];
                    matmul_at_b_acc(a.data(), g.data(), m, k, n, &mut db);
                    acc(1, Tensor::from_vec_unchecked(vec![k, n], db), grads);
                }
            }
            Op::Bmm => {
                let (a, b) = (input_val(0), input_val(1));
                let (bs, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
                let n = b.shape()[2];
                if wants(0) {
                    let mut da = vec![0.0; bs * m * k];
                    for i in 0..bs {
                        matmul_a_bt_acc(
                            &g.data()[i * m * n..(i + 1) * m * n],
                            &b.data()[i * k * n..(i + 1) * k * n],
                            m,
                            n,
                            k,
                            &mut da[i * m * k..(i + 1) * m * k],
                        );
                    }
                    acc(0, Tensor::from_vec_unchecked(vec![bs, m, k], da), grads);
                }
                if wants(1) {
                    let mut db = vec![0.0; bs * k * n];
                    for i in 0..bs {
                        matmul_at_b_acc(
                            &a.data()[i * m * k..(i + 1) * m * k],
                            &g.data()[i * m * n..(i + 1) * m * n],
                            m,
                            k,
                            n,
                            &mut db[i * k * n..(i + 1) * k * n],
                        );
                    }
                    acc(1, Tensor::from_vec_unchecked(vec![bs, k, n], db), grads);
                }
            }
            Op::Conv2d(spec) => {
                let (x, w) = (input_val(0), input_val(1));
                let (bs, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
                let (oh, ow) = spec.out_hw(h, wd);
                let ckk = c * spec.kh * spec.kw;
                let mut col = vec![0.0; ckk * oh * ow];
                let mut dw = if wants(1) { vec![0.0; w.len()] } else { vec![] };
                let mut dx = if wants(0) { vec![0.0; x.len()] } else { vec![] };
                let mut dcol = vec![0.0; ckk * oh * ow];
                for ib in 0..bs {
                    let g_s = &g.data()[ib * spec.out_ch * oh * ow..(ib + 1) * spec.out_ch * oh * ow];
                    if wants(1) {
                        im2col(
                            &x.data()[ib * c * h * wd..(ib + 1) * c * h * wd],
                            c,
                            h,
                            wd,
                            spec,
                            &mut col,
                        );
                        matmul_a_bt_acc(g_s, &col, spec.out_ch, oh * ow, ckk, &mut dw);
                    }
                    if wants(0) {
                        dcol.fill(0.0);
                        matmul_at_b_acc(w.data(), g_s, spec.out_ch, ckk, oh * ow, &mut dcol);
                        col2im_acc(
                            &dcol,
                            c,
                            h,
                            wd,
                            spec,
                            &mut dx[ib * c * h * wd..(ib + 1) * c * h * wd],
                        );
                    }
                }
                if wants(0) {
                    acc(0, Tensor::from_vec_unchecked(x.shape().to_vec(), dx), grads);
                }
                if wants(1) {
                    acc(1, Tensor::from_vec_unchecked(w.shape().to_vec(), dw), grads);
                }
            }
            Op::Reshape => {
                if wants(0) {
                    acc(0, g.reshape(input_val(0).shape())?, grads);
                }
            }
            Op::Permute(perm) => {
                if wants(0) {
                    let mut inv = vec![0usize; perm.len()];
                    for (i, &p) in perm.iter().enumerate() {
                        inv[p] = i;
                    }
                    acc(0, permute_tensor(g, &inv), grads);
                }
            }
            Op::SumAll => {
                if wants(0) {
                    let v = g.item()?;
                    acc(0, Tensor::full(input_val(0).shape(), v), grads);
                }
            }
            Op::MeanAll => {
                if wants(0) {
                    let n = input_val(0).len() as f64;
                    let v = g.item()? / n;
                    acc(0, Tensor::full(input_val(0).shape(), v), grads);
                }
            }
            Op::Silu => {
                if wants(0) {
                    let x = input_val(0);
                    let data: Vec<f64> = x
                        .data()
                        .iter()
                        .zip(g.data().iter())
                        .map(|(&v, &gv)| {
                            let s = sigmoid(v);
                            gv * (s + v * s * (1.0 - s))
                        })
                        .collect();
                    acc(0, Tensor::from_vec_unchecked(x.shape().to_vec(), data), grads);
                }
            }
            Op::Sigmoid => {
                if wants(0) {
                    let y = &node.value;
                    let data: Vec<f64> = y
                        .data()
                        .iter()
                        .zip(g.data().iter())
                        .map(|(&s, &gv)| gv * s * (1.0 - s))
                        .collect();
                    acc(0, Tensor::from_vec_unchecked(y.shape().to_vec(), data), grads);
                }
            }
            Op::Softmax => {
                if wants(0) {
                    let y = &node.value;
                    let n = *y.shape().last().unwrap();
                    let rows = y.len() / n;
                    let mut data = vec![0.0; y.len()];
                    for r in 0..rows {
                        let yr = &y.data()[r * n..(r + 1) * n];
                        let gr = &g.data()[r * n..(r + 1) * n];
                        let dot: f64 = yr.iter().zip(gr.iter()).map(|(&a, &b)| a * b).sum();
                        for ((d, &yv), &gv) in
                            data[r * n..(r + 1) * n].iter_mut().zip(yr.iter()).zip(gr.iter())
                        {
                            *d = yv * (gv - dot);
                        }
                    }
                    acc(0, Tensor::from_vec_unchecked(y.shape().to_vec(), data), grads);
                }
            }
            Op::GroupNorm { groups, eps } => {
                if wants(0) {
                    let x = input_val(0);
                    let shape = x.shape();
                    let (bs, c) = (shape[0], shape[1]);
                    let spatial: usize = shape[2..].iter().product();
                    let gs = c / groups;
                    let m = gs * spatial;
                    let mut data = vec![0.0; x.len()];
                    for b in 0..bs {
                        for gi in 0..*groups {
                            let off = b * c * spatial + gi * gs * spatial;
                            let src = &x.data()[off..off + m];
                            let gr = &g.data()[off..off + m];
                            let mean = src.iter().sum::<f64>() / m as f64;
                            let var =
                                src.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
                            let inv = 1.0 / (var + eps).sqrt();
                            let mut g_mean = 0.0;
                            let mut gx_mean = 0.0;
                            for (&sv, &gv) in src.iter().zip(gr.iter()) {
                                g_mean += gv;
                                gx_mean += gv * (sv - mean) * inv;
                            }
                            g_mean /= m as f64;
                            gx_mean /= m as f64;
                            for ((d, &sv), &gv) in
                                data[off..off + m].iter_mut().zip(src.iter()).zip(gr.iter())
                            {
                                let xh = (sv - mean) * inv;
                                *d = inv * (gv - g_mean - xh * gx_mean);
                            }
                        }
                    }
                    acc(0, Tensor::from_vec_unchecked(shape.to_vec(), data), grads);
                }
            }
            Op::Concat { axis } => {
                let axis = *axis;
                let out_shape = node.value.shape().to_vec();
                let outer: usize = out_shape[..axis].iter().product();
                let inner: usize = out_shape[axis + 1..].iter().product();
                let total = out_shape[axis];
                let mut offset = 0usize;
                for i in 0..node.inputs.len() {
                    let s = input_val(i).shape().to_vec();
                    let na = s[axis];
                    if wants(i) {
                        let mut part = vec![0.0; outer * na * inner];
                        for o in 0..outer {
                            let src =
                                &g.data()[o * total * inner + offset..o * total * inner + offset + na * inner];
                            part[o * na * inner..(o + 1) * na * inner].copy_from_slice(src);
                        }
                        acc(i, Tensor::from_vec_unchecked(s, part), grads);
                    }
                    offset += na * inner;
                }
            }
            Op::Narrow { axis, start, len } => {
                if wants(0) {
                    let s = input_val(0).shape().to_vec();
                    let outer: usize = s[..*axis].iter().product();
                    let inner: usize = s[*axis + 1..].iter().product();
                    let na = s[*axis];
                    let mut full = vec![0.0; input_val(0).len()];
                    for o in 0..outer {
                        let dst = &mut full[(o * na + start) * inner..(o * na + start + len) * inner];
                        dst.copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                    }
                    acc(0, Tensor::from_vec_unchecked(s, full), grads);
                }
            }
            Op::Upsample2x => {
                if wants(0) {
                    let x = input_val(0);
                    let s = x.shape();
                    let (bs, c, h, w) = (s[0], s[1], s[2], s[3]);
                    let (oh, ow) = (2 * h, 2 * w);
                    let mut data = vec![0.0; x.len()];
                    for bc in 0..bs * c {
                        let gsrc = &g.data()[bc * oh * ow..(bc + 1) * oh * ow];
                        let dst = &mut data[bc * h * w..(bc + 1) * h * w];
                        for y in 0..oh {
                            for xx in 0..ow {
                                dst[(y / 2) * w + xx / 2] += gsrc[y * ow + xx];
                            }
                        }
                    }
                    acc(0, Tensor::from_vec_unchecked(s.to_vec(), data), grads);
                }
            }
            Op::BceWithLogits => {
                let (x, t) = (input_val(0), input_val(1));
                if wants(0) {
                    let data: Vec<f64> = x
                        .data()
                        .iter()
                        .zip(t.data().iter())
                        .zip(g.data().iter())
                        .map(|((&xv, &tv), &gv)| gv * (sigmoid(xv) - tv))
                        .collect();
                    acc(0, Tensor::from_vec_unchecked(x.shape().to_vec(), data), grads);
                }
                if wants(1) {
                    let data: Vec<f64> = x
                        .data()
                        .iter()
                        .zip(g.data().iter())
                        .map(|(&xv, &gv)| gv * (-xv))
                        .collect();
                    acc(1, Tensor::from_vec_unchecked(t.shape().to_vec(), data), grads);
                }
            }
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Applies a binary op under broadcasting; `shape` is the broadcast result.
fn broadcast_apply(a: &Tensor, b: &Tensor, shape: &[usize], f: &dyn Fn(f64, f64) -> f64) -> Tensor {
    let rank = shape.len();
    let pad = |s: &[usize]| -> Vec<usize> {
        let mut v = vec![1; rank - s.len()];
        v.extend_from_slice(s);
        v
    };
    let sa = pad(a.shape());
    let sb = pad(b.shape());
    let stride_of = |s: &[usize]| -> Vec<usize> {
        let mut st = vec![1usize; rank];
        for i in (0..rank.saturating_sub(1)).rev() {
            st[i] = st[i + 1] * s[i + 1];
        }
        // zero stride on broadcast axes
        (0..rank).map(|i| if s[i] == 1 { 0 } else { st[i] }).collect()
    };
    let (sta, stb) = (stride_of(&sa), stride_of(&sb));
    let n: usize = shape.iter().product();
    let mut idx = vec![0usize; rank];
    let mut data = vec![0.0; n];
    let (da, db) = (a.data(), b.data());
    let mut oa = 0usize;
    let mut ob = 0usize;
    for d in data.iter_mut() {
        *d = f(da[oa], db[ob]);
        // odometer increment
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            oa += sta[ax];
            ob += stb[ax];
            if idx[ax] < shape[ax] {
                break;
            }
            idx[ax] = 0;
            oa -= sta[ax] * shape[ax];
            ob -= stb[ax] * shape[ax];
        }
    }
    Tensor::from_vec_unchecked(shape.to_vec(), data)
}

/// Sums a gradient over broadcast axes so it matches `target` shape.
fn reduce_to_shape(g: &Tensor, target: &[usize]) -> Tensor {
    if g.shape() == target {
        return g.clone();
    }
    let rank = g.rank();
    let mut padded = vec![1usize; rank - target.len()];
    padded.extend_from_slice(target);
    let mut data = vec![0.0; target.iter().product::<usize>().max(1)];
    let g_shape = g.shape();
    let mut t_strides = vec![0usize; rank];
    {
        let mut acc = 1usize;
        for i in (0..rank).rev() {
            if padded[i] == 1 {
                t_strides[i] = 0;
            } else {
                t_strides[i] = acc;
                acc *= padded[i];
            }
        }
    }
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for &v in g.data() {
        data[off] += v;
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += t_strides[ax];
            if idx[ax] < g_shape[ax] {
                break;
            }
            idx[ax] = 0;
            off -= t_strides[ax] * g_shape[ax];
        }
    }
    Tensor::from_vec_unchecked(target.to_vec(), data)
}

fn permute_tensor(t: &Tensor, perm: &[usize]) -> Tensor {
    let shape = t.shape();
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = t.strides();
    let perm_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let n = t.len();
    let mut data = vec![0.0; n];
    let rank = out_shape.len();
    if rank == 0 {
        return t.clone();
    }
    let mut idx = vec![0usize; rank];
    let mut src_off = 0usize;
    let src = t.data();
    for d in data.iter_mut() {
        *d = src[src_off];
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            src_off += perm_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
            src_off -= perm_strides[ax] * out_shape[ax];
        }
    }
    Tensor::from_vec_unchecked(out_shape, data)
}
