//! Recording tape for reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the recording order is a
//! topological order and the backward sweep simply walks it in reverse.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::ops::{conv_backward, conv_forward, ConvGeom};
use super::Tensor;
use crate::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

pub const BN_MOMENTUM: f32 = 0.1;
pub const BN_EPS: f32 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

/// Per-channel running statistics of a batch-norm layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

enum Op {
    Leaf,
    Conv2d {
        input: usize,
        kernel: usize,
        geom: ConvGeom,
        cols: Vec<f32>,
    },
    Add(usize, usize),
    AddScalar(usize),
    Relu(usize),
    MaxPool {
        input: usize,
        argmax: Vec<usize>,
    },
    GlobalAvgPool(usize),
    BatchNorm {
        input: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<f32>,
        inv_std: Vec<f32>,
        training: bool,
    },
    Linear {
        input: usize,
        weight: usize,
        bias: usize,
    },
    SoftmaxXent {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<f32>,
    },
    Sum(usize),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to the leaves of a tape.
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `var`; errors if `var` belongs to another tape
    /// or was recorded as a constant.
    pub fn wrt(&self, var: Var) -> Result<&Tensor> {
        if var.tape != self.tape {
            return Err(Error::NotOnTape);
        }
        self.grads.get(var.idx).and_then(Option::as_ref).ok_or(Error::NotOnTape)
    }

    pub fn take(&mut self, var: Var) -> Result<Tensor> {
        if var.tape != self.tape {
            return Err(Error::NotOnTape);
        }
        self.grads
            .get_mut(var.idx)
            .and_then(Option::take)
            .ok_or(Error::NotOnTape)
    }
}

fn accumulate(slot: &mut Option<Vec<f32>>, delta: &[f32]) {
    match slot {
        Some(g) => {
            for (a, b) in g.iter_mut().zip(delta) {
                *a += b;
            }
        }
        None => *slot = Some(delta.to_vec()),
    }
}

fn accumulate_owned(slot: &mut Option<Vec<f32>>, delta: Vec<f32>) {
    match slot {
        Some(g) => {
            for (a, b) in g.iter_mut().zip(&delta) {
                *a += b;
            }
        }
        None => *slot = Some(delta),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    fn idx(&self, var: Var) -> Result<usize> {
        if var.tape != self.id || var.idx >= self.nodes.len() {
            return Err(Error::NotOnTape);
        }
        Ok(var.idx)
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn needs(&self, idx: usize) -> bool {
        self.nodes[idx].needs_grad
    }

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records an input no gradient is requested for.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[self.idx(var).expect("var from another tape")].value
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let (xi, ki) = (self.idx(input)?, self.idx(kernel)?);
        let x = &self.nodes[xi].value;
        let k = &self.nodes[ki].value;
        let geom = ConvGeom::new(x.shape(), k.shape(), stride, padding)?;
        let (out, cols) = conv_forward(x.data(), k.data(), &geom);
        let needs = self.needs(xi) || self.needs(ki);
        let value = Tensor::new(&geom.out_shape(), out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input: xi,
                kernel: ki,
                geom,
                cols,
            },
            needs,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let value = self.nodes[ai].value.zip_map(&self.nodes[bi].value, |p, q| p + q)?;
        let needs = self.needs(ai) || self.needs(bi);
        Ok(self.push(value, Op::Add(ai, bi), needs))
    }

    pub fn add_scalar(&mut self, x: Var, c: f32) -> Result<Var> {
        let xi = self.idx(x)?;
        let value = self.nodes[xi].value.map(|v| v + c);
        let needs = self.needs(xi);
        Ok(self.push(value, Op::AddScalar(xi), needs))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xi = self.idx(x)?;
        let value = self.nodes[xi].value.map(|v| v.max(0.0));
        let needs = self.needs(xi);
        Ok(self.push(value, Op::Relu(xi), needs))
    }

    /// Max pooling over `size x size` windows; ties pick the first maximum.
    pub fn max_pool(&mut self, x: Var, size: usize, stride: usize) -> Result<Var> {
        let xi = self.idx(x)?;
        let xv = &self.nodes[xi].value;
        let s = xv.shape();
        if s.len() != 4 || s[2] < size || s[3] < size || size == 0 || stride == 0 {
            return Err(Error::shape(
                "max_pool",
                format!("window {size} stride {stride} on {s:?}"),
            ));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let ho = (h - size) / stride + 1;
        let wo = (w - size) / stride + 1;
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(out.capacity());
        let data = xv.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_i = base + oh * stride * w + ow * stride;
                    for i in 0..size {
                        for j in 0..size {
                            let at = base + (oh * stride + i) * w + ow * stride + j;
                            if data[at] > best {
                                best = data[at];
                                best_i = at;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_i);
                }
            }
        }
        let needs = self.needs(xi);
        let value = Tensor::new(&[n, c, ho, wo], out)?;
        Ok(self.push(value, Op::MaxPool { input: xi, argmax }, needs))
    }

    /// Mean over the spatial axes: `[N,C,H,W] -> [N,C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let xi = self.idx(x)?;
        let xv = &self.nodes[xi].value;
        let s = xv.shape();
        if s.len() != 4 {
            return Err(Error::shape("global_avg_pool", format!("expected rank 4, got {s:?}")));
        }
        let plane = s[2] * s[3];
        let out: Vec<f32> = xv
            .data()
            .chunks(plane)
            .map(|p| p.iter().sum::<f32>() / plane as f32)
            .collect();
        let needs = self.needs(xi);
        let value = Tensor::new(&[s[0], s[1]], out)?;
        Ok(self.push(value, Op::GlobalAvgPool(xi), needs))
    }

    /// Batch normalisation over all axes but the channel axis (axis 1).
    ///
    /// Training mode normalises with batch statistics and folds them into
    /// `running` (momentum 0.1, unbiased variance); eval mode uses `running`
    /// as is.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: &mut RunningStats,
        training: bool,
    ) -> Result<Var> {
        let (xi, gi, bi) = (self.idx(x)?, self.idx(gamma)?, self.idx(beta)?);
        let xv = &self.nodes[xi].value;
        let s = xv.shape().to_vec();
        if s.len() < 2 {
            return Err(Error::shape("batch_norm", format!("rank too small: {s:?}")));
        }
        let (n, c) = (s[0], s[1]);
        let inner: usize = s[2..].iter().product();
        let g = self.nodes[gi].value.data();
        let b = self.nodes[bi].value.data();
        if g.len() != c || b.len() != c || running.mean.len() != c {
            return Err(Error::shape(
                "batch_norm",
                format!(
                    "{c} channels but scale/shift/stats have {}/{}/{}",
                    g.len(),
                    b.len(),
                    running.mean.len()
                ),
            ));
        }
        let data = xv.data();
        let count = n * inner;
        let mut mean = vec![0.0f32; c];
        let mut var = vec![0.0f32; c];
        if training {
            if count < 2 {
                return Err(Error::InvalidArgument(
                    "batch_norm in training mode needs more than one value per channel".into(),
                ));
            }
            for (ch, m) in mean.iter_mut().enumerate() {
                let mut acc = 0.0f64;
                for item in 0..n {
                    acc += data[(item * c + ch) * inner..][..inner]
                        .iter()
                        .map(|&v| f64::from(v))
                        .sum::<f64>();
                }
                *m = (acc / count as f64) as f32;
            }
            for (ch, v) in var.iter_mut().enumerate() {
                let mut acc = 0.0f64;
                for item in 0..n {
                    acc += data[(item * c + ch) * inner..][..inner]
                        .iter()
                        .map(|&x| f64::from(x - mean[ch]).powi(2))
                        .sum::<f64>();
                }
                *v = (acc / count as f64) as f32;
            }
            let unbias = count as f32 / (count - 1) as f32;
            for ch in 0..c {
                running.mean[ch] = (1.0 - BN_MOMENTUM) * running.mean[ch] + BN_MOMENTUM * mean[ch];
                running.var[ch] = (1.0 - BN_MOMENTUM) * running.var[ch] + BN_MOMENTUM * var[ch] * unbias;
            }
        } else {
            mean.copy_from_slice(&running.mean);
            var.copy_from_slice(&running.var);
        }
        let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = vec![0.0; data.len()];
        let mut out = vec![0.0; data.len()];
        for item in 0..n {
            for ch in 0..c {
                let off = (item * c + ch) * inner;
                for k in off..off + inner {
                    let h = (data[k] - mean[ch]) * inv_std[ch];
                    xhat[k] = h;
                    out[k] = g[ch] * h + b[ch];
                }
            }
        }
        let needs = self.needs(xi) || self.needs(gi) || self.needs(bi);
        let value = Tensor::new(&s, out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                input: xi,
                gamma: gi,
                beta: bi,
                xhat,
                inv_std,
                training,
            },
            needs,
        ))
    }

    /// `x [N,in] * W^T [in,out] + b`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xi, wi, bi) = (self.idx(x)?, self.idx(weight)?, self.idx(bias)?);
        let (xs, ws, bs) = (
            self.nodes[xi].value.shape(),
            self.nodes[wi].value.shape(),
            self.nodes[bi].value.shape(),
        );
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || bs != [ws[0]] {
            return Err(Error::shape(
                "linear",
                format!("input {xs:?}, weight {ws:?}, bias {bs:?}"),
            ));
        }
        let (n, inp, outp) = (xs[0], xs[1], ws[0]);
        let mut out = Vec::with_capacity(n * outp);
        for _ in 0..n {
            out.extend_from_slice(self.nodes[bi].value.data());
        }
        super::gemm::gemm(
            n,
            inp,
            outp,
            super::gemm::Mat::rows(self.nodes[xi].value.data(), inp),
            super::gemm::Mat::transposed(self.nodes[wi].value.data(), inp),
            1.0,
            &mut out,
        );
        let needs = self.needs(xi) || self.needs(wi) || self.needs(bi);
        let value = Tensor::new(&[n, outp], out)?;
        Ok(self.push(
            value,
            Op::Linear {
                input: xi,
                weight: wi,
                bias: bi,
            },
            needs,
        ))
    }

    /// Mean softmax cross-entropy of `logits [N,K]` against integer labels.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let li = self.idx(logits)?;
        let lv = &self.nodes[li].value;
        let s = lv.shape();
        if s.len() != 2 || s[0] != labels.len() || s[0] == 0 {
            return Err(Error::shape(
                "softmax_xent",
                format!("logits {s:?} with {} labels", labels.len()),
            ));
        }
        let k = s[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {k} classes"
            )));
        }
        let mut probs = vec![0.0; lv.len()];
        let mut total = 0.0f64;
        for (row, (&label, p)) in lv.data().chunks(k).zip(labels.iter().zip(probs.chunks_mut(k))) {
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mut z = 0.0f32;
            for (pi, &r) in p.iter_mut().zip(row) {
                *pi = (r - max).exp();
                z += *pi;
            }
            for pi in p.iter_mut() {
                *pi /= z;
            }
            total += f64::from(z.ln() + max - row[label]);
        }
        let loss = (total / labels.len() as f64) as f32;
        if !loss.is_finite() {
            return Err(Error::NonFinite("softmax cross-entropy loss".into()));
        }
        let needs = self.needs(li);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits: li,
                labels: labels.to_vec(),
                probs,
            },
            needs,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let xi = self.idx(x)?;
        let total = self.nodes[xi].value.sum();
        let needs = self.needs(xi);
        Ok(self.push(Tensor::scalar(total), Op::Sum(xi), needs))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let li = self.idx(loss)?;
        if self.nodes[li].value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.nodes[li].value.shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[li] = Some(vec![1.0]);
        for i in (0..=li).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(node, &dy, &mut grads);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| match (&node.op, node.needs_grad) {
                (Op::Leaf, true) => Some(
                    Tensor::new(node.value.shape(), g.unwrap_or_else(|| vec![0.0; node.value.len()]))
                        .expect("gradient shape matches value shape"),
                ),
                _ => None,
            })
            .collect();
        Ok(Gradients { tape: self.id, grads })
    }

    fn propagate(&self, node: &Node, dy: &[f32], grads: &mut [Option<Vec<f32>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                geom,
                cols,
            } => {
                let (dx, dk) = conv_backward(
                    dy,
                    self.nodes[*kernel].value.data(),
                    cols,
                    geom,
                    self.needs(*input),
                    self.needs(*kernel),
                );
                if let Some(dx) = dx {
                    accumulate_owned(&mut grads[*input], dx);
                }
                if let Some(dk) = dk {
                    accumulate_owned(&mut grads[*kernel], dk);
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    accumulate(&mut grads[*a], dy);
                }
                if self.needs(*b) {
                    accumulate(&mut grads[*b], dy);
                }
            }
            Op::AddScalar(x) => accumulate(&mut grads[*x], dy),
            Op::Relu(x) => {
                let d: Vec<f32> = self.nodes[*x]
                    .value
                    .data()
                    .iter()
                    .zip(dy)
                    .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                    .collect();
                accumulate_owned(&mut grads[*x], d);
            }
            Op::MaxPool { input, argmax } => {
                let mut d = vec![0.0; self.nodes[*input].value.len()];
                for (&at, &g) in argmax.iter().zip(dy) {
                    d[at] += g;
                }
                accumulate_owned(&mut grads[*input], d);
            }
            Op::GlobalAvgPool(x) => {
                let s = self.nodes[*x].value.shape();
                let plane = s[2] * s[3];
                let scale = 1.0 / plane as f32;
                let mut d = Vec::with_capacity(self.nodes[*x].value.len());
                for &g in dy {
                    d.extend(std::iter::repeat_n(g * scale, plane));
                }
                accumulate_owned(&mut grads[*x], d);
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            } => {
                let s = self.nodes[*input].value.shape();
                let (n, c) = (s[0], s[1]);
                let inner: usize = s[2..].iter().product();
                let g = self.nodes[*gamma].value.data();
                let mut dgamma = vec![0.0f32; c];
                let mut dbeta = vec![0.0f32; c];
                for item in 0..n {
                    for ch in 0..c {
                        let off = (item * c + ch) * inner;
                        for k in off..off + inner {
                            dgamma[ch] += dy[k] * xhat[k];
                            dbeta[ch] += dy[k];
                        }
                    }
                }
                if self.needs(*input) {
                    let mut dx = vec![0.0; dy.len()];
                    let m = (n * inner) as f32;
                    for item in 0..n {
                        for ch in 0..c {
                            let off = (item * c + ch) * inner;
                            let scale = g[ch] * inv_std[ch];
                            for k in off..off + inner {
                                dx[k] = if *training {
                                    scale / m * (m * dy[k] - dbeta[ch] - xhat[k] * dgamma[ch])
                                } else {
                                    scale * dy[k]
                                };
                            }
                        }
                    }
                    accumulate_owned(&mut grads[*input], dx);
                }
                if self.needs(*gamma) {
                    accumulate_owned(&mut grads[*gamma], dgamma);
                }
                if self.needs(*beta) {
                    accumulate_owned(&mut grads[*beta], dbeta);
                }
            }
            Op::Linear { input, weight, bias } => {
                use super::gemm::{gemm, Mat};
                let xs = self.nodes[*input].value.shape();
                let (n, inp) = (xs[0], xs[1]);
                let outp = self.nodes[*weight].value.dim(0);
                if self.needs(*input) {
                    let mut dx = vec![0.0; n * inp];
                    gemm(
                        n,
                        outp,
                        inp,
                        Mat::rows(dy, outp),
                        Mat::rows(self.nodes[*weight].value.data(), inp),
                        0.0,
                        &mut dx,
                    );
                    accumulate_owned(&mut grads[*input], dx);
                }
                if self.needs(*weight) {
                    let mut dw = vec![0.0; outp * inp];
                    gemm(
                        outp,
                        n,
                        inp,
                        Mat::transposed(dy, outp),
                        Mat::rows(self.nodes[*input].value.data(), inp),
                        0.0,
                        &mut dw,
                    );
                    accumulate_owned(&mut grads[*weight], dw);
                }
                if self.needs(*bias) {
                    let mut db = vec![0.0; outp];
                    for row in dy.chunks(outp) {
                        for (d, &g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                    accumulate_owned(&mut grads[*bias], db);
                }
            }
            Op::SoftmaxXent { logits, labels, probs } => {
                let k = self.nodes[*logits].value.dim(1);
                let scale = dy[0] / labels.len() as f32;
                let mut d = probs.clone();
                for (row, &label) in d.chunks_mut(k).zip(labels) {
                    row[label] -= 1.0;
                    for v in row.iter_mut() {
                        *v *= scale;
                    }
                }
                accumulate_owned(&mut grads[*logits], d);
            }
            Op::Sum(x) => {
                let d = vec![dy[0]; self.nodes[*x].value.len()];
                accumulate_owned(&mut grads[*x], d);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn relu_forward_and_subgradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[-1.0, 0.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);

        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[-1.0, 2.0]));
        let y = tape.relu(x).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[2, 3, 4], 0.3));
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap(), &Tensor::ones(&[2, 3, 4]));
    }

    #[test]
    fn uniform_logits_give_log_k() {
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::full(&[3, 7], 1.5));
        let loss = tape.softmax_xent(l, &[0, 3, 6]).unwrap();
        assert!((tape.value(loss).data()[0] - 7f32.ln()).abs() < 1e-6);
    }

    #[test]
    fn global_avg_pool_mean() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 5.0]));
        let y = tape.global_avg_pool(x).unwrap();
        assert_eq!(tape.value(y).data(), &[2.75]);
    }

    #[test]
    fn max_pool_routes_gradient_to_argmax() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1, 1, 2, 2], &[1.0, 4.0, 3.0, 2.0]));
        let y = tape.max_pool(x, 2, 2).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0]);
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn batch_norm_modes() {
        let mut stats = RunningStats::new(1);
        let mut tape = Tape::new();
        let x = tape.constant(t(&[4, 1], &[1.0, 2.0, 3.0, 4.0]));
        let g = tape.constant(t(&[1], &[1.0]));
        let b = tape.constant(t(&[1], &[0.0]));
        let y = tape.batch_norm(x, g, b, &mut stats, true).unwrap();
        let out = tape.value(y).data();
        assert!(out.iter().sum::<f32>().abs() < 1e-5);
        assert!((stats.mean[0] - 0.25).abs() < 1e-6);
        // unbiased variance of 1..4 is 5/3
        assert!((stats.var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-6);

        let frozen = stats.clone();
        let y = tape.batch_norm(x, g, b, &mut stats, false).unwrap();
        assert_eq!(stats, frozen);
        let expect = (1.0 - 0.25) / (frozen.var[0] + BN_EPS).sqrt();
        assert!((tape.value(y).data()[0] - expect).abs() < 1e-6);
    }

    #[test]
    fn constants_and_foreign_vars_have_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::ones(&[2]));
        let x = tape.leaf(Tensor::ones(&[2]));
        let y = tape.add(c, x).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(matches!(g.wrt(c), Err(Error::NotOnTape)));

        let mut other = Tape::new();
        let z = other.leaf(Tensor::ones(&[2]));
        assert!(matches!(g.wrt(z), Err(Error::NotOnTape)));
        assert!(tape.add(x, z).is_err());
    }

    #[test]
    fn overflowing_logits_are_reported() {
        let mut tape = Tape::new();
        let l = tape.constant(t(&[1, 2], &[f32::INFINITY, 0.0]));
        assert!(matches!(tape.softmax_xent(l, &[1]), Err(Error::NonFinite(_))));
    }
}
