//! Reverse-mode differentiation over recorded tensor operations.
//!
//! A `Tape` records the forward pass as a sequence of primitive nodes and
//! replays it backward once, producing exact gradients for every leaf
//! marked differentiable (parameters, and inputs when an attack needs
//! input gradients). The primitive set is exactly what the encoder /
//! RIS-controller / decoder stacks and the channel couplings require:
//! position-wise dense maps, batch norm, ReLU, softmax, power
//! normalization, per-column complex matrix application, complex Hadamard
//! products, phase-to-unit-circle lifting, concatenation, addition, and
//! the two classification losses.

use num_complex::Complex64;

use super::tensor::{gemm, Tensor2};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum AutonetError {
    DimensionMismatch { expected: usize, got: usize },
    InsufficientBatch,
    ZeroInput,
    ShapeMismatch,
    TapeExhausted,
    NonFiniteGradient,
}

impl std::fmt::Display for AutonetError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AutonetError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected} channels, got {got}")
            }
            AutonetError::InsufficientBatch => {
                write!(f, "batch norm in train mode needs at least 2 aggregated samples")
            }
            AutonetError::ZeroInput => write!(f, "power normalization of an all-zero block"),
            AutonetError::ShapeMismatch => write!(f, "operand shapes do not match"),
            AutonetError::TapeExhausted => {
                write!(f, "backward already consumed this tape; re-record the forward pass")
            }
            AutonetError::NonFiniteGradient => write!(f, "non-finite gradient"),
        }
    }
}

impl std::error::Error for AutonetError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-column complex matrices, flattened: matrix for column `l` stores
/// entry `(o, i)` at `l * out_dim * in_dim + o * in_dim + i`.
#[derive(Debug, Clone)]
pub struct ColMats {
    pub out_dim: usize,
    pub in_dim: usize,
    pub data: Vec<Complex64>,
}

impl ColMats {
    pub fn zeros(out_dim: usize, in_dim: usize, cols: usize) -> Self {
        Self {
            out_dim,
            in_dim,
            data: vec![Complex64::new(0.0, 0.0); out_dim * in_dim * cols],
        }
    }

    pub fn cols(&self) -> usize {
        self.data.len() / (self.out_dim * self.in_dim)
    }

    pub fn col(&self, l: usize) -> &[Complex64] {
        let n = self.out_dim * self.in_dim;
        &self.data[l * n..(l + 1) * n]
    }

    pub fn col_mut(&mut self, l: usize) -> &mut [Complex64] {
        let n = self.out_dim * self.in_dim;
        &mut self.data[l * n..(l + 1) * n]
    }
}

struct BnRecord {
    x: NodeId,
    gamma: NodeId,
    beta: NodeId,
    /// Normalized input (train) — needed for the full batch-norm backward.
    xhat: Option<Tensor2>,
    /// Per-channel 1/sqrt(var + eps) in train mode, or
    /// gamma/sqrt(running_var + eps) in eval mode.
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    train: bool,
}

enum Op {
    Leaf,
    Dense {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    BatchNorm(Box<BnRecord>),
    Relu {
        x: NodeId,
    },
    Softmax {
        x: NodeId,
    },
    PowerNorm {
        x: NodeId,
        group_cols: usize,
        target: f64,
        /// Per-group mean-square complex magnitude of the input.
        group_msq: Vec<f64>,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    ConcatRows {
        a: NodeId,
        b: NodeId,
    },
    CplxColMatmul {
        x: NodeId,
        mats: ColMats,
    },
    CplxHadamard {
        a: NodeId,
        b: NodeId,
    },
    PhaseToUnit {
        theta: NodeId,
    },
    Bce {
        p: NodeId,
        target: Tensor2,
    },
    CrossEntropy {
        p: NodeId,
        target: Tensor2,
    },
}

struct Node {
    value: Tensor2,
    op: Op,
    needs_grad: bool,
}

pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

const BN_EPS: f64 = 1e-5;
/// Momentum of the running-statistics update in train mode.
pub const BN_MOMENTUM: f64 = 0.1;
const PROB_CLAMP: f64 = 1e-12;

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Tensor2, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.nodes.len() - 1
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    /// Constant input; no gradient is tracked through it.
    pub fn constant(&mut self, value: Tensor2) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable leaf (parameter or marked input).
    pub fn leaf(&mut self, value: Tensor2) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Position-wise affine map: `out[c,l] = sum_k w[c,k] x[k,l] + b[c]`.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, AutonetError> {
        let (wch, win) = (self.value(w).channels(), self.value(w).cols());
        let xv = self.value(x);
        if xv.channels() != win {
            return Err(AutonetError::DimensionMismatch {
                expected: win,
                got: xv.channels(),
            });
        }
        let cols = xv.cols();
        let mut out = Tensor2::zeros(wch, cols);
        gemm(false, false, 1.0, self.value(w), self.value(x), 0.0, &mut out);
        let bv = self.value(b);
        for c in 0..wch {
            let bias = bv.get(c, 0);
            for v in &mut out.data_mut()[c * cols..(c + 1) * cols] {
                *v += bias;
            }
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(out, Op::Dense { x, w, b }, needs))
    }

    /// 1-D batch normalization over all columns per channel.
    ///
    /// Train mode normalizes with batch statistics (the caller folds the
    /// returned stats into the running estimates); eval mode uses the
    /// supplied running statistics.
    pub fn batchnorm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &[f64],
        running_var: &[f64],
        mode: Mode,
    ) -> Result<NodeId, AutonetError> {
        let xv = self.value(x);
        let ch = xv.channels();
        let cols = xv.cols();
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        match mode {
            Mode::Train => {
                if cols < 2 {
                    return Err(AutonetError::InsufficientBatch);
                }
                let mut mean = vec![0.0; ch];
                let mut var = vec![0.0; ch];
                for c in 0..ch {
                    let row = xv.row(c);
                    let m = row.iter().sum::<f64>() / cols as f64;
                    let v = row.iter().map(|z| (z - m) * (z - m)).sum::<f64>() / cols as f64;
                    mean[c] = m;
                    var[c] = v;
                }
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let mut xhat = Tensor2::zeros(ch, cols);
                let mut out = Tensor2::zeros(ch, cols);
                let gv = self.value(gamma);
                let bv = self.value(beta);
                for c in 0..ch {
                    let g = gv.get(c, 0);
                    let b = bv.get(c, 0);
                    for l in 0..cols {
                        let h = (self.value(x).get(c, l) - mean[c]) * inv_std[c];
                        xhat.set(c, l, h);
                        out.set(c, l, g * h + b);
                    }
                }
                Ok(self.push(
                    out,
                    Op::BatchNorm(Box::new(BnRecord {
                        x,
                        gamma,
                        beta,
                        xhat: Some(xhat),
                        inv_std,
                        batch_mean: mean,
                        batch_var: var,
                        train: true,
                    })),
                    needs,
                ))
            }
            Mode::Eval => {
                assert_eq!(running_mean.len(), ch);
                assert_eq!(running_var.len(), ch);
                let gv = self.value(gamma);
                let bv = self.value(beta);
                let mut factor = vec![0.0; ch];
                let mut out = Tensor2::zeros(ch, cols);
                for c in 0..ch {
                    let inv = 1.0 / (running_var[c] + BN_EPS).sqrt();
                    factor[c] = inv;
                    let g = gv.get(c, 0);
                    let b = bv.get(c, 0);
                    for l in 0..cols {
                        out.set(c, l, g * (xv.get(c, l) - running_mean[c]) * inv + b);
                    }
                }
                // Re-borrow kept the xhat path unused in eval.
                let xhat_for_grad = Tensor2::from_fn(ch, cols, |c, l| {
                    (self.value(x).get(c, l) - running_mean[c]) * factor[c]
                });
                Ok(self.push(
                    out,
                    Op::BatchNorm(Box::new(BnRecord {
                        x,
                        gamma,
                        beta,
                        xhat: Some(xhat_for_grad),
                        inv_std: factor,
                        batch_mean: running_mean.to_vec(),
                        batch_var: running_var.to_vec(),
                        train: false,
                    })),
                    needs,
                ))
            }
        }
    }

    /// Batch statistics recorded by a train-mode batch-norm node.
    pub fn bn_batch_stats(&self, id: NodeId) -> Option<(&[f64], &[f64])> {
        match &self.nodes[id].op {
            Op::BatchNorm(r) if r.train => Some((&r.batch_mean, &r.batch_var)),
            _ => None,
        }
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = Tensor2::from_vec(
            self.value(x).channels(),
            self.value(x).cols(),
            self.value(x).data().iter().map(|v| v.max(0.0)).collect(),
        );
        let needs = self.needs(x);
        self.push(out, Op::Relu { x }, needs)
    }

    /// Softmax per column over channels, stabilized by max subtraction.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let (ch, cols) = (xv.channels(), xv.cols());
        let mut out = Tensor2::zeros(ch, cols);
        for l in 0..cols {
            let mut mx = f64::NEG_INFINITY;
            for c in 0..ch {
                mx = mx.max(xv.get(c, l));
            }
            let mut denom = 0.0;
            for c in 0..ch {
                denom += (xv.get(c, l) - mx).exp();
            }
            for c in 0..ch {
                out.set(c, l, (xv.get(c, l) - mx).exp() / denom);
            }
        }
        let needs = self.needs(x);
        self.push(out, Op::Softmax { x }, needs)
    }

    /// Power normalization per group of `group_cols` columns: rows are
    /// interpreted as stacked real/imaginary halves of complex channels,
    /// and each group is rescaled so its mean-square complex magnitude is
    /// exactly `target^2`.
    pub fn power_normalize(
        &mut self,
        x: NodeId,
        group_cols: usize,
        target: f64,
    ) -> Result<NodeId, AutonetError> {
        let xv = self.value(x);
        let (ch, cols) = (xv.channels(), xv.cols());
        assert_eq!(ch % 2, 0, "power normalization expects stacked re/im channels");
        assert_eq!(cols % group_cols, 0);
        let k = ch / 2;
        let groups = cols / group_cols;
        let mut group_msq = vec![0.0; groups];
        for g in 0..groups {
            let mut acc = 0.0;
            for c in 0..ch {
                for l in g * group_cols..(g + 1) * group_cols {
                    let v = xv.get(c, l);
                    acc += v * v;
                }
            }
            let msq = acc / (k * group_cols) as f64;
            if msq.sqrt() < 1e-30 {
                return Err(AutonetError::ZeroInput);
            }
            group_msq[g] = msq;
        }
        let mut out = Tensor2::zeros(ch, cols);
        for g in 0..groups {
            let s = target / group_msq[g].sqrt();
            for c in 0..ch {
                for l in g * group_cols..(g + 1) * group_cols {
                    out.set(c, l, self.value(x).get(c, l) * s);
                }
            }
        }
        let needs = self.needs(x);
        Ok(self.push(
            out,
            Op::PowerNorm {
                x,
                group_cols,
                target,
                group_msq,
            },
            needs,
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!((av.channels(), av.cols()), (bv.channels(), bv.cols()));
        let out = Tensor2::from_vec(
            av.channels(),
            av.cols(),
            av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect(),
        );
        let needs = self.needs(a) || self.needs(b);
        self.push(out, Op::Add { a, b }, needs)
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.cols(), bv.cols());
        let cols = av.cols();
        let mut data = Vec::with_capacity((av.channels() + bv.channels()) * cols);
        data.extend_from_slice(av.data());
        data.extend_from_slice(bv.data());
        let out = Tensor2::from_vec(av.channels() + bv.channels(), cols, data);
        let needs = self.needs(a) || self.needs(b);
        self.push(out, Op::ConcatRows { a, b }, needs)
    }

    /// Applies a different complex matrix to every column. The input's
    /// rows are the stacked real/imaginary halves of `mats.in_dim` complex
    /// channels; likewise the output for `mats.out_dim`.
    pub fn complex_col_matmul(&mut self, x: NodeId, mats: ColMats) -> NodeId {
        let xv = self.value(x);
        assert_eq!(xv.channels(), 2 * mats.in_dim);
        assert_eq!(xv.cols(), mats.cols());
        let cols = xv.cols();
        let (od, id) = (mats.out_dim, mats.in_dim);
        let mut out = Tensor2::zeros(2 * od, cols);
        for l in 0..cols {
            let m = mats.col(l);
            for o in 0..od {
                let mut re = 0.0;
                let mut im = 0.0;
                for i in 0..id {
                    let a = m[o * id + i];
                    let xr = xv.get(i, l);
                    let xi = xv.get(id + i, l);
                    re += a.re * xr - a.im * xi;
                    im += a.re * xi + a.im * xr;
                }
                out.set(o, l, re);
                out.set(od + o, l, im);
            }
        }
        let needs = self.needs(x);
        self.push(out, Op::CplxColMatmul { x, mats }, needs)
    }

    /// Elementwise complex product of two stacked-re/im tensors.
    pub fn complex_hadamard(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!((av.channels(), av.cols()), (bv.channels(), bv.cols()));
        assert_eq!(av.channels() % 2, 0);
        let k = av.channels() / 2;
        let cols = av.cols();
        let mut out = Tensor2::zeros(2 * k, cols);
        for c in 0..k {
            for l in 0..cols {
                let ar = av.get(c, l);
                let ai = av.get(k + c, l);
                let br = bv.get(c, l);
                let bi = bv.get(k + c, l);
                out.set(c, l, ar * br - ai * bi);
                out.set(k + c, l, ar * bi + ai * br);
            }
        }
        let needs = self.needs(a) || self.needs(b);
        self.push(out, Op::CplxHadamard { a, b }, needs)
    }

    /// Lifts phases onto the unit circle: `theta (N x L)` becomes the
    /// stacked re/im tensor of `e^{j theta}` (2N x L).
    pub fn phase_to_unit(&mut self, theta: NodeId) -> NodeId {
        let tv = self.value(theta);
        let (n, cols) = (tv.channels(), tv.cols());
        let mut out = Tensor2::zeros(2 * n, cols);
        for c in 0..n {
            for l in 0..cols {
                let t = tv.get(c, l);
                out.set(c, l, t.cos());
                out.set(n + c, l, t.sin());
            }
        }
        let needs = self.needs(theta);
        self.push(out, Op::PhaseToUnit { theta }, needs)
    }

    /// Mean binary cross-entropy of per-position probability vectors
    /// against one-hot targets (mean over channels and positions).
    pub fn bce_loss(&mut self, p: NodeId, target: &Tensor2) -> Result<NodeId, AutonetError> {
        let pv = self.value(p);
        if (pv.channels(), pv.cols()) != (target.channels(), target.cols()) {
            return Err(AutonetError::ShapeMismatch);
        }
        let n = pv.len() as f64;
        let mut acc = 0.0;
        for (q, t) in pv.data().iter().zip(target.data()) {
            let q = q.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            acc -= t * q.ln() + (1.0 - t) * (1.0 - q).ln();
        }
        let needs = self.needs(p);
        Ok(self.push(
            Tensor2::scalar(acc / n),
            Op::Bce {
                p,
                target: target.clone(),
            },
            needs,
        ))
    }

    /// Mean categorical cross-entropy (ablation alternative to BCE).
    pub fn ce_loss(&mut self, p: NodeId, target: &Tensor2) -> Result<NodeId, AutonetError> {
        let pv = self.value(p);
        if (pv.channels(), pv.cols()) != (target.channels(), target.cols()) {
            return Err(AutonetError::ShapeMismatch);
        }
        let cols = pv.cols() as f64;
        let mut acc = 0.0;
        for (q, t) in pv.data().iter().zip(target.data()) {
            if *t > 0.0 {
                let q = q.clamp(PROB_CLAMP, 1.0);
                acc -= t * q.ln();
            }
        }
        let needs = self.needs(p);
        Ok(self.push(
            Tensor2::scalar(acc / cols),
            Op::CrossEntropy {
                p,
                target: target.clone(),
            },
            needs,
        ))
    }

    /// Reverse pass from a scalar node. Returns per-node gradients; query
    /// with the ids of the leaves of interest.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients, AutonetError> {
        if self.consumed {
            return Err(AutonetError::TapeExhausted);
        }
        self.consumed = true;
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor2>> = (0..n).map(|_| None).collect();
        grads[loss] = Some(Tensor2::scalar(1.0));

        for id in (0..=loss).rev() {
            if grads[id].is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let g = grads[id].take().unwrap();
            self.backprop_node(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(grads: &mut [Option<Tensor2>], id: NodeId, delta: Tensor2) {
        match &mut grads[id] {
            Some(g) => g.scaled_add(1.0, &delta),
            slot => *slot = Some(delta),
        }
    }

    fn backprop_node(&self, id: NodeId, g: &Tensor2, grads: &mut [Option<Tensor2>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Dense { x, w, b } => {
                let cols = g.cols();
                if self.needs(*x) {
                    let mut dx = Tensor2::zeros(self.value(*x).channels(), cols);
                    gemm(true, false, 1.0, self.value(*w), g, 0.0, &mut dx);
                    Self::accumulate(grads, *x, dx);
                }
                if self.needs(*w) {
                    let wv = self.value(*w);
                    let mut dw = Tensor2::zeros(wv.channels(), wv.cols());
                    gemm(false, true, 1.0, g, self.value(*x), 0.0, &mut dw);
                    Self::accumulate(grads, *w, dw);
                }
                if self.needs(*b) {
                    let mut db = Tensor2::zeros(g.channels(), 1);
                    for c in 0..g.channels() {
                        db.set(c, 0, g.row(c).iter().sum());
                    }
                    Self::accumulate(grads, *b, db);
                }
            }
            Op::BatchNorm(r) => {
                let xhat = r.xhat.as_ref().expect("bn saves xhat");
                let (ch, cols) = (xhat.channels(), xhat.cols());
                let gv = self.value(r.gamma);
                if self.needs(r.gamma) {
                    let mut dg = Tensor2::zeros(ch, 1);
                    for c in 0..ch {
                        let mut acc = 0.0;
                        for l in 0..cols {
                            acc += g.get(c, l) * xhat.get(c, l);
                        }
                        dg.set(c, 0, acc);
                    }
                    Self::accumulate(grads, r.gamma, dg);
                }
                if self.needs(r.beta) {
                    let mut db = Tensor2::zeros(ch, 1);
                    for c in 0..ch {
                        db.set(c, 0, g.row(c).iter().sum());
                    }
                    Self::accumulate(grads, r.beta, db);
                }
                if self.needs(r.x) {
                    let mut dx = Tensor2::zeros(ch, cols);
                    if r.train {
                        let nf = cols as f64;
                        for c in 0..ch {
                            let gamma = gv.get(c, 0);
                            let mut sum_g = 0.0;
                            let mut sum_gx = 0.0;
                            for l in 0..cols {
                                sum_g += g.get(c, l);
                                sum_gx += g.get(c, l) * xhat.get(c, l);
                            }
                            let k = gamma * r.inv_std[c] / nf;
                            for l in 0..cols {
                                let v = nf * g.get(c, l) - sum_g - xhat.get(c, l) * sum_gx;
                                dx.set(c, l, k * v);
                            }
                        }
                    } else {
                        for c in 0..ch {
                            let k = gv.get(c, 0) * r.inv_std[c];
                            for l in 0..cols {
                                dx.set(c, l, k * g.get(c, l));
                            }
                        }
                    }
                    Self::accumulate(grads, r.x, dx);
                }
            }
            Op::Relu { x } => {
                if self.needs(*x) {
                    let xv = self.value(*x);
                    let dx = Tensor2::from_vec(
                        xv.channels(),
                        xv.cols(),
                        xv.data()
                            .iter()
                            .zip(g.data())
                            .map(|(v, gg)| if *v > 0.0 { *gg } else { 0.0 })
                            .collect(),
                    );
                    Self::accumulate(grads, *x, dx);
                }
            }
            Op::Softmax { x } => {
                if self.needs(*x) {
                    let s = &self.nodes[id].value;
                    let (ch, cols) = (s.channels(), s.cols());
                    let mut dx = Tensor2::zeros(ch, cols);
                    for l in 0..cols {
                        let mut dot = 0.0;
                        for c in 0..ch {
                            dot += g.get(c, l) * s.get(c, l);
                        }
                        for c in 0..ch {
                            dx.set(c, l, s.get(c, l) * (g.get(c, l) - dot));
                        }
                    }
                    Self::accumulate(grads, *x, dx);
                }
            }
            Op::PowerNorm {
                x,
                group_cols,
                target,
                group_msq,
            } => {
                if self.needs(*x) {
                    let xv = self.value(*x);
                    let (ch, cols) = (xv.channels(), xv.cols());
                    let k = ch / 2;
                    let denom = (k * group_cols) as f64;
                    let mut dx = Tensor2::zeros(ch, cols);
                    for (gi, &msq) in group_msq.iter().enumerate() {
                        let lo = gi * group_cols;
                        let hi = lo + group_cols;
                        let s = msq.sqrt();
                        let mut gx = 0.0;
                        for c in 0..ch {
                            for l in lo..hi {
                                gx += g.get(c, l) * xv.get(c, l);
                            }
                        }
                        let a = target / s;
                        let b = target / (s * msq) / denom * gx;
                        for c in 0..ch {
                            for l in lo..hi {
                                dx.set(c, l, a * g.get(c, l) - b * xv.get(c, l));
                            }
                        }
                    }
                    Self::accumulate(grads, *x, dx);
                }
            }
            Op::Add { a, b } => {
                if self.needs(*a) {
                    Self::accumulate(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    Self::accumulate(grads, *b, g.clone());
                }
            }
            Op::ConcatRows { a, b } => {
                let ach = self.value(*a).channels();
                let cols = g.cols();
                if self.needs(*a) {
                    let da = Tensor2::from_vec(ach, cols, g.data()[..ach * cols].to_vec());
                    Self::accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    let bch = self.value(*b).channels();
                    let db = Tensor2::from_vec(bch, cols, g.data()[ach * cols..].to_vec());
                    Self::accumulate(grads, *b, db);
                }
            }
            Op::CplxColMatmul { x, mats } => {
                if self.needs(*x) {
                    // dx = A^H dout per column (in the stacked representation).
                    let (od, idim) = (mats.out_dim, mats.in_dim);
                    let cols = g.cols();
                    let mut dx = Tensor2::zeros(2 * idim, cols);
                    for l in 0..cols {
                        let m = mats.col(l);
                        for i in 0..idim {
                            let mut re = 0.0;
                            let mut im = 0.0;
                            for o in 0..od {
                                let a = m[o * idim + i];
                                let dr = g.get(o, l);
                                let di = g.get(od + o, l);
                                re += a.re * dr + a.im * di;
                                im += a.re * di - a.im * dr;
                            }
                            dx.set(i, l, re);
                            dx.set(idim + i, l, im);
                        }
                    }
                    Self::accumulate(grads, *x, dx);
                }
            }
            Op::CplxHadamard { a, b } => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let k = av.channels() / 2;
                let cols = av.cols();
                if self.needs(*a) {
                    let mut da = Tensor2::zeros(2 * k, cols);
                    for c in 0..k {
                        for l in 0..cols {
                            let br = bv.get(c, l);
                            let bi = bv.get(k + c, l);
                            let dr = g.get(c, l);
                            let di = g.get(k + c, l);
                            da.set(c, l, br * dr + bi * di);
                            da.set(k + c, l, br * di - bi * dr);
                        }
                    }
                    Self::accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    let mut db = Tensor2::zeros(2 * k, cols);
                    for c in 0..k {
                        for l in 0..cols {
                            let ar = av.get(c, l);
                            let ai = av.get(k + c, l);
                            let dr = g.get(c, l);
                            let di = g.get(k + c, l);
                            db.set(c, l, ar * dr + ai * di);
                            db.set(k + c, l, ar * di - ai * dr);
                        }
                    }
                    Self::accumulate(grads, *b, db);
                }
            }
            Op::PhaseToUnit { theta } => {
                if self.needs(*theta) {
                    let tv = self.value(*theta);
                    let (n, cols) = (tv.channels(), tv.cols());
                    let mut dt = Tensor2::zeros(n, cols);
                    for c in 0..n {
                        for l in 0..cols {
                            let t = tv.get(c, l);
                            dt.set(
                                c,
                                l,
                                -t.sin() * g.get(c, l) + t.cos() * g.get(n + c, l),
                            );
                        }
                    }
                    Self::accumulate(grads, *theta, dt);
                }
            }
            Op::Bce { p, target } => {
                if self.needs(*p) {
                    let pv = self.value(*p);
                    let n = pv.len() as f64;
                    let seed = g.get(0, 0);
                    let dx = Tensor2::from_vec(
                        pv.channels(),
                        pv.cols(),
                        pv.data()
                            .iter()
                            .zip(target.data())
                            .map(|(q, t)| {
                                if *q <= PROB_CLAMP || *q >= 1.0 - PROB_CLAMP {
                                    0.0
                                } else {
                                    seed * (-t / q + (1.0 - t) / (1.0 - q)) / n
                                }
                            })
                            .collect(),
                    );
                    Self::accumulate(grads, *p, dx);
                }
            }
            Op::CrossEntropy { p, target } => {
                if self.needs(*p) {
                    let pv = self.value(*p);
                    let cols = pv.cols() as f64;
                    let seed = g.get(0, 0);
                    let dx = Tensor2::from_vec(
                        pv.channels(),
                        pv.cols(),
                        pv.data()
                            .iter()
                            .zip(target.data())
                            .map(|(q, t)| {
                                if *t > 0.0 && *q > PROB_CLAMP {
                                    -seed * t / q / cols
                                } else {
                                    0.0
                                }
                            })
                            .collect(),
                    );
                    Self::accumulate(grads, *p, dx);
                }
            }
        }
    }
}

pub struct Gradients {
    grads: Vec<Option<Tensor2>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor2> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }

    /// Gradient of a leaf that is known to participate in the loss.
    pub fn expect(&self, id: NodeId) -> &Tensor2 {
        self.get(id).expect("leaf did not receive a gradient")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::RngStream;

    fn randn(rng: &mut RngStream, ch: usize, cols: usize) -> Tensor2 {
        Tensor2::from_fn(ch, cols, |_, _| rng.standard_normal())
    }

    #[test]
    fn dense_identity_passthrough() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor2::from_vec(2, 1, vec![2.0, 3.0]));
        let w = tape.leaf(Tensor2::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let b = tape.leaf(Tensor2::zeros(2, 1));
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 3.0]);
    }

    #[test]
    fn dense_single_position() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor2::from_vec(2, 1, vec![2.0, 3.0]));
        let w = tape.leaf(Tensor2::from_vec(1, 2, vec![1.0, 1.0]));
        let b = tape.leaf(Tensor2::zeros(1, 1));
        let y = tape.dense(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[5.0]);
    }

    #[test]
    fn dense_rejects_wrong_input_channels() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor2::zeros(3, 1));
        let w = tape.leaf(Tensor2::zeros(2, 2));
        let b = tape.leaf(Tensor2::zeros(2, 1));
        assert_eq!(
            tape.dense(x, w, b),
            Err(AutonetError::DimensionMismatch {
                expected: 2,
                got: 3
            })
        );
    }

    #[test]
    fn relu_and_softmax_basics() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor2::from_vec(2, 1, vec![-1.0, 2.0]));
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0.0, 2.0]);

        let mut tape = Tape::new();
        let logits = tape.constant(Tensor2::from_vec(4, 2, vec![0.3; 8]));
        let s = tape.softmax(logits);
        for v in tape.value(s).data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_columns_sum_to_one_and_monotone() {
        let mut rng = RngStream::new(4, 0);
        let x = randn(&mut rng, 5, 7);
        let mut tape = Tape::new();
        let xi = tape.constant(x.clone());
        let s = tape.softmax(xi);
        for l in 0..7 {
            let sum: f64 = (0..5).map(|c| tape.value(s).get(c, l)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for c in 0..5 {
                assert!(tape.value(s).get(c, l) > 0.0);
            }
        }
        // Raising one logit strictly raises its probability.
        let mut bumped = x.clone();
        bumped.set(2, 3, x.get(2, 3) + 0.5);
        let mut tape2 = Tape::new();
        let xb = tape2.constant(bumped);
        let s2 = tape2.softmax(xb);
        assert!(tape2.value(s2).get(2, 3) > tape.value(s).get(2, 3));
    }

    #[test]
    fn power_normalize_contract() {
        let mut rng = RngStream::new(5, 0);
        let x = randn(&mut rng, 6, 8);
        let mut tape = Tape::new();
        let xi = tape.constant(x);
        let y = tape.power_normalize(xi, 8, 3.0).unwrap();
        let yv = tape.value(y);
        let msq = yv.sum_sq() / (3.0 * 8.0);
        assert!((msq - 9.0).abs() < 1e-9, "msq {msq}");
    }

    #[test]
    fn power_normalize_scale_invariance() {
        let mut rng = RngStream::new(6, 0);
        let x = randn(&mut rng, 4, 4);
        let doubled = Tensor2::from_vec(4, 4, x.data().iter().map(|v| 2.0 * v).collect());
        let run = |input: Tensor2| {
            let mut tape = Tape::new();
            let xi = tape.constant(input);
            let y = tape.power_normalize(xi, 4, 1.0).unwrap();
            tape.value(y).clone()
        };
        let a = run(x);
        let b = run(doubled);
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn power_normalize_all_ones_unit_target_unchanged() {
        // All-(1+0j) input: mean complex magnitude already 1.
        let x = Tensor2::from_fn(4, 3, |c, _| if c < 2 { 1.0 } else { 0.0 });
        let mut tape = Tape::new();
        let xi = tape.constant(x.clone());
        let y = tape.power_normalize(xi, 3, 1.0).unwrap();
        for (u, v) in tape.value(y).data().iter().zip(x.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn power_normalize_zero_input_rejected() {
        let mut tape = Tape::new();
        let xi = tape.constant(Tensor2::zeros(4, 2));
        assert_eq!(
            tape.power_normalize(xi, 2, 1.0),
            Err(AutonetError::ZeroInput)
        );
    }

    #[test]
    fn batchnorm_train_normalizes_per_channel() {
        let mut rng = RngStream::new(7, 0);
        let x = randn(&mut rng, 3, 64);
        let mut tape = Tape::new();
        let xi = tape.constant(x);
        let gamma = tape.leaf(Tensor2::from_vec(3, 1, vec![1.0; 3]));
        let beta = tape.leaf(Tensor2::zeros(3, 1));
        let y = tape
            .batchnorm(xi, gamma, beta, &[0.0; 3], &[1.0; 3], Mode::Train)
            .unwrap();
        let yv = tape.value(y);
        for c in 0..3 {
            let row = yv.row(c);
            let m = row.iter().sum::<f64>() / 64.0;
            let v = row.iter().map(|z| (z - m) * (z - m)).sum::<f64>() / 64.0;
            assert!(m.abs() < 1e-6, "mean {m}");
            assert!((v - 1.0).abs() < 1e-3, "var {v}");
        }
    }

    #[test]
    fn batchnorm_train_constant_input_gives_shift() {
        let x = Tensor2::from_vec(2, 4, vec![3.0; 8]);
        let mut tape = Tape::new();
        let xi = tape.constant(x);
        let gamma = tape.leaf(Tensor2::from_vec(2, 1, vec![2.0, 2.0]));
        let beta = tape.leaf(Tensor2::from_vec(2, 1, vec![0.7, -0.3]));
        let y = tape
            .batchnorm(xi, gamma, beta, &[0.0; 2], &[1.0; 2], Mode::Train)
            .unwrap();
        let yv = tape.value(y);
        for l in 0..4 {
            assert!((yv.get(0, l) - 0.7).abs() < 1e-9);
            assert!((yv.get(1, l) + 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn batchnorm_eval_identity_stats_is_identity_within_eps() {
        let mut rng = RngStream::new(8, 0);
        let x = randn(&mut rng, 2, 5);
        let mut tape = Tape::new();
        let xi = tape.constant(x.clone());
        let gamma = tape.leaf(Tensor2::from_vec(2, 1, vec![1.0; 2]));
        let beta = tape.leaf(Tensor2::zeros(2, 1));
        let y = tape
            .batchnorm(xi, gamma, beta, &[0.0; 2], &[1.0; 2], Mode::Eval)
            .unwrap();
        for (u, v) in tape.value(y).data().iter().zip(x.data()) {
            assert!((u - v).abs() < 1e-5);
        }
    }

    #[test]
    fn batchnorm_train_single_sample_rejected() {
        let mut tape = Tape::new();
        let xi = tape.constant(Tensor2::zeros(2, 1));
        let gamma = tape.leaf(Tensor2::from_vec(2, 1, vec![1.0; 2]));
        let beta = tape.leaf(Tensor2::zeros(2, 1));
        assert_eq!(
            tape.batchnorm(xi, gamma, beta, &[0.0; 2], &[1.0; 2], Mode::Train),
            Err(AutonetError::InsufficientBatch)
        );
    }

    #[test]
    fn bce_of_exact_prediction_is_tiny() {
        let target = Tensor2::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let mut tape = Tape::new();
        let p = tape.constant(target.clone());
        let loss = tape.bce_loss(p, &target).unwrap();
        assert!(tape.value(loss).get(0, 0) <= 1e-11);
    }

    #[test]
    fn bce_uniform_prediction_closed_form() {
        // Uniform 1/M over M=4: per position -(log(1/4) + 3 log(3/4)) / 4.
        let m = 4usize;
        let target = Tensor2::from_fn(m, 3, |c, _| if c == 0 { 1.0 } else { 0.0 });
        let pred = Tensor2::from_fn(m, 3, |_, _| 0.25);
        let mut tape = Tape::new();
        let p = tape.constant(pred);
        let loss = tape.bce_loss(p, &target).unwrap();
        let want = -((0.25f64).ln() + 3.0 * (0.75f64).ln()) / 4.0;
        assert!((tape.value(loss).get(0, 0) - want).abs() < 1e-12);
    }

    #[test]
    fn bce_shape_mismatch_rejected() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor2::zeros(2, 2));
        assert_eq!(
            tape.bce_loss(p, &Tensor2::zeros(3, 2)),
            Err(AutonetError::ShapeMismatch)
        );
    }

    #[test]
    fn double_backward_exhausts_tape() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::scalar(2.0));
        let y = tape.add(x, x);
        let _ = tape.backward(y).unwrap();
        match tape.backward(y) {
            Err(AutonetError::TapeExhausted) => {}
            _ => panic!("expected TapeExhausted"),
        }
    }

    #[test]
    fn identity_composition_passes_seed_through() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::from_vec(2, 2, vec![1.0, -2.0, 0.5, 3.0]));
        let w = tape.constant(Tensor2::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let b = tape.constant(Tensor2::zeros(2, 1));
        let h = tape.dense(x, w, b).unwrap();
        let target = Tensor2::from_vec(2, 2, vec![0.9, 0.1, 0.1, 0.9]);
        let loss = tape.bce_loss(h, &target).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(x).is_some());
    }

    #[test]
    fn dense_gradient_matches_central_differences() {
        let mut rng = RngStream::new(11, 0);
        let x0 = randn(&mut rng, 3, 2);
        let w0 = randn(&mut rng, 2, 3);
        let b0 = randn(&mut rng, 2, 1);
        let target = Tensor2::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);

        let run = |w: &Tensor2, b: &Tensor2, x: &Tensor2| -> f64 {
            let mut tape = Tape::new();
            let xi = tape.constant(x.clone());
            let wi = tape.leaf(w.clone());
            let bi = tape.leaf(b.clone());
            let h = tape.dense(xi, wi, bi).unwrap();
            let s = tape.softmax(h);
            let loss = tape.bce_loss(s, &target).unwrap();
            tape.value(loss).get(0, 0)
        };

        let mut tape = Tape::new();
        let xi = tape.leaf(x0.clone());
        let wi = tape.leaf(w0.clone());
        let bi = tape.leaf(b0.clone());
        let h = tape.dense(xi, wi, bi).unwrap();
        let s = tape.softmax(h);
        let loss = tape.bce_loss(s, &target).unwrap();
        let grads = tape.backward(loss).unwrap();

        let h_step = 1e-6;
        for (idx, got) in grads.expect(wi).data().iter().enumerate() {
            let mut wp = w0.clone();
            wp.data_mut()[idx] += h_step;
            let mut wm = w0.clone();
            wm.data_mut()[idx] -= h_step;
            let fd = (run(&wp, &b0, &x0) - run(&wm, &b0, &x0)) / (2.0 * h_step);
            assert!(
                (got - fd).abs() < 1e-6 * fd.abs().max(1.0),
                "dW[{idx}] ad={got} fd={fd}"
            );
        }
    }
}
