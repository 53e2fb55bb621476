//! Define-by-run reverse-mode differentiation over a recorded tape.
//!
//! Every forward operation appends one node; `backward` walks the nodes in
//! exact reverse recording order and accumulates gradients additively into
//! every node whose value transitively depends on a gradient-requiring leaf.
//! A tape is rebuilt for each forward pass.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul { a: usize, b: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Hadamard { a: usize, b: usize },
    Relu { a: usize },
    SoftmaxRows { a: usize },
    LayerNormRows { x: usize, gain: usize, bias: usize, eps: f64 },
    CausalConv { x: usize, w: usize, b: usize, dilation: usize },
    CircularConv { x: usize, w: usize, b: usize, zero_pad: bool },
    ConcatCols { a: usize, b: usize },
    Transpose { a: usize },
    AddRowBias { x: usize, b: usize },
    Scale { a: usize, c: f64 },
    Square { a: usize },
    MeanAll { a: usize },
    SumAll { a: usize },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Recorded computation. Confined to one thread for a forward/backward pair.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` target w.r.t. `v`, if one was produced.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let n = &self.nodes[v.0];
        n.grad.as_ref().map(|g| Tensor {
            shape: n.value.shape.clone(),
            data: g.clone(),
        })
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn check_matrix(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let t = self.value(v);
        if t.shape.len() != 2 {
            return Err(Error::Dimension {
                op,
                lhs: t.shape.clone(),
                rhs: vec![],
            });
        }
        Ok((t.shape[0], t.shape[1]))
    }

    // ── forward ops ──────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = self.check_matrix(a, "matmul")?;
        let (q2, r) = self.check_matrix(b, "matmul")?;
        if q != q2 {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: vec![p, q],
                rhs: vec![q2, r],
            });
        }
        let av = &self.nodes[a.0].value.data;
        let bv = &self.nodes[b.0].value.data;
        let mut out = vec![0.0; p * r];
        for i in 0..p {
            for k in 0..q {
                let aik = av[i * q + k];
                if aik == 0.0 {
                    continue;
                }
                let brow = &bv[k * r..(k + 1) * r];
                let orow = &mut out[i * r..(i + 1) * r];
                for j in 0..r {
                    orow[j] += aik * brow[j];
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor { shape: vec![p, r], data: out },
            rg,
            Op::Matmul { a: a.0, b: b.0 },
        ))
    }

    fn elementwise_pair(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        let sa = &self.value(a).shape;
        let sb = &self.value(b).shape;
        if sa != sb {
            return Err(Error::Dimension {
                op,
                lhs: sa.clone(),
                rhs: sb.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise_pair(a, b, "add")?;
        let data: Vec<f64> = self.value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape.clone();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape, data }, rg, Op::Add { a: a.0, b: b.0 }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise_pair(a, b, "sub")?;
        let data: Vec<f64> = self.value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.value(a).shape.clone();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape, data }, rg, Op::Sub { a: a.0, b: b.0 }))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise_pair(a, b, "hadamard")?;
        let data: Vec<f64> = self.value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.value(a).shape.clone();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape, data }, rg, Op::Hadamard { a: a.0, b: b.0 }))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data: Vec<f64> = self.value(a).data.iter().map(|&x| x.max(0.0)).collect();
        let shape = self.value(a).shape.clone();
        let rg = self.rg(a);
        self.push(Tensor { shape, data }, rg, Op::Relu { a: a.0 })
    }

    /// Row-wise softmax with row-max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (p, q) = self.check_matrix(a, "softmax_rows")?;
        let av = &self.nodes[a.0].value.data;
        let mut out = vec![0.0; p * q];
        for i in 0..p {
            let row = &av[i * q..(i + 1) * q];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for j in 0..q {
                let e = (row[j] - m).exp();
                out[i * q + j] = e;
                s += e;
            }
            for j in 0..q {
                out[i * q + j] /= s;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor { shape: vec![p, q], data: out },
            rg,
            Op::SoftmaxRows { a: a.0 },
        ))
    }

    /// Per-row standardization (population variance) with learned affine.
    pub fn layer_norm_rows(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (p, q) = self.check_matrix(x, "layer_norm_rows")?;
        for v in [gain, bias] {
            if self.value(v).shape != vec![q] {
                return Err(Error::Dimension {
                    op: "layer_norm_rows",
                    lhs: vec![q],
                    rhs: self.value(v).shape.clone(),
                });
            }
        }
        if eps <= 0.0 {
            return Err(Error::config("layer_norm_rows requires eps > 0"));
        }
        let xv = &self.nodes[x.0].value.data;
        let g = &self.nodes[gain.0].value.data;
        let b = &self.nodes[bias.0].value.data;
        let mut out = vec![0.0; p * q];
        for i in 0..p {
            let row = &xv[i * q..(i + 1) * q];
            let mean = row.iter().sum::<f64>() / q as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / q as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..q {
                out[i * q + j] = (row[j] - mean) * inv * g[j] + b[j];
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            Tensor { shape: vec![p, q], data: out },
            rg,
            Op::LayerNormRows { x: x.0, gain: gain.0, bias: bias.0, eps },
        ))
    }

    /// Causal dilated 1-d convolution: output[c,t] depends only on x[:, <=t].
    /// Input is left-padded with (k-1)*dilation zeros so length is preserved.
    pub fn causal_dilated_conv1d(&mut self, x: Var, w: Var, b: Var, dilation: usize) -> Result<Var> {
        let (c_in, l) = self.check_matrix(x, "causal_dilated_conv1d")?;
        let ws = self.value(w).shape.clone();
        if ws.len() != 3 || ws[1] != c_in {
            return Err(Error::Dimension {
                op: "causal_dilated_conv1d",
                lhs: vec![c_in, l],
                rhs: ws,
            });
        }
        let (c_out, k) = (ws[0], ws[2]);
        if self.value(b).shape != vec![c_out] {
            return Err(Error::Dimension {
                op: "causal_dilated_conv1d",
                lhs: vec![c_out],
                rhs: self.value(b).shape.clone(),
            });
        }
        if k < 1 || dilation < 1 {
            return Err(Error::config("conv kernel and dilation must be >= 1"));
        }
        let xv = &self.nodes[x.0].value.data;
        let wv = &self.nodes[w.0].value.data;
        let bv = &self.nodes[b.0].value.data;
        let mut out = vec![0.0; c_out * l];
        for c in 0..c_out {
            for t in 0..l {
                let mut acc = bv[c];
                for i in 0..c_in {
                    for j in 0..k {
                        // tap j looks back (k-1-j)*dilation steps
                        let back = (k - 1 - j) * dilation;
                        if back <= t {
                            acc += wv[(c * c_in + i) * k + j] * xv[i * l + (t - back)];
                        }
                    }
                }
                out[c * l + t] = acc;
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(
            Tensor { shape: vec![c_out, l], data: out },
            rg,
            Op::CausalConv { x: x.0, w: w.0, b: b.0, dilation },
        ))
    }

    /// 1-d convolution with wrap-around padding: the first k-1 positions are
    /// concatenated onto the end before a valid convolution, so length is
    /// preserved. `zero_pad` swaps the wrap-around for trailing zeros.
    pub fn circular_conv1d(&mut self, x: Var, w: Var, b: Var, zero_pad: bool) -> Result<Var> {
        let (c_in, l) = self.check_matrix(x, "circular_conv1d")?;
        let ws = self.value(w).shape.clone();
        if ws.len() != 3 || ws[1] != c_in {
            return Err(Error::Dimension {
                op: "circular_conv1d",
                lhs: vec![c_in, l],
                rhs: ws,
            });
        }
        let (c_out, k) = (ws[0], ws[2]);
        if k > l {
            return Err(Error::config(format!(
                "circular_conv1d kernel width {k} exceeds sequence axis length {l}; \
                 use kernel width 1 for univariate data"
            )));
        }
        if self.value(b).shape != vec![c_out] {
            return Err(Error::Dimension {
                op: "circular_conv1d",
                lhs: vec![c_out],
                rhs: self.value(b).shape.clone(),
            });
        }
        let xv = &self.nodes[x.0].value.data;
        let wv = &self.nodes[w.0].value.data;
        let bv = &self.nodes[b.0].value.data;
        let mut out = vec![0.0; c_out * l];
        for c in 0..c_out {
            for t in 0..l {
                let mut acc = bv[c];
                for i in 0..c_in {
                    for j in 0..k {
                        let pos = t + j;
                        let xval = if pos < l {
                            xv[i * l + pos]
                        } else if zero_pad {
                            0.0
                        } else {
                            xv[i * l + (pos - l)]
                        };
                        acc += wv[(c * c_in + i) * k + j] * xval;
                    }
                }
                out[c * l + t] = acc;
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(
            Tensor { shape: vec![c_out, l], data: out },
            rg,
            Op::CircularConv { x: x.0, w: w.0, b: b.0, zero_pad },
        ))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q1) = self.check_matrix(a, "concat_cols")?;
        let (p2, q2) = self.check_matrix(b, "concat_cols")?;
        if p != p2 {
            return Err(Error::Dimension {
                op: "concat_cols",
                lhs: vec![p, q1],
                rhs: vec![p2, q2],
            });
        }
        let av = &self.nodes[a.0].value.data;
        let bv = &self.nodes[b.0].value.data;
        let mut out = Vec::with_capacity(p * (q1 + q2));
        for i in 0..p {
            out.extend_from_slice(&av[i * q1..(i + 1) * q1]);
            out.extend_from_slice(&bv[i * q2..(i + 1) * q2]);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor { shape: vec![p, q1 + q2], data: out },
            rg,
            Op::ConcatCols { a: a.0, b: b.0 },
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check_matrix(a, "transpose")?;
        let t = self.value(a).transposed();
        let rg = self.rg(a);
        Ok(self.push(t, rg, Op::Transpose { a: a.0 }))
    }

    /// x[p x q] + bias[q] broadcast over rows. The one sanctioned broadcast.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (p, q) = self.check_matrix(x, "add_row_bias")?;
        if self.value(b).shape != vec![q] {
            return Err(Error::Dimension {
                op: "add_row_bias",
                lhs: vec![p, q],
                rhs: self.value(b).shape.clone(),
            });
        }
        let xv = &self.nodes[x.0].value.data;
        let bv = &self.nodes[b.0].value.data;
        let mut out = vec![0.0; p * q];
        for i in 0..p {
            for j in 0..q {
                out[i * q + j] = xv[i * q + j] + bv[j];
            }
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(
            Tensor { shape: vec![p, q], data: out },
            rg,
            Op::AddRowBias { x: x.0, b: b.0 },
        ))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let data: Vec<f64> = self.value(a).data.iter().map(|x| x * c).collect();
        let shape = self.value(a).shape.clone();
        let rg = self.rg(a);
        self.push(Tensor { shape, data }, rg, Op::Scale { a: a.0, c })
    }

    pub fn square(&mut self, a: Var) -> Var {
        let data: Vec<f64> = self.value(a).data.iter().map(|x| x * x).collect();
        let shape = self.value(a).shape.clone();
        let rg = self.rg(a);
        self.push(Tensor { shape, data }, rg, Op::Square { a: a.0 })
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f64;
        let s = self.value(a).data.iter().sum::<f64>() / n;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), rg, Op::MeanAll { a: a.0 })
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum::<f64>();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), rg, Op::SumAll { a: a.0 })
    }

    /// Row-wise affine x·W + b.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row_bias(xw, b)
    }

    /// Mean squared error between equally shaped tensors, as a scalar node.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let d = self.sub(pred, target)?;
        let sq = self.square(d);
        Ok(self.mean_all(sq))
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Gradients accumulate; call
    /// `zero_grads` (or rebuild the tape) between steps.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape
            )));
        }
        self.accumulate(loss.0, vec![1.0]);
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[id].grad.clone() else { continue };
            self.propagate(id, &g);
        }
        Ok(())
    }

    fn accumulate(&mut self, id: usize, contrib: Vec<f64>) {
        let n = &mut self.nodes[id];
        if !n.requires_grad {
            return;
        }
        match &mut n.grad {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(&contrib) {
                    *gi += ci;
                }
            }
            None => n.grad = Some(contrib),
        }
    }

    fn propagate(&mut self, id: usize, g: &[f64]) {
        // Destructure the op up front; values are read immutably, then
        // contributions are pushed into input grads.
        enum Pending {
            One(usize, Vec<f64>),
            Two((usize, Vec<f64>), (usize, Vec<f64>)),
            Three((usize, Vec<f64>), (usize, Vec<f64>), (usize, Vec<f64>)),
            None,
        }
        let pending = match &self.nodes[id].op {
            Op::Leaf => Pending::None,
            Op::Matmul { a, b } => {
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                let (p, q) = (av.shape[0], av.shape[1]);
                let r = bv.shape[1];
                // dA = dC · Bᵀ
                let mut da = vec![0.0; p * q];
                for i in 0..p {
                    for k in 0..q {
                        let mut acc = 0.0;
                        for j in 0..r {
                            acc += g[i * r + j] * bv.data[k * r + j];
                        }
                        da[i * q + k] = acc;
                    }
                }
                // dB = Aᵀ · dC
                let mut db = vec![0.0; q * r];
                for k in 0..q {
                    for j in 0..r {
                        let mut acc = 0.0;
                        for i in 0..p {
                            acc += av.data[i * q + k] * g[i * r + j];
                        }
                        db[k * r + j] = acc;
                    }
                }
                Pending::Two((*a, da), (*b, db))
            }
            Op::Add { a, b } => Pending::Two((*a, g.to_vec()), (*b, g.to_vec())),
            Op::Sub { a, b } => {
                Pending::Two((*a, g.to_vec()), (*b, g.iter().map(|v| -v).collect()))
            }
            Op::Hadamard { a, b } => {
                let av = &self.nodes[*a].value.data;
                let bv = &self.nodes[*b].value.data;
                let da: Vec<f64> = g.iter().zip(bv).map(|(gi, bi)| gi * bi).collect();
                let db: Vec<f64> = g.iter().zip(av).map(|(gi, ai)| gi * ai).collect();
                Pending::Two((*a, da), (*b, db))
            }
            Op::Relu { a } => {
                let av = &self.nodes[*a].value.data;
                let da: Vec<f64> = g
                    .iter()
                    .zip(av)
                    .map(|(gi, &ai)| if ai > 0.0 { *gi } else { 0.0 })
                    .collect();
                Pending::One(*a, da)
            }
            Op::SoftmaxRows { a } => {
                let y = &self.nodes[id].value;
                let (p, q) = (y.shape[0], y.shape[1]);
                let mut da = vec![0.0; p * q];
                for i in 0..p {
                    let yr = &y.data[i * q..(i + 1) * q];
                    let gr = &g[i * q..(i + 1) * q];
                    let dot: f64 = yr.iter().zip(gr).map(|(yi, gi)| yi * gi).sum();
                    for j in 0..q {
                        da[i * q + j] = yr[j] * (gr[j] - dot);
                    }
                }
                Pending::One(*a, da)
            }
            Op::LayerNormRows { x, gain, bias, eps } => {
                let xv = &self.nodes[*x].value;
                let gv = &self.nodes[*gain].value.data;
                let (p, q) = (xv.shape[0], xv.shape[1]);
                let qf = q as f64;
                let mut dx = vec![0.0; p * q];
                let mut dg = vec![0.0; q];
                let mut db = vec![0.0; q];
                for i in 0..p {
                    let row = &xv.data[i * q..(i + 1) * q];
                    let gr = &g[i * q..(i + 1) * q];
                    let mean = row.iter().sum::<f64>() / qf;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / qf;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                    let dxhat: Vec<f64> = gr.iter().zip(gv).map(|(gi, gj)| gi * gj).collect();
                    let sum_dxhat: f64 = dxhat.iter().sum();
                    let sum_dxhat_xhat: f64 =
                        dxhat.iter().zip(&xhat).map(|(d, h)| d * h).sum();
                    for j in 0..q {
                        dx[i * q + j] = inv / qf
                            * (qf * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                        dg[j] += gr[j] * xhat[j];
                        db[j] += gr[j];
                    }
                }
                Pending::Three((*x, dx), (*gain, dg), (*bias, db))
            }
            Op::CausalConv { x, w, b, dilation } => {
                let xv = &self.nodes[*x].value;
                let wv = &self.nodes[*w].value;
                let (c_in, l) = (xv.shape[0], xv.shape[1]);
                let (c_out, k) = (wv.shape[0], wv.shape[2]);
                let mut dx = vec![0.0; c_in * l];
                let mut dw = vec![0.0; c_out * c_in * k];
                let mut db = vec![0.0; c_out];
                for c in 0..c_out {
                    for t in 0..l {
                        let go = g[c * l + t];
                        db[c] += go;
                        for i in 0..c_in {
                            for j in 0..k {
                                let back = (k - 1 - j) * dilation;
                                if back <= t {
                                    let xi = i * l + (t - back);
                                    dw[(c * c_in + i) * k + j] += go * xv.data[xi];
                                    dx[xi] += go * wv.data[(c * c_in + i) * k + j];
                                }
                            }
                        }
                    }
                }
                Pending::Three((*x, dx), (*w, dw), (*b, db))
            }
            Op::CircularConv { x, w, b, zero_pad } => {
                let xv = &self.nodes[*x].value;
                let wv = &self.nodes[*w].value;
                let (c_in, l) = (xv.shape[0], xv.shape[1]);
                let (c_out, k) = (wv.shape[0], wv.shape[2]);
                let mut dx = vec![0.0; c_in * l];
                let mut dw = vec![0.0; c_out * c_in * k];
                let mut db = vec![0.0; c_out];
                for c in 0..c_out {
                    for t in 0..l {
                        let go = g[c * l + t];
                        db[c] += go;
                        for i in 0..c_in {
                            for j in 0..k {
                                let pos = t + j;
                                let xi = if pos < l {
                                    Some(i * l + pos)
                                } else if *zero_pad {
                                    None
                                } else {
                                    Some(i * l + (pos - l))
                                };
                                if let Some(xi) = xi {
                                    dw[(c * c_in + i) * k + j] += go * xv.data[xi];
                                    dx[xi] += go * wv.data[(c * c_in + i) * k + j];
                                }
                            }
                        }
                    }
                }
                Pending::Three((*x, dx), (*w, dw), (*b, db))
            }
            Op::ConcatCols { a, b } => {
                let q1 = self.nodes[*a].value.shape[1];
                let q2 = self.nodes[*b].value.shape[1];
                let p = self.nodes[*a].value.shape[0];
                let mut da = vec![0.0; p * q1];
                let mut db = vec![0.0; p * q2];
                for i in 0..p {
                    da[i * q1..(i + 1) * q1]
                        .copy_from_slice(&g[i * (q1 + q2)..i * (q1 + q2) + q1]);
                    db[i * q2..(i + 1) * q2]
                        .copy_from_slice(&g[i * (q1 + q2) + q1..(i + 1) * (q1 + q2)]);
                }
                Pending::Two((*a, da), (*b, db))
            }
            Op::Transpose { a } => {
                let s = &self.nodes[id].value.shape;
                let (p, q) = (s[0], s[1]); // output shape
                let mut da = vec![0.0; p * q];
                for i in 0..p {
                    for j in 0..q {
                        da[j * p + i] = g[i * q + j];
                    }
                }
                Pending::One(*a, da)
            }
            Op::AddRowBias { x, b } => {
                let s = &self.nodes[*x].value.shape;
                let (p, q) = (s[0], s[1]);
                let mut db = vec![0.0; q];
                for i in 0..p {
                    for j in 0..q {
                        db[j] += g[i * q + j];
                    }
                }
                Pending::Two((*x, g.to_vec()), (*b, db))
            }
            Op::Scale { a, c } => {
                let c = *c;
                Pending::One(*a, g.iter().map(|v| v * c).collect())
            }
            Op::Square { a } => {
                let av = &self.nodes[*a].value.data;
                Pending::One(*a, g.iter().zip(av).map(|(gi, ai)| 2.0 * ai * gi).collect())
            }
            Op::MeanAll { a } => {
                let n = self.nodes[*a].value.numel();
                Pending::One(*a, vec![g[0] / n as f64; n])
            }
            Op::SumAll { a } => {
                let n = self.nodes[*a].value.numel();
                Pending::One(*a, vec![g[0]; n])
            }
        };
        match pending {
            Pending::None => {}
            Pending::One(a, da) => self.accumulate(a, da),
            Pending::Two((a, da), (b, db)) => {
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Pending::Three((a, da), (b, db), (c, dc)) => {
                self.accumulate(a, da);
                self.accumulate(b, db);
                self.accumulate(c, dc);
            }
        }
    }
}
