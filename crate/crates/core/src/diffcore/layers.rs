//! Per-layer primitives with hand-written forward and reverse rules, and the
//! sequential [`Chain`] that composes them into a recorded [`Tape`].

use super::mat::Mat;
use super::params::{Layout, ParamRole};
use super::real::Real;
use crate::error::{Result, XqcError};

/// Normalization layers use batch statistics in `Train` and running
/// statistics in `Eval`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

pub const NORM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    /// `y = x Wᵀ + b`, `W` stored `out × in`.
    Linear {
        id: String,
        in_dim: usize,
        out_dim: usize,
        w: usize,
        b: usize,
    },
    BatchNorm {
        id: String,
        dim: usize,
        gamma: usize,
        beta: usize,
        slot: usize,
    },
    LayerNorm {
        id: String,
        dim: usize,
        gamma: usize,
        beta: usize,
    },
    Relu,
    Tanh,
}

impl Layer {
    pub fn name(&self) -> &str {
        match self {
            Layer::Linear { id, .. } | Layer::BatchNorm { id, .. } | Layer::LayerNorm { id, .. } => id,
            Layer::Relu => "relu",
            Layer::Tanh => "tanh",
        }
    }
}

/// Running mean / biased variance of a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }
}

/// Values cached by a node during the forward pass.
#[derive(Clone, Debug)]
pub enum NodeCache<T> {
    /// Input of a linear / activation layer.
    Input(Mat<T>),
    /// Normalized activations and per-feature (BN) or per-row (LN) inverse
    /// standard deviation; batch mean and variance for BN running updates.
    Norm {
        xhat: Mat<T>,
        inv_std: Vec<T>,
        batch_mean: Vec<f64>,
        batch_var: Vec<f64>,
    },
    /// Output of tanh (its derivative only needs the output).
    Output(Mat<T>),
}

/// Topologically ordered record of one forward pass through a [`Chain`].
#[derive(Clone, Debug)]
pub struct Tape<T> {
    pub mode: Mode,
    pub input: Mat<T>,
    pub nodes: Vec<NodeCache<T>>,
    pub output: Mat<T>,
}

/// Sequential network over a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub layers: Vec<Layer>,
    pub layout: Layout,
    pub in_dim: usize,
    pub out_dim: usize,
    pub stats: Vec<RunningStats>,
    pub momentum: f64,
}

impl Chain {
    pub fn num_params(&self) -> usize {
        self.layout.len()
    }

    fn check_input<T: Real>(&self, theta: &[T], x: &Mat<T>, mode: Mode) -> Result<()> {
        if theta.len() != self.layout.len() {
            return Err(XqcError::Config(format!(
                "parameter vector has {} entries, network expects {}",
                theta.len(),
                self.layout.len()
            )));
        }
        if x.cols != self.in_dim {
            return Err(crate::error::shape_err("network input", self.in_dim, x.cols));
        }
        if x.rows == 0 {
            return Err(XqcError::Precondition("empty batch".into()));
        }
        let has_bn = self.layers.iter().any(|l| matches!(l, Layer::BatchNorm { .. }));
        if mode == Mode::Train && has_bn && x.rows < 2 {
            return Err(XqcError::Precondition(
                "batch-norm in train mode needs a batch of at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Forward pass; does not touch running statistics.
    pub fn forward<T: Real>(&self, theta: &[T], x: &Mat<T>, mode: Mode) -> Result<Tape<T>> {
        self.check_input(theta, x, mode)?;
        let mut nodes = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (out, cache) = self.layer_forward(layer, theta, h, mode);
            if !out.all_finite() {
                return Err(XqcError::NumericOverflow {
                    node: layer.name().to_string(),
                });
            }
            nodes.push(cache);
            h = out;
        }
        Ok(Tape {
            mode,
            input: x.clone(),
            nodes,
            output: h,
        })
    }

    fn layer_forward<T: Real>(&self, layer: &Layer, theta: &[T], x: Mat<T>, mode: Mode) -> (Mat<T>, NodeCache<T>) {
        match *layer {
            Layer::Linear {
                in_dim, out_dim, w, b, ..
            } => {
                let n = x.rows;
                let mut y = Mat::zeros(n, out_dim);
                T::gemm(
                    n,
                    in_dim,
                    out_dim,
                    &x.data,
                    false,
                    &theta[w..w + in_dim * out_dim],
                    true,
                    &mut y.data,
                    false,
                );
                let bias = &theta[b..b + out_dim];
                for r in 0..n {
                    for (yv, &bv) in y.row_mut(r).iter_mut().zip(bias) {
                        *yv += bv;
                    }
                }
                (y, NodeCache::Input(x))
            }
            Layer::BatchNorm {
                dim, gamma, beta, slot, ..
            } => {
                let n = x.rows;
                let (mean, var): (Vec<T>, Vec<T>) = match mode {
                    Mode::Train => {
                        let inv_n = 1.0 / n as f64;
                        let mut mean = vec![T::zero(); dim];
                        for r in 0..n {
                            for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                                *m += v;
                            }
                        }
                        mean.iter_mut().for_each(|m| *m = m.scale(inv_n));
                        let mut var = vec![T::zero(); dim];
                        for r in 0..n {
                            for ((s, &v), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                                let d = v - m;
                                *s += d * d;
                            }
                        }
                        var.iter_mut().for_each(|s| *s = s.scale(inv_n));
                        (mean, var)
                    }
                    Mode::Eval => {
                        let st = &self.stats[slot];
                        (
                            st.mean.iter().map(|&m| T::cst(m)).collect(),
                            st.var.iter().map(|&v| T::cst(v)).collect(),
                        )
                    }
                };
                let inv_std: Vec<T> = var
                    .iter()
                    .map(|&v| T::cst(1.0) / (v + T::cst(NORM_EPS)).sqrt())
                    .collect();
                let mut xhat = x;
                let mut y = Mat::zeros(n, dim);
                let g = &theta[gamma..gamma + dim];
                let bt = &theta[beta..beta + dim];
                for r in 0..n {
                    let xr = xhat.row_mut(r);
                    for j in 0..dim {
                        xr[j] = (xr[j] - mean[j]) * inv_std[j];
                    }
                    let xr = xhat.row(r);
                    let yr = y.row_mut(r);
                    for j in 0..dim {
                        yr[j] = g[j] * xr[j] + bt[j];
                    }
                }
                let cache = NodeCache::Norm {
                    xhat,
                    inv_std,
                    batch_mean: mean.iter().map(|m| m.primal()).collect(),
                    batch_var: var.iter().map(|v| v.primal()).collect(),
                };
                (y, cache)
            }
            Layer::LayerNorm { dim, gamma, beta, .. } => {
                let n = x.rows;
                let inv_d = 1.0 / dim as f64;
                let g = &theta[gamma..gamma + dim];
                let bt = &theta[beta..beta + dim];
                let mut xhat = x;
                let mut inv_std = Vec::with_capacity(n);
                let mut y = Mat::zeros(n, dim);
                for r in 0..n {
                    let xr = xhat.row_mut(r);
                    let mean = xr.iter().copied().sum::<T>().scale(inv_d);
                    let var = xr
                        .iter()
                        .map(|&v| {
                            let d = v - mean;
                            d * d
                        })
                        .sum::<T>()
                        .scale(inv_d);
                    let is = T::cst(1.0) / (var + T::cst(NORM_EPS)).sqrt();
                    xr.iter_mut().for_each(|v| *v = (*v - mean) * is);
                    inv_std.push(is);
                    let xr = xhat.row(r);
                    let yr = y.row_mut(r);
                    for j in 0..dim {
                        yr[j] = g[j] * xr[j] + bt[j];
                    }
                }
                let cache = NodeCache::Norm {
                    xhat,
                    inv_std,
                    batch_mean: Vec::new(),
                    batch_var: Vec::new(),
                };
                (y, cache)
            }
            Layer::Relu => {
                let mut y = x.clone();
                y.data.iter_mut().for_each(|v| {
                    if v.primal() <= 0.0 {
                        *v = T::zero();
                    }
                });
                (y, NodeCache::Input(x))
            }
            Layer::Tanh => {
                let mut y = x;
                y.data.iter_mut().for_each(|v| *v = v.tanh());
                (y.clone(), NodeCache::Output(y))
            }
        }
    }

    /// Reverse pass. Accumulates `∂L/∂θ` into `grad_theta` and returns `∂L/∂x`.
    pub fn backward<T: Real>(&self, theta: &[T], tape: &Tape<T>, grad_out: Mat<T>, grad_theta: &mut [T]) -> Mat<T> {
        assert_eq!(grad_theta.len(), self.layout.len());
        let mut g = grad_out;
        for (layer, cache) in self.layers.iter().zip(&tape.nodes).rev() {
            g = self.layer_backward(layer, theta, cache, g, tape.mode, grad_theta);
        }
        g
    }

    fn layer_backward<T: Real>(
        &self,
        layer: &Layer,
        theta: &[T],
        cache: &NodeCache<T>,
        gy: Mat<T>,
        mode: Mode,
        grad_theta: &mut [T],
    ) -> Mat<T> {
        match (layer, cache) {
            (
                &Layer::Linear {
                    in_dim, out_dim, w, b, ..
                },
                NodeCache::Input(x),
            ) => {
                let n = x.rows;
                T::gemm(
                    out_dim,
                    n,
                    in_dim,
                    &gy.data,
                    true,
                    &x.data,
                    false,
                    &mut grad_theta[w..w + in_dim * out_dim],
                    true,
                );
                let gb = &mut grad_theta[b..b + out_dim];
                for r in 0..n {
                    for (acc, &v) in gb.iter_mut().zip(gy.row(r)) {
                        *acc += v;
                    }
                }
                let mut gx = Mat::zeros(n, in_dim);
                T::gemm(
                    n,
                    out_dim,
                    in_dim,
                    &gy.data,
                    false,
                    &theta[w..w + in_dim * out_dim],
                    false,
                    &mut gx.data,
                    false,
                );
                gx
            }
            (&Layer::BatchNorm { dim, gamma, beta, .. }, NodeCache::Norm { xhat, inv_std, .. }) => {
                let n = gy.rows;
                let g = &theta[gamma..gamma + dim];
                let mut sum_g = vec![T::zero(); dim];
                let mut sum_gx = vec![T::zero(); dim];
                for r in 0..n {
                    let gr = gy.row(r);
                    let xr = xhat.row(r);
                    for j in 0..dim {
                        sum_g[j] += gr[j];
                        sum_gx[j] += gr[j] * xr[j];
                    }
                }
                for j in 0..dim {
                    grad_theta[gamma + j] += sum_gx[j];
                    grad_theta[beta + j] += sum_g[j];
                }
                let mut gx = Mat::zeros(n, dim);
                match mode {
                    Mode::Eval => {
                        for r in 0..n {
                            let gr = gy.row(r);
                            let out = gx.row_mut(r);
                            for j in 0..dim {
                                out[j] = gr[j] * g[j] * inv_std[j];
                            }
                        }
                    }
                    Mode::Train => {
                        // gx = γ·inv/N · (N·g − Σg − x̂·Σ(g·x̂))
                        let inv_n = 1.0 / n as f64;
                        let mean_g: Vec<T> = sum_g.iter().map(|s| s.scale(inv_n)).collect();
                        let mean_gx: Vec<T> = sum_gx.iter().map(|s| s.scale(inv_n)).collect();
                        for r in 0..n {
                            let gr = gy.row(r);
                            let xr = xhat.row(r);
                            let out = gx.row_mut(r);
                            for j in 0..dim {
                                out[j] = g[j] * inv_std[j] * (gr[j] - mean_g[j] - xr[j] * mean_gx[j]);
                            }
                        }
                    }
                }
                gx
            }
            (&Layer::LayerNorm { dim, gamma, beta, .. }, NodeCache::Norm { xhat, inv_std, .. }) => {
                let n = gy.rows;
                let g = &theta[gamma..gamma + dim];
                let inv_d = 1.0 / dim as f64;
                let mut gx = Mat::zeros(n, dim);
                for r in 0..n {
                    let gr = gy.row(r);
                    let xr = xhat.row(r);
                    let mut gxh = vec![T::zero(); dim];
                    let mut s = T::zero();
                    let mut sx = T::zero();
                    for j in 0..dim {
                        grad_theta[gamma + j] += gr[j] * xr[j];
                        grad_theta[beta + j] += gr[j];
                        gxh[j] = gr[j] * g[j];
                        s += gxh[j];
                        sx += gxh[j] * xr[j];
                    }
                    let ms = s.scale(inv_d);
                    let msx = sx.scale(inv_d);
                    let out = gx.row_mut(r);
                    for j in 0..dim {
                        out[j] = inv_std[r] * (gxh[j] - ms - xr[j] * msx);
                    }
                }
                gx
            }
            (Layer::Relu, NodeCache::Input(x)) => {
                let mut gx = gy;
                for (gv, xv) in gx.data.iter_mut().zip(&x.data) {
                    if xv.primal() <= 0.0 {
                        *gv = T::zero();
                    }
                }
                gx
            }
            (Layer::Tanh, NodeCache::Output(y)) => {
                let mut gx = gy;
                for (gv, &yv) in gx.data.iter_mut().zip(&y.data) {
                    *gv *= T::cst(1.0) - yv * yv;
                }
                gx
            }
            _ => unreachable!("tape node does not match layer {}", layer.name()),
        }
    }

    /// Fold the batch statistics recorded on a train-mode tape into the
    /// running statistics.
    pub fn update_running_stats<T: Real>(&mut self, tape: &Tape<T>) {
        if tape.mode != Mode::Train {
            return;
        }
        let m = self.momentum;
        for (layer, cache) in self.layers.iter().zip(&tape.nodes) {
            if let (
                Layer::BatchNorm { slot, .. },
                NodeCache::Norm {
                    batch_mean, batch_var, ..
                },
            ) = (layer, cache)
            {
                let st = &mut self.stats[*slot];
                for (rm, &bm) in st.mean.iter_mut().zip(batch_mean) {
                    *rm = (1.0 - m) * *rm + m * bm;
                }
                for (rv, &bv) in st.var.iter_mut().zip(batch_var) {
                    *rv = (1.0 - m) * *rv + m * bv;
                }
            }
        }
    }

    /// Re-run the forward pass from the tape's recorded input.
    pub fn replay<T: Real>(&self, theta: &[T], tape: &Tape<T>) -> Result<Mat<T>> {
        Ok(self.forward(theta, &tape.input, tape.mode)?.output)
    }
}

/// Incremental construction of a [`Chain`] and its layout.
pub struct ChainBuilder {
    layers: Vec<Layer>,
    layout: super::params::LayoutBuilder,
    in_dim: usize,
    cur: usize,
    slots: usize,
    momentum: f64,
}

impl ChainBuilder {
    pub fn new(in_dim: usize, momentum: f64) -> Self {
        Self {
            layers: Vec::new(),
            layout: Default::default(),
            in_dim,
            cur: in_dim,
            slots: 0,
            momentum,
        }
    }

    pub fn linear(&mut self, id: &str, out_dim: usize, projected: bool) -> &mut Self {
        let in_dim = self.cur;
        let w = self.layout.push(id, ParamRole::Weight, out_dim, in_dim, projected);
        let b = self.layout.push(id, ParamRole::Bias, 1, out_dim, false);
        self.layers.push(Layer::Linear {
            id: id.to_string(),
            in_dim,
            out_dim,
            w,
            b,
        });
        self.cur = out_dim;
        self
    }

    pub fn batch_norm(&mut self, id: &str) -> &mut Self {
        let dim = self.cur;
        let gamma = self.layout.push(id, ParamRole::Scale, 1, dim, false);
        let beta = self.layout.push(id, ParamRole::Shift, 1, dim, false);
        self.layers.push(Layer::BatchNorm {
            id: id.to_string(),
            dim,
            gamma,
            beta,
            slot: self.slots,
        });
        self.slots += 1;
        self
    }

    pub fn layer_norm(&mut self, id: &str) -> &mut Self {
        let dim = self.cur;
        let gamma = self.layout.push(id, ParamRole::Scale, 1, dim, false);
        let beta = self.layout.push(id, ParamRole::Shift, 1, dim, false);
        self.layers.push(Layer::LayerNorm {
            id: id.to_string(),
            dim,
            gamma,
            beta,
        });
        self
    }

    pub fn relu(&mut self) -> &mut Self {
        self.layers.push(Layer::Relu);
        self
    }

    pub fn tanh(&mut self) -> &mut Self {
        self.layers.push(Layer::Tanh);
        self
    }

    pub fn build(self) -> Chain {
        let stats = self
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::BatchNorm { dim, .. } => Some(RunningStats::new(*dim)),
                _ => None,
            })
            .collect();
        Chain {
            layers: self.layers,
            layout: self.layout.finish(),
            in_dim: self.in_dim,
            out_dim: self.cur,
            stats,
            momentum: self.momentum,
        }
    }
}
