use std::rc::Rc;

use super::kernels::{self, ConvGeom, RingPlan};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

pub const LAYERNORM_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Square(Var),
    Sum(Var),
    MatMul(Var, Var),
    Transpose(Var),
    SoftmaxRows(Var),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Depthwise {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Fft2(Var),
    Ifft2Real(Var),
    Magnitude(Var),
    PhaseModulate {
        amp: Var,
        z: Var,
    },
    PixelUnshuffle(Var),
    PixelShuffle(Var),
    ChannelMean(Var),
    Center(Var),
    RingGather(Var, Rc<RingPlan>),
    RingScatter(Var, Rc<RingPlan>),
    Concat(Var, Var),
    SliceLast {
        x: Var,
        start: usize,
    },
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of `v`; all zeros when the output does not depend on it.
    pub fn get(&self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::from_parts(shape, g.clone()),
            None => Tensor::zeros(&shape),
        }
    }
}

/// A tape of tensor operations recorded in evaluation order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    plans: Vec<Rc<RingPlan>>,
}

fn shape_err<T>(op: &str, detail: String) -> Result<T> {
    Err(Error::Shape(format!("{op}: {detail}")))
}

fn dims3(shape: &[usize], op: &str) -> Result<(usize, usize, usize)> {
    match *shape {
        [h, w, c] => Ok((h, w, c)),
        _ => shape_err(op, format!("expected [H,W,C], got {shape:?}")),
    }
}

fn dims_complex(shape: &[usize], op: &str) -> Result<(usize, usize, usize)> {
    match *shape {
        [h, w, c, 2] => Ok((h, w, c)),
        _ => shape_err(op, format!("expected [H,W,C,2], got {shape:?}")),
    }
}

fn add_into(acc: &mut Option<Vec<f64>>, g: &[f64]) {
    match acc {
        Some(a) => {
            for (x, y) in a.iter_mut().zip(g) {
                *x += y;
            }
        }
        None => *acc = Some(g.to_vec()),
    }
}

/// Reduces a full-shape gradient onto a broadcast operand.
fn reduce_to(g: &[f64], len: usize) -> Vec<f64> {
    if len == g.len() {
        g.to_vec()
    } else {
        vec![g.iter().sum()]
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn broadcast(&self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (la, lb) = (self.value(a).len(), self.value(b).len());
        let (da, db) = (self.data(a), self.data(b));
        let (shape, data) = if self.shape(a) == self.shape(b) {
            (self.shape(a).to_vec(), da.iter().zip(db).map(|(x, y)| f(*x, *y)).collect())
        } else if lb == 1 {
            (self.shape(a).to_vec(), da.iter().map(|x| f(*x, db[0])).collect())
        } else if la == 1 {
            (self.shape(b).to_vec(), db.iter().map(|y| f(da[0], *y)).collect())
        } else {
            return shape_err(name, format!("{:?} vs {:?}", self.shape(a), self.shape(b)));
        };
        Ok(Tensor::from_parts(shape, data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.broadcast(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.broadcast(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.broadcast(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let v = self.value(a);
        let t = Tensor::from_parts(v.shape().to_vec(), v.data().iter().map(|x| f(*x)).collect());
        self.push(t, op, &[a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, Op::Square(a), |x| x * x)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    fn dims2(&self, a: Var, op: &str) -> Result<(usize, usize)> {
        match *self.shape(a) {
            [m, n] => Ok((m, n)),
            ref s => shape_err(op, format!("expected a matrix, got {s:?}")),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return shape_err("matmul", format!("inner extents {k} and {k2}"));
        }
        let mut c = vec![0.0; m * n];
        kernels::matmul_acc(self.data(a), self.data(b), &mut c, m, k, n);
        Ok(self.push(Tensor::from_parts(vec![m, n], c), Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims2(a, "transpose")?;
        let d = self.data(a);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = d[i * n + j];
            }
        }
        Ok(self.push(Tensor::from_parts(vec![n, m], out), Op::Transpose(a), &[a]))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims2(a, "softmax_rows")?;
        let mut out = self.data(a).to_vec();
        for row in out.chunks_exact_mut(n) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::SoftmaxRows(a), &[a]))
    }

    /// Correlation of `[H,W,Cin]` with a `[k,k,Cin,Cout]` kernel, `k ∈ {1,3}`,
    /// stride 1 or 2, reflect padding.
    pub fn conv(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        let (h, wd, cin) = dims3(self.shape(x), "conv")?;
        let geom = match *self.shape(w) {
            [k, k2, ci, cout] if k == k2 && ci == cin && (k == 1 || k == 3) => ConvGeom {
                h,
                w: wd,
                cin,
                cout,
                k,
                stride,
            },
            ref s => return shape_err("conv", format!("kernel {s:?} for input channels {cin}")),
        };
        if !(stride == 1 || stride == 2) || (stride == 2 && (h % 2 != 0 || wd % 2 != 0)) {
            return shape_err("conv", format!("stride {stride} on {h}x{wd}"));
        }
        if let Some(b) = b {
            if self.shape(b) != [geom.cout] {
                return shape_err("conv", format!("bias {:?}", self.shape(b)));
            }
        }
        let out = kernels::conv_forward(
            self.data(x),
            self.data(w),
            b.map(|b| self.data(b)),
            geom,
        );
        let t = Tensor::from_parts(vec![geom.out_h(), geom.out_w(), geom.cout], out);
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(t, Op::Conv { x, w, b, geom }, &inputs))
    }

    /// Per-channel 3×3 correlation with a `[3,3,C]` kernel.
    pub fn depthwise(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (h, wd, c) = dims3(self.shape(x), "depthwise")?;
        if self.shape(w) != [3, 3, c] || b.is_some_and(|b| self.shape(b) != [c]) {
            return shape_err("depthwise", format!("kernel {:?} for {c} channels", self.shape(w)));
        }
        let out = kernels::depthwise_forward(self.data(x), self.data(w), b.map(|b| self.data(b)), h, wd, c);
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(Tensor::from_parts(vec![h, wd, c], out), Op::Depthwise { x, w, b }, &inputs))
    }

    /// Normalizes over the last axis, then applies `γ·x̂ + β`.
    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let c = *self.shape(x).last().expect("non-empty shape");
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return shape_err("layernorm", format!("affine shape for {c} channels"));
        }
        let (g, b) = (self.data(gamma), self.data(beta));
        let d = self.data(x);
        let mut xhat = vec![0.0; d.len()];
        let mut inv_std = Vec::with_capacity(d.len() / c);
        let mut out = vec![0.0; d.len()];
        for ((row, xh), o) in d.chunks_exact(c).zip(xhat.chunks_exact_mut(c)).zip(out.chunks_exact_mut(c)) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LAYERNORM_EPS).sqrt();
            inv_std.push(inv);
            for i in 0..c {
                xh[i] = (row[i] - mean) * inv;
                o[i] = g[i] * xh[i] + b[i];
            }
        }
        let t = Tensor::from_parts(self.shape(x).to_vec(), out);
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    /// Unnormalized per-channel DFT of `[H,W,C]` into `[H,W,C,2]`.
    pub fn fft2(&mut self, x: Var) -> Result<Var> {
        let (h, w, c) = dims3(self.shape(x), "fft2")?;
        if !h.is_power_of_two() || !w.is_power_of_two() {
            return shape_err("fft2", format!("{h}x{w} is not a power-of-two plane"));
        }
        let z = kernels::fft_channels(self.data(x), h, w, c, false, false);
        let data = z.iter().flat_map(|v| [v.re, v.im]).collect();
        Ok(self.push(Tensor::from_parts(vec![h, w, c, 2], data), Op::Fft2(x), &[x]))
    }

    /// Real part of the normalized inverse DFT of `[H,W,C,2]`.
    pub fn ifft2_real(&mut self, z: Var) -> Result<Var> {
        let (h, w, c) = dims_complex(self.shape(z), "ifft2_real")?;
        if !h.is_power_of_two() || !w.is_power_of_two() {
            return shape_err("ifft2_real", format!("{h}x{w} is not a power-of-two plane"));
        }
        let scale = 1.0 / (h * w) as f64;
        let y = kernels::fft_channels(self.data(z), h, w, c, true, true);
        let data = y.iter().map(|v| v.re * scale).collect();
        Ok(self.push(Tensor::from_parts(vec![h, w, c], data), Op::Ifft2Real(z), &[z]))
    }

    /// `|z|` over a trailing (re, im) axis.
    pub fn magnitude(&mut self, z: Var) -> Result<Var> {
        let shape = self.shape(z);
        if shape.last() != Some(&2) || shape.len() < 2 {
            return shape_err("magnitude", format!("expected trailing axis 2, got {shape:?}"));
        }
        let out_shape = shape[..shape.len() - 1].to_vec();
        let data = self.data(z).chunks_exact(2).map(|p| p[0].hypot(p[1])).collect();
        Ok(self.push(Tensor::from_parts(out_shape, data), Op::Magnitude(z), &[z]))
    }

    /// `amp · z/|z|`; where `z = 0` the phase is taken as zero.
    pub fn phase_modulate(&mut self, amp: Var, z: Var) -> Result<Var> {
        let zs = self.shape(z);
        if zs.last() != Some(&2) || zs[..zs.len() - 1] != *self.shape(amp) {
            return shape_err("phase_modulate", format!("{:?} vs {zs:?}", self.shape(amp)));
        }
        let shape = zs.to_vec();
        let data = self
            .data(amp)
            .iter()
            .zip(self.data(z).chunks_exact(2))
            .flat_map(|(a, p)| {
                let r = p[0].hypot(p[1]);
                if r > 0.0 {
                    [a * p[0] / r, a * p[1] / r]
                } else {
                    [*a, 0.0]
                }
            })
            .collect();
        Ok(self.push(Tensor::from_parts(shape, data), Op::PhaseModulate { amp, z }, &[amp, z]))
    }

    /// Space-to-depth by 2: `[H,W,C] → [H/2,W/2,4C]`.
    pub fn pixel_unshuffle(&mut self, x: Var) -> Result<Var> {
        let (h, w, c) = dims3(self.shape(x), "pixel_unshuffle")?;
        if h % 2 != 0 || w % 2 != 0 {
            return shape_err("pixel_unshuffle", format!("odd plane {h}x{w}"));
        }
        let out = unshuffle(self.data(x), h, w, c);
        Ok(self.push(Tensor::from_parts(vec![h / 2, w / 2, 4 * c], out), Op::PixelUnshuffle(x), &[x]))
    }

    /// Depth-to-space by 2: `[H,W,4C] → [2H,2W,C]`.
    pub fn pixel_shuffle(&mut self, x: Var) -> Result<Var> {
        let (h, w, c4) = dims3(self.shape(x), "pixel_shuffle")?;
        if c4 % 4 != 0 {
            return shape_err("pixel_shuffle", format!("{c4} channels not divisible by 4"));
        }
        let out = shuffle(self.data(x), h, w, c4 / 4);
        Ok(self.push(Tensor::from_parts(vec![2 * h, 2 * w, c4 / 4], out), Op::PixelShuffle(x), &[x]))
    }

    /// Mean over the channel axis: `[H,W,C] → [H,W,1]`.
    pub fn channel_mean(&mut self, x: Var) -> Result<Var> {
        let (h, w, c) = dims3(self.shape(x), "channel_mean")?;
        let data = self.data(x).chunks_exact(c).map(|r| r.iter().sum::<f64>() / c as f64).collect();
        Ok(self.push(Tensor::from_parts(vec![h, w, 1], data), Op::ChannelMean(x), &[x]))
    }

    /// Quadrant swap over the two leading axes (DC to the center and back).
    pub fn center(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 || !shape[0].is_multiple_of(2) || !shape[1].is_multiple_of(2) {
            return shape_err("center", format!("needs even leading sides, got {shape:?}"));
        }
        let block = shape[2..].iter().product();
        let out = kernels::quadrant_swap(self.data(x), shape[0], shape[1], block);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Center(x), &[x]))
    }

    fn plan(&mut self, side: usize, width: usize, samples: usize) -> Rc<RingPlan> {
        if let Some(p) = self
            .plans
            .iter()
            .find(|p| p.side == side && p.width == width && p.samples == samples)
        {
            return Rc::clone(p);
        }
        let p = Rc::new(RingPlan::new(side, width, samples));
        self.plans.push(Rc::clone(&p));
        p
    }

    /// Samples a centered `[S,S,1]` plane on `samples` angles of each ring of
    /// width `width`, nearest coefficient, giving `[samples, rings, 1]`.
    pub fn ring_gather(&mut self, x: Var, width: usize, samples: usize) -> Result<Var> {
        let (h, w, c) = dims3(self.shape(x), "ring_gather")?;
        if h != w || c != 1 || width == 0 || samples == 0 {
            return shape_err("ring_gather", format!("plane {h}x{w}x{c}, width {width}, samples {samples}"));
        }
        let plan = self.plan(h, width, samples);
        let d = self.data(x);
        let out = plan.cell_source.iter().map(|&i| d[i]).collect();
        let t = Tensor::from_parts(vec![samples, plan.rings, 1], out);
        Ok(self.push(t, Op::RingGather(x, plan), &[x]))
    }

    /// Paints each coefficient of a centered `side × side` plane with its
    /// ring's value at the nearest angular sample.
    pub fn ring_scatter(&mut self, x: Var, side: usize, width: usize) -> Result<Var> {
        let (samples, rings, c) = dims3(self.shape(x), "ring_scatter")?;
        let plan = self.plan(side, width, samples);
        if rings != plan.rings || c != 1 {
            return shape_err("ring_scatter", format!("{rings} rings given, plan has {}", plan.rings));
        }
        let d = self.data(x);
        let out = plan.coeff_cell.iter().map(|&i| d[i]).collect();
        let t = Tensor::from_parts(vec![side, side, 1], out);
        Ok(self.push(t, Op::RingScatter(x, plan), &[x]))
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return shape_err("concat", format!("{sa:?} vs {sb:?}"));
        }
        let (ca, cb) = (*sa.last().unwrap(), *sb.last().unwrap());
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = ca + cb;
        let data = self
            .data(a)
            .chunks_exact(ca)
            .zip(self.data(b).chunks_exact(cb))
            .flat_map(|(x, y)| x.iter().chain(y).copied())
            .collect();
        Ok(self.push(Tensor::from_parts(shape, data), Op::Concat(a, b), &[a, b]))
    }

    /// Channels `start..start+len` of the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x);
        let c = *s.last().unwrap();
        if len == 0 || start + len > c {
            return shape_err("slice_last", format!("{start}+{len} of {c}"));
        }
        let mut shape = s.to_vec();
        *shape.last_mut().unwrap() = len;
        let data = self
            .data(x)
            .chunks_exact(c)
            .flat_map(|r| r[start..start + len].iter().copied())
            .collect();
        Ok(self.push(Tensor::from_parts(shape, data), Op::SliceLast { x, start }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(x).len() || shape.contains(&0) {
            return shape_err("reshape", format!("{:?} to {shape:?}", self.shape(x)));
        }
        let t = Tensor::from_parts(shape.to_vec(), self.data(x).to_vec());
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// Reverse-mode accumulation from a one-element output.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        if self.value(out).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got {:?}",
                self.shape(out)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[out.0] = Some(vec![1.0]);
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        let mut send = |v: Var, d: Vec<f64>| {
            if self.wants(v) {
                add_into(&mut grads[v.0], &d);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let neg = matches!(node.op, Op::Sub(..));
                send(*a, reduce_to(g, self.value(*a).len()));
                let mut gb = reduce_to(g, self.value(*b).len());
                if neg {
                    gb.iter_mut().for_each(|v| *v = -*v);
                }
                send(*b, gb);
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.data(*a), self.data(*b));
                let at = |d: &[f64], k: usize| if d.len() == 1 { d[0] } else { d[k] };
                if self.wants(*a) {
                    let full: Vec<f64> = g.iter().enumerate().map(|(k, gv)| gv * at(db, k)).collect();
                    send(*a, reduce_to(&full, da.len()));
                }
                if self.wants(*b) {
                    let full: Vec<f64> = g.iter().enumerate().map(|(k, gv)| gv * at(da, k)).collect();
                    send(*b, reduce_to(&full, db.len()));
                }
            }
            Op::Scale(a, s) => send(*a, g.iter().map(|v| v * s).collect()),
            Op::Relu(a) => {
                let x = self.data(*a);
                send(*a, g.iter().zip(x).map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 }).collect());
            }
            Op::Sigmoid(a) => send(*a, g.iter().zip(y).map(|(gv, s)| gv * s * (1.0 - s)).collect()),
            Op::Square(a) => {
                let x = self.data(*a);
                send(*a, g.iter().zip(x).map(|(gv, xv)| 2.0 * gv * xv).collect());
            }
            Op::Sum(a) => send(*a, vec![g[0]; self.value(*a).len()]),
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.wants(*a) {
                    let mut da = vec![0.0; m * k];
                    kernels::matmul_a_bt_acc(g, self.data(*b), &mut da, m, k, n);
                    send(*a, da);
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; k * n];
                    kernels::matmul_at_b_acc(self.data(*a), g, &mut db, m, k, n);
                    send(*b, db);
                }
            }
            Op::Transpose(a) => {
                let (m, n) = (self.shape(*a)[0], self.shape(*a)[1]);
                let mut d = vec![0.0; m * n];
                for r in 0..m {
                    for c in 0..n {
                        d[r * n + c] = g[c * m + r];
                    }
                }
                send(*a, d);
            }
            Op::SoftmaxRows(a) => {
                let n = self.shape(*a)[1];
                let mut d = vec![0.0; g.len()];
                for ((dr, gr), yr) in d.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(y.chunks_exact(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for k in 0..n {
                        dr[k] = yr[k] * (gr[k] - dot);
                    }
                }
                send(*a, d);
            }
            Op::Conv { x, w, b, geom } => {
                let mut dx = self.wants(*x).then(|| vec![0.0; self.value(*x).len()]);
                let mut dw = self.wants(*w).then(|| vec![0.0; self.value(*w).len()]);
                let mut db = b.filter(|b| self.wants(*b)).map(|_| vec![0.0; geom.cout]);
                kernels::conv_backward(
                    self.data(*x),
                    self.data(*w),
                    g,
                    *geom,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                if let Some(d) = dx {
                    send(*x, d);
                }
                if let Some(d) = dw {
                    send(*w, d);
                }
                if let (Some(b), Some(d)) = (b, db) {
                    send(*b, d);
                }
            }
            Op::Depthwise { x, w, b } => {
                let s = self.shape(*x);
                let (h, wd, c) = (s[0], s[1], s[2]);
                let mut dx = self.wants(*x).then(|| vec![0.0; self.value(*x).len()]);
                let mut dw = self.wants(*w).then(|| vec![0.0; 9 * c]);
                let mut db = b.filter(|b| self.wants(*b)).map(|_| vec![0.0; c]);
                kernels::depthwise_backward(
                    self.data(*x),
                    self.data(*w),
                    g,
                    h,
                    wd,
                    c,
                    dx.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                if let Some(d) = dx {
                    send(*x, d);
                }
                if let Some(d) = dw {
                    send(*w, d);
                }
                if let (Some(b), Some(d)) = (b, db) {
                    send(*b, d);
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = self.value(*gamma).len();
                let gam = self.data(*gamma);
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut dx = vec![0.0; g.len()];
                for (((gr, xh), dr), inv) in g
                    .chunks_exact(c)
                    .zip(xhat.chunks_exact(c))
                    .zip(dx.chunks_exact_mut(c))
                    .zip(inv_std)
                {
                    let mut m1 = 0.0;
                    let mut m2 = 0.0;
                    for k in 0..c {
                        dgamma[k] += gr[k] * xh[k];
                        dbeta[k] += gr[k];
                        let dxh = gr[k] * gam[k];
                        m1 += dxh;
                        m2 += dxh * xh[k];
                    }
                    m1 /= c as f64;
                    m2 /= c as f64;
                    for k in 0..c {
                        dr[k] = inv * (gr[k] * gam[k] - m1 - xh[k] * m2);
                    }
                }
                send(*x, dx);
                send(*gamma, dgamma);
                send(*beta, dbeta);
            }
            Op::Fft2(x) => {
                let (h, w, c) = dims3(self.shape(*x), "fft2").expect("checked on build");
                let z = kernels::fft_channels(g, h, w, c, true, true);
                send(*x, z.iter().map(|v| v.re).collect());
            }
            Op::Ifft2Real(z) => {
                let (h, w, c) = dims_complex(self.shape(*z), "ifft2_real").expect("checked on build");
                let scale = 1.0 / (h * w) as f64;
                let f = kernels::fft_channels(g, h, w, c, false, false);
                send(*z, f.iter().flat_map(|v| [v.re * scale, v.im * scale]).collect());
            }
            Op::Magnitude(z) => {
                let d = self
                    .data(*z)
                    .chunks_exact(2)
                    .zip(g.iter().zip(y))
                    .flat_map(|(p, (gv, r))| if *r > 0.0 { [gv * p[0] / r, gv * p[1] / r] } else { [0.0, 0.0] })
                    .collect();
                send(*z, d);
            }
            Op::PhaseModulate { amp, z } => {
                let (a, zd) = (self.data(*amp), self.data(*z));
                let mut da = vec![0.0; a.len()];
                let mut dz = vec![0.0; zd.len()];
                for k in 0..a.len() {
                    let (re, im) = (zd[2 * k], zd[2 * k + 1]);
                    let (g0, g1) = (g[2 * k], g[2 * k + 1]);
                    let r = re.hypot(im);
                    if r > 0.0 {
                        let (u0, u1) = (re / r, im / r);
                        da[k] = g0 * u0 + g1 * u1;
                        let along = g0 * u0 + g1 * u1;
                        dz[2 * k] = a[k] * (g0 - u0 * along) / r;
                        dz[2 * k + 1] = a[k] * (g1 - u1 * along) / r;
                    } else {
                        da[k] = g0;
                    }
                }
                send(*amp, da);
                send(*z, dz);
            }
            Op::PixelUnshuffle(x) => {
                let s = self.shape(*x);
                send(*x, shuffle(g, s[0] / 2, s[1] / 2, s[2]));
            }
            Op::PixelShuffle(x) => {
                let s = &node.value.shape();
                send(*x, unshuffle(g, s[0], s[1], s[2]));
            }
            Op::ChannelMean(x) => {
                let c = self.shape(*x)[2];
                let inv = 1.0 / c as f64;
                send(*x, g.iter().flat_map(|v| std::iter::repeat_n(v * inv, c)).collect());
            }
            Op::Center(x) => {
                let s = self.shape(*x);
                let block = s[2..].iter().product();
                send(*x, kernels::quadrant_swap(g, s[0], s[1], block));
            }
            Op::RingGather(x, plan) => {
                let mut d = vec![0.0; self.value(*x).len()];
                for (cell, &src) in plan.cell_source.iter().enumerate() {
                    d[src] += g[cell];
                }
                send(*x, d);
            }
            Op::RingScatter(x, plan) => {
                let mut d = vec![0.0; self.value(*x).len()];
                for (coeff, &cell) in plan.coeff_cell.iter().enumerate() {
                    d[cell] += g[coeff];
                }
                send(*x, d);
            }
            Op::Concat(a, b) => {
                let ca = *self.shape(*a).last().unwrap();
                let cb = *self.shape(*b).last().unwrap();
                let mut ga = Vec::with_capacity(self.value(*a).len());
                let mut gb = Vec::with_capacity(self.value(*b).len());
                for row in g.chunks_exact(ca + cb) {
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                send(*a, ga);
                send(*b, gb);
            }
            Op::SliceLast { x, start } => {
                let c = *self.shape(*x).last().unwrap();
                let len = *node.value.shape().last().unwrap();
                let mut d = vec![0.0; self.value(*x).len()];
                for (dr, gr) in d.chunks_exact_mut(c).zip(g.chunks_exact(len)) {
                    dr[*start..start + len].copy_from_slice(gr);
                }
                send(*x, d);
            }
            Op::Reshape(x) => send(*x, g.to_vec()),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn unshuffle(d: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; d.len()];
    for y in 0..oh {
        for x in 0..ow {
            for dy in 0..2 {
                for dx in 0..2 {
                    let src = ((2 * y + dy) * w + 2 * x + dx) * c;
                    let dst = (y * ow + x) * 4 * c + (dy * 2 + dx) * c;
                    out[dst..dst + c].copy_from_slice(&d[src..src + c]);
                }
            }
        }
    }
    out
}

/// Inverse of [`unshuffle`]; `h`, `w` are the coarse sides and `c` the fine
/// channel count.
fn shuffle(d: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let fw = 2 * w;
    let mut out = vec![0.0; d.len()];
    for y in 0..h {
        for x in 0..w {
            for dy in 0..2 {
                for dx in 0..2 {
                    let dst = ((2 * y + dy) * fw + 2 * x + dx) * c;
                    let src = (y * w + x) * 4 * c + (dy * 2 + dx) * c;
                    out[dst..dst + c].copy_from_slice(&d[src..src + c]);
                }
            }
        }
    }
    out
}
