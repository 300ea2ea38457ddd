//! Forward and adjoint kernels shared by the graph ops.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::fft::fft2_plane;
use crate::image::reflect_index;

/// `C[m,n] += A[m,k] · B[k,n]`.
pub fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (cv, bv) in crow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *cv += av * bv;
            }
        }
    }
}

/// `C[k,n] += Aᵀ · G` for `A[m,k]`, `G[m,n]`.
pub fn matmul_at_b_acc(a: &[f64], g: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (cv, gv) in c[p * n..(p + 1) * n].iter_mut().zip(grow) {
                *cv += av * gv;
            }
        }
    }
}

/// `C[m,k] += G · Bᵀ` for `G[m,n]`, `B[k,n]`.
pub fn matmul_a_bt_acc(g: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let dot: f64 = grow.iter().zip(&b[p * n..(p + 1) * n]).map(|(x, y)| x * y).sum();
            c[i * k + p] += dot;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * (self.k / 2) - self.k) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * (self.k / 2) - self.k) / self.stride + 1
    }

    #[inline]
    fn src(&self, o: usize, kk: usize, n: usize) -> usize {
        reflect_index((o * self.stride + kk) as isize - (self.k / 2) as isize, n)
    }
}

/// Cross-correlation with reflect padding; `w` is `[k,k,cin,cout]`.
pub fn conv_forward(x: &[f64], w: &[f64], bias: Option<&[f64]>, g: ConvGeom) -> Vec<f64> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut out = vec![0.0; oh * ow * g.cout];
    for oy in 0..oh {
        for ox in 0..ow {
            let o = &mut out[(oy * ow + ox) * g.cout..(oy * ow + ox + 1) * g.cout];
            if let Some(b) = bias {
                o.copy_from_slice(b);
            }
            for ky in 0..g.k {
                let iy = g.src(oy, ky, g.h);
                for kx in 0..g.k {
                    let ix = g.src(ox, kx, g.w);
                    let xs = &x[(iy * g.w + ix) * g.cin..(iy * g.w + ix + 1) * g.cin];
                    let wk = &w[(ky * g.k + kx) * g.cin * g.cout..];
                    for (ci, &xv) in xs.iter().enumerate() {
                        for (ov, wv) in o.iter_mut().zip(&wk[ci * g.cout..(ci + 1) * g.cout]) {
                            *ov += xv * wv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates input, kernel and bias adjoints of [`conv_forward`].
pub fn conv_backward(
    x: &[f64],
    w: &[f64],
    grad: &[f64],
    g: ConvGeom,
    dx: Option<&mut [f64]>,
    dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    let (oh, ow) = (g.out_h(), g.out_w());
    if let Some(db) = db {
        for o in grad.chunks_exact(g.cout) {
            for (b, v) in db.iter_mut().zip(o) {
                *b += v;
            }
        }
    }
    let mut dx = dx;
    let mut dw = dw;
    for oy in 0..oh {
        for ox in 0..ow {
            let go = &grad[(oy * ow + ox) * g.cout..(oy * ow + ox + 1) * g.cout];
            for ky in 0..g.k {
                let iy = g.src(oy, ky, g.h);
                for kx in 0..g.k {
                    let ix = g.src(ox, kx, g.w);
                    let base = (iy * g.w + ix) * g.cin;
                    let woff = (ky * g.k + kx) * g.cin * g.cout;
                    for ci in 0..g.cin {
                        let wrow = woff + ci * g.cout..woff + (ci + 1) * g.cout;
                        if let Some(dx) = dx.as_deref_mut() {
                            dx[base + ci] +=
                                go.iter().zip(&w[wrow.clone()]).map(|(a, b)| a * b).sum::<f64>();
                        }
                        if let Some(dw) = dw.as_deref_mut() {
                            let xv = x[base + ci];
                            for (d, gv) in dw[wrow].iter_mut().zip(go) {
                                *d += xv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 3×3 per-channel correlation with reflect padding; `w` is `[3,3,c]`.
pub fn depthwise_forward(
    x: &[f64],
    w: &[f64],
    bias: Option<&[f64]>,
    h: usize,
    wd: usize,
    c: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; h * wd * c];
    for y in 0..h {
        for xx in 0..wd {
            let o = &mut out[(y * wd + xx) * c..(y * wd + xx + 1) * c];
            if let Some(b) = bias {
                o.copy_from_slice(b);
            }
            for ky in 0..3 {
                let iy = reflect_index(y as isize + ky as isize - 1, h);
                for kx in 0..3 {
                    let ix = reflect_index(xx as isize + kx as isize - 1, wd);
                    let xs = &x[(iy * wd + ix) * c..(iy * wd + ix + 1) * c];
                    let wk = &w[(ky * 3 + kx) * c..(ky * 3 + kx + 1) * c];
                    for ((ov, xv), wv) in o.iter_mut().zip(xs).zip(wk) {
                        *ov += xv * wv;
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn depthwise_backward(
    x: &[f64],
    w: &[f64],
    grad: &[f64],
    h: usize,
    wd: usize,
    c: usize,
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    if let Some(db) = db {
        for o in grad.chunks_exact(c) {
            for (b, v) in db.iter_mut().zip(o) {
                *b += v;
            }
        }
    }
    for y in 0..h {
        for xx in 0..wd {
            let go = &grad[(y * wd + xx) * c..(y * wd + xx + 1) * c];
            for ky in 0..3 {
                let iy = reflect_index(y as isize + ky as isize - 1, h);
                for kx in 0..3 {
                    let ix = reflect_index(xx as isize + kx as isize - 1, wd);
                    let base = (iy * wd + ix) * c;
                    let woff = (ky * 3 + kx) * c;
                    if let Some(dx) = dx.as_deref_mut() {
                        for ch in 0..c {
                            dx[base + ch] += go[ch] * w[woff + ch];
                        }
                    }
                    if let Some(dw) = dw.as_deref_mut() {
                        for ch in 0..c {
                            dw[woff + ch] += go[ch] * x[base + ch];
                        }
                    }
                }
            }
        }
    }
}

/// Per-channel 2-D transform of `[h,w,c]` reals into `[h,w,c,2]`, or of a
/// `[h,w,c,2]` complex tensor when `complex_in`. `inverse` conjugates the
/// kernel; no normalization is applied.
pub fn fft_channels(
    data: &[f64],
    h: usize,
    w: usize,
    c: usize,
    complex_in: bool,
    inverse: bool,
) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); h * w * c];
    let mut plane = vec![Complex64::new(0.0, 0.0); h * w];
    for ch in 0..c {
        for (i, p) in plane.iter_mut().enumerate() {
            *p = if complex_in {
                let j = (i * c + ch) * 2;
                Complex64::new(data[j], data[j + 1])
            } else {
                Complex64::new(data[i * c + ch], 0.0)
            };
        }
        fft2_plane(&mut plane, h, w, inverse);
        for (i, p) in plane.iter().enumerate() {
            out[i * c + ch] = *p;
        }
    }
    out
}

/// Quadrant swap over the two leading axes with `block` trailing values per
/// position. An involution for even sides.
pub fn quadrant_swap(data: &[f64], h: usize, w: usize, block: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        let ty = (y + h / 2) % h;
        for x in 0..w {
            let tx = (x + w / 2) % w;
            let s = (y * w + x) * block;
            let d = (ty * w + tx) * block;
            out[d..d + block].copy_from_slice(&data[s..s + block]);
        }
    }
    out
}

/// Index maps between a centered `side × side` plane and a `[P, rings]`
/// polar grid of rings of width `d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingPlan {
    pub side: usize,
    pub width: usize,
    pub samples: usize,
    pub rings: usize,
    /// Plane coefficient read by each grid cell `p·rings + j`.
    pub cell_source: Vec<usize>,
    /// Grid cell feeding each plane coefficient.
    pub coeff_cell: Vec<usize>,
}

impl RingPlan {
    pub fn new(side: usize, width: usize, samples: usize) -> Self {
        let radius = (side / 2).max(1);
        let rings = radius.div_ceil(width);
        let c = (side / 2) as f64;
        let mut cell_source = vec![0; samples * rings];
        for p in 0..samples {
            let theta = 2.0 * PI * p as f64 / samples as f64;
            for j in 0..rings {
                let r = (j as f64 + 0.5) * width as f64;
                let clamp = |v: f64| (v.round().max(0.0) as usize).min(side - 1);
                let y = clamp(c + r * theta.sin());
                let x = clamp(c + r * theta.cos());
                cell_source[p * rings + j] = y * side + x;
            }
        }
        let mut coeff_cell = vec![0; side * side];
        for y in 0..side {
            for x in 0..side {
                let (dy, dx) = (y as f64 - c, x as f64 - c);
                let ring = (((dy * dy + dx * dx).sqrt() / width as f64).floor() as usize).min(rings - 1);
                let theta = dy.atan2(dx).rem_euclid(2.0 * PI);
                let p = (theta / (2.0 * PI) * samples as f64).round() as usize % samples;
                coeff_cell[y * side + x] = p * rings + ring;
            }
        }
        RingPlan {
            side,
            width,
            samples,
            rings,
            cell_source,
            coeff_cell,
        }
    }
}
