//! Radix-2 2D discrete Fourier transform on power-of-two rasters.
//!
//! The forward transform is unnormalized,
//! `F(u,v,c) = Σ_h Σ_w x(h,w,c) · exp(-2πi (hu/H + wv/W))`, and the inverse
//! carries the `1/(HW)` factor.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// DC at index (0, 0).
    Natural,
    /// DC at (H/2, W/2).
    Centered,
}

/// Complex H×W×C coefficients, row-major and channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub layout: Layout,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(height: usize, width: usize, channels: usize, layout: Layout) -> Self {
        Spectrum {
            height,
            width,
            channels,
            layout,
            data: vec![Complex64::new(0.0, 0.0); height * width * channels],
        }
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> Complex64 {
        self.data[self.index(y, x, c)]
    }

    pub fn same_dims(&self, other: &Spectrum) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }
}

/// In-place radix-2 decimation-in-time FFT. `inverse` flips the twiddle sign
/// but does not normalize.
pub fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * std::f64::consts::PI / len as f64;
        // twiddles evaluated directly rather than by recurrence to keep
        // rounding error at the 1e-16 level for every stage
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, step * k as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * twiddles[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// 2D transform of one dense plane (rows, then columns).
pub fn fft2_plane(plane: &mut [Complex64], height: usize, width: usize, inverse: bool) {
    for row in plane.chunks_exact_mut(width) {
        fft_in_place(row, inverse);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = plane[y * width + x];
        }
        fft_in_place(&mut column, inverse);
        for y in 0..height {
            plane[y * width + x] = column[y];
        }
    }
}

fn check_pow2(height: usize, width: usize) -> Result<()> {
    if height.is_power_of_two() && width.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "transform needs power-of-two sides, got {height}x{width}"
        )))
    }
}

/// Forward transform of every channel, natural layout.
pub fn dft2(input: impl AsRef<Field>) -> Result<Spectrum> {
    let f = input.as_ref();
    check_pow2(f.height, f.width)?;
    let mut out = Spectrum::zeros(f.height, f.width, f.channels, Layout::Natural);
    let mut plane = vec![Complex64::new(0.0, 0.0); f.height * f.width];
    for c in 0..f.channels {
        for (i, p) in plane.iter_mut().enumerate() {
            *p = Complex64::new(f.data[i * f.channels + c], 0.0);
        }
        fft2_plane(&mut plane, f.height, f.width, false);
        for (i, p) in plane.iter().enumerate() {
            out.data[i * f.channels + c] = *p;
        }
    }
    Ok(out)
}

/// Real part of an inverse transform plus the largest imaginary magnitude
/// discarded along the way.
#[derive(Debug, Clone)]
pub struct Inverse {
    pub field: Field,
    pub max_imaginary: f64,
}

pub fn idft2(spectrum: &Spectrum) -> Result<Inverse> {
    if spectrum.layout != Layout::Natural {
        return Err(Error::InvalidArgument(
            "inverse transform needs a natural-layout spectrum".into(),
        ));
    }
    check_pow2(spectrum.height, spectrum.width)?;
    let (h, w, ch) = (spectrum.height, spectrum.width, spectrum.channels);
    let scale = 1.0 / (h * w) as f64;
    let mut field = Field::zeros(h, w, ch);
    let mut max_imaginary = 0.0f64;
    let mut plane = vec![Complex64::new(0.0, 0.0); h * w];
    for c in 0..ch {
        for (i, p) in plane.iter_mut().enumerate() {
            *p = spectrum.data[i * ch + c];
        }
        fft2_plane(&mut plane, h, w, true);
        for (i, p) in plane.iter().enumerate() {
            field.data[i * ch + c] = p.re * scale;
            max_imaginary = max_imaginary.max((p.im * scale).abs());
        }
    }
    Ok(Inverse {
        field,
        max_imaginary,
    })
}

fn quadrant_swap(s: &Spectrum) -> Vec<Complex64> {
    let (h, w, ch) = (s.height, s.width, s.channels);
    let (dy, dx) = (h / 2, w / 2);
    let mut out = vec![Complex64::new(0.0, 0.0); s.data.len()];
    for y in 0..h {
        let ty = (y + dy) % h;
        for x in 0..w {
            let tx = (x + dx) % w;
            let src = (y * w + x) * ch;
            let dst = (ty * w + tx) * ch;
            out[dst..dst + ch].copy_from_slice(&s.data[src..src + ch]);
        }
    }
    out
}

/// Moves DC to (H/2, W/2). On even sides this is an involution, so the
/// layout flag simply toggles.
pub fn center_shift(s: &Spectrum) -> Spectrum {
    Spectrum {
        data: quadrant_swap(s),
        layout: match s.layout {
            Layout::Natural => Layout::Centered,
            Layout::Centered => Layout::Natural,
        },
        height: s.height,
        width: s.width,
        channels: s.channels,
    }
}

/// Inverse of [`center_shift`].
pub fn uncenter_shift(s: &Spectrum) -> Spectrum {
    center_shift(s)
}

/// `ln(1 + |F|)` per coefficient, returned as a real raster of the same shape.
pub fn log_magnitude(s: &Spectrum) -> Field {
    Field {
        height: s.height,
        width: s.width,
        channels: s.channels,
        data: s.data.iter().map(|z| z.norm().ln_1p()).collect(),
    }
}
