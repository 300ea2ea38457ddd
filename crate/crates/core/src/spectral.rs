//! Band splitting, high-band channel statistics, radial frequency profiles and
//! per-band Gaussianity diagnostics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{center_shift, dft2, Layout, Spectrum};
use crate::image::Image;

/// Centered low-frequency square of a `height`×`width` spectrum.
///
/// The nominal side is `⌊ratio·N⌋`. Membership is decided on centered
/// offsets `o` with `|o| ≤ ⌊side/2⌋`, which keeps the support closed under
/// conjugation (`o ↦ -o`); an even nominal side therefore covers one extra
/// row and column. Conjugate closure is what lets a replaced high band
/// invert to a real image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyMask {
    pub height: usize,
    pub width: usize,
    pub ratio: f64,
    half_h: Option<usize>,
    half_w: Option<usize>,
}

impl FrequencyMask {
    pub fn new(height: usize, width: usize, ratio: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::InvalidArgument(format!(
                "mask ratio {ratio} outside [0, 1]"
            )));
        }
        let half = |n: usize| {
            let side = (ratio * n as f64).floor() as usize;
            (side > 0).then_some(side / 2)
        };
        Ok(FrequencyMask {
            height,
            width,
            ratio,
            half_h: half(height),
            half_w: half(width),
        })
    }

    /// Whether centered coordinate `(y, x)` belongs to the low band.
    #[inline]
    pub fn is_low(&self, y: usize, x: usize) -> bool {
        match (self.half_h, self.half_w) {
            (Some(hh), Some(hw)) => {
                let oy = y.abs_diff(self.height / 2);
                let ox = x.abs_diff(self.width / 2);
                oy <= hh && ox <= hw
            }
            _ => false,
        }
    }

    pub fn low_count(&self) -> usize {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (y, x)))
            .filter(|&(y, x)| self.is_low(y, x))
            .count()
    }

    pub fn high_count(&self) -> usize {
        self.height * self.width - self.low_count()
    }
}

/// Exact partition of a centered spectrum into low and high bands.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSplit {
    pub low: Spectrum,
    pub high: Spectrum,
    pub mask: FrequencyMask,
}

impl BandSplit {
    /// `low + high`, coefficient by coefficient.
    pub fn recombine(&self) -> Spectrum {
        let mut out = self.low.clone();
        for (o, h) in out.data.iter_mut().zip(&self.high.data) {
            *o += h;
        }
        out
    }
}

pub fn split_bands(spectrum: &Spectrum, ratio: f64) -> Result<BandSplit> {
    if spectrum.layout != Layout::Centered {
        return Err(Error::InvalidArgument(
            "band split needs a centered spectrum".into(),
        ));
    }
    let mask = FrequencyMask::new(spectrum.height, spectrum.width, ratio)?;
    let zero = Complex64::new(0.0, 0.0);
    let mut low = spectrum.clone();
    let mut high = spectrum.clone();
    for y in 0..spectrum.height {
        for x in 0..spectrum.width {
            let is_low = mask.is_low(y, x);
            for c in 0..spectrum.channels {
                let i = spectrum.index(y, x, c);
                if is_low {
                    high.data[i] = zero;
                } else {
                    low.data[i] = zero;
                }
            }
        }
    }
    Ok(BandSplit { low, high, mask })
}

/// How the per-channel spread is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpreadMode {
    /// Population standard deviation.
    #[default]
    Std,
    /// Mean absolute deviation, `mean |a - μ|`.
    LiteralMad,
}

/// Per-channel amplitude mean and spread over the high-band support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Amplitudes on the high support, one vector per channel.
pub fn high_amplitudes(high: &Spectrum, mask: &FrequencyMask) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(mask.high_count()); high.channels];
    for y in 0..high.height {
        for x in 0..high.width {
            if mask.is_low(y, x) {
                continue;
            }
            for (c, amps) in out.iter_mut().enumerate() {
                amps.push(high.get(y, x, c).norm());
            }
        }
    }
    out
}

pub fn hf_channel_stats(
    high: &Spectrum,
    mask: &FrequencyMask,
    mode: SpreadMode,
) -> Result<ChannelStats> {
    if high.height != mask.height || high.width != mask.width {
        return Err(Error::Shape("mask does not match spectrum".into()));
    }
    if mask.high_count() == 0 {
        return Err(Error::InvalidArgument(
            "high band is empty (mask ratio 1)".into(),
        ));
    }
    let mut mean = Vec::with_capacity(high.channels);
    let mut std = Vec::with_capacity(high.channels);
    for amps in high_amplitudes(high, mask) {
        let (m, s) = amplitude_moments(&amps, mode);
        mean.push(m);
        std.push(s);
    }
    Ok(ChannelStats { mean, std })
}

pub(crate) fn amplitude_moments(amps: &[f64], mode: SpreadMode) -> (f64, f64) {
    let n = amps.len() as f64;
    let m = amps.iter().sum::<f64>() / n;
    let s = match mode {
        SpreadMode::Std => (amps.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n).sqrt(),
        SpreadMode::LiteralMad => amps.iter().map(|a| (a - m).abs()).sum::<f64>() / n,
    };
    (m, s)
}

/// Convenience: centered spectrum of an image.
pub fn centered_spectrum(image: &Image) -> Result<Spectrum> {
    Ok(center_shift(&dft2(image)?))
}

/// Azimuthally averaged log-magnitude spectrum, one value per integer radius
/// `k < N/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub side: usize,
    pub values: Vec<f64>,
}

impl RadialProfile {
    /// Band radius scaled into `[0, 1]` by `1/sqrt(N²/2)`.
    pub fn normalized_radius(&self, band: usize) -> f64 {
        band as f64 / (self.side as f64 * self.side as f64 / 2.0).sqrt()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("band,normalized_radius,value\n");
        for (k, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{k},{},{v}", self.normalized_radius(k));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let v = line
                .rsplit(',')
                .next()
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidArgument(format!("bad profile row {i}")))?;
            values.push(v);
        }
        Ok(RadialProfile {
            side: values.len() * 2,
            values,
        })
    }
}

#[inline]
fn ring_of(y: usize, x: usize, side: usize) -> usize {
    let dy = y as f64 - (side / 2) as f64;
    let dx = x as f64 - (side / 2) as f64;
    (dy * dy + dx * dx).sqrt().round() as usize
}

/// Ring means of a per-coordinate value on a centered `side`×`side` grid,
/// for rings `0..side/2`.
fn ring_means(side: usize, value: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let bands = side / 2;
    let mut sum = vec![0.0; bands];
    let mut count = vec![0usize; bands];
    for y in 0..side {
        for x in 0..side {
            let k = ring_of(y, x, side);
            if k < bands {
                sum[k] += value(y, x);
                count[k] += 1;
            }
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect()
}

fn check_square(height: usize, width: usize) -> Result<usize> {
    if height != width {
        return Err(Error::Shape(format!(
            "radial profile needs a square raster, got {height}x{width}"
        )));
    }
    Ok(height)
}

/// Profile of an already centered spectrum; channels are averaged before
/// ring aggregation.
pub fn radial_profile_of(centered: &Spectrum) -> Result<RadialProfile> {
    let side = check_square(centered.height, centered.width)?;
    let ch = centered.channels;
    let values = ring_means(side, |y, x| {
        (0..ch)
            .map(|c| centered.get(y, x, c).norm().ln_1p())
            .sum::<f64>()
            / ch as f64
    });
    Ok(RadialProfile { side, values })
}

pub fn radial_profile(image: &Image) -> Result<RadialProfile> {
    check_square(image.height(), image.width())?;
    radial_profile_of(&centered_spectrum(image)?)
}

/// Bandwise mean. Each band's values are summed in sorted order so the
/// result does not depend on the order of `profiles`.
pub fn mean_profile(profiles: &[RadialProfile]) -> Result<RadialProfile> {
    let first = profiles
        .first()
        .ok_or_else(|| Error::InvalidArgument("mean of zero profiles".into()))?;
    if profiles.iter().any(|p| p.values.len() != first.values.len()) {
        return Err(Error::Shape("profiles have different lengths".into()));
    }
    let n = profiles.len() as f64;
    let values = (0..first.values.len())
        .map(|k| {
            let mut column: Vec<f64> = profiles.iter().map(|p| p.values[k]).collect();
            column.sort_by(f64::total_cmp);
            column.iter().sum::<f64>() / n
        })
        .collect();
    Ok(RadialProfile {
        side: first.side,
        values,
    })
}

/// Profiles of a corpus, in input order.
pub fn corpus_profiles(images: &[Image]) -> Result<Vec<RadialProfile>> {
    use rayon::prelude::*;
    images.par_iter().map(radial_profile).collect()
}

pub fn corpus_mean_profile(images: &[Image]) -> Result<RadialProfile> {
    mean_profile(&corpus_profiles(images)?)
}

/// Default lower band of the reporting window, `N/4`.
pub fn default_k_min(profile_len: usize) -> usize {
    profile_len / 2
}

/// Mean absolute difference over bands `k >= k_min`.
pub fn profile_distance(a: &RadialProfile, b: &RadialProfile, k_min: usize) -> Result<f64> {
    if a.values.len() != b.values.len() {
        return Err(Error::Shape("profiles have different lengths".into()));
    }
    if k_min >= a.values.len() {
        return Err(Error::InvalidArgument(format!(
            "k_min {k_min} outside profile of {} bands",
            a.values.len()
        )));
    }
    let tail = &a.values[k_min..];
    let sum: f64 = tail
        .iter()
        .zip(&b.values[k_min..])
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(sum / tail.len() as f64)
}

/// Adjusted Fisher–Pearson skewness `G1`; `None` for fewer than three
/// samples or zero variance.
pub fn adjusted_skewness(sample: &[f64]) -> Option<f64> {
    let n = sample.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let m2 = sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    if m2 <= 0.0 {
        return None;
    }
    let m3 = sample.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
    // G1 = sqrt(n(n-1))/(n-2) · m3/m2^{3/2}, grouped so that the square root
    // is taken last
    let magnitude = (nf * (nf - 1.0) * m3 * m3 / (m2 * m2 * m2)).sqrt() / (nf - 2.0);
    Some(magnitude.copysign(m3))
}

pub const HISTOGRAM_BINS: usize = 64;

/// Uniform histogram over the observed range; the top edge is inclusive.
pub fn histogram(sample: &[f64], bins: usize) -> (Vec<f64>, Vec<usize>) {
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0usize; bins];
    if sample.is_empty() {
        return (vec![0.0; bins + 1], counts);
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    for &v in sample {
        let b = if width > 0.0 {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    (edges, counts)
}

/// Sums runs of `group` adjacent bins; a trailing partial run is kept.
pub fn merge_bins(counts: &[usize], group: usize) -> Vec<usize> {
    counts.chunks(group.max(1)).map(|c| c.iter().sum()).collect()
}

/// Whether a histogram has a single mode, ignoring dips that are within
/// `z` Poisson standard deviations of the surrounding counts.
pub fn is_unimodal(counts: &[usize], z: f64) -> bool {
    let Some((peak, _)) = counts.iter().enumerate().max_by_key(|(i, &c)| (c, usize::MAX - i)) else {
        return true;
    };
    let significant_rise = |low: usize, c: usize| c as f64 - low as f64 > z * ((low + 1) as f64).sqrt();
    let mut low = counts[peak];
    for &c in &counts[peak + 1..] {
        if significant_rise(low, c) {
            return false;
        }
        low = low.min(c);
    }
    low = counts[peak];
    for &c in counts[..peak].iter().rev() {
        if significant_rise(low, c) {
            return false;
        }
        low = low.min(c);
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDiagnostic {
    pub skewness: Option<f64>,
    pub histogram_bins: Vec<f64>,
    pub histogram_counts: Vec<usize>,
}

/// Per-image ring-mean amplitude `mean |F|` (channels averaged) at each band.
pub fn ring_amplitudes(image: &Image, bands: &[usize]) -> Result<Vec<f64>> {
    let side = check_square(image.height(), image.width())?;
    if let Some(&b) = bands.iter().find(|&&b| b >= side / 2) {
        return Err(Error::InvalidArgument(format!(
            "band {b} outside [0, {})",
            side / 2
        )));
    }
    let s = centered_spectrum(image)?;
    let ch = s.channels;
    let means = ring_means(side, |y, x| {
        (0..ch).map(|c| s.get(y, x, c).norm()).sum::<f64>() / ch as f64
    });
    Ok(bands.iter().map(|&b| means[b]).collect())
}

/// Pools each image's ring-mean amplitude per band and reports skewness and
/// a 64-bin histogram.
pub fn band_skewness(images: &[Image], bands: &[usize]) -> Result<BTreeMap<usize, BandDiagnostic>> {
    use rayon::prelude::*;
    if images.len() < 3 {
        return Err(Error::InvalidArgument(
            "band skewness needs at least three images".into(),
        ));
    }
    let per_image: Vec<Vec<f64>> = images
        .par_iter()
        .map(|img| ring_amplitudes(img, bands))
        .collect::<Result<_>>()?;
    Ok(bands
        .iter()
        .enumerate()
        .map(|(j, &band)| {
            let sample: Vec<f64> = per_image.iter().map(|v| v[j]).collect();
            (band, diagnose_sample(&sample))
        })
        .collect())
}

pub fn diagnose_sample(sample: &[f64]) -> BandDiagnostic {
    let (histogram_bins, histogram_counts) = histogram(sample, HISTOGRAM_BINS);
    BandDiagnostic {
        skewness: adjusted_skewness(sample),
        histogram_bins,
        histogram_counts,
    }
}

pub fn diagnostics_json(diag: &BTreeMap<usize, BandDiagnostic>) -> Result<String> {
    let keyed: BTreeMap<String, &BandDiagnostic> =
        diag.iter().map(|(k, v)| (k.to_string(), v)).collect();
    Ok(serde_json::to_string_pretty(&keyed)? + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::dft2;
    use crate::image::Field;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_centered(rng: &mut ChaCha8Rng, n: usize, ch: usize) -> Spectrum {
        let mut s = Spectrum::zeros(n, n, ch, Layout::Centered);
        for z in s.data.iter_mut() {
            *z = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
        s
    }

    #[test]
    fn extreme_ratios_empty_one_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_centered(&mut rng, 16, 1);
        let full = split_bands(&s, 1.0).unwrap();
        assert!(full.high.data.iter().all(|z| z.norm() == 0.0));
        let none = split_bands(&s, 0.0).unwrap();
        assert!(none.low.data.iter().all(|z| z.norm() == 0.0));
        assert_eq!(none.mask.low_count(), 0);
    }

    #[test]
    fn half_ratio_support_is_conjugate_closed_square() {
        let m = FrequencyMask::new(128, 128, 0.5).unwrap();
        // nominal side 64 widened to offsets -32..=32
        assert_eq!(m.low_count(), 65 * 65);
        assert!(m.is_low(64 - 32, 64 + 32));
        assert!(!m.is_low(64 - 33, 64));
        for y in 1..128 {
            for x in 1..128 {
                assert_eq!(m.is_low(y, x), m.is_low(128 - y, 128 - x));
            }
        }
        let odd = FrequencyMask::new(128, 128, 0.2).unwrap(); // side 25
        assert_eq!(odd.low_count(), 25 * 25);
    }

    #[test]
    fn recombination_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_centered(&mut rng, 32, 3);
        for r in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let split = split_bands(&s, r).unwrap();
            assert_eq!(split.recombine(), s);
        }
    }

    #[test]
    fn natural_layout_is_rejected() {
        let s = Spectrum::zeros(4, 4, 1, Layout::Natural);
        assert!(split_bands(&s, 0.5).is_err());
    }

    #[test]
    fn stats_of_equal_amplitudes() {
        let mut s = Spectrum::zeros(8, 8, 1, Layout::Centered);
        for (i, z) in s.data.iter_mut().enumerate() {
            *z = Complex64::from_polar(2.5, i as f64);
        }
        let split = split_bands(&s, 0.5).unwrap();
        let st = hf_channel_stats(&split.high, &split.mask, SpreadMode::Std).unwrap();
        assert!((st.mean[0] - 2.5).abs() < 1e-12);
        assert!(st.std[0] < 1e-12);
    }

    #[test]
    fn stats_of_two_amplitude_band() {
        let (m, s) = amplitude_moments(&[1.0, 3.0], SpreadMode::Std);
        assert_eq!((m, s), (2.0, 1.0));
        let (_, mad) = amplitude_moments(&[1.0, 2.0, 6.0], SpreadMode::LiteralMad);
        assert!((mad - 2.0).abs() < 1e-15);
    }

    #[test]
    fn stats_match_scalar_loop_and_ignore_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_centered(&mut rng, 16, 3);
        let split = split_bands(&s, 0.5).unwrap();
        let st = hf_channel_stats(&split.high, &split.mask, SpreadMode::Std).unwrap();
        for c in 0..3 {
            let mut vals = Vec::new();
            for y in 0..16 {
                for x in 0..16 {
                    let oy = (y as i64 - 8).abs();
                    let ox = (x as i64 - 8).abs();
                    if oy > 4 || ox > 4 {
                        vals.push(s.get(y, x, c).norm());
                    }
                }
            }
            let m: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let v: f64 = vals.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / vals.len() as f64;
            assert!((st.mean[c] - m).abs() < 1e-12);
            assert!((st.std[c] - v.sqrt()).abs() < 1e-12);
        }
        let mut rotated = split.high.clone();
        for (i, z) in rotated.data.iter_mut().enumerate() {
            *z *= Complex64::from_polar(1.0, 0.37 * i as f64);
        }
        let st2 = hf_channel_stats(&rotated, &split.mask, SpreadMode::Std).unwrap();
        for c in 0..3 {
            assert!((st.mean[c] - st2.mean[c]).abs() < 1e-12);
            assert!((st.std[c] - st2.std[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_high_support_is_an_error() {
        let s = Spectrum::zeros(8, 8, 1, Layout::Centered);
        let split = split_bands(&s, 1.0).unwrap();
        assert!(hf_channel_stats(&split.high, &split.mask, SpreadMode::Std).is_err());
    }

    #[test]
    fn constant_image_profile_is_dc_only() {
        let img = Image::filled(32, 32, 1, 0.4).unwrap();
        let p = radial_profile(&img).unwrap();
        assert_eq!(p.values.len(), 16);
        assert!(p.values[0] > 0.0);
        assert!(p.values[1..].iter().all(|v| v.abs() < 1e-9));
    }

    /// Ring-mean definition evaluated on the analytic spectrum of a cosine.
    #[test]
    fn cosine_profile_peaks_at_its_frequency() {
        let n = 32;
        for f in [3usize, 7, 12] {
            let data: Vec<f64> = (0..n * n)
                .map(|i| {
                    let x = i % n;
                    0.5 + 0.4 * (2.0 * std::f64::consts::PI * (f * x) as f64 / n as f64).cos()
                })
                .collect();
            let img = Image::new(n, n, 1, data).unwrap();
            let p = radial_profile(&img).unwrap();
            let argmax = (1..p.values.len())
                .max_by(|&a, &b| p.values[a].total_cmp(&p.values[b]))
                .unwrap();
            assert_eq!(argmax, f);
            // analytic: two coefficients of magnitude 0.2·N² in ring f
            let ring_size = (0..n * n)
                .filter(|&i| ring_of(i / n, i % n, n) == f)
                .count();
            let expected = 2.0 * (0.2 * (n * n) as f64).ln_1p() / ring_size as f64;
            assert!((p.values[f] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn profile_rejects_non_square() {
        let img = Image::filled(8, 16, 1, 0.0).unwrap();
        assert!(radial_profile(&img).is_err());
    }

    #[test]
    fn mean_profile_basics() {
        let a = RadialProfile { side: 8, values: vec![1.0, 2.0, 3.0, 4.0] };
        let b = RadialProfile { side: 8, values: vec![0.1, 0.7, 0.3, 9.0] };
        let c = RadialProfile { side: 8, values: vec![5.0, 0.2, 0.2, 0.0] };
        assert_eq!(mean_profile(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(mean_profile(&[a.clone(), a.clone()]).unwrap(), a);
        let abc = mean_profile(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let cab = mean_profile(&[c, a, b]).unwrap();
        assert_eq!(abc, cab);
        assert!(mean_profile(&[]).is_err());
    }

    #[test]
    fn distance_properties() {
        let a = RadialProfile { side: 16, values: (0..8).map(|i| i as f64).collect() };
        let b = RadialProfile { side: 16, values: (0..8).map(|i| i as f64 + 0.25).collect() };
        assert_eq!(profile_distance(&a, &a, 4).unwrap(), 0.0);
        assert_eq!(profile_distance(&a, &b, 4).unwrap(), profile_distance(&b, &a, 4).unwrap());
        assert!((profile_distance(&a, &b, default_k_min(8)).unwrap() - 0.25).abs() < 1e-15);
        assert!(profile_distance(&a, &b, 8).is_err());
    }

    #[test]
    fn skewness_fixtures() {
        assert_eq!(adjusted_skewness(&[0.0, 0.0, 0.0, 1.0]), Some(2.0));
        let mirrored = [-3.0, -1.0, 0.5, 2.5, 4.0, 6.0];
        assert!(adjusted_skewness(&mirrored).unwrap().abs() < 1e-12);
        assert_eq!(adjusted_skewness(&[2.0, 2.0, 2.0]), None);
        assert_eq!(adjusted_skewness(&[1.0, 2.0]), None);
    }

    #[test]
    fn histogram_covers_the_range() {
        let (edges, counts) = histogram(&[0.0, 0.5, 1.0, 1.0], 4);
        assert_eq!(edges, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(counts, vec![1, 0, 1, 2]);
        assert!(is_unimodal(&[1, 3, 9, 4, 2], 3.0));
        assert!(!is_unimodal(&[30, 1, 0, 1, 30], 3.0));
        assert_eq!(merge_bins(&[1, 2, 3, 4, 5], 2), vec![3, 7, 5]);
        assert!(is_unimodal(&merge_bins(&[40, 44, 24, 55, 39, 10], 2), 3.0));
    }

    #[test]
    fn csv_export_round_trips() {
        let p = RadialProfile { side: 8, values: vec![1.5, 0.25, 0.125, 0.0] };
        let csv = p.to_csv();
        assert!(csv.starts_with("band,normalized_radius,value\n0,0,1.5\n"));
        assert_eq!(RadialProfile::from_csv(&csv).unwrap(), p);
    }

    proptest! {
        #[test]
        fn scaling_the_high_band_raises_outer_rings(seed in 0u64..1000, scale in 1.01f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 32;
            let f = Field::new(n, n, 1, (0..n * n).map(|_| rng.random::<f64>()).collect()).unwrap();
            let s = center_shift(&dft2(&f).unwrap());
            let split = split_bands(&s, 0.5).unwrap();
            let mut boosted = split.clone();
            for z in boosted.high.data.iter_mut() {
                *z *= scale;
            }
            let before = radial_profile_of(&s).unwrap();
            let after = radial_profile_of(&boosted.recombine()).unwrap();
            // rings 12..16 lie entirely outside the offset-8 square
            for k in 12..16 {
                prop_assert!(after.values[k] > before.values[k]);
            }
        }
    }
}
