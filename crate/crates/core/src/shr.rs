//! Statistical high-frequency replacement: re-normalize a synthetic image's
//! high-band amplitudes to statistics sampled from its nearest real images.

use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fft::{idft2, uncenter_shift, Spectrum};
use crate::image::Image;
use crate::retrieval::{RetrievalParams, SsimIndex};
use crate::seed;
use crate::spectral::{
    centered_spectrum, hf_channel_stats, split_bands, ChannelStats, FrequencyMask, SpreadMode,
};

/// Gaussian model of high-band statistics over a retrieved batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub mean_mu: Vec<f64>,
    pub mean_sigma: Vec<f64>,
    pub dev_mu: Vec<f64>,
    pub dev_sigma: Vec<f64>,
}

impl EnsembleStats {
    pub fn channels(&self) -> usize {
        self.mean_mu.len()
    }
}

/// Sampled per-channel targets with the standard-normal draws behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub eps_mu: Vec<f64>,
    pub eps_sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShrParams {
    pub ratio: f64,
    pub k: usize,
    pub sigma_floor: f64,
    /// Standardize with the ensemble centers and draw σ̂ around `Σ_μ`.
    pub literal_eq3: bool,
    pub spread: SpreadMode,
    pub seed: u64,
    pub comparison_side: Option<usize>,
    pub class_conditional: bool,
    /// Fraction of clamped pixels above which an output is flagged.
    pub clamp_warning: f64,
}

impl Default for ShrParams {
    fn default() -> Self {
        ShrParams {
            ratio: 0.5,
            k: 200,
            sigma_floor: 1e-6,
            literal_eq3: false,
            spread: SpreadMode::Std,
            seed: 0,
            comparison_side: Some(64),
            class_conditional: true,
            clamp_warning: 0.01,
        }
    }
}

impl ShrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mask ratio {} must lie in (0, 1)",
                self.ratio
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be positive".into()));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::InvalidArgument("sigma floor must be positive".into()));
        }
        Ok(())
    }

    pub fn retrieval(&self) -> RetrievalParams {
        RetrievalParams {
            k: self.k,
            comparison_side: self.comparison_side,
            class_conditional: self.class_conditional,
            ..RetrievalParams::default()
        }
    }
}

pub fn ensemble_stats(stats: &[&ChannelStats]) -> Result<EnsembleStats> {
    let first = stats
        .first()
        .ok_or_else(|| Error::InvalidArgument("ensemble of zero statistics".into()))?;
    let ch = first.channels();
    if stats.iter().any(|s| s.channels() != ch || s.std.len() != ch) {
        return Err(Error::Shape("ensemble mixes channel counts".into()));
    }
    let k = stats.len() as f64;
    let moments = |pick: &dyn Fn(&ChannelStats) -> f64| {
        let mean = stats.iter().map(|s| pick(s)).sum::<f64>() / k;
        let dev = (stats.iter().map(|s| (pick(s) - mean).powi(2)).sum::<f64>() / k).sqrt();
        (mean, dev)
    };
    let mut out = EnsembleStats {
        mean_mu: Vec::with_capacity(ch),
        mean_sigma: Vec::with_capacity(ch),
        dev_mu: Vec::with_capacity(ch),
        dev_sigma: Vec::with_capacity(ch),
    };
    for c in 0..ch {
        let (m, d) = moments(&|s| s.mean[c]);
        out.mean_mu.push(m);
        out.dev_mu.push(d);
        let (m, d) = moments(&|s| s.std[c]);
        out.mean_sigma.push(m);
        out.dev_sigma.push(d);
    }
    Ok(out)
}

/// Targets from explicit draws; `μ̂` is clamped at 0 and `σ̂` at the floor.
pub fn target_from_draws(
    ensemble: &EnsembleStats,
    eps_mu: Vec<f64>,
    eps_sigma: Vec<f64>,
    sigma_floor: f64,
    literal_eq3: bool,
) -> Result<TargetStats> {
    let ch = ensemble.channels();
    if eps_mu.len() != ch || eps_sigma.len() != ch {
        return Err(Error::Shape(format!(
            "expected {ch} draws per statistic, got {} and {}",
            eps_mu.len(),
            eps_sigma.len()
        )));
    }
    let mu = (0..ch)
        .map(|c| (ensemble.mean_mu[c] + eps_mu[c] * ensemble.dev_mu[c]).max(0.0))
        .collect();
    let sigma = (0..ch)
        .map(|c| {
            let dev = if literal_eq3 {
                ensemble.dev_mu[c]
            } else {
                ensemble.dev_sigma[c]
            };
            (ensemble.mean_sigma[c] + eps_sigma[c] * dev).max(sigma_floor)
        })
        .collect();
    Ok(TargetStats {
        mu,
        sigma,
        eps_mu,
        eps_sigma,
    })
}

pub fn sample_target_stats(
    ensemble: &EnsembleStats,
    rng: &mut impl Rng,
    sigma_floor: f64,
    literal_eq3: bool,
) -> TargetStats {
    let ch = ensemble.channels();
    let mut eps_mu = Vec::with_capacity(ch);
    let mut eps_sigma = Vec::with_capacity(ch);
    for _ in 0..ch {
        eps_mu.push(StandardNormal.sample(rng));
        eps_sigma.push(StandardNormal.sample(rng));
    }
    target_from_draws(ensemble, eps_mu, eps_sigma, sigma_floor, literal_eq3)
        .expect("draw count matches channel count")
}

/// Maps each support amplitude `a` to `σ̂(a − μ_c)/σ_c + μ̂`, phase kept,
/// where `(μ_c, σ_c)` is `center`. A zero `σ_c` sends every amplitude to `μ̂`.
pub fn replace_hf_against(
    high: &Spectrum,
    mask: &FrequencyMask,
    target: &TargetStats,
    center: &ChannelStats,
) -> Result<Spectrum> {
    let ch = high.channels;
    if target.mu.len() != ch || center.channels() != ch {
        return Err(Error::Shape("statistics do not match spectrum channels".into()));
    }
    let mut out = high.clone();
    for y in 0..high.height {
        for x in 0..high.width {
            if mask.is_low(y, x) {
                continue;
            }
            for c in 0..ch {
                let i = high.index(y, x, c);
                let z = high.data[i];
                let a = z.norm();
                let mapped = if center.std[c] > 0.0 {
                    target.sigma[c] * (a - center.mean[c]) / center.std[c] + target.mu[c]
                } else {
                    target.mu[c]
                }
                .max(0.0);
                out.data[i] = if a > 0.0 {
                    z * (mapped / a)
                } else {
                    Complex64::new(mapped, 0.0)
                };
            }
        }
    }
    Ok(out)
}

/// Replacement standardized with the band's own statistics.
pub fn replace_hf(
    high: &Spectrum,
    mask: &FrequencyMask,
    target: &TargetStats,
    spread: SpreadMode,
) -> Result<Spectrum> {
    let own = hf_channel_stats(high, mask, spread)?;
    replace_hf_against(high, mask, target, &own)
}

/// Where the standard-normal draws for one image come from.
#[derive(Debug, Clone, Copy)]
pub enum Draws<'a> {
    /// Per-image stream derived from the run seed and this index.
    Seeded(u64),
    Fixed { eps_mu: &'a [f64], eps_sigma: &'a [f64] },
}

#[derive(Debug, Clone)]
pub struct ShrOutcome {
    pub image: Image,
    pub target: TargetStats,
    pub ensemble: EnsembleStats,
    pub neighbors: Vec<usize>,
    pub clamp_rate: f64,
    pub max_imaginary: f64,
}

impl ShrOutcome {
    pub fn clamp_warning(&self, threshold: f64) -> bool {
        self.clamp_rate > threshold
    }
}

/// Stable digest of a corpus: dimensions plus every sample's bit pattern.
pub fn corpus_hash(images: &[Image]) -> String {
    let mut h = Sha256::new();
    h.update((images.len() as u64).to_le_bytes());
    for im in images {
        for d in [im.height(), im.width(), im.channels()] {
            h.update((d as u64).to_le_bytes());
        }
        for v in im.pixels() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsCache {
    pub corpus_hash: String,
    pub ratio: f64,
    pub spread: SpreadMode,
    pub stats: Vec<ChannelStats>,
}

impl StatsCache {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Largest imaginary residual tolerated after the inverse transform.
pub const HERMITIAN_TOLERANCE: f64 = 1e-8;

/// The real corpus with its retrieval index and per-image high-band
/// statistics, built once and shared read-only.
pub struct RealCorpus {
    index: SsimIndex,
    stats: Vec<ChannelStats>,
    hash: String,
    params: ShrParams,
}

fn corpus_stats(images: &[Image], params: &ShrParams) -> Result<Vec<ChannelStats>> {
    use rayon::prelude::*;
    images
        .par_iter()
        .map(|im| {
            let split = split_bands(&centered_spectrum(im)?, params.ratio)?;
            hf_channel_stats(&split.high, &split.mask, params.spread)
        })
        .collect()
}

impl RealCorpus {
    pub fn new(images: &[Image], labels: Vec<Option<String>>, params: &ShrParams) -> Result<Self> {
        Self::build(images, labels, params, None)
    }

    /// As [`RealCorpus::new`], reusing `cache` when it matches the corpus
    /// and settings, and rewriting it otherwise.
    pub fn with_cache(
        images: &[Image],
        labels: Vec<Option<String>>,
        params: &ShrParams,
        cache: &Path,
    ) -> Result<Self> {
        Self::build(images, labels, params, Some(cache))
    }

    fn build(
        images: &[Image],
        labels: Vec<Option<String>>,
        params: &ShrParams,
        cache: Option<&Path>,
    ) -> Result<Self> {
        params.validate()?;
        let index = SsimIndex::with_labels(images, labels, &params.retrieval())?;
        let hash = corpus_hash(images);
        let cached = cache
            .filter(|p| p.exists())
            .map(StatsCache::load)
            .transpose()?
            .filter(|c| {
                c.corpus_hash == hash
                    && c.ratio == params.ratio
                    && c.spread == params.spread
                    && c.stats.len() == images.len()
            });
        let stats = match cached {
            Some(c) => c.stats,
            None => {
                let stats = corpus_stats(images, params)?;
                if let Some(path) = cache {
                    StatsCache {
                        corpus_hash: hash.clone(),
                        ratio: params.ratio,
                        spread: params.spread,
                        stats: stats.clone(),
                    }
                    .save(path)?;
                }
                stats
            }
        };
        Ok(RealCorpus {
            index,
            stats,
            hash,
            params: params.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn params(&self) -> &ShrParams {
        &self.params
    }

    pub fn stats(&self) -> &[ChannelStats] {
        &self.stats
    }

    /// Runs the full replacement on one image. `exclude` skips one corpus
    /// slot, used when the image is itself a member of the corpus.
    pub fn calibrate(
        &self,
        image: &Image,
        draws: Draws<'_>,
        exclude: Option<usize>,
        label: Option<&str>,
    ) -> Result<ShrOutcome> {
        let p = &self.params;
        let neighbors = self.index.top_k(image, exclude, label)?;
        let picked: Vec<&ChannelStats> = neighbors.iter().map(|&i| &self.stats[i]).collect();
        let ensemble = ensemble_stats(&picked)?;
        let target = match draws {
            Draws::Seeded(i) => {
                let mut rng = seed::stream(p.seed, i);
                sample_target_stats(&ensemble, &mut rng, p.sigma_floor, p.literal_eq3)
            }
            Draws::Fixed { eps_mu, eps_sigma } => target_from_draws(
                &ensemble,
                eps_mu.to_vec(),
                eps_sigma.to_vec(),
                p.sigma_floor,
                p.literal_eq3,
            )?,
        };
        let split = split_bands(&centered_spectrum(image)?, p.ratio)?;
        let high = if p.literal_eq3 {
            let center = ChannelStats {
                mean: ensemble.mean_mu.clone(),
                std: ensemble.mean_sigma.clone(),
            };
            replace_hf_against(&split.high, &split.mask, &target, &center)?
        } else {
            replace_hf(&split.high, &split.mask, &target, p.spread)?
        };
        let merged = crate::spectral::BandSplit {
            low: split.low,
            high,
            mask: split.mask,
        }
        .recombine();
        let inverse = idft2(&uncenter_shift(&merged))?;
        if inverse.field.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("replacement produced non-finite pixels".into()));
        }
        if inverse.max_imaginary > HERMITIAN_TOLERANCE {
            return Err(Error::Numerical(format!(
                "Hermitian residual {:.3e} after replacement",
                inverse.max_imaginary
            )));
        }
        let (out, clamped) = inverse.field.clamp_to_image();
        Ok(ShrOutcome {
            clamp_rate: clamped as f64 / out.pixels().len() as f64,
            image: out,
            target,
            ensemble,
            neighbors,
            max_imaginary: inverse.max_imaginary,
        })
    }

    /// Calibrates a batch in parallel; image `i` draws from stream `i`.
    pub fn calibrate_all(
        &self,
        images: &[Image],
        labels: &[Option<String>],
    ) -> Result<Vec<ShrOutcome>> {
        use rayon::prelude::*;
        images
            .par_iter()
            .enumerate()
            .map(|(i, im)| {
                let label = labels.get(i).and_then(|l| l.as_deref());
                self.calibrate(im, Draws::Seeded(i as u64), None, label)
            })
            .collect()
    }
}

/// One-shot replacement with draws from `rng`.
pub fn shr_image(
    synthetic: &Image,
    real_corpus: &[Image],
    params: &ShrParams,
    rng: &mut impl Rng,
) -> Result<Image> {
    let corpus = RealCorpus::new(real_corpus, vec![None; real_corpus.len()], params)?;
    let ch = synthetic.channels();
    let eps_mu: Vec<f64> = (0..ch).map(|_| StandardNormal.sample(rng)).collect();
    let eps_sigma: Vec<f64> = (0..ch).map(|_| StandardNormal.sample(rng)).collect();
    let draws = Draws::Fixed {
        eps_mu: &eps_mu,
        eps_sigma: &eps_sigma,
    };
    Ok(corpus.calibrate(synthetic, draws, None, None)?.image)
}
