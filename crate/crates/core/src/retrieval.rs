//! Gaussian-windowed SSIM and top-K nearest-real retrieval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalParams {
    pub k: usize,
    /// Images are box-downsampled to this side before scoring; `None`
    /// scores at full resolution.
    pub comparison_side: Option<usize>,
    pub window: usize,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
    /// Restrict candidates to reals sharing the query's class label when
    /// labels are available.
    pub class_conditional: bool,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams {
            k: 200,
            comparison_side: Some(64),
            window: 11,
            sigma: 1.5,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
            class_conditional: true,
        }
    }
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of an `h`×`w` plane.
fn blur_valid(plane: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = kernel.iter().zip(&row[x..x + k]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (j, kv) in kernel.iter().enumerate() {
                acc += kv * tmp[(y + j) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Per-channel local statistics reused across comparisons.
#[derive(Debug, Clone)]
struct PreparedPlane {
    plane: Vec<f64>,
    mean: Vec<f64>,
    variance: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Prepared {
    height: usize,
    width: usize,
    planes: Vec<PreparedPlane>,
}

struct Scorer {
    kernel: Vec<f64>,
    c1: f64,
    c2: f64,
    comparison_side: Option<usize>,
}

fn box_downsample(plane: &[f64], h: usize, w: usize, factor: usize) -> Vec<f64> {
    let (oh, ow) = (h / factor, w / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for dy in 0..factor {
                for dx in 0..factor {
                    acc += plane[(y * factor + dy) * w + x * factor + dx];
                }
            }
            out[y * ow + x] = acc * norm;
        }
    }
    out
}

impl Scorer {
    fn new(params: &RetrievalParams, height: usize, width: usize) -> Result<Self> {
        let side = params
            .comparison_side
            .map_or(height.min(width), |s| s.min(height.min(width)));
        let scaled_h = height / (height.min(width) / side).max(1);
        let scaled_w = width / (height.min(width) / side).max(1);
        // windows never exceed the raster; keep them odd
        let mut window = params.window.min(scaled_h).min(scaled_w);
        if window.is_multiple_of(2) {
            window -= 1;
        }
        if window == 0 {
            return Err(Error::InvalidArgument("SSIM window is empty".into()));
        }
        Ok(Scorer {
            kernel: gaussian_kernel(window, params.sigma),
            c1: params.c1,
            c2: params.c2,
            comparison_side: params.comparison_side,
        })
    }

    fn prepare(&self, image: &Image) -> Prepared {
        let (h, w) = (image.height(), image.width());
        let factor = match self.comparison_side {
            Some(side) if h.min(w) > side => h.min(w) / side,
            _ => 1,
        };
        let (dh, dw) = (h / factor, w / factor);
        let k = self.kernel.len();
        let planes = (0..image.channels())
            .map(|c| {
                let plane = box_downsample(&image.field().plane(c), h, w, factor);
                let mean = blur_valid(&plane, dh, dw, &self.kernel);
                let sq: Vec<f64> = plane.iter().map(|v| v * v).collect();
                let variance = blur_valid(&sq, dh, dw, &self.kernel)
                    .iter()
                    .zip(&mean)
                    .map(|(s, m)| s - m * m)
                    .collect();
                PreparedPlane {
                    plane,
                    mean,
                    variance,
                }
            })
            .collect();
        debug_assert!(dh >= k && dw >= k);
        Prepared {
            height: dh,
            width: dw,
            planes,
        }
    }

    fn score(&self, a: &Prepared, b: &Prepared) -> f64 {
        let mut total = 0.0;
        for (pa, pb) in a.planes.iter().zip(&b.planes) {
            let prod: Vec<f64> = pa.plane.iter().zip(&pb.plane).map(|(x, y)| x * y).collect();
            let cross = blur_valid(&prod, a.height, a.width, &self.kernel);
            let n = cross.len();
            let mut acc = 0.0;
            for i in 0..n {
                let (ma, mb) = (pa.mean[i], pb.mean[i]);
                let cov = cross[i] - ma * mb;
                let num = (2.0 * ma * mb + self.c1) * (2.0 * cov + self.c2);
                let den = (ma * ma + mb * mb + self.c1) * (pa.variance[i] + pb.variance[i] + self.c2);
                acc += num / den;
            }
            total += acc / n as f64;
        }
        total / a.planes.len() as f64
    }
}

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::Shape(format!(
            "SSIM operands differ: {}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

/// Mean SSIM at full resolution with the default window and stabilizers.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    let params = RetrievalParams {
        comparison_side: None,
        ..RetrievalParams::default()
    };
    ssim_with(a, b, &params)
}

pub fn ssim_with(a: &Image, b: &Image, params: &RetrievalParams) -> Result<f64> {
    check_pair(a, b)?;
    let scorer = Scorer::new(params, a.height(), a.width())?;
    Ok(scorer.score(&scorer.prepare(a), &scorer.prepare(b)))
}

/// A corpus with its SSIM statistics precomputed, queried repeatedly.
pub struct SsimIndex {
    scorer: Scorer,
    entries: Vec<Prepared>,
    dims: (usize, usize, usize),
    labels: Vec<Option<String>>,
    k: usize,
    class_conditional: bool,
}

impl SsimIndex {
    pub fn new(corpus: &[Image], params: &RetrievalParams) -> Result<Self> {
        Self::with_labels(corpus, vec![None; corpus.len()], params)
    }

    pub fn with_labels(
        corpus: &[Image],
        labels: Vec<Option<String>>,
        params: &RetrievalParams,
    ) -> Result<Self> {
        use rayon::prelude::*;
        let first = corpus
            .first()
            .ok_or_else(|| Error::InvalidArgument("retrieval corpus is empty".into()))?;
        if corpus.iter().any(|im| !im.same_dims(first)) {
            return Err(Error::Shape("retrieval corpus has mixed dimensions".into()));
        }
        if params.k == 0 {
            return Err(Error::InvalidArgument("K must be positive".into()));
        }
        let scorer = Scorer::new(params, first.height(), first.width())?;
        let entries = corpus.par_iter().map(|im| scorer.prepare(im)).collect();
        Ok(SsimIndex {
            scorer,
            entries,
            dims: (first.height(), first.width(), first.channels()),
            labels,
            k: params.k,
            class_conditional: params.class_conditional,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// SSIM of `query` against every corpus entry, in corpus order.
    pub fn scores(&self, query: &Image) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        if (query.height(), query.width(), query.channels()) != self.dims {
            return Err(Error::Shape("query does not match corpus dimensions".into()));
        }
        let q = self.scorer.prepare(query);
        Ok(self.entries.par_iter().map(|e| self.scorer.score(&q, e)).collect())
    }

    /// Indices of the `min(K, candidates)` best-scoring entries, descending,
    /// ties broken by ascending index. `exclude` drops one entry (the query's
    /// own slot when retrieving within a corpus); `label` applies the
    /// class-conditional filter when enabled and labels exist.
    pub fn top_k(
        &self,
        query: &Image,
        exclude: Option<usize>,
        label: Option<&str>,
    ) -> Result<Vec<usize>> {
        let scores = self.scores(query)?;
        let label_filter = if self.class_conditional { label } else { None };
        let mut candidates: Vec<usize> = (0..scores.len())
            .filter(|&i| Some(i) != exclude)
            .filter(|&i| match (label_filter, self.labels[i].as_deref()) {
                (Some(want), Some(have)) => want == have,
                _ => true,
            })
            .collect();
        if candidates.is_empty() {
            return Err(Error::InvalidArgument("no retrieval candidates".into()));
        }
        candidates.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        candidates.truncate(self.k.min(candidates.len()));
        Ok(candidates)
    }
}

/// One-shot retrieval; see [`SsimIndex::top_k`].
pub fn top_k(query: &Image, corpus: &[Image], params: &RetrievalParams) -> Result<Vec<usize>> {
    SsimIndex::new(corpus, params)?.top_k(query, None, None)
}
