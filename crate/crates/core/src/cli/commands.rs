use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{svg, RunConfig};
use crate::desk::generate_desk_corpus;
use crate::error::{Error, Result};
use crate::image::{save_image, Image};
use crate::manifest::{DatasetManifest, ManifestEntry, Role};
use crate::probe;
use crate::retrieval::ssim;
use crate::rhm::{self, history_csv, FetModel};
use crate::shr::{Draws, RealCorpus, ShrParams};
use crate::spectral::{
    band_skewness, corpus_mean_profile, corpus_profiles, default_k_min, diagnostics_json, mean_profile,
    profile_distance, RadialProfile,
};

struct Corpus {
    manifest: DatasetManifest,
    images: Vec<Image>,
}

impl Corpus {
    fn open(dir: &Path, default_role: Role) -> Result<Self> {
        let manifest = DatasetManifest::open(dir, default_role)?;
        let images = manifest.load_images()?;
        Ok(Corpus { manifest, images })
    }

    fn labels(&self) -> Vec<Option<String>> {
        self.manifest.labels()
    }

    fn roles(&self) -> Vec<Role> {
        self.manifest.entries.iter().map(|e| e.role).collect()
    }

    fn non_empty(self, what: &str) -> Result<Self> {
        if self.images.is_empty() {
            return Err(Error::InvalidArgument(format!("{what} directory has no images")));
        }
        Ok(self)
    }
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

fn k_min(cfg: &RunConfig, profile: &RadialProfile) -> usize {
    cfg.k_min.unwrap_or_else(|| default_k_min(profile.values.len()))
}

/// Saves `images` under the corpus file names and writes a manifest that
/// carries over roles and labels.
fn save_like(out: &Path, source: &Corpus, images: &[Image]) -> Result<()> {
    let mut entries = Vec::with_capacity(images.len());
    for (entry, im) in source.manifest.entries.iter().zip(images) {
        save_image(im, out.join(&entry.path))?;
        entries.push(entry.clone());
    }
    DatasetManifest::new(out, entries).save()
}

pub fn gen(cfg: &RunConfig) -> Result<()> {
    cfg.desk.validate()?;
    let out = cfg.echo()?;
    let images = generate_desk_corpus(&cfg.desk)?;
    let role = cfg.desk.artifact.role();
    let mut entries = Vec::with_capacity(images.len());
    for (i, im) in images.iter().enumerate() {
        let path = format!("{i:04}.pgm");
        save_image(im, out.join(&path))?;
        entries.push(ManifestEntry {
            path,
            role,
            label: None,
        });
    }
    DatasetManifest::new(&out, entries).save()?;
    println!("wrote {} images to {}", images.len(), out.display());
    Ok(())
}

pub fn profile(cfg: &RunConfig) -> Result<()> {
    let input = RunConfig::require(&cfg.input_dir, "--input")?;
    let out = cfg.echo()?;
    let corpus = Corpus::open(input, Role::Real)?.non_empty("input")?;
    let p = corpus_mean_profile(&corpus.images)?;
    write(&out.join("profile.csv"), p.to_csv())?;
    if cfg.svg {
        write(&out.join("profile.svg"), svg::line_plot("mean radial profile", &[("input", &p.values)]))?;
    }
    println!("{} bands from {} images", p.values.len(), corpus.images.len());
    Ok(())
}

#[derive(Serialize)]
struct CompareReport {
    k_min: usize,
    distance: f64,
    /// `synthetic − real` per band.
    gap: Vec<f64>,
    real: Vec<f64>,
    synthetic: Vec<f64>,
}

fn pair(cfg: &RunConfig) -> Result<(Corpus, Corpus)> {
    let real = RunConfig::require(&cfg.real_dir, "--real")?;
    let synthetic = RunConfig::require(&cfg.synthetic_dir, "--synthetic")?;
    Ok((
        Corpus::open(real, Role::Real)?,
        Corpus::open(synthetic, Role::Synthetic)?,
    ))
}

pub fn compare(cfg: &RunConfig) -> Result<()> {
    let (real, synthetic) = pair(cfg)?;
    let out = cfg.echo()?;
    let a = corpus_mean_profile(&real.non_empty("real")?.images)?;
    let b = corpus_mean_profile(&synthetic.non_empty("synthetic")?.images)?;
    let k = k_min(cfg, &a);
    let report = CompareReport {
        k_min: k,
        distance: profile_distance(&a, &b, k)?,
        gap: b.values.iter().zip(&a.values).map(|(s, r)| s - r).collect(),
        real: a.values.clone(),
        synthetic: b.values.clone(),
    };
    write_json(&out.join("compare.json"), &report)?;
    if cfg.svg {
        let plot = svg::line_plot("radial profiles", &[("real", &a.values), ("synthetic", &b.values)]);
        write(&out.join("compare.svg"), plot)?;
    }
    println!("profile distance (k >= {k}): {}", report.distance);
    Ok(())
}

#[derive(Serialize)]
struct ShrLogEntry<'a> {
    file: &'a str,
    neighbors: &'a [usize],
    mu: &'a [f64],
    sigma: &'a [f64],
    eps_mu: &'a [f64],
    eps_sigma: &'a [f64],
    clamp_rate: f64,
    clamp_warning: bool,
    max_imaginary: f64,
}

pub fn shr(cfg: &RunConfig) -> Result<()> {
    let (real, synthetic) = pair(cfg)?;
    let out = cfg.echo()?;
    let real = real.non_empty("real")?;
    let corpus = RealCorpus::new(&real.images, real.labels(), &cfg.shr)?;
    let outcomes = corpus.calibrate_all(&synthetic.images, &synthetic.labels())?;
    let images: Vec<Image> = outcomes.iter().map(|o| o.image.clone()).collect();
    save_like(&out, &synthetic, &images)?;
    let log: Vec<ShrLogEntry> = synthetic
        .manifest
        .entries
        .iter()
        .zip(&outcomes)
        .map(|(e, o)| ShrLogEntry {
            file: &e.path,
            neighbors: &o.neighbors,
            mu: &o.target.mu,
            sigma: &o.target.sigma,
            eps_mu: &o.target.eps_mu,
            eps_sigma: &o.target.eps_sigma,
            clamp_rate: o.clamp_rate,
            clamp_warning: o.clamp_warning(cfg.shr.clamp_warning),
            max_imaginary: o.max_imaginary,
        })
        .collect();
    write_json(&out.join("shr_log.json"), &log)?;
    let flagged = log.iter().filter(|e| e.clamp_warning).count();
    if flagged > 0 {
        eprintln!("warning: {flagged} outputs clamped more than {} of their pixels", cfg.shr.clamp_warning);
    }
    println!("recalibrated {} images against {} reals", images.len(), corpus.len());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let real = RunConfig::require(&cfg.real_dir, "--real")?;
    let out = cfg.echo()?;
    let corpus = Corpus::open(real, Role::Real)?;
    let model = rhm::train(
        &corpus.images,
        &corpus.roles(),
        &cfg.shr,
        &cfg.fet,
        &cfg.train,
        |epoch, r| println!("epoch {} total {:.6e} pixel {:.6e} frequency {:.6e}", epoch + 1, r.total, r.pixel, r.frequency),
    )?;
    model.save(out.join("model.frec"))?;
    write(&out.join("loss_history.csv"), history_csv(&model.metadata.history))?;
    Ok(())
}

#[derive(Serialize)]
struct Bench {
    images: usize,
    mean_ms: f64,
    total_ms: f64,
}

pub fn recalibrate(cfg: &RunConfig) -> Result<()> {
    let input = RunConfig::require(&cfg.input_dir, "--input")?;
    let real = RunConfig::require(&cfg.real_dir, "--real")?;
    let model_path = RunConfig::require(&cfg.model, "--model")?;
    let out = cfg.echo()?;
    let inputs = Corpus::open(input, Role::Synthetic)?;
    let real = Corpus::open(real, Role::Real)?.non_empty("real")?;
    let model = FetModel::load(model_path)?;
    let corpus = RealCorpus::new(&real.images, real.labels(), &cfg.shr)?;
    let labels = inputs.labels();
    let timed: Vec<(Image, f64)> = inputs
        .images
        .par_iter()
        .enumerate()
        .map(|(i, im)| {
            let start = Instant::now();
            let perturbed = corpus.calibrate(im, Draws::Seeded(i as u64), None, labels[i].as_deref())?;
            let rec = model.reconstruct(&perturbed.image)?;
            Ok((rec, start.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<Result<_>>()?;
    let (images, ms): (Vec<Image>, Vec<f64>) = timed.into_iter().unzip();
    save_like(&out, &inputs, &images)?;
    if cfg.bench {
        let total: f64 = ms.iter().sum();
        let bench = Bench {
            images: ms.len(),
            mean_ms: if ms.is_empty() { 0.0 } else { total / ms.len() as f64 },
            total_ms: total,
        };
        write_json(&out.join("bench.json"), &bench)?;
        println!("mean {:.2} ms per image over {} images", bench.mean_ms, bench.images);
    }
    println!("recalibrated {} images", images.len());
    Ok(())
}

pub fn probe(cfg: &RunConfig) -> Result<()> {
    let (real, synthetic) = pair(cfg)?;
    let out = cfg.echo()?;
    let a = corpus_profiles(&real.images)?;
    let b = corpus_profiles(&synthetic.images)?;
    let k = a.first().map_or(0, |p| k_min(cfg, p));
    let report = probe::probe(&a, &b, k, cfg.seed)?;
    write_json(&out.join("probe.json"), &report)?;
    println!("held-out accuracy {:.4}", report.accuracy);
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let (real, synthetic) = pair(cfg)?;
    if cfg.sweep_ratios.is_empty() || cfg.sweep_ks.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    let out = cfg.echo()?;
    let real = real.non_empty("real")?;
    let synthetic = synthetic.non_empty("synthetic")?;
    let target = corpus_mean_profile(&real.images)?;
    let k = k_min(cfg, &target);
    let mut csv = String::from("ratio,k,gap,ssim,seconds\n");
    for &ratio in &cfg.sweep_ratios {
        for &kk in &cfg.sweep_ks {
            let params = ShrParams {
                ratio,
                k: kk,
                ..cfg.shr.clone()
            };
            let start = Instant::now();
            let corpus = RealCorpus::new(&real.images, real.labels(), &params)?;
            let outcomes = corpus.calibrate_all(&synthetic.images, &synthetic.labels())?;
            let seconds = start.elapsed().as_secs_f64();
            let calibrated: Vec<Image> = outcomes.into_iter().map(|o| o.image).collect();
            let gap = profile_distance(&target, &mean_profile(&corpus_profiles(&calibrated)?)?, k)?;
            let similarity = calibrated
                .iter()
                .zip(&synthetic.images)
                .map(|(a, b)| ssim(a, b))
                .collect::<Result<Vec<f64>>>()?;
            let mean_ssim = similarity.iter().sum::<f64>() / similarity.len() as f64;
            csv.push_str(&format!("{ratio},{kk},{gap},{mean_ssim},{seconds}\n"));
            println!("r={ratio} K={kk} gap={gap:.6} ssim={mean_ssim:.4} {seconds:.2}s");
        }
    }
    write(&out.join("sweep.csv"), csv)
}

pub fn diagnose(cfg: &RunConfig) -> Result<()> {
    let input = RunConfig::require(&cfg.input_dir, "--input")?;
    let out = cfg.echo()?;
    let corpus = Corpus::open(input, Role::Real)?;
    let diag = band_skewness(&corpus.images, &cfg.bands)?;
    write(&out.join("diagnose.json"), diagnostics_json(&diag)?)?;
    for (band, d) in &diag {
        match d.skewness {
            Some(s) => println!("band {band}: skewness {s:.4}"),
            None => println!("band {band}: skewness undefined"),
        }
    }
    Ok(())
}
