//! Reconstruction network: a four-level encoder–decoder of frequency-enhanced
//! transformer blocks, trained to undo high-frequency replacement on real
//! images only.

mod container;
mod model;

use serde::{Deserialize, Serialize};

pub use container::{FORMAT_VERSION, MAGIC};
pub use model::{FetConfig, ParamStore, LEVELS, MIN_SIDE};

use crate::diff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::image::{Field, Image};
use crate::manifest::Role;
use crate::shr::{Draws, RealCorpus, ShrParams};
use crate::seed;
use model::Arch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub pixel: f64,
    pub frequency: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epochs: usize,
    /// Mean loss per epoch.
    pub history: Vec<LossReport>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FetModel {
    pub config: FetConfig,
    pub image_channels: usize,
    pub params: ParamStore,
    pub metadata: TrainingMetadata,
    arch: Arch,
}

const FUSION_NOTE: &str = "fusion normalization is per-position layer normalization, not batch normalization";

impl FetModel {
    /// Freshly initialized network; the output convolution is zero, so the
    /// model starts as the identity map.
    pub fn new(config: FetConfig, image_channels: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if !(image_channels == 1 || image_channels == 3) {
            return Err(Error::InvalidArgument(format!(
                "images must have 1 or 3 channels, got {image_channels}"
            )));
        }
        let (arch, params) = Arch::build(&config, image_channels, seed);
        Ok(FetModel {
            config,
            image_channels,
            params,
            metadata: TrainingMetadata {
                seed,
                notes: vec![FUSION_NOTE.to_string()],
                ..TrainingMetadata::default()
            },
            arch,
        })
    }

    /// Name of the output convolution weight.
    pub fn output_weight_name(&self) -> &str {
        &self.params.names[self.arch.output_weight()]
    }

    /// Adds every parameter to `g`, differentiable when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params
            .tensors
            .iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect()
    }

    /// Unclamped forward pass on an `[H,W,C]` node with parameters `p`.
    pub fn forward(&self, g: &mut Graph, p: &[Var], x: Var) -> Result<Var> {
        if g.shape(x).get(2) != Some(&self.image_channels) {
            return Err(Error::Shape(format!(
                "model expects {} channels, input is {:?}",
                self.image_channels,
                g.shape(x)
            )));
        }
        self.arch.forward(g, p, x)
    }

    pub fn forward_field(&self, input: &Field) -> Result<Field> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let x = g.constant(field_tensor(input));
        let y = self.forward(&mut g, &p, x)?;
        let data = g.value(y).data().to_vec();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("network produced non-finite output".into()));
        }
        Field::new(input.height, input.width, input.channels, data)
    }

    /// Inference: forward pass clamped to `[0, 1]`.
    pub fn reconstruct(&self, image: &Image) -> Result<Image> {
        Ok(self.forward_field(image.field())?.clamp_to_image().0)
    }
}

pub fn field_tensor(f: &Field) -> Tensor {
    Tensor::new(vec![f.height, f.width, f.channels], f.data.clone()).expect("field dims are valid")
}

/// Graph form of the loss: `(pixel, frequency, total)` nodes.
pub fn loss_nodes(g: &mut Graph, original: Var, recon: Var, lambda: f64) -> Result<(Var, Var, Var)> {
    let (h, w, c) = match *g.shape(original) {
        [h, w, c] => (h, w, c),
        ref s => return Err(Error::Shape(format!("loss input {s:?}"))),
    };
    let diff = g.sub(recon, original)?;
    let sq = g.square(diff);
    let pixel = g.mean(sq);
    let spec = g.fft2(diff)?;
    let spec_sq = g.square(spec);
    let spec_sum = g.sum(spec_sq);
    let n = (h * w) as f64;
    let freq = g.scale(spec_sum, 1.0 / (n * n * c as f64));
    let weighted = g.scale(freq, lambda);
    let total = g.add(pixel, weighted)?;
    Ok((pixel, freq, total))
}

/// Mean squared pixel error plus `λ` times the mean squared spectral error
/// scaled by `1/(HW)²C`.
pub fn rhm_loss(original: &Field, recon: &Field, lambda: f64) -> Result<LossReport> {
    if !original.same_dims(recon) {
        return Err(Error::Shape("loss operands differ in shape".into()));
    }
    let mut g = Graph::new();
    let a = g.constant(field_tensor(original));
    let b = g.constant(field_tensor(recon));
    let (p, f, t) = loss_nodes(&mut g, a, b, lambda)?;
    Ok(LossReport {
        pixel: g.value(p).item(),
        frequency: g.value(f).item(),
        total: g.value(t).item(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || params.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        Adam {
            cfg,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    pub fn update(&mut self, params: &mut ParamStore, grads: &[Tensor]) {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        for (((t, g), m), v) in params.tensors.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, gv), mv), vv) in t.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = c.beta1 * *mv + (1.0 - c.beta1) * gv;
                *vv = c.beta2 * *vv + (1.0 - c.beta2) * gv * gv;
                *p -= c.lr * (*mv / bc1) / ((*vv / bc2).sqrt() + c.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from `lr` to zero over all steps.
    #[default]
    Cosine,
}

impl LrSchedule {
    pub fn rate(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                0.5 * base * (1.0 + (std::f64::consts::PI * step as f64 / total.max(1) as f64).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            adam: AdamConfig::default(),
            schedule: LrSchedule::default(),
            seed: 0,
        }
    }
}

/// One gradient step on `(input → target)`; returns the loss before the step.
pub fn train_step(
    model: &mut FetModel,
    adam: &mut Adam,
    input: &Field,
    target: &Field,
) -> Result<LossReport> {
    let mut g = Graph::new();
    let p = model.bind(&mut g, true);
    let x = g.constant(field_tensor(input));
    let y = g.constant(field_tensor(target));
    let out = model.forward(&mut g, &p, x)?;
    let (pixel, freq, total) = loss_nodes(&mut g, y, out, model.config.lambda)?;
    let report = LossReport {
        pixel: g.value(pixel).item(),
        frequency: g.value(freq).item(),
        total: g.value(total).item(),
    };
    if !report.total.is_finite() {
        return Err(Error::Numerical("training loss is not finite".into()));
    }
    let grads = g.backward(total)?;
    let grads: Vec<Tensor> = p.iter().map(|v| grads.get(*v)).collect();
    adam.update(&mut model.params, &grads);
    Ok(report)
}

/// Trains on real images only. Each epoch perturbs every image with the
/// high-frequency replacement against the remaining images under fresh
/// draws, then fits the network to map it back.
pub fn train(
    images: &[Image],
    roles: &[Role],
    shr: &ShrParams,
    config: &FetConfig,
    train: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &LossReport),
) -> Result<FetModel> {
    if roles.len() != images.len() {
        return Err(Error::InvalidArgument("one role per training image is required".into()));
    }
    if let Some(i) = roles.iter().position(|r| *r != Role::Real) {
        return Err(Error::Contract(format!(
            "training image {i} is tagged synthetic; the reconstructor trains on real images only"
        )));
    }
    if images.len() < 2 {
        return Err(Error::InvalidArgument("training needs at least two real images".into()));
    }
    let first = &images[0];
    if images.iter().any(|im| !im.same_dims(first)) {
        return Err(Error::Shape("training images differ in dimensions".into()));
    }
    let shr = ShrParams {
        k: shr.k.min(images.len() - 1),
        seed: seed::derive(train.seed, 1),
        ..shr.clone()
    };
    let corpus = RealCorpus::new(images, vec![None; images.len()], &shr)?;
    let mut model = FetModel::new(config.clone(), first.channels(), train.seed)?;
    let mut adam = Adam::new(train.adam, &model.params);
    let n = images.len();
    for epoch in 0..train.epochs {
        let mut sum = LossReport {
            pixel: 0.0,
            frequency: 0.0,
            total: 0.0,
        };
        for (i, target) in images.iter().enumerate() {
            adam.set_lr(train.schedule.rate(train.adam.lr, epoch * n + i, train.epochs * n));
            let draws = Draws::Seeded((epoch * n + i) as u64);
            let perturbed = corpus.calibrate(target, draws, Some(i), None)?.image;
            let r = train_step(&mut model, &mut adam, perturbed.field(), target.field())?;
            sum.pixel += r.pixel;
            sum.frequency += r.frequency;
            sum.total += r.total;
        }
        let mean = LossReport {
            pixel: sum.pixel / n as f64,
            frequency: sum.frequency / n as f64,
            total: sum.total / n as f64,
        };
        model.metadata.history.push(mean);
        model.metadata.epochs = epoch + 1;
        on_epoch(epoch, &mean);
    }
    Ok(model)
}

/// Loss-history CSV: `epoch,pixel,frequency,total`.
pub fn history_csv(history: &[LossReport]) -> String {
    let mut out = String::from("epoch,pixel,frequency,total\n");
    for (i, r) in history.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", i + 1, r.pixel, r.frequency, r.total));
    }
    out
}

pub fn psnr(reference: &Field, test: &Field) -> f64 {
    let mse = reference
        .data
        .iter()
        .zip(&test.data)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / reference.data.len() as f64;
    10.0 * (1.0 / mse).log10()
}

#[cfg(test)]
mod tests;
