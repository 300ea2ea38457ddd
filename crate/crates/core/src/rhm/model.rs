use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

pub const LEVELS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FetConfig {
    pub base_channels: usize,
    pub blocks: [usize; LEVELS],
    pub refinement_blocks: usize,
    /// Ring width of the frequency branch.
    pub ring_width: usize,
    /// Angular samples per ring as a multiple of the level's radius.
    pub samples_per_radius: usize,
    pub expansion: f64,
    /// Weight of the frequency term in the loss.
    pub lambda: f64,
}

impl Default for FetConfig {
    fn default() -> Self {
        FetConfig {
            base_channels: 8,
            blocks: [1, 1, 1, 1],
            refinement_blocks: 1,
            ring_width: 4,
            samples_per_radius: 4,
            expansion: 2.66,
            lambda: 1.0,
        }
    }
}

impl FetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.ring_width == 0 || self.samples_per_radius == 0 {
            return Err(Error::InvalidArgument(
                "channels, ring width and angular samples must be positive".into(),
            ));
        }
        if !(self.expansion > 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument("expansion must be positive and lambda non-negative".into()));
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    fn hidden(&self, c: usize) -> usize {
        ((c as f64 * self.expansion).round() as usize).max(1)
    }
}

/// Named parameter tensors in registration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.tensors[i])
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone)]
struct Fesa {
    norm: Norm,
    qkv: Conv,
    qkv_dw: Conv,
    temperature: usize,
    project: Conv,
    gate: Conv,
    refine: Conv,
    freq_out: Conv,
    fuse: Conv,
    fuse_norm: Norm,
}

#[derive(Debug, Clone)]
struct Gdfn {
    norm: Norm,
    expand: Conv,
    dw: Conv,
    project: Conv,
    hidden: usize,
}

#[derive(Debug, Clone)]
struct Block {
    fesa: Fesa,
    gdfn: Gdfn,
}

/// Parameter layout of the network; indices point into a [`ParamStore`].
#[derive(Debug, Clone)]
pub(crate) struct Arch {
    embed: Conv,
    encoder: Vec<Vec<Block>>,
    down: Vec<Conv>,
    up: Vec<Conv>,
    merge: Vec<Conv>,
    decoder: Vec<Vec<Block>>,
    refinement: Vec<Block>,
    out: Conv,
    ring_width: usize,
    samples_per_radius: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Uniform(usize),
    Zeros,
    Ones,
}

struct Builder<'a> {
    store: ParamStore,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn tensor(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        let t = match init {
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::filled(shape, 1.0),
            Init::Uniform(fan_in) => {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let n = shape.iter().product();
                let data = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
                Tensor::new(shape.to_vec(), data).expect("shape and data agree")
            }
        };
        self.store.names.push(name);
        self.store.tensors.push(t);
        self.store.tensors.len() - 1
    }

    fn conv(&mut self, name: &str, k: usize, cin: usize, cout: usize, zero: bool) -> Conv {
        let init = if zero { Init::Zeros } else { Init::Uniform(k * k * cin) };
        Conv {
            w: self.tensor(format!("{name}.weight"), &[k, k, cin, cout], init),
            b: self.tensor(format!("{name}.bias"), &[cout], Init::Zeros),
        }
    }

    fn depthwise(&mut self, name: &str, c: usize) -> Conv {
        Conv {
            w: self.tensor(format!("{name}.weight"), &[3, 3, c], Init::Uniform(9)),
            b: self.tensor(format!("{name}.bias"), &[c], Init::Zeros),
        }
    }

    fn norm(&mut self, name: &str, c: usize) -> Norm {
        Norm {
            gamma: self.tensor(format!("{name}.gamma"), &[c], Init::Ones),
            beta: self.tensor(format!("{name}.beta"), &[c], Init::Zeros),
        }
    }

    fn block(&mut self, name: &str, c: usize, cfg: &FetConfig) -> Block {
        let fesa = Fesa {
            norm: self.norm(&format!("{name}.fesa.norm"), c),
            qkv: self.conv(&format!("{name}.fesa.qkv"), 1, c, 3 * c, false),
            qkv_dw: self.depthwise(&format!("{name}.fesa.qkv_dw"), 3 * c),
            temperature: self.tensor(format!("{name}.fesa.temperature"), &[1], Init::Ones),
            project: self.conv(&format!("{name}.fesa.project"), 1, c, c, false),
            gate: self.conv(&format!("{name}.fesa.gate"), 3, 1, 1, false),
            refine: self.conv(&format!("{name}.fesa.refine"), 3, 1, 1, false),
            freq_out: self.conv(&format!("{name}.fesa.freq_out"), 1, 1, c, false),
            fuse: self.conv(&format!("{name}.fesa.fuse"), 1, 2 * c, c, false),
            fuse_norm: self.norm(&format!("{name}.fesa.fuse_norm"), c),
        };
        let hidden = cfg.hidden(c);
        let gdfn = Gdfn {
            norm: self.norm(&format!("{name}.gdfn.norm"), c),
            expand: self.conv(&format!("{name}.gdfn.expand"), 1, c, 2 * hidden, false),
            dw: self.depthwise(&format!("{name}.gdfn.dw"), 2 * hidden),
            project: self.conv(&format!("{name}.gdfn.project"), 1, hidden, c, false),
            hidden,
        };
        Block { fesa, gdfn }
    }
}

impl Arch {
    /// Registers every parameter of the network for `channels`-channel
    /// images; the output convolution starts at zero.
    pub(crate) fn build(cfg: &FetConfig, channels: usize, seed: u64) -> (Arch, ParamStore) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            store: ParamStore::default(),
            rng: &mut rng,
        };
        let c0 = cfg.channels(0);
        let embed = b.conv("embed", 3, channels, c0, false);
        let mut encoder = Vec::new();
        let mut down = Vec::new();
        for l in 0..LEVELS {
            let c = cfg.channels(l);
            encoder.push(
                (0..cfg.blocks[l])
                    .map(|i| b.block(&format!("encoder{l}.{i}"), c, cfg))
                    .collect(),
            );
            if l + 1 < LEVELS {
                down.push(b.conv(&format!("down{l}"), 1, 4 * c, cfg.channels(l + 1), false));
            }
        }
        let mut up = Vec::new();
        let mut merge = Vec::new();
        let mut decoder = Vec::new();
        for l in (0..LEVELS - 1).rev() {
            let c = cfg.channels(l);
            up.push(b.conv(&format!("up{l}"), 1, cfg.channels(l + 1), 4 * c, false));
            merge.push(b.conv(&format!("merge{l}"), 1, 2 * c, c, false));
            decoder.push(
                (0..cfg.blocks[l])
                    .map(|i| b.block(&format!("decoder{l}.{i}"), c, cfg))
                    .collect(),
            );
        }
        let refinement = (0..cfg.refinement_blocks)
            .map(|i| b.block(&format!("refinement.{i}"), c0, cfg))
            .collect();
        let out = b.conv("output", 3, c0, channels, true);
        let arch = Arch {
            embed,
            encoder,
            down,
            up,
            merge,
            decoder,
            refinement,
            out,
            ring_width: cfg.ring_width,
            samples_per_radius: cfg.samples_per_radius,
        };
        (arch, b.store)
    }

    /// Index of the zero-initialized output convolution weight.
    pub(crate) fn output_weight(&self) -> usize {
        self.out.w
    }

    pub(crate) fn forward(&self, g: &mut Graph, p: &[Var], x: Var) -> Result<Var> {
        check_input(g.shape(x))?;
        let mut e = conv(g, p, self.embed, x, 1)?;
        let mut skips = Vec::with_capacity(LEVELS - 1);
        for l in 0..LEVELS {
            for block in &self.encoder[l] {
                e = self.block(g, p, block, e)?;
            }
            if l + 1 < LEVELS {
                skips.push(e);
                let u = g.pixel_unshuffle(e)?;
                e = conv(g, p, self.down[l], u, 1)?;
            }
        }
        for (i, l) in (0..LEVELS - 1).rev().enumerate() {
            let u = conv(g, p, self.up[i], e, 1)?;
            let u = g.pixel_shuffle(u)?;
            let cat = g.concat(u, skips[l])?;
            e = conv(g, p, self.merge[i], cat, 1)?;
            for block in &self.decoder[i] {
                e = self.block(g, p, block, e)?;
            }
        }
        for block in &self.refinement {
            e = self.block(g, p, block, e)?;
        }
        let out = conv(g, p, self.out, e, 1)?;
        g.add(out, x)
    }

    fn block(&self, g: &mut Graph, p: &[Var], b: &Block, x: Var) -> Result<Var> {
        let y = self.fesa(g, p, &b.fesa, x)?;
        gdfn(g, p, &b.gdfn, y)
    }

    fn fesa(&self, g: &mut Graph, p: &[Var], f: &Fesa, x: Var) -> Result<Var> {
        let (h, w, c) = match *g.shape(x) {
            [h, w, c] => (h, w, c),
            ref s => return Err(Error::Shape(format!("feature map {s:?}"))),
        };
        let hw = h * w;

        // global branch: channel-transposed attention
        let n = norm(g, p, f.norm, x)?;
        let qkv = conv(g, p, f.qkv, n, 1)?;
        let qkv = g.depthwise(qkv, p[f.qkv_dw.w], Some(p[f.qkv_dw.b]))?;
        let q = g.slice_last(qkv, 0, c)?;
        let k = g.slice_last(qkv, c, c)?;
        let v = g.slice_last(qkv, 2 * c, c)?;
        let q = g.reshape(q, &[hw, c])?;
        let k = g.reshape(k, &[hw, c])?;
        let v = g.reshape(v, &[hw, c])?;
        let qt = g.transpose(q)?;
        let logits = g.matmul(qt, k)?;
        let logits = g.scale(logits, 1.0 / hw as f64);
        let logits = g.mul(logits, p[f.temperature])?;
        let attn = g.softmax_rows(logits)?;
        let attn_t = g.transpose(attn)?;
        let mixed = g.matmul(v, attn_t)?;
        let mixed = g.reshape(mixed, &[h, w, c])?;
        let global = conv(g, p, f.project, mixed, 1)?;

        // frequency branch: ring-partitioned gating of the pooled amplitude
        let ortho = 1.0 / (hw as f64).sqrt();
        let z = g.fft2(x)?;
        let mag = g.magnitude(z)?;
        let pooled = g.channel_mean(mag)?;
        let pooled = g.scale(pooled, ortho);
        let centered = g.center(pooled)?;
        let radius = h / 2;
        let rings = g.ring_gather(centered, self.ring_width, self.samples_per_radius * radius)?;
        let gate = conv(g, p, f.gate, rings, 1)?;
        let gate = g.sigmoid(gate);
        let refined = conv(g, p, f.refine, rings, 1)?;
        let local = g.mul(gate, refined)?;
        let amp = g.ring_scatter(local, h, self.ring_width)?;
        let amp = g.center(amp)?;
        let amp = g.scale(amp, 1.0 / ortho);
        let amp = g.reshape(amp, &[h, w, 1])?;
        let mean_in = g.channel_mean(x)?;
        let phase = g.fft2(mean_in)?;
        let spec = g.phase_modulate(amp, phase)?;
        let spatial = g.ifft2_real(spec)?;
        let freq = conv(g, p, f.freq_out, spatial, 1)?;

        let cat = g.concat(global, freq)?;
        let fused = conv(g, p, f.fuse, cat, 1)?;
        let fused = norm(g, p, f.fuse_norm, fused)?;
        let fused = g.relu(fused);
        g.add(x, fused)
    }
}

fn conv(g: &mut Graph, p: &[Var], c: Conv, x: Var, stride: usize) -> Result<Var> {
    g.conv(x, p[c.w], Some(p[c.b]), stride)
}

fn norm(g: &mut Graph, p: &[Var], n: Norm, x: Var) -> Result<Var> {
    g.layernorm(x, p[n.gamma], p[n.beta])
}

/// `x · sigmoid(1.702 x)`.
fn gelu(g: &mut Graph, x: Var) -> Result<Var> {
    let s = g.scale(x, 1.702);
    let s = g.sigmoid(s);
    g.mul(x, s)
}

fn gdfn(g: &mut Graph, p: &[Var], f: &Gdfn, x: Var) -> Result<Var> {
    let n = norm(g, p, f.norm, x)?;
    let e = conv(g, p, f.expand, n, 1)?;
    let e = g.depthwise(e, p[f.dw.w], Some(p[f.dw.b]))?;
    let a = g.slice_last(e, 0, f.hidden)?;
    let b = g.slice_last(e, f.hidden, f.hidden)?;
    let a = gelu(g, a)?;
    let gated = g.mul(a, b)?;
    let out = conv(g, p, f.project, gated, 1)?;
    g.add(x, out)
}

/// Smallest accepted side: the deepest level must still be an even plane.
pub const MIN_SIDE: usize = 1 << LEVELS;

fn check_input(shape: &[usize]) -> Result<()> {
    match *shape {
        [h, w, _] if h == w && h.is_power_of_two() && h >= MIN_SIDE => Ok(()),
        ref s => Err(Error::Shape(format!(
            "network input must be a square power-of-two plane of side >= {MIN_SIDE}, got {s:?}"
        ))),
    }
}
