//! Command-line surface. Every command merges `--config` JSON with its flags
//! into a [`RunConfig`], echoes it to the output directory and writes its
//! results there.

mod commands;
pub mod svg;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::desk::{Artifact, DeskDataSpec};
use crate::error::{Error, Result};
use crate::rhm::{FetConfig, TrainConfig};
use crate::shr::ShrParams;
use crate::spectral::SpreadMode;

/// File name of the echoed configuration inside the output directory.
pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Copied into every seeded component.
    pub seed: u64,
    pub real_dir: Option<PathBuf>,
    pub synthetic_dir: Option<PathBuf>,
    pub input_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub desk: DeskDataSpec,
    pub shr: ShrParams,
    pub fet: FetConfig,
    pub train: TrainConfig,
    /// Lower band of profile comparisons; `None` means `N/4`.
    pub k_min: Option<usize>,
    pub bands: Vec<usize>,
    pub sweep_ratios: Vec<f64>,
    pub sweep_ks: Vec<usize>,
    pub svg: bool,
    pub bench: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            real_dir: None,
            synthetic_dir: None,
            input_dir: None,
            out_dir: None,
            model: None,
            desk: DeskDataSpec::default(),
            shr: ShrParams::default(),
            fet: FetConfig::default(),
            train: TrainConfig::default(),
            k_min: None,
            bands: vec![60, 80, 100],
            sweep_ratios: vec![0.25, 0.5, 0.75],
            sweep_ks: vec![10, 50, 200],
            svg: false,
            bench: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    fn sync_seeds(&mut self) {
        self.desk.seed = self.seed;
        self.shr.seed = self.seed;
        self.train.seed = self.seed;
    }

    fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument(format!("{flag} is required")))
    }

    pub fn out(&self) -> Result<&Path> {
        Self::require(&self.out_dir, "--out")
    }

    /// Creates the output directory and writes the configuration into it.
    pub fn echo(&self) -> Result<PathBuf> {
        let dir = self.out()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RUN_CONFIG_FILE);
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(dir.to_path_buf())
    }
}

#[derive(Debug, Parser)]
#[command(name = "frerec", version, about = "Frequency recalibration of synthetic images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a desk corpus with an optional spectral artifact.
    Gen(GenArgs),
    /// Mean radial profile of a directory.
    Profile(ProfileArgs),
    /// Profile distance and per-band gap between two directories.
    Compare(CompareArgs),
    /// High-frequency replacement of synthetic images against reals.
    Shr(ShrArgs),
    /// Train the reconstructor on real images.
    Train(TrainArgs),
    /// Replacement followed by reconstruction.
    Recalibrate(RecalibrateArgs),
    /// Held-out accuracy of a linear real/synthetic probe.
    Probe(ProbeArgs),
    /// Grid over mask ratio and K.
    Sweep(SweepArgs),
    /// Per-band amplitude skewness and histograms.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ArtifactKind {
    None,
    HfAttenuate,
    HfBoost,
    Checkerboard,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Spread {
    Std,
    LiteralMad,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub side: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub artifact: Option<ArtifactKind>,
    /// Attenuation or boost factor, or checkerboard amplitude.
    #[arg(long)]
    pub strength: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub real: Option<PathBuf>,
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct ShrFlags {
    /// Low-band mask ratio.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Number of retrieved reals.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub spread: Option<Spread>,
    /// Standardize with the ensemble centers instead of the image's own.
    #[arg(long)]
    pub literal_eq3: bool,
    /// Retrieval downsampling side; 0 scores at full resolution.
    #[arg(long)]
    pub comparison_side: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ShrArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub pair: PairArgs,
    #[command(flatten)]
    pub shr: ShrFlags,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub real: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub shr: ShrFlags,
}

#[derive(Debug, Args)]
pub struct RecalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub real: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Report mean per-image milliseconds.
    #[arg(long)]
    pub bench: bool,
    #[command(flatten)]
    pub shr: ShrFlags,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long)]
    pub k_min: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long)]
    pub k_min: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub bands: Option<Vec<usize>>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: &Option<PathBuf>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

impl Common {
    fn base(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.seed, self.seed);
        set_path(&mut cfg.out_dir, &self.out);
        Ok(cfg)
    }
}

impl PairArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set_path(&mut cfg.real_dir, &self.real);
        set_path(&mut cfg.synthetic_dir, &self.synthetic);
    }
}

impl ShrFlags {
    fn apply(&self, p: &mut ShrParams) {
        set(&mut p.ratio, self.ratio);
        set(&mut p.k, self.k);
        set(
            &mut p.spread,
            self.spread.map(|s| match s {
                Spread::Std => SpreadMode::Std,
                Spread::LiteralMad => SpreadMode::LiteralMad,
            }),
        );
        if self.literal_eq3 {
            p.literal_eq3 = true;
        }
        if let Some(side) = self.comparison_side {
            p.comparison_side = (side > 0).then_some(side);
        }
    }
}

fn artifact(kind: ArtifactKind, strength: Option<f64>) -> Artifact {
    match kind {
        ArtifactKind::None => Artifact::None,
        ArtifactKind::HfAttenuate => Artifact::HfAttenuate {
            factor: strength.unwrap_or(0.5),
        },
        ArtifactKind::HfBoost => Artifact::HfBoost {
            factor: strength.unwrap_or(2.0),
        },
        ArtifactKind::Checkerboard => Artifact::Checkerboard {
            amplitude: strength.unwrap_or(0.1),
        },
    }
}

impl Command {
    /// The effective configuration: file values, then flag overrides.
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = match self {
            Command::Gen(a) => {
                let mut cfg = a.common.base()?;
                let d = &mut cfg.desk;
                set(&mut d.count, a.count);
                set(&mut d.side, a.side);
                set(&mut d.alpha, a.alpha);
                if let Some(kind) = a.artifact {
                    d.artifact = artifact(kind, a.strength);
                } else if let Some(s) = a.strength {
                    d.artifact = match d.artifact {
                        Artifact::None => Artifact::None,
                        Artifact::HfAttenuate { .. } => Artifact::HfAttenuate { factor: s },
                        Artifact::HfBoost { .. } => Artifact::HfBoost { factor: s },
                        Artifact::Checkerboard { .. } => Artifact::Checkerboard { amplitude: s },
                    };
                }
                cfg
            }
            Command::Profile(a) => {
                let mut cfg = a.common.base()?;
                set_path(&mut cfg.input_dir, &a.input);
                cfg.svg |= a.svg;
                cfg
            }
            Command::Compare(a) => {
                let mut cfg = a.common.base()?;
                a.pair.apply(&mut cfg);
                if a.k_min.is_some() {
                    cfg.k_min = a.k_min;
                }
                cfg.svg |= a.svg;
                cfg
            }
            Command::Shr(a) => {
                let mut cfg = a.common.base()?;
                a.pair.apply(&mut cfg);
                a.shr.apply(&mut cfg.shr);
                cfg
            }
            Command::Train(a) => {
                let mut cfg = a.common.base()?;
                set_path(&mut cfg.real_dir, &a.real);
                set(&mut cfg.train.epochs, a.epochs);
                set(&mut cfg.train.adam.lr, a.lr);
                set(&mut cfg.fet.base_channels, a.base_channels);
                set(&mut cfg.fet.lambda, a.lambda);
                a.shr.apply(&mut cfg.shr);
                cfg
            }
            Command::Recalibrate(a) => {
                let mut cfg = a.common.base()?;
                set_path(&mut cfg.input_dir, &a.input);
                set_path(&mut cfg.real_dir, &a.real);
                set_path(&mut cfg.model, &a.model);
                cfg.bench |= a.bench;
                a.shr.apply(&mut cfg.shr);
                cfg
            }
            Command::Probe(a) => {
                let mut cfg = a.common.base()?;
                a.pair.apply(&mut cfg);
                if a.k_min.is_some() {
                    cfg.k_min = a.k_min;
                }
                cfg
            }
            Command::Sweep(a) => {
                let mut cfg = a.common.base()?;
                a.pair.apply(&mut cfg);
                set(&mut cfg.sweep_ratios, a.ratios.clone());
                set(&mut cfg.sweep_ks, a.ks.clone());
                if a.k_min.is_some() {
                    cfg.k_min = a.k_min;
                }
                cfg
            }
            Command::Diagnose(a) => {
                let mut cfg = a.common.base()?;
                set_path(&mut cfg.input_dir, &a.input);
                set(&mut cfg.bands, a.bands.clone());
                cfg
            }
        };
        cfg.sync_seeds();
        Ok(cfg)
    }

    pub fn run(&self) -> Result<()> {
        let cfg = self.config()?;
        match self {
            Command::Gen(_) => commands::gen(&cfg),
            Command::Profile(_) => commands::profile(&cfg),
            Command::Compare(_) => commands::compare(&cfg),
            Command::Shr(_) => commands::shr(&cfg),
            Command::Train(_) => commands::train(&cfg),
            Command::Recalibrate(_) => commands::recalibrate(&cfg),
            Command::Probe(_) => commands::probe(&cfg),
            Command::Sweep(_) => commands::sweep(&cfg),
            Command::Diagnose(_) => commands::diagnose(&cfg),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match cli.command.run() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("frerec: {e}");
            e.exit_code()
        }
    }
}
