use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-4;
pub const DEFAULT_COORDS: usize = 50;

/// `|a − n| / max(|a|, |n|, 1e−8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    pub fn relative_error(&self) -> f64 {
        relative_error(self.analytic, self.numeric)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub probes: Vec<Probe>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.probes.iter().map(Probe::relative_error).fold(0.0, f64::max)
    }

    /// The probe with the largest error, if any.
    pub fn worst(&self) -> Option<&Probe> {
        self.probes
            .iter()
            .max_by(|a, b| a.relative_error().total_cmp(&b.relative_error()))
    }
}

fn evaluate<F>(params: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.constant(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    let v = g.value(out);
    if v.len() != 1 {
        return Err(Error::Shape("checked function must return a scalar".into()));
    }
    Ok(v.item())
}

/// Compares reverse-mode gradients of the scalar `f` with central
/// differences `(f(θ+h) − f(θ−h)) / 2h` on up to `coords` random coordinates
/// per parameter tensor (all of them for smaller tensors).
pub fn grad_check<F>(params: &[Tensor], f: F, h: f64, coords: usize, seed: u64) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.get(*v)).collect();
    drop(g);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = params.to_vec();
    let mut probes = Vec::new();
    for t in 0..params.len() {
        let n = params[t].len();
        let mut picked: Vec<usize> = if n <= coords {
            (0..n).collect()
        } else {
            sample(&mut rng, n, coords).into_vec()
        };
        picked.sort_unstable();
        for index in picked {
            let base = params[t].data()[index];
            work[t].data_mut()[index] = base + h;
            let up = evaluate(&work, &f)?;
            work[t].data_mut()[index] = base - h;
            let down = evaluate(&work, &f)?;
            work[t].data_mut()[index] = base;
            probes.push(Probe {
                tensor: t,
                index,
                analytic: analytic[t].data()[index],
                numeric: (up - down) / (2.0 * h),
            });
        }
    }
    Ok(GradCheck { probes })
}
