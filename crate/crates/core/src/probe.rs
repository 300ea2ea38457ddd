//! Linear separability probe: two-class logistic regression over the high
//! bands of radial profiles, scored on a held-out split.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::spectral::RadialProfile;

pub const TRAIN_FRACTION: f64 = 0.7;
pub const ITERATIONS: usize = 500;
pub const LEARNING_RATE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub real: usize,
    pub synthetic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Held-out accuracy.
    pub accuracy: f64,
    pub k_min: usize,
    pub train: ClassCounts,
    pub test: ClassCounts,
    /// Held-out samples classified correctly, per class.
    pub correct: ClassCounts,
    /// One weight per band `k >= k_min`, on standardized features.
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Splits `0..n` into shuffled train and test indices, `TRAIN_FRACTION` of
/// them (rounded) for training.
fn split(n: usize, rng: &mut impl rand::Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let cut = (n as f64 * TRAIN_FRACTION).round() as usize;
    let test = idx.split_off(cut);
    (idx, test)
}

/// Trains on a stratified 70/30 split (label 1 = synthetic) and reports
/// accuracy on the 30%.
pub fn probe(real: &[RadialProfile], synthetic: &[RadialProfile], k_min: usize, seed: u64) -> Result<ProbeReport> {
    if real.len() < 2 || synthetic.len() < 2 {
        return Err(Error::InvalidArgument(
            "the probe needs at least two profiles per class".into(),
        ));
    }
    let bands = real[0].values.len();
    if real.iter().chain(synthetic).any(|p| p.values.len() != bands) {
        return Err(Error::Shape("profiles have different lengths".into()));
    }
    if k_min >= bands {
        return Err(Error::InvalidArgument(format!(
            "k_min {k_min} outside profile of {bands} bands"
        )));
    }
    let dim = bands - k_min;
    let mut rng = seed::stream(seed, 0);
    let (real_train, real_test) = split(real.len(), &mut rng);
    let (syn_train, syn_test) = split(synthetic.len(), &mut rng);
    let sample = |p: &RadialProfile| p.values[k_min..].to_vec();
    let train: Vec<(Vec<f64>, f64)> = real_train
        .iter()
        .map(|&i| (sample(&real[i]), 0.0))
        .chain(syn_train.iter().map(|&i| (sample(&synthetic[i]), 1.0)))
        .collect();
    let test: Vec<(Vec<f64>, f64)> = real_test
        .iter()
        .map(|&i| (sample(&real[i]), 0.0))
        .chain(syn_test.iter().map(|&i| (sample(&synthetic[i]), 1.0)))
        .collect();
    if test.is_empty() {
        return Err(Error::InvalidArgument("held-out split is empty".into()));
    }

    let n = train.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|j| train.iter().map(|(x, _)| x[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..dim)
        .map(|j| {
            let var = train.iter().map(|(x, _)| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 }
        })
        .collect();
    let standardize = |x: &[f64]| -> Vec<f64> { x.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) * s).collect() };
    let train: Vec<(Vec<f64>, f64)> = train.iter().map(|(x, y)| (standardize(x), *y)).collect();

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    for _ in 0..ITERATIONS {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (x, y) in &train {
            let z = b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
            let r = sigmoid(z) - y;
            gb += r;
            gw.iter_mut().zip(x).for_each(|(g, v)| *g += r * v);
        }
        b -= LEARNING_RATE * gb / n;
        w.iter_mut().zip(&gw).for_each(|(a, g)| *a -= LEARNING_RATE * g / n);
    }

    let mut correct = ClassCounts::default();
    for (x, y) in &test {
        let x = standardize(x);
        let z = b + w.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>();
        let predicted = if z > 0.0 { 1.0 } else { 0.0 };
        if predicted == *y {
            if *y == 0.0 {
                correct.real += 1;
            } else {
                correct.synthetic += 1;
            }
        }
    }
    Ok(ProbeReport {
        accuracy: (correct.real + correct.synthetic) as f64 / test.len() as f64,
        k_min,
        train: ClassCounts {
            real: real_train.len(),
            synthetic: syn_train.len(),
        },
        test: ClassCounts {
            real: real_test.len(),
            synthetic: syn_test.len(),
        },
        correct,
        weights: w,
        bias: b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn profiles(seed: u64, n: usize, offset: f64) -> Vec<RadialProfile> {
        let mut rng = seed::stream(seed, 0);
        (0..n)
            .map(|_| RadialProfile {
                side: 16,
                values: (0..8).map(|k| k as f64 + offset + rng.random_range(-0.5..0.5)).collect(),
            })
            .collect()
    }

    #[test]
    fn separable_classes() {
        let r = probe(&profiles(1, 40, 0.0), &profiles(2, 40, 2.0), 4, 0).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.weights.len(), 4);
        assert_eq!(r.train, ClassCounts { real: 28, synthetic: 28 });
        assert_eq!(r.test, ClassCounts { real: 12, synthetic: 12 });
        assert!(r.weights.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn identical_distributions_are_near_chance() {
        let r = probe(&profiles(3, 100, 0.0), &profiles(4, 100, 0.0), 4, 0).unwrap();
        assert!((0.3..=0.7).contains(&r.accuracy), "{}", r.accuracy);
    }

    #[test]
    fn seeded() {
        let a = probe(&profiles(5, 30, 0.0), &profiles(6, 30, 0.3), 2, 9).unwrap();
        let b = probe(&profiles(5, 30, 0.0), &profiles(6, 30, 0.3), 2, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validates() {
        assert!(probe(&profiles(1, 1, 0.0), &profiles(2, 5, 0.0), 2, 0).is_err());
        assert!(probe(&profiles(1, 5, 0.0), &profiles(2, 5, 0.0), 8, 0).is_err());
    }
}
