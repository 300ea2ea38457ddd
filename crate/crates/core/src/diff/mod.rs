//! Dense `f64` tensors with reverse-mode differentiation over the closed set
//! of operations the reconstruction network uses, plus a finite-difference
//! gradient checker.

mod check;
mod graph;
pub mod kernels;
mod tensor;

pub use check::{grad_check, relative_error, GradCheck, Probe, DEFAULT_COORDS, DEFAULT_STEP};
pub use graph::{sigmoid, Gradients, Graph, Var, LAYERNORM_EPS};
pub use tensor::Tensor;


#[cfg(test)]
mod tests {
    use super::testutil::random;
    use super::*;
    use crate::error::Result;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Scalar probe `Σ w ⊙ y` with fixed random weights, so every output
    /// coordinate matters.
    fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
        let w = random(&mut rng(seed), g.shape(y));
        let w = g.constant(w);
        let p = g.mul(y, w)?;
        Ok(g.sum(p))
    }

    fn check<F>(params: &[Tensor], f: F) -> f64
    where
        F: Fn(&mut Graph, &[Var]) -> Result<Var>,
    {
        grad_check(params, f, DEFAULT_STEP, DEFAULT_COORDS, 1)
            .unwrap()
            .max_relative_error()
    }

    /// `|⟨A x, y⟩ − ⟨x, Aᵀ y⟩|` with the adjoint taken from backward.
    fn adjoint_gap<F>(input_shape: &[usize], op: F, seed: u64) -> f64
    where
        F: Fn(&mut Graph, Var) -> Result<Var>,
    {
        let mut r = rng(seed);
        let x = random(&mut r, input_shape);
        let mut g = Graph::new();
        let xv = g.param(x.clone());
        let ax = op(&mut g, xv).unwrap();
        let y = random(&mut r, g.shape(ax));
        let lhs: f64 = g.value(ax).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let yv = g.constant(y);
        let p = g.mul(ax, yv).unwrap();
        let s = g.sum(p);
        let aty = g.backward(s).unwrap().get(xv);
        let rhs: f64 = x.data().iter().zip(aty.data()).map(|(a, b)| a * b).sum();
        (lhs - rhs).abs() / lhs.abs().max(1.0)
    }

    #[test]
    fn elementwise_basics() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::scalar(0.0));
        let s = g.sigmoid(z);
        assert_eq!(g.value(s).item(), 0.5);
        let x = g.param(Tensor::scalar(3.0));
        let sq = g.square(x);
        let grads = g.backward(sq).unwrap();
        assert_eq!(grads.get(x).item(), 6.0);
    }

    #[test]
    fn elementwise_chain_gradient() {
        let mut r = rng(2);
        let params = vec![random(&mut r, &[4, 5]), random(&mut r, &[4, 5]), random(&mut r, &[1])];
        let err = check(&params, |g, v| {
            let a = g.add(v[0], v[1])?;
            let b = g.sub(a, v[2])?;
            let c = g.mul(b, v[0])?;
            let d = g.sigmoid(c);
            let e = g.square(d);
            let f = g.scale(e, -1.7);
            let h = g.relu(v[1]);
            let k = g.mul(f, h)?;
            let m = g.mul(v[2], k)?;
            Ok(g.sum(m))
        });
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn matmul_hand_case_identity_and_gradient() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = g.constant(Tensor::new(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[19.0, 22.0, 43.0, 50.0]);
        let i = g.constant(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let ia = g.matmul(i, a).unwrap();
        assert_eq!(g.value(ia), g.value(a));

        let mut r = rng(3);
        let params = vec![random(&mut r, &[3, 4]), random(&mut r, &[4, 5])];
        let err = check(&params, |g, v| {
            let c = g.matmul(v[0], v[1])?;
            let t = g.transpose(c)?;
            weighted_sum(g, t, 9)
        });
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn softmax_rows_properties_and_gradient() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::filled(&[2, 4], 3.0));
        let s = g.softmax_rows(a).unwrap();
        assert!(g.value(s).data().iter().all(|v| (v - 0.25).abs() < 1e-15));
        let mut r = rng(4);
        let x = g.constant(scaled(random(&mut r, &[5, 7]), 20.0));
        let s = g.softmax_rows(x).unwrap();
        for row in g.value(s).data().chunks(7) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let params = vec![random(&mut r, &[3, 6])];
        let err = check(&params, |g, v| {
            let s = g.softmax_rows(v[0])?;
            weighted_sum(g, s, 10)
        });
        assert!(err < 1e-6, "{err}");
    }

    fn scaled(mut t: Tensor, s: f64) -> Tensor {
        t.data_mut().iter_mut().for_each(|v| *v *= s);
        t
    }

    #[test]
    fn conv_identity_and_averaging() {
        let mut r = rng(5);
        let mut g = Graph::new();
        let x = g.constant(random(&mut r, &[4, 4, 3]));
        let mut eye = Tensor::zeros(&[1, 1, 3, 3]);
        for c in 0..3 {
            eye.data_mut()[c * 3 + c] = 1.0;
        }
        let eye = g.constant(eye);
        let y = g.conv(x, eye, None, 1).unwrap();
        assert_eq!(g.value(y), g.value(x));

        let flat = g.constant(Tensor::filled(&[6, 6, 1], 0.7));
        let avg = g.constant(Tensor::filled(&[3, 3, 1, 1], 1.0 / 9.0));
        let y = g.conv(flat, avg, None, 1).unwrap();
        assert!(g.value(y).data().iter().all(|v| (v - 0.7).abs() < 1e-15));
        let dw = g.constant(Tensor::filled(&[3, 3, 1], 1.0 / 9.0));
        let y = g.depthwise(flat, dw, None).unwrap();
        assert!(g.value(y).data().iter().all(|v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn conv_gradients() {
        let mut r = rng(6);
        for (k, stride) in [(1, 1), (3, 1), (3, 2), (1, 2)] {
            let params = vec![
                random(&mut r, &[6, 8, 3]),
                random(&mut r, &[k, k, 3, 4]),
                random(&mut r, &[4]),
            ];
            let err = check(&params, |g, v| {
                let y = g.conv(v[0], v[1], Some(v[2]), stride)?;
                weighted_sum(g, y, 11)
            });
            assert!(err < 1e-5, "k={k} stride={stride}: {err}");
        }
        let params = vec![random(&mut r, &[5, 4, 3]), random(&mut r, &[3, 3, 3]), random(&mut r, &[3])];
        let err = check(&params, |g, v| {
            let y = g.depthwise(v[0], v[1], Some(v[2]))?;
            weighted_sum(g, y, 12)
        });
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn strided_conv_halves_the_plane() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[8, 4, 2]));
        let w = g.constant(Tensor::zeros(&[3, 3, 2, 5]));
        let y = g.conv(x, w, None, 2).unwrap();
        assert_eq!(g.shape(y), &[4, 2, 5]);
    }

    #[test]
    fn layernorm_statistics_and_gradient() {
        let mut g = Graph::new();
        let ones = g.constant(Tensor::filled(&[5], 1.0));
        let zeros = g.constant(Tensor::zeros(&[5]));
        let flat = g.constant(Tensor::filled(&[2, 2, 5], 3.3));
        let y = g.layernorm(flat, ones, zeros).unwrap();
        assert!(g.value(y).data().iter().all(|v| *v == 0.0));

        let mut r = rng(7);
        let x = g.constant(scaled(random(&mut r, &[3, 3, 5]), 100.0));
        let y = g.layernorm(x, ones, zeros).unwrap();
        for row in g.value(y).data().chunks(5) {
            let m = row.iter().sum::<f64>() / 5.0;
            let v = row.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 5.0;
            assert!(m.abs() < 1e-10);
            assert!((v - 1.0).abs() < 1e-6);
        }
        let params = vec![random(&mut r, &[4, 3, 6]), random(&mut r, &[6]), random(&mut r, &[6])];
        let err = check(&params, |g, v| {
            let y = g.layernorm(v[0], v[1], v[2])?;
            weighted_sum(g, y, 13)
        });
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn fft_round_trip_and_magnitude() {
        let mut r = rng(8);
        let mut g = Graph::new();
        let x = g.constant(random(&mut r, &[8, 4, 3]));
        let z = g.fft2(x).unwrap();
        let back = g.ifft2_real(z).unwrap();
        for (a, b) in g.value(back).data().iter().zip(g.value(x).data()) {
            assert!((a - b).abs() < 1e-10);
        }
        let p = g.param(Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap());
        let m = g.magnitude(p).unwrap();
        assert_eq!(g.value(m).data(), &[5.0]);
        let s = g.sum(m);
        let grad = g.backward(s).unwrap().get(p);
        assert!((grad.data()[0] - 0.6).abs() < 1e-15 && (grad.data()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn spectral_op_gradients() {
        let mut r = rng(9);
        let x = random(&mut r, &[8, 8, 2]);
        let err = check(&[x], |g, v| {
            let z = g.fft2(v[0])?;
            let m = g.magnitude(z)?;
            Ok(g.sum(m))
        });
        assert!(err < 1e-5, "{err}");

        let params = vec![random(&mut r, &[4, 8, 2]), random(&mut r, &[4, 8, 2, 2])];
        let err = check(&params, |g, v| {
            let y = g.phase_modulate(v[0], v[1])?;
            let back = g.ifft2_real(y)?;
            weighted_sum(g, back, 14)
        });
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn resampling_round_trips() {
        let mut r = rng(10);
        let mut g = Graph::new();
        let x = g.constant(random(&mut r, &[8, 4, 3]));
        let u = g.pixel_unshuffle(x).unwrap();
        assert_eq!(g.shape(u), &[4, 2, 12]);
        let s = g.pixel_shuffle(u).unwrap();
        assert_eq!(g.value(s), g.value(x));
        let c = g.center(x).unwrap();
        let cc = g.center(c).unwrap();
        assert_eq!(g.value(cc), g.value(x));
    }

    #[test]
    fn ring_gather_of_radial_plane_is_constant_along_angles() {
        let side = 16;
        let c = (side / 2) as f64;
        let data: Vec<f64> = (0..side * side)
            .map(|i| {
                let (y, x) = ((i / side) as f64 - c, (i % side) as f64 - c);
                ((y * y + x * x).sqrt() / 4.0).floor()
            })
            .collect();
        let mut g = Graph::new();
        let p = g.constant(Tensor::new(vec![side, side, 1], data).unwrap());
        let rings = g.ring_gather(p, 4, 32).unwrap();
        assert_eq!(g.shape(rings), &[32, 2, 1]);
        for row in g.value(rings).data().chunks(2) {
            assert_eq!(row, &[0.0, 1.0]);
        }
        let back = g.ring_scatter(rings, side, 4).unwrap();
        assert_eq!(g.shape(back), &[side, side, 1]);
    }

    #[test]
    fn linear_ops_pass_the_transpose_test() {
        let cases: Vec<(&[usize], Box<dyn Fn(&mut Graph, Var) -> Result<Var>>)> = vec![
            (&[16, 16, 1], Box::new(|g, x| g.ring_gather(x, 4, 32))),
            (&[32, 2, 1], Box::new(|g, x| g.ring_scatter(x, 16, 4))),
            (&[8, 8, 1], Box::new(|g, x| g.ring_gather(x, 3, 16))),
            (&[16, 2, 1], Box::new(|g, x| g.ring_scatter(x, 8, 3))),
            (&[8, 4, 3], Box::new(|g, x| g.pixel_unshuffle(x))),
            (&[4, 2, 12], Box::new(|g, x| g.pixel_shuffle(x))),
            (&[8, 4, 3], Box::new(|g, x| g.center(x))),
            (&[8, 4, 3, 2], Box::new(|g, x| g.center(x))),
            (&[8, 4, 3], Box::new(|g, x| g.channel_mean(x))),
            (&[8, 4, 3], Box::new(|g, x| g.fft2(x))),
            (&[8, 4, 3, 2], Box::new(|g, x| g.ifft2_real(x))),
            (&[8, 4, 3], Box::new(|g, x| g.slice_last(x, 1, 2))),
            (&[8, 4, 3], Box::new(|g, x| g.reshape(x, &[32, 3]))),
            (&[5, 3], Box::new(|g, x| g.transpose(x))),
            (&[8, 4, 3], Box::new(|g, x| g.concat(x, x))),
        ];
        for (i, (shape, op)) in cases.iter().enumerate() {
            let gap = adjoint_gap(shape, op, 100 + i as u64);
            assert!(gap < 1e-10, "case {i}: {gap}");
        }
    }

    #[test]
    fn unused_parameters_get_exact_zero_gradient() {
        let mut g = Graph::new();
        let used = g.param(Tensor::filled(&[3], 2.0));
        let unused = g.param(Tensor::filled(&[3], 5.0));
        let sq = g.square(used);
        let s = g.sum(sq);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(unused).data().iter().all(|v| *v == 0.0));
        assert!(grads.get(used).data().iter().all(|v| *v == 4.0));
    }

    #[test]
    fn checker_is_exact_on_linear_and_catches_sign_errors() {
        let mut r = rng(11);
        let params = vec![random(&mut r, &[10, 10])];
        let f = |g: &mut Graph, v: &[Var]| weighted_sum(g, v[0], 15);
        let report = grad_check(&params, f, DEFAULT_STEP, DEFAULT_COORDS, 2).unwrap();
        assert_eq!(report.probes.len(), 50);
        assert!(report.max_relative_error() < 1e-9);
        let negated = report
            .probes
            .iter()
            .map(|p| relative_error(-p.analytic, p.numeric))
            .fold(0.0, f64::max);
        assert!((negated - 2.0).abs() < 1e-6, "{negated}");
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        assert!(g.matmul(a, b).is_err());
        let c = g.constant(Tensor::zeros(&[3, 2]));
        assert!(g.add(a, c).is_err());
        let odd = g.constant(Tensor::zeros(&[3, 3, 1]));
        assert!(g.pixel_unshuffle(odd).is_err());
        assert!(g.fft2(odd).is_err());
        assert!(g.backward(a).is_err());
    }
}
