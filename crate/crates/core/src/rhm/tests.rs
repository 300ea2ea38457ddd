use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::desk::{generate_desk_corpus, Artifact, DeskDataSpec};
use crate::diff::testutil::random;

fn small() -> FetConfig {
    FetConfig {
        base_channels: 4,
        ..FetConfig::default()
    }
}

fn noise_image(seed: u64, side: usize, channels: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..side * side * channels).map(|_| rng.random::<f64>()).collect();
    Image::new(side, side, channels, data).unwrap()
}

fn randomize_output(model: &mut FetModel, seed: u64) {
    let name = model.output_weight_name().to_string();
    let w = model.params.get_mut(&name).unwrap();
    let shape = w.shape().to_vec();
    *w = random(&mut ChaCha8Rng::seed_from_u64(seed), &shape);
    for v in w.data_mut() {
        *v *= 0.1;
    }
}

#[test]
fn output_shape_matches_input() {
    for channels in [1, 3] {
        let model = FetModel::new(small(), channels, 1).unwrap();
        let mut m = model.clone();
        randomize_output(&mut m, 2);
        let x = noise_image(3, 32, channels);
        let y = m.forward_field(x.field()).unwrap();
        assert!(y.same_dims(x.field()));
    }
}

#[test]
fn fresh_model_is_identity() {
    let model = FetModel::new(small(), 1, 9).unwrap();
    let x = noise_image(4, 16, 1);
    let y = model.forward_field(x.field()).unwrap();
    assert_eq!(y.data, x.field().data);
}

#[test]
fn rejects_bad_inputs() {
    let model = FetModel::new(small(), 1, 0).unwrap();
    assert!(model.forward_field(&Field::zeros(8, 8, 1)).is_err());
    assert!(model.forward_field(&Field::zeros(24, 24, 1)).is_err());
    assert!(model.forward_field(&Field::zeros(16, 16, 3)).is_err());
    assert!(FetModel::new(small(), 2, 0).is_err());
}

#[test]
fn every_parameter_receives_gradient() {
    let mut model = FetModel::new(small(), 1, 5).unwrap();
    randomize_output(&mut model, 6);
    let x = noise_image(7, 16, 1);
    let t = noise_image(8, 16, 1);
    let mut g = Graph::new();
    let p = model.bind(&mut g, true);
    let xi = g.constant(field_tensor(x.field()));
    let ti = g.constant(field_tensor(t.field()));
    let y = model.forward(&mut g, &p, xi).unwrap();
    let (_, _, total) = loss_nodes(&mut g, ti, y, 1.0).unwrap();
    let grads = g.backward(total).unwrap();
    for (name, v) in model.params.names.iter().zip(&p) {
        let norm: f64 = grads.get(*v).data().iter().map(|d| d * d).sum();
        assert!(norm > 0.0, "{name} has zero gradient");
    }
}

#[test]
fn loss_of_identical_images_is_zero() {
    let x = noise_image(1, 16, 3);
    let r = rhm_loss(x.field(), x.field(), 1.0).unwrap();
    assert_eq!((r.pixel, r.frequency, r.total), (0.0, 0.0, 0.0));
}

#[test]
fn constant_offset_loss() {
    let a = Field::zeros(16, 16, 1);
    let b = Field::new(16, 16, 1, vec![0.1; 256]).unwrap();
    let r = rhm_loss(&a, &b, 0.5).unwrap();
    assert!((r.pixel - 0.01).abs() < 1e-15);
    assert!((r.frequency - 0.01).abs() < 1e-15);
    assert!((r.total - 0.015).abs() < 1e-15);
}

#[test]
fn loss_rejects_mismatched_shapes() {
    assert!(rhm_loss(&Field::zeros(16, 16, 1), &Field::zeros(16, 16, 3), 1.0).is_err());
}

#[test]
fn adam_first_step_moves_by_lr() {
    let mut store = ParamStore {
        names: vec!["x".into()],
        tensors: vec![Tensor::new(vec![2], vec![1.0, -1.0]).unwrap()],
    };
    let mut adam = Adam::new(AdamConfig::default(), &store);
    adam.update(&mut store, &[Tensor::new(vec![2], vec![3.0, -0.5]).unwrap()]);
    let d = store.tensors[0].data();
    assert!((d[0] - (1.0 - 1e-3)).abs() < 1e-9);
    assert!((d[1] - (-1.0 + 1e-3)).abs() < 1e-9);
}

#[test]
fn train_step_reduces_loss_on_fixed_pair() {
    let mut model = FetModel::new(small(), 1, 3).unwrap();
    let mut adam = Adam::new(AdamConfig { lr: 3e-3, ..AdamConfig::default() }, &model.params);
    let target = noise_image(10, 16, 1);
    let input: Vec<f64> = target.pixels().iter().map(|v| 0.8 * v + 0.1).collect();
    let input = Field::new(16, 16, 1, input).unwrap();
    let first = train_step(&mut model, &mut adam, &input, target.field()).unwrap();
    let mut last = first;
    for _ in 0..15 {
        last = train_step(&mut model, &mut adam, &input, target.field()).unwrap();
    }
    assert!(last.total < 0.95 * first.total, "{first:?} -> {last:?}");
}

fn desk(count: usize, side: usize) -> Vec<Image> {
    generate_desk_corpus(&DeskDataSpec {
        count,
        side,
        artifact: Artifact::None,
        seed: 11,
        ..DeskDataSpec::default()
    })
    .unwrap()
}

fn quick() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn training_refuses_synthetic_images() {
    let images = desk(3, 16);
    let roles = [Role::Real, Role::Synthetic, Role::Real];
    let err = train(&images, &roles, &ShrParams::default(), &small(), &quick(), |_, _| {}).unwrap_err();
    assert!(matches!(err, Error::Contract(_)), "{err}");
}

#[test]
fn training_validates_corpus() {
    let one = desk(1, 16);
    assert!(train(&one, &[Role::Real], &ShrParams::default(), &small(), &quick(), |_, _| {}).is_err());
    let mut mixed = desk(2, 16);
    mixed.push(desk(1, 32).remove(0));
    assert!(train(&mixed, &[Role::Real; 3], &ShrParams::default(), &small(), &quick(), |_, _| {}).is_err());
}

#[test]
fn training_is_deterministic() {
    let images = desk(3, 16);
    let roles = [Role::Real; 3];
    let mut seen = Vec::new();
    let a = train(&images, &roles, &ShrParams::default(), &small(), &quick(), |e, r| seen.push((e, *r))).unwrap();
    let b = train(&images, &roles, &ShrParams::default(), &small(), &quick(), |_, _| {}).unwrap();
    assert_eq!(a.metadata.history.len(), 2);
    assert_eq!(seen.len(), 2);
    assert_eq!(a.metadata.history, b.metadata.history);
    assert_eq!(a.params, b.params);
    let csv = history_csv(&a.metadata.history);
    assert!(csv.starts_with("epoch,pixel,frequency,total\n1,"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn container_round_trip() {
    let mut model = FetModel::new(small(), 3, 21).unwrap();
    randomize_output(&mut model, 22);
    model.metadata.history.push(LossReport {
        pixel: 0.25,
        frequency: 0.5,
        total: 0.75,
    });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.frec");
    model.save(&path).unwrap();
    let back = FetModel::load(&path).unwrap();
    assert_eq!(back.params, model.params);
    assert_eq!(back.metadata, model.metadata);
    assert_eq!(back.config, model.config);
    let x = noise_image(2, 16, 3);
    assert_eq!(
        back.forward_field(x.field()).unwrap().data,
        model.forward_field(x.field()).unwrap().data
    );
}

#[test]
fn container_rejects_corruption() {
    let model = FetModel::new(small(), 1, 0).unwrap();
    let bytes = model.to_bytes().unwrap();
    let reject = |b: &[u8]| matches!(FetModel::from_bytes(b, "t"), Err(Error::Format { .. }));

    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(reject(&magic));

    let mut version = bytes.clone();
    version[4] = 2;
    assert!(reject(&version));

    assert!(reject(&bytes[..bytes.len() - 8]));
    let mut long = bytes.clone();
    long.extend_from_slice(&[0; 8]);
    assert!(reject(&long));
    assert!(reject(&bytes[..10]));
}

#[test]
fn psnr_of_known_error() {
    let a = Field::zeros(4, 4, 1);
    let b = Field::new(4, 4, 1, vec![0.1; 16]).unwrap();
    assert!((psnr(&a, &b) - 20.0).abs() < 1e-9);
}
