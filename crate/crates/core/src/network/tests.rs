use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::activations::{DomeParams, MdomeParams, PdomeParams};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn objective(net: &Network, x: &Tensor, t: &Tensor) -> f64 {
    loss(net.loss_kind(), &net.output(x).unwrap(), t).unwrap().0
}

/// Checks every parameter and input gradient against central differences.
fn check_gradients(mut net: Network, x: &Tensor, t: &Tensor) {
    let (_, _, grads) = net.loss_and_gradients(x, t).unwrap();
    let h = 1e-5;
    let close = |a: f64, n: f64| (a - n).abs() <= 1e-4 * a.abs().max(n.abs()) + 1e-8;
    let layout = net.param_layout();
    assert_eq!(grads.params.len(), layout.len());
    for (block, &(kind, len)) in layout.iter().enumerate() {
        for i in 0..len {
            let orig = net.params_mut()[block].values[i];
            net.params_mut()[block].values[i] = orig + h;
            let plus = objective(&net, x, t);
            net.params_mut()[block].values[i] = orig - h;
            let minus = objective(&net, x, t);
            net.params_mut()[block].values[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grads.params[block][i];
            assert!(close(analytic, numeric), "{kind:?} block {block}[{i}]: {analytic} vs {numeric}");
        }
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let mut xm = x.clone();
        xm.data_mut()[i] -= h;
        let numeric = (objective(&net, &xp, t) - objective(&net, &xm, t)) / (2.0 * h);
        let analytic = grads.input.data()[i];
        assert!(close(analytic, numeric), "input[{i}]: {analytic} vs {numeric}");
    }
}

fn conv_dome_net(rng: &mut ChaCha8Rng) -> Network {
    Network::new(
        vec![1, 4, 4],
        vec![
            Layer::Conv2d(Conv2d::init(1, 2, 3, 1, 1, true, rng)),
            Layer::Activation(Activation::Tanh),
            Layer::MaxPool2d { size: 2 },
            Layer::Flatten,
            Layer::Dense(Dense::init(8, 3, true, rng)),
            Layer::Activation(Activation::Pdome(PdomeParams::new(0.8, 1.3, 0.4).unwrap())),
            Layer::Dense(Dense::init(3, 1, false, rng)),
            Layer::Activation(Activation::Dome(DomeParams::new(1.1, 0.9).unwrap())),
        ],
        5,
        LossKind::Bce,
    )
    .unwrap()
}

fn mdome_net(rng: &mut ChaCha8Rng) -> Network {
    Network::new(
        vec![3],
        vec![
            Layer::Dense(Dense::init(3, 4, true, rng)),
            Layer::Activation(Activation::Sigmoid),
            Layer::Dense(Dense::init(4, 3, false, rng)),
            Layer::Activation(Activation::Mdome(MdomeParams::new(4, 0.9, 1.7).unwrap())),
        ],
        1,
        LossKind::Mse,
    )
    .unwrap()
}

fn softmax_net(rng: &mut ChaCha8Rng, loss: LossKind) -> Network {
    let mut layers = vec![
        Layer::Dense(Dense::init(3, 5, true, rng)),
        Layer::Activation(Activation::Relu),
        Layer::Dense(Dense::init(5, 3, true, rng)),
    ];
    if loss == LossKind::Mse {
        layers.push(Layer::Activation(Activation::Softmax));
    }
    Network::new(vec![3], layers, 1, loss).unwrap()
}

#[test]
fn every_layer_kind_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = conv_dome_net(&mut rng);
    let x = random(&[2, 1, 4, 4], &mut rng).map(|v| v.abs());
    let t = LossKind::Bce.targets(&[1, 0], 1).unwrap();
    check_gradients(net, &x, &t);

    let net = mdome_net(&mut rng);
    let x = random(&[3, 3], &mut rng);
    let t = LossKind::Mse.targets(&[0, 3, 2], 4).unwrap();
    check_gradients(net, &x, &t);

    for kind in [LossKind::Mse, LossKind::CeSoftmax] {
        let net = softmax_net(&mut rng, kind);
        let x = random(&[4, 3], &mut rng);
        let t = kind.targets(&[0, 1, 2, 1], 3).unwrap();
        check_gradients(net, &x, &t);
    }
}

#[test]
fn reference_architectures_match_finite_differences_on_sampled_parameters() {
    let spec = NetworkSpec {
        hidden: Hidden::Pdome,
        ..NetworkSpec::new(Architecture::Mlp, Head::Mdome, 3)
    };
    let net = build(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&[3, 2], &mut rng);
    let t = LossKind::Mse.targets(&[0, 1, 2], 3).unwrap();
    check_gradients(net, &x, &t);
}

#[test]
fn spec_forward_examples() {
    let dense = Dense::new(Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap(), None).unwrap();
    let net = Network::new(
        vec![2],
        vec![Layer::Dense(dense), Layer::Activation(Activation::Sigmoid)],
        0,
        LossKind::Bce,
    )
    .unwrap();
    assert_eq!(net.output(&Tensor::zeros(&[1, 2])).unwrap().data(), &[0.5]);

    let lenet = build(&NetworkSpec::new(Architecture::Lenet2d, Head::Sigmoid, 2)).unwrap();
    let pass = lenet.forward(&Tensor::zeros(&[1, 1, 28, 28])).unwrap();
    assert_eq!(pass.embedding().shape(), &[1, 2]);
    assert_eq!(pass.output().shape(), &[1, 1]);

    let identity = Dense::new(Tensor::eye(2), None).unwrap();
    let net = Network::new(
        vec![2],
        vec![
            Layer::Dense(identity),
            Layer::Activation(Activation::Mdome(MdomeParams::initial(3).unwrap())),
        ],
        0,
        LossKind::Mse,
    )
    .unwrap();
    let out = net.output(&Tensor::zeros(&[1, 2])).unwrap();
    for &v in out.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn shape_mismatches_are_rejected() {
    let lenet = build(&NetworkSpec::new(Architecture::Lenet2d, Head::Softmax, 10)).unwrap();
    assert!(matches!(
        lenet.forward(&Tensor::zeros(&[1, 1, 27, 28])),
        Err(Error::Dimension { .. })
    ));
    let bad = Network::new(
        vec![3],
        vec![Layer::Dense(Dense::init(4, 2, true, &mut ChaCha8Rng::seed_from_u64(0))), Layer::Flatten],
        0,
        LossKind::Mse,
    );
    assert!(matches!(bad, Err(Error::Dimension { .. })));
    let no_room = Network::new(vec![2], vec![Layer::Activation(Activation::Relu)], 0, LossKind::Mse);
    assert!(no_room.is_err());
    assert!(build(&NetworkSpec::new(Architecture::Mlp, Head::Dome, 3)).is_err());
}

#[test]
fn zero_loss_gradient_gives_zero_parameter_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = conv_dome_net(&mut rng);
    let x = random(&[2, 1, 4, 4], &mut rng);
    let pass = net.forward(&x).unwrap();
    let grads = net.backward(&pass, &Tensor::zeros(pass.output().shape())).unwrap();
    assert!(grads.params.iter().flatten().all(|&g| g == 0.0));
    assert!(grads.input.data().iter().all(|&g| g == 0.0));
}

#[test]
fn bias_free_dense_gradient_is_outer_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Network::new(
        vec![3],
        vec![Layer::Dense(Dense::init(3, 2, false, &mut rng)), Layer::Flatten],
        0,
        LossKind::Mse,
    )
    .unwrap();
    let x = random(&[4, 3], &mut rng);
    let g = random(&[4, 2], &mut rng);
    let pass = net.forward(&x).unwrap();
    let grads = net.backward(&pass, &g).unwrap();
    for i in 0..3 {
        for j in 0..2 {
            let oracle: f64 = (0..4).map(|b| x.row(b)[i] * g.row(b)[j]).sum();
            assert!((grads.params[0][i * 2 + j] - oracle).abs() < 1e-14);
        }
    }
}

#[test]
fn stale_cache_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = mdome_net(&mut rng);
    let x = random(&[1, 3], &mut rng);
    let pass = net.forward(&x).unwrap();
    net.params_mut()[0].values[0] += 0.1;
    let err = net.backward(&pass, &Tensor::zeros(&[1, 4])).unwrap_err();
    assert!(matches!(err, Error::StaleCache { cache: 0, network: 1 }));
}

#[test]
fn frozen_activations_expose_no_parameters() {
    let frozen = Network::new(
        vec![2],
        vec![
            Layer::Activation(Activation::Pdome(PdomeParams::default().frozen())),
            Layer::Activation(Activation::Dome(DomeParams::default().frozen())),
        ],
        0,
        LossKind::Mse,
    )
    .unwrap();
    assert!(frozen.param_layout().is_empty());
}

#[test]
fn predictions_follow_documented_rules() {
    let out = Tensor::from_rows(&[vec![0.2, 0.7, 0.1], vec![0.4, 0.4, 0.2]]).unwrap();
    assert_eq!(predict_from_output(&out), vec![1, 0]);
    let scalar = Tensor::from_rows(&[vec![0.5], vec![0.4999]]).unwrap();
    assert_eq!(predict_from_output(&scalar), vec![1, 0]);

    let p = MdomeParams::initial(3).unwrap();
    let x: Vec<f64> = p.refs.vertex(2).iter().map(|v| v * p.mu).collect();
    let net = Network::new(
        vec![2],
        vec![Layer::Flatten, Layer::Activation(Activation::Mdome(p))],
        0,
        LossKind::Mse,
    )
    .unwrap();
    assert_eq!(net.predict(&Tensor::new(vec![1, 2], x).unwrap()).unwrap(), vec![2]);
}

#[test]
fn logit_decomposition() {
    let f = logit_decompose(&Tensor::vector(&[1.0, 0.0]), &Tensor::vector(&[1.0, 0.0])).unwrap();
    assert_eq!((f.norm_x, f.norm_w, f.cos_theta, f.z), (1.0, 1.0, 1.0, 1.0));
    let f = logit_decompose(&Tensor::vector(&[0.0, 1.0]), &Tensor::vector(&[1.0, 0.0])).unwrap();
    assert_eq!((f.cos_theta, f.z), (0.0, 0.0));
    assert!(matches!(
        logit_decompose(&Tensor::vector(&[0.0, 0.0]), &Tensor::vector(&[1.0, 0.0])),
        Err(Error::Domain(_))
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (x, w) = (random(&[7], &mut rng), random(&[7], &mut rng));
    let f = logit_decompose(&x, &w).unwrap();
    let oracle: f64 = x.data().iter().zip(w.data()).map(|(a, b)| a * b).sum();
    assert!((f.z - oracle).abs() < 1e-12);
    assert!((f.norm_x * f.norm_w * f.cos_theta - oracle).abs() < 1e-12);
}

#[test]
fn checkpoint_round_trips_every_layer_kind() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for net in [conv_dome_net(&mut rng), mdome_net(&mut rng), softmax_net(&mut rng, LossKind::Mse)] {
        let bytes = net.to_bytes();
        assert_eq!(&bytes[..5], b"DOME1");
        let back = Network::from_bytes(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_bytes(), bytes);
    }
    let bytes = conv_dome_net(&mut rng).to_bytes();
    assert!(matches!(Network::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Length { .. })));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Network::from_bytes(&bad), Err(Error::Format(_))));
    let mut long = bytes;
    long.push(0);
    assert!(matches!(Network::from_bytes(&long), Err(Error::Format(_))));
}

#[test]
fn checkpoint_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.dome");
    let net = build(&NetworkSpec::new(Architecture::SmallCnn, Head::Mdome, 10)).unwrap();
    save(&net, &path).unwrap();
    assert_eq!(load(&path).unwrap(), net);
}

#[test]
fn builds_are_seeded() {
    let spec = NetworkSpec::new(Architecture::Lenet2d, Head::Dome, 2);
    assert_eq!(build(&spec).unwrap(), build(&spec).unwrap());
    let other = NetworkSpec { seed: 1, ..spec.clone() };
    assert_ne!(build(&spec).unwrap(), build(&other).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = conv_dome_net(&mut rng);
        let x = random(&[3, 1, 4, 4], &mut rng);
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        prop_assert_eq!(a.output(), b.output());
        prop_assert_eq!(a.embedding(), b.embedding());
        prop_assert_eq!(net.output(&x).unwrap(), a.output().clone());
    }

    #[test]
    fn softmax_loss_ignores_logit_shift(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random(&[3, 4], &mut rng);
        let t = LossKind::CeSoftmax.targets(&[0, 3, 1], 4).unwrap();
        let (v0, g0) = loss(LossKind::CeSoftmax, &z, &t).unwrap();
        let (v1, g1) = loss(LossKind::CeSoftmax, &z.map(|v| v + shift), &t).unwrap();
        prop_assert!((v0 - v1).abs() < 1e-10);
        prop_assert!(g0.max_abs_diff(&g1) < 1e-10);
    }
}
