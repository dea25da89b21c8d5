use proptest::prelude::*;

use super::*;
use crate::activations::{dome_logit1, dome_logit2, mdome_normalize};
use crate::data::make_blobs;
use crate::network::{build, Architecture, Dense, Head, LossKind, NetworkSpec};
use crate::training::{train, TrainConfig};

fn mdome_mlp(seed: u64) -> Network {
    build(&NetworkSpec {
        seed,
        ..NetworkSpec::new(Architecture::Mlp, Head::Mdome, 3)
    })
    .unwrap()
}

fn boxed_blobs(per_class: usize, seed: u64) -> Dataset {
    let mut d = make_blobs(3, per_class, 0.08, seed).unwrap();
    d.inputs = d.inputs.map(|v| v.clamp(0.0, 1.0));
    d
}

fn trained_mdome() -> (Network, Dataset) {
    let data = boxed_blobs(60, 1);
    let mut net = mdome_mlp(2);
    let config = TrainConfig {
        epochs: 8,
        batch_size: 30,
        lr_max: 0.3,
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    train(&mut net, &data, &data, &config).unwrap();
    (net, data)
}

fn cross_entropy(z: &[f64], label: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[label]
}

/// Summed surrogate loss, computed through the public API only.
fn surrogate_value(net: &Network, x: &Tensor, labels: &[usize], variant: LossVariant) -> f64 {
    match variant {
        LossVariant::TrainingLoss => {
            let t = net.loss_kind().targets(labels, net.output_width()).unwrap();
            loss(net.loss_kind(), &net.output(x).unwrap(), &t).unwrap().0 * labels.len() as f64
        }
        LossVariant::ProbsAsLogits => {
            let out = net.output(x).unwrap();
            (0..labels.len())
                .map(|b| {
                    let p = mdome_normalize(&Tensor::vector(out.row(b))).unwrap();
                    cross_entropy(p.data(), labels[b])
                })
                .sum()
        }
        LossVariant::Logit1 | LossVariant::Logit2 => {
            let head = net.mdome_head().unwrap();
            let Layer::Activation(Activation::Mdome(p)) = &net.layers()[head] else {
                unreachable!()
            };
            let pass = net.forward(x).unwrap();
            let input = pass.activation(head);
            (0..labels.len())
                .map(|b| {
                    let row = Tensor::vector(input.row(b));
                    let z = if variant == LossVariant::Logit1 {
                        dome_logit1(&row, p).unwrap()
                    } else {
                        dome_logit2(&row, p).unwrap()
                    };
                    cross_entropy(z.data(), labels[b])
                })
                .sum()
        }
    }
}

#[test]
fn surrogate_gradients_match_finite_differences() {
    let net = mdome_mlp(5);
    let data = boxed_blobs(2, 3);
    let (x, y) = (data.inputs.clone(), data.labels.clone());
    for variant in LossVariant::ALL {
        let grad = surrogate_gradient(&net, &x, &y, variant).unwrap();
        for i in 0..x.len() {
            let h = 1e-6;
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let numeric = (surrogate_value(&net, &xp, &y, variant) - surrogate_value(&net, &xm, &y, variant)) / (2.0 * h);
            let analytic = grad.data()[i];
            assert!(
                (analytic - numeric).abs() <= 1e-5 * analytic.abs().max(numeric.abs()) + 1e-8,
                "{variant} [{i}]: {analytic} vs {numeric}"
            );
        }
    }
}

#[test]
fn zero_budget_fgsm_is_identity() {
    let net = mdome_mlp(0);
    let data = boxed_blobs(3, 0);
    assert_eq!(fgsm(&net, &data.inputs, &data.labels, 0.0, LossVariant::Logit1).unwrap(), data.inputs);
}

#[test]
fn fgsm_on_linear_classifier_flips_iff_budget_exceeds_margin() {
    let dense = Dense::new(Tensor::new(vec![1, 1], vec![2.0]).unwrap(), Some(Tensor::vector(&[-1.0]))).unwrap();
    let net = Network::new(
        vec![1],
        vec![Layer::Dense(dense), Layer::Activation(Activation::Sigmoid)],
        0,
        LossKind::Bce,
    )
    .unwrap();
    let x = Tensor::new(vec![1, 1], vec![0.3]).unwrap();
    assert_eq!(net.predict(&x).unwrap(), vec![0]);
    // margin |w·x + b| / |w| = 0.4 / 2
    for (eps, flips) in [(0.19, false), (0.199, false), (0.201, true), (0.3, true)] {
        let adv = fgsm(&net, &x, &[0], eps, LossVariant::TrainingLoss).unwrap();
        assert_eq!(net.predict(&adv).unwrap()[0] == 1, flips, "ε = {eps}");
    }
}

#[test]
fn degenerate_pgd_equals_fgsm() {
    let (net, data) = trained_mdome();
    let correct: Vec<usize> = (0..data.len())
        .filter(|&i| net.predict(&data.inputs.select_rows(&[i])).unwrap()[0] == data.labels[i])
        .collect();
    let (x, y) = data.batch(&correct);
    for variant in LossVariant::ALL {
        let cfg = AttackConfig {
            random_init: false,
            variant,
            ..AttackConfig::pgd(0.2, 0.15, 1, 1)
        };
        let out = pgd(&net, &x, &y, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.adversarial, fgsm(&net, &x, &y, 0.15, variant).unwrap(), "{variant}");
    }
}

#[test]
fn variants_require_an_mdome_head() {
    let net = build(&NetworkSpec::new(Architecture::Mlp, Head::Softmax, 3)).unwrap();
    let data = boxed_blobs(2, 0);
    assert!(matches!(
        fgsm(&net, &data.inputs, &data.labels, 0.1, LossVariant::Logit2),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        adaptive_eval(&net, &data, &AttackConfig::pgd(0.1, 0.02, 2, 1)),
        Err(Error::Config(_))
    ));
    assert!(attack_report(&net, &data, &AttackConfig::pgd(0.1, 0.02, 2, 1), &[LossVariant::TrainingLoss]).is_ok());
}

#[test]
fn fully_wrong_model_has_zero_union_accuracy() {
    let (net, data) = trained_mdome();
    let preds = net.predict(&data.inputs).unwrap();
    let mut wrong = data.clone();
    wrong.labels = preds.iter().map(|p| (p + 1) % 3).collect();
    let report = adaptive_eval(&net, &wrong, &AttackConfig::pgd(0.05, 0.01, 3, 1)).unwrap();
    assert_eq!(report.union_accuracy(), 0.0);
}

#[test]
fn union_dominates_every_variant() {
    let (net, data) = trained_mdome();
    let report = adaptive_eval(&net, &data, &AttackConfig::pgd(0.12, 0.03, 5, 2)).unwrap();
    assert_eq!(report.variants.len(), 4);
    for r in &report.variants {
        for (u, s) in report.union.iter().zip(&r.success) {
            assert!(*u || !*s);
        }
        assert!(report.union_accuracy() <= r.adversarial_accuracy());
        assert!(r.linf.iter().all(|&d| d <= 0.12 + 1e-12));
    }
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "id,variant,success,final_pred,linf");
    assert_eq!(text.lines().count(), 1 + 4 * data.len());
}

#[test]
fn attacks_leave_the_model_untouched() {
    let (net, data) = trained_mdome();
    let before = net.to_bytes();
    adaptive_eval(&net, &data, &AttackConfig::pgd(0.1, 0.02, 3, 2)).unwrap();
    assert_eq!(net.to_bytes(), before);
}

#[test]
fn inputs_outside_the_box_are_rejected() {
    let net = mdome_mlp(0);
    let x = Tensor::from_rows(&[vec![1.2, 0.3]]).unwrap();
    assert!(matches!(fgsm(&net, &x, &[0], 0.1, LossVariant::TrainingLoss), Err(Error::Domain(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn adversarial_examples_stay_in_ball_and_box(
        seed in any::<u64>(),
        eps in 0.0f64..0.4,
        step in 0.0f64..0.2,
        iterations in 1usize..4,
        restarts in 1usize..3,
        v in 0usize..4,
    ) {
        let net = mdome_mlp(seed);
        let data = boxed_blobs(3, seed);
        let variant = LossVariant::ALL[v];
        let cfg = AttackConfig { variant, seed, ..AttackConfig::pgd(eps, step, iterations, restarts) };
        let out = pgd(&net, &data.inputs, &data.labels, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let fg = fgsm(&net, &data.inputs, &data.labels, eps, variant).unwrap();
        for adv in [&out.adversarial, &fg] {
            for (a, x) in adv.data().iter().zip(data.inputs.data()) {
                prop_assert!((0.0..=1.0).contains(a));
                prop_assert!((a - x).abs() <= eps + 1e-12);
            }
        }
    }

    #[test]
    fn more_restarts_never_lose_successes(seed in any::<u64>(), restarts in 1usize..4) {
        let net = mdome_mlp(seed % 4);
        let data = boxed_blobs(4, seed);
        let cfg = |r| AttackConfig { variant: LossVariant::Logit1, ..AttackConfig::pgd(0.15, 0.04, 3, r) };
        let few = pgd(&net, &data.inputs, &data.labels, &cfg(restarts), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let more = pgd(&net, &data.inputs, &data.labels, &cfg(restarts + 1), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for (a, b) in few.success.iter().zip(&more.success) {
            prop_assert!(!*a || *b);
        }
    }
}
