//! SGD training with a cyclic learning rate, optionally adversarial.
//!
//! [`train`] runs whole experiments; [`Trainer`] exposes single epochs.
//! Fast adversarial training replaces each batch by a one-step FGSM
//! perturbation from a uniform random start inside the `ε`-ball.

mod optimizer;

pub use optimizer::{cyclic_lr, Sgd};

use std::io::Write;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{predict_from_output, Activation, Layer, Network};
use crate::tensor::Tensor;

/// Fast adversarial training budget, in `[0, 1]` pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FatConfig {
    pub epsilon: f64,
    pub alpha: f64,
}

impl FatConfig {
    pub fn new(epsilon: f64, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) || !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!(
                "FAT needs 0 ≤ ε ≤ 1 and α > 0, got ε={epsilon}, α={alpha}"
            )));
        }
        Ok(FatConfig { epsilon, alpha })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    pub fat: Option<FatConfig>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 128,
            lr_max: 0.1,
            momentum: 0.9,
            nesterov: false,
            weight_decay: 5e-4,
            fat: None,
            seed: 0,
        }
    }
}

/// Summary of one training epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Learning rate of the last step.
    pub lr: f64,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub pi: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub const COLUMNS: [&'static str; 8] =
        ["epoch", "lr", "train_loss", "train_acc", "test_acc", "mu", "sigma", "pi"];

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::COLUMNS)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.lr.to_string(),
                r.train_loss.to_string(),
                r.train_acc.to_string(),
                r.test_acc.to_string(),
                opt(r.mu),
                opt(r.sigma),
                opt(r.pi),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `(μ, σ, π)` of the last DOME-family activation, if any.
pub fn dome_parameters(net: &Network) -> (Option<f64>, Option<f64>, Option<f64>) {
    for layer in net.layers().iter().rev() {
        match layer {
            Layer::Activation(Activation::Dome(p)) => return (Some(p.mu), Some(p.sigma), None),
            Layer::Activation(Activation::Pdome(p)) => return (Some(p.mu), Some(p.sigma), Some(p.pi)),
            Layer::Activation(Activation::Mdome(p)) => return (Some(p.mu), Some(p.sigma), None),
            _ => {}
        }
    }
    (None, None, None)
}

/// Batch size used for evaluation passes.
pub const EVAL_BATCH: usize = 500;

/// Fraction of `data` classified correctly.
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    Ok(correct_flags(net, data)?.iter().filter(|&&c| c).count() as f64 / data.len() as f64)
}

/// Per-example correctness of the model's predictions.
pub fn correct_flags(net: &Network, data: &Dataset) -> Result<Vec<bool>> {
    let mut out = Vec::with_capacity(data.len());
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_BATCH) {
        let (x, y) = data.batch(chunk);
        let pred = net.predict(&x)?;
        out.extend(pred.iter().zip(&y).map(|(p, t)| p == t));
    }
    Ok(out)
}

/// Draws `δ ~ U(-ε, ε)`, takes one signed-gradient step of size `α` at the
/// clamped start point, and returns `clamp(x + δ, 0, 1)` with `‖δ‖∞ ≤ ε`.
pub fn fat_perturb(
    net: &Network,
    x: &Tensor,
    labels: &[usize],
    fat: &FatConfig,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    if fat.epsilon == 0.0 {
        return Ok(x.clone());
    }
    let eps = fat.epsilon;
    let delta: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-eps..=eps)).collect();
    let start_data = x.data().iter().zip(&delta).map(|(xi, d)| (xi + d).clamp(0.0, 1.0)).collect();
    let start = Tensor::new(x.shape().to_vec(), start_data)?;
    let targets = net.loss_kind().targets(labels, net.output_width())?;
    let (_, _, grad) = net.loss_input_gradient(&start, &targets)?;
    let adv = x
        .data()
        .iter()
        .zip(&delta)
        .zip(grad.data())
        .map(|((xi, d), g)| {
            let d = (d + fat.alpha * sign(*g)).clamp(-eps, eps);
            (xi + d).clamp(0.0, 1.0)
        })
        .collect();
    Tensor::new(x.shape().to_vec(), adv)
}

/// Sign with `sign(0) = 0`.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Optimizer, schedule position and random streams of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    opt: Sgd,
    step: usize,
    total_steps: usize,
    epoch: usize,
    order_rng: ChaCha8Rng,
    fat_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(config: TrainConfig, train_len: usize) -> Result<Self> {
        if config.epochs == 0 || config.batch_size == 0 || train_len == 0 {
            return Err(Error::Config("epochs, batch size and training set must be non-empty".into()));
        }
        if !(config.lr_max > 0.0 && config.lr_max.is_finite()) {
            return Err(Error::Config(format!("lr_max must be positive, got {}", config.lr_max)));
        }
        let opt = Sgd::new(config.momentum, config.nesterov, config.weight_decay)?;
        let total_steps = config.epochs * train_len.div_ceil(config.batch_size);
        let order_rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut fat_rng = ChaCha8Rng::seed_from_u64(config.seed);
        fat_rng.set_stream(1);
        Ok(Trainer {
            config,
            opt,
            step: 0,
            total_steps,
            epoch: 0,
            order_rng,
            fat_rng,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Runs one epoch, adversarial when the config carries a FAT budget.
    pub fn epoch(&mut self, net: &mut Network, data: &Dataset) -> Result<EpochStats> {
        match self.config.fat {
            Some(fat) => self.fat_epoch(net, data, &fat),
            None => self.run_epoch(net, data, None),
        }
    }

    pub fn standard_epoch(&mut self, net: &mut Network, data: &Dataset) -> Result<EpochStats> {
        self.run_epoch(net, data, None)
    }

    pub fn fat_epoch(&mut self, net: &mut Network, data: &Dataset, fat: &FatConfig) -> Result<EpochStats> {
        self.run_epoch(net, data, Some(fat))
    }

    fn run_epoch(&mut self, net: &mut Network, data: &Dataset, fat: Option<&FatConfig>) -> Result<EpochStats> {
        self.epoch += 1;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.order_rng);
        let (mut loss_sum, mut correct, mut lr) = (0.0, 0usize, 0.0);
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            self.step += 1;
            lr = cyclic_lr(self.step, self.total_steps, self.config.lr_max);
            let (mut x, y) = data.batch(chunk);
            if let Some(fat) = fat {
                x = fat_perturb(net, &x, &y, fat, &mut self.fat_rng)?;
            }
            let targets = net.loss_kind().targets(&y, net.output_width())?;
            let (loss, output, grads) = net.loss_and_gradients(&x, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: self.epoch,
                    batch: b + 1,
                    loss,
                });
            }
            loss_sum += loss * chunk.len() as f64;
            correct += predict_from_output(&output).iter().zip(&y).filter(|(p, t)| p == t).count();
            self.opt.step(net.params_mut(), &grads.params, lr)?;
        }
        Ok(EpochStats {
            lr,
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        })
    }
}

/// Trains `net` for `config.epochs` epochs, evaluating on `test` after each.
pub fn train(net: &mut Network, train: &Dataset, test: &Dataset, config: &TrainConfig) -> Result<History> {
    let mut trainer = Trainer::new(config.clone(), train.len())?;
    let mut history = History::default();
    for epoch in 1..=config.epochs {
        let stats = trainer.epoch(net, train)?;
        let test_acc = accuracy(net, test)?;
        let (mu, sigma, pi) = dome_parameters(net);
        info!(
            "epoch {epoch}: lr {:.4} loss {:.4} train acc {:.4} test acc {:.4}",
            stats.lr, stats.loss, stats.accuracy, test_acc
        );
        history.epochs.push(EpochRecord {
            epoch,
            lr: stats.lr,
            train_loss: stats.loss,
            train_acc: stats.accuracy,
            test_acc,
            mu,
            sigma,
            pi,
        });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_blobs;
    use crate::network::{build, Architecture, Head, Hidden, NetworkSpec};
    use proptest::prelude::*;

    fn blobs_net(head: Head, classes: usize, seed: u64) -> Network {
        build(&NetworkSpec {
            seed,
            ..NetworkSpec::new(Architecture::Mlp, head, classes)
        })
        .unwrap()
    }

    fn quick_config(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 5,
            batch_size: 32,
            lr_max: 0.2,
            weight_decay: 0.0,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_budget_fat_matches_standard_training() {
        let data = make_blobs(3, 40, 0.05, 1).unwrap();
        let mut a = blobs_net(Head::Softmax, 3, 2);
        let mut b = a.clone();
        let mut ta = Trainer::new(quick_config(3), data.len()).unwrap();
        let mut tb = Trainer::new(quick_config(3), data.len()).unwrap();
        let fat = FatConfig::new(0.0, 0.1).unwrap();
        for _ in 0..2 {
            let sa = ta.standard_epoch(&mut a, &data).unwrap();
            let sb = tb.fat_epoch(&mut b, &data, &fat).unwrap();
            assert_eq!(sa, sb);
        }
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn fat_reaches_high_benign_accuracy_on_blobs() {
        let train_set = make_blobs(3, 200, 0.04, 5).unwrap();
        let test_set = make_blobs(3, 100, 0.04, 6).unwrap();
        let mut net = blobs_net(Head::Softmax, 3, 7);
        let config = TrainConfig {
            fat: Some(FatConfig::new(8.0 / 255.0, 10.0 / 255.0).unwrap()),
            ..quick_config(8)
        };
        let history = train(&mut net, &train_set, &test_set, &config).unwrap();
        assert_eq!(history.len(), 5);
        assert!(history.epochs[4].test_acc >= 0.99, "{:?}", history.epochs[4]);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let data = make_blobs(3, 50, 0.05, 1).unwrap();
        let run = || {
            let mut net = blobs_net(Head::Mdome, 3, 4);
            let config = TrainConfig {
                fat: Some(FatConfig::new(0.03, 0.04).unwrap()),
                ..quick_config(9)
            };
            let h = train(&mut net, &data, &data, &config).unwrap();
            (net.to_bytes(), h)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn frozen_dome_parameters_never_move() {
        let data = make_blobs(2, 50, 0.05, 2).unwrap();
        let spec = NetworkSpec {
            hidden: Hidden::Pdome,
            ..NetworkSpec::new(Architecture::Mlp, Head::Dome, 2)
        };
        let mut net = build(&spec).unwrap();
        let mut layers = net.layers().to_vec();
        for layer in &mut layers {
            if let Layer::Activation(a) = layer {
                match a {
                    Activation::Dome(p) => p.learnable = false,
                    Activation::Pdome(p) => p.learnable = false,
                    _ => {}
                }
            }
        }
        net = Network::new(net.input_shape().to_vec(), layers, net.embedding_index(), net.loss_kind()).unwrap();
        let before: Vec<_> = dome_snapshot(&net);
        train(&mut net, &data, &data, &quick_config(1)).unwrap();
        assert_eq!(dome_snapshot(&net), before);
    }

    #[test]
    fn learnable_dome_parameters_do_move() {
        let data = make_blobs(2, 50, 0.05, 2).unwrap();
        let mut net = blobs_net(Head::Dome, 2, 0);
        let before = dome_snapshot(&net);
        let history = train(&mut net, &data, &data, &quick_config(1)).unwrap();
        assert_ne!(dome_snapshot(&net), before);
        assert!(history.epochs.iter().all(|r| r.mu.is_some() && r.pi.is_none()));
    }

    fn dome_snapshot(net: &Network) -> Vec<f64> {
        net.layers()
            .iter()
            .flat_map(|l| match l {
                Layer::Activation(Activation::Dome(p)) => vec![p.mu, p.sigma],
                Layer::Activation(Activation::Pdome(p)) => vec![p.mu, p.sigma, p.pi],
                _ => vec![],
            })
            .collect()
    }

    #[test]
    fn divergence_is_reported() {
        let data = make_blobs(3, 30, 0.05, 1).unwrap();
        let mut net = blobs_net(Head::Softmax, 3, 0);
        let config = TrainConfig {
            lr_max: 1e200,
            ..quick_config(0)
        };
        let err = train(&mut net, &data, &data, &config).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn history_csv_has_documented_columns() {
        let data = make_blobs(2, 20, 0.05, 1).unwrap();
        let mut net = blobs_net(Head::Sigmoid, 2, 0);
        let history = train(&mut net, &data, &data, &quick_config(0)).unwrap();
        let mut buf = Vec::new();
        history.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "epoch,lr,train_loss,train_acc,test_acc,mu,sigma,pi");
        assert_eq!(text.lines().count(), 6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn fat_perturbations_stay_in_ball_and_box(seed in any::<u64>(), eps in 0.001f64..0.5, alpha in 0.001f64..0.6) {
            let data = make_blobs(3, 4, 0.3, seed).unwrap();
            let net = blobs_net(Head::Softmax, 3, seed);
            let fat = FatConfig::new(eps, alpha).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = data.inputs.map(|v| v.clamp(0.0, 1.0));
            let adv = fat_perturb(&net, &x, &data.labels, &fat, &mut rng).unwrap();
            for (a, x) in adv.data().iter().zip(x.data()) {
                prop_assert!((0.0..=1.0).contains(a));
                prop_assert!((a - x).abs() <= eps + 1e-12);
            }
        }
    }
}
