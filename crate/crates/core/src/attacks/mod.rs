//! FGSM and PGD evasion attacks under an `L∞` budget.
//!
//! Attacks never modify the model. Gradients come from one of four
//! surrogate losses: the model's own training loss, or, for MDOME heads,
//! cross-entropy over normalized MDOME outputs, over the distance logits
//! `κ`, or over the dot-product logits `x̄·μēᵢ`.
//!
//! Adversarial accuracy is measured over all examples: an example the model
//! already misclassifies counts as a successful attack.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activations::{
    logit1_forward_into, logit1_vjp, logit2_forward_into, logit2_vjp, normalize_into, normalize_vjp,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{loss, predict_from_output, softmax_into, Activation, Layer, Network};
use crate::tensor::Tensor;
use crate::training::{sign, EVAL_BATCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossVariant {
    TrainingLoss,
    /// Normalized MDOME outputs used directly as softmax logits.
    ProbsAsLogits,
    /// `κ` logits.
    Logit1,
    /// `x̄·μēᵢ` logits.
    Logit2,
}

impl LossVariant {
    pub const ALL: [LossVariant; 4] = [
        LossVariant::TrainingLoss,
        LossVariant::ProbsAsLogits,
        LossVariant::Logit1,
        LossVariant::Logit2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::TrainingLoss => "training_loss",
            LossVariant::ProbsAsLogits => "probs_as_logits",
            LossVariant::Logit1 => "logit1",
            LossVariant::Logit2 => "logit2",
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss variant '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Fgsm,
    Pgd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub epsilon: f64,
    pub step: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub variant: LossVariant,
    /// Uniform start inside the ball; zero start otherwise.
    pub random_init: bool,
    pub seed: u64,
}

impl AttackConfig {
    pub fn fgsm(epsilon: f64) -> Self {
        AttackConfig {
            kind: AttackKind::Fgsm,
            epsilon,
            step: epsilon,
            iterations: 1,
            restarts: 1,
            variant: LossVariant::TrainingLoss,
            random_init: false,
            seed: 0,
        }
    }

    pub fn pgd(epsilon: f64, step: f64, iterations: usize, restarts: usize) -> Self {
        AttackConfig {
            kind: AttackKind::Pgd,
            epsilon,
            step,
            iterations,
            restarts,
            variant: LossVariant::TrainingLoss,
            random_init: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.restarts == 0 {
            return Err(Error::Config("attacks need at least one iteration and one restart".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite() && self.step >= 0.0 && self.step.is_finite()) {
            return Err(Error::Config(format!(
                "attack budget must be finite and non-negative, got ε={}, step={}",
                self.epsilon, self.step
            )));
        }
        Ok(())
    }
}

fn check_variant(net: &Network, variant: LossVariant) -> Result<()> {
    if variant != LossVariant::TrainingLoss && net.mdome_head().is_none() {
        return Err(Error::Config(format!("loss variant {variant} needs an MDOME head")));
    }
    Ok(())
}

fn check_box(x: &Tensor) -> Result<()> {
    if x.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Domain("attack inputs must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Gradient of the summed surrogate loss with respect to the input.
pub fn surrogate_gradient(net: &Network, x: &Tensor, labels: &[usize], variant: LossVariant) -> Result<Tensor> {
    check_variant(net, variant)?;
    let pass = net.forward(x)?;
    let batch = labels.len();
    match variant {
        LossVariant::TrainingLoss => {
            let targets = net.loss_kind().targets(labels, net.output_width())?;
            let (_, grad) = loss(net.loss_kind(), pass.output(), &targets)?;
            let grad = grad.scale(batch as f64);
            Ok(net.backward_from(&pass, net.layers().len(), &grad, false)?.input)
        }
        LossVariant::ProbsAsLogits => {
            let out = pass.output();
            let n = out.row_len();
            let mut grad = Tensor::zeros(out.shape());
            let (mut probs, mut soft, mut g) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            for (b, &label) in labels.iter().enumerate() {
                normalize_into(out.row(b), &mut probs);
                softmax_into(&probs, &mut soft);
                g.copy_from_slice(&soft);
                g[label] -= 1.0;
                normalize_vjp(out.row(b), &g, grad.row_mut(b));
            }
            Ok(net.backward_from(&pass, net.layers().len(), &grad, false)?.input)
        }
        LossVariant::Logit1 | LossVariant::Logit2 => {
            let head = net.mdome_head().expect("checked above");
            let Layer::Activation(Activation::Mdome(p)) = &net.layers()[head] else {
                unreachable!("mdome_head points at an MDOME layer")
            };
            let input = pass.activation(head);
            let n = p.n();
            let mut dx = Tensor::zeros(input.shape());
            let (mut z, mut soft) = (vec![0.0; n], vec![0.0; n]);
            for (b, &label) in labels.iter().enumerate() {
                let xb = input.row(b);
                if variant == LossVariant::Logit1 {
                    logit1_forward_into(xb, p, &mut z);
                } else {
                    logit2_forward_into(xb, p, &mut z);
                }
                softmax_into(&z, &mut soft);
                soft[label] -= 1.0;
                if variant == LossVariant::Logit1 {
                    logit1_vjp(xb, p, &soft, dx.row_mut(b));
                } else {
                    logit2_vjp(xb, p, &soft, dx.row_mut(b));
                }
            }
            Ok(net.backward_from(&pass, head, &dx, false)?.input)
        }
    }
}

/// Projects `x + δ` onto `{‖δ‖∞ ≤ ε} ∩ [0, 1]`.
fn project(x: f64, candidate: f64, eps: f64) -> f64 {
    candidate.clamp(x - eps, x + eps).clamp(0.0, 1.0)
}

/// One signed-gradient step of size `ε`, projected onto ball and box.
pub fn fgsm(net: &Network, x: &Tensor, labels: &[usize], epsilon: f64, variant: LossVariant) -> Result<Tensor> {
    check_box(x)?;
    if epsilon == 0.0 {
        return Ok(x.clone());
    }
    let grad = surrogate_gradient(net, x, labels, variant)?;
    let adv = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&xi, &g)| project(xi, xi + epsilon * sign(g), epsilon))
        .collect();
    Tensor::new(x.shape().to_vec(), adv)
}

/// Outcome of an attack on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub adversarial: Tensor,
    pub success: Vec<bool>,
    pub predictions: Vec<usize>,
}

/// Projected gradient descent with random restarts.
///
/// Examples the model already misclassifies are returned unchanged and count
/// as successes. Every restart draws a fresh start for the whole batch, so a
/// run with `r + 1` restarts repeats the first `r` restarts of a run with `r`.
/// An example stops at its first misclassified iterate.
pub fn pgd(net: &Network, x: &Tensor, labels: &[usize], cfg: &AttackConfig, rng: &mut impl Rng) -> Result<AttackOutcome> {
    cfg.validate()?;
    check_variant(net, cfg.variant)?;
    check_box(x)?;
    if x.rows() != labels.len() {
        return Err(Error::Argument(format!("{} inputs but {} labels", x.rows(), labels.len())));
    }
    let (batch, width) = (x.rows(), x.row_len());
    let eps = cfg.epsilon;
    let mut adversarial = x.clone();
    let mut predictions = net.predict(x)?;
    let mut success: Vec<bool> = predictions.iter().zip(labels).map(|(p, l)| p != l).collect();

    for _ in 0..cfg.restarts {
        let start: Vec<f64> = if cfg.random_init && eps > 0.0 {
            (0..batch * width).map(|_| rng.random_range(-eps..=eps)).collect()
        } else {
            vec![0.0; batch * width]
        };
        let mut active: Vec<usize> = (0..batch).filter(|&i| !success[i]).collect();
        if active.is_empty() {
            continue;
        }
        let mut current = x.select_rows(&active);
        for (slot, &i) in active.iter().enumerate() {
            let row = current.row_mut(slot);
            for (k, v) in row.iter_mut().enumerate() {
                *v = project(*v, *v + start[i * width + k], eps);
            }
        }
        for _ in 0..cfg.iterations {
            let y: Vec<usize> = active.iter().map(|&i| labels[i]).collect();
            let grad = surrogate_gradient(net, &current, &y, cfg.variant)?;
            for (slot, &i) in active.iter().enumerate() {
                let x0 = x.row(i);
                let g = grad.row(slot);
                for ((v, &x0k), &gk) in current.row_mut(slot).iter_mut().zip(x0).zip(g) {
                    *v = project(x0k, *v + cfg.step * sign(gk), eps);
                }
            }
            let output = net.output(&current)?;
            let preds = predict_from_output(&output);
            let mut keep = Vec::with_capacity(active.len());
            for (slot, &i) in active.iter().enumerate() {
                predictions[i] = preds[slot];
                adversarial.row_mut(i).copy_from_slice(current.row(slot));
                if preds[slot] != labels[i] {
                    success[i] = true;
                } else {
                    keep.push(slot);
                }
            }
            if keep.is_empty() {
                break;
            }
            if keep.len() < active.len() {
                current = current.select_rows(&keep);
                active = keep.iter().map(|&s| active[s]).collect();
            }
        }
    }
    Ok(AttackOutcome {
        adversarial,
        success,
        predictions,
    })
}

/// Runs the configured attack on one batch.
pub fn attack_batch(net: &Network, x: &Tensor, labels: &[usize], cfg: &AttackConfig, rng: &mut impl Rng) -> Result<AttackOutcome> {
    match cfg.kind {
        AttackKind::Pgd => pgd(net, x, labels, cfg, rng),
        AttackKind::Fgsm => {
            cfg.validate()?;
            let adversarial = fgsm(net, x, labels, cfg.epsilon, cfg.variant)?;
            let clean = net.predict(x)?;
            let predictions = net.predict(&adversarial)?;
            let success = (0..labels.len())
                .map(|i| clean[i] != labels[i] || predictions[i] != labels[i])
                .collect();
            Ok(AttackOutcome {
                adversarial,
                success,
                predictions,
            })
        }
    }
}

/// Fraction of examples the attack failed on.
fn survivors(success: &[bool]) -> f64 {
    success.iter().filter(|&&s| !s).count() as f64 / success.len() as f64
}

/// Per-example results of one loss variant.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub variant: LossVariant,
    pub success: Vec<bool>,
    pub predictions: Vec<usize>,
    /// Measured `‖x_adv − x‖∞` per example.
    pub linf: Vec<f64>,
}

impl VariantResult {
    pub fn adversarial_accuracy(&self) -> f64 {
        survivors(&self.success)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub variants: Vec<VariantResult>,
    /// Success under any variant.
    pub union: Vec<bool>,
}

impl AttackReport {
    pub fn union_accuracy(&self) -> f64 {
        survivors(&self.union)
    }

    pub fn variant(&self, v: LossVariant) -> Option<&VariantResult> {
        self.variants.iter().find(|r| r.variant == v)
    }

    /// CSV with columns `id,variant,success,final_pred,linf`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "variant", "success", "final_pred", "linf"])?;
        for r in &self.variants {
            for i in 0..r.success.len() {
                w.write_record([
                    i.to_string(),
                    r.variant.to_string(),
                    u8::from(r.success[i]).to_string(),
                    r.predictions[i].to_string(),
                    r.linf[i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Attacks every example of `data` under each loss variant.
pub fn attack_report(net: &Network, data: &Dataset, cfg: &AttackConfig, variants: &[LossVariant]) -> Result<AttackReport> {
    if variants.is_empty() || data.is_empty() {
        return Err(Error::Config("an attack report needs data and at least one variant".into()));
    }
    let mut results = Vec::with_capacity(variants.len());
    let all: Vec<usize> = (0..data.len()).collect();
    for (stream, &variant) in variants.iter().enumerate() {
        check_variant(net, variant)?;
        let cfg = AttackConfig { variant, ..cfg.clone() };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream as u64);
        let mut r = VariantResult {
            variant,
            success: Vec::with_capacity(data.len()),
            predictions: Vec::with_capacity(data.len()),
            linf: Vec::with_capacity(data.len()),
        };
        for chunk in all.chunks(EVAL_BATCH) {
            let (x, y) = data.batch(chunk);
            let out = attack_batch(net, &x, &y, &cfg, &mut rng)?;
            r.linf.extend((0..x.rows()).map(|b| {
                x.row(b)
                    .iter()
                    .zip(out.adversarial.row(b))
                    .fold(0.0f64, |m, (a, c)| m.max((a - c).abs()))
            }));
            r.success.extend(out.success);
            r.predictions.extend(out.predictions);
        }
        results.push(r);
    }
    let union = (0..data.len()).map(|i| results.iter().any(|r| r.success[i])).collect();
    Ok(AttackReport {
        variants: results,
        union,
    })
}

/// PGD under the training loss and all three surrogate heads of an MDOME
/// model, with union success.
pub fn adaptive_eval(net: &Network, data: &Dataset, cfg: &AttackConfig) -> Result<AttackReport> {
    if net.mdome_head().is_none() {
        return Err(Error::Config("adaptive evaluation needs an MDOME head".into()));
    }
    attack_report(net, data, cfg, &LossVariant::ALL)
}

#[cfg(test)]
mod tests;
