use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities at exactly 0 or 1 are moved this far inside before the log.
const BCE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Binary cross-entropy on a scalar probability.
    Bce,
    /// Softmax cross-entropy on raw logits.
    CeSoftmax,
    /// Squared error against one-hot targets.
    Mse,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Bce => "bce",
            LossKind::CeSoftmax => "ce_softmax",
            LossKind::Mse => "mse",
        }
    }

    /// Target tensor for integer labels: a `[B × 1]` column for scalar
    /// outputs, one-hot rows otherwise.
    pub fn targets(self, labels: &[usize], width: usize) -> Result<Tensor> {
        if labels.is_empty() || width == 0 {
            return Err(Error::Argument("targets need at least one label and output".into()));
        }
        if width == 1 {
            let data = labels
                .iter()
                .map(|&l| match l {
                    0 | 1 => Ok(l as f64),
                    _ => Err(Error::Argument(format!("label {l} for a binary output"))),
                })
                .collect::<Result<Vec<_>>>()?;
            return Tensor::new(vec![labels.len(), 1], data);
        }
        let mut t = Tensor::zeros(&[labels.len(), width]);
        for (b, &l) in labels.iter().enumerate() {
            if l >= width {
                return Err(Error::Argument(format!("label {l} out of range for {width} outputs")));
            }
            t.row_mut(b)[l] = 1.0;
        }
        Ok(t)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bce" => Ok(LossKind::Bce),
            "ce" | "ce_softmax" => Ok(LossKind::CeSoftmax),
            "mse" => Ok(LossKind::Mse),
            other => Err(Error::Config(format!("unknown loss '{other}'"))),
        }
    }
}

/// Batch-mean loss and its gradient with respect to `output`.
pub fn loss(kind: LossKind, output: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if output.shape() != target.shape() || output.rank() != 2 {
        return Err(Error::dimension("loss", output.shape(), target.shape()));
    }
    let batch = output.rows() as f64;
    let mut grad = Tensor::zeros(output.shape());
    let mut total = 0.0;
    match kind {
        LossKind::Bce => {
            if output.row_len() != 1 {
                return Err(Error::Shape(format!("bce needs a scalar output, got {:?}", output.shape())));
            }
            for ((g, &p), &t) in grad.data_mut().iter_mut().zip(output.data()).zip(target.data()) {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Domain(format!("bce output {p} is outside (0, 1)")));
                }
                let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                total -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
                *g = (p - t) / (p * (1.0 - p)) / batch;
            }
        }
        LossKind::CeSoftmax => {
            for b in 0..output.rows() {
                let z = output.row(b);
                let t = target.row(b);
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                let t_sum: f64 = t.iter().sum();
                for ((g, &zi), &ti) in grad.row_mut(b).iter_mut().zip(z).zip(t) {
                    total -= ti * (zi - lse);
                    *g = ((zi - lse).exp() * t_sum - ti) / batch;
                }
            }
        }
        LossKind::Mse => {
            for ((g, &y), &t) in grad.data_mut().iter_mut().zip(output.data()).zip(target.data()) {
                total += (y - t) * (y - t);
                *g = 2.0 * (y - t) / batch;
            }
        }
    }
    Ok((total / batch, grad))
}
