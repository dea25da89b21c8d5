use crate::activations::MIN_SHAPE_PARAM;
use crate::error::{Error, Result};
use crate::network::{ParamKind, ParamMut};

/// SGD with momentum, optional Nesterov lookahead and L2 weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64, nesterov: bool, weight_decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight decay must be non-negative, got {weight_decay}")));
        }
        Ok(Sgd {
            momentum,
            nesterov,
            weight_decay,
            velocity: Vec::new(),
        })
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// One update of every block in `params` with learning rate `lr`.
    ///
    /// Weight decay applies to weights and biases only; afterwards `μ`, `σ`
    /// are clamped to at least [`MIN_SHAPE_PARAM`] and `π` to at least 0.
    pub fn step(&mut self, params: Vec<ParamMut<'_>>, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if params.len() != grads.len()
            || params.iter().zip(grads).any(|(p, g)| p.values.len() != g.len())
        {
            return Err(Error::Argument(format!(
                "gradients {:?} do not align with parameters {:?}",
                grads.iter().map(Vec::len).collect::<Vec<_>>(),
                params.iter().map(|p| p.values.len()).collect::<Vec<_>>()
            )));
        }
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        } else if self.velocity.iter().map(Vec::len).ne(grads.iter().map(Vec::len)) {
            return Err(Error::Argument("parameter layout changed between steps".into()));
        }
        let m = self.momentum;
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            let wd = if p.kind.is_activation() { 0.0 } else { self.weight_decay };
            for ((x, &gi), vi) in p.values.iter_mut().zip(g).zip(v.iter_mut()) {
                let d = gi + wd * *x;
                *vi = m * *vi + d;
                *x -= lr * if self.nesterov { m * *vi + d } else { *vi };
            }
            match p.kind {
                ParamKind::Mu | ParamKind::Sigma => {
                    p.values.iter_mut().for_each(|x| *x = x.max(MIN_SHAPE_PARAM))
                }
                ParamKind::Penalty => p.values.iter_mut().for_each(|x| *x = x.max(0.0)),
                ParamKind::Weight | ParamKind::Bias => {}
            }
        }
        Ok(())
    }
}

/// One triangle over the run: `0 → lr_max` across the first half,
/// `lr_max → 0` across the second.
pub fn cyclic_lr(step: usize, total_steps: usize, lr_max: f64) -> f64 {
    if total_steps == 0 {
        return 0.0;
    }
    let t = step.min(total_steps) as f64 / total_steps as f64;
    lr_max * (1.0 - (2.0 * t - 1.0).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step_once(opt: &mut Sgd, p: &mut [f64], g: &[f64], lr: f64, kind: ParamKind) {
        opt.step(vec![ParamMut { values: p, kind }], &[g.to_vec()], lr).unwrap();
    }

    #[test]
    fn vanilla_step() {
        let mut opt = Sgd::new(0.0, false, 0.0).unwrap();
        let mut p = [3.0];
        step_once(&mut opt, &mut p, &[1.0], 1.0, ParamKind::Weight);
        assert_eq!(p, [2.0]);
    }

    #[test]
    fn momentum_accumulates() {
        let mut opt = Sgd::new(0.9, false, 0.0).unwrap();
        let mut p = [0.0];
        step_once(&mut opt, &mut p, &[1.0], 1.0, ParamKind::Weight);
        assert_eq!(p, [-1.0]);
        step_once(&mut opt, &mut p, &[1.0], 1.0, ParamKind::Weight);
        assert!((p[0] - -2.9).abs() < 1e-15);
    }

    #[test]
    fn nesterov_looks_ahead() {
        let mut opt = Sgd::new(0.9, true, 0.0).unwrap();
        let mut p = [0.0];
        step_once(&mut opt, &mut p, &[1.0], 1.0, ParamKind::Weight);
        assert!((p[0] - -1.9).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_alone_is_geometric() {
        let mut opt = Sgd::new(0.0, false, 0.1).unwrap();
        let mut p = [1.0];
        for k in 1..=5 {
            step_once(&mut opt, &mut p, &[0.0], 0.5, ParamKind::Weight);
            assert!((p[0] - 0.95f64.powi(k)).abs() < 1e-15);
        }
    }

    #[test]
    fn activation_parameters_skip_decay_and_are_clamped() {
        let mut opt = Sgd::new(0.0, false, 0.5).unwrap();
        let mut mu = [1.0];
        step_once(&mut opt, &mut mu, &[0.0], 1.0, ParamKind::Mu);
        assert_eq!(mu, [1.0]);
        let mut opt = Sgd::new(0.0, false, 0.0).unwrap();
        let mut sigma = [0.5];
        step_once(&mut opt, &mut sigma, &[10.0], 1.0, ParamKind::Sigma);
        assert_eq!(sigma, [MIN_SHAPE_PARAM]);
        let mut opt = Sgd::new(0.0, false, 0.0).unwrap();
        let mut pi = [0.1];
        step_once(&mut opt, &mut pi, &[1.0], 1.0, ParamKind::Penalty);
        assert_eq!(pi, [0.0]);
    }

    #[test]
    fn misaligned_gradients_are_rejected() {
        let mut opt = Sgd::new(0.0, false, 0.0).unwrap();
        let mut p = [0.0, 0.0];
        let err = opt.step(vec![ParamMut { values: &mut p, kind: ParamKind::Weight }], &[vec![1.0]], 1.0);
        assert!(err.is_err());
        assert!(opt.step(Vec::new(), &[vec![1.0]], 1.0).is_err());
        assert!(Sgd::new(1.0, false, 0.0).is_err());
        assert!(Sgd::new(0.5, false, -1.0).is_err());
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(cyclic_lr(0, 100, 0.2), 0.0);
        assert_eq!(cyclic_lr(50, 100, 0.2), 0.2);
        assert!((cyclic_lr(75, 100, 0.2) - 0.1).abs() < 1e-15);
        assert_eq!(cyclic_lr(100, 100, 0.2), 0.0);
    }

    proptest! {
        #[test]
        fn plain_descent_without_momentum_or_decay(
            p in prop::collection::vec(-10.0f64..10.0, 1..8),
            seed in any::<u64>(),
            lr in 0.0f64..2.0,
        ) {
            let g: Vec<f64> = p.iter().enumerate().map(|(i, x)| (x * 1.7 + seed as f64 * 1e-19 + i as f64).sin()).collect();
            let mut q = p.clone();
            let mut opt = Sgd::new(0.0, false, 0.0).unwrap();
            step_once(&mut opt, &mut q, &g, lr, ParamKind::Weight);
            for ((a, b), gi) in q.iter().zip(&p).zip(&g) {
                prop_assert_eq!(*a, b - lr * gi);
            }
        }

        #[test]
        fn schedule_is_a_triangle(total in 2usize..10_000, lr in 0.001f64..1.0) {
            let peak = cyclic_lr(total / 2, total, lr);
            for s in [0, total / 4, total / 3, total - 1, total] {
                let v = cyclic_lr(s, total, lr);
                prop_assert!((0.0..=lr).contains(&v));
                prop_assert!(v <= peak + 1e-15);
            }
        }
    }
}
