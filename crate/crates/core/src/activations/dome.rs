use crate::error::Result;

/// Learnable parameters of the scalar DOME activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomeParams {
    /// Location of the two mirrored modes.
    pub mu: f64,
    /// Breadth of each mode.
    pub sigma: f64,
    pub learnable: bool,
}

impl DomeParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        super::check_shape_params(mu, sigma)?;
        Ok(DomeParams {
            mu,
            sigma,
            learnable: true,
        })
    }

    pub fn frozen(self) -> Self {
        DomeParams {
            learnable: false,
            ..self
        }
    }
}

impl Default for DomeParams {
    fn default() -> Self {
        DomeParams {
            mu: 1.0,
            sigma: 1.0,
            learnable: true,
        }
    }
}

/// Partial derivatives of [`dome_forward`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomeGrad {
    pub dx: f64,
    pub dmu: f64,
    pub dsigma: f64,
}

/// `0.5·(1 + exp(-((x-μ)/σ)²) - exp(-((x+μ)/σ)²))`.
///
/// Both exponentials are at most one, so nothing overflows; for `|x|` far
/// from `±μ` they underflow to zero and the value settles at exactly 0.5.
pub fn dome_forward(x: f64, p: &DomeParams) -> f64 {
    let u = (x - p.mu) / p.sigma;
    let v = (x + p.mu) / p.sigma;
    0.5 * (1.0 + (-u * u).exp() - (-v * v).exp())
}

pub fn dome_backward(x: f64, p: &DomeParams) -> DomeGrad {
    let s = p.sigma;
    let u = (x - p.mu) / s;
    let v = (x + p.mu) / s;
    let a = (-u * u).exp();
    let b = (-v * v).exp();
    DomeGrad {
        dx: 0.5 * (-2.0 * u / s * a + 2.0 * v / s * b),
        dmu: 0.5 * (2.0 * u / s * a + 2.0 * v / s * b),
        dsigma: 0.5 * (2.0 * u * u / s * a - 2.0 * v * v / s * b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> DomeParams {
        DomeParams::default()
    }

    #[test]
    fn reference_values() {
        assert_eq!(dome_forward(0.0, &unit()), 0.5);
        assert!((dome_forward(1.0, &unit()) - 0.990_842_180_6).abs() < 1e-10);
        assert!((dome_forward(-1.0, &unit()) - 0.009_157_819_4).abs() < 1e-10);
    }

    #[test]
    fn derivative_reference_values() {
        let g = dome_backward(0.0, &unit());
        assert!((g.dx - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((g.dx - 0.735_758_882_3).abs() < 1e-10);
        // Only the mirrored bump contributes at x = μ: 0.5·2(x+μ)/σ²·e^{-4} = 2e^{-4}.
        let g = dome_backward(1.0, &unit());
        assert!((g.dx - 2.0 * (-4.0f64).exp()).abs() < 1e-15);
        assert!((g.dx - 0.036_631_277_8).abs() < 1e-10);
    }

    #[test]
    fn saturates_to_one_half_far_away() {
        for x in [-50.0, 50.0] {
            assert_eq!(dome_forward(x, &unit()), 0.5);
        }
    }

    #[test]
    fn rejects_non_positive_parameters() {
        assert!(DomeParams::new(0.0, 1.0).is_err());
        assert!(DomeParams::new(1.0, -1.0).is_err());
        assert!(DomeParams::new(1.0, f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn mirrored_values_sum_to_one(x in -20.0f64..20.0, mu in 0.01f64..5.0, sigma in 0.05f64..5.0) {
            let p = DomeParams::new(mu, sigma).unwrap();
            prop_assert!((dome_forward(x, &p) + dome_forward(-x, &p) - 1.0).abs() < 1e-12);
        }

        #[test]
        // Strictness is only observable while exp(-4μ²/σ²) stays above the
        // f64 resolution near 1, hence σ ≥ 0.4μ.
        fn strictly_inside_unit_interval(x in -20.0f64..20.0, mu in 0.01f64..5.0, ratio in 0.4f64..5.0) {
            let y = dome_forward(x, &DomeParams::new(mu, mu * ratio).unwrap());
            prop_assert!(y > 0.0 && y < 1.0);
        }
    }
}
