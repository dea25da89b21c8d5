use crate::error::{Error, Result};

/// Parameters of penalized DOME: the DOME shape plus a multiplier `pi` on
/// the negative-side bump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdomeParams {
    pub mu: f64,
    pub sigma: f64,
    pub pi: f64,
    pub learnable: bool,
}

impl PdomeParams {
    pub fn new(mu: f64, sigma: f64, pi: f64) -> Result<Self> {
        super::check_shape_params(mu, sigma)?;
        if !(pi.is_finite() && pi >= 0.0) {
            return Err(Error::Argument(format!("pi must be non-negative, got {pi}")));
        }
        Ok(PdomeParams {
            mu,
            sigma,
            pi,
            learnable: true,
        })
    }

    pub fn frozen(self) -> Self {
        PdomeParams {
            learnable: false,
            ..self
        }
    }
}

impl Default for PdomeParams {
    fn default() -> Self {
        PdomeParams {
            mu: 1.0,
            sigma: 1.0,
            pi: 0.1,
            learnable: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdomeGrad {
    pub dx: f64,
    pub dmu: f64,
    pub dsigma: f64,
    pub dpi: f64,
}

/// `exp(-((x-μ)/σ)²) - π·exp(-((x+μ)/σ)²)`, valued in `(-π, 1)`.
pub fn pdome_forward(x: f64, p: &PdomeParams) -> f64 {
    let u = (x - p.mu) / p.sigma;
    let v = (x + p.mu) / p.sigma;
    (-u * u).exp() - p.pi * (-v * v).exp()
}

pub fn pdome_backward(x: f64, p: &PdomeParams) -> PdomeGrad {
    let s = p.sigma;
    let u = (x - p.mu) / s;
    let v = (x + p.mu) / s;
    let a = (-u * u).exp();
    let b = (-v * v).exp();
    PdomeGrad {
        dx: -2.0 * u / s * a + p.pi * 2.0 * v / s * b,
        dmu: 2.0 * u / s * a + p.pi * 2.0 * v / s * b,
        dsigma: 2.0 * u * u / s * a - p.pi * 2.0 * v * v / s * b,
        dpi: -b,
    }
}
