//! The DOME activation family.
//!
//! - [`dome_forward`]: bounded scalar activation in `(0, 1)` built from two
//!   mirrored Gaussian bumps at `±μ`, a replacement for the sigmoid output.
//! - [`pdome_forward`]: the unshifted two-term form with a penalty `π` on the
//!   negative bump, range `(-π, 1)`, intended for hidden layers.
//! - [`mdome_forward`]: the multi-class form, scoring a point in `ℝⁿ⁻¹`
//!   against `n` reference points `μ·ēₗ` placed on a regular simplex.
//!
//! Every forward function has an exact analytic derivative with respect to
//! its input and its learnable parameters.

mod dome;
mod mdome;
mod pdome;
mod simplex;

pub use dome::{dome_backward, dome_forward, DomeGrad, DomeParams};
pub use mdome::{
    dome_logit1, dome_logit2, mdome_forward, mdome_jacobian, mdome_kappa, mdome_normalize,
    MdomeJacobian, MdomeParams,
};
pub(crate) use mdome::{
    logit1_forward_into, logit1_vjp, logit2_forward_into, logit2_vjp, mdome_forward_into, mdome_vjp,
    normalize_into, normalize_vjp,
};
pub use pdome::{pdome_backward, pdome_forward, PdomeGrad, PdomeParams};
pub use simplex::{simplex_vertices, SimplexRefs};

/// Lower bound applied to `μ` and `σ` after every optimizer step.
pub const MIN_SHAPE_PARAM: f64 = 1e-3;

pub(crate) fn check_shape_params(mu: f64, sigma: f64) -> crate::Result<()> {
    if !(mu.is_finite() && mu > 0.0 && sigma.is_finite() && sigma > 0.0) {
        return Err(crate::Error::Argument(format!(
            "mu and sigma must be positive and finite, got mu={mu}, sigma={sigma}"
        )));
    }
    Ok(())
}
