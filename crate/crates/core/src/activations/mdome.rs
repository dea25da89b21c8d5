use super::simplex::{simplex_vertices, SimplexRefs};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Multi-class DOME: simplex reference directions plus the shared `μ`, `σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MdomeParams {
    pub refs: SimplexRefs,
    pub mu: f64,
    pub sigma: f64,
    pub learnable: bool,
}

impl MdomeParams {
    pub fn new(n: usize, mu: f64, sigma: f64) -> Result<Self> {
        super::check_shape_params(mu, sigma)?;
        Ok(MdomeParams {
            refs: simplex_vertices(n)?,
            mu,
            sigma,
            learnable: true,
        })
    }

    /// Training initialization: `μ = 1`, `σ = 5`.
    pub fn initial(n: usize) -> Result<Self> {
        Self::new(n, 1.0, 5.0)
    }

    pub fn frozen(self) -> Self {
        MdomeParams {
            learnable: false,
            ..self
        }
    }

    pub fn n(&self) -> usize {
        self.refs.n()
    }

    /// Input dimension, `n - 1`.
    pub fn dim(&self) -> usize {
        self.refs.dim()
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::dimension("mdome", &[len], &[self.dim()]));
        }
        Ok(())
    }
}

/// `κₗ = -‖(x̄ - μ·ēₗ)/σ‖²` for each class.
pub fn mdome_kappa(x: &Tensor, p: &MdomeParams) -> Result<Tensor> {
    p.check_input(x.len())?;
    let mut out = vec![0.0; p.n()];
    kappa_into(x.data(), p, &mut out);
    Tensor::new(vec![p.n()], out)
}

fn kappa_into(x: &[f64], p: &MdomeParams, out: &mut [f64]) {
    for (l, k) in out.iter_mut().enumerate() {
        let e = p.refs.vertex(l);
        *k = -x
            .iter()
            .zip(e)
            .map(|(&xi, &ei)| {
                let d = (xi - p.mu * ei) / p.sigma;
                d * d
            })
            .sum::<f64>();
    }
}

/// `DOMEⁿᵢ = ((n-1)/n)·(e^{κᵢ} - (1/(n-1))·Σ_{j≠i} e^{κⱼ} + 1/(n-1))`.
///
/// Outputs sum to one and each lies in `((2-n)/n, 1)`.
pub fn mdome_forward(x: &Tensor, p: &MdomeParams) -> Result<Tensor> {
    p.check_input(x.len())?;
    let mut out = vec![0.0; p.n()];
    mdome_forward_into(x.data(), p, &mut out);
    Tensor::new(vec![p.n()], out)
}

pub(crate) fn mdome_forward_into(x: &[f64], p: &MdomeParams, out: &mut [f64]) {
    let n = p.n();
    kappa_into(x, p, out);
    let e: Vec<f64> = out.iter().map(|k| k.exp()).collect();
    let nm1 = (n - 1) as f64;
    for i in 0..n {
        let others: f64 = e.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum();
        out[i] = (nm1 / n as f64) * (e[i] - others / nm1 + 1.0 / nm1);
    }
}

/// Exact derivatives of [`mdome_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct MdomeJacobian {
    /// `∂DOMEⁿᵢ/∂x_k`, shape `[n, n-1]`; every column sums to zero.
    pub x: Tensor,
    pub mu: Tensor,
    pub sigma: Tensor,
}

pub fn mdome_jacobian(x: &Tensor, p: &MdomeParams) -> Result<MdomeJacobian> {
    p.check_input(x.len())?;
    let (n, d) = (p.n(), p.dim());
    let parts = Partials::new(x.data(), p);
    // ∂yᵢ = ∂Eᵢ - (1/n)·Σⱼ ∂Eⱼ
    let mut jx = vec![0.0; n * d];
    let mean_dx: Vec<f64> = (0..d)
        .map(|k| (0..n).map(|j| parts.dx(j, k)).sum::<f64>() / n as f64)
        .collect();
    for i in 0..n {
        for k in 0..d {
            jx[i * d + k] = parts.dx(i, k) - mean_dx[k];
        }
    }
    let mean_mu = parts.dmu.iter().sum::<f64>() / n as f64;
    let mean_sigma = parts.dsigma.iter().sum::<f64>() / n as f64;
    Ok(MdomeJacobian {
        x: Tensor::new(vec![n, d], jx)?,
        mu: Tensor::new(vec![n], parts.dmu.iter().map(|v| v - mean_mu).collect())?,
        sigma: Tensor::new(vec![n], parts.dsigma.iter().map(|v| v - mean_sigma).collect())?,
    })
}

/// Per-class derivatives of `Eₗ = e^{κₗ}`.
struct Partials<'a> {
    x: &'a [f64],
    p: &'a MdomeParams,
    e: Vec<f64>,
    dmu: Vec<f64>,
    dsigma: Vec<f64>,
}

impl<'a> Partials<'a> {
    fn new(x: &'a [f64], p: &'a MdomeParams) -> Self {
        let n = p.n();
        let s2 = p.sigma * p.sigma;
        let mut kappa = vec![0.0; n];
        kappa_into(x, p, &mut kappa);
        let e: Vec<f64> = kappa.iter().map(|k| k.exp()).collect();
        let dmu = (0..n)
            .map(|l| {
                let r = p.refs.vertex(l);
                let proj: f64 = x.iter().zip(r).map(|(&xi, &ri)| (xi - p.mu * ri) * ri).sum();
                e[l] * 2.0 * proj / s2
            })
            .collect();
        let dsigma = (0..n).map(|l| e[l] * (-2.0 * kappa[l] / p.sigma)).collect();
        Partials { x, p, e, dmu, dsigma }
    }

    fn dx(&self, l: usize, k: usize) -> f64 {
        let s2 = self.p.sigma * self.p.sigma;
        self.e[l] * (-2.0 * (self.x[k] - self.p.mu * self.p.refs.vertex(l)[k]) / s2)
    }
}

/// Vector-Jacobian product: writes `Jₓᵀ·g` into `dx` and returns the
/// `(μ, σ)` components.
pub(crate) fn mdome_vjp(x: &[f64], p: &MdomeParams, g: &[f64], dx: &mut [f64]) -> (f64, f64) {
    let n = p.n();
    let mean_g = g.iter().sum::<f64>() / n as f64;
    let parts = Partials::new(x, p);
    dx.fill(0.0);
    let (mut dmu, mut dsigma) = (0.0, 0.0);
    for l in 0..n {
        let w = g[l] - mean_g;
        for (k, d) in dx.iter_mut().enumerate() {
            *d += w * parts.dx(l, k);
        }
        dmu += w * parts.dmu[l];
        dsigma += w * parts.dsigma[l];
    }
    (dmu, dsigma)
}

/// Shifts an MDOME output so its smallest entry is non-negative and
/// rescales it to sum to one. Entries that are already non-negative are
/// left as they are; the argmax never moves.
pub fn mdome_normalize(y: &Tensor) -> Result<Tensor> {
    let mut out = vec![0.0; y.len()];
    normalize_into(y.data(), &mut out);
    Tensor::new(vec![y.len()], out)
}

pub(crate) fn normalize_into(y: &[f64], out: &mut [f64]) {
    let shift = y.iter().fold(0.0f64, |m, &v| m.min(v.min(0.0)));
    for (o, &v) in out.iter_mut().zip(y) {
        *o = v - shift;
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|o| *o /= total);
}

/// Vector-Jacobian product of [`normalize_into`]. The shift follows the
/// first strictly negative minimum, if any.
pub(crate) fn normalize_vjp(y: &[f64], g: &[f64], dy: &mut [f64]) {
    let mut shift = 0.0;
    let mut argmin = None;
    for (i, &v) in y.iter().enumerate() {
        if v < shift {
            shift = v;
            argmin = Some(i);
        }
    }
    let total: f64 = y.iter().map(|v| v - shift).sum();
    let inner: f64 = y.iter().zip(g).map(|(v, gi)| (v - shift) / total * gi).sum();
    for (d, &gi) in dy.iter_mut().zip(g) {
        *d = (gi - inner) / total;
    }
    if let Some(k) = argmin {
        let s: f64 = dy.iter().sum();
        dy[k] -= s;
    }
}

/// Distance surrogate logits, identical to [`mdome_kappa`].
pub fn dome_logit1(x: &Tensor, p: &MdomeParams) -> Result<Tensor> {
    mdome_kappa(x, p)
}

/// Dot-product surrogate logits `x̄ · μēᵢ`.
pub fn dome_logit2(x: &Tensor, p: &MdomeParams) -> Result<Tensor> {
    p.check_input(x.len())?;
    let out = (0..p.n())
        .map(|i| {
            x.data()
                .iter()
                .zip(p.refs.vertex(i))
                .map(|(&xi, &ei)| xi * p.mu * ei)
                .sum()
        })
        .collect();
    Tensor::new(vec![p.n()], out)
}

pub(crate) fn logit1_forward_into(x: &[f64], p: &MdomeParams, out: &mut [f64]) {
    kappa_into(x, p, out);
}

pub(crate) fn logit1_vjp(x: &[f64], p: &MdomeParams, g: &[f64], dx: &mut [f64]) {
    let s2 = p.sigma * p.sigma;
    dx.fill(0.0);
    for (l, &gl) in g.iter().enumerate() {
        for (k, d) in dx.iter_mut().enumerate() {
            *d += gl * (-2.0 * (x[k] - p.mu * p.refs.vertex(l)[k]) / s2);
        }
    }
}

pub(crate) fn logit2_forward_into(x: &[f64], p: &MdomeParams, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = x.iter().zip(p.refs.vertex(i)).map(|(&xi, &ei)| xi * p.mu * ei).sum();
    }
}

pub(crate) fn logit2_vjp(_x: &[f64], p: &MdomeParams, g: &[f64], dx: &mut [f64]) {
    dx.fill(0.0);
    for (l, &gl) in g.iter().enumerate() {
        for (k, d) in dx.iter_mut().enumerate() {
            *d += gl * p.mu * p.refs.vertex(l)[k];
        }
    }
}
