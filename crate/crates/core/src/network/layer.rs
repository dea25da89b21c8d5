use rand::Rng;

use crate::activations::{
    dome_backward, dome_forward, mdome_forward_into, mdome_vjp, pdome_backward, pdome_forward,
    DomeParams, MdomeParams, PdomeParams,
};
use crate::error::{Error, Result};
use crate::tensor::{col2im_add, im2col, kernels, ConvGeometry, Tensor};

/// Fully connected layer. `weight` is stored `[inputs × outputs]`, so column
/// `i` is the weight vector of output unit `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Option<Tensor>) -> Result<Self> {
        if weight.rank() != 2 {
            return Err(Error::Shape(format!("dense weight must be 2-D, got {:?}", weight.shape())));
        }
        if let Some(b) = &bias {
            if b.shape() != [weight.shape()[1]] {
                return Err(Error::dimension("dense bias", b.shape(), weight.shape()));
            }
        }
        Ok(Dense { weight, bias })
    }

    /// Uniform `±1/√fan_in` initialization.
    pub fn init(inputs: usize, outputs: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = uniform(&[inputs, outputs], bound, rng);
        let bias = bias.then(|| uniform(&[outputs], bound, rng));
        Dense { weight, bias }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// 2-D convolution over `[batch × channels × h × w]` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `[out_channels × in_channels × k × k]`
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(weight: Tensor, bias: Option<Tensor>, stride: usize, padding: usize) -> Result<Self> {
        if weight.rank() != 4 {
            return Err(Error::Shape(format!("conv weight must be 4-D, got {:?}", weight.shape())));
        }
        if let Some(b) = &bias {
            if b.shape() != [weight.shape()[0]] {
                return Err(Error::dimension("conv bias", b.shape(), weight.shape()));
            }
        }
        if stride == 0 {
            return Err(Error::Argument("conv stride must be positive".into()));
        }
        Ok(Conv2d {
            weight,
            bias,
            stride,
            padding,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn init(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / ((in_channels * kernel * kernel) as f64).sqrt();
        Conv2d {
            weight: uniform(&[out_channels, in_channels, kernel, kernel], bound, rng),
            bias: bias.then(|| uniform(&[out_channels], bound, rng)),
            stride,
            padding,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape()[2], self.weight.shape()[3])
    }

    fn geometry(&self, input: &[usize]) -> Result<ConvGeometry> {
        if input.len() != 3 || input[0] != self.in_channels() {
            return Err(Error::dimension("conv2d", input, self.weight.shape()));
        }
        ConvGeometry::new((input[0], input[1], input[2]), self.kernel(), self.stride, self.padding)
    }
}

fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    /// Row-wise softmax over the feature axis.
    Softmax,
    Dome(DomeParams),
    Pdome(PdomeParams),
    /// Maps rows of length `n-1` to `n` class scores.
    Mdome(MdomeParams),
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Softmax => "softmax",
            Activation::Dome(_) => "dome",
            Activation::Pdome(_) => "pdome",
            Activation::Mdome(_) => "mdome",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    /// Non-overlapping max pooling with a square window of the given size.
    MaxPool2d { size: usize },
    Flatten,
    Activation(Activation),
}

/// Role of a parameter block; decides weight decay and clamping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    /// `μ` of a DOME-family activation.
    Mu,
    /// `σ` of a DOME-family activation.
    Sigma,
    /// `π` of penalized DOME.
    Penalty,
}

impl ParamKind {
    pub fn is_activation(self) -> bool {
        matches!(self, ParamKind::Mu | ParamKind::Sigma | ParamKind::Penalty)
    }
}

/// A mutable view of one parameter block.
pub struct ParamMut<'a> {
    pub values: &'a mut [f64],
    pub kind: ParamKind,
}

/// Per-layer state a backward pass needs beyond the layer input.
#[derive(Debug, Clone)]
pub(crate) enum Aux {
    None,
    /// im2col matrices, one per example.
    Cols(Vec<f64>),
    /// Flat input index of each pooled maximum.
    Argmax(Vec<usize>),
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2d { .. } => "maxpool",
            Layer::Flatten => "flatten",
            Layer::Activation(a) => a.name(),
        }
    }

    /// Per-example output shape for a per-example input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(d) => {
                if input != [d.inputs()] {
                    return Err(Error::dimension("dense", input, d.weight.shape()));
                }
                Ok(vec![d.outputs()])
            }
            Layer::Conv2d(c) => {
                let g = c.geometry(input)?;
                Ok(vec![c.out_channels(), g.out_h, g.out_w])
            }
            Layer::MaxPool2d { size } => {
                if input.len() != 3 || *size == 0 || input[1] % size != 0 || input[2] % size != 0 {
                    return Err(Error::Shape(format!(
                        "maxpool window {size} does not tile input {input:?}"
                    )));
                }
                Ok(vec![input[0], input[1] / size, input[2] / size])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Activation(Activation::Softmax) => {
                if input.len() != 1 {
                    return Err(Error::Shape(format!("softmax needs flat rows, got {input:?}")));
                }
                Ok(input.to_vec())
            }
            Layer::Activation(Activation::Mdome(p)) => {
                if input != [p.dim()] {
                    return Err(Error::dimension("mdome", input, &[p.dim()]));
                }
                Ok(vec![p.n()])
            }
            Layer::Activation(_) => Ok(input.to_vec()),
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        match self {
            Layer::Dense(Dense { weight, bias }) | Layer::Conv2d(Conv2d { weight, bias, .. }) => {
                out.push(ParamMut {
                    values: weight.data_mut(),
                    kind: ParamKind::Weight,
                });
                if let Some(b) = bias {
                    out.push(ParamMut {
                        values: b.data_mut(),
                        kind: ParamKind::Bias,
                    });
                }
            }
            Layer::Activation(Activation::Dome(p)) if p.learnable => {
                out.push(ParamMut {
                    values: std::slice::from_mut(&mut p.mu),
                    kind: ParamKind::Mu,
                });
                out.push(ParamMut {
                    values: std::slice::from_mut(&mut p.sigma),
                    kind: ParamKind::Sigma,
                });
            }
            Layer::Activation(Activation::Pdome(p)) if p.learnable => {
                out.push(ParamMut {
                    values: std::slice::from_mut(&mut p.mu),
                    kind: ParamKind::Mu,
                });
                out.push(ParamMut {
                    values: std::slice::from_mut(&mut p.sigma),
                    kind: ParamKind::Sigma,
                });
                out.push(ParamMut {
                    values: std::slice::from_mut(&mut p.pi),
                    kind: ParamKind::Penalty,
                });
            }
            Layer::Activation(Activation::Mdome(p)) if p.learnable => {
                out.push(ParamMut {
                    values: std::slice::from_mut(&mut p.mu),
                    kind: ParamKind::Mu,
                });
                out.push(ParamMut {
                    values: std::slice::from_mut(&mut p.sigma),
                    kind: ParamKind::Sigma,
                });
            }
            _ => {}
        }
        out
    }

    /// Sizes and kinds of the trainable blocks, in [`Layer::params_mut`] order.
    pub(crate) fn param_layout(&self) -> Vec<(ParamKind, usize)> {
        match self {
            Layer::Dense(Dense { weight, bias }) | Layer::Conv2d(Conv2d { weight, bias, .. }) => {
                let mut v = vec![(ParamKind::Weight, weight.len())];
                if let Some(b) = bias {
                    v.push((ParamKind::Bias, b.len()));
                }
                v
            }
            Layer::Activation(Activation::Dome(p)) if p.learnable => {
                vec![(ParamKind::Mu, 1), (ParamKind::Sigma, 1)]
            }
            Layer::Activation(Activation::Pdome(p)) if p.learnable => {
                vec![(ParamKind::Mu, 1), (ParamKind::Sigma, 1), (ParamKind::Penalty, 1)]
            }
            Layer::Activation(Activation::Mdome(p)) if p.learnable => {
                vec![(ParamKind::Mu, 1), (ParamKind::Sigma, 1)]
            }
            _ => Vec::new(),
        }
    }

    /// Batched forward pass. `input` is `[batch, ...]`.
    pub(crate) fn forward(&self, input: &Tensor) -> Result<(Tensor, Aux)> {
        let batch = input.rows();
        let out_shape = self.output_shape(&input.shape()[1..])?;
        let mut shape = vec![batch];
        shape.extend_from_slice(&out_shape);
        match self {
            Layer::Dense(d) => {
                let (m, k, n) = (batch, d.inputs(), d.outputs());
                let mut out = vec![0.0; m * n];
                if let Some(b) = &d.bias {
                    for row in out.chunks_mut(n) {
                        row.copy_from_slice(b.data());
                    }
                }
                kernels::gemm(m, k, n, input.data(), d.weight.data(), &mut out, true);
                Ok((Tensor::new(shape, out)?, Aux::None))
            }
            Layer::Conv2d(c) => {
                let g = c.geometry(&input.shape()[1..])?;
                let (patch, pixels, co) = (g.patch_len(), g.out_len(), c.out_channels());
                let in_len = input.row_len();
                let mut cols = vec![0.0; batch * patch * pixels];
                let mut out = vec![0.0; batch * co * pixels];
                for b in 0..batch {
                    let col = &mut cols[b * patch * pixels..(b + 1) * patch * pixels];
                    im2col(&input.data()[b * in_len..(b + 1) * in_len], &g, col);
                    let y = &mut out[b * co * pixels..(b + 1) * co * pixels];
                    if let Some(bias) = &c.bias {
                        for (o, plane) in y.chunks_mut(pixels).enumerate() {
                            plane.fill(bias.data()[o]);
                        }
                    }
                    kernels::gemm(co, patch, pixels, c.weight.data(), col, y, true);
                }
                Ok((Tensor::new(shape, out)?, Aux::Cols(cols)))
            }
            Layer::MaxPool2d { size } => {
                let (ch, h, w) = (input.shape()[1], input.shape()[2], input.shape()[3]);
                let (oh, ow) = (h / size, w / size);
                let mut out = vec![0.0; batch * ch * oh * ow];
                let mut arg = vec![0usize; out.len()];
                let data = input.data();
                for bc in 0..batch * ch {
                    let base = bc * h * w;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = base + oy * size * w + ox * size;
                            for dy in 0..*size {
                                for dx in 0..*size {
                                    let idx = base + (oy * size + dy) * w + ox * size + dx;
                                    if data[idx] > data[best] {
                                        best = idx;
                                    }
                                }
                            }
                            let o = (bc * oh + oy) * ow + ox;
                            out[o] = data[best];
                            arg[o] = best;
                        }
                    }
                }
                Ok((Tensor::new(shape, out)?, Aux::Argmax(arg)))
            }
            Layer::Flatten => Ok((input.clone().reshape(&shape)?, Aux::None)),
            Layer::Activation(a) => Ok((activation_forward(a, input, shape)?, Aux::None)),
        }
    }

    /// Batched backward pass. Accumulates parameter gradients into `grads`
    /// (when given, in [`Layer::param_layout`] order) and returns the
    /// gradient with respect to the layer input.
    pub(crate) fn backward(
        &self,
        input: &Tensor,
        output: &Tensor,
        aux: &Aux,
        grad_out: &Tensor,
        grads: Option<&mut [Vec<f64>]>,
    ) -> Result<Tensor> {
        let batch = input.rows();
        match self {
            Layer::Dense(d) => {
                let (k, n) = (d.inputs(), d.outputs());
                if let Some(grads) = grads {
                    kernels::gemm_tn_acc(k, batch, n, input.data(), grad_out.data(), &mut grads[0]);
                    if d.bias.is_some() {
                        for row in grad_out.data().chunks(n) {
                            kernels::axpy(1.0, row, &mut grads[1]);
                        }
                    }
                }
                let mut dx = vec![0.0; batch * k];
                let w = d.weight.data();
                for b in 0..batch {
                    let g = &grad_out.data()[b * n..(b + 1) * n];
                    for i in 0..k {
                        dx[b * k + i] = kernels::dot(g, &w[i * n..(i + 1) * n]);
                    }
                }
                Tensor::new(input.shape().to_vec(), dx)
            }
            Layer::Conv2d(c) => {
                let Aux::Cols(cols) = aux else {
                    return Err(Error::Argument("conv backward without im2col cache".into()));
                };
                let g = c.geometry(&input.shape()[1..])?;
                let (patch, pixels, co) = (g.patch_len(), g.out_len(), c.out_channels());
                let in_len = input.row_len();
                let mut dx = vec![0.0; input.len()];
                let mut dcols = vec![0.0; patch * pixels];
                let mut cols_t = vec![0.0; pixels * patch];
                let mut grads = grads;
                for b in 0..batch {
                    let gy = &grad_out.data()[b * co * pixels..(b + 1) * co * pixels];
                    let col = &cols[b * patch * pixels..(b + 1) * patch * pixels];
                    if let Some(grads) = grads.as_deref_mut() {
                        kernels::transpose(patch, pixels, col, &mut cols_t);
                        kernels::gemm(co, pixels, patch, gy, &cols_t, &mut grads[0], true);
                        if c.bias.is_some() {
                            for (o, plane) in gy.chunks(pixels).enumerate() {
                                grads[1][o] += plane.iter().sum::<f64>();
                            }
                        }
                    }
                    dcols.fill(0.0);
                    kernels::gemm_tn_acc(patch, co, pixels, c.weight.data(), gy, &mut dcols);
                    col2im_add(&dcols, &g, &mut dx[b * in_len..(b + 1) * in_len]);
                }
                Tensor::new(input.shape().to_vec(), dx)
            }
            Layer::MaxPool2d { .. } => {
                let Aux::Argmax(arg) = aux else {
                    return Err(Error::Argument("maxpool backward without argmax cache".into()));
                };
                let mut dx = vec![0.0; input.len()];
                for (&src, &g) in arg.iter().zip(grad_out.data()) {
                    dx[src] += g;
                }
                Tensor::new(input.shape().to_vec(), dx)
            }
            Layer::Flatten => grad_out.clone().reshape(input.shape()),
            Layer::Activation(a) => activation_backward(a, input, output, grad_out, grads),
        }
    }
}

fn activation_forward(a: &Activation, input: &Tensor, shape: Vec<usize>) -> Result<Tensor> {
    match a {
        Activation::Relu => Ok(input.map(|x| x.max(0.0))),
        Activation::Sigmoid => Ok(input.map(sigmoid)),
        Activation::Tanh => Ok(input.map(f64::tanh)),
        Activation::Dome(p) => Ok(input.map(|x| dome_forward(x, p))),
        Activation::Pdome(p) => Ok(input.map(|x| pdome_forward(x, p))),
        Activation::Softmax => {
            let mut out = input.clone();
            for b in 0..input.rows() {
                softmax_into(input.row(b), out.row_mut(b));
            }
            Ok(out)
        }
        Activation::Mdome(p) => {
            let n = p.n();
            let mut out = vec![0.0; input.rows() * n];
            for b in 0..input.rows() {
                mdome_forward_into(input.row(b), p, &mut out[b * n..(b + 1) * n]);
            }
            Tensor::new(shape, out)
        }
    }
}

fn activation_backward(
    a: &Activation,
    input: &Tensor,
    output: &Tensor,
    grad_out: &Tensor,
    grads: Option<&mut [Vec<f64>]>,
) -> Result<Tensor> {
    let g = grad_out.data();
    let zip_map = |t: &Tensor, f: &dyn Fn(f64, f64) -> f64| -> Result<Tensor> {
        let data = t.data().iter().zip(g).map(|(&v, &gv)| f(v, gv)).collect();
        Tensor::new(input.shape().to_vec(), data)
    };
    match a {
        Activation::Relu => zip_map(input, &|x, gv| if x > 0.0 { gv } else { 0.0 }),
        Activation::Sigmoid => zip_map(output, &|y, gv| gv * y * (1.0 - y)),
        Activation::Tanh => zip_map(output, &|y, gv| gv * (1.0 - y * y)),
        Activation::Softmax => {
            let mut dx = grad_out.clone();
            for b in 0..input.rows() {
                let y = output.row(b);
                let gy = grad_out.row(b);
                let inner = kernels::dot(y, gy);
                for ((d, &yi), &gi) in dx.row_mut(b).iter_mut().zip(y).zip(gy) {
                    *d = yi * (gi - inner);
                }
            }
            Ok(dx)
        }
        Activation::Dome(p) => {
            let mut dx = vec![0.0; input.len()];
            let (mut dmu, mut dsigma) = (0.0, 0.0);
            for ((d, &x), &gv) in dx.iter_mut().zip(input.data()).zip(g) {
                let pg = dome_backward(x, p);
                *d = gv * pg.dx;
                dmu += gv * pg.dmu;
                dsigma += gv * pg.dsigma;
            }
            if let (Some(grads), true) = (grads, p.learnable) {
                grads[0][0] += dmu;
                grads[1][0] += dsigma;
            }
            Tensor::new(input.shape().to_vec(), dx)
        }
        Activation::Pdome(p) => {
            let mut dx = vec![0.0; input.len()];
            let (mut dmu, mut dsigma, mut dpi) = (0.0, 0.0, 0.0);
            for ((d, &x), &gv) in dx.iter_mut().zip(input.data()).zip(g) {
                let pg = pdome_backward(x, p);
                *d = gv * pg.dx;
                dmu += gv * pg.dmu;
                dsigma += gv * pg.dsigma;
                dpi += gv * pg.dpi;
            }
            if let (Some(grads), true) = (grads, p.learnable) {
                grads[0][0] += dmu;
                grads[1][0] += dsigma;
                grads[2][0] += dpi;
            }
            Tensor::new(input.shape().to_vec(), dx)
        }
        Activation::Mdome(p) => {
            let (n, d) = (p.n(), p.dim());
            let mut dx = vec![0.0; input.len()];
            let (mut dmu, mut dsigma) = (0.0, 0.0);
            for b in 0..input.rows() {
                let (m, s) = mdome_vjp(
                    input.row(b),
                    p,
                    &g[b * n..(b + 1) * n],
                    &mut dx[b * d..(b + 1) * d],
                );
                dmu += m;
                dsigma += s;
            }
            if let (Some(grads), true) = (grads, p.learnable) {
                grads[0][0] += dmu;
                grads[1][0] += dsigma;
            }
            Tensor::new(input.shape().to_vec(), dx)
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}
