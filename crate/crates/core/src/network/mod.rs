//! Layer graphs with exact reverse-mode gradients.
//!
//! A [`Network`] is an ordered list of [`Layer`]s over a fixed per-example
//! input shape. [`Network::forward`] records every intermediate activation in
//! a [`ForwardPass`]; [`Network::backward`] consumes it and returns gradients
//! for every trainable parameter, including DOME-family `μ`, `σ` and `π`.
//! One layer output is marked as the embedding, the representation the
//! classifier head operates on.

mod arch;
mod checkpoint;
mod layer;
mod loss;

pub use arch::{build, Architecture, Head, Hidden, NetworkSpec};
pub use checkpoint::{load, save, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layer::{Activation, Conv2d, Dense, Layer, ParamKind, ParamMut};
pub use loss::{loss, LossKind};

pub(crate) use layer::softmax_into;

use layer::Aux;

use crate::error::{Error, Result};
use crate::tensor::{argmax, kernels, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    embedding_index: usize,
    loss: LossKind,
    version: u64,
}

/// Intermediates of one forward pass.
///
/// `activations[0]` is the input batch and `activations[i + 1]` the output of
/// layer `i`.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    activations: Vec<Tensor>,
    aux: Vec<Aux>,
    embedding_index: usize,
    version: u64,
}

impl ForwardPass {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("input is always recorded")
    }

    pub fn embedding(&self) -> &Tensor {
        &self.activations[self.embedding_index + 1]
    }

    pub fn input(&self) -> &Tensor {
        &self.activations[0]
    }

    /// Input of layer `i`, or the network output for `i == layers.len()`.
    pub fn activation(&self, i: usize) -> &Tensor {
        &self.activations[i]
    }

    pub fn into_output(mut self) -> Tensor {
        self.activations.pop().expect("input is always recorded")
    }
}

/// Gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// One block per trainable parameter, in [`Network::params_mut`] order.
    /// Empty when parameter gradients were not requested.
    pub params: Vec<Vec<f64>>,
    pub input: Tensor,
}

/// The factors of a linear logit `z = ‖x‖·‖w‖·cos θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitFactors {
    pub norm_x: f64,
    pub norm_w: f64,
    pub cos_theta: f64,
    pub z: f64,
}

impl Network {
    pub fn new(
        input_shape: Vec<usize>,
        layers: Vec<Layer>,
        embedding_index: usize,
        loss: LossKind,
    ) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Shape(format!("invalid input shape {input_shape:?}")));
        }
        if layers.is_empty() || embedding_index + 1 >= layers.len() {
            return Err(Error::Argument(format!(
                "embedding index {embedding_index} must precede the output layer of {} layers",
                layers.len()
            )));
        }
        let mut shape = input_shape.clone();
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
        }
        if shape.len() != 1 {
            return Err(Error::Shape(format!("network output must be flat, got {shape:?}")));
        }
        if loss == LossKind::Bce && shape[0] != 1 {
            return Err(Error::Config(format!("bce needs a scalar output, got width {}", shape[0])));
        }
        Ok(Network {
            input_shape,
            layers,
            embedding_index,
            loss,
            version: 0,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn embedding_index(&self) -> usize {
        self.embedding_index
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    /// Parameter version, bumped by every [`Network::params_mut`] call.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn output_width(&self) -> usize {
        self.shape_after(self.layers.len())[0]
    }

    pub fn embedding_dim(&self) -> usize {
        self.shape_after(self.embedding_index + 1).iter().product()
    }

    /// Per-example shape of `activations[i]`.
    pub fn shape_after(&self, i: usize) -> Vec<usize> {
        let mut shape = self.input_shape.clone();
        for layer in &self.layers[..i] {
            shape = layer.output_shape(&shape).expect("validated at construction");
        }
        shape
    }

    /// Mutable views of every trainable block. Invalidates earlier
    /// [`ForwardPass`]es.
    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        self.version += 1;
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    /// Kind and length of every trainable block, in [`Network::params_mut`] order.
    pub fn param_layout(&self) -> Vec<(ParamKind, usize)> {
        self.layers.iter().flat_map(Layer::param_layout).collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_layout().iter().map(|(_, n)| n).sum()
    }

    /// Index of the final MDOME layer, if the head is MDOME.
    pub fn mdome_head(&self) -> Option<usize> {
        match self.layers.last() {
            Some(Layer::Activation(Activation::Mdome(_))) => Some(self.layers.len() - 1),
            _ => None,
        }
    }

    fn check_input(&self, batch: &Tensor) -> Result<()> {
        if batch.rank() < 2 || batch.shape()[1..] != self.input_shape[..] {
            let mut expected = vec![batch.shape().first().copied().unwrap_or(0)];
            expected.extend_from_slice(&self.input_shape);
            return Err(Error::dimension("forward", batch.shape(), &expected));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &Tensor) -> Result<ForwardPass> {
        self.check_input(batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.layers.len());
        activations.push(batch.clone());
        for layer in &self.layers {
            let (out, a) = layer.forward(activations.last().expect("non-empty"))?;
            activations.push(out);
            aux.push(a);
        }
        Ok(ForwardPass {
            activations,
            aux,
            embedding_index: self.embedding_index,
            version: self.version,
        })
    }

    /// Forward pass keeping only the output.
    pub fn output(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_input(batch)?;
        let mut current = batch.clone();
        for layer in &self.layers {
            current = layer.forward(&current)?.0;
        }
        Ok(current)
    }

    pub fn embed(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_input(batch)?;
        let mut current = batch.clone();
        for layer in &self.layers[..=self.embedding_index] {
            current = layer.forward(&current)?.0;
        }
        let rows = current.rows();
        let width = current.row_len();
        current.reshape(&[rows, width])
    }

    /// Gradients of all parameters and of the input, given the gradient of
    /// the loss with respect to the network output.
    pub fn backward(&self, pass: &ForwardPass, loss_grad: &Tensor) -> Result<Gradients> {
        self.backward_from(pass, self.layers.len(), loss_grad, true)
    }

    /// Backpropagates `grad`, the gradient with respect to `activations[from]`,
    /// down to the input.
    pub fn backward_from(
        &self,
        pass: &ForwardPass,
        from: usize,
        grad: &Tensor,
        with_params: bool,
    ) -> Result<Gradients> {
        if pass.version != self.version {
            return Err(Error::StaleCache {
                cache: pass.version,
                network: self.version,
            });
        }
        if pass.activations.len() != self.layers.len() + 1 || from > self.layers.len() {
            return Err(Error::Argument("forward pass does not match this network".into()));
        }
        if grad.shape() != pass.activations[from].shape() {
            return Err(Error::dimension("backward", grad.shape(), pass.activations[from].shape()));
        }
        let layouts: Vec<Vec<(ParamKind, usize)>> =
            self.layers.iter().map(Layer::param_layout).collect();
        let mut params: Vec<Vec<f64>> = if with_params {
            layouts.iter().flatten().map(|&(_, n)| vec![0.0; n]).collect()
        } else {
            Vec::new()
        };
        let mut offsets = Vec::with_capacity(layouts.len());
        let mut acc = 0;
        for l in &layouts {
            offsets.push(acc);
            acc += l.len();
        }
        let mut g = grad.clone();
        for i in (0..from).rev() {
            let blocks = if with_params {
                Some(&mut params[offsets[i]..offsets[i] + layouts[i].len()])
            } else {
                None
            };
            g = self.layers[i].backward(
                &pass.activations[i],
                &pass.activations[i + 1],
                &pass.aux[i],
                &g,
                blocks,
            )?;
        }
        Ok(Gradients { params, input: g })
    }

    /// Loss of the training objective and its full gradient.
    pub fn loss_and_gradients(&self, batch: &Tensor, targets: &Tensor) -> Result<(f64, Tensor, Gradients)> {
        let pass = self.forward(batch)?;
        let (value, grad) = loss(self.loss, pass.output(), targets)?;
        let grads = self.backward(&pass, &grad)?;
        Ok((value, pass.into_output(), grads))
    }

    /// Training loss, network output and the gradient of the loss with
    /// respect to the input only.
    pub fn loss_input_gradient(&self, batch: &Tensor, targets: &Tensor) -> Result<(f64, Tensor, Tensor)> {
        let pass = self.forward(batch)?;
        let (value, grad) = loss(self.loss, pass.output(), targets)?;
        let input = self.backward_from(&pass, self.layers.len(), &grad, false)?.input;
        Ok((value, pass.into_output(), input))
    }

    /// Class predictions for a batch.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<usize>> {
        Ok(predict_from_output(&self.output(batch)?))
    }
}

/// Class indices from network outputs: `≥ 0.5` means class 1 for scalar
/// outputs, otherwise argmax with ties to the lowest index.
pub fn predict_from_output(output: &Tensor) -> Vec<usize> {
    (0..output.rows())
        .map(|b| {
            let row = output.row(b);
            if row.len() == 1 {
                usize::from(row[0] >= 0.5)
            } else {
                argmax(row).expect("rows are non-empty")
            }
        })
        .collect()
}

/// Splits the linear logit `x·w` into its norm and angle factors.
pub fn logit_decompose(x: &Tensor, w: &Tensor) -> Result<LogitFactors> {
    if x.len() != w.len() {
        return Err(Error::dimension("logit_decompose", x.shape(), w.shape()));
    }
    let z = kernels::dot(x.data(), w.data());
    let norm_x = kernels::dot(x.data(), x.data()).sqrt();
    let norm_w = kernels::dot(w.data(), w.data()).sqrt();
    if norm_x == 0.0 || norm_w == 0.0 {
        return Err(Error::Domain("cos θ is undefined for a zero vector".into()));
    }
    Ok(LogitFactors {
        norm_x,
        norm_w,
        cos_theta: (z / (norm_x * norm_w)).clamp(-1.0, 1.0),
        z,
    })
}

#[cfg(test)]
mod tests;
