//! Reference architectures and classifier heads.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::{Activation, Conv2d, Dense, Layer};
use super::{LossKind, Network};
use crate::activations::{DomeParams, MdomeParams, PdomeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// LeNet-5 encoder on `1×28×28` images with a linear 2-D embedding.
    Lenet2d,
    /// Small convnet on `1×28×28` images with a 64-wide embedding.
    SmallCnn,
    /// Two hidden dense layers of 32 units and a linear 2-D embedding.
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// One logit unit and a sigmoid.
    Sigmoid,
    /// One logit per class, softmax folded into the loss.
    Softmax,
    /// One logit unit and a scalar DOME.
    Dome,
    /// Multi-class DOME over an `(n-1)`-dimensional input.
    Mdome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hidden {
    Relu,
    Pdome,
}

impl Head {
    pub fn default_loss(self) -> LossKind {
        match self {
            Head::Sigmoid | Head::Dome => LossKind::Bce,
            Head::Softmax => LossKind::CeSoftmax,
            Head::Mdome => LossKind::Mse,
        }
    }

    pub fn is_binary(self) -> bool {
        matches!(self, Head::Sigmoid | Head::Dome)
    }
}

macro_rules! named_enum {
    ($ty:ident, $what:literal, $($variant:ident => $name:literal),+) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self {
                    $($ty::$variant => $name),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(concat!("unknown ", $what, " '{}'"), other))),
                }
            }
        }
    };
}

named_enum!(Architecture, "architecture", Lenet2d => "lenet-2d", SmallCnn => "smallcnn", Mlp => "mlp");
named_enum!(Head, "head", Sigmoid => "sigmoid", Softmax => "softmax", Dome => "dome", Mdome => "mdome");
named_enum!(Hidden, "hidden activation", Relu => "relu", Pdome => "pdome");

/// Everything needed to build a freshly initialized network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub architecture: Architecture,
    pub head: Head,
    pub hidden: Hidden,
    pub classes: usize,
    /// Per-example input shape; `[1, 28, 28]` for the convnets.
    pub input_shape: Vec<usize>,
    pub head_bias: bool,
    pub loss: Option<LossKind>,
    pub seed: u64,
}

impl NetworkSpec {
    pub fn new(architecture: Architecture, head: Head, classes: usize) -> Self {
        let input_shape = match architecture {
            Architecture::Mlp => vec![2],
            _ => vec![1, 28, 28],
        };
        NetworkSpec {
            architecture,
            head,
            hidden: Hidden::Relu,
            classes,
            input_shape,
            head_bias: false,
            loss: None,
            seed: 0,
        }
    }

    pub fn loss(&self) -> LossKind {
        self.loss.unwrap_or(self.head.default_loss())
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.head.is_binary() && self.classes != 2 {
            return Err(Error::Config(format!(
                "{} head is binary but the task has {} classes",
                self.head, self.classes
            )));
        }
        let loss = self.loss();
        let compatible = match self.head {
            Head::Sigmoid | Head::Dome => loss == LossKind::Bce,
            Head::Softmax => loss == LossKind::CeSoftmax,
            Head::Mdome => loss == LossKind::Mse || loss == LossKind::CeSoftmax,
        };
        if !compatible {
            return Err(Error::Config(format!("{} head cannot be trained with {loss}", self.head)));
        }
        match self.architecture {
            Architecture::Mlp if self.input_shape.len() != 1 => Err(Error::Config(format!(
                "mlp needs flat inputs, got {:?}",
                self.input_shape
            ))),
            Architecture::Lenet2d | Architecture::SmallCnn if self.input_shape != [1, 28, 28] => {
                Err(Error::Config(format!(
                    "{} needs 1×28×28 inputs, got {:?}",
                    self.architecture, self.input_shape
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Builds and initializes the network described by `spec`.
pub fn build(spec: &NetworkSpec) -> Result<Network> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let hidden = || match spec.hidden {
        Hidden::Relu => Layer::Activation(Activation::Relu),
        Hidden::Pdome => Layer::Activation(Activation::Pdome(PdomeParams::default())),
    };
    let mut layers = Vec::new();
    let embedding_dim = match spec.architecture {
        Architecture::Lenet2d => {
            layers.push(Layer::Conv2d(Conv2d::init(1, 6, 5, 1, 2, true, &mut rng)));
            layers.push(hidden());
            layers.push(Layer::MaxPool2d { size: 2 });
            layers.push(Layer::Conv2d(Conv2d::init(6, 16, 5, 1, 0, true, &mut rng)));
            layers.push(hidden());
            layers.push(Layer::MaxPool2d { size: 2 });
            layers.push(Layer::Flatten);
            layers.push(Layer::Dense(Dense::init(400, 120, true, &mut rng)));
            layers.push(hidden());
            layers.push(Layer::Dense(Dense::init(120, 84, true, &mut rng)));
            layers.push(hidden());
            layers.push(Layer::Dense(Dense::init(84, 2, true, &mut rng)));
            2
        }
        Architecture::SmallCnn => {
            layers.push(Layer::Conv2d(Conv2d::init(1, 8, 5, 1, 0, true, &mut rng)));
            layers.push(hidden());
            layers.push(Layer::MaxPool2d { size: 2 });
            layers.push(Layer::Conv2d(Conv2d::init(8, 16, 5, 1, 0, true, &mut rng)));
            layers.push(hidden());
            layers.push(Layer::MaxPool2d { size: 2 });
            layers.push(Layer::Flatten);
            layers.push(Layer::Dense(Dense::init(256, 64, true, &mut rng)));
            layers.push(hidden());
            64
        }
        Architecture::Mlp => {
            let d = spec.input_shape[0];
            layers.push(Layer::Dense(Dense::init(d, 32, true, &mut rng)));
            layers.push(hidden());
            layers.push(Layer::Dense(Dense::init(32, 32, true, &mut rng)));
            layers.push(hidden());
            layers.push(Layer::Dense(Dense::init(32, 2, true, &mut rng)));
            2
        }
    };
    let embedding_index = layers.len() - 1;
    match spec.head {
        Head::Sigmoid | Head::Dome => {
            layers.push(Layer::Dense(Dense::init(embedding_dim, 1, spec.head_bias, &mut rng)));
            layers.push(Layer::Activation(if spec.head == Head::Sigmoid {
                Activation::Sigmoid
            } else {
                Activation::Dome(DomeParams::default())
            }));
        }
        Head::Softmax => {
            layers.push(Layer::Dense(Dense::init(embedding_dim, spec.classes, spec.head_bias, &mut rng)));
        }
        Head::Mdome => {
            if embedding_dim != spec.classes - 1 {
                layers.push(Layer::Dense(Dense::init(
                    embedding_dim,
                    spec.classes - 1,
                    spec.head_bias,
                    &mut rng,
                )));
            }
            layers.push(Layer::Activation(Activation::Mdome(MdomeParams::initial(spec.classes)?)));
        }
    }
    Network::new(spec.input_shape.clone(), layers, embedding_index, spec.loss())
}
