//! Binary weight checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        5 bytes  "DOME1"
//! version      u32      1
//! loss         u8       0 bce, 1 ce_softmax, 2 mse
//! input rank   u32, then one u32 per input dimension
//! embedding    u32      layer index
//! layer count  u32
//! layers       tag u8 + body, see below
//! ```
//!
//! | tag | layer      | body                                                              |
//! |-----|------------|-------------------------------------------------------------------|
//! | 1   | dense      | in u32, out u32, has_bias u8, weight f64×in·out, bias f64×out     |
//! | 2   | conv2d     | out u32, in u32, kh u32, kw u32, stride u32, padding u32, has_bias u8, weight, bias |
//! | 3   | maxpool    | size u32                                                          |
//! | 4   | flatten    |                                                                   |
//! | 5   | activation | kind u8 (0 relu, 1 sigmoid, 2 tanh, 3 softmax, 4 dome, 5 pdome, 6 mdome) + parameters |
//!
//! DOME stores `learnable u8, μ f64, σ f64`; PDOME adds `π f64`; MDOME stores
//! `n u32, learnable u8, μ f64, σ f64`.

use std::path::Path;

use super::layer::{Activation, Conv2d, Dense, Layer};
use super::{LossKind, Network};
use crate::activations::{DomeParams, MdomeParams, PdomeParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"DOME1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, net.to_bytes())?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    Network::from_bytes(&std::fs::read(path)?)
}

impl Network {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u8(match self.loss {
            LossKind::Bce => 0,
            LossKind::CeSoftmax => 1,
            LossKind::Mse => 2,
        });
        w.u32(self.input_shape.len() as u32);
        self.input_shape.iter().for_each(|&d| w.u32(d as u32));
        w.u32(self.embedding_index as u32);
        w.u32(self.layers.len() as u32);
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    w.u8(1);
                    w.u32(d.inputs() as u32);
                    w.u32(d.outputs() as u32);
                    w.params(&d.weight, d.bias.as_ref());
                }
                Layer::Conv2d(c) => {
                    w.u8(2);
                    for &d in c.weight.shape() {
                        w.u32(d as u32);
                    }
                    w.u32(c.stride as u32);
                    w.u32(c.padding as u32);
                    w.params(&c.weight, c.bias.as_ref());
                }
                Layer::MaxPool2d { size } => {
                    w.u8(3);
                    w.u32(*size as u32);
                }
                Layer::Flatten => w.u8(4),
                Layer::Activation(a) => {
                    w.u8(5);
                    match a {
                        Activation::Relu => w.u8(0),
                        Activation::Sigmoid => w.u8(1),
                        Activation::Tanh => w.u8(2),
                        Activation::Softmax => w.u8(3),
                        Activation::Dome(p) => {
                            w.u8(4);
                            w.u8(p.learnable as u8);
                            w.f64(p.mu);
                            w.f64(p.sigma);
                        }
                        Activation::Pdome(p) => {
                            w.u8(5);
                            w.u8(p.learnable as u8);
                            w.f64(p.mu);
                            w.f64(p.sigma);
                            w.f64(p.pi);
                        }
                        Activation::Mdome(p) => {
                            w.u8(6);
                            w.u32(p.n() as u32);
                            w.u8(p.learnable as u8);
                            w.f64(p.mu);
                            w.f64(p.sigma);
                        }
                    }
                }
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Network> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(5)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("checkpoint magic {magic:?} is not \"DOME1\"")));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let loss = match r.u8()? {
            0 => LossKind::Bce,
            1 => LossKind::CeSoftmax,
            2 => LossKind::Mse,
            t => return Err(Error::Format(format!("unknown loss tag {t}"))),
        };
        let rank = r.u32()? as usize;
        let input_shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let embedding_index = r.usize()?;
        let count = r.usize()?;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let layer = match r.u8()? {
                1 => {
                    let (i, o) = (r.usize()?, r.usize()?);
                    let (weight, bias) = r.params(&[i, o], o)?;
                    Layer::Dense(Dense::new(weight, bias)?)
                }
                2 => {
                    let dims = [r.usize()?, r.usize()?, r.usize()?, r.usize()?];
                    let (stride, padding) = (r.usize()?, r.usize()?);
                    let (weight, bias) = r.params(&dims, dims[0])?;
                    Layer::Conv2d(Conv2d::new(weight, bias, stride, padding)?)
                }
                3 => Layer::MaxPool2d { size: r.usize()? },
                4 => Layer::Flatten,
                5 => Layer::Activation(match r.u8()? {
                    0 => Activation::Relu,
                    1 => Activation::Sigmoid,
                    2 => Activation::Tanh,
                    3 => Activation::Softmax,
                    4 => {
                        let learnable = r.bool()?;
                        let mut p = DomeParams::new(r.f64()?, r.f64()?)?;
                        p.learnable = learnable;
                        Activation::Dome(p)
                    }
                    5 => {
                        let learnable = r.bool()?;
                        let mut p = PdomeParams::new(r.f64()?, r.f64()?, r.f64()?)?;
                        p.learnable = learnable;
                        Activation::Pdome(p)
                    }
                    6 => {
                        let n = r.usize()?;
                        let learnable = r.bool()?;
                        let mut p = MdomeParams::new(n, r.f64()?, r.f64()?)?;
                        p.learnable = learnable;
                        Activation::Mdome(p)
                    }
                    t => return Err(Error::Format(format!("unknown activation tag {t}"))),
                }),
                t => return Err(Error::Format(format!("unknown layer tag {t}"))),
            };
            layers.push(layer);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after the last layer",
                bytes.len() - r.pos
            )));
        }
        Network::new(input_shape, layers, embedding_index, loss)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn params(&mut self, weight: &Tensor, bias: Option<&Tensor>) {
        self.u8(bias.is_some() as u8);
        weight.data().iter().for_each(|&v| self.f64(v));
        if let Some(b) = bias {
            b.data().iter().for_each(|&v| self.f64(v));
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Length {
            expected: self.pos.saturating_add(n),
            found: self.bytes.len(),
        })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::Format(format!("invalid flag byte {v}"))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor> {
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= self.bytes.len()))
            .ok_or_else(|| Error::Format(format!("implausible tensor shape {shape:?}")))?;
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Tensor::new(shape.to_vec(), data)
    }

    fn params(&mut self, shape: &[usize], bias_len: usize) -> Result<(Tensor, Option<Tensor>)> {
        let has_bias = self.bool()?;
        let weight = self.tensor(shape)?;
        let bias = if has_bias {
            Some(self.tensor(&[bias_len])?)
        } else {
            None
        };
        Ok((weight, bias))
    }
}
