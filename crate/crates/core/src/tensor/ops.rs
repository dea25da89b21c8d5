use super::{kernels, Tensor};
use crate::error::{Error, Result};

/// Matrix product of `a[m×k]` and `b[k×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::dimension("matmul", a.shape(), b.shape()));
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    kernels::gemm(m, k, n, a.data(), b.data(), &mut out, false);
    Tensor::new(vec![m, n], out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    /// Multiply by a scalar.
    Scale,
    Exp,
    Neg,
}

/// Second operand of [`elementwise`].
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Tensor(&'a Tensor),
    Scalar(f64),
    None,
}

pub fn elementwise(op: ElementwiseOp, a: &Tensor, b: Operand<'_>) -> Result<Tensor> {
    use ElementwiseOp::*;
    let binary = |f: fn(f64, f64) -> f64| -> Result<Tensor> {
        match b {
            Operand::Tensor(t) => {
                if t.shape() != a.shape() {
                    return Err(Error::dimension("elementwise", a.shape(), t.shape()));
                }
                let data = a.data().iter().zip(t.data()).map(|(&x, &y)| f(x, y)).collect();
                Tensor::new(a.shape().to_vec(), data)
            }
            Operand::Scalar(s) => Ok(a.map(|x| f(x, s))),
            Operand::None => Err(Error::Argument(format!("{op:?} needs a second operand"))),
        }
    };
    match op {
        Add => binary(|x, y| x + y),
        Sub => binary(|x, y| x - y),
        Mul => binary(|x, y| x * y),
        Scale => match b {
            Operand::Scalar(s) => Ok(a.map(|x| x * s)),
            _ => Err(Error::Argument("scale takes a scalar operand".into())),
        },
        Exp => Ok(a.map(f64::exp)),
        Neg => Ok(a.map(|x| -x)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Max,
    /// Index of the maximum, lowest index on ties, stored as `f64`.
    Argmax,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    All,
    Dim(usize),
}

/// Reduces `a` over one axis (dropping it) or over every element.
///
/// Reductions that would leave no dimensions return shape `[1]`.
pub fn reduce(op: ReduceOp, a: &Tensor, axis: Axis) -> Result<Tensor> {
    match axis {
        Axis::All => Tensor::new(vec![1], vec![reduce_lane(op, a.data().iter().copied())?]),
        Axis::Dim(d) => {
            if d >= a.rank() {
                return Err(Error::Argument(format!(
                    "axis {d} out of range for shape {:?}",
                    a.shape()
                )));
            }
            let shape = a.shape();
            let outer: usize = shape[..d].iter().product();
            let len = shape[d];
            let inner: usize = shape[d + 1..].iter().product();
            let mut out = Vec::with_capacity(outer * inner);
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * len * inner + i;
                    let lane = (0..len).map(|k| a.data()[base + k * inner]);
                    out.push(reduce_lane(op, lane)?);
                }
            }
            let mut out_shape: Vec<usize> = shape[..d].iter().chain(&shape[d + 1..]).copied().collect();
            if out_shape.is_empty() {
                out_shape.push(1);
            }
            Tensor::new(out_shape, out)
        }
    }
}

fn reduce_lane(op: ReduceOp, lane: impl Iterator<Item = f64>) -> Result<f64> {
    let values: Vec<f64> = lane.collect();
    if values.is_empty() {
        return Err(Error::Argument("reduction over an empty axis".into()));
    }
    Ok(match op {
        ReduceOp::Sum => values.iter().fold(0.0, |s, &v| s + v),
        ReduceOp::Mean => values.iter().fold(0.0, |s, &v| s + v) / values.len() as f64,
        ReduceOp::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ReduceOp::Argmax => argmax(&values)? as f64,
    })
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::Argument("argmax of an empty slice".into()));
    }
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    Ok(best)
}

impl Tensor {
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        matmul(self, other)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        elementwise(ElementwiseOp::Add, self, Operand::Tensor(other))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        elementwise(ElementwiseOp::Sub, self, Operand::Tensor(other))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        elementwise(ElementwiseOp::Mul, self, Operand::Tensor(other))
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|x| x * s)
    }

    pub fn sum(&self) -> f64 {
        self.data().iter().fold(0.0, |s, &v| s + v)
    }
}
