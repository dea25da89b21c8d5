//! 2-D cross-correlation via im2col.

use super::{kernels, Tensor};
use crate::error::{Error, Result};

/// Output extent of a convolution along one axis.
///
/// Errors when the window does not tile the padded input exactly.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Argument("stride must be positive".into()));
    }
    let padded = input + 2 * padding;
    if kernel == 0 || kernel > padded || (padded - kernel) % stride != 0 {
        return Err(Error::Shape(format!(
            "kernel {kernel} with stride {stride} and padding {padding} does not tile input extent {input}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Geometry of one convolution, shared by forward and backward passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        (channels, height, width): (usize, usize, usize),
        (kernel_h, kernel_w): (usize, usize),
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        Ok(ConvGeometry {
            channels,
            height,
            width,
            kernel_h,
            kernel_w,
            stride,
            padding,
            out_h: conv_output_size(height, kernel_h, stride, padding)?,
            out_w: conv_output_size(width, kernel_w, stride, padding)?,
        })
    }

    /// Rows of the column matrix: `channels · kernel_h · kernel_w`.
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unrolls one `[c×h×w]` image into a `[patch_len × out_h·out_w]` matrix.
pub(crate) fn im2col(input: &[f64], g: &ConvGeometry, cols: &mut [f64]) {
    let out_len = g.out_len();
    debug_assert_eq!(cols.len(), g.patch_len() * out_len);
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &input[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let dst = &mut cols[row * out_len..(row + 1) * out_len];
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + ki) as isize - g.padding as isize;
                    for ox in 0..g.out_w {
                        let x = (ox * g.stride + kj) as isize - g.padding as isize;
                        dst[oy * g.out_w + ox] = if y >= 0
                            && (y as usize) < g.height
                            && x >= 0
                            && (x as usize) < g.width
                        {
                            plane[y as usize * g.width + x as usize]
                        } else {
                            0.0
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatters column-matrix gradients back onto the image they came from.
pub(crate) fn col2im_add(cols: &[f64], g: &ConvGeometry, input_grad: &mut [f64]) {
    let out_len = g.out_len();
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &mut input_grad[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let src = &cols[row * out_len..(row + 1) * out_len];
                for oy in 0..g.out_h {
                    let y = (oy * g.stride + ki) as isize - g.padding as isize;
                    if y < 0 || y as usize >= g.height {
                        continue;
                    }
                    for ox in 0..g.out_w {
                        let x = (ox * g.stride + kj) as isize - g.padding as isize;
                        if x >= 0 && (x as usize) < g.width {
                            plane[y as usize * g.width + x as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Cross-correlates `input[c_in×h×w]` with `kernels[c_out×c_in×kh×kw]`
/// under zero padding. Kernels are not flipped.
pub fn conv2d(input: &Tensor, kernels: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    if input.rank() != 3 || kernels.rank() != 4 || input.shape()[0] != kernels.shape()[1] {
        return Err(Error::dimension("conv2d", input.shape(), kernels.shape()));
    }
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (c_out, kh, kw) = (kernels.shape()[0], kernels.shape()[2], kernels.shape()[3]);
    let g = ConvGeometry::new((c, h, w), (kh, kw), stride, padding)?;
    let mut cols = vec![0.0; g.patch_len() * g.out_len()];
    im2col(input.data(), &g, &mut cols);
    let mut out = vec![0.0; c_out * g.out_len()];
    kernels::gemm(c_out, g.patch_len(), g.out_len(), kernels.data(), &cols, &mut out, false);
    Tensor::new(vec![c_out, g.out_h, g.out_w], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_conv(input: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
        let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (co, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let mut out = vec![0.0; co * oh * ow];
        for o in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = 0.0;
                    for ci in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let y = (oy * stride + i) as isize - pad as isize;
                                let x = (ox * stride + j) as isize - pad as isize;
                                if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                                    s += input.data()[(ci * h + y as usize) * w + x as usize]
                                        * k.data()[((o * c + ci) * kh + i) * kw + j];
                                }
                            }
                        }
                    }
                    out[(o * oh + oy) * ow + ox] = s;
                }
            }
        }
        out
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn scalar_kernel_scales_input() {
        let input = Tensor::new(vec![1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let k = Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let out = conv2d(&input, &k, 1, 0).unwrap();
        assert_eq!(out, input.scale(2.0));
    }

    #[test]
    fn ones_kernel_sums_window() {
        let input = Tensor::filled(&[1, 2, 2], 1.0);
        let k = Tensor::filled(&[1, 1, 2, 2], 1.0);
        let out = conv2d(&input, &k, 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn strided_padded_conv_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = random(&[2, 5, 5], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let out = conv2d(&input, &k, 2, 1).unwrap();
        assert_eq!(out.shape(), &[3, 3, 3]);
        let oracle = naive_conv(&input, &k, 2, 1);
        for (a, b) in out.data().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn non_integral_output_is_rejected() {
        let input = Tensor::zeros(&[1, 4, 4]);
        let k = Tensor::zeros(&[1, 1, 3, 3]);
        assert!(matches!(conv2d(&input, &k, 2, 0), Err(Error::Shape(_))));
        let bad_channels = Tensor::zeros(&[1, 2, 3, 3]);
        assert!(matches!(conv2d(&input, &bad_channels, 1, 0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = ConvGeometry::new((2, 5, 4), (3, 2), 1, 1).unwrap();
        let x = random(&[2, 5, 4], &mut rng);
        let c = random(&[g.patch_len(), g.out_len()], &mut rng);
        let mut cols = vec![0.0; g.patch_len() * g.out_len()];
        im2col(x.data(), &g, &mut cols);
        let lhs: f64 = cols.iter().zip(c.data()).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im_add(c.data(), &g, &mut back);
        let rhs: f64 = back.iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn identity_kernel_is_identity(c in 1usize..4, h in 1usize..7, w in 1usize..7, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let input = random(&[c, h, w], &mut rng);
            let mut k = Tensor::zeros(&[c, c, 1, 1]);
            for i in 0..c {
                k.data_mut()[i * c + i] = 1.0;
            }
            prop_assert_eq!(conv2d(&input, &k, 1, 0).unwrap(), input);
        }
    }
}
