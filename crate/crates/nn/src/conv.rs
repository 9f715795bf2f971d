//! 2-D convolution via im2col + GEMM.

use ndarray::{linalg::general_mat_mul, s, Array1, Array2, Array4, ArrayView3, Axis, Zip};
use rand::Rng;
use rayon::prelude::*;

use crate::init::he_uniform_4d;
use crate::scalar::Real;
use crate::GRAD_CHUNK;

#[derive(Debug, Clone)]
pub struct Conv2d<F> {
    /// (c_out, c_in, kh, kw)
    pub weight: Array4<F>,
    /// (c_out); absent for convolutions feeding a batch norm.
    pub bias: Option<Array1<F>>,
    pub stride: usize,
    /// (pad_h, pad_w)
    pub padding: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads<F> {
    pub weight: Array4<F>,
    pub bias: Option<Array1<F>>,
}

impl<F: Real> Conv2d<F> {
    pub fn new<R: Rng>(
        rng: &mut R,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: (usize, usize),
        bias: bool,
    ) -> Self {
        let weight = he_uniform_4d(rng, (c_out, c_in, kernel.0, kernel.1));
        let bias = bias.then(|| Array1::zeros(c_out));
        Self {
            weight,
            bias,
            stride,
            padding,
        }
    }

    pub fn zero_grads(&self) -> Conv2dGrads<F> {
        Conv2dGrads {
            weight: Array4::zeros(self.weight.raw_dim()),
            bias: self.bias.as_ref().map(|b| Array1::zeros(b.raw_dim())),
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let (_, _, kh, kw) = self.weight.dim();
        (
            (h + 2 * self.padding.0 - kh) / self.stride + 1,
            (w + 2 * self.padding.1 - kw) / self.stride + 1,
        )
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, |b| b.len())
    }

    /// Forward pass; input (n, c_in, h, w), output (n, c_out, oh, ow).
    pub fn forward(&self, x: &Array4<F>) -> Array4<F> {
        let (n, c_in, h, w) = x.dim();
        let (c_out, wc_in, kh, kw) = self.weight.dim();
        assert_eq!(c_in, wc_in, "conv input channels {c_in} != weight {wc_in}");
        assert!(
            h + 2 * self.padding.0 >= kh && w + 2 * self.padding.1 >= kw,
            "conv input {h}x{w} smaller than kernel {kh}x{kw}"
        );
        let (oh, ow) = self.out_hw(h, w);
        let k = c_in * kh * kw;
        let wmat = self
            .weight
            .view()
            .into_shape_with_order((c_out, k))
            .expect("weight is contiguous");
        let mut y = Array4::zeros((n, c_out, oh, ow));
        Zip::from(y.axis_iter_mut(Axis(0)))
            .and(x.axis_iter(Axis(0)))
            .par_for_each(|mut yn, xn| {
                let mut col = Array2::zeros((k, oh * ow));
                im2col(&xn, (kh, kw), self.stride, self.padding, (oh, ow), &mut col);
                let mut ymat = yn
                    .view_mut()
                    .into_shape_with_order((c_out, oh * ow))
                    .expect("output is contiguous");
                general_mat_mul(F::one(), &wmat, &col, F::zero(), &mut ymat);
                if let Some(b) = &self.bias {
                    for (mut row, &bv) in ymat.outer_iter_mut().zip(b.iter()) {
                        row.mapv_inplace(|v| v + bv);
                    }
                }
            });
        y
    }

    /// Input gradient only; needs just the forward input's spatial size.
    pub fn backward_input(&self, in_hw: (usize, usize), gout: &Array4<F>) -> Array4<F> {
        let (h, w) = in_hw;
        let (n, _, _, _) = gout.dim();
        let (c_out, c_in, kh, kw) = self.weight.dim();
        let (oh, ow) = self.out_hw(h, w);
        assert_eq!(gout.dim(), (n, c_out, oh, ow), "conv gout shape");
        let k = c_in * kh * kw;
        let wmat = self
            .weight
            .view()
            .into_shape_with_order((c_out, k))
            .expect("weight is contiguous");
        let mut dx = Array4::zeros((n, c_in, h, w));
        Zip::from(dx.axis_iter_mut(Axis(0)))
            .and(gout.axis_iter(Axis(0)))
            .par_for_each(|mut dxn, gn| {
                let gmat = gn
                    .into_shape_with_order((c_out, oh * ow))
                    .expect("gout is contiguous");
                let mut dcol = Array2::zeros((k, oh * ow));
                general_mat_mul(F::one(), &wmat.t(), &gmat, F::zero(), &mut dcol);
                col2im(
                    &dcol,
                    (kh, kw),
                    self.stride,
                    self.padding,
                    (oh, ow),
                    &mut dxn,
                );
            });
        dx
    }

    /// Backward pass. `x` is the forward input; `gout` the gradient at the
    /// output. Returns the gradient at the input and, when `grads` is
    /// given, accumulates parameter gradients into it.
    pub fn backward(
        &self,
        x: &Array4<F>,
        gout: &Array4<F>,
        grads: Option<&mut Conv2dGrads<F>>,
    ) -> Array4<F> {
        let (n, c_in, h, w) = x.dim();
        let (c_out, _, kh, kw) = self.weight.dim();
        let (oh, ow) = self.out_hw(h, w);
        let k = c_in * kh * kw;
        let dx = self.backward_input((h, w), gout);

        if let Some(gr) = grads {
            // Fixed-size chunks keep the summation order independent of
            // the rayon schedule.
            let ranges: Vec<(usize, usize)> = (0..n)
                .step_by(GRAD_CHUNK)
                .map(|s0| (s0, (s0 + GRAD_CHUNK).min(n)))
                .collect();
            let partials: Vec<(Array2<F>, Array1<F>)> = ranges
                .par_iter()
                .map(|&(s0, s1)| {
                    let mut gw = Array2::zeros((c_out, k));
                    let mut gb = Array1::zeros(c_out);
                    let mut col = Array2::zeros((k, oh * ow));
                    for i in s0..s1 {
                        let xn = x.slice(s![i, .., .., ..]);
                        im2col(&xn, (kh, kw), self.stride, self.padding, (oh, ow), &mut col);
                        let gmat = gout
                            .slice(s![i, .., .., ..])
                            .into_shape_with_order((c_out, oh * ow))
                            .expect("gout is contiguous");
                        general_mat_mul(F::one(), &gmat, &col.t(), F::one(), &mut gw);
                        if self.bias.is_some() {
                            gb += &gmat.sum_axis(Axis(1));
                        }
                    }
                    (gw, gb)
                })
                .collect();
            let mut gwsum = gr
                .weight
                .view_mut()
                .into_shape_with_order((c_out, k))
                .expect("grad weight is contiguous");
            for (gw, gb) in partials {
                gwsum += &gw;
                if let Some(bias) = gr.bias.as_mut() {
                    *bias += &gb;
                }
            }
        }
        dx
    }
}

/// Unfold one (c, h, w) image into a (c*kh*kw, oh*ow) column matrix.
fn im2col<F: Real>(
    x: &ArrayView3<F>,
    kernel: (usize, usize),
    stride: usize,
    padding: (usize, usize),
    out_hw: (usize, usize),
    col: &mut Array2<F>,
) {
    let (c, h, w) = x.dim();
    let (kh, kw) = kernel;
    let (oh, ow) = out_hw;
    col.fill(F::zero());
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                for oi in 0..oh {
                    let ii = (oi * stride + ki) as isize - padding.0 as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let jj = (oj * stride + kj) as isize - padding.1 as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        col[[row, oi * ow + oj]] = x[[ci, ii as usize, jj as usize]];
                    }
                }
            }
        }
    }
}

/// Scatter-add a column matrix back onto an image; inverse of `im2col`.
fn col2im<F: Real>(
    col: &Array2<F>,
    kernel: (usize, usize),
    stride: usize,
    padding: (usize, usize),
    out_hw: (usize, usize),
    x: &mut ndarray::ArrayViewMut3<F>,
) {
    let (c, h, w) = x.dim();
    let (kh, kw) = kernel;
    let (oh, ow) = out_hw;
    for ci in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ci * kh + ki) * kw + kj;
                for oi in 0..oh {
                    let ii = (oi * stride + ki) as isize - padding.0 as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let jj = (oj * stride + kj) as isize - padding.1 as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        x[[ci, ii as usize, jj as usize]] += col[[row, oi * ow + oj]];
                    }
                }
            }
        }
    }
}
