//! Pooling operators: fixed and adaptive max pooling, average pooling,
//! and global average pooling.

use ndarray::{Array2, Array4, Axis, Zip};

use crate::scalar::Real;

/// Argmax positions (flat h*w index per output element) for max-pool backward.
#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    pub argmax: Array4<usize>,
    pub in_hw: (usize, usize),
}

/// Max pooling with a fixed kernel/stride and implicit -inf padding.
pub fn max_pool2d<F: Real>(
    x: &Array4<F>,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> (Array4<F>, MaxPoolCache) {
    let (n, c, h, w) = x.dim();
    let oh = (h + 2 * padding - kernel) / stride + 1;
    let ow = (w + 2 * padding - kernel) / stride + 1;
    let mut y = Array4::zeros((n, c, oh, ow));
    let mut argmax = Array4::zeros((n, c, oh, ow));
    Zip::from(y.axis_iter_mut(Axis(0)))
        .and(argmax.axis_iter_mut(Axis(0)))
        .and(x.axis_iter(Axis(0)))
        .par_for_each(|mut yn, mut an, xn| {
            for ci in 0..c {
                for oi in 0..oh {
                    for oj in 0..ow {
                        let mut best = F::neg_infinity();
                        let mut best_idx = 0usize;
                        for ki in 0..kernel {
                            let ii = (oi * stride + ki) as isize - padding as isize;
                            if ii < 0 || ii >= h as isize {
                                continue;
                            }
                            for kj in 0..kernel {
                                let jj = (oj * stride + kj) as isize - padding as isize;
                                if jj < 0 || jj >= w as isize {
                                    continue;
                                }
                                let v = xn[[ci, ii as usize, jj as usize]];
                                if v > best {
                                    best = v;
                                    best_idx = ii as usize * w + jj as usize;
                                }
                            }
                        }
                        yn[[ci, oi, oj]] = best;
                        an[[ci, oi, oj]] = best_idx;
                    }
                }
            }
        });
    (y, MaxPoolCache { argmax, in_hw: (h, w) })
}

/// Adaptive max pooling to an exact output size. Bin `i` covers
/// `[floor(i*h/oh), ceil((i+1)*h/oh))`.
pub fn adaptive_max_pool2d<F: Real>(x: &Array4<F>, out_hw: (usize, usize)) -> (Array4<F>, MaxPoolCache) {
    let (n, c, h, w) = x.dim();
    let (oh, ow) = out_hw;
    assert!(oh >= 1 && ow >= 1 && oh <= h && ow <= w, "adaptive pool cannot upsample {h}x{w} -> {oh}x{ow}");
    let mut y = Array4::zeros((n, c, oh, ow));
    let mut argmax = Array4::zeros((n, c, oh, ow));
    let bin = |i: usize, size: usize, out: usize| -> (usize, usize) {
        ((i * size) / out, ((i + 1) * size + out - 1) / out)
    };
    Zip::from(y.axis_iter_mut(Axis(0)))
        .and(argmax.axis_iter_mut(Axis(0)))
        .and(x.axis_iter(Axis(0)))
        .par_for_each(|mut yn, mut an, xn| {
            for ci in 0..c {
                for oi in 0..oh {
                    let (i0, i1) = bin(oi, h, oh);
                    for oj in 0..ow {
                        let (j0, j1) = bin(oj, w, ow);
                        let mut best = F::neg_infinity();
                        let mut best_idx = 0usize;
                        for ii in i0..i1 {
                            for jj in j0..j1 {
                                let v = xn[[ci, ii, jj]];
                                if v > best {
                                    best = v;
                                    best_idx = ii * w + jj;
                                }
                            }
                        }
                        yn[[ci, oi, oj]] = best;
                        an[[ci, oi, oj]] = best_idx;
                    }
                }
            }
        });
    (y, MaxPoolCache { argmax, in_hw: (h, w) })
}

pub fn max_pool2d_backward<F: Real>(cache: &MaxPoolCache, gout: &Array4<F>) -> Array4<F> {
    let (n, c, oh, ow) = gout.dim();
    let (h, w) = cache.in_hw;
    let mut dx = Array4::zeros((n, c, h, w));
    Zip::from(dx.axis_iter_mut(Axis(0)))
        .and(gout.axis_iter(Axis(0)))
        .and(cache.argmax.axis_iter(Axis(0)))
        .par_for_each(|mut dxn, gn, an| {
            for ci in 0..c {
                for oi in 0..oh {
                    for oj in 0..ow {
                        let flat = an[[ci, oi, oj]];
                        dxn[[ci, flat / w, flat % w]] += gn[[ci, oi, oj]];
                    }
                }
            }
        });
    dx
}

/// Average pooling; padded positions count toward the divisor.
pub fn avg_pool2d<F: Real>(x: &Array4<F>, kernel: usize, stride: usize, padding: usize) -> Array4<F> {
    let (n, c, h, w) = x.dim();
    let oh = (h + 2 * padding - kernel) / stride + 1;
    let ow = (w + 2 * padding - kernel) / stride + 1;
    let area = F::c((kernel * kernel) as f64);
    let mut y = Array4::zeros((n, c, oh, ow));
    Zip::from(y.axis_iter_mut(Axis(0)))
        .and(x.axis_iter(Axis(0)))
        .par_for_each(|mut yn, xn| {
            for ci in 0..c {
                for oi in 0..oh {
                    for oj in 0..ow {
                        let mut acc = F::zero();
                        for ki in 0..kernel {
                            let ii = (oi * stride + ki) as isize - padding as isize;
                            if ii < 0 || ii >= h as isize {
                                continue;
                            }
                            for kj in 0..kernel {
                                let jj = (oj * stride + kj) as isize - padding as isize;
                                if jj < 0 || jj >= w as isize {
                                    continue;
                                }
                                acc += xn[[ci, ii as usize, jj as usize]];
                            }
                        }
                        yn[[ci, oi, oj]] = acc / area;
                    }
                }
            }
        });
    y
}

pub fn avg_pool2d_backward<F: Real>(
    in_hw: (usize, usize),
    kernel: usize,
    stride: usize,
    padding: usize,
    gout: &Array4<F>,
) -> Array4<F> {
    let (n, c, oh, ow) = gout.dim();
    let (h, w) = in_hw;
    let area = F::c((kernel * kernel) as f64);
    let mut dx = Array4::zeros((n, c, h, w));
    Zip::from(dx.axis_iter_mut(Axis(0)))
        .and(gout.axis_iter(Axis(0)))
        .par_for_each(|mut dxn, gn| {
            for ci in 0..c {
                for oi in 0..oh {
                    for oj in 0..ow {
                        let g = gn[[ci, oi, oj]] / area;
                        for ki in 0..kernel {
                            let ii = (oi * stride + ki) as isize - padding as isize;
                            if ii < 0 || ii >= h as isize {
                                continue;
                            }
                            for kj in 0..kernel {
                                let jj = (oj * stride + kj) as isize - padding as isize;
                                if jj < 0 || jj >= w as isize {
                                    continue;
                                }
                                dxn[[ci, ii as usize, jj as usize]] += g;
                            }
                        }
                    }
                }
            }
        });
    dx
}

/// Global average pooling (n, c, h, w) -> (n, c).
pub fn global_avg_pool<F: Real>(x: &Array4<F>) -> Array2<F> {
    let (n, c, h, w) = x.dim();
    let area = F::c((h * w) as f64);
    let mut y = Array2::zeros((n, c));
    for i in 0..n {
        for ci in 0..c {
            y[[i, ci]] = x.index_axis(Axis(0), i).index_axis(Axis(0), ci).sum() / area;
        }
    }
    y
}

pub fn global_avg_pool_backward<F: Real>(in_dim: (usize, usize, usize, usize), gout: &Array2<F>) -> Array4<F> {
    let (n, c, h, w) = in_dim;
    let area = F::c((h * w) as f64);
    let mut dx = Array4::zeros((n, c, h, w));
    for i in 0..n {
        for ci in 0..c {
            let g = gout[[i, ci]] / area;
            dx.index_axis_mut(Axis(0), i)
                .index_axis_mut(Axis(0), ci)
                .fill(g);
        }
    }
    dx
}
