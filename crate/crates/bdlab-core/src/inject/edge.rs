//! Sobel edge extraction.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;
use ndarray::Array2;

use super::EdgeParams;

pub(crate) const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
pub(crate) const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

fn clamp_idx(v: isize, len: usize) -> usize {
    v.clamp(0, len as isize - 1) as usize
}

/// 3x3 Sobel gradients of a grayscale plane with replicate padding.
pub(crate) fn sobel_gradients<T: Scalar>(gray: &Array2<T>) -> (Array2<T>, Array2<T>) {
    let (h, w) = (gray.shape()[0], gray.shape()[1]);
    let mut gx = Array2::<T>::zeros((h, w));
    let mut gy = Array2::<T>::zeros((h, w));
    for r in 0..h {
        for q in 0..w {
            let mut ax = T::zero();
            let mut ay = T::zero();
            for kr in 0..3 {
                for kq in 0..3 {
                    let rr = clamp_idx(r as isize + kr as isize - 1, h);
                    let qq = clamp_idx(q as isize + kq as isize - 1, w);
                    let v = gray[(rr, qq)];
                    ax += T::from_f(SOBEL_X[kr][kq]) * v;
                    ay += T::from_f(SOBEL_Y[kr][kq]) * v;
                }
            }
            gx[(r, q)] = ax;
            gy[(r, q)] = ay;
        }
    }
    (gx, gy)
}

/// Gradient magnitude `sqrt(gx^2 + gy^2)` normalized by its maximum.
///
/// A zero-gradient (constant) image yields an all-zero map.
pub fn sobel_magnitude<T: Scalar>(x: &Image) -> Array2<T> {
    let gray = x.to_gray::<T>();
    let (gx, gy) = sobel_gradients(&gray);
    let mut mag = Array2::<T>::zeros(gx.raw_dim());
    let mut max = T::zero();
    for (m, (&a, &b)) in mag.iter_mut().zip(gx.iter().zip(gy.iter())) {
        *m = (a * a + b * b).sqrt();
        if *m > max {
            max = *m;
        }
    }
    if max > T::zero() {
        mag.mapv_inplace(|v| v / max);
    }
    mag
}

/// Threshold the normalized gradient magnitude into a binary edge mask.
pub fn detect_edges<T: Scalar>(x: &Image, params: &EdgeParams) -> Result<Array2<bool>> {
    if !(params.threshold > 0.0 && params.threshold <= 1.0) {
        return Err(Error::Config(format!(
            "edge threshold must be in (0,1], got {}",
            params.threshold
        )));
    }
    let mag = sobel_magnitude::<T>(x);
    let thr = T::from_f(params.threshold);
    Ok(mag.mapv(|v| v >= thr))
}
