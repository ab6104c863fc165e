//! Shi-Tomasi (good-features-to-track) corner detection.

use crate::image::Image;
use crate::scalar::Scalar;
use ndarray::Array2;

use super::edge::sobel_gradients;
use super::CornerParams;

/// Side of the square neighborhood the structure tensor is accumulated over.
const TENSOR_WINDOW: usize = 3;

fn clamp_idx(v: isize, len: usize) -> usize {
    v.clamp(0, len as isize - 1) as usize
}

/// Minimum-eigenvalue response map of the gradient structure tensor.
pub(crate) fn min_eigenvalue_response<T: Scalar>(gray: &Array2<T>) -> Array2<T> {
    let (h, w) = (gray.shape()[0], gray.shape()[1]);
    let (gx, gy) = sobel_gradients(gray);
    let half = (TENSOR_WINDOW / 2) as isize;
    let mut resp = Array2::<T>::zeros((h, w));
    for r in 0..h {
        for q in 0..w {
            let mut sxx = T::zero();
            let mut syy = T::zero();
            let mut sxy = T::zero();
            for dr in -half..=half {
                for dq in -half..=half {
                    let rr = clamp_idx(r as isize + dr, h);
                    let qq = clamp_idx(q as isize + dq, w);
                    let a = gx[(rr, qq)];
                    let b = gy[(rr, qq)];
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            // Smaller eigenvalue of [[sxx, sxy], [sxy, syy]].
            let half_tr = (sxx + syy) / T::from_f(2.0);
            let diff = (sxx - syy) / T::from_f(2.0);
            let disc = (diff * diff + sxy * sxy).sqrt();
            resp[(r, q)] = half_tr - disc;
        }
    }
    resp
}

/// Good-features-to-track: threshold at `quality_level * max_response`,
/// greedy non-maximum suppression at `min_distance`, strongest
/// `max_corners` returned as `(row, col)` pairs.
pub fn detect_corners<T: Scalar>(x: &Image, params: &CornerParams) -> Vec<(usize, usize)> {
    let gray = x.to_gray::<T>();
    let resp = min_eigenvalue_response(&gray);
    let max_resp = resp.iter().fold(T::zero(), |m, &v| if v > m { v } else { m });
    if max_resp <= T::zero() {
        return Vec::new();
    }
    let threshold = T::from_f(params.quality_level) * max_resp;
    let mut candidates: Vec<(T, usize, usize)> = resp
        .indexed_iter()
        .filter(|&(_, &v)| v >= threshold && v > T::zero())
        .map(|((r, q), &v)| (v, r, q))
        .collect();
    // Strong-to-weak order; ties broken by position so selection is total.
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("responses are finite")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let min_d2 = params.min_distance * params.min_distance;
    let mut accepted: Vec<(usize, usize)> = Vec::new();
    for (_, r, q) in candidates {
        if accepted.len() >= params.max_corners {
            break;
        }
        let far_enough = accepted.iter().all(|&(ar, aq)| {
            let dr = r as f64 - ar as f64;
            let dq = q as f64 - aq as f64;
            dr * dr + dq * dq >= min_d2
        });
        if far_enough {
            accepted.push((r, q));
        }
    }
    accepted
}
