//! Stealth metrics: MSE, PSNR and SSIM on the 0-255 intensity scale.

use crate::error::{Error, Result};
use crate::image::{Image, PEAK};
use crate::scalar::Scalar;
use ndarray::Array2;

/// Per-image stealth triple. `psnr` uses `+inf` as the zero-error sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StealthScore<T> {
    pub mse: T,
    pub psnr: T,
    pub ssim: T,
}

/// SSIM parameters; defaults are the canonical Gaussian 11x11 configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams<T> {
    pub window: usize,
    pub sigma: T,
    pub k1: T,
    pub k2: T,
}

impl<T: Scalar> Default for SsimParams<T> {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: T::from_f(1.5),
            k1: T::from_f(0.01),
            k2: T::from_f(0.03),
        }
    }
}

fn check_same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "metric operands differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean squared error over all pixels and channels, 0-255 scale.
pub fn mse<T: Scalar>(a: &Image, b: &Image) -> Result<T> {
    check_same_shape(a, b)?;
    let mut acc = T::zero();
    for (&x, &y) in a.pixels().iter().zip(b.pixels().iter()) {
        let d = T::from_f(x as f64) - T::from_f(y as f64);
        acc += d * d;
    }
    Ok(acc / T::from_usize_(a.pixels().len()))
}

/// `10*log10(255^2 / mse)`; `+inf` when `mse == 0`.
pub fn psnr_from_mse<T: Scalar>(mse: T) -> T {
    if mse <= T::zero() {
        return T::infinity();
    }
    let peak_sq = T::from_f(PEAK * PEAK);
    T::from_f(10.0) * (peak_sq / mse).log10()
}

pub fn psnr<T: Scalar>(a: &Image, b: &Image) -> Result<T> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// Mean local SSIM with Gaussian-weighted windows (valid positions only),
/// dynamic range 255, channels averaged.
pub fn ssim<T: Scalar>(a: &Image, b: &Image, params: &SsimParams<T>) -> Result<T> {
    check_same_shape(a, b)?;
    let (h, w, c) = a.shape();
    let win = params.window;
    if win % 2 == 0 || win == 0 {
        return Err(Error::Window(format!("window must be odd, got {win}")));
    }
    if win > h.min(w) {
        return Err(Error::Window(format!(
            "window {win} exceeds min image side {}",
            h.min(w)
        )));
    }
    let kernel = gaussian_kernel::<T>(win, params.sigma);
    let c1 = {
        let k1l = params.k1 * T::from_f(PEAK);
        k1l * k1l
    };
    let c2 = {
        let k2l = params.k2 * T::from_f(PEAK);
        k2l * k2l
    };

    let mut total = T::zero();
    for ch in 0..c {
        let xa = channel_plane::<T>(a, ch);
        let xb = channel_plane::<T>(b, ch);
        let mu_a = filter_separable(&xa, &kernel);
        let mu_b = filter_separable(&xb, &kernel);
        let e_aa = filter_separable(&(&xa * &xa), &kernel);
        let e_bb = filter_separable(&(&xb * &xb), &kernel);
        let e_ab = filter_separable(&(&xa * &xb), &kernel);

        let mut acc = T::zero();
        let n = mu_a.len();
        for i in 0..mu_a.shape()[0] {
            for j in 0..mu_a.shape()[1] {
                let ma = mu_a[(i, j)];
                let mb = mu_b[(i, j)];
                let va = e_aa[(i, j)] - ma * ma;
                let vb = e_bb[(i, j)] - mb * mb;
                let cov = e_ab[(i, j)] - ma * mb;
                let two = T::from_f(2.0);
                let num = (two * ma * mb + c1) * (two * cov + c2);
                let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
                acc += num / den;
            }
        }
        total += acc / T::from_usize_(n);
    }
    Ok(total / T::from_usize_(c))
}

pub fn stealth_score<T: Scalar>(a: &Image, b: &Image, params: &SsimParams<T>) -> Result<StealthScore<T>> {
    let m = mse(a, b)?;
    Ok(StealthScore {
        mse: m,
        psnr: psnr_from_mse(m),
        ssim: ssim(a, b, params)?,
    })
}

/// Corpus-level aggregation.
///
/// Reports both PSNR conventions: the mean of per-image PSNRs (infinite
/// values excluded, the headline number) and the PSNR of the mean MSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusStealth {
    pub mean_mse: f64,
    /// Mean of per-image PSNRs over pairs with nonzero MSE.
    pub mean_psnr: f64,
    /// `psnr_from_mse(mean_mse)` — the alternative corpus convention.
    pub psnr_of_mean_mse: f64,
    pub mean_ssim: f64,
    pub pairs: usize,
    /// Pairs with identical images, excluded from `mean_psnr`.
    pub infinite_psnr_pairs: usize,
}

pub fn corpus_stealth<T: Scalar>(scores: &[StealthScore<T>]) -> CorpusStealth {
    let n = scores.len().max(1) as f64;
    let mean_mse = scores.iter().map(|s| s.mse.to_f()).sum::<f64>() / n;
    let finite: Vec<f64> = scores
        .iter()
        .map(|s| s.psnr.to_f())
        .filter(|p| p.is_finite())
        .collect();
    let mean_psnr = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    CorpusStealth {
        mean_mse,
        mean_psnr,
        psnr_of_mean_mse: psnr_from_mse(mean_mse),
        mean_ssim: scores.iter().map(|s| s.ssim.to_f()).sum::<f64>() / n,
        pairs: scores.len(),
        infinite_psnr_pairs: scores.len() - finite.len(),
    }
}

fn channel_plane<T: Scalar>(img: &Image, ch: usize) -> Array2<T> {
    Array2::from_shape_fn((img.height(), img.width()), |(r, c)| {
        T::from_f(img.get(r, c, ch) as f64)
    })
}

fn gaussian_kernel<T: Scalar>(win: usize, sigma: T) -> Vec<T> {
    let half = (win / 2) as f64;
    let mut k: Vec<T> = (0..win)
        .map(|i| {
            let d = i as f64 - half;
            let s = sigma.to_f();
            T::from_f((-d * d / (2.0 * s * s)).exp())
        })
        .collect();
    let sum: T = k.iter().copied().sum();
    for v in &mut k {
        *v = *v / sum;
    }
    k
}

/// Separable valid-mode filtering: rows then columns.
fn filter_separable<T: Scalar>(plane: &Array2<T>, kernel: &[T]) -> Array2<T> {
    let (h, w) = (plane.shape()[0], plane.shape()[1]);
    let win = kernel.len();
    let ow = w - win + 1;
    let oh = h - win + 1;
    let mut rows = Array2::<T>::zeros((h, ow));
    for r in 0..h {
        for q in 0..ow {
            let mut acc = T::zero();
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * plane[(r, q + k)];
            }
            rows[(r, q)] = acc;
        }
    }
    let mut out = Array2::<T>::zeros((oh, ow));
    for r in 0..oh {
        for q in 0..ow {
            let mut acc = T::zero();
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * rows[(r + k, q)];
            }
            out[(r, q)] = acc;
        }
    }
    out
}
