//! Convolution and transposed convolution via patch-matrix multiplication.
//!
//! Both layers reduce to one matrix product per batch over an im2col /
//! col2im patch matrix, which routes the heavy lifting through `ndarray`'s
//! matrix multiply. The same gather/scatter pair serves all four data paths
//! (conv forward/backward, transposed-conv forward/backward) because the
//! two operations are transposes of each other.

use super::{Layer, Param};
use crate::scalar::Scalar;
use ndarray::{Array2, Array4, ArrayView2, ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::any::Any;

/// Output spatial size of a convolution.
pub fn conv_out_size(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

/// Output spatial size of a transposed convolution.
pub fn conv_transpose_out_size(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input - 1) * stride + k - 2 * pad
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Valid destination-index range `[lo, hi)` such that
/// `src = dst * stride + offset - pad` stays inside `[0, src_len)`.
fn dst_range(src_len: usize, dst_len: usize, offset: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if offset >= pad { 0 } else { ceil_div(pad - offset, stride) };
    let hi_bound = src_len + pad;
    if hi_bound <= offset {
        return (0, 0);
    }
    let hi = ((hi_bound - offset - 1) / stride + 1).min(dst_len);
    (lo, hi.max(lo))
}

/// Gather sliding-window patches of `src` into `cols`.
///
/// `src` is `(N, C, sh, sw)`; `cols` is `(C*k*k, N*dh*dw)` with the column
/// index ordered `(n, dst_row, dst_col)`. Source coordinates follow
/// `s = d * stride + k_offset - pad`; out-of-bounds positions contribute the
/// zeros `cols` was filled with.
pub fn im2col<T: Scalar>(
    src: &Array4<T>,
    k: usize,
    stride: usize,
    pad: usize,
    dh: usize,
    dw: usize,
    cols: &mut Array2<T>,
) {
    let (n_batch, c_ch, sh, sw) = src.dim();
    debug_assert_eq!(cols.dim(), (c_ch * k * k, n_batch * dh * dw));
    cols.fill(T::zero());
    let src_flat = src.as_slice().expect("im2col: src standard layout");
    let cols_w = n_batch * dh * dw;
    let cols_flat = cols.as_slice_mut().expect("im2col: cols standard layout");

    for c in 0..c_ch {
        for kr in 0..k {
            let (r_lo, r_hi) = dst_range(sh, dh, kr, stride, pad);
            for kq in 0..k {
                let (q_lo, q_hi) = dst_range(sw, dw, kq, stride, pad);
                if q_hi <= q_lo {
                    continue;
                }
                let row = (c * k + kr) * k + kq;
                let row_off = row * cols_w;
                for n in 0..n_batch {
                    let src_base = (n * c_ch + c) * sh * sw;
                    let col_base = row_off + n * dh * dw;
                    for r in r_lo..r_hi {
                        let s_row = r * stride + kr - pad;
                        let dst0 = col_base + r * dw + q_lo;
                        let src0 = src_base + s_row * sw + q_lo * stride + kq - pad;
                        if stride == 1 {
                            let len = q_hi - q_lo;
                            cols_flat[dst0..dst0 + len].copy_from_slice(&src_flat[src0..src0 + len]);
                        } else {
                            for (i, q) in (q_lo..q_hi).enumerate() {
                                cols_flat[dst0 + i] = src_flat[src_base + s_row * sw + q * stride + kq - pad];
                                let _ = q;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add patch columns back into an image tensor; the exact transpose
/// of [`im2col`]. `cols` is `(C*k*k, N*sh*sw)` indexed by source positions;
/// `out` is `(N, C, th, tw)` and receives `out[t] += cols[s]` where
/// `t = s * stride + k_offset - pad` (out-of-range targets are skipped).
pub fn col2im<T: Scalar>(
    cols: &Array2<T>,
    k: usize,
    stride: usize,
    pad: usize,
    sh: usize,
    sw: usize,
    out: &mut Array4<T>,
) {
    let (n_batch, c_ch, th, tw) = out.dim();
    debug_assert_eq!(cols.dim(), (c_ch * k * k, n_batch * sh * sw));
    let cols_w = n_batch * sh * sw;
    let cols_flat = cols.as_slice().expect("col2im: cols standard layout");
    let out_flat = out.as_slice_mut().expect("col2im: out standard layout");

    for c in 0..c_ch {
        for kr in 0..k {
            let (r_lo, r_hi) = dst_range(th, sh, kr, stride, pad);
            for kq in 0..k {
                let (q_lo, q_hi) = dst_range(tw, sw, kq, stride, pad);
                if q_hi <= q_lo {
                    continue;
                }
                let row = (c * k + kr) * k + kq;
                let row_off = row * cols_w;
                for n in 0..n_batch {
                    let out_base = (n * c_ch + c) * th * tw;
                    let col_base = row_off + n * sh * sw;
                    for r in r_lo..r_hi {
                        let t_row = r * stride + kr - pad;
                        let src0 = col_base + r * sw + q_lo;
                        let dst_row = out_base + t_row * tw;
                        if stride == 1 {
                            let t0 = dst_row + q_lo + kq - pad;
                            for i in 0..(q_hi - q_lo) {
                                out_flat[t0 + i] += cols_flat[src0 + i];
                            }
                        } else {
                            for (i, q) in (q_lo..q_hi).enumerate() {
                                out_flat[dst_row + q * stride + kq - pad] += cols_flat[src0 + i];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn uniform_init<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> ArrayD<T> {
    let limit = (1.0 / fan_in as f64).sqrt();
    let mut out = ArrayD::zeros(IxDyn(shape));
    for v in out.iter_mut() {
        *v = T::from_f(rng.random_range(-limit..limit));
    }
    out
}

/// Assemble `(N, C, H, W)` into a `(C, N*H*W)` matrix (column index ordered
/// `(n, h, w)`), the layout both conv paths use for 1x1-style products.
fn to_channel_matrix<T: Scalar>(x: &Array4<T>) -> Array2<T> {
    let (n, c, h, w) = x.dim();
    let p = h * w;
    let x_flat = x.as_slice().expect("standard layout");
    let mut out = Array2::zeros((c, n * p));
    let out_flat = out.as_slice_mut().unwrap();
    for i in 0..n {
        for ch in 0..c {
            let src0 = (i * c + ch) * p;
            let dst0 = ch * n * p + i * p;
            out_flat[dst0..dst0 + p].copy_from_slice(&x_flat[src0..src0 + p]);
        }
    }
    out
}

/// Inverse of [`to_channel_matrix`].
fn from_channel_matrix<T: Scalar>(m: &Array2<T>, n: usize, c: usize, h: usize, w: usize) -> Array4<T> {
    let p = h * w;
    let m_flat = m.as_slice().expect("standard layout");
    let mut out = Array4::zeros((n, c, h, w));
    let out_flat = out.as_slice_mut().unwrap();
    for i in 0..n {
        for ch in 0..c {
            let src0 = ch * n * p + i * p;
            let dst0 = (i * c + ch) * p;
            out_flat[dst0..dst0 + p].copy_from_slice(&m_flat[src0..src0 + p]);
        }
    }
    out
}

/// 2-D convolution with square kernel, symmetric zero padding and optional
/// bias. Weight layout `(out_ch, in_ch, k, k)`.
#[derive(Clone)]
pub struct Conv2d<T: Scalar> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub w: Param<T>,
    pub b: Option<Param<T>>,
    cache_x: Option<Array4<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_ch * k * k;
        let w = Param::new("w", uniform_init(&[out_ch, in_ch, k, k], fan_in, rng));
        let b = bias.then(|| Param::new("b", ArrayD::zeros(IxDyn(&[out_ch]))));
        Conv2d {
            in_ch,
            out_ch,
            k,
            stride,
            pad,
            w,
            b,
            cache_x: None,
        }
    }

    fn w2(&self) -> ArrayView2<'_, T> {
        self.w
            .value
            .view()
            .into_shape_with_order((self.out_ch, self.in_ch * self.k * self.k))
            .expect("conv weight contiguous")
    }

    fn run_forward(&self, x: &Array4<T>) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_ch, "conv input channels");
        let oh = conv_out_size(h, self.k, self.stride, self.pad);
        let ow = conv_out_size(w, self.k, self.stride, self.pad);
        let mut cols = Array2::zeros((self.in_ch * self.k * self.k, n * oh * ow));
        im2col(x, self.k, self.stride, self.pad, oh, ow, &mut cols);
        let mut out_mat = self.w2().dot(&cols);
        if let Some(b) = &self.b {
            for (oc, mut row) in out_mat.outer_iter_mut().enumerate() {
                let bv = b.value[oc];
                row.mapv_inplace(|v| v + bv);
            }
        }
        from_channel_matrix(&out_mat, n, self.out_ch, oh, ow)
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Array4<T>, _train: bool) -> Array4<T> {
        let out = self.run_forward(x);
        self.cache_x = Some(x.clone());
        out
    }

    fn backward(&mut self, grad_out: &Array4<T>, param_grads: bool) -> Array4<T> {
        let x = self.cache_x.as_ref().expect("conv backward without forward");
        let (n, _, h, w) = x.dim();
        let (_, _, oh, ow) = grad_out.dim();
        let g_mat = to_channel_matrix(grad_out);

        if param_grads {
            let mut cols = Array2::zeros((self.in_ch * self.k * self.k, n * oh * ow));
            im2col(x, self.k, self.stride, self.pad, oh, ow, &mut cols);
            let dw = g_mat.dot(&cols.t());
            let dw_flat = dw.into_shape_with_order(IxDyn(&[self.out_ch, self.in_ch, self.k, self.k]))
                .unwrap();
            self.w.grad += &dw_flat;
            if let Some(b) = &mut self.b {
                for (oc, row) in g_mat.outer_iter().enumerate() {
                    b.grad[oc] += row.sum();
                }
            }
        }

        let dcols = self.w2().t().dot(&g_mat);
        let mut dx = Array4::zeros((n, self.in_ch, h, w));
        col2im(&dcols, self.k, self.stride, self.pad, oh, ow, &mut dx);
        dx
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = vec![&mut self.w];
        if let Some(b) = &mut self.b {
            v.push(b);
        }
        v
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v = vec![&self.w];
        if let Some(b) = &self.b {
            v.push(b);
        }
        v
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// 2-D transposed convolution (fractionally strided). Weight layout
/// `(in_ch, out_ch, k, k)`; output size `(in - 1) * stride + k - 2 * pad`.
#[derive(Clone)]
pub struct ConvTranspose2d<T: Scalar> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub w: Param<T>,
    pub b: Option<Param<T>>,
    cache_x: Option<Array4<T>>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_ch * k * k;
        let w = Param::new("w", uniform_init(&[in_ch, out_ch, k, k], fan_in, rng));
        let b = bias.then(|| Param::new("b", ArrayD::zeros(IxDyn(&[out_ch]))));
        ConvTranspose2d {
            in_ch,
            out_ch,
            k,
            stride,
            pad,
            w,
            b,
            cache_x: None,
        }
    }

    fn w2(&self) -> ArrayView2<'_, T> {
        self.w
            .value
            .view()
            .into_shape_with_order((self.in_ch, self.out_ch * self.k * self.k))
            .expect("conv-transpose weight contiguous")
    }
}

impl<T: Scalar> Layer<T> for ConvTranspose2d<T> {
    fn forward(&mut self, x: &Array4<T>, _train: bool) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_ch, "conv-transpose input channels");
        let oh = conv_transpose_out_size(h, self.k, self.stride, self.pad);
        let ow = conv_transpose_out_size(w, self.k, self.stride, self.pad);
        let x_mat = to_channel_matrix(x);
        let cols = self.w2().t().dot(&x_mat);
        let mut out = Array4::zeros((n, self.out_ch, oh, ow));
        col2im(&cols, self.k, self.stride, self.pad, h, w, &mut out);
        if let Some(b) = &self.b {
            for mut img in out.outer_iter_mut() {
                for (oc, mut plane) in img.outer_iter_mut().enumerate() {
                    let bv = b.value[oc];
                    plane.mapv_inplace(|v| v + bv);
                }
            }
        }
        self.cache_x = Some(x.clone());
        out
    }

    fn backward(&mut self, grad_out: &Array4<T>, param_grads: bool) -> Array4<T> {
        let x = self.cache_x.as_ref().expect("conv-transpose backward without forward");
        let (n, _, h, w) = x.dim();
        let (_, _, oh, ow) = grad_out.dim();
        let mut gcols = Array2::zeros((self.out_ch * self.k * self.k, n * h * w));
        im2col(grad_out, self.k, self.stride, self.pad, h, w, &mut gcols);

        if param_grads {
            let x_mat = to_channel_matrix(x);
            let dw = x_mat.dot(&gcols.t());
            let dw_flat = dw.into_shape_with_order(IxDyn(&[self.in_ch, self.out_ch, self.k, self.k]))
                .unwrap();
            self.w.grad += &dw_flat;
            if let Some(b) = &mut self.b {
                for img in grad_out.outer_iter() {
                    for (oc, plane) in img.outer_iter().enumerate() {
                        b.grad[oc] += plane.sum();
                    }
                }
            }
        }

        let dx_mat = self.w2().dot(&gcols);
        let dx = from_channel_matrix(&dx_mat, n, self.in_ch, h, w);
        let _ = (oh, ow);
        dx
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = vec![&mut self.w];
        if let Some(b) = &mut self.b {
            v.push(b);
        }
        v
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v = vec![&self.w];
        if let Some(b) = &self.b {
            v.push(b);
        }
        v
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array4;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_input(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Array4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array4::zeros((n, c, h, w));
        for v in x.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        x
    }

    /// Direct six-loop convolution used as a reference.
    fn naive_conv(x: &Array4<f64>, w: &ArrayD<f64>, stride: usize, pad: usize) -> Array4<f64> {
        let (n, c, h, wd) = x.dim();
        let oc = w.shape()[0];
        let k = w.shape()[2];
        let oh = conv_out_size(h, k, stride, pad);
        let ow = conv_out_size(wd, k, stride, pad);
        let mut out = Array4::zeros((n, oc, oh, ow));
        for ni in 0..n {
            for o in 0..oc {
                for r in 0..oh {
                    for q in 0..ow {
                        let mut acc = 0.0;
                        for ci in 0..c {
                            for kr in 0..k {
                                for kq in 0..k {
                                    let ih = (r * stride + kr) as isize - pad as isize;
                                    let iw = (q * stride + kq) as isize - pad as isize;
                                    if ih >= 0 && iw >= 0 && (ih as usize) < h && (iw as usize) < wd {
                                        acc += x[(ni, ci, ih as usize, iw as usize)]
                                            * w[[o, ci, kr, kq]];
                                    }
                                }
                            }
                        }
                        out[(ni, o, r, q)] = acc;
                    }
                }
            }
        }
        out
    }

    /// Direct transposed convolution: scatter each input position.
    fn naive_conv_transpose(x: &Array4<f64>, w: &ArrayD<f64>, stride: usize, pad: usize) -> Array4<f64> {
        let (n, c, h, wd) = x.dim();
        let oc = w.shape()[1];
        let k = w.shape()[2];
        let oh = conv_transpose_out_size(h, k, stride, pad);
        let ow = conv_transpose_out_size(wd, k, stride, pad);
        let mut out = Array4::zeros((n, oc, oh, ow));
        for ni in 0..n {
            for ci in 0..c {
                for r in 0..h {
                    for q in 0..wd {
                        for o in 0..oc {
                            for kr in 0..k {
                                for kq in 0..k {
                                    let th = (r * stride + kr) as isize - pad as isize;
                                    let tw = (q * stride + kq) as isize - pad as isize;
                                    if th >= 0 && tw >= 0 && (th as usize) < oh && (tw as usize) < ow {
                                        out[(ni, o, th as usize, tw as usize)] +=
                                            x[(ni, ci, r, q)] * w[[ci, o, kr, kq]];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_stride_1_and_2() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for stride in [1usize, 2] {
            let mut conv = Conv2d::<f64>::new(3, 5, 3, stride, 1, false, &mut rng);
            let x = random_input(2, 3, 7, 6, 100 + stride as u64);
            let got = conv.forward(&x, true);
            let want = naive_conv(&x, &conv.w.value, stride, 1);
            assert_eq!(got.dim(), want.dim());
            for (a, b) in got.iter().zip(want.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn conv_bias_shifts_every_position() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut conv = Conv2d::<f64>::new(1, 2, 3, 1, 1, true, &mut rng);
        conv.b.as_mut().unwrap().value[1] = 0.75;
        let x = Array4::zeros((1, 1, 4, 4));
        let y = conv.forward(&x, true);
        assert_abs_diff_eq!(y[(0, 0, 2, 2)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y[(0, 1, 2, 2)], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn conv_transpose_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut ct = ConvTranspose2d::<f64>::new(4, 3, 4, 2, 1, false, &mut rng);
        let x = random_input(2, 4, 4, 5, 42);
        let got = ct.forward(&x, true);
        let want = naive_conv_transpose(&x, &ct.w.value, 2, 1);
        assert_eq!(got.dim(), (2, 3, 8, 10));
        for (a, b) in got.iter().zip(want.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn conv_transpose_doubles_spatial_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ct = ConvTranspose2d::<f64>::new(2, 2, 4, 2, 1, true, &mut rng);
        let x = random_input(1, 2, 8, 8, 9);
        assert_eq!(ct.forward(&x, true).dim(), (1, 2, 16, 16));
    }

    fn numeric_input_grad<L: Layer<f64>>(layer: &mut L, x: &Array4<f64>, dy: &Array4<f64>) -> Array4<f64> {
        let eps = 1e-5;
        let mut grad = Array4::zeros(x.dim());
        let mut xp = x.clone();
        for idx in 0..x.len() {
            let flat = xp.as_slice_mut().unwrap();
            let orig = flat[idx];
            flat[idx] = orig + eps;
            let up: f64 = layer.forward(&xp, true).iter().zip(dy.iter()).map(|(a, b)| a * b).sum();
            xp.as_slice_mut().unwrap()[idx] = orig - eps;
            let dn: f64 = layer.forward(&xp, true).iter().zip(dy.iter()).map(|(a, b)| a * b).sum();
            xp.as_slice_mut().unwrap()[idx] = orig;
            grad.as_slice_mut().unwrap()[idx] = (up - dn) / (2.0 * eps);
        }
        grad
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut conv = Conv2d::<f64>::new(2, 3, 3, 2, 1, true, &mut rng);
        let x = random_input(1, 2, 5, 5, 7);
        let y = conv.forward(&x, true);
        let dy = random_input(1, 3, y.dim().2, y.dim().3, 8);

        conv.w.zero_grad();
        conv.b.as_mut().unwrap().zero_grad();
        let dx = conv.backward(&dy, true);
        let dx_num = numeric_input_grad(&mut conv, &x, &dy);
        for (a, b) in dx.iter().zip(dx_num.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-7);
        }

        // weight gradient against central differences
        conv.forward(&x, true);
        let eps = 1e-5;
        for idx in [0usize, 5, 17] {
            let orig = conv.w.value.as_slice_mut().unwrap()[idx];
            conv.w.value.as_slice_mut().unwrap()[idx] = orig + eps;
            let up: f64 = conv.forward(&x, true).iter().zip(dy.iter()).map(|(a, b)| a * b).sum();
            conv.w.value.as_slice_mut().unwrap()[idx] = orig - eps;
            let dn: f64 = conv.forward(&x, true).iter().zip(dy.iter()).map(|(a, b)| a * b).sum();
            conv.w.value.as_slice_mut().unwrap()[idx] = orig;
            let want = (up - dn) / (2.0 * eps);
            assert_abs_diff_eq!(conv.w.grad.as_slice().unwrap()[idx], want, epsilon = 1e-6);
        }
    }

    #[test]
    fn conv_transpose_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut ct = ConvTranspose2d::<f64>::new(3, 2, 4, 2, 1, true, &mut rng);
        let x = random_input(1, 3, 3, 3, 70);
        let y = ct.forward(&x, true);
        let dy = random_input(1, 2, y.dim().2, y.dim().3, 71);

        ct.w.zero_grad();
        let dx = ct.backward(&dy, true);
        let dx_num = numeric_input_grad(&mut ct, &x, &dy);
        for (a, b) in dx.iter().zip(dx_num.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-7);
        }

        ct.forward(&x, true);
        let eps = 1e-5;
        for idx in [0usize, 11, 31] {
            let orig = ct.w.value.as_slice_mut().unwrap()[idx];
            ct.w.value.as_slice_mut().unwrap()[idx] = orig + eps;
            let up: f64 = ct.forward(&x, true).iter().zip(dy.iter()).map(|(a, b)| a * b).sum();
            ct.w.value.as_slice_mut().unwrap()[idx] = orig - eps;
            let dn: f64 = ct.forward(&x, true).iter().zip(dy.iter()).map(|(a, b)| a * b).sum();
            ct.w.value.as_slice_mut().unwrap()[idx] = orig;
            let want = (up - dn) / (2.0 * eps);
            assert_abs_diff_eq!(ct.w.grad.as_slice().unwrap()[idx], want, epsilon = 1e-6);
        }
    }
}
