//! Pointwise, pooling, normalization and fully connected layers, plus the
//! residual block combinator.

use super::{clone_layer, Layer, Param};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2, Array4, ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::any::Any;

/// Per-channel batch normalization over `(N, H, W)`.
///
/// Training mode normalizes with biased batch statistics and updates the
/// running estimates; evaluation mode is a deterministic affine map using
/// the stored running statistics.
#[derive(Clone)]
pub struct BatchNorm2d<T: Scalar> {
    pub ch: usize,
    pub momentum: f64,
    pub eps: f64,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    cache: Option<BnCache<T>>,
}

#[derive(Clone)]
struct BnCache<T> {
    xhat: Array4<T>,
    inv_std: Array1<T>,
    count: usize,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(ch: usize) -> Self {
        BatchNorm2d {
            ch,
            momentum: 0.1,
            eps: 1e-5,
            gamma: Param::new("gamma", ArrayD::from_elem(IxDyn(&[ch]), T::one())),
            beta: Param::new("beta", ArrayD::zeros(IxDyn(&[ch]))),
            running_mean: Param::buffer("running_mean", ArrayD::zeros(IxDyn(&[ch]))),
            running_var: Param::buffer("running_var", ArrayD::from_elem(IxDyn(&[ch]), T::one())),
            cache: None,
        }
    }
}

impl<T: Scalar> Layer<T> for BatchNorm2d<T> {
    fn forward(&mut self, x: &Array4<T>, train: bool) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.ch, "batch-norm channels");
        let count = n * h * w;
        let mut out = x.clone();

        if train {
            let mut xhat = x.clone();
            let mut inv_std = Array1::zeros(c);
            let m = self.momentum;
            for ch in 0..c {
                let plane = x.slice(ndarray::s![.., ch, .., ..]);
                let mean = plane.sum() / T::from_usize_(count);
                let var = plane.mapv(|v| (v - mean) * (v - mean)).sum() / T::from_usize_(count);
                let istd = T::one() / (var + T::from_f(self.eps)).sqrt();
                inv_std[ch] = istd;
                let mut xh = xhat.slice_mut(ndarray::s![.., ch, .., ..]);
                xh.mapv_inplace(|v| (v - mean) * istd);
                self.running_mean.value[ch] =
                    self.running_mean.value[ch] * T::from_f(1.0 - m) + mean * T::from_f(m);
                self.running_var.value[ch] =
                    self.running_var.value[ch] * T::from_f(1.0 - m) + var * T::from_f(m);
                let g = self.gamma.value[ch];
                let b = self.beta.value[ch];
                let mut o = out.slice_mut(ndarray::s![.., ch, .., ..]);
                o.assign(&xh);
                o.mapv_inplace(|v| v * g + b);
            }
            self.cache = Some(BnCache { xhat, inv_std, count });
        } else {
            for ch in 0..c {
                let mean = self.running_mean.value[ch];
                let var = self.running_var.value[ch];
                let istd = T::one() / (var + T::from_f(self.eps)).sqrt();
                let g = self.gamma.value[ch];
                let b = self.beta.value[ch];
                let mut o = out.slice_mut(ndarray::s![.., ch, .., ..]);
                o.mapv_inplace(|v| (v - mean) * istd * g + b);
            }
            self.cache = None;
        }
        out
    }

    fn backward(&mut self, grad_out: &Array4<T>, param_grads: bool) -> Array4<T> {
        let cache = self.cache.as_ref().expect("batch-norm backward needs a training forward");
        let (_, c, _, _) = grad_out.dim();
        let count = T::from_usize_(cache.count);
        let mut dx = grad_out.clone();
        for ch in 0..c {
            let g = grad_out.slice(ndarray::s![.., ch, .., ..]);
            let xh = cache.xhat.slice(ndarray::s![.., ch, .., ..]);
            let sum_g = g.sum();
            let sum_gx = (&g * &xh).sum();
            if param_grads {
                self.gamma.grad[ch] += sum_gx;
                self.beta.grad[ch] += sum_g;
            }
            let gamma = self.gamma.value[ch];
            let istd = cache.inv_std[ch];
            // dx = gamma * istd / m * (m * g - sum(g) - xhat * sum(g * xhat))
            let scale = gamma * istd / count;
            let mut d = dx.slice_mut(ndarray::s![.., ch, .., ..]);
            ndarray::Zip::from(&mut d).and(&g).and(&xh).for_each(|d, &gv, &xv| {
                *d = scale * (count * gv - sum_g - xv * sum_gx);
            });
        }
        dx
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Rectified linear unit.
#[derive(Clone)]
pub struct Relu<T: Scalar> {
    cache_out: Option<Array4<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Relu { cache_out: None }
    }
}

impl<T: Scalar> Default for Relu<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Layer<T> for Relu<T> {
    fn forward(&mut self, x: &Array4<T>, _train: bool) -> Array4<T> {
        let out = x.mapv(|v| if v > T::zero() { v } else { T::zero() });
        self.cache_out = Some(out.clone());
        out
    }

    fn backward(&mut self, grad_out: &Array4<T>, _param_grads: bool) -> Array4<T> {
        let out = self.cache_out.as_ref().expect("relu backward without forward");
        let mut dx = grad_out.clone();
        ndarray::Zip::from(&mut dx).and(out).for_each(|d, &o| {
            if o <= T::zero() {
                *d = T::zero();
            }
        });
        dx
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Logistic sigmoid, mapping activations into `(0, 1)`.
#[derive(Clone)]
pub struct Sigmoid<T: Scalar> {
    cache_out: Option<Array4<T>>,
}

impl<T: Scalar> Sigmoid<T> {
    pub fn new() -> Self {
        Sigmoid { cache_out: None }
    }
}

impl<T: Scalar> Default for Sigmoid<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Layer<T> for Sigmoid<T> {
    fn forward(&mut self, x: &Array4<T>, _train: bool) -> Array4<T> {
        let out = x.mapv(|v| T::one() / (T::one() + (-v).exp()));
        self.cache_out = Some(out.clone());
        out
    }

    fn backward(&mut self, grad_out: &Array4<T>, _param_grads: bool) -> Array4<T> {
        let out = self.cache_out.as_ref().expect("sigmoid backward without forward");
        let mut dx = grad_out.clone();
        ndarray::Zip::from(&mut dx).and(out).for_each(|d, &o| {
            *d = *d * o * (T::one() - o);
        });
        dx
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Non-overlapping max pooling.
#[derive(Clone)]
pub struct MaxPool2d<T: Scalar> {
    pub k: usize,
    argmax: Option<(Vec<usize>, (usize, usize, usize, usize))>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> MaxPool2d<T> {
    pub fn new(k: usize) -> Self {
        MaxPool2d {
            k,
            argmax: None,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<T: Scalar> Layer<T> for MaxPool2d<T> {
    fn forward(&mut self, x: &Array4<T>, _train: bool) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        let k = self.k;
        assert!(h % k == 0 && w % k == 0, "max-pool needs divisible spatial dims");
        let (oh, ow) = (h / k, w / k);
        let mut out = Array4::zeros((n, c, oh, ow));
        let mut arg = vec![0usize; n * c * oh * ow];
        let x_flat = x.as_slice().unwrap();
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * h * w;
                for r in 0..oh {
                    for q in 0..ow {
                        let mut best_idx = base + (r * k) * w + q * k;
                        let mut best = x_flat[best_idx];
                        for kr in 0..k {
                            for kq in 0..k {
                                let idx = base + (r * k + kr) * w + (q * k + kq);
                                if x_flat[idx] > best {
                                    best = x_flat[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        out[(ni, ci, r, q)] = best;
                        arg[((ni * c + ci) * oh + r) * ow + q] = best_idx;
                    }
                }
            }
        }
        self.argmax = Some((arg, x.dim()));
        out
    }

    fn backward(&mut self, grad_out: &Array4<T>, _param_grads: bool) -> Array4<T> {
        let (arg, in_dim) = self.argmax.as_ref().expect("max-pool backward without forward");
        let mut dx = Array4::zeros(*in_dim);
        let dx_flat = dx.as_slice_mut().unwrap();
        for (g, &idx) in grad_out.iter().zip(arg.iter()) {
            dx_flat[idx] += *g;
        }
        dx
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Spatial mean per channel, producing `(N, C, 1, 1)`.
#[derive(Clone)]
pub struct GlobalAvgPool<T: Scalar> {
    in_dim: Option<(usize, usize, usize, usize)>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> GlobalAvgPool<T> {
    pub fn new() -> Self {
        GlobalAvgPool {
            in_dim: None,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<T: Scalar> Default for GlobalAvgPool<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Layer<T> for GlobalAvgPool<T> {
    fn forward(&mut self, x: &Array4<T>, _train: bool) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        self.in_dim = Some(x.dim());
        let denom = T::from_usize_(h * w);
        let mut out = Array4::zeros((n, c, 1, 1));
        for ni in 0..n {
            for ci in 0..c {
                out[(ni, ci, 0, 0)] = x.slice(ndarray::s![ni, ci, .., ..]).sum() / denom;
            }
        }
        out
    }

    fn backward(&mut self, grad_out: &Array4<T>, _param_grads: bool) -> Array4<T> {
        let (n, c, h, w) = self.in_dim.expect("global-avg-pool backward without forward");
        let denom = T::from_usize_(h * w);
        let mut dx = Array4::zeros((n, c, h, w));
        for ni in 0..n {
            for ci in 0..c {
                let g = grad_out[(ni, ci, 0, 0)] / denom;
                dx.slice_mut(ndarray::s![ni, ci, .., ..]).fill(g);
            }
        }
        dx
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Fully connected layer. Flattens `(N, C, H, W)` to `(N, C*H*W)` and emits
/// `(N, out_features, 1, 1)`.
#[derive(Clone)]
pub struct Linear<T: Scalar> {
    pub in_features: usize,
    pub out_features: usize,
    pub w: Param<T>,
    pub b: Param<T>,
    cache_x: Option<(Array2<T>, (usize, usize, usize, usize))>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (1.0 / in_features as f64).sqrt();
        let mut w = ArrayD::zeros(IxDyn(&[out_features, in_features]));
        for v in w.iter_mut() {
            *v = T::from_f(rng.random_range(-limit..limit));
        }
        Linear {
            in_features,
            out_features,
            w: Param::new("w", w),
            b: Param::new("b", ArrayD::zeros(IxDyn(&[out_features]))),
            cache_x: None,
        }
    }

    fn w2(&self) -> ndarray::ArrayView2<'_, T> {
        self.w
            .value
            .view()
            .into_shape_with_order((self.out_features, self.in_features))
            .expect("linear weight contiguous")
    }
}

impl<T: Scalar> Layer<T> for Linear<T> {
    fn forward(&mut self, x: &Array4<T>, _train: bool) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        let d = c * h * w;
        assert_eq!(d, self.in_features, "linear input features");
        let x2 = x
            .view()
            .into_shape_with_order((n, d))
            .expect("linear input contiguous")
            .to_owned();
        let mut out2 = x2.dot(&self.w2().t());
        for mut row in out2.outer_iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v + self.b.value[j];
            }
        }
        self.cache_x = Some((x2, x.dim()));
        out2
            .into_shape_with_order((n, self.out_features, 1, 1))
            .unwrap()
    }

    fn backward(&mut self, grad_out: &Array4<T>, param_grads: bool) -> Array4<T> {
        let (x2, in_dim) = self.cache_x.as_ref().expect("linear backward without forward");
        let n = grad_out.dim().0;
        let g2 = grad_out
            .view()
            .into_shape_with_order((n, self.out_features))
            .expect("linear grad contiguous");
        if param_grads {
            let dw = g2.t().dot(x2);
            self.w.grad += &dw.into_shape_with_order(IxDyn(&[self.out_features, self.in_features])).unwrap();
            for j in 0..self.out_features {
                self.b.grad[j] += g2.column(j).sum();
            }
        }
        let dx2 = g2.dot(&self.w2());
        dx2.into_shape_with_order(*in_dim).unwrap()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w, &mut self.b]
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w, &self.b]
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Per-channel multiplicative gate, all ones by default. Setting entries to
/// zero silences whole feature maps, which is how channel pruning is applied
/// without restructuring the network.
#[derive(Clone)]
pub struct ChannelMask<T: Scalar> {
    pub mask: Param<T>,
}

impl<T: Scalar> ChannelMask<T> {
    pub fn new(ch: usize) -> Self {
        ChannelMask {
            mask: Param::buffer("mask", ArrayD::from_elem(IxDyn(&[ch]), T::one())),
        }
    }

    pub fn set_zeroed(&mut self, channels: &[usize]) {
        self.mask.value.fill(T::one());
        for &c in channels {
            self.mask.value[c] = T::zero();
        }
    }

    pub fn zeroed_channels(&self) -> Vec<usize> {
        self.mask
            .value
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == T::zero())
            .map(|(i, _)| i)
            .collect()
    }
}

impl<T: Scalar> Layer<T> for ChannelMask<T> {
    fn forward(&mut self, x: &Array4<T>, _train: bool) -> Array4<T> {
        let mut out = x.clone();
        for ch in 0..x.dim().1 {
            let m = self.mask.value[ch];
            if m != T::one() {
                out.slice_mut(ndarray::s![.., ch, .., ..]).mapv_inplace(|v| v * m);
            }
        }
        out
    }

    fn backward(&mut self, grad_out: &Array4<T>, _param_grads: bool) -> Array4<T> {
        let mut dx = grad_out.clone();
        for ch in 0..grad_out.dim().1 {
            let m = self.mask.value[ch];
            if m != T::one() {
                dx.slice_mut(ndarray::s![.., ch, .., ..]).mapv_inplace(|v| v * m);
            }
        }
        dx
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.mask]
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.mask]
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Residual block: `relu(main(x) + shortcut(x))`, identity shortcut when the
/// shortcut stack is empty.
pub struct Residual<T: Scalar> {
    pub main: Vec<Box<dyn Layer<T>>>,
    pub shortcut: Vec<Box<dyn Layer<T>>>,
    cache_out: Option<Array4<T>>,
}

impl<T: Scalar> Residual<T> {
    pub fn new(main: Vec<Box<dyn Layer<T>>>, shortcut: Vec<Box<dyn Layer<T>>>) -> Self {
        Residual {
            main,
            shortcut,
            cache_out: None,
        }
    }

    pub fn clone_block(&self) -> Residual<T> {
        Residual {
            main: self.main.iter().map(|l| clone_layer(l.as_ref())).collect(),
            shortcut: self.shortcut.iter().map(|l| clone_layer(l.as_ref())).collect(),
            cache_out: self.cache_out.clone(),
        }
    }
}

impl<T: Scalar> Layer<T> for Residual<T> {
    fn forward(&mut self, x: &Array4<T>, train: bool) -> Array4<T> {
        let mut a = x.clone();
        for layer in self.main.iter_mut() {
            a = layer.forward(&a, train);
        }
        let mut b = x.clone();
        for layer in self.shortcut.iter_mut() {
            b = layer.forward(&b, train);
        }
        let mut out = a;
        out += &b;
        out.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
        self.cache_out = Some(out.clone());
        out
    }

    fn backward(&mut self, grad_out: &Array4<T>, param_grads: bool) -> Array4<T> {
        let out = self.cache_out.as_ref().expect("residual backward without forward");
        let mut d_pre = grad_out.clone();
        ndarray::Zip::from(&mut d_pre).and(out).for_each(|d, &o| {
            if o <= T::zero() {
                *d = T::zero();
            }
        });

        let mut da = d_pre.clone();
        for layer in self.main.iter_mut().rev() {
            da = layer.backward(&da, param_grads);
        }
        let mut db = d_pre;
        for layer in self.shortcut.iter_mut().rev() {
            db = layer.backward(&db, param_grads);
        }
        da + db
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v: Vec<&mut Param<T>> = Vec::new();
        for l in self.main.iter_mut() {
            v.extend(l.params_mut());
        }
        for l in self.shortcut.iter_mut() {
            v.extend(l.params_mut());
        }
        v
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v: Vec<&Param<T>> = Vec::new();
        for l in self.main.iter() {
            v.extend(l.params());
        }
        for l in self.shortcut.iter() {
            v.extend(l.params());
        }
        v
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::super::conv::Conv2d;
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array4;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random4(dim: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array4::zeros(dim);
        for v in x.iter_mut() {
            *v = rng.random_range(-1.5..1.5);
        }
        x
    }

    fn check_input_grad<L: Layer<f64>>(layer: &mut L, x: &Array4<f64>, train: bool, tol: f64) {
        let y = layer.forward(x, train);
        let dy = random4(y.dim(), 999);
        let dx = layer.backward(&dy, true);
        let eps = 1e-5;
        let mut xp = x.clone();
        for idx in 0..x.len() {
            let orig = xp.as_slice_mut().unwrap()[idx];
            xp.as_slice_mut().unwrap()[idx] = orig + eps;
            let up: f64 = layer.forward(&xp, train).iter().zip(dy.iter()).map(|(a, b)| a * b).sum();
            xp.as_slice_mut().unwrap()[idx] = orig - eps;
            let dn: f64 = layer.forward(&xp, train).iter().zip(dy.iter()).map(|(a, b)| a * b).sum();
            xp.as_slice_mut().unwrap()[idx] = orig;
            let want = (up - dn) / (2.0 * eps);
            assert_abs_diff_eq!(dx.as_slice().unwrap()[idx], want, epsilon = tol);
        }
    }

    #[test]
    fn batch_norm_normalizes_in_training_mode() {
        let mut bn = BatchNorm2d::<f64>::new(2);
        let x = random4((4, 2, 3, 3), 1);
        let y = bn.forward(&x, true);
        for ch in 0..2 {
            let plane = y.slice(ndarray::s![.., ch, .., ..]);
            let n = plane.len() as f64;
            let mean = plane.sum() / n;
            let var = plane.mapv(|v| (v - mean) * (v - mean)).sum() / n;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(var, 1.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn batch_norm_eval_uses_running_stats() {
        let mut bn = BatchNorm2d::<f64>::new(1);
        let x = random4((8, 1, 4, 4), 2);
        for _ in 0..200 {
            bn.forward(&x, true);
        }
        let y = bn.forward(&x, false);
        // after many updates the running stats converge to the batch stats,
        // so eval output matches train output
        let yt = bn.forward(&x, true);
        for (a, b) in y.iter().zip(yt.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-3);
        }
    }

    #[test]
    fn batch_norm_eval_is_deterministic_and_stateless() {
        let mut bn = BatchNorm2d::<f64>::new(2);
        let x = random4((2, 2, 3, 3), 3);
        bn.forward(&x, true);
        let rm = bn.running_mean.value.clone();
        let y1 = bn.forward(&x, false);
        let y2 = bn.forward(&x, false);
        assert_eq!(y1, y2);
        assert_eq!(bn.running_mean.value, rm);
    }

    #[test]
    fn batch_norm_backward_matches_finite_differences() {
        let mut bn = BatchNorm2d::<f64>::new(2);
        // scale/shift away from the identity so the test exercises gamma/beta
        bn.gamma.value[0] = 1.3;
        bn.beta.value[1] = -0.4;
        let x = random4((3, 2, 2, 2), 4);
        check_input_grad(&mut bn, &x, true, 1e-6);
    }

    #[test]
    fn relu_and_sigmoid_gradients() {
        let x = random4((2, 3, 4, 4), 5);
        check_input_grad(&mut Relu::new(), &x, false, 1e-7);
        check_input_grad(&mut Sigmoid::new(), &x, false, 1e-7);
    }

    #[test]
    fn max_pool_forward_and_gradient() {
        let mut mp = MaxPool2d::<f64>::new(2);
        let mut x = Array4::<f64>::zeros((1, 1, 4, 4));
        x[(0, 0, 0, 1)] = 3.0;
        x[(0, 0, 3, 3)] = 2.0;
        let y = mp.forward(&x, false);
        assert_eq!(y.dim(), (1, 1, 2, 2));
        assert_abs_diff_eq!(y[(0, 0, 0, 0)], 3.0);
        assert_abs_diff_eq!(y[(0, 0, 1, 1)], 2.0);

        let xr = random4((2, 2, 6, 6), 6);
        check_input_grad(&mut mp, &xr, false, 1e-7);
    }

    #[test]
    fn global_avg_pool_values_and_gradient() {
        let mut gap = GlobalAvgPool::<f64>::new();
        let x = Array4::<f64>::from_elem((1, 2, 3, 3), 2.5);
        let y = gap.forward(&x, false);
        assert_abs_diff_eq!(y[(0, 0, 0, 0)], 2.5);
        let xr = random4((2, 3, 4, 4), 7);
        check_input_grad(&mut gap, &xr, false, 1e-7);
    }

    #[test]
    fn linear_matches_manual_product_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut lin = Linear::<f64>::new(6, 2, &mut rng);
        let x = random4((3, 6, 1, 1), 9);
        let y = lin.forward(&x, false);
        for n in 0..3 {
            for o in 0..2 {
                let mut acc = lin.b.value[o];
                for d in 0..6 {
                    acc += lin.w.value[[o, d]] * x[(n, d, 0, 0)];
                }
                assert_abs_diff_eq!(y[(n, o, 0, 0)], acc, epsilon = 1e-12);
            }
        }
        check_input_grad(&mut lin, &x, false, 1e-7);
    }

    #[test]
    fn channel_mask_zeroes_selected_channels() {
        let mut cm = ChannelMask::<f64>::new(3);
        cm.set_zeroed(&[1]);
        let x = Array4::<f64>::from_elem((1, 3, 2, 2), 4.0);
        let y = cm.forward(&x, false);
        assert_abs_diff_eq!(y[(0, 0, 0, 0)], 4.0);
        assert_abs_diff_eq!(y[(0, 1, 0, 0)], 0.0);
        assert_abs_diff_eq!(y[(0, 2, 1, 1)], 4.0);
        assert_eq!(cm.zeroed_channels(), vec![1]);

        let xr = random4((2, 3, 3, 3), 10);
        check_input_grad(&mut cm, &xr, false, 1e-7);
    }

    #[test]
    fn residual_identity_shortcut_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut block = Residual::new(
            vec![
                Box::new(Conv2d::<f64>::new(2, 2, 3, 1, 1, true, &mut rng)),
                Box::new(Relu::new()),
                Box::new(Conv2d::<f64>::new(2, 2, 3, 1, 1, true, &mut rng)),
            ],
            vec![],
        );
        let x = random4((1, 2, 4, 4), 13);
        check_input_grad(&mut block, &x, false, 1e-6);
    }

    #[test]
    fn residual_projection_shortcut_changes_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut block = Residual::new(
            vec![
                Box::new(Conv2d::<f64>::new(2, 4, 3, 2, 1, false, &mut rng)),
                Box::new(Relu::new()),
                Box::new(Conv2d::<f64>::new(4, 4, 3, 1, 1, false, &mut rng)),
            ],
            vec![Box::new(Conv2d::<f64>::new(2, 4, 1, 2, 0, false, &mut rng))],
        );
        let x = random4((2, 2, 8, 8), 15);
        let y = block.forward(&x, false);
        assert_eq!(y.dim(), (2, 4, 4, 4));
        check_input_grad(&mut block, &x, false, 1e-6);
    }
}
