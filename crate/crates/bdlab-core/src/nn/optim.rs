//! Gradient-descent optimizers. State is kept per parameter slot in
//! traversal order, so the same optimizer must always be fed the same
//! parameter list.

use super::Param;
use crate::scalar::Scalar;
use ndarray::ArrayD;

/// Stochastic gradient descent with classical momentum:
/// `v = mu * v + g; w -= lr * v`.
pub struct SgdMomentum<T> {
    pub lr: T,
    pub momentum: T,
    velocity: Vec<ArrayD<T>>,
}

impl<T: Scalar> SgdMomentum<T> {
    pub fn new(lr: T, momentum: T) -> Self {
        SgdMomentum {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Param<T>>) {
        if self.velocity.is_empty() {
            self.velocity = params
                .iter()
                .map(|p| ArrayD::zeros(p.value.raw_dim()))
                .collect();
        }
        assert_eq!(self.velocity.len(), params.len(), "optimizer bound to a different net");
        for (p, v) in params.into_iter().zip(self.velocity.iter_mut()) {
            if !p.trainable {
                continue;
            }
            v.zip_mut_with(&p.grad, |vv, &g| *vv = *vv * self.momentum + g);
            p.value.zip_mut_with(v, |w, &vv| *w = *w - self.lr * vv);
        }
    }
}

/// Adam with bias correction.
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    t: i32,
    m: Vec<ArrayD<T>>,
    v: Vec<ArrayD<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T) -> Self {
        Adam {
            lr,
            beta1: T::from_f(0.9),
            beta2: T::from_f(0.999),
            eps: T::from_f(1e-8),
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Param<T>>) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "optimizer bound to a different net");
        self.t += 1;
        let bc1 = T::one() - self.beta1.powi(self.t);
        let bc2 = T::one() - self.beta2.powi(self.t);
        for (i, p) in params.into_iter().enumerate() {
            if !p.trainable {
                continue;
            }
            let (b1, b2) = (self.beta1, self.beta2);
            self.m[i].zip_mut_with(&p.grad, |m, &g| *m = *m * b1 + g * (T::one() - b1));
            self.v[i].zip_mut_with(&p.grad, |v, &g| *v = *v * b2 + g * g * (T::one() - b2));
            let lr = self.lr;
            let eps = self.eps;
            ndarray::Zip::from(&mut p.value)
                .and(&self.m[i])
                .and(&self.v[i])
                .for_each(|w, &m, &v| {
                    let mhat = m / bc1;
                    let vhat = v / bc2;
                    *w = *w - lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::IxDyn;

    fn quadratic_param(start: f64) -> Param<f64> {
        Param::new("w", ArrayD::from_elem(IxDyn(&[1]), start))
    }

    /// Minimize f(w) = (w - 3)^2 and check convergence.
    #[test]
    fn sgd_momentum_minimizes_quadratic() {
        let mut p = quadratic_param(0.0);
        let mut opt = SgdMomentum::new(0.1, 0.9);
        for _ in 0..600 {
            p.zero_grad();
            p.grad[0] = 2.0 * (p.value[0] - 3.0);
            opt.step(vec![&mut p]);
        }
        assert_abs_diff_eq!(p.value[0], 3.0, epsilon = 1e-6);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = quadratic_param(-5.0);
        let mut opt = Adam::new(0.3);
        for _ in 0..500 {
            p.zero_grad();
            p.grad[0] = 2.0 * (p.value[0] - 3.0);
            opt.step(vec![&mut p]);
        }
        assert_abs_diff_eq!(p.value[0], 3.0, epsilon = 1e-4);
    }

    #[test]
    fn first_adam_step_has_unit_scale() {
        // with bias correction the first update is ~lr * sign(g)
        let mut p = quadratic_param(0.0);
        let mut opt = Adam::new(0.01);
        p.grad[0] = 123.0;
        opt.step(vec![&mut p]);
        assert_abs_diff_eq!(p.value[0], -0.01, epsilon = 1e-6);
    }

    #[test]
    fn buffers_are_not_updated() {
        let mut p = quadratic_param(1.0);
        p.trainable = false;
        p.grad[0] = 10.0;
        let mut opt = SgdMomentum::new(0.1, 0.9);
        opt.step(vec![&mut p]);
        assert_abs_diff_eq!(p.value[0], 1.0);
    }
}
