//! Minimal CPU neural-network stack: sequential nets of trait-object layers,
//! explicit forward/backward passes, and deterministic seeded initialization.
//!
//! All activations are `(N, C, H, W)` arrays; fully connected layers flatten
//! internally and emit `(N, K, 1, 1)`. The sequential container keeps the
//! output of every layer from the last forward pass so callers can read
//! intermediate activations, restart a forward pass from the middle, or stop
//! a backward pass early — the pieces needed for activation-based pruning,
//! input-gradient optimization and class activation mapping.

pub mod conv;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{Array4, ArrayD};
use std::any::Any;

/// A named tensor with an accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: &'static str,
    pub value: ArrayD<T>,
    pub grad: ArrayD<T>,
    /// Buffers (running statistics, channel masks) are saved and loaded but
    /// never touched by optimizers.
    pub trainable: bool,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: &'static str, value: ArrayD<T>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param {
            name,
            value,
            grad,
            trainable: true,
        }
    }

    pub fn buffer(name: &'static str, value: ArrayD<T>) -> Self {
        let mut p = Self::new(name, value);
        p.trainable = false;
        p
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// One differentiable computation step.
///
/// `forward` caches whatever `backward` needs; calling `backward` without a
/// preceding `forward` on the same input is a logic error and panics.
pub trait Layer<T: Scalar>: Any {
    fn forward(&mut self, x: &Array4<T>, train: bool) -> Array4<T>;

    /// Propagate `grad_out` to the layer input. When `param_grads` is false
    /// the layer skips accumulating into its parameter gradients (used when
    /// only input gradients are wanted).
    fn backward(&mut self, grad_out: &Array4<T>, param_grads: bool) -> Array4<T>;

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn as_any_mut(&mut self) -> &mut dyn Any;
}

/// A straight-line stack of layers.
pub struct Net<T: Scalar> {
    pub layers: Vec<Box<dyn Layer<T>>>,
    /// `activations[0]` is the input of the last forward pass;
    /// `activations[i + 1]` is the output of `layers[i]`.
    activations: Vec<Array4<T>>,
}

impl<T: Scalar> Net<T> {
    pub fn new(layers: Vec<Box<dyn Layer<T>>>) -> Self {
        Net {
            layers,
            activations: Vec::new(),
        }
    }

    pub fn forward(&mut self, x: &Array4<T>, train: bool) -> Array4<T> {
        self.activations.clear();
        self.activations.push(x.clone());
        for layer in self.layers.iter_mut() {
            let out = layer.forward(self.activations.last().unwrap(), train);
            self.activations.push(out);
        }
        self.activations.last().unwrap().clone()
    }

    /// Re-run layers `start..` on `x`, which must have the shape of
    /// `activation(start)`. Does not refresh the stored activations.
    pub fn forward_from(&mut self, start: usize, x: &Array4<T>, train: bool) -> Array4<T> {
        let mut cur = x.clone();
        for layer in self.layers[start..].iter_mut() {
            cur = layer.forward(&cur, train);
        }
        cur
    }

    /// Output of layer `idx - 1` (or the net input for `idx == 0`) from the
    /// last full `forward`.
    pub fn activation(&self, idx: usize) -> &Array4<T> {
        &self.activations[idx]
    }

    pub fn backward(&mut self, grad_out: &Array4<T>, param_grads: bool) -> Array4<T> {
        self.backward_to(grad_out, 0, param_grads)
    }

    /// Backpropagate through layers `stop..`, returning the gradient with
    /// respect to `activation(stop)`.
    pub fn backward_to(&mut self, grad_out: &Array4<T>, stop: usize, param_grads: bool) -> Array4<T> {
        let mut grad = grad_out.clone();
        for layer in self.layers[stop..].iter_mut().rev() {
            grad = layer.backward(&grad, param_grads);
        }
        grad
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Flat list of `(position-qualified name, tensor)` pairs in traversal
    /// order, used for checkpointing.
    pub fn named_state(&self) -> Vec<(String, &ArrayD<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for p in layer.params() {
                out.push((format!("l{i}.{}", p.name), &p.value));
            }
        }
        out
    }

    /// Assign tensors from `state` in traversal order, checking names and
    /// shapes.
    pub fn load_state(&mut self, state: &[(String, ArrayD<T>)]) -> Result<()> {
        let expected: Vec<String> = self.named_state().iter().map(|(n, _)| n.clone()).collect();
        if expected.len() != state.len() {
            return Err(Error::Version(format!(
                "checkpoint has {} tensors, model expects {}",
                state.len(),
                expected.len()
            )));
        }
        let mut idx = 0;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for p in layer.params_mut() {
                let (name, value) = &state[idx];
                let want = format!("l{i}.{}", p.name);
                if *name != want {
                    return Err(Error::Version(format!(
                        "checkpoint tensor {idx} is `{name}`, expected `{want}`"
                    )));
                }
                if value.shape() != p.value.shape() {
                    return Err(Error::Version(format!(
                        "checkpoint tensor `{name}` has shape {:?}, expected {:?}",
                        value.shape(),
                        p.value.shape()
                    )));
                }
                p.value.assign(value);
                idx += 1;
            }
        }
        Ok(())
    }

    /// Deep copy. Layers are rebuilt from their parameters via `clone_layer`.
    pub fn clone_net(&self) -> Net<T> {
        let layers = self.layers.iter().map(|l| clone_layer(l.as_ref())).collect();
        Net {
            layers,
            activations: Vec::new(),
        }
    }
}

/// Clone a boxed layer by matching on the concrete types this crate defines.
fn clone_layer<T: Scalar>(layer: &dyn Layer<T>) -> Box<dyn Layer<T>> {
    use layers::*;

    let any = layer as &dyn Any;
    if let Some(l) = any.downcast_ref::<conv::Conv2d<T>>() {
        return Box::new(l.clone());
    }
    if let Some(l) = any.downcast_ref::<conv::ConvTranspose2d<T>>() {
        return Box::new(l.clone());
    }
    if let Some(l) = any.downcast_ref::<BatchNorm2d<T>>() {
        return Box::new(l.clone());
    }
    if let Some(l) = any.downcast_ref::<Relu<T>>() {
        return Box::new(l.clone());
    }
    if let Some(l) = any.downcast_ref::<Sigmoid<T>>() {
        return Box::new(l.clone());
    }
    if let Some(l) = any.downcast_ref::<MaxPool2d<T>>() {
        return Box::new(l.clone());
    }
    if let Some(l) = any.downcast_ref::<GlobalAvgPool<T>>() {
        return Box::new(l.clone());
    }
    if let Some(l) = any.downcast_ref::<Linear<T>>() {
        return Box::new(l.clone());
    }
    if let Some(l) = any.downcast_ref::<ChannelMask<T>>() {
        return Box::new(l.clone());
    }
    if let Some(l) = any.downcast_ref::<Residual<T>>() {
        return Box::new(l.clone_block());
    }
    panic!("clone_layer: unknown layer type");
}
