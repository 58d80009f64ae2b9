//! Sequential layer stacks with a recorded forward pass for reverse-mode
//! differentiation.

use super::layers::{self, Conv2d, Dense, MaxPool2d, Parameter};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    MaxPool2d(MaxPool2d),
    Relu,
    GlobalAvgPool,
    Dense(Dense),
}

impl Layer {
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(conv) => conv.forward(input),
            Layer::MaxPool2d(pool) => pool.forward(input),
            Layer::Relu => Ok(layers::relu(input)),
            Layer::GlobalAvgPool => layers::global_avg_pool(input),
            Layer::Dense(dense) => dense.forward(input),
        }
    }

    fn backward(
        &mut self,
        input: &Tensor,
        grad_out: &Tensor,
        need_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        match self {
            Layer::Conv2d(conv) => conv.backward(input, grad_out, need_input_grad),
            Layer::Dense(dense) => dense.backward(input, grad_out, need_input_grad),
            _ if !need_input_grad => Ok(None),
            Layer::MaxPool2d(pool) => pool.backward(input, grad_out).map(Some),
            Layer::Relu => layers::relu_backward(input, grad_out).map(Some),
            Layer::GlobalAvgPool => layers::global_avg_pool_backward(input, grad_out).map(Some),
        }
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        match self {
            Layer::Conv2d(c) => vec![&c.kernels, &c.bias],
            Layer::Dense(d) => vec![&d.weights, &d.bias],
            _ => Vec::new(),
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.kernels, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weights, &mut d.bias],
            _ => Vec::new(),
        }
    }

    fn has_trainable(&self) -> bool {
        self.parameters().iter().any(|p| p.trainable)
    }
}

/// An ordered stack of layers.
///
/// `forward` is pure. `forward_recorded` keeps every intermediate activation
/// so that a following `backward` can accumulate parameter gradients; each
/// recording is consumed by exactly one `backward`.
#[derive(Clone, Debug, Default)]
pub struct Sequential {
    layers: Vec<Layer>,
    tape: Option<Vec<Tensor>>,
}

impl PartialEq for Sequential {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers, tape: None }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    pub fn forward_recorded(&mut self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Vec::with_capacity(self.layers.len() + 1);
        tape.push(input.clone());
        for layer in &self.layers {
            let next = layer.forward(tape.last().expect("tape starts non-empty"))?;
            tape.push(next);
        }
        let out = tape.last().cloned().expect("tape starts non-empty");
        self.tape = Some(tape);
        Ok(out)
    }

    /// Propagates `grad_output` back through the recorded pass. Returns the
    /// gradient with respect to the recorded input when `need_input_grad`.
    pub fn backward(&mut self, grad_output: &Tensor, need_input_grad: bool) -> Result<Option<Tensor>> {
        let tape = self
            .tape
            .take()
            .ok_or_else(|| Error::State("backward called without a recorded forward pass".into()))?;
        let output = tape.last().expect("tape starts non-empty");
        if output.shape() != grad_output.shape() {
            return Err(Error::shape(
                "backward",
                format!(
                    "output gradient {:?} does not match output {:?}",
                    grad_output.shape(),
                    output.shape()
                ),
            ));
        }
        // index of the first layer that still needs a gradient
        let first_needed = if need_input_grad {
            0
        } else {
            match self.layers.iter().position(Layer::has_trainable) {
                Some(i) => i,
                None => return Ok(None),
            }
        };
        let mut grad = grad_output.clone();
        for i in (first_needed..self.layers.len()).rev() {
            let propagate = i > first_needed || need_input_grad;
            match self.layers[i].backward(&tape[i], &grad, propagate)? {
                Some(g) => grad = g,
                None => return Ok(None),
            }
        }
        Ok(Some(grad))
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(Layer::parameters).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers.iter_mut().flat_map(Layer::parameters_mut).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        for p in self.parameters_mut() {
            p.trainable = trainable;
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }
}
