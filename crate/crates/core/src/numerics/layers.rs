//! Layer primitives over `[H, W, C]` activations.
//!
//! Every layer exposes a pure `forward` and a `backward` that takes the
//! input seen during the forward pass plus the upstream gradient. Parameter
//! gradients accumulate into [`Parameter::grad`] only when the parameter is
//! trainable.

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A weight tensor together with its gradient buffer and frozen flag.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Self {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Uniform He-style initialization, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
    pub fn he_uniform(shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / fan_in as f64).sqrt() as f32;
        let value = Tensor::from_fn(shape, |_| rng.random_range(-limit..=limit));
        Self::new(value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    Valid,
}

/// Output extent and leading pad for one spatial axis.
pub fn conv_geometry(
    extent: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(Error::shape("conv2d", "stride must be positive"));
    }
    match padding {
        Padding::Valid => {
            if kernel > extent {
                return Err(Error::shape(
                    "conv2d",
                    format!("kernel extent {kernel} exceeds input extent {extent}"),
                ));
            }
            Ok(((extent - kernel) / stride + 1, 0))
        }
        Padding::Same => {
            let out = extent.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(extent);
            if kernel > extent + total {
                return Err(Error::shape(
                    "conv2d",
                    format!("kernel extent {kernel} exceeds padded input extent"),
                ));
            }
            Ok((out, total / 2))
        }
    }
}

/// 2-D convolution, kernels laid out `[k, k, C_in, F]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub kernels: Parameter,
    pub bias: Parameter,
    pub stride: usize,
    pub padding: Padding,
}

impl Conv2d {
    pub fn new(kernels: Tensor, bias: Tensor, stride: usize, padding: Padding) -> Result<Self> {
        let [_, _, _, f] = kernel_dims(&kernels)?;
        if bias.shape() != [f] {
            return Err(Error::shape(
                "conv2d",
                format!("bias shape {:?} does not match {f} filters", bias.shape()),
            ));
        }
        Ok(Self {
            kernels: Parameter::new(kernels),
            bias: Parameter::new(bias),
            stride,
            padding,
        })
    }

    pub fn init(
        kernel: usize,
        in_channels: usize,
        filters: usize,
        stride: usize,
        padding: Padding,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = kernel * kernel * in_channels;
        Self {
            kernels: Parameter::he_uniform(vec![kernel, kernel, in_channels, filters], fan_in, rng),
            bias: Parameter::new(Tensor::zeros(vec![filters])),
            stride,
            padding,
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        conv2d_forward(
            input,
            &self.kernels.value,
            &self.bias.value,
            self.stride,
            self.padding,
        )
    }

    pub fn backward(
        &mut self,
        input: &Tensor,
        grad_out: &Tensor,
        need_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        let (h, w, c) = input.dims3()?;
        let [k, _, _, f] = kernel_dims(&self.kernels.value)?;
        let (oh, pad_t) = conv_geometry(h, k, self.stride, self.padding)?;
        let (ow, pad_l) = conv_geometry(w, k, self.stride, self.padding)?;
        if grad_out.shape() != [oh, ow, f] {
            return Err(Error::shape(
                "conv2d backward",
                format!("gradient shape {:?}, expected {:?}", grad_out.shape(), [oh, ow, f]),
            ));
        }
        let train = self.kernels.trainable;
        let train_bias = self.bias.trainable;
        if !train && !train_bias && !need_input_grad {
            return Ok(None);
        }
        let x = input.data();
        let g = grad_out.data();
        let kern = self.kernels.value.data();
        let mut grad_in = need_input_grad.then(|| vec![0.0f32; x.len()]);
        let kgrad = self.kernels.grad.data_mut();
        let bgrad = self.bias.grad.data_mut();

        for oy in 0..oh {
            for ox in 0..ow {
                let go = &g[(oy * ow + ox) * f..][..f];
                if train_bias {
                    for (b, &v) in bgrad.iter_mut().zip(go) {
                        *b += v;
                    }
                }
                for ky in 0..k {
                    let Some(iy) = tap(oy, ky, self.stride, pad_t, h) else {
                        continue;
                    };
                    for kx in 0..k {
                        let Some(ix) = tap(ox, kx, self.stride, pad_l, w) else {
                            continue;
                        };
                        let px = (iy * w + ix) * c;
                        let kbase = (ky * k + kx) * c * f;
                        for ci in 0..c {
                            let row = kbase + ci * f;
                            if train {
                                let a = x[px + ci];
                                for (kg, &v) in kgrad[row..row + f].iter_mut().zip(go) {
                                    *kg += a * v;
                                }
                            }
                            if let Some(gi) = grad_in.as_mut() {
                                let dot: f32 =
                                    kern[row..row + f].iter().zip(go).map(|(a, b)| a * b).sum();
                                gi[px + ci] += dot;
                            }
                        }
                    }
                }
            }
        }
        grad_in
            .map(|d| Tensor::new(vec![h, w, c], d))
            .transpose()
    }
}

fn kernel_dims(kernels: &Tensor) -> Result<[usize; 4]> {
    match kernels.shape()[..] {
        [kh, kw, c, f] if kh == kw => Ok([kh, kw, c, f]),
        _ => Err(Error::shape(
            "conv2d",
            format!("kernels must be [k,k,C,F], got {:?}", kernels.shape()),
        )),
    }
}

#[inline]
fn tap(out: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
    let pos = (out * stride + k).checked_sub(pad)?;
    (pos < extent).then_some(pos)
}

/// Convolves an `[H, W, C]` input with `[k, k, C, F]` kernels.
pub fn conv2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: Padding,
) -> Result<Tensor> {
    let (h, w, c) = input.dims3()?;
    let [k, _, kc, f] = kernel_dims(kernels)?;
    if kc != c {
        return Err(Error::shape(
            "conv2d",
            format!("input has {c} channels, kernels expect {kc}"),
        ));
    }
    if bias.shape() != [f] {
        return Err(Error::shape(
            "conv2d",
            format!("bias shape {:?} does not match {f} filters", bias.shape()),
        ));
    }
    let (oh, pad_t) = conv_geometry(h, k, stride, padding)?;
    let (ow, pad_l) = conv_geometry(w, k, stride, padding)?;
    let x = input.data();
    let kern = kernels.data();
    // Sums run in f64 and round once per output.
    let mut out = vec![0.0f32; oh * ow * f];
    let mut acc = vec![0.0f64; f];
    for oy in 0..oh {
        for ox in 0..ow {
            for (a, &b) in acc.iter_mut().zip(bias.data()) {
                *a = b as f64;
            }
            for ky in 0..k {
                let Some(iy) = tap(oy, ky, stride, pad_t, h) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = tap(ox, kx, stride, pad_l, w) else {
                        continue;
                    };
                    let px = &x[(iy * w + ix) * c..][..c];
                    let kbase = (ky * k + kx) * c * f;
                    for (ci, &a) in px.iter().enumerate() {
                        let row = &kern[kbase + ci * f..][..f];
                        let a = a as f64;
                        for (o, &kv) in acc.iter_mut().zip(row) {
                            *o += a * kv as f64;
                        }
                    }
                }
            }
            for (o, &a) in out[(oy * ow + ox) * f..][..f].iter_mut().zip(&acc) {
                *o = a as f32;
            }
        }
    }
    Tensor::new(vec![oh, ow, f], out)
}

/// Non-overlapping or strided max pooling; no padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPool2d {
    pub window: usize,
    pub stride: usize,
}

impl MaxPool2d {
    fn geometry(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.window == 0 || self.stride == 0 {
            return Err(Error::shape("maxpool2d", "window and stride must be positive"));
        }
        if self.window > h || self.window > w {
            return Err(Error::shape(
                "maxpool2d",
                format!("window {} larger than input {h}x{w}", self.window),
            ));
        }
        Ok((
            (h - self.window) / self.stride + 1,
            (w - self.window) / self.stride + 1,
        ))
    }

    /// Flat input index of each output's maximum. Ties keep the first
    /// position in row-major window order.
    fn argmax_indices(&self, input: &Tensor) -> Result<(Vec<usize>, [usize; 3])> {
        let (h, w, c) = input.dims3()?;
        let (oh, ow) = self.geometry(h, w)?;
        let x = input.data();
        let mut idx = Vec::with_capacity(oh * ow * c);
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = ((oy * self.stride) * w + ox * self.stride) * c + ch;
                    for wy in 0..self.window {
                        for wx in 0..self.window {
                            let i = ((oy * self.stride + wy) * w + ox * self.stride + wx) * c + ch;
                            if x[i] > x[best] {
                                best = i;
                            }
                        }
                    }
                    idx.push(best);
                }
            }
        }
        Ok((idx, [oh, ow, c]))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (idx, shape) = self.argmax_indices(input)?;
        let x = input.data();
        Tensor::new(shape.to_vec(), idx.into_iter().map(|i| x[i]).collect())
    }

    pub fn backward(&self, input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let (idx, shape) = self.argmax_indices(input)?;
        if grad_out.shape() != shape {
            return Err(Error::shape(
                "maxpool2d backward",
                format!("gradient shape {:?}, expected {shape:?}", grad_out.shape()),
            ));
        }
        let mut grad_in = Tensor::zeros(input.shape().to_vec());
        let gi = grad_in.data_mut();
        for (&i, &g) in idx.iter().zip(grad_out.data()) {
            gi[i] += g;
        }
        Ok(grad_in)
    }
}

pub fn maxpool2d(input: &Tensor, window: usize, stride: usize) -> Result<Tensor> {
    MaxPool2d { window, stride }.forward(input)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Subgradient at exactly zero is 0.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape("relu backward", "input and gradient shapes differ"));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Averages each channel over all spatial positions: `[H, W, C] -> [C]`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let (h, w, c) = input.dims3()?;
    let mut out = vec![0.0f64; c];
    for px in input.data().chunks_exact(c) {
        for (o, &v) in out.iter_mut().zip(px) {
            *o += v as f64;
        }
    }
    let n = (h * w) as f64;
    Ok(Tensor::vector(out.into_iter().map(|v| (v / n) as f32).collect()))
}

pub fn global_avg_pool_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let (h, w, c) = input.dims3()?;
    if grad_out.shape() != [c] {
        return Err(Error::shape("global_avg_pool backward", "gradient must be [C]"));
    }
    let scale = 1.0 / (h * w) as f32;
    let g = grad_out.data();
    Ok(Tensor::from_fn(vec![h, w, c], |i| g[i % c] * scale))
}

/// Fully connected layer, weights `[n, m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Parameter,
    pub bias: Parameter,
}

impl Dense {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        match weights.shape()[..] {
            [_, m] if bias.shape() == [m] => Ok(Self {
                weights: Parameter::new(weights),
                bias: Parameter::new(bias),
            }),
            _ => Err(Error::shape(
                "dense",
                format!(
                    "weights {:?} and bias {:?} are inconsistent",
                    weights.shape(),
                    bias.shape()
                ),
            )),
        }
    }

    pub fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Self {
            weights: Parameter::he_uniform(vec![inputs, outputs], inputs, rng),
            bias: Parameter::new(Tensor::zeros(vec![outputs])),
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        dense_forward(input, &self.weights.value, &self.bias.value)
    }

    pub fn backward(
        &mut self,
        input: &Tensor,
        grad_out: &Tensor,
        need_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        let (n, m) = (self.weights.value.shape()[0], self.weights.value.shape()[1]);
        if input.len() != n || grad_out.len() != m {
            return Err(Error::shape(
                "dense backward",
                format!("input {} / gradient {} vs weights [{n},{m}]", input.len(), grad_out.len()),
            ));
        }
        let g = grad_out.data();
        if self.weights.trainable {
            let wg = self.weights.grad.data_mut();
            for (i, &a) in input.data().iter().enumerate() {
                for (w, &v) in wg[i * m..(i + 1) * m].iter_mut().zip(g) {
                    *w += a * v;
                }
            }
            for (b, &v) in self.bias.grad.data_mut().iter_mut().zip(g) {
                *b += v;
            }
        }
        if !need_input_grad {
            return Ok(None);
        }
        let wv = self.weights.value.data();
        let gi = (0..n)
            .map(|i| wv[i * m..(i + 1) * m].iter().zip(g).map(|(a, b)| a * b).sum())
            .collect();
        Tensor::new(input.shape().to_vec(), gi).map(Some)
    }
}

/// `output[j] = sum_i input[i] * weights[i, j] + bias[j]`. Input of any shape
/// is read as a flat vector.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [n, m] = weights.shape()[..] else {
        return Err(Error::shape(
            "dense",
            format!("weights must be rank 2, got {:?}", weights.shape()),
        ));
    };
    if input.len() != n {
        return Err(Error::shape(
            "dense",
            format!("input length {} does not match weight rows {n}", input.len()),
        ));
    }
    if bias.shape() != [m] {
        return Err(Error::shape(
            "dense",
            format!("bias shape {:?} does not match {m} outputs", bias.shape()),
        ));
    }
    let mut acc: Vec<f64> = bias.data().iter().map(|&b| b as f64).collect();
    let wv = weights.data();
    for (i, &a) in input.data().iter().enumerate() {
        let a = a as f64;
        for (o, &w) in acc.iter_mut().zip(&wv[i * m..(i + 1) * m]) {
            *o += a * w as f64;
        }
    }
    Tensor::new(vec![m], acc.into_iter().map(|v| v as f32).collect())
}
