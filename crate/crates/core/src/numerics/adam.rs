use serde::{Deserialize, Serialize};

use super::layers::Parameter;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for a single parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Tensor,
    pub second_moment: Tensor,
    pub step_count: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn for_parameter(param: &Parameter, config: AdamConfig) -> Self {
        let shape = param.value.shape().to_vec();
        Self {
            first_moment: Tensor::zeros(shape.clone()),
            second_moment: Tensor::zeros(shape),
            step_count: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update. Frozen parameters are left untouched and
/// their state does not advance.
pub fn adam_step(param: &mut Parameter, state: &mut AdamState) -> Result<()> {
    if state.first_moment.shape() != param.value.shape()
        || state.second_moment.shape() != param.value.shape()
        || param.grad.shape() != param.value.shape()
    {
        return Err(Error::shape(
            "adam_step",
            format!(
                "state {:?} does not match parameter {:?}",
                state.first_moment.shape(),
                param.value.shape()
            ),
        ));
    }
    if !param.trainable {
        return Ok(());
    }
    state.step_count += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step_count.min(i32::MAX as u64) as i32;
    let correction1 = 1.0 - beta1.powi(t);
    let correction2 = 1.0 - beta2.powi(t);
    let (b1, b2) = (beta1 as f32, beta2 as f32);

    let m = state.first_moment.data_mut();
    let v = state.second_moment.data_mut();
    let g = param.grad.data();
    for (i, w) in param.value.data_mut().iter_mut().enumerate() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let m_hat = m[i] as f64 / correction1;
        let v_hat = v[i] as f64 / correction2;
        *w -= (learning_rate * m_hat / (v_hat.sqrt() + epsilon)) as f32;
    }
    Ok(())
}

/// Adam over an ordered list of parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Parameter>, config: AdamConfig) -> Self {
        Self {
            states: params
                .into_iter()
                .map(|p| AdamState::for_parameter(p, config))
                .collect(),
        }
    }

    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Parameter>) -> Result<()> {
        let mut count = 0;
        for (param, state) in params.into_iter().zip(self.states.iter_mut()) {
            adam_step(param, state)?;
            count += 1;
        }
        if count != self.states.len() {
            return Err(Error::shape(
                "adam",
                format!("{count} parameters for {} optimizer states", self.states.len()),
            ));
        }
        Ok(())
    }
}
