//! Adam for the outer parameter loop, plain gradient descent for the inner
//! conjugate loop.

use serde::{Deserialize, Serialize};

use crate::potential::ParamTensors;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// Moment estimates for one parameter set, stored tensor by tensor in the
/// order given by [`ParamTensors::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    hyper: AdamHyper,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: ParamTensors>(params: &P, hyper: AdamHyper) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            hyper,
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn hyper(&self) -> &AdamHyper {
        &self.hyper
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    /// One bias-corrected Adam update of `params` in place. The constraint
    /// projection is left to the caller.
    ///
    /// The gradient is validated before anything is modified, so on error
    /// both `self` and `params` are unchanged.
    pub fn step<P: ParamTensors, G: ParamTensors>(&mut self, params: &mut P, grads: &G) -> Result<()> {
        let grad_tensors = grads.tensors();
        if grad_tensors.len() != self.first_moment.len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient has {} tensors, optimizer state has {}",
                grad_tensors.len(),
                self.first_moment.len()
            )));
        }
        for ((name, g), m) in grad_tensors.iter().zip(&self.first_moment) {
            if g.len() != m.len() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor `{name}` has {} entries, expected {}",
                    g.len(),
                    m.len()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { tensor: name.clone() });
            }
        }
        let mut param_tensors = params.tensors_mut();
        if param_tensors.len() != grad_tensors.len()
            || param_tensors.iter().zip(&grad_tensors).any(|(p, g)| p.1.len() != g.1.len())
        {
            return Err(Error::ShapeMismatch("parameters and gradient are not congruent".into()));
        }

        self.step_count += 1;
        let AdamHyper {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.hyper;
        let t = self.step_count as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in param_tensors
            .iter_mut()
            .zip(&grad_tensors)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for (((theta, &gi), mi), vi) in p.1.iter_mut().zip(g.1).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *theta -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step<P: ParamTensors + Clone, G: ParamTensors>(
    state: &AdamState,
    params: &P,
    grads: &G,
) -> Result<(AdamState, P)> {
    let mut state = state.clone();
    let mut params = params.clone();
    state.step(&mut params, grads)?;
    Ok((state, params))
}

/// `x − step_size · grad`, in place.
pub fn gd_step_in_place(x: &mut [f64], grad: &[f64], step_size: f64) {
    for (xi, gi) in x.iter_mut().zip(grad) {
        *xi -= step_size * gi;
    }
}

pub fn gd_step(x: &[f64], grad: &[f64], step_size: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    gd_step_in_place(&mut out, grad, step_size);
    out
}
