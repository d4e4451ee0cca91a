use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RpropConfig {
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub delta0: f64,
    pub delta_min: f64,
    pub delta_max: f64,
}

impl Default for RpropConfig {
    fn default() -> Self {
        Self {
            eta_plus: 1.2,
            eta_minus: 0.5,
            delta0: 0.1,
            delta_min: 1e-6,
            delta_max: 50.0,
        }
    }
}

impl RpropConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eta_plus > 1.0
            && self.eta_minus > 0.0
            && self.eta_minus < 1.0
            && self.delta_min > 0.0
            && self.delta_min <= self.delta0
            && self.delta0 <= self.delta_max;
        if !ok {
            return Err(Error::Config(format!("invalid Rprop settings {self:?}")));
        }
        Ok(())
    }
}

/// Per-parameter state of Rprop with weight backtracking.
#[derive(Debug, Clone, PartialEq)]
pub struct RpropState {
    pub cfg: RpropConfig,
    step: Vec<f64>,
    prev_grad: Vec<f64>,
    prev_delta: Vec<f64>,
}

impl RpropState {
    pub fn new(n_params: usize, cfg: RpropConfig) -> Self {
        Self {
            cfg,
            step: vec![cfg.delta0; n_params],
            prev_grad: vec![0.0; n_params],
            prev_delta: vec![0.0; n_params],
        }
    }

    pub fn step_sizes(&self) -> &[f64] {
        &self.step
    }

    /// One update. Only the signs of `grads` and of the stored previous
    /// gradients enter the arithmetic.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.step.len());
        let c = self.cfg;
        for i in 0..params.len() {
            let g = sign(grads[i]);
            match g * sign(self.prev_grad[i]) {
                p if p > 0.0 => {
                    self.step[i] = (self.step[i] * c.eta_plus).min(c.delta_max);
                    let d = -g * self.step[i];
                    params[i] += d;
                    self.prev_delta[i] = d;
                    self.prev_grad[i] = g;
                }
                p if p < 0.0 => {
                    self.step[i] = (self.step[i] * c.eta_minus).max(c.delta_min);
                    params[i] -= self.prev_delta[i];
                    self.prev_delta[i] = 0.0;
                    self.prev_grad[i] = 0.0;
                }
                _ => {
                    let d = -g * self.step[i];
                    params[i] += d;
                    self.prev_delta[i] = d;
                    self.prev_grad[i] = g;
                }
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
