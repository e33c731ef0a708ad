//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use super::graph::ParamGrads;
use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed steps.
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        Self::with_constants(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_constants(params: &ParamSet, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn first_moment(&self, index: usize) -> &[f64] {
        &self.m[index]
    }

    pub fn second_moment(&self, index: usize) -> &[f64] {
        &self.v[index]
    }

    /// One update of every parameter; a missing gradient counts as zero.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamGrads, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if grads.0.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::dim(
                "adam",
                format!(
                    "{} parameters, {} gradients, {} moment slots",
                    params.len(),
                    grads.0.len(),
                    self.m.len()
                ),
            ));
        }
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(&grads.0)
            .zip(self.m.iter().zip(&self.v))
        {
            if m.len() != p.value.len() || v.len() != p.value.len() {
                return Err(Error::dim(&p.name, "moment shape differs from parameter"));
            }
            if let Some(g) = g {
                if g.len() != p.value.len() {
                    return Err(Error::dim(&p.name, "gradient shape differs from parameter"));
                }
            }
        }
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(&grads.0)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let gd: Option<&Tensor> = g.as_ref();
            let values = p.value.data_mut();
            for j in 0..values.len() {
                let gj = gd.map_or(0.0, |t| t.data()[j]);
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                values[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
