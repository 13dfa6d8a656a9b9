//! AdamW with decoupled weight decay and a cosine learning-rate schedule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::tape::ParamStore;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 0.000668,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 3.53e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig, params: &ParamStore) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    /// One update at learning rate `lr`. Non-finite gradients abort the step
    /// before any parameter changes.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Matrix], lr: f64) -> Result<()> {
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NaNGradient(params.names[i].clone()));
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let p = p.as_mut_slice();
            let (m, v) = (m.as_mut_slice(), v.as_mut_slice());
            for (k, &gk) in g.as_slice().iter().enumerate() {
                p[k] -= lr * c.weight_decay * p[k];
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] -= lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

pub fn cosine_lr(step: usize, total_steps: usize, base_lr: f64) -> f64 {
    if total_steps == 0 {
        return base_lr;
    }
    let t = step.min(total_steps) as f64 / total_steps as f64;
    0.5 * base_lr * (1.0 + (PI * t).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> ParamStore {
        let mut s = ParamStore::default();
        s.push("w", Matrix::from_vec(1, 2, vec![v, -v]));
        s
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = one(0.7);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut opt = OptimizerState::new(cfg, &p);
        opt.step(&mut p, &[Matrix::zeros(1, 2)], 0.01).unwrap();
        assert_eq!(p.tensors[0].as_slice(), &[0.7, -0.7]);
    }

    #[test]
    fn decay_is_decoupled() {
        let mut p = one(2.0);
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..AdamWConfig::default()
        };
        let mut opt = OptimizerState::new(cfg, &p);
        opt.step(&mut p, &[Matrix::zeros(1, 2)], 0.5).unwrap();
        let expected = 2.0 * (1.0 - 0.5 * 0.1);
        assert!((p.tensors[0].get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn first_step_is_sign_scaled() {
        let g = 0.3;
        let lr = 1e-3;
        let mut p = one(1.0);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut opt = OptimizerState::new(cfg, &p);
        opt.step(&mut p, &[Matrix::from_vec(1, 2, vec![g, -g])], lr).unwrap();
        let expected = 1.0 - lr * g / (g + 1e-8);
        assert!((p.tensors[0].get(0, 0) - expected).abs() < 1e-15);
        assert!((p.tensors[0].get(0, 1) - (-expected)).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut p = one(1.0);
        let mut opt = OptimizerState::new(AdamWConfig::default(), &p);
        let err = opt.step(&mut p, &[Matrix::from_vec(1, 2, vec![f64::NAN, 0.0])], 0.1);
        assert!(matches!(err, Err(Error::NaNGradient(name)) if name == "w"));
        assert_eq!(p.tensors[0].get(0, 0), 1.0);
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn cosine_schedule_points() {
        assert_eq!(cosine_lr(0, 100, 0.5), 0.5);
        assert!(cosine_lr(100, 100, 0.5).abs() < 1e-17);
        assert!((cosine_lr(50, 100, 0.5) - 0.25).abs() < 1e-15);
    }
}
