//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 0.002677,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid AdamW settings {self:?}")))
        }
    }
}

/// Moment accumulators, one flat buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig, shapes: &[usize]) -> Self {
        OptimizerState {
            config,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update of every tensor in place.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid("tensor count does not match optimizer state"));
        }
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::invalid(format!("tensor {i} shape does not match optimizer state")));
            }
        }
        let c = self.config;
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= c.learning_rate * (mh / (vh.sqrt() + c.eps) + c.weight_decay * p[j]);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64, wd: f64) -> AdamWConfig {
        AdamWConfig {
            learning_rate: lr,
            weight_decay: wd,
            ..AdamWConfig::default()
        }
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut s = OptimizerState::new(cfg(0.1, 0.0), &[3]);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..5 {
            s.step(vec![&mut p], vec![&[0.0; 3]]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.step, 5);
    }

    #[test]
    fn decay_only_step() {
        let mut s = OptimizerState::new(cfg(0.1, 0.01), &[1]);
        let mut p = vec![1.0];
        s.step(vec![&mut p], vec![&[0.0]]).unwrap();
        assert!((p[0] - 0.999).abs() < 1e-12);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let mut s = OptimizerState::new(cfg(0.01, 0.0), &[1]);
        let mut p = vec![0.0];
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = p[0];
            s.step(vec![&mut p], vec![&[3.0]]).unwrap();
            last = before - p[0];
        }
        assert!((last - 0.01).abs() < 1e-8);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        // bias correction makes the first step exactly lr·g/(|g| + ε)
        let mut s = OptimizerState::new(cfg(0.05, 0.0), &[2]);
        let mut p = vec![0.0, 0.0];
        s.step(vec![&mut p], vec![&[2.0, -0.5]]).unwrap();
        assert!((p[0] + 0.05).abs() < 1e-9);
        assert!((p[1] - 0.05).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        let mut s = OptimizerState::new(cfg(0.1, 0.0), &[2]);
        let mut p = vec![0.0; 3];
        assert!(s.step(vec![&mut p], vec![&[0.0; 3]]).is_err());
        assert!(cfg(-1.0, 0.0).validate().is_err());
        assert!(AdamWConfig::default().validate().is_ok());
    }
}
