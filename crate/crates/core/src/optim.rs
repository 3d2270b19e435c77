//! AdamW with decoupled weight decay.

use crate::alignment::{ProjectionGrads, ProjectionParams};
use crate::error::{Error, Result};
use crate::fusion::{GateParams, Head, LinearHead};

/// A flat view over parameter tensors. The flag marks tensors subject to
/// weight decay (matrices, not biases).
pub trait ParamTensors {
    fn tensors(&self) -> Vec<(&[f64], bool)>;
    fn tensors_mut(&mut self) -> Vec<(&mut [f64], bool)>;
}

impl ParamTensors for Head {
    fn tensors(&self) -> Vec<(&[f64], bool)> {
        Head::tensors(self)
    }
    fn tensors_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        Head::tensors_mut(self)
    }
}

impl ParamTensors for GateParams {
    fn tensors(&self) -> Vec<(&[f64], bool)> {
        GateParams::tensors(self)
    }
    fn tensors_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        GateParams::tensors_mut(self)
    }
}

impl ParamTensors for LinearHead {
    fn tensors(&self) -> Vec<(&[f64], bool)> {
        LinearHead::tensors(self)
    }
    fn tensors_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        LinearHead::tensors_mut(self)
    }
}

impl ParamTensors for ProjectionParams {
    fn tensors(&self) -> Vec<(&[f64], bool)> {
        vec![
            (self.v_dt.as_slice().expect("standard layout"), true),
            (self.v_i.as_slice().expect("standard layout"), true),
        ]
    }
    fn tensors_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        vec![
            (self.v_dt.as_slice_mut().expect("standard layout"), true),
            (self.v_i.as_slice_mut().expect("standard layout"), true),
        ]
    }
}

impl ParamTensors for ProjectionGrads {
    fn tensors(&self) -> Vec<(&[f64], bool)> {
        vec![
            (self.v_dt.as_slice().expect("standard layout"), true),
            (self.v_i.as_slice().expect("standard layout"), true),
        ]
    }
    fn tensors_mut(&mut self) -> Vec<(&mut [f64], bool)> {
        vec![
            (self.v_dt.as_slice_mut().expect("standard layout"), true),
            (self.v_i.as_slice_mut().expect("standard layout"), true),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn step<P: ParamTensors, G: ParamTensors>(&mut self, params: &mut P, grads: &G) -> Result<()> {
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        if grads.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                found: grads.len(),
            });
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let decay = 1.0 - self.lr * self.weight_decay;
        for (i, ((p, decays), (g, _))) in params.iter_mut().zip(&grads).enumerate() {
            if p.len() != g.len() || p.len() != self.m[i].len() {
                return Err(Error::DimensionMismatch {
                    expected: p.len(),
                    found: g.len(),
                });
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                if *decays {
                    p[j] *= decay;
                }
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::LinearHead;

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut h = LinearHead::zeros(4);
        h.w.fill(0.25);
        let before = h.clone();
        let mut g = LinearHead::zeros(4);
        g.w.fill(1.0);
        g.b.fill(-2.0);
        let mut opt = AdamW::new(0.0, 0.01);
        for _ in 0..10 {
            opt.step(&mut h, &g).unwrap();
        }
        assert_eq!(h, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // bias-corrected first step is lr * sign(g) up to eps
        let mut h = LinearHead::zeros(1);
        let mut g = LinearHead::zeros(1);
        g.w.fill(3.0);
        g.b.fill(-0.5);
        let mut opt = AdamW::new(0.1, 0.0);
        opt.step(&mut h, &g).unwrap();
        assert!((h.w[[0, 0]] + 0.1).abs() < 1e-8);
        assert!((h.b[0] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut h = LinearHead::zeros(1);
        h.b.fill(5.0);
        let mut opt = AdamW::new(0.05, 0.0);
        for _ in 0..2000 {
            let mut g = LinearHead::zeros(1);
            g.b = h.b.mapv(|x| 2.0 * (x - 1.0));
            opt.step(&mut h, &g).unwrap();
        }
        assert!((h.b[0] - 1.0).abs() < 1e-2, "{}", h.b[0]);
    }
}
