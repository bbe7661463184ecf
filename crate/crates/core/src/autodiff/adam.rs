use super::Parameter;
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every parameter from its accumulated gradient. Gradients
    /// are left in place; the parameter list must be the same (in order and
    /// shape) on every call.
    pub fn step(&mut self, params: &mut [&mut Parameter]) -> Result<()> {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.value().len()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(Error::invalid("Adam parameter list changed between steps"));
        }
        for (p, m) in params.iter().zip(&self.first) {
            if p.grad().is_none() {
                return Err(Error::invalid(format!("parameter `{}` has no gradient", p.name())));
            }
            if m.len() != p.value().len() {
                return Err(Error::invalid(format!("parameter `{}` changed size", p.name())));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let grad = p.grad().expect("checked above").data().to_vec();
            let values = p.value_mut().data_mut();
            for i in 0..values.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
