use sha2::{Digest, Sha256};

use super::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// A named trainable tensor with its gradient accumulator.
///
/// The gradient is `None` until the first accumulation; after that it is
/// summed into until [`Parameter::zero_grad`] is called.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    name: String,
    value: Tensor,
    grad: Option<Tensor>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self {
            name: name.into(),
            value,
            grad: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor {
        &mut self.value
    }

    pub fn grad(&self) -> Option<&Tensor> {
        self.grad.as_ref()
    }

    /// Places the value on `tape`, tracked or as a constant.
    pub fn bind(&self, tape: &mut Tape, track: bool) -> Var {
        tape.leaf(self.value.clone(), track)
    }

    /// Adds `g` into the gradient buffer.
    pub fn accumulate(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.value.len() {
            return Err(Error::shape(
                "accumulate",
                format!("{} gradient of length {} for {} values", self.name, g.len(), self.value.len()),
            ));
        }
        let buf = self
            .grad
            .get_or_insert_with(|| Tensor::zeros(self.value.shape()));
        for (d, s) in buf.data_mut().iter_mut().zip(g) {
            *d += s;
        }
        Ok(())
    }

    /// Adds `g` into rows `rows` of the gradient (first axis).
    pub fn accumulate_rows(&mut self, rows: &[usize], g: &[f64]) -> Result<()> {
        let total_rows = self.value.shape().first().copied().unwrap_or(1);
        let width = self.value.len() / total_rows.max(1);
        if g.len() != rows.len() * width {
            return Err(Error::shape("accumulate_rows", format!("{} row gradient size", self.name)));
        }
        let buf = self
            .grad
            .get_or_insert_with(|| Tensor::zeros(self.value.shape()));
        for (k, &r) in rows.iter().enumerate() {
            let dst = &mut buf.data_mut()[r * width..(r + 1) * width];
            for (d, s) in dst.iter_mut().zip(&g[k * width..(k + 1) * width]) {
                *d += s;
            }
        }
        Ok(())
    }

    /// Accumulates the gradient of `var` if the tape produced one.
    pub fn accumulate_from(&mut self, grads: &Gradients, var: Var) -> Result<()> {
        match grads.get(var) {
            Some(g) => self.accumulate(g),
            None => Ok(()),
        }
    }

    /// Resets the accumulated gradient to zeros.
    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.data_mut().fill(0.0),
            None => self.grad = Some(Tensor::zeros(self.value.shape())),
        }
    }
}

/// SHA-256 over the bit patterns of the given parameters' values.
pub fn fingerprint<'a>(params: impl IntoIterator<Item = &'a Parameter>) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.name.as_bytes());
        for v in p.value.data() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}
