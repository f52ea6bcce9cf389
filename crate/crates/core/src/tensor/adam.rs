use super::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are allocated on the first
/// step and must keep the same shapes afterwards.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

/// One parameter's share of an update. Entries whose `frozen` flag is set are
/// left bitwise untouched, moments included.
pub struct ParamUpdate<'a> {
    pub value: &'a mut Tensor,
    pub grad: &'a Tensor,
    pub frozen: Option<&'a [bool]>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, param: usize) -> Option<&[f32]> {
        self.first.get(param).map(Vec::as_slice)
    }

    pub fn second_moment(&self, param: usize) -> Option<&[f32]> {
        self.second.get(param).map(Vec::as_slice)
    }

    /// Applies one update to every parameter. Nothing is modified if any
    /// shape disagrees or any gradient entry is non-finite.
    pub fn step(&mut self, updates: &mut [ParamUpdate<'_>]) -> Result<()> {
        if self.first.is_empty() {
            self.first = updates.iter().map(|u| vec![0.0; u.value.len()]).collect();
            self.second = self.first.clone();
        }
        if updates.len() != self.first.len() {
            return Err(Error::shape(
                "adam_step",
                format!("{} parameters, state holds {}", updates.len(), self.first.len()),
            ));
        }
        for (i, u) in updates.iter().enumerate() {
            if u.value.shape() != u.grad.shape() || self.first[i].len() != u.value.len() {
                return Err(Error::shape(
                    "adam_step",
                    format!(
                        "parameter {i}: value {:?}, gradient {:?}",
                        u.value.shape(),
                        u.grad.shape()
                    ),
                ));
            }
            if u.frozen.is_some_and(|m| m.len() != u.value.len()) {
                return Err(Error::shape("adam_step", format!("parameter {i}: mask length")));
            }
            if !u.grad.all_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter {i}")));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, u) in updates.iter_mut().enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            let grad = u.grad.data();
            let frozen = u.frozen;
            for (j, p) in u.value.data_mut().iter_mut().enumerate() {
                if frozen.is_some_and(|f| f[j]) {
                    continue;
                }
                let g = grad[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
