use super::{Rng, Tensor};
use crate::{Error, Result};

/// Glorot/Xavier uniform samples on `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_init(rng: &mut Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Result<Tensor> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::InvalidArgument("glorot_init needs positive fans".into()));
    }
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform(-bound, bound)).collect();
    Tensor::new(shape, data)
}
