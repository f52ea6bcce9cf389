//! Stem kernels mixed from the fixed DCT bank and a learned C88 bank.

use crate::spectral::{KernelBank, CHANNELS};
use crate::tensor::Tensor;
use crate::{Error, Result};

fn check(k_sf: &KernelBank, k_88: &Tensor, weight: f32, name: &str) -> Result<()> {
    if k_sf.tensor().shape() != k_88.shape() {
        return Err(Error::shape(
            "stem mixture",
            format!("SF bank {:?} vs C88 kernels {:?}", k_sf.tensor().shape(), k_88.shape()),
        ));
    }
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::InvalidArgument(format!("{name} = {weight} outside [0, 1]")));
    }
    Ok(())
}

/// Elementwise `alpha * K_SF + (1 - alpha) * K_88`.
pub fn make_interpolated_kernels(k_sf: &KernelBank, k_88: &Tensor, alpha: f32) -> Result<Tensor> {
    check(k_sf, k_88, alpha, "alpha")?;
    k_sf.tensor().zip_map(k_88, |s, c| alpha * s + (1.0 - alpha) * c)
}

/// Number of leading (lowest-frequency) filters taken from the SF bank.
pub fn substituted_channel_count(beta: f32) -> usize {
    ((f64::from(beta) * CHANNELS as f64).round() as usize).min(CHANNELS)
}

/// The first `round(beta * 192)` filters come from `K_SF`, the rest from
/// `K_88`.
pub fn make_substituted_kernels(k_sf: &KernelBank, k_88: &Tensor, beta: f32) -> Result<Tensor> {
    check(k_sf, k_88, beta, "beta")?;
    let split = substituted_channel_count(beta) * k_88.item_len();
    let mut data = k_sf.tensor().data()[..split].to_vec();
    data.extend_from_slice(&k_88.data()[split..]);
    Tensor::new(k_88.shape(), data)
}
