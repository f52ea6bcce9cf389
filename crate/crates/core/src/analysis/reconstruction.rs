use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::models::{evaluate, ModelInstance};
use crate::spectral::{frequency_reconstruct, Reconstruction};
use crate::tensor::Tensor;
use crate::Result;

/// Accuracy on original, low-frequency and high-frequency versions of clean
/// and adversarial images.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionTable {
    pub all_clean: f32,
    pub all_adversarial: f32,
    pub low_clean: f32,
    pub low_adversarial: f32,
    pub high_clean: f32,
    pub high_adversarial: f32,
}

/// `adversarial` must be aligned item-for-item with `data`.
pub fn reconstruction_eval(model: &ModelInstance, data: &Dataset, adversarial: &Tensor) -> Result<ReconstructionTable> {
    let adv = data.with_images(adversarial.clone())?;
    let score = |d: &Dataset, mode: Reconstruction| -> Result<f32> {
        evaluate(model, &d.with_images(frequency_reconstruct(&d.images, mode)?)?)
    };
    Ok(ReconstructionTable {
        all_clean: evaluate(model, data)?,
        all_adversarial: evaluate(model, &adv)?,
        low_clean: score(data, Reconstruction::Low)?,
        low_adversarial: score(&adv, Reconstruction::Low)?,
        high_clean: score(data, Reconstruction::High)?,
        high_adversarial: score(&adv, Reconstruction::High)?,
    })
}
