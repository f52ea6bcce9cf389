//! Seeded synthetic images whose class is carried by a low-frequency block
//! pattern.
//!
//! Every class owns a prototype: random coefficients on the lowest zigzag
//! ranks of every block and colour, plus a faint texture on the high ranks
//! that is predictive but small next to an L-infinity budget of 0.01. A
//! sample is its class prototype with a random contrast, plus nuisance
//! coefficients with a `1/f` falloff over all 64 frequencies, plus white
//! pixel noise. `noise` scales all three perturbations, so `noise = 0`
//! yields the prototypes exactly.

use super::Dataset;
use crate::spectral::{block_dct_inverse, zigzag_order, FrequencyTensor, BLOCK, CHANNELS, COLORS, LEVEL_SHIFT};
use crate::tensor::{Rng, Tensor};
use crate::{Error, Result};

/// Zigzag ranks that carry class information.
const SIGNAL_RANKS: usize = 6;
const DC_AMPLITUDE: f32 = 0.1;
const AC_AMPLITUDE: f32 = 0.05;
const CONTRAST_JITTER: f32 = 0.2;
const NUISANCE_AMPLITUDE: f32 = 0.5;
const PIXEL_NOISE: f32 = 0.02;
/// Zigzag ranks of the weak class-specific texture.
const TEXTURE_RANKS: std::ops::Range<usize> = 28..64;
const TEXTURE_AMPLITUDE: f32 = 0.03;

fn prototype_coefficients(num_classes: usize, blocks: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = Rng::new(seed).split_named("synthetic.prototypes");
    (0..num_classes)
        .map(|_| {
            let mut coeffs = vec![0.0f32; CHANNELS * blocks];
            for rank in 0..SIGNAL_RANKS {
                let amp = if rank == 0 { DC_AMPLITUDE } else { AC_AMPLITUDE };
                for color in 0..COLORS {
                    let ch = FrequencyTensor::channel(rank, color);
                    for b in 0..blocks {
                        coeffs[ch * blocks + b] = amp * rng.normal();
                    }
                }
            }
            for rank in TEXTURE_RANKS {
                for color in 0..COLORS {
                    let ch = FrequencyTensor::channel(rank, color);
                    for b in 0..blocks {
                        coeffs[ch * blocks + b] = TEXTURE_AMPLITUDE * rng.normal();
                    }
                }
            }
            coeffs
        })
        .collect()
}

fn to_images(coeffs: Vec<f32>, n: usize, height: usize, width: usize) -> Result<Tensor> {
    let freq = FrequencyTensor::new(Tensor::new(&[n, CHANNELS, height / BLOCK, width / BLOCK], coeffs)?)?;
    Ok(block_dct_inverse(&freq, LEVEL_SHIFT, true))
}

fn check(height: usize, width: usize, num_classes: usize) -> Result<()> {
    if !height.is_multiple_of(BLOCK) || !width.is_multiple_of(BLOCK) || height == 0 || width == 0 {
        return Err(Error::NotBlockAligned { height, width });
    }
    if num_classes < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    Ok(())
}

/// Noise-free class prototypes `[K, 3, H, W]`.
pub fn class_prototypes(num_classes: usize, height: usize, width: usize, seed: u64) -> Result<Tensor> {
    check(height, width, num_classes)?;
    let blocks = (height / BLOCK) * (width / BLOCK);
    let coeffs = prototype_coefficients(num_classes, blocks, seed).concat();
    to_images(coeffs, num_classes, height, width)
}

/// `items` images with balanced labels (`i mod K`).
pub fn synthetic_dataset(
    items: usize,
    height: usize,
    width: usize,
    num_classes: usize,
    noise: f32,
    seed: u64,
) -> Result<Dataset> {
    check(height, width, num_classes)?;
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise {noise} must be finite and >= 0")));
    }
    let blocks = (height / BLOCK) * (width / BLOCK);
    let protos = prototype_coefficients(num_classes, blocks, seed);
    let order = zigzag_order();
    let falloff: Vec<f32> = (0..CHANNELS)
        .map(|ch| {
            let (u, v) = order.at(ch / COLORS);
            NUISANCE_AMPLITUDE / (1 + u + v) as f32
        })
        .collect();
    let mut rng = Rng::new(seed).split_named("synthetic.samples");
    let labels: Vec<usize> = (0..items).map(|i| i % num_classes).collect();
    let mut coeffs = Vec::with_capacity(items * CHANNELS * blocks);
    for &label in &labels {
        let contrast = 1.0 + noise * CONTRAST_JITTER * rng.uniform(-1.0, 1.0);
        for (ch, &scale) in falloff.iter().enumerate() {
            for b in 0..blocks {
                let nuisance = noise * scale * rng.normal();
                coeffs.push(protos[label][ch * blocks + b] * contrast + nuisance);
            }
        }
    }
    let mut images = to_images(coeffs, items, height, width)?;
    if noise > 0.0 {
        for p in images.data_mut() {
            *p = (*p + noise * PIXEL_NOISE * rng.normal()).clamp(0.0, 1.0);
        }
    }
    Dataset::new(images, labels, num_classes)
}
