use serde::{Deserialize, Serialize};

use crate::spectral::{block_dct_forward, LEVEL_SHIFT};
use crate::tensor::Tensor;
use crate::Result;

pub const HISTOGRAM_BINS: usize = 5;
pub const HISTOGRAM_EDGES: [f32; HISTOGRAM_BINS + 1] = [-3.0, -1.8, -0.6, 0.6, 1.8, 3.0];

/// Fraction of an image's block-DCT coefficients in each bin. Bins are
/// half-open `[lo, hi)`; values beyond either outer edge fall in the edge bin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyHistogram {
    pub bins: [f64; HISTOGRAM_BINS],
}

impl FrequencyHistogram {
    pub fn from_values(values: &[f32]) -> Self {
        let mut counts = [0usize; HISTOGRAM_BINS];
        for &v in values {
            counts[bin_of(v)] += 1;
        }
        let total = values.len().max(1) as f64;
        Self {
            bins: counts.map(|c| c as f64 / total),
        }
    }

    pub fn center(&self) -> f64 {
        self.bins[HISTOGRAM_BINS / 2]
    }
}

fn bin_of(v: f32) -> usize {
    HISTOGRAM_EDGES[1..HISTOGRAM_BINS]
        .iter()
        .position(|&edge| v < edge)
        .unwrap_or(HISTOGRAM_BINS - 1)
}

/// One histogram per image over all `192 * (H/8) * (W/8)` coefficients.
pub fn frequency_histogram(images: &Tensor) -> Result<Vec<FrequencyHistogram>> {
    let freq = block_dct_forward(images, LEVEL_SHIFT)?;
    let t = freq.tensor();
    Ok((0..t.dim(0))
        .map(|i| FrequencyHistogram::from_values(t.item(i)))
        .collect())
}
