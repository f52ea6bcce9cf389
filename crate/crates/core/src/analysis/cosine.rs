use serde::{Deserialize, Serialize};

use crate::models::{ModelInstance, Probe};
use crate::tensor::Tensor;
use crate::{Error, Result};

const PROBE_CHUNK: usize = 128;

/// Mean clean-vs-adversarial cosine similarity at each probe point, in
/// [`Probe::ALL`] order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineReport {
    pub values: [f64; 4],
}

impl CosineReport {
    pub fn get(&self, probe: Probe) -> f64 {
        self.values[probe as usize]
    }
}

/// `<a,b> / (|a||b|)` accumulated in f64. A pair of zero vectors scores 1; a
/// single zero vector scores 0.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0),
    }
}

/// Flattens each image's activation at every probe point and averages the
/// per-image cosine similarity.
pub fn cosine_probe(model: &ModelInstance, clean: &Tensor, adversarial: &Tensor) -> Result<CosineReport> {
    if clean.shape() != adversarial.shape() {
        return Err(Error::shape(
            "cosine_probe",
            format!("clean {:?} vs adversarial {:?}", clean.shape(), adversarial.shape()),
        ));
    }
    let n = clean.dim(0);
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut sums = [0.0f64; 4];
    for s in (0..n).step_by(PROBE_CHUNK) {
        let e = (s + PROBE_CHUNK).min(n);
        let a = model.forward_with_probes(&clean.slice_batch(s, e))?;
        let b = model.forward_with_probes(&adversarial.slice_batch(s, e))?;
        for probe in Probe::ALL {
            let (x, y) = (a.get(probe), b.get(probe));
            for i in 0..e - s {
                sums[probe as usize] += cosine_similarity(x.item(i), y.item(i));
            }
        }
    }
    Ok(CosineReport {
        values: sums.map(|v| v / n as f64),
    })
}
