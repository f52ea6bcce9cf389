//! Untargeted L-infinity PGD in pixel and block-DCT space.
//!
//! Attacks always run the model with frozen batch-norm statistics, start at
//! the clean image and use `sign(0) = 0`, so a zero gradient is a fixed point.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::models::{train, AdversarialSettings, BnMode, EpochMetrics, ModelInstance, TrainConfig};
use crate::spectral::{block_dct_forward, block_dct_inverse, FrequencyTensor, LEVEL_SHIFT};
use crate::tensor::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Images per tape; bounds im2col memory.
const ATTACK_CHUNK: usize = 128;

/// A fixed differentiable image classifier.
pub trait Classifier: Sync {
    fn num_classes(&self) -> usize;

    /// Records the logits of `input` (`[N,3,H,W]`) on `tape`.
    fn record_logits(&self, tape: &mut Tape, input: Var) -> Result<Var>;

    fn logits(&self, images: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(images.clone());
        let l = self.record_logits(&mut tape, x)?;
        Ok(tape.value(l).clone())
    }
}

impl Classifier for ModelInstance {
    fn num_classes(&self) -> usize {
        self.spec().num_classes
    }

    fn record_logits(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        Ok(self.record(tape, input, BnMode::Eval, false)?.logits)
    }

    fn logits(&self, images: &Tensor) -> Result<Tensor> {
        ModelInstance::logits(self, images)
    }
}

/// Argmax predictions, lowest index on ties.
pub fn classify<C: Classifier + ?Sized>(model: &C, images: &Tensor) -> Result<Vec<usize>> {
    let n = images.dim(0);
    let mut out = Vec::with_capacity(n);
    for s in (0..n).step_by(ATTACK_CHUNK) {
        let logits = model.logits(&images.slice_batch(s, (s + ATTACK_CHUNK).min(n)))?;
        let k = logits.dim(1);
        out.extend(logits.data().chunks(k).map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        }));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackDomain {
    Pixel,
    Frequency,
}

impl fmt::Display for AttackDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackDomain::Pixel => "pixel",
            AttackDomain::Frequency => "frequency",
        })
    }
}

impl FromStr for AttackDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixel" => Ok(AttackDomain::Pixel),
            "frequency" => Ok(AttackDomain::Frequency),
            other => Err(Error::InvalidArgument(format!("unknown attack domain {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub domain: AttackDomain,
    pub epsilon: f32,
    pub eta: f32,
    pub steps: usize,
}

/// Default number of PGD iterations.
pub const DEFAULT_STEPS: usize = 100;

/// Pixel budgets of the transfer experiment.
pub const TRANSFER_EPSILONS: [f32; 3] = [0.1, 0.2, 0.3];

/// Step size paired with a budget: 0.001 for 0.003, 0.003 for 0.01, and
/// `epsilon / 10` for anything else (the transfer grid uses the latter).
pub fn default_eta(epsilon: f32) -> f32 {
    if (epsilon - 0.003).abs() < 1e-9 {
        0.001
    } else if (epsilon - 0.01).abs() < 1e-9 {
        0.003
    } else {
        epsilon / 10.0
    }
}

impl AttackConfig {
    pub fn new(domain: AttackDomain, epsilon: f32) -> Self {
        Self {
            domain,
            epsilon,
            eta: default_eta(epsilon),
            steps: DEFAULT_STEPS,
        }
    }

    pub fn pixel(epsilon: f32) -> Self {
        Self::new(AttackDomain::Pixel, epsilon)
    }

    pub fn frequency(epsilon: f32) -> Self {
        Self::new(AttackDomain::Frequency, epsilon)
    }

    pub fn with_steps(self, steps: usize) -> Self {
        Self { steps, ..self }
    }

    pub fn with_eta(self, eta: f32) -> Self {
        Self { eta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        // eta = 0 is accepted: it is the degenerate no-op attack.
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0 && self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "attack budget must be finite and non-negative (epsilon {}, eta {})",
                self.epsilon, self.eta
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("attack needs at least one step".into()));
        }
        Ok(())
    }
}

/// Result of attacking a batch.
#[derive(Clone, Debug)]
pub struct AdversarialBatch {
    pub original: Tensor,
    pub adversarial: Tensor,
    pub labels: Vec<usize>,
    pub clean_predictions: Vec<usize>,
    pub adversarial_predictions: Vec<usize>,
    pub success: Vec<bool>,
    /// Per-image L-infinity distance in the attack's domain.
    pub distance: Vec<f32>,
    pub config: AttackConfig,
}

fn accuracy(preds: &[usize], labels: &[usize]) -> f32 {
    if labels.is_empty() {
        return 0.0;
    }
    preds.iter().zip(labels).filter(|(p, l)| p == l).count() as f32 / labels.len() as f32
}

impl AdversarialBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn clean_accuracy(&self) -> f32 {
        accuracy(&self.clean_predictions, &self.labels)
    }

    pub fn attacked_accuracy(&self) -> f32 {
        accuracy(&self.adversarial_predictions, &self.labels)
    }

    pub fn max_distance(&self) -> f32 {
        self.distance.iter().fold(0.0, |a, &d| a.max(d))
    }
}

fn check_batch<C: Classifier + ?Sized>(model: &C, images: &Tensor, labels: &[usize]) -> Result<()> {
    let s = images.shape();
    if s.len() != 4 || s[0] != labels.len() {
        return Err(Error::shape(
            "attack",
            format!("{} labels for images {s:?}", labels.len()),
        ));
    }
    let k = model.num_classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!("label {bad} outside {k} classes")));
    }
    Ok(())
}

fn map_chunks<F>(images: &Tensor, labels: &[usize], f: F) -> Result<Tensor>
where
    F: Fn(&Tensor, &[usize]) -> Result<Tensor> + Sync,
{
    let n = labels.len();
    let starts: Vec<usize> = (0..n).step_by(ATTACK_CHUNK).collect();
    let parts: Vec<Tensor> = starts
        .par_iter()
        .map(|&s| {
            let e = (s + ATTACK_CHUNK).min(n);
            f(&images.slice_batch(s, e), &labels[s..e])
        })
        .collect::<Result<_>>()?;
    if parts.is_empty() {
        return Ok(images.clone());
    }
    Tensor::concat_batch(&parts)
}

/// Gradient of the mean cross-entropy with respect to the input pixels, with
/// frozen batch-norm statistics.
pub fn input_gradient<C: Classifier + ?Sized>(model: &C, images: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.leaf(images.clone());
    let logits = model.record_logits(&mut tape, x)?;
    let loss = tape.softmax_xent(logits, labels)?;
    let mut grads = tape.backward(loss)?;
    let g = grads.take(x)?;
    if !g.all_finite() {
        return Err(Error::NonFinite("attack gradient".into()));
    }
    Ok(g)
}

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn pixel_chunk<C: Classifier + ?Sized>(
    model: &C,
    x0: &Tensor,
    labels: &[usize],
    eps: f32,
    eta: f32,
    steps: usize,
) -> Result<Tensor> {
    let mut x = x0.clone();
    for _ in 0..steps {
        let g = input_gradient(model, &x, labels)?;
        for ((xi, &oi), &gi) in x.data_mut().iter_mut().zip(x0.data()).zip(g.data()) {
            let stepped = *xi + eta * sign(gi);
            *xi = stepped.clamp(oi - eps, oi + eps).clamp(0.0, 1.0);
        }
    }
    Ok(x)
}

/// Pixel PGD returning only the adversarial images; used by adversarial
/// training.
pub fn pgd_pixel_images<C: Classifier + ?Sized>(
    model: &C,
    images: &Tensor,
    labels: &[usize],
    epsilon: f32,
    eta: f32,
    steps: usize,
) -> Result<Tensor> {
    check_batch(model, images, labels)?;
    map_chunks(images, labels, |x, l| pixel_chunk(model, x, l, epsilon, eta, steps))
}

fn linf_per_item(a: &Tensor, b: &Tensor) -> Vec<f32> {
    let per = a.item_len();
    a.data()
        .chunks(per.max(1))
        .zip(b.data().chunks(per.max(1)))
        .map(|(x, y)| x.iter().zip(y).fold(0.0f32, |m, (p, q)| m.max((p - q).abs())))
        .collect()
}

fn finish<C: Classifier + ?Sized>(
    model: &C,
    original: &Tensor,
    adversarial: Tensor,
    labels: &[usize],
    distance: Vec<f32>,
    config: AttackConfig,
) -> Result<AdversarialBatch> {
    let clean_predictions = classify(model, original)?;
    let adversarial_predictions = classify(model, &adversarial)?;
    let success = adversarial_predictions
        .iter()
        .zip(labels)
        .map(|(p, l)| p != l)
        .collect();
    Ok(AdversarialBatch {
        original: original.clone(),
        adversarial,
        labels: labels.to_vec(),
        clean_predictions,
        adversarial_predictions,
        success,
        distance,
        config,
    })
}

/// `x <- clip_[0,1](clip_{x0 +- eps}(x + eta * sign(grad)))`, repeated
/// `steps` times from `x0`.
pub fn pgd_pixel<C: Classifier + ?Sized>(
    model: &C,
    images: &Tensor,
    labels: &[usize],
    config: &AttackConfig,
) -> Result<AdversarialBatch> {
    config.validate()?;
    if config.domain != AttackDomain::Pixel {
        return Err(Error::InvalidArgument("pgd_pixel needs a pixel-domain config".into()));
    }
    let adversarial = pgd_pixel_images(model, images, labels, config.epsilon, config.eta, config.steps)?;
    let distance = linf_per_item(&adversarial, images);
    finish(model, images, adversarial, labels, distance, *config)
}

/// Pulls every image's coefficients back inside the `eps` ball around `f0`
/// while keeping pixels in `[0, 1]`. Pixels are returned with their
/// re-extracted coefficients.
fn project_frequency(x0: &Tensor, f0: &FrequencyTensor, pixels: Tensor, eps: f32) -> Result<(Tensor, FrequencyTensor)> {
    let mut pixels = pixels;
    let mut f = block_dct_forward(&pixels, LEVEL_SHIFT)?;
    let fper = f0.tensor().item_len();
    let pper = pixels.item_len();
    for item in 0..pixels.dim(0) {
        let mut attempts = 0;
        loop {
            let a = &f.tensor().data()[item * fper..][..fper];
            let b = &f0.tensor().data()[item * fper..][..fper];
            let dist = a.iter().zip(b).fold(0.0f32, |m, (p, q)| m.max((p - q).abs()));
            if dist <= eps {
                break;
            }
            let one = |t: &Tensor| t.slice_batch(item, item + 1);
            let (fi, f0i) = (one(f.tensor()), one(f0.tensor()));
            let replacement = if attempts < 4 {
                // Convex combination of two in-range images stays in range.
                let t = eps / dist * (1.0 - 1e-4 * (1 << attempts) as f32);
                let shrunk = f0i.zip_map(&fi, |o, v| o + t * (v - o))?;
                block_dct_inverse(&FrequencyTensor::new(shrunk)?, LEVEL_SHIFT, true)
            } else {
                one(x0)
            };
            attempts += 1;
            pixels.data_mut()[item * pper..][..pper].copy_from_slice(replacement.data());
            let refreshed = block_dct_forward(&replacement, LEVEL_SHIFT)?;
            f.tensor_mut().data_mut()[item * fper..][..fper].copy_from_slice(refreshed.tensor().data());
        }
    }
    Ok((pixels, f))
}

fn frequency_chunk<C: Classifier + ?Sized>(
    model: &C,
    x0: &Tensor,
    labels: &[usize],
    eps: f32,
    eta: f32,
    steps: usize,
) -> Result<Tensor> {
    let f0 = block_dct_forward(x0, LEVEL_SHIFT)?;
    let mut f = f0.clone();
    let mut pixels = x0.clone();
    for _ in 0..steps {
        let gx = input_gradient(model, &pixels, labels)?;
        // The inverse transform is orthonormal, so its adjoint is the forward
        // transform without the level shift.
        let gf = block_dct_forward(&gx, 0.0)?;
        let mut next = f.into_tensor();
        for ((v, &o), &g) in next
            .data_mut()
            .iter_mut()
            .zip(f0.tensor().data())
            .zip(gf.tensor().data())
        {
            *v = (*v + eta * sign(g)).clamp(o - eps, o + eps);
        }
        let stepped = block_dct_inverse(&FrequencyTensor::new(next)?, LEVEL_SHIFT, true);
        (pixels, f) = project_frequency(x0, &f0, stepped, eps)?;
    }
    Ok(pixels)
}

/// PGD on the block-DCT coefficients of the image. Each step moves the
/// coefficients by `eta * sign(grad)`, clips them to the `epsilon` ball
/// around the clean coefficients, clamps the decoded pixels to `[0, 1]` and
/// re-extracts. If clamping pushed a coefficient outside the ball the image
/// is shrunk towards the original until both constraints hold.
pub fn pgd_frequency<C: Classifier + ?Sized>(
    model: &C,
    images: &Tensor,
    labels: &[usize],
    config: &AttackConfig,
) -> Result<AdversarialBatch> {
    config.validate()?;
    if config.domain != AttackDomain::Frequency {
        return Err(Error::InvalidArgument(
            "pgd_frequency needs a frequency-domain config".into(),
        ));
    }
    check_batch(model, images, labels)?;
    let (eps, eta, steps) = (config.epsilon, config.eta, config.steps);
    let adversarial = map_chunks(images, labels, |x, l| frequency_chunk(model, x, l, eps, eta, steps))?;
    let distance = linf_per_item(
        block_dct_forward(&adversarial, LEVEL_SHIFT)?.tensor(),
        block_dct_forward(images, LEVEL_SHIFT)?.tensor(),
    );
    finish(model, images, adversarial, labels, distance, *config)
}

/// Dispatches on the config's domain.
pub fn attack<C: Classifier + ?Sized>(
    model: &C,
    images: &Tensor,
    labels: &[usize],
    config: &AttackConfig,
) -> Result<AdversarialBatch> {
    match config.domain {
        AttackDomain::Pixel => pgd_pixel(model, images, labels, config),
        AttackDomain::Frequency => pgd_frequency(model, images, labels, config),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub clean_accuracy: f32,
    pub attacked_accuracy: f32,
}

/// Crafts pixel PGD examples once on `surrogate` and scores every target on
/// them.
pub fn transfer_attack(
    surrogate: &ModelInstance,
    targets: &[&ModelInstance],
    images: &Tensor,
    labels: &[usize],
    config: &AttackConfig,
) -> Result<Vec<TransferRow>> {
    let spec = surrogate.spec();
    for t in targets {
        let ts = t.spec();
        if ts.num_classes != spec.num_classes {
            return Err(Error::InvalidArgument(format!(
                "target has {} classes, surrogate {}",
                ts.num_classes, spec.num_classes
            )));
        }
        if (ts.height, ts.width) != (spec.height, spec.width) {
            return Err(Error::shape(
                "transfer_attack",
                format!(
                    "target input {}x{} differs from surrogate {}x{}",
                    ts.height, ts.width, spec.height, spec.width
                ),
            ));
        }
    }
    let batch = pgd_pixel(surrogate, images, labels, config)?;
    targets
        .iter()
        .map(|t| {
            Ok(TransferRow {
                clean_accuracy: accuracy(&classify(*t, images)?, labels),
                attacked_accuracy: accuracy(&classify(*t, &batch.adversarial)?, labels),
            })
        })
        .collect()
}

/// Standard training with a per-batch pixel PGD inner maximisation; uses
/// [`AdversarialSettings::standard`] unless the config already carries
/// settings.
pub fn adversarial_train(model: &mut ModelInstance, data: &Dataset, config: &TrainConfig) -> Result<Vec<EpochMetrics>> {
    let mut config = config.clone();
    config.adversarial.get_or_insert_with(AdversarialSettings::standard);
    train(model, data, &config)
}
