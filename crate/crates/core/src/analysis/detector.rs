use std::fmt;

use serde::{Deserialize, Serialize};

use super::histogram::{FrequencyHistogram, HISTOGRAM_BINS};
use crate::tensor::Rng;
use crate::{Error, Result};

pub const DETECTOR_DEPTH: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detection {
    Clean,
    Adversarial,
}

impl fmt::Display for Detection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Detection::Clean => "clean",
            Detection::Adversarial => "adversarial",
        })
    }
}

/// Samples with `feature <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        label: Detection,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// Depth-limited CART tree over histogram bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub root: Node,
}

impl DetectorModel {
    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Fraction of `clean` detected clean and `adversarial` detected
    /// adversarial, over both sets.
    pub fn accuracy(&self, clean: &[FrequencyHistogram], adversarial: &[FrequencyHistogram]) -> f64 {
        let total = clean.len() + adversarial.len();
        if total == 0 {
            return 0.0;
        }
        let hits = clean.iter().filter(|h| detect(self, h) == Detection::Clean).count()
            + adversarial
                .iter()
                .filter(|h| detect(self, h) == Detection::Adversarial)
                .count();
        hits as f64 / total as f64
    }
}

type Sample = ([f64; HISTOGRAM_BINS], Detection);

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p, q) = (counts[0] as f64 / n, counts[1] as f64 / n);
    1.0 - p * p - q * q
}

fn tally(samples: &[Sample]) -> [usize; 2] {
    let adv = samples.iter().filter(|s| s.1 == Detection::Adversarial).count();
    [samples.len() - adv, adv]
}

fn majority(counts: [usize; 2]) -> Detection {
    if counts[1] > counts[0] {
        Detection::Adversarial
    } else {
        Detection::Clean
    }
}

/// Best (feature, threshold) by weighted child Gini; candidates are visited
/// in ascending feature then threshold order and only a strictly better
/// score replaces the incumbent.
fn best_split(samples: &[Sample]) -> Option<(usize, f64, f64)> {
    let n = samples.len() as f64;
    let mut best: Option<(usize, f64, f64)> = None;
    for feature in 0..HISTOGRAM_BINS {
        let mut sorted: Vec<(f64, Detection)> = samples.iter().map(|s| (s.0[feature], s.1)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0usize; 2];
        let total = tally(samples);
        for i in 0..sorted.len() - 1 {
            left[sorted[i].1 as usize] += 1;
            let (lo, hi) = (sorted[i].0, sorted[i + 1].0);
            if lo == hi {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let nl = (left[0] + left[1]) as f64;
            let score = (nl * gini(left) + (n - nl) * gini(right)) / n;
            if best.is_none_or(|b| score < b.2) {
                best = Some((feature, lo + (hi - lo) / 2.0, score));
            }
        }
    }
    best
}

fn grow(samples: &[Sample], depth: usize) -> Node {
    let counts = tally(samples);
    let impurity = gini(counts);
    if depth == DETECTOR_DEPTH || impurity == 0.0 {
        return Node::Leaf {
            label: majority(counts),
        };
    }
    match best_split(samples) {
        Some((feature, threshold, score)) if score < impurity => {
            let (l, r): (Vec<Sample>, Vec<Sample>) = samples.iter().partition(|s| s.0[feature] <= threshold);
            Node::Split {
                feature,
                threshold,
                left: Box::new(grow(&l, depth + 1)),
                right: Box::new(grow(&r, depth + 1)),
            }
        }
        _ => Node::Leaf {
            label: majority(counts),
        },
    }
}

pub fn train_detector(clean: &[FrequencyHistogram], adversarial: &[FrequencyHistogram]) -> Result<DetectorModel> {
    if clean.is_empty() || adversarial.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "detector needs both classes ({} clean, {} adversarial)",
            clean.len(),
            adversarial.len()
        )));
    }
    let samples: Vec<Sample> = clean
        .iter()
        .map(|h| (h.bins, Detection::Clean))
        .chain(adversarial.iter().map(|h| (h.bins, Detection::Adversarial)))
        .collect();
    Ok(DetectorModel {
        root: grow(&samples, 0),
    })
}

pub fn detect(model: &DetectorModel, histogram: &FrequencyHistogram) -> Detection {
    let mut node = &model.root;
    loop {
        match node {
            Node::Leaf { label } => return *label,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                node = if histogram.bins[*feature] <= *threshold {
                    left
                } else {
                    right
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub model: DetectorModel,
}

fn halve<T: Clone>(items: &[T], rng: &mut Rng) -> (Vec<T>, Vec<T>) {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    rng.shuffle(&mut idx);
    let cut = items.len().div_ceil(2);
    let pick = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect();
    (pick(&idx[..cut]), pick(&idx[cut..]))
}

/// Shuffles each class with `seed`, trains on the first half of each and
/// scores both halves.
pub fn detection_experiment(
    clean: &[FrequencyHistogram],
    adversarial: &[FrequencyHistogram],
    seed: u64,
) -> Result<DetectionReport> {
    let root = crate::tensor::Rng::new(seed);
    let (clean_train, clean_test) = halve(clean, &mut root.split_named("detector.clean"));
    let (adv_train, adv_test) = halve(adversarial, &mut root.split_named("detector.adversarial"));
    let model = train_detector(&clean_train, &adv_train)?;
    Ok(DetectionReport {
        train_accuracy: model.accuracy(&clean_train, &adv_train),
        test_accuracy: model.accuracy(&clean_test, &adv_test),
        model,
    })
}
