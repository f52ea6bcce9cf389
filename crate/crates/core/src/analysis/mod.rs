//! Robustness diagnostics on trained models.

mod cosine;
mod detector;
mod histogram;
mod reconstruction;

pub use cosine::{cosine_probe, cosine_similarity, CosineReport};
pub use detector::{
    detect, detection_experiment, train_detector, Detection, DetectionReport, DetectorModel, Node, DETECTOR_DEPTH,
};
pub use histogram::{frequency_histogram, FrequencyHistogram, HISTOGRAM_BINS, HISTOGRAM_EDGES};
pub use reconstruction::{reconstruction_eval, ReconstructionTable};
