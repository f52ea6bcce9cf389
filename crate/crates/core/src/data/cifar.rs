//! CIFAR-10 binary batches: 3073-byte records of one label byte followed by
//! 1024 red, 1024 green and 1024 blue bytes, each plane row-major 32x32.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const CIFAR_EXTENT: usize = 32;
pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * CIFAR_EXTENT * CIFAR_EXTENT;
const CIFAR_CLASSES: usize = 10;

pub fn parse_cifar10(bytes: &[u8]) -> Result<Dataset> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD_BYTES) {
        return Err(Error::Format(format!(
            "CIFAR-10 data of {} bytes is not a whole number of {CIFAR_RECORD_BYTES}-byte records",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD_BYTES;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * (CIFAR_RECORD_BYTES - 1));
    for (i, record) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        let label = usize::from(record[0]);
        if label >= CIFAR_CLASSES {
            return Err(Error::Format(format!("record {i} has label byte {label}")));
        }
        labels.push(label);
        pixels.extend(record[1..].iter().map(|&b| f32::from(b) / 255.0));
    }
    let images = Tensor::new(&[n, 3, CIFAR_EXTENT, CIFAR_EXTENT], pixels)?;
    Dataset::new(images, labels, CIFAR_CLASSES)
}

pub fn read_cifar10(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cifar10(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes 32x32 images with labels below 10, quantising pixels to bytes.
pub fn write_cifar10(path: &Path, data: &Dataset) -> Result<()> {
    if data.height() != CIFAR_EXTENT || data.width() != CIFAR_EXTENT {
        return Err(Error::InvalidArgument(format!(
            "CIFAR-10 records are 32x32, got {}x{}",
            data.height(),
            data.width()
        )));
    }
    if data.labels.iter().any(|&l| l >= CIFAR_CLASSES) {
        return Err(Error::InvalidArgument("CIFAR-10 labels must be below 10".into()));
    }
    let mut bytes = Vec::with_capacity(data.len() * CIFAR_RECORD_BYTES);
    for (i, &label) in data.labels.iter().enumerate() {
        bytes.push(label as u8);
        bytes.extend(
            data.images
                .item(i)
                .iter()
                .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
