use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{cifar, synthetic};
use crate::spectral::BLOCK;
use crate::tensor::{Rng, Tensor};
use crate::{Error, Result};

/// Labelled images `[N, 3, H, W]` with pixels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let s = images.shape();
        if s.len() != 4 || s[1] != 3 || s[0] != labels.len() {
            return Err(Error::shape(
                "dataset",
                format!("images {s:?} with {} labels", labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside {num_classes} classes"
            )));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn height(&self) -> usize {
        self.images.dim(2)
    }

    pub fn width(&self) -> usize {
        self.images.dim(3)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.images.gather_batch(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images.slice_batch(0, n),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
        }
    }

    /// Same labels, different pixels.
    pub fn with_images(&self, images: Tensor) -> Result<Dataset> {
        if images.shape() != self.images.shape() {
            return Err(Error::shape(
                "dataset images",
                format!("{:?} vs {:?}", images.shape(), self.images.shape()),
            ));
        }
        Dataset::new(images, self.labels.clone(), self.num_classes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataSource {
    #[serde(rename = "cifar10-binary")]
    Cifar10Binary,
    #[serde(rename = "synthetic")]
    Synthetic,
}

fn default_split() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

fn default_noise() -> f32 {
    1.0
}

/// What to load and how to split it. For `cifar10-binary`, `files` are read
/// in order and `items` (when non-zero) caps the record count; images are
/// resized to `height x width` by nearest neighbour when they differ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub source: DataSource,
    #[serde(default)]
    pub files: Vec<PathBuf>,
    pub items: usize,
    pub height: usize,
    pub width: usize,
    #[serde(rename = "classes")]
    pub num_classes: usize,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default = "default_noise")]
    pub noise: f32,
    #[serde(default)]
    pub seed: u64,
}

impl DatasetManifest {
    pub fn synthetic(items: usize, extent: usize, num_classes: usize, noise: f32, seed: u64) -> Self {
        Self {
            source: DataSource::Synthetic,
            files: Vec::new(),
            items,
            height: extent,
            width: extent,
            num_classes,
            split: default_split(),
            noise,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.split.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.split.iter().any(|&f| f < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "split fractions {:?} must be non-negative and sum to 1",
                self.split
            )));
        }
        if !self.height.is_multiple_of(BLOCK)
            || !self.width.is_multiple_of(BLOCK)
            || self.height == 0
            || self.width == 0
        {
            return Err(Error::NotBlockAligned {
                height: self.height,
                width: self.width,
            });
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        match self.source {
            DataSource::Synthetic if self.items == 0 => {
                Err(Error::InvalidArgument("synthetic source needs items > 0".into()))
            }
            DataSource::Cifar10Binary if self.files.is_empty() => {
                Err(Error::InvalidArgument("cifar10-binary source needs files".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Seeded shuffle then fraction cut: validation and test sizes are floored,
/// the remainder goes to training. Returns (train, val, test) index lists.
pub fn split_indices(n: usize, fractions: [f64; 3], seed: u64) -> [Vec<usize>; 3] {
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::new(seed).split_named("split").shuffle(&mut idx);
    let n_val = (n as f64 * fractions[1]).floor() as usize;
    let n_test = (n as f64 * fractions[2]).floor() as usize;
    let n_train = n - n_val - n_test;
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    [idx, val, test]
}

/// Nearest-neighbour resampling to `height x width`.
pub fn resize_nearest(images: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let s = images.shape();
    if s.len() != 4 {
        return Err(Error::shape("resize", format!("expected rank 4, got {s:?}")));
    }
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    if (h, w) == (height, width) {
        return Ok(images.clone());
    }
    let mut out = Vec::with_capacity(n * c * height * width);
    for plane in images.data().chunks(h * w) {
        for y in 0..height {
            let sy = y * h / height;
            for x in 0..width {
                out.push(plane[sy * w + x * w / width]);
            }
        }
    }
    Tensor::new(&[n, c, height, width], out)
}

/// Downsizes to the largest contained multiple of 8 in each extent.
pub fn resize_to_multiple_of_8(images: &Tensor) -> Result<Tensor> {
    let s = images.shape();
    if s.len() != 4 || s[2] < BLOCK || s[3] < BLOCK {
        return Err(Error::shape("resize", format!("cannot fit an 8x8 block into {s:?}")));
    }
    resize_nearest(images, s[2] / BLOCK * BLOCK, s[3] / BLOCK * BLOCK)
}

pub fn load_dataset(manifest: &DatasetManifest) -> Result<Splits> {
    manifest.validate()?;
    let full = match manifest.source {
        DataSource::Synthetic => synthetic::synthetic_dataset(
            manifest.items,
            manifest.height,
            manifest.width,
            manifest.num_classes,
            manifest.noise,
            manifest.seed,
        )?,
        DataSource::Cifar10Binary => {
            let mut parts = Vec::new();
            let mut labels = Vec::new();
            for f in &manifest.files {
                let d = cifar::read_cifar10(f)?;
                labels.extend(d.labels);
                parts.push(d.images);
            }
            let mut images = Tensor::concat_batch(&parts)?;
            if manifest.items > 0 && manifest.items < labels.len() {
                images = images.slice_batch(0, manifest.items);
                labels.truncate(manifest.items);
            }
            let images = resize_to_multiple_of_8(&images)?;
            let images = resize_nearest(&images, manifest.height, manifest.width)?;
            Dataset::new(images, labels, manifest.num_classes)?
        }
    };
    let [train, val, test] = split_indices(full.len(), manifest.split, manifest.seed);
    Ok(Splits {
        train: full.subset(&train),
        val: full.subset(&val),
        test: full.subset(&test),
    })
}
