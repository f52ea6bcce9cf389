//! TOML run configuration shared by every CLI subcommand.
//!
//! ```toml
//! seed = 1
//! out = "runs/demo"
//!
//! [dataset]
//! source = "synthetic"
//! items = 1000
//! height = 16
//! width = 16
//! classes = 4
//!
//! [model]
//! variants = ["sf", "c88"]
//!
//! [train]
//! epochs = 6
//!
//! [attack]
//! domain = "pixel"
//! epsilons = [0.003, 0.01]
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{DataSource, DatasetManifest};
use crate::attacks::{default_eta, AttackConfig, AttackDomain, DEFAULT_STEPS};
use crate::models::{AdversarialSettings, TrainConfig, Variant};
use crate::{Error, Result};

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_variants() -> Vec<String> {
    vec!["sf".into(), "c88".into()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_variants")]
    pub variants: Vec<String>,
    /// Checkpoint directories to use instead of training from scratch.
    #[serde(default)]
    pub checkpoints: Vec<PathBuf>,
    /// Source model of transfer attacks.
    #[serde(default)]
    pub surrogate: Option<String>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variants: default_variants(),
            checkpoints: Vec::new(),
            surrogate: None,
        }
    }
}

impl ModelSection {
    pub fn parsed_variants(&self) -> Result<Vec<Variant>> {
        self.variants.iter().map(|v| v.parse()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    /// Enables PGD adversarial training at this pixel budget.
    pub adversarial_epsilon: Option<f32>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            lr: d.lr,
            adversarial_epsilon: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    pub domain: AttackDomain,
    pub epsilons: Vec<f32>,
    /// Overrides the step size paired with each epsilon.
    pub eta: Option<f32>,
    pub steps: usize,
    /// Caps the number of test images attacked.
    pub limit: Option<usize>,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            domain: AttackDomain::Pixel,
            epsilons: vec![0.003, 0.01],
            eta: None,
            steps: DEFAULT_STEPS,
            limit: None,
        }
    }
}

impl AttackSection {
    pub fn configs(&self) -> Vec<AttackConfig> {
        self.epsilons
            .iter()
            .map(|&epsilon| AttackConfig {
                domain: self.domain,
                epsilon,
                eta: self.eta.unwrap_or_else(|| default_eta(epsilon)),
                steps: self.steps,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Free-form label of the experiment.
    #[serde(default)]
    pub experiment: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub dataset: DatasetManifest,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub attack: AttackSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("run config: {e}")))
    }

    /// Parses `path`, resolves relative paths against its directory and
    /// validates the result.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        config.dataset.files.iter_mut().for_each(resolve);
        config.model.checkpoints.iter_mut().for_each(resolve);
        resolve(&mut config.out);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        let variants = self.model.parsed_variants()?;
        if let Some(s) = &self.model.surrogate {
            s.parse::<Variant>()?;
        }
        if !self.model.checkpoints.is_empty() && self.model.checkpoints.len() != variants.len() {
            return Err(Error::InvalidArgument(format!(
                "{} checkpoints for {} variants",
                self.model.checkpoints.len(),
                variants.len()
            )));
        }
        let mut paths: Vec<&PathBuf> = self.model.checkpoints.iter().collect();
        if self.dataset.source == DataSource::Cifar10Binary {
            paths.extend(&self.dataset.files);
        }
        if let Some(missing) = paths.into_iter().find(|p| !p.exists()) {
            return Err(Error::InvalidArgument(format!(
                "path {} does not exist",
                missing.display()
            )));
        }
        self.train_config().validate()?;
        for c in self.attack.configs() {
            c.validate()?;
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            seed: self.seed,
            adversarial: self.train.adversarial_epsilon.map(AdversarialSettings::with_epsilon),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [dataset]
        source = "synthetic"
        items = 40
        height = 16
        width = 16
        classes = 4
    "#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.model.parsed_variants().unwrap(), vec![Variant::Sf, Variant::C88]);
        let attacks = c.attack.configs();
        assert_eq!(
            (attacks[0].epsilon, attacks[0].eta, attacks[0].steps),
            (0.003, 0.001, 100)
        );
        assert_eq!((attacks[1].epsilon, attacks[1].eta), (0.01, 0.003));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml(&format!("bogus = 1\n{MINIMAL}")).is_err());
    }

    #[test]
    fn missing_paths_rejected() {
        let text = r#"
            [dataset]
            source = "cifar10-binary"
            files = ["does/not/exist.bin"]
            items = 0
            height = 32
            width = 32
            classes = 10
        "#;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, text).unwrap();
        let err = RunConfig::load(&path).unwrap_err().to_string();
        assert!(err.contains("does not exist"), "{err}");
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, format!("out = \"results\"\n{MINIMAL}")).unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.out, dir.path().join("results"));
    }
}
