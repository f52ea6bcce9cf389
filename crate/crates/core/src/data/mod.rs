//! Dataset ingestion, persistence, run configuration and report emission.

mod checkpoint;
mod cifar;
mod config;
mod dataset;
mod report;
mod synthetic;

pub use checkpoint::{load_checkpoint, save_checkpoint, TrainingMeta, CHECKPOINT_FORMAT_VERSION};
pub use cifar::{parse_cifar10, read_cifar10, write_cifar10, CIFAR_EXTENT, CIFAR_RECORD_BYTES};
pub use config::{AttackSection, ModelSection, RunConfig, TrainSection};
pub use dataset::{
    load_dataset, resize_nearest, resize_to_multiple_of_8, split_indices, DataSource, Dataset, DatasetManifest, Splits,
};
pub use report::{format_sig6, write_report, Report, ReportFormat, Value};
pub use synthetic::{class_prototypes, synthetic_dataset};
