//! Dataset ingestion and synthetic data generation.

pub mod cifar;
mod dataset;
pub mod folder;
pub mod synthetic;

pub use cifar::load_cifar100;
pub use dataset::{Access, Dataset, Payload, PayloadKind, PixelImage, Sample, Split, SplitSpec};
pub use folder::load_image_folder;
pub use synthetic::{
    generate_synthetic, generate_topic_corpus, SyntheticSpec, SyntheticTruth, TopicCorpus,
    TopicCorpusSpec,
};
