//! Class hierarchy, signature topic sets and zero-shot classification.

pub mod classifier;
pub mod taxonomy;
pub mod topics;

pub use classifier::{Classification, ClassifierOptions, PairPolicy, ZeroShotClassifier};
pub use taxonomy::{CoarseClassId, FineClassId, LoadMode, Taxonomy};
pub use topics::{class_topic_profile, cross_class_normalize, signature_set, ClassTopicProfile, TopicSet};
