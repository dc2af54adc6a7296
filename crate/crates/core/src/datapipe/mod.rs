//! Dataset enumeration, decoding, augmentation, class statistics and the
//! synthetic benchmark generator.

pub mod augment;
pub mod classmap;
pub mod manifest;
pub mod sample;
pub mod stats;
pub mod synthetic;

pub use augment::{augment, AugmentDraw};
pub use classmap::{ClassMap, IGNORE, NUM_CLASSES};
pub use manifest::{load_manifest, DatasetManifest, Layout, ManifestEntry};
pub use sample::{load_sample, resize_record, Domain, Image, LabelMap, SampleRecord};
pub use stats::{class_pixel_histogram, compute_class_weights, ClassCounts, ERFNET_K};
pub use synthetic::{generate_synthetic_pair, write_synthetic_dataset, SyntheticCounts, SyntheticSceneSpec};
