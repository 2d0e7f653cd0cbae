//! Dataset ingestion, label grouping, splitting, synthetic generation,
//! preprocessing and augmentation.

pub mod augment;
pub mod image;
pub mod ingest;
pub mod labels;
pub mod manifest;
pub mod pgm;
pub mod preprocess;
pub mod samples;
pub mod split;
pub mod synth;

pub use augment::{apply_draw, AugmentDraw, AugmentPipeline};
pub use image::{Dataset, Image, LabeledImage};
pub use ingest::{ingest, IngestReport};
pub use labels::{group_labels, to_binary, Grouping, PrefixRules};
pub use manifest::{load_manifest, read_manifest, write_dataset, ManifestRow};
pub use preprocess::{preprocess, resize_bilinear};
pub use samples::Samples;
pub use split::{split, split_indices, SplitIndices, SplitRatios};
pub use synth::{generate_synthetic, SyntheticConfig};
