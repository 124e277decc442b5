//! Dataset ingestion and model persistence.

pub mod checkpoint;
pub mod dataset;
pub mod idx;
pub mod synth;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use dataset::{DatasetHandle, Split, VALIDATION_FRACTION};
pub use idx::{dataset_from_idx, load_idx};
pub use synth::{synth_dataset, teacher_dataset, SynthKind};
