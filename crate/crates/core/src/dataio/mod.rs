//! Dataset files, splits, synthetic data and model archives.

mod archive;
mod dataset;
mod split;
mod synthetic;

pub use archive::{
    archive_stats, decode_archive, encode_archive, load_model, save_model, ArchiveStats, ModelArchive, StoredModel,
    ARCHIVE_VERSION,
};
pub use dataset::{
    parse_dataset, parse_dataset_str, read_label_names, serialize_dataset, write_dataset, write_label_names,
};
pub use split::{split_indices, split_train_validation};
pub use synthetic::{generate_synthetic, GroundTruth, SyntheticData, SyntheticSpec};
