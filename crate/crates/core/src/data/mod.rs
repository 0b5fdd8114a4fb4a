//! Dataset ingestion: manifests, PNG files, splits and synthetic data.

mod manifest;
mod png;
mod split;
mod synth;

pub use manifest::{
    load_manifest, parse_manifest, read_predictions, write_predictions, ClassDistribution, Manifest,
    ManifestEntry, PredictionRow, MANIFEST_HEADER, PREDICTION_HEADER,
};
pub use png::{load_png, save_gray_png, save_png};
pub use split::{stratified_split, SplitSpec};
pub use synth::{
    synth_dataset, synth_samples, write_synth_dataset, SynthConfig, SynthSample, LESION_DEPTH,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("expected header \"{expected}\", found \"{found}\"")]
    BadHeader { expected: &'static str, found: String },
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("row {row}: diagnosis {value} outside 0..=4")]
    DiagnosisOutOfRange { row: usize, value: String },
    #[error("row {row}: duplicate id_code {id}")]
    DuplicateId { row: usize, id: String },
    #[error("missing image files: {}", .0.join(", "))]
    MissingImages(Vec<String>),
    #[error("class {0} has no samples; cannot stratify")]
    EmptyClass(u8),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("{path}: unsupported PNG pixel format {format} (need 8-bit gray or RGB)")]
    UnsupportedDepth { path: PathBuf, format: String },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error(transparent)]
    Img(#[from] crate::imgproc::ImgError),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io { path: path.into(), source }
    }
}
