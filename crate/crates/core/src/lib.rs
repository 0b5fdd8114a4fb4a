//! Diabetic retinopathy grading toolkit.
//!
//! - [`imgproc`]: fundus preprocessing (mask, green channel, median, CLAHE, resize).
//! - [`nnet`]: a small convolutional regressor trained with MSE on grade values.
//! - [`grading`]: score decoding, confusion matrices and quadratic weighted kappa.
//! - [`data`]: APTOS-style manifests, PNG I/O, stratified splits, synthetic data.
//! - [`cli`]: the command implementations behind the `drgrade` binary.

pub mod cli;
pub mod data;
pub mod grading;
pub mod imgproc;
pub mod nnet;
pub mod rng;
pub mod verify;

pub use grading::{decode_score, evaluate, qwk, ConfusionMatrix, EvaluationReport, Grade, Score};
pub use imgproc::{preprocess, FundusTensor, Image8, ImageRgb8, PipelineConfig};
