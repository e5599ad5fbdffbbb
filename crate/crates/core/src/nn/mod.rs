//! From-scratch 1-D CNN engine: layers, He initialization, Adam, and the
//! training loop, generic over `f32` (production) and `f64` (numeric tests).

pub mod adam;
pub mod batch;
pub mod checkpoint;
mod conv;
mod layers;
pub mod model;
pub mod spec;
pub mod train;

pub use adam::{adam_step, Adam, AdamState};
pub use batch::{argmax, Batch, Scalar};
pub use checkpoint::Checkpoint;
pub use model::{batch_softmax_loss, he_normal, softmax, softmax_cross_entropy, Model};
pub use spec::{build_model, CnnVariant, LayerSpec, ModelSpec, Padding, Shape};
pub use train::{
    evaluate_rows, train, write_metrics_csv, EpochMetrics, TrainConfig, TrainOutcome,
};
