//! Minimal feed-forward training substrate that pruning callbacks plug into.

pub mod data;
pub mod layers;
pub mod model;
pub mod train;

pub use data::{make_dataset, Dataset, DatasetSpec};
pub use layers::{Layer, LayerSpec, Param, ParamGrad};
pub use model::{accuracy, softmax_cross_entropy, Gradients, Model};
pub use train::{fit, Callback, EpochSummary, MetricLog, MetricRow, Sgd, TrainConfig, TrainState};
