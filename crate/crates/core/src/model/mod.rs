//! Tiny 3D CNN with hand-written backpropagation.

pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod net;
pub mod tensor;
pub mod train;

pub use net::{BlockSpec, Cache, Grads, Head, Mode, Tiny3d, Tiny3dConfig};
pub use tensor::{Real, Tensor};
pub use train::{
    predict, predict_class, predict_proba, train, train_classifier, EpochStats, History, LossKind,
    Prediction, Sample, TrainConfig, DEFAULT_THRESHOLD,
};
