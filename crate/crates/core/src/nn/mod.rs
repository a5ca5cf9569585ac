//! Deterministic reverse-mode network engine: tensors, layers, losses, Adam
//! and an early-stopping trainer.

mod gemm;
mod layer;
mod loss;
mod network;
mod optim;
mod tensor;
mod train;

pub use layer::{LayerSpec, DEFAULT_POOL_FACTOR};
pub use loss::{cross_entropy, rmse_with_grad, squared_error, LossKind, LossSum, Target, RMSE_EPSILON};
pub use network::{ArchDescriptor, Network};
pub use optim::Adam;
pub use tensor::Tensor;
pub use train::{train, Samples, TrainConfig, TrainHistory};
