//! Logistic feedforward network trained with full-batch Rprop.

mod network;
mod rprop;
mod train;

pub use network::{logistic, MlpNetwork};
pub use rprop::{RpropConfig, RpropState};
pub use train::{train_mlp, EpochRecord, MlpConfig, MlpModel, TrainHistory};
pub(crate) use train::target_range;
