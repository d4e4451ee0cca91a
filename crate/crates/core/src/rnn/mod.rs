//! Stacked Elman recurrent estimator trained by minibatch SGD through time.

mod network;
mod sequence;
mod train;

pub use network::{Activation, RnnNetwork};
pub use sequence::{build_angular_sequences, build_sequences, SequenceMode, SequenceSet};
pub use train::{train_rnn, RnnConfig, RnnEpochRecord, RnnHistory, RnnModel};
