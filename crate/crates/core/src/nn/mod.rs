//! From-scratch trainable classifiers: fully connected networks with dropout,
//! LSTM, and LSTM with additive attention pooling, trained with Adam and
//! patience-based early stopping.

mod adam;
pub mod attention;
mod checkpoint;
mod early_stop;
pub mod layers;
mod loss;
pub mod lstm;
mod model;
mod params;
mod spec;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use early_stop::{EarlyStopping, Progress};
pub use loss::{argmax, softmax, softmax_cross_entropy};
pub use model::Model;
pub use params::Params;
pub use spec::{Activation, Arch, ModelSpec};
pub use train::{evaluate, train, train_with_monitor, EpochLog, Evaluation, Monitor, TrainConfig, TrainedModel};

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
