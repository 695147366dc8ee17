//! Corpus ingestion, stratified splitting, normalization and batching.

mod batch;
mod manifest;
mod normalize;
mod split;
pub mod wav;

pub use batch::{batch_indices, pad_or_truncate, PaddedBatch, SequenceSet, PAD_FRAMES};
pub use manifest::{
    load_manifest, parse_ravdess_name, ravdess_manifest, write_manifest, CorpusEntry, Emotion,
    Intensity, Task, MANIFEST_HEADER,
};
pub use normalize::{Normalizer, STD_FLOOR};
pub use split::{split_train_test, SplitMode};
pub use wav::{read_wav, write_wav_pcm16};
