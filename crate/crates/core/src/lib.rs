//! Mel and gammatone cepstral features with 19-frame context windows, plus
//! small from-scratch classifiers (fully connected, LSTM, attention-LSTM)
//! and an experiment grid runner for comparing the two representations.
//!
//! The processing chain for one utterance is
//!
//! ```text
//! waveform -> pre-emphasis -> framing -> Hamming -> |DFT|^2
//!          -> mel | gammatone filter bank -> ln -> DCT-II (13)
//!          -> + deltas + double deltas (39) -> context t-9..t+9 (741)
//! ```

pub mod cepstra;
pub mod data;
pub mod dsp;
mod error;
pub mod filterbank;
pub mod harness;
pub mod nn;
pub mod synth;

pub use cepstra::{extract_features, ContextRepresentation, FeatureKind, Pipeline, PipelineConfig};
pub use dsp::Waveform;
pub use error::{Error, Result};
pub use filterbank::{FilterBank, FilterKind};
