//! Singing voice conversion without parallel data.
//!
//! A speaker-independent DNN turns audio into phonetic posteriorgrams, a
//! stacked bidirectional LSTM maps those posteriorgrams to a target voice's
//! mel-cepstra, and a parametric vocoder resynthesizes audio with the
//! source recording's F0 and aperiodicity left untouched.
//!
//! The crate is organized bottom-up:
//!
//! * [`audio`]: WAV I/O and resampling.
//! * [`features`]: STFT, MFCC, context stacking, mean-variance normalization.
//! * [`vocoder`]: F0, band aperiodicity, spectral envelope, mel-cepstrum and synthesis.
//! * [`nn`]: dense/softmax layers, LSTM, DBLSTM, training and gradient checking.
//! * [`archive`]: the versioned, checksummed model file format.
//! * [`asr`]: phoneme classifier training and posteriorgram extraction.
//! * [`pipeline`]: training-pair construction, conversion-model training, conversion.
//! * [`cli`]: configuration, manifests and the command-line front end.

pub mod archive;
pub mod asr;
pub mod audio;
pub mod cli;
pub mod config;
pub mod error;
pub mod features;
pub mod manifest;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod vocoder;

mod binio;

pub use error::{Error, Result};

/// Working sample rate of every analysis stage.
pub const PIPELINE_SAMPLE_RATE: u32 = 16_000;
