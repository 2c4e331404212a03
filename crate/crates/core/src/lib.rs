//! Lock-GAN anomaly detection for windowed medical waveform data.
//!
//! The crate is organized bottom-up:
//!
//! * [`nn`]: tensors, layer primitives, reverse-mode gradients, optimizers.
//! * [`recurrent`]: LSTM and ConvLSTM cells with backpropagation through time.
//! * [`resampling`]: exact k-NN, SMOTE and Borderline-SMOTE.
//! * [`features`]: feature scoring, previous-breath augmentation, length normalization.
//! * [`lgan`]: generator/discriminator networks, GAN losses and lock-alternating training.
//! * [`evaluation`]: stratified folds, confusion matrices and metrics.
//! * [`stats`]: one-way ANOVA and Tukey HSD.
//! * [`io`], [`synth`], [`config`], [`pipeline`]: files, synthetic data and the end-to-end driver.

pub mod baseline;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod io;
pub mod lgan;
pub mod nn;
pub mod recurrent;
pub mod resampling;
pub mod rng;
pub mod special;
pub mod stats;
pub mod synth;
pub mod pipeline;
mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
