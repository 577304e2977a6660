//! Glyph-image embeddings fused with contextual sentence embeddings for
//! natural language inference.
//!
//! Text is segmented into words or characters, rendered to 30x60 glyph
//! images, encoded by a small CNN + LSTM, and combined with a precomputed
//! contextual embedding of the sentence pair by late fusion before a
//! 3-way MLP classifier.

pub mod autodiff;
pub mod charrec;
pub mod cli;
pub mod data;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod glyph;
pub mod optim;
pub mod params;
pub mod report;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
