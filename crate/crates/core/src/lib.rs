//! Binary hash codes for protein to molecule screening.
//!
//! Two encoders map protein and molecule feature vectors into a shared
//! embedding space. Embeddings are quantized to packed sign codes and
//! compared by Hamming distance, so a database of millions of molecules can
//! be scanned with popcounts.

pub mod bench;
pub mod cli;
pub mod codedb;
pub mod codes;
pub mod config;
pub mod dataio;
pub mod encoder;
pub mod error;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod parallel;
pub mod screen;
pub mod train;

pub use codes::{BinaryCode, CodeLength, Embedding};
pub use error::{Error, Result};
