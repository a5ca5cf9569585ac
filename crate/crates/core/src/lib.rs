//! Feature-subset discovery with masked input/output autoencoders.
//!
//! A greedy forward search grows an input set of feature positions, scoring
//! every candidate by how well an encoder-decoder trained on the input set
//! reconstructs the remaining positions. The learned reconstructions are then
//! fed to a shallow CNN classifier alongside the original data.

pub mod analysis;
pub mod autoencoder;
pub mod classifier;
pub mod data;
pub mod error;
pub mod nn;
pub mod rng;
pub mod run;
pub mod search;

pub use error::{Error, Result};
