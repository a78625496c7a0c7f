//! Fixed-size sentence representations recovered from a frozen decoder-only
//! transformer.
//!
//! A trainable latent `Z` is projected through a fixed matrix `W_z` and added
//! as a bias at chosen sites of the residual stream. Optimizing `Z` for the
//! likelihood of one sentence encodes it; greedy decoding under the same bias
//! recovers it. The [`analysis`] module measures how recoverability depends on
//! the latent dimension and looks at the geometry of the learned latents.

pub mod analysis;
pub mod cli;
pub mod corpora;
pub mod encoder;
pub mod error;
pub mod gradient;
pub mod injection;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod recovery;
pub mod tokenizer;

pub use error::{Error, Result};
