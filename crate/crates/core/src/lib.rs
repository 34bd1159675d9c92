//! Compress node embeddings into compositional hash codes and decode them
//! with small trainable networks.
//!
//! The pipeline has four stages:
//!
//! 1. [`sparse`] — row access to the input matrix (graph adjacency or a
//!    pre-trained embedding table), in memory or streamed from disk.
//! 2. [`encoder`] — random-projection hashing of each row into an
//!    `m * log2(c)`-bit code; [`codes`] stores and sizes the result.
//! 3. [`decoder`] — maps a code back to a `d_e`-dimensional embedding by
//!    summing codebook rows and refining through a small MLP, trained
//!    against reconstruction or task loss on [`tensor_nn`]'s autodiff.
//! 4. [`gnn`] — a two-layer GraphSAGE classifier that consumes decoded
//!    embeddings, for end-to-end evaluation on node classification.
//!
//! [`synth`] generates the synthetic graphs and clustered embeddings used
//! by the test and benchmark fixtures.

pub mod codes;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod gnn;
pub mod seeds;
pub mod sparse;
pub mod synth;
pub mod tensor_nn;

pub use error::{Error, Result};
