//! msim-core: a small, self-contained classifier for multichannel
//! time-series segments.
//!
//! The pipeline has two halves. A spectral front end picks the dominant
//! frequencies of each input segment, folds the signal into period-aligned
//! 2-D patch grids, runs multi-scale convolutions over them, and blends the
//! results with softmax weights derived from the spectrum. The back end
//! embeds each *channel* (not each time step) as one token, runs a gated
//! diagonal state-space layer over the channel tokens, and classifies the
//! pooled features.
//!
//! Everything is built on a flat reverse-mode autodiff tape ([`graph`]) that
//! is generic over 32/64-bit precision ([`real`]). Training utilities,
//! binary dataset/checkpoint formats, and a file-based verification corpus
//! runner live in their own modules.

pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eegs;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod mstb;
pub mod real;
pub mod optim;
pub mod signal;
pub mod spectral;
pub mod ssm;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, NodeId};
pub use real::Real;
pub use tensor::Tensor;
