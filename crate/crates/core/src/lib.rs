//! Similarity-based passive filter pruning for convolutional networks.
//!
//! Filters are reduced to unit-norm rank-1 representatives, compared by
//! cosine similarity (exactly, or via a Nyström reconstruction from a few
//! columns of the similarity matrix), and pruned greedily by closest pairs.
//! Prune plans carry the induced channel removals and MAC/parameter counts.

pub mod bench;
pub mod cli;
pub mod error;
mod fsutil;
pub mod linalg;
pub mod nystrom;
pub mod pipeline;
pub mod prune_plan;
pub mod representatives;
pub mod selection;
pub mod synth;
pub mod tensor_io;

pub use error::{PruneError, Result};
pub use fsutil::write_atomic;
