//! Neighbor-aware re-ranking for embedding retrieval.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`tensor`]: feature/distance matrices, blocked pairwise distances, top-k.
//! - [`dmon`]: multi-order neighbor feature enhancement (Gaussian-weighted,
//!   order-decayed aggregation of 1..H hop neighbors fused into each sample).
//! - [`aro`]: asymmetric query/gallery distance refinement from top-k
//!   filtered distance profiles.
//! - [`eval`]: CMC and mAP under the same-identity/same-camera junk rule.
//! - [`datagen`]: seeded synthetic identity clusters with camera shifts.
//! - [`io`]: NPY feature matrices and `pid,camid` label tables.

pub mod aro;
pub mod datagen;
pub mod dmon;
pub mod error;
pub mod eval;
pub mod io;
pub mod tensor;

pub use aro::AroConfig;
pub use dmon::{DmonConfig, SigmaMode};
pub use error::{Error, Result};
pub use eval::{EvalReport, SampleLabels};
pub use tensor::{DistanceMatrix, FeatureMatrix, TopK};
