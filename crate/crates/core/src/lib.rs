//! Compositional visual in-context learning data engine.
//!
//! Turns image + segmentation datasets into enriched task outputs,
//! guardrailed context/query/output task sequences, codebook token streams
//! with masking objectives, and the metrics used to score codebooks and
//! predicted output chains.

pub mod codebook;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod masking;
pub mod metrics;
pub mod raster;
pub mod rng;
pub mod sampler;
pub mod task_ops;

pub use codebook::{Codec, CodecGeometry, TokenId};
pub use error::{Error, Result};
pub use raster::{ClassId, DatasetRecord, ImageRaster, Palette, Rgb, SegMap, BACKGROUND};
pub use rng::RngState;
