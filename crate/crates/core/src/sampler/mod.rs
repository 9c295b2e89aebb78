//! Guardrailed compositional task sequences.
//!
//! A chain follows `generative* image transform* discriminative*`. The
//! generative stack is applied right to left so the first element is the most
//! degraded one, transforms accumulate left to right on the raw image, and
//! every discriminative rendering is drawn from the class-subsampled mask
//! after the full cumulative transform.

mod bundle;
mod chain;
mod guardrails;
mod io;
mod structure;

pub use bundle::{sample_cqo, CqoBundle, ImageRole, SamplerConfig};
pub use chain::{realize_chain, ChainSource, ImageChain};
pub use guardrails::{check_guardrails, GuardrailReport, GuardrailResult, GuardrailRule};
pub use io::{read_bundle, write_bundle, BUNDLE_DESCRIPTOR};
pub use structure::{
    sample_structure, ChainElement, OrderingMode, StructureLimits, TaskStructure,
    DEFAULT_IMAGE_BUDGET, DEFAULT_T_MAX,
};
