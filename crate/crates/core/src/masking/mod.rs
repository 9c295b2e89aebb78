//! Flat token sequences with end-of-image/end-of-context markers, masking
//! objectives and the token interchange file.

mod file;
mod sequence;
mod strategy;

pub use file::{read_token_file, write_token_file, TokenFile, TokenRecord, TOKEN_FILE_MAGIC};
pub use sequence::{assemble_tokens, PositionTag, TokenSequence, CONTEXT_WINDOW, DEFAULT_K};
pub use strategy::{
    apply_masking, patch_back, split_targets, MaskedSequence, MaskingStrategy, TrainingPair,
    DEFAULT_MASK_IMAGES, DEFAULT_MASK_P,
};
