use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::TokenId;
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::sampler::ImageRole;

use super::sequence::TokenSequence;

pub const DEFAULT_MASK_P: f64 = 0.15;
pub const DEFAULT_MASK_IMAGES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum MaskingStrategy {
    /// Each content position independently with probability `p`.
    Token { p: f64 },
    /// All content positions of `n_images` images drawn without replacement.
    ImageToken { n_images: usize },
    /// All content positions of every output image.
    SequenceToken,
    /// Union of the three above.
    Mixed { p: f64, n_images: usize },
}

impl MaskingStrategy {
    pub fn validate(&self, image_count: usize) -> Result<()> {
        let check_p = |p: f64| {
            if p > 0.0 && p < 1.0 {
                Ok(())
            } else {
                Err(Error::Parameter(format!("masking probability p = {p} must lie in (0, 1)")))
            }
        };
        let check_n = |n: usize| {
            if n >= 1 && n <= image_count {
                Ok(())
            } else {
                Err(Error::Parameter(format!(
                    "n_images = {n} must lie in [1, {image_count}]"
                )))
            }
        };
        match *self {
            MaskingStrategy::Token { p } => check_p(p),
            MaskingStrategy::ImageToken { n_images } => check_n(n_images),
            MaskingStrategy::SequenceToken => Ok(()),
            MaskingStrategy::Mixed { p, n_images } => check_p(p).and(check_n(n_images)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskedSequence {
    pub sequence: TokenSequence,
    pub corrupted: Vec<TokenId>,
    /// Ascending.
    pub masked: Vec<usize>,
    /// True ids at `masked`, index-aligned.
    pub truth: Vec<TokenId>,
    pub strategy: MaskingStrategy,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingPair {
    pub input: Vec<TokenId>,
    /// `(position, true id)`, ascending by position.
    pub targets: Vec<(usize, TokenId)>,
}

/// Corrupts content positions of `seq` with uniform random content ids.
/// Special positions are never touched.
pub fn apply_masking(seq: &TokenSequence, strategy: MaskingStrategy, rng: &RngState) -> Result<MaskedSequence> {
    strategy.validate(seq.image_count())?;
    let mut draws = rng.clone();
    let mut chosen: BTreeSet<usize> = BTreeSet::new();

    let token = |p: f64, draws: &mut RngState, chosen: &mut BTreeSet<usize>| {
        for pos in (0..seq.len()).filter(|&pos| seq.is_content(pos)) {
            if draws.random_bool(p) {
                chosen.insert(pos);
            }
        }
    };
    let image = |n: usize, draws: &mut RngState, chosen: &mut BTreeSet<usize>| {
        for i in sample(draws, seq.image_count(), n).into_vec() {
            chosen.extend(seq.image_span(i));
        }
    };
    let outputs = |chosen: &mut BTreeSet<usize>| {
        for (i, role) in seq.image_roles().iter().enumerate() {
            if *role == ImageRole::Output {
                chosen.extend(seq.image_span(i));
            }
        }
    };

    match strategy {
        MaskingStrategy::Token { p } => token(p, &mut draws, &mut chosen),
        MaskingStrategy::ImageToken { n_images } => image(n_images, &mut draws, &mut chosen),
        MaskingStrategy::SequenceToken => outputs(&mut chosen),
        MaskingStrategy::Mixed { p, n_images } => {
            token(p, &mut draws, &mut chosen);
            image(n_images, &mut draws, &mut chosen);
            outputs(&mut chosen);
        }
    }

    let masked: Vec<usize> = chosen.into_iter().collect();
    let mut corrupted = seq.ids().to_vec();
    let truth = masked.iter().map(|&p| seq.ids()[p]).collect();
    for &p in &masked {
        corrupted[p] = draws.random_range(0..seq.vocab());
    }
    Ok(MaskedSequence {
        sequence: seq.clone(),
        corrupted,
        masked,
        truth,
        strategy,
    })
}

pub fn split_targets(masked: &MaskedSequence) -> TrainingPair {
    TrainingPair {
        input: masked.corrupted.clone(),
        targets: masked.masked.iter().copied().zip(masked.truth.iter().copied()).collect(),
    }
}

/// Writes the target ids back over the input.
pub fn patch_back(pair: &TrainingPair) -> Vec<TokenId> {
    let mut ids = pair.input.clone();
    for &(p, id) in &pair.targets {
        ids[p] = id;
    }
    ids
}
