use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::codebook::{Codec, TokenId};
use crate::error::{Error, Result};
use crate::sampler::{CqoBundle, ImageRole};

/// Longest sequence a downstream learner is assumed to attend over.
pub const CONTEXT_WINDOW: usize = 4_500;
pub const DEFAULT_K: usize = 1;

/// What one sequence position holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PositionTag {
    Content { image: usize },
    ImageEnd { image: usize },
    ContextEnd { context: usize },
}

/// Token ids for `c_0 .. c_{n-1}, Q, O`: each image's `q` content ids are
/// followed by `k` copies of `⟨i-END⟩ = N`, and each context element by `k`
/// copies of `⟨c-END⟩ = N + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<TokenId>,
    tags: Vec<PositionTag>,
    image_roles: Vec<ImageRole>,
    image_spans: Vec<Range<usize>>,
    vocab: u32,
    q: usize,
    k: usize,
}

impl TokenSequence {
    /// Builds a sequence from per-image content ids. Images must be grouped
    /// as contexts in index order, then the query, then outputs.
    pub fn from_images(image_roles: &[ImageRole], contents: &[Vec<TokenId>], vocab: u32, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Parameter("special-token count k must be at least 1".into()));
        }
        if vocab == 0 || vocab > u32::MAX - 2 {
            return Err(Error::Parameter(format!("content vocabulary {vocab} out of range")));
        }
        if image_roles.len() != contents.len() || contents.is_empty() {
            return Err(Error::Parameter(format!(
                "{} roles for {} images",
                image_roles.len(),
                contents.len()
            )));
        }
        check_role_order(image_roles)?;
        let q = contents[0].len();
        if q == 0 {
            return Err(Error::Parameter("images must carry at least one token".into()));
        }
        let (i_end, c_end) = (vocab, vocab + 1);
        let mut ids = Vec::new();
        let mut tags = Vec::new();
        let mut spans = Vec::with_capacity(contents.len());
        for (i, (role, content)) in image_roles.iter().zip(contents).enumerate() {
            if content.len() != q {
                return Err(Error::Parameter(format!("image {i} has {} tokens, expected {q}", content.len())));
            }
            if let Some(bad) = content.iter().find(|&&t| t >= vocab) {
                return Err(Error::Parameter(format!("content id {bad} in image {i} is not below N = {vocab}")));
            }
            let start = ids.len();
            ids.extend_from_slice(content);
            tags.extend(std::iter::repeat_n(PositionTag::Content { image: i }, q));
            spans.push(start..ids.len());
            ids.extend(std::iter::repeat_n(i_end, k));
            tags.extend(std::iter::repeat_n(PositionTag::ImageEnd { image: i }, k));
            if let ImageRole::Context(c) = role {
                if image_roles.get(i + 1) != Some(role) {
                    ids.extend(std::iter::repeat_n(c_end, k));
                    tags.extend(std::iter::repeat_n(PositionTag::ContextEnd { context: *c }, k));
                }
            }
        }
        Ok(Self {
            ids,
            tags,
            image_roles: image_roles.to_vec(),
            image_spans: spans,
            vocab,
            q,
            k,
        })
    }

    /// Rebuilds a sequence from its flat ids, checking every special
    /// position. Content ids are not range-checked so corrupted inputs load.
    pub fn from_flat(image_roles: &[ImageRole], ids: Vec<TokenId>, vocab: u32, q: usize, k: usize) -> Result<Self> {
        let n = context_count(image_roles);
        let expected = image_roles.len() * (q + k) + n * k;
        if ids.len() != expected {
            return Err(Error::Parameter(format!(
                "{} ids do not match the length law ({expected})",
                ids.len()
            )));
        }
        let placeholder: Vec<Vec<TokenId>> = image_roles.iter().map(|_| vec![0; q]).collect();
        let mut seq = Self::from_images(image_roles, &placeholder, vocab, k)?;
        for (p, (&got, &want)) in ids.iter().zip(&seq.ids).enumerate() {
            if !matches!(seq.tags[p], PositionTag::Content { .. }) && got != want {
                return Err(Error::Parameter(format!("position {p} should hold special id {want}, found {got}")));
            }
        }
        seq.ids = ids;
        Ok(seq)
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn tags(&self) -> &[PositionTag] {
        &self.tags
    }

    pub fn image_roles(&self) -> &[ImageRole] {
        &self.image_roles
    }

    /// Content positions of image `i`.
    pub fn image_span(&self, i: usize) -> Range<usize> {
        self.image_spans[i].clone()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn vocab(&self) -> u32 {
        self.vocab
    }

    pub fn image_end_id(&self) -> TokenId {
        self.vocab
    }

    pub fn context_end_id(&self) -> TokenId {
        self.vocab + 1
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn image_count(&self) -> usize {
        self.image_roles.len()
    }

    pub fn context_count(&self) -> usize {
        context_count(&self.image_roles)
    }

    pub fn content_count(&self) -> usize {
        self.image_count() * self.q
    }

    pub fn is_content(&self, position: usize) -> bool {
        matches!(self.tags[position], PositionTag::Content { .. })
    }

    pub fn role_at(&self, position: usize) -> Option<ImageRole> {
        match self.tags[position] {
            PositionTag::Content { image } => Some(self.image_roles[image]),
            _ => None,
        }
    }

    /// Content ids of image `i`.
    pub fn image_tokens(&self, i: usize) -> &[TokenId] {
        &self.ids[self.image_span(i)]
    }

    /// Warnings for sequences longer than [`CONTEXT_WINDOW`].
    pub fn warnings(&self) -> Vec<String> {
        if self.len() > CONTEXT_WINDOW {
            vec![format!(
                "sequence of {} tokens exceeds the {CONTEXT_WINDOW}-token context window",
                self.len()
            )]
        } else {
            Vec::new()
        }
    }
}

fn context_count(roles: &[ImageRole]) -> usize {
    roles
        .iter()
        .filter_map(|r| match r {
            ImageRole::Context(c) => Some(*c + 1),
            _ => None,
        })
        .max()
        .unwrap_or(0)
}

fn check_role_order(roles: &[ImageRole]) -> Result<()> {
    let rank = |r: &ImageRole| match r {
        ImageRole::Context(c) => (0, *c),
        ImageRole::Query => (1, 0),
        ImageRole::Output => (2, 0),
    };
    let mut next_context = 0;
    for (i, r) in roles.iter().enumerate() {
        if i > 0 && rank(&roles[i - 1]) > rank(r) {
            return Err(Error::Parameter(format!("image roles out of order at image {i}")));
        }
        if let ImageRole::Context(c) = r {
            if *c > next_context {
                return Err(Error::Parameter(format!("context element {next_context} is missing")));
            }
            next_context = *c + 1;
        }
    }
    if roles.iter().filter(|r| **r == ImageRole::Query).count() > 1 {
        return Err(Error::Parameter("more than one query image".into()));
    }
    Ok(())
}

/// Tokenizes every image of `bundle` with `codec`.
pub fn assemble_tokens(bundle: &CqoBundle, codec: &dyn Codec, k: usize) -> Result<TokenSequence> {
    let images = bundle.images();
    let roles: Vec<ImageRole> = images.iter().map(|(r, _)| *r).collect();
    let contents = images
        .iter()
        .map(|(_, img)| codec.encode(img))
        .collect::<Result<Vec<_>>>()?;
    TokenSequence::from_images(&roles, &contents, codec.vocab_size(), k)
}
