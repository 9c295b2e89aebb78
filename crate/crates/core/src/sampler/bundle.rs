use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index::sample, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ClassId, DatasetRecord, ImageRaster, Palette};
use crate::rng::RngState;
use crate::task_ops::sample_palette;

use super::chain::{realize_chain, ChainSource, ImageChain};
use super::structure::{sample_structure, ChainElement, StructureLimits, TaskStructure, DEFAULT_IMAGE_BUDGET};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_context_min: usize,
    pub n_context_max: usize,
    pub image_budget: usize,
    pub limits: StructureLimits,
    /// Context draws per structure before the structure is resampled.
    pub cover_retries: usize,
    /// Structures tried before giving up.
    pub structure_attempts: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_context_min: 1,
            n_context_max: 3,
            image_budget: DEFAULT_IMAGE_BUDGET,
            limits: StructureLimits::default(),
            cover_retries: 64,
            structure_attempts: 32,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_context_min == 0 || self.n_context_min > self.n_context_max {
            return Err(Error::Config(format!(
                "n_context range [{}, {}] is empty or starts at 0",
                self.n_context_min, self.n_context_max
            )));
        }
        if self.image_budget < 2 * (self.n_context_min + 1) {
            return Err(Error::Config(format!(
                "image_budget {} cannot fit {} chains of two images",
                self.image_budget,
                self.n_context_min + 1
            )));
        }
        Ok(())
    }
}

/// Position of an image inside a bundle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "role", content = "index", rename_all = "snake_case")]
pub enum ImageRole {
    Context(usize),
    Query,
    Output,
}

/// Context chains, the query image and the ground-truth output chain, all
/// sharing one structure and one palette.
#[derive(Clone, Debug, PartialEq)]
pub struct CqoBundle {
    pub dataset_id: String,
    pub structure: TaskStructure,
    pub palette: Palette,
    pub context: Vec<ImageChain>,
    /// First (most degraded) element of the held-out chain.
    pub query: ImageRaster,
    /// The rest of the held-out chain.
    pub output: Vec<ImageRaster>,
    pub query_source: ChainSource,
    pub image_budget: usize,
    pub t_max: usize,
    pub seed: RngState,
}

impl CqoBundle {
    pub fn chain_len(&self) -> usize {
        self.output.len() + 1
    }

    pub fn image_count(&self) -> usize {
        self.context.iter().map(ImageChain::len).sum::<usize>() + self.chain_len()
    }

    /// Images in sequence order `c_0 .. c_{n-1}, Q, O` with their roles.
    pub fn images(&self) -> Vec<(ImageRole, &ImageRaster)> {
        let mut out = Vec::with_capacity(self.image_count());
        for (i, c) in self.context.iter().enumerate() {
            out.extend(c.images.iter().map(|img| (ImageRole::Context(i), img)));
        }
        out.push((ImageRole::Query, &self.query));
        out.extend(self.output.iter().map(|img| (ImageRole::Output, img)));
        out
    }

    /// Layout of the held-out chain.
    pub fn query_elements(&self) -> Vec<ChainElement> {
        self.structure.elements(&self.query_source.keep)
    }

    /// Layout of the output positions (held-out chain minus the query).
    pub fn output_elements(&self) -> Vec<ChainElement> {
        self.query_elements().into_iter().skip(1).collect()
    }
}

fn random_subset(items: &[ClassId], size: usize, rng: &mut RngState) -> BTreeSet<ClassId> {
    sample(rng, items.len(), size).into_iter().map(|i| items[i]).collect()
}

/// Samples one bundle from `records`, which may span several datasets; a
/// bundle never mixes dataset ids and never reuses a record. Generative
/// parameters are drawn for the smallest record side in the chosen dataset,
/// overriding `config.limits.image_side`.
pub fn sample_cqo(records: &[DatasetRecord], rng: &RngState, config: &SamplerConfig) -> Result<CqoBundle> {
    config.validate()?;
    let mut draws = rng.clone();

    let mut by_dataset: BTreeMap<&str, Vec<&DatasetRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.mask.present().is_empty()) {
        by_dataset.entry(r.dataset_id.as_str()).or_default().push(r);
    }
    let eligible: Vec<(&str, Vec<&DatasetRecord>)> = by_dataset
        .into_iter()
        .filter(|(_, rs)| rs.len() > config.n_context_min)
        .collect();
    if eligible.is_empty() {
        return Err(Error::Sampler(format!(
            "no dataset has {} records with annotated classes",
            config.n_context_min + 1
        )));
    }
    let (dataset_id, pool) = &eligible[draws.random_range(0..eligible.len())];
    let vocab: BTreeSet<ClassId> = pool.iter().flat_map(|r| r.mask.present().iter().copied()).collect();
    let palette = sample_palette(&vocab, &mut draws)?;
    let pool_side = pool
        .iter()
        .map(|r| r.image.width().min(r.image.height()))
        .min()
        .expect("non-empty pool");

    for _ in 0..config.structure_attempts {
        let n_max = config.n_context_max.min(pool.len() - 1);
        let n = draws.random_range(config.n_context_min..=n_max);
        let t_cap = config.limits.t_max.min(config.image_budget / (n + 1));
        if t_cap < 2 {
            continue;
        }
        let limits = StructureLimits {
            t_max: t_cap,
            image_side: pool_side,
            ..config.limits.clone()
        };
        let structure = sample_structure(&mut draws, &limits)?;

        let q_idx = draws.random_range(0..pool.len());
        let query_record = pool[q_idx];
        let q_present: Vec<ClassId> = query_record.mask.present().iter().copied().collect();
        let size = draws.random_range(1..=q_present.len());
        let mut keep_q = random_subset(&q_present, size, &mut draws);
        // Class-wise expansion: shrink the keep-set before touching the tasks.
        while structure.chain_len(keep_q.len()) > t_cap && keep_q.len() > 1 {
            let drop: Vec<ClassId> = keep_q.iter().copied().collect();
            let victim = drop[draws.random_range(0..drop.len())];
            keep_q.remove(&victim);
        }
        if structure.chain_len(keep_q.len()) > t_cap {
            continue;
        }

        let candidates: Vec<&DatasetRecord> = pool
            .iter()
            .enumerate()
            .filter(|(i, r)| *i != q_idx && (!structure.classwise || r.mask.present().len() >= keep_q.len()))
            .map(|(_, r)| *r)
            .collect();
        if candidates.len() < n {
            continue;
        }

        let mut chosen = None;
        for _ in 0..config.cover_retries {
            let picks: Vec<&DatasetRecord> = sample(&mut draws, candidates.len(), n)
                .into_iter()
                .map(|i| candidates[i])
                .collect();
            let keeps: Vec<BTreeSet<ClassId>> = picks
                .iter()
                .map(|r| {
                    let present: Vec<ClassId> = r.mask.present().iter().copied().collect();
                    let size = if structure.classwise {
                        keep_q.len()
                    } else {
                        draws.random_range(1..=present.len())
                    };
                    let (mut shared, mut other): (Vec<ClassId>, Vec<ClassId>) =
                        present.into_iter().partition(|c| keep_q.contains(c));
                    shared.shuffle(&mut draws);
                    other.shuffle(&mut draws);
                    shared.into_iter().chain(other).take(size).collect()
                })
                .collect();
            let union: BTreeSet<ClassId> = keeps.iter().flatten().copied().collect();
            if keep_q.is_subset(&union) {
                chosen = Some((picks, keeps));
                break;
            }
        }
        let Some((picks, keeps)) = chosen else { continue };

        let mut context = Vec::with_capacity(n);
        for (r, keep) in picks.iter().zip(&keeps) {
            let chain_rng = draws.fork();
            context.push(realize_chain(r, &structure, &palette, keep, t_cap, &chain_rng)?);
        }
        let query_rng = draws.fork();
        let held_out = realize_chain(query_record, &structure, &palette, &keep_q, t_cap, &query_rng)?;
        let mut images = held_out.images.into_iter();
        let query = images.next().expect("chains have at least two images");
        return Ok(CqoBundle {
            dataset_id: dataset_id.to_string(),
            structure,
            palette,
            context,
            query,
            output: images.collect(),
            query_source: held_out.source,
            image_budget: config.image_budget,
            t_max: t_cap,
            seed: rng.clone(),
        });
    }
    Err(Error::Sampler(format!(
        "no structure and context set covering the query classes found after {} attempts",
        config.structure_attempts
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_fixture;

    fn config(side: usize) -> SamplerConfig {
        SamplerConfig {
            limits: StructureLimits {
                image_side: side,
                ..StructureLimits::default()
            },
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn budget_bounds_chain_length() {
        let recs = generate_fixture(6, 3, 32, &RngState::new(0)).unwrap();
        let mut cfg = config(32);
        cfg.n_context_max = 1;
        cfg.limits.max_generative = 7;
        cfg.limits.max_transforms = 5;
        cfg.limits.max_discriminative = 8;
        for i in 0..40 {
            let b = sample_cqo(&recs, &RngState::new(i), &cfg).unwrap();
            assert_eq!(b.context.len(), 1);
            assert!(b.context[0].len() <= 15 && b.chain_len() <= 15);
            assert!(b.image_count() <= 30);
        }
    }

    #[test]
    fn single_class_fixture_always_covers() {
        let recs = generate_fixture(5, 1, 32, &RngState::new(2)).unwrap();
        for i in 0..20 {
            let b = sample_cqo(&recs, &RngState::new(i), &config(32)).unwrap();
            assert_eq!(b.query_source.keep, BTreeSet::from([1]));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let recs = generate_fixture(6, 3, 32, &RngState::new(0)).unwrap();
        let a = sample_cqo(&recs, &RngState::new(9), &config(32)).unwrap();
        let b = sample_cqo(&recs, &RngState::new(9), &config(32)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_records_is_an_error() {
        let recs = generate_fixture(1, 2, 32, &RngState::new(0)).unwrap();
        assert!(matches!(
            sample_cqo(&recs, &RngState::new(0), &config(32)),
            Err(Error::Sampler(_))
        ));
    }
}
