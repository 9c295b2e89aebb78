use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ClassId;
use crate::rng::RngState;
use crate::task_ops::{DiscriminativeKind, GenerativeFamily, GenerativeKind, TransformKind};

pub const DEFAULT_T_MAX: usize = 15;
pub const DEFAULT_IMAGE_BUDGET: usize = 30;

/// How class-wise discriminative outputs are grouped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingMode {
    /// Every class for one task, then the next task.
    TaskBasis,
    /// Every task for one class, then the next class.
    ClassBasis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskStructure {
    pub generative: Vec<GenerativeKind>,
    pub transforms: Vec<TransformKind>,
    pub discriminative: Vec<DiscriminativeKind>,
    pub ordering: OrderingMode,
    /// One discriminative image per kept class instead of one for all classes.
    pub classwise: bool,
}

/// What a chain position holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "element", rename_all = "snake_case")]
pub enum ChainElement {
    /// `generative[index..]` applied to the raw image.
    Degraded { index: usize, family: GenerativeFamily },
    Image,
    /// Raw image after `transforms[..=index]`.
    Transformed { index: usize, kind: TransformKind },
    Rendered { kind: DiscriminativeKind, class: Option<ClassId> },
}

impl ChainElement {
    pub fn is_discriminative(&self) -> bool {
        matches!(self, ChainElement::Rendered { .. })
    }
}

impl TaskStructure {
    /// A bare `image, discriminative` structure, handy for tests and tools.
    pub fn single_task(kind: DiscriminativeKind) -> Self {
        Self {
            generative: Vec::new(),
            transforms: Vec::new(),
            discriminative: vec![kind],
            ordering: OrderingMode::TaskBasis,
            classwise: false,
        }
    }

    /// Chain length when `n_classes` classes are kept.
    pub fn chain_len(&self, n_classes: usize) -> usize {
        let disc = if self.classwise {
            self.discriminative.len() * n_classes
        } else {
            self.discriminative.len()
        };
        self.generative.len() + 1 + self.transforms.len() + disc
    }

    /// Length without class-wise expansion.
    pub fn base_len(&self) -> usize {
        self.generative.len() + 1 + self.transforms.len() + self.discriminative.len()
    }

    /// Index of the raw image in every chain.
    pub fn pivot(&self) -> usize {
        self.generative.len()
    }

    pub fn validate(&self, t_max: usize) -> Result<()> {
        for k in &self.discriminative {
            k.validate()?;
        }
        let t = self.base_len();
        if t < 2 {
            return Err(Error::Sampler("structure needs at least one task besides the image".into()));
        }
        if t > t_max {
            return Err(Error::Sampler(format!("structure length {t} exceeds t_max {t_max}")));
        }
        Ok(())
    }

    /// Position-by-position layout of a chain that keeps `keep`.
    pub fn elements(&self, keep: &BTreeSet<ClassId>) -> Vec<ChainElement> {
        let mut out: Vec<ChainElement> = self
            .generative
            .iter()
            .enumerate()
            .map(|(index, k)| ChainElement::Degraded { index, family: k.family() })
            .collect();
        out.push(ChainElement::Image);
        out.extend(
            self.transforms
                .iter()
                .enumerate()
                .map(|(index, &kind)| ChainElement::Transformed { index, kind }),
        );
        if !self.classwise {
            out.extend(
                self.discriminative
                    .iter()
                    .map(|&kind| ChainElement::Rendered { kind, class: None }),
            );
        } else {
            match self.ordering {
                OrderingMode::TaskBasis => {
                    for &kind in &self.discriminative {
                        for &c in keep {
                            out.push(ChainElement::Rendered { kind, class: Some(c) });
                        }
                    }
                }
                OrderingMode::ClassBasis => {
                    for &c in keep {
                        for &kind in &self.discriminative {
                            out.push(ChainElement::Rendered { kind, class: Some(c) });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Bounds for [`sample_structure`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureLimits {
    pub t_max: usize,
    pub max_generative: usize,
    pub max_transforms: usize,
    pub max_discriminative: usize,
    /// Side of the images the structure will be applied to.
    pub image_side: usize,
}

impl Default for StructureLimits {
    fn default() -> Self {
        Self {
            t_max: DEFAULT_T_MAX,
            max_generative: 3,
            max_transforms: 2,
            max_discriminative: 3,
            image_side: crate::raster::DEFAULT_CANONICAL_SIDE,
        }
    }
}

/// Draws a grammar-valid structure: family counts uniform over every
/// admissible `(generative, transforms, discriminative)` triple, then the
/// concrete kinds and their parameters.
pub fn sample_structure(rng: &mut RngState, limits: &StructureLimits) -> Result<TaskStructure> {
    let mut triples = Vec::new();
    for g in 0..=limits.max_generative {
        for tr in 0..=limits.max_transforms {
            for d in 0..=limits.max_discriminative {
                let t = g + 1 + tr + d;
                if t >= 2 && t <= limits.t_max {
                    triples.push((g, tr, d));
                }
            }
        }
    }
    let &(g, tr, d) = triples.choose(rng).ok_or_else(|| {
        Error::Sampler(format!("limits {limits:?} admit no structure with t >= 2"))
    })?;

    let mut families = GenerativeFamily::ALL.to_vec();
    families.shuffle(rng);
    let generative = (0..g)
        .map(|i| {
            let fam = if i < families.len() {
                families[i]
            } else {
                *GenerativeFamily::ALL.choose(rng).expect("non-empty")
            };
            GenerativeKind::sample(fam, limits.image_side, rng)
        })
        .collect();
    let transforms = (0..tr)
        .map(|_| *TransformKind::ALL.choose(rng).expect("non-empty"))
        .collect();
    let mut kinds = DiscriminativeKind::all();
    kinds.shuffle(rng);
    let discriminative = (0..d)
        .map(|i| {
            if i < kinds.len() {
                kinds[i]
            } else {
                *kinds.choose(rng).expect("non-empty")
            }
        })
        .collect();
    let ordering = if rng.random_bool(0.5) {
        OrderingMode::TaskBasis
    } else {
        OrderingMode::ClassBasis
    };
    let classwise = d > 0 && rng.random_bool(0.5);
    Ok(TaskStructure {
        generative,
        transforms,
        discriminative,
        ordering,
        classwise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limits(t_max: usize) -> StructureLimits {
        StructureLimits {
            t_max,
            max_generative: 4,
            max_transforms: 4,
            max_discriminative: 8,
            image_side: 64,
        }
    }

    #[test]
    fn t_max_two_forces_single_task() {
        let mut rng = RngState::new(1);
        for _ in 0..50 {
            let s = sample_structure(&mut rng, &limits(2)).unwrap();
            assert_eq!(s.base_len(), 2);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = sample_structure(&mut RngState::new(0), &limits(15)).unwrap();
        let b = sample_structure(&mut RngState::new(0), &limits(15)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_limits_error() {
        let mut l = limits(1);
        assert!(matches!(sample_structure(&mut RngState::new(0), &l), Err(Error::Sampler(_))));
        l = limits(5);
        l.max_generative = 0;
        l.max_transforms = 0;
        l.max_discriminative = 0;
        assert!(matches!(sample_structure(&mut RngState::new(0), &l), Err(Error::Sampler(_))));
    }

    /// Independent grammar check over element layouts.
    fn grammar_ok(elements: &[ChainElement]) -> bool {
        let rank = |e: &ChainElement| match e {
            ChainElement::Degraded { .. } => 0,
            ChainElement::Image => 1,
            ChainElement::Transformed { .. } => 2,
            ChainElement::Rendered { .. } => 3,
        };
        let images = elements.iter().filter(|e| **e == ChainElement::Image).count();
        images == 1 && elements.windows(2).all(|w| rank(&w[0]) <= rank(&w[1])) && elements.len() >= 2
    }

    #[test]
    fn ten_thousand_draws_are_grammar_valid() {
        let mut rng = RngState::new(42);
        let l = limits(15);
        for _ in 0..10_000 {
            let s = sample_structure(&mut rng, &l).unwrap();
            s.validate(15).unwrap();
            let els = s.elements(&BTreeSet::from([1]));
            assert!(grammar_ok(&els));
            assert!(els.len() <= 15);
        }
    }

    #[test]
    fn classwise_ordering_layouts() {
        let mut s = TaskStructure::single_task(DiscriminativeKind::Segmentation);
        s.discriminative.push(DiscriminativeKind::Edges { width: 1 });
        s.classwise = true;
        let keep = BTreeSet::from([1, 2]);
        let seg = DiscriminativeKind::Segmentation;
        let edg = DiscriminativeKind::Edges { width: 1 };
        let r = |kind, c| ChainElement::Rendered { kind, class: Some(c) };
        assert_eq!(s.elements(&keep)[1..], [r(seg, 1), r(seg, 2), r(edg, 1), r(edg, 2)]);
        s.ordering = OrderingMode::ClassBasis;
        assert_eq!(s.elements(&keep)[1..], [r(seg, 1), r(edg, 1), r(seg, 2), r(edg, 2)]);
        assert_eq!(s.chain_len(2), 5);
    }
}
