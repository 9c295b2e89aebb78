use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::raster::{ClassId, DatasetRecord, ImageRaster, Palette, BACKGROUND};
use crate::task_ops::{apply_generative, apply_transform};

use super::bundle::CqoBundle;
use super::chain::realize_chain;
use super::structure::ChainElement;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardrailRule {
    Grammar,
    SharedStructure,
    SharedPalette,
    ClassCover,
    Budget,
    Composition,
}

impl fmt::Display for GuardrailRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GuardrailRule::Grammar => "grammar",
            GuardrailRule::SharedStructure => "shared-structure",
            GuardrailRule::SharedPalette => "shared-palette",
            GuardrailRule::ClassCover => "class-cover",
            GuardrailRule::Budget => "budget",
            GuardrailRule::Composition => "composition",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardrailResult {
    pub rule: GuardrailRule,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardrailReport {
    pub results: Vec<GuardrailResult>,
}

impl GuardrailReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn get(&self, rule: GuardrailRule) -> Option<&GuardrailResult> {
        self.results.iter().find(|r| r.rule == rule)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GuardrailResult> {
        self.results.iter().filter(|r| !r.passed)
    }

    fn push(&mut self, rule: GuardrailRule, failure: Option<String>) {
        self.results.push(GuardrailResult {
            rule,
            passed: failure.is_none(),
            detail: failure.unwrap_or_else(|| "ok".into()),
        });
    }
}

/// Classes whose palette color appears in `img`, and whether every pixel
/// carries a palette color.
fn rendered_classes(img: &ImageRaster, palette: &Palette) -> (BTreeSet<ClassId>, bool) {
    let mut classes = BTreeSet::new();
    let mut clean = true;
    for px in img.pixels().chunks_exact(3) {
        match palette.class_of([px[0], px[1], px[2]]) {
            Some(BACKGROUND) => {}
            Some(c) => {
                classes.insert(c);
            }
            None => clean = false,
        }
    }
    (classes, clean)
}

/// Checks every guardrail of a bundle. With `source` records the held-out
/// chain is re-derived from its record and compared bit-exactly; without
/// them only the image-derived part (degradations and transforms of the raw
/// image) is re-derived.
pub fn check_guardrails(bundle: &CqoBundle, source: Option<&[DatasetRecord]>) -> GuardrailReport {
    let mut report = GuardrailReport::default();
    let s = &bundle.structure;
    let t = bundle.chain_len();

    let grammar = s.validate(bundle.t_max).err().map(|e| e.to_string()).or_else(|| {
        (s.chain_len(bundle.query_source.keep.len()) != t)
            .then(|| format!("held-out chain has {t} images, structure implies {}", s.chain_len(bundle.query_source.keep.len())))
    });
    report.push(GuardrailRule::Grammar, grammar);

    let dims = bundle.query.dims();
    let shared = bundle
        .context
        .iter()
        .enumerate()
        .find_map(|(i, c)| {
            if c.len() != t {
                Some(format!("context {i} has {} images, held-out chain has {t}", c.len()))
            } else if s.chain_len(c.source.keep.len()) != c.len() {
                Some(format!("context {i} length disagrees with its keep-set"))
            } else {
                None
            }
        })
        .or_else(|| {
            bundle
                .images()
                .iter()
                .any(|(_, img)| img.dims() != dims)
                .then(|| "images do not share one raster size".to_string())
        });
    report.push(GuardrailRule::SharedStructure, shared);

    let query_elements = bundle.query_elements();
    let mut context_classes = BTreeSet::new();
    let mut palette_failure = None;
    for (i, c) in bundle.context.iter().enumerate() {
        if c.palette != bundle.palette {
            palette_failure.get_or_insert(format!("context {i} carries a different palette"));
        }
        context_classes.extend(c.source.keep.iter().copied());
        for (j, (img, el)) in c.images.iter().zip(s.elements(&c.source.keep)).enumerate() {
            if el.is_discriminative() {
                let (classes, clean) = rendered_classes(img, &bundle.palette);
                if !clean {
                    palette_failure.get_or_insert(format!("context {i} image {j} has off-palette colors"));
                }
                context_classes.extend(classes);
            }
        }
    }
    let mut output_classes = BTreeSet::new();
    for (j, (img, el)) in bundle.output.iter().zip(query_elements.iter().skip(1)).enumerate() {
        if el.is_discriminative() {
            let (classes, clean) = rendered_classes(img, &bundle.palette);
            if !clean {
                palette_failure.get_or_insert(format!("output image {j} has off-palette colors"));
            }
            output_classes.extend(classes);
        }
    }
    report.push(GuardrailRule::SharedPalette, palette_failure);

    let uncovered: BTreeSet<ClassId> = output_classes
        .union(&bundle.query_source.keep)
        .filter(|c| !context_classes.contains(c))
        .copied()
        .collect();
    let cover = if !s.discriminative.is_empty() && !uncovered.is_empty() {
        Some(format!("classes {uncovered:?} appear in the output but not in the context"))
    } else if !bundle.query_source.keep.iter().all(|c| context_classes.contains(c)) {
        Some("held-out keep-set is not covered by the context keep-sets".into())
    } else {
        None
    };
    report.push(GuardrailRule::ClassCover, cover);

    let n = bundle.context.len();
    let budget = ((n + 1) * t > bundle.image_budget || n == 0).then(|| {
        format!("{} chains of {t} images exceed the budget of {}", n + 1, bundle.image_budget)
    });
    report.push(GuardrailRule::Budget, budget);

    report.push(GuardrailRule::Composition, composition_failure(bundle, source));
    report
}

fn composition_failure(bundle: &CqoBundle, source: Option<&[DatasetRecord]>) -> Option<String> {
    let held_out: Vec<&ImageRaster> = std::iter::once(&bundle.query).chain(bundle.output.iter()).collect();
    if let Some(records) = source {
        let record = records
            .iter()
            .find(|r| r.id == bundle.query_source.record_id && r.dataset_id == bundle.dataset_id);
        let Some(record) = record else {
            return Some(format!("record {} not found in the source", bundle.query_source.record_id));
        };
        return match realize_chain(
            record,
            &bundle.structure,
            &bundle.palette,
            &bundle.query_source.keep,
            bundle.t_max,
            &bundle.query_source.rng,
        ) {
            Err(e) => Some(format!("re-derivation failed: {e}")),
            Ok(chain) => {
                let mismatch = chain.images.iter().zip(&held_out).position(|(a, b)| a != *b);
                match mismatch {
                    Some(p) => Some(format!("held-out position {p} differs from its re-derivation")),
                    None if chain.images.len() != held_out.len() => Some("re-derived length differs".into()),
                    None => None,
                }
            }
        };
    }

    let s = &bundle.structure;
    let pivot = s.pivot();
    let Some(raw) = held_out.get(pivot) else {
        return Some("held-out chain is shorter than its generative prefix".into());
    };
    let mut draws = bundle.query_source.rng.clone();
    let mut cur = (*raw).clone();
    for (i, kind) in s.generative.iter().enumerate().rev() {
        match apply_generative(&cur, kind, &mut draws) {
            Ok(next) => cur = next,
            Err(e) => return Some(e.to_string()),
        }
        if &cur != held_out[i] {
            return Some(format!("degraded position {i} differs from its re-derivation"));
        }
    }
    let mut cur = (*raw).clone();
    for (i, kind) in s.transforms.iter().enumerate() {
        match apply_transform(&cur, *kind) {
            Ok(next) => cur = next,
            Err(e) => return Some(e.to_string()),
        }
        if held_out.get(pivot + 1 + i) != Some(&&cur) {
            return Some(format!("transform position {} differs from its re-derivation", pivot + 1 + i));
        }
    }
    let expected = bundle.query_elements();
    if expected.len() != held_out.len() || !matches!(expected.get(pivot), Some(ChainElement::Image)) {
        return Some("held-out layout disagrees with the structure".into());
    }
    None
}
