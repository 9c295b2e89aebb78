use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ClassId, DatasetRecord, ImageRaster, Palette};
use crate::rng::RngState;
use crate::task_ops::{
    apply_generative, apply_transform, apply_transform_mask, render_discriminative, subsample_classes,
};

use super::structure::{ChainElement, TaskStructure};

/// Everything needed to re-derive a chain from its dataset record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSource {
    pub record_id: String,
    pub keep: BTreeSet<ClassId>,
    pub rng: RngState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageChain {
    pub images: Vec<ImageRaster>,
    pub source: ChainSource,
    pub palette: Palette,
}

impl ImageChain {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Builds one chain for `record` following `structure`.
pub fn realize_chain(
    record: &DatasetRecord,
    structure: &TaskStructure,
    palette: &Palette,
    keep: &BTreeSet<ClassId>,
    t_max: usize,
    rng: &RngState,
) -> Result<ImageChain> {
    structure.validate(t_max)?;
    let t = structure.chain_len(keep.len());
    if t > t_max {
        return Err(Error::Sampler(format!(
            "chain of {t} images for {} classes exceeds t_max {t_max}",
            keep.len()
        )));
    }
    if !palette.covers(keep) {
        return Err(Error::Palette(format!("palette does not cover keep-set {keep:?}")));
    }
    let mask = subsample_classes(&record.mask, keep)?;
    let mut draws = rng.clone();

    let g = structure.generative.len();
    let mut degraded: Vec<ImageRaster> = Vec::with_capacity(g);
    let mut cur = record.image.clone();
    for kind in structure.generative.iter().rev() {
        cur = apply_generative(&cur, kind, &mut draws)?;
        degraded.push(cur.clone());
    }
    degraded.reverse();

    let mut images = degraded;
    images.push(record.image.clone());

    let mut cur = record.image.clone();
    let mut cur_mask = mask;
    for &kind in &structure.transforms {
        cur = apply_transform(&cur, kind)?;
        cur_mask = apply_transform_mask(&cur_mask, kind)?;
        images.push(cur.clone());
    }

    for element in structure.elements(keep).into_iter().skip(images.len()) {
        let ChainElement::Rendered { kind, class } = element else {
            unreachable!("rendered elements follow the transforms");
        };
        let rendered = match class {
            None => render_discriminative(&cur_mask, kind, palette)?,
            Some(c) => render_discriminative(
                &subsample_classes(&cur_mask, &BTreeSet::from([c]))?,
                kind,
                palette,
            )?,
        };
        images.push(rendered);
    }
    debug_assert_eq!(images.len(), t);

    Ok(ImageChain {
        images,
        source: ChainSource {
            record_id: record.id.clone(),
            keep: keep.clone(),
            rng: rng.clone(),
        },
        palette: palette.clone(),
    })
}
