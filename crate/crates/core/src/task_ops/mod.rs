//! Single-image task operators: generative degradations, geometric
//! transformations and discriminative renderings of segmentation masks.

mod components;
mod discriminative;
mod distance;
mod generative;
mod palette;
mod skeleton;
mod transform;

pub use components::{connected_components, label_components, BBox, BinaryRaster, Component};
pub use discriminative::{render_discriminative, subsample_classes, DiscriminativeKind, STROKE_WIDTHS};
pub use distance::squared_distance_transform;
pub use generative::{apply_generative, GenerativeFamily, GenerativeKind, Rect};
pub use palette::{sample_palette, sample_palette_with_floor, DEFAULT_PALETTE_FLOOR};
pub use skeleton::medial_axis;
pub use transform::{apply_transform, apply_transform_mask, TransformKind};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::{DatasetRecord, ImageRaster, Palette};
use crate::rng::RngState;

/// Super-resolution target sides offered by the enrichment table.
pub const SUPER_RES_SIDES: [usize; 3] = [25, 50, 100];

/// One concrete enrichment output type: the raw image, a generative family
/// (super-resolution pinned to its target side), a transform or a
/// discriminative rendering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskVariant {
    Image,
    SuperRes { target_side: usize },
    Generative { family: GenerativeFamily },
    Transform { kind: TransformKind },
    Discriminative { kind: DiscriminativeKind },
}

impl TaskVariant {
    /// Every enrichment variant: all generative families, the three
    /// super-resolution sides, five transforms, segmentation, and each
    /// thin-structure kind at every stroke width.
    pub fn all() -> Vec<TaskVariant> {
        let mut out = vec![TaskVariant::Image];
        out.extend(
            SUPER_RES_SIDES
                .iter()
                .map(|&target_side| TaskVariant::SuperRes { target_side }),
        );
        out.extend(
            GenerativeFamily::ALL
                .iter()
                .filter(|f| **f != GenerativeFamily::SuperRes)
                .map(|&family| TaskVariant::Generative { family }),
        );
        out.extend(TransformKind::ALL.iter().map(|&kind| TaskVariant::Transform { kind }));
        out.extend(
            DiscriminativeKind::all()
                .into_iter()
                .map(|kind| TaskVariant::Discriminative { kind }),
        );
        out
    }

    /// Balancing bucket: variants that differ only in width or side share one.
    pub fn bucket(&self) -> String {
        match self {
            TaskVariant::Image => "image".into(),
            TaskVariant::SuperRes { .. } => GenerativeFamily::SuperRes.name().into(),
            TaskVariant::Generative { family } => family.name().into(),
            TaskVariant::Transform { kind } => kind.name().into(),
            TaskVariant::Discriminative { kind } => kind.family_name().into(),
        }
    }

    /// Stable file stem, unique per variant.
    pub fn file_stem(&self) -> String {
        match self {
            TaskVariant::Image => "image".into(),
            TaskVariant::SuperRes { target_side } => format!("super_res_{target_side}"),
            TaskVariant::Generative { family } => family.name().into(),
            TaskVariant::Transform { kind } => kind.name().into(),
            TaskVariant::Discriminative { kind } => kind.label(),
        }
    }

    pub fn is_discriminative(&self) -> bool {
        matches!(self, TaskVariant::Discriminative { .. })
    }
}

/// Renders one enrichment variant of `record`. Generative parameters are
/// drawn from `rng`; discriminative outputs cover every class in the mask.
pub fn render_variant(
    record: &DatasetRecord,
    variant: TaskVariant,
    palette: &Palette,
    rng: &mut RngState,
) -> Result<ImageRaster> {
    match variant {
        TaskVariant::Image => Ok(record.image.clone()),
        TaskVariant::SuperRes { target_side } => {
            apply_generative(&record.image, &GenerativeKind::SuperRes { target_side }, rng)
        }
        TaskVariant::Generative { family } => {
            let kind = GenerativeKind::sample(family, record.image.width().min(record.image.height()), rng);
            apply_generative(&record.image, &kind, rng)
        }
        TaskVariant::Transform { kind } => apply_transform(&record.image, kind),
        TaskVariant::Discriminative { kind } => render_discriminative(&record.mask, kind, palette),
    }
}
