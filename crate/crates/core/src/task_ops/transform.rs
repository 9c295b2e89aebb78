use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ImageRaster, SegMap};

/// Geometric transforms. Rotations are clockwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    FlipH,
    FlipV,
    Rot90,
    Rot180,
    Rot270,
}

impl TransformKind {
    pub const ALL: [TransformKind; 5] = [
        TransformKind::FlipH,
        TransformKind::FlipV,
        TransformKind::Rot90,
        TransformKind::Rot180,
        TransformKind::Rot270,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TransformKind::FlipH => "flip_h",
            TransformKind::FlipV => "flip_v",
            TransformKind::Rot90 => "rot90",
            TransformKind::Rot180 => "rot180",
            TransformKind::Rot270 => "rot270",
        }
    }

    pub fn inverse(&self) -> TransformKind {
        match self {
            TransformKind::Rot90 => TransformKind::Rot270,
            TransformKind::Rot270 => TransformKind::Rot90,
            other => *other,
        }
    }

    fn is_rotation(&self) -> bool {
        matches!(self, TransformKind::Rot90 | TransformKind::Rot180 | TransformKind::Rot270)
    }

    /// Source coordinate read for output pixel `(x, y)` of a `w`×`h` input.
    #[inline]
    fn source(&self, x: usize, y: usize, w: usize, h: usize) -> (usize, usize) {
        match self {
            TransformKind::FlipH => (w - 1 - x, y),
            TransformKind::FlipV => (x, h - 1 - y),
            TransformKind::Rot90 => (y, h - 1 - x),
            TransformKind::Rot180 => (w - 1 - x, h - 1 - y),
            TransformKind::Rot270 => (w - 1 - y, x),
        }
    }
}

fn check(kind: TransformKind, w: usize, h: usize) -> Result<()> {
    if kind.is_rotation() && w != h {
        return Err(Error::Dimension(format!(
            "{} requires a square raster, got {w}x{h}",
            kind.name()
        )));
    }
    Ok(())
}

fn permute<T: Copy>(data: &[T], w: usize, h: usize, channels: usize, kind: TransformKind) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len());
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = kind.source(x, y, w, h);
            let i = (sy * w + sx) * channels;
            out.extend_from_slice(&data[i..i + channels]);
        }
    }
    out
}

/// Exact pixel permutation; values are never changed.
pub fn apply_transform(image: &ImageRaster, kind: TransformKind) -> Result<ImageRaster> {
    let (w, h) = image.dims();
    check(kind, w, h)?;
    ImageRaster::new(w, h, permute(image.pixels(), w, h, 3, kind))
}

pub fn apply_transform_mask(mask: &SegMap, kind: TransformKind) -> Result<SegMap> {
    let (w, h) = mask.dims();
    check(kind, w, h)?;
    SegMap::new(w, h, permute(mask.classes(), w, h, 1, kind))
}
