use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ClassId, ImageRaster, Palette, SegMap, BACKGROUND};

use super::components::{connected_components, BinaryRaster, Component};
use super::distance::squared_distance_transform;
use super::skeleton::medial_axis;

/// Stroke widths available to thin-structure renderings.
pub const STROKE_WIDTHS: [usize; 3] = [1, 3, 5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiscriminativeKind {
    Segmentation,
    Edges { width: usize },
    Boxes { width: usize },
    Skeleton { width: usize },
    Points { width: usize },
}

impl DiscriminativeKind {
    pub fn all() -> Vec<DiscriminativeKind> {
        let mut out = vec![DiscriminativeKind::Segmentation];
        for make in [
            (|width| DiscriminativeKind::Boxes { width }) as fn(usize) -> DiscriminativeKind,
            |width| DiscriminativeKind::Points { width },
            |width| DiscriminativeKind::Edges { width },
            |width| DiscriminativeKind::Skeleton { width },
        ] {
            out.extend(STROKE_WIDTHS.iter().map(|&w| make(w)));
        }
        out
    }

    pub fn width(&self) -> Option<usize> {
        match *self {
            DiscriminativeKind::Segmentation => None,
            DiscriminativeKind::Edges { width }
            | DiscriminativeKind::Boxes { width }
            | DiscriminativeKind::Skeleton { width }
            | DiscriminativeKind::Points { width } => Some(width),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            DiscriminativeKind::Segmentation => "segmentation",
            DiscriminativeKind::Edges { .. } => "edges",
            DiscriminativeKind::Boxes { .. } => "boxes",
            DiscriminativeKind::Skeleton { .. } => "skeleton",
            DiscriminativeKind::Points { .. } => "points",
        }
    }

    /// `segmentation`, `edges_w3`, ...
    pub fn label(&self) -> String {
        match self.width() {
            None => self.family_name().into(),
            Some(w) => format!("{}_w{w}", self.family_name()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.width() {
            Some(w) if !STROKE_WIDTHS.contains(&w) => Err(Error::Parameter(format!(
                "stroke width {w} not in {STROKE_WIDTHS:?}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Renders `mask` as a background-colored raster with per-class structures
/// in palette colors. Classes are painted in ascending id order.
pub fn render_discriminative(
    mask: &SegMap,
    kind: DiscriminativeKind,
    palette: &Palette,
) -> Result<ImageRaster> {
    kind.validate()?;
    if let Some(missing) = mask.present().iter().find(|c| palette.color(**c).is_none()) {
        return Err(Error::Palette(format!("class {missing} has no palette color")));
    }
    let (w, h) = mask.dims();
    let mut out = ImageRaster::filled(w, h, palette.background());
    if kind == DiscriminativeKind::Segmentation {
        for y in 0..h {
            for x in 0..w {
                let c = mask.get(x, y);
                if c != BACKGROUND {
                    out.set(x, y, palette.color(c).expect("checked above"));
                }
            }
        }
        return Ok(out);
    }
    let width = kind.width().expect("thin-structure kinds carry a width");
    for &class in mask.present() {
        let color = palette.color(class).expect("checked above");
        let strokes = match kind {
            DiscriminativeKind::Edges { .. } => class_edges(mask, class).dilate_square(width),
            DiscriminativeKind::Boxes { .. } => {
                let mut r = BinaryRaster::new(w, h);
                for comp in connected_components(mask, class) {
                    draw_box(&mut r, &comp, width);
                }
                r
            }
            DiscriminativeKind::Skeleton { .. } => {
                let mut r = BinaryRaster::new(w, h);
                for comp in connected_components(mask, class) {
                    let skel = medial_axis(&comp.pixels);
                    for y in 0..skel.height {
                        for x in 0..skel.width {
                            if skel.get(x, y) {
                                r.set(comp.bbox.x0 + x, comp.bbox.y0 + y, true);
                            }
                        }
                    }
                }
                r.dilate_square(width)
            }
            DiscriminativeKind::Points { .. } => {
                let mut r = BinaryRaster::new(w, h);
                for comp in connected_components(mask, class) {
                    let (px, py) = representative_point(&comp);
                    draw_disc(&mut r, px, py, width);
                }
                r
            }
            DiscriminativeKind::Segmentation => unreachable!(),
        };
        for y in 0..h {
            for x in 0..w {
                if strokes.get(x, y) {
                    out.set(x, y, color);
                }
            }
        }
    }
    Ok(out)
}

/// Pixels of `class` with a 4-neighbor of a different class. Neighbors
/// outside the raster do not count.
fn class_edges(mask: &SegMap, class: ClassId) -> BinaryRaster {
    let (w, h) = mask.dims();
    let mut r = BinaryRaster::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) != class {
                continue;
            }
            let differs = (x > 0 && mask.get(x - 1, y) != class)
                || (x + 1 < w && mask.get(x + 1, y) != class)
                || (y > 0 && mask.get(x, y - 1) != class)
                || (y + 1 < h && mask.get(x, y + 1) != class);
            if differs {
                r.set(x, y, true);
            }
        }
    }
    r
}

/// Bounding-box outline with the stroke centered on the box perimeter.
fn draw_box(r: &mut BinaryRaster, comp: &Component, width: usize) {
    let half = (width / 2) as isize;
    let b = comp.bbox;
    let (x0, y0, x1, y1) = (b.x0 as isize, b.y0 as isize, b.x1 as isize, b.y1 as isize);
    for y in (y0 - half).max(0)..=(y1 + half).min(r.height as isize - 1) {
        for x in (x0 - half).max(0)..=(x1 + half).min(r.width as isize - 1) {
            let interior = x > x0 + half && x < x1 - half && y > y0 + half && y < y1 - half;
            if !interior {
                r.set(x as usize, y as usize, true);
            }
        }
    }
}

fn draw_disc(r: &mut BinaryRaster, cx: usize, cy: usize, width: usize) {
    let radius = width as f64 / 2.0;
    let reach = (width / 2) as isize;
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            if ((dx * dx + dy * dy) as f64) > radius * radius {
                continue;
            }
            let (x, y) = (cx as isize + dx, cy as isize + dy);
            if x >= 0 && y >= 0 && (x as usize) < r.width && (y as usize) < r.height {
                r.set(x as usize, y as usize, true);
            }
        }
    }
}

/// Innermost pixel of the component: the distance-transform maximum, ties
/// broken toward the centroid and then row-major order.
fn representative_point(comp: &Component) -> (usize, usize) {
    let px = &comp.pixels;
    let dt = squared_distance_transform(px);
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for y in 0..px.height {
        for x in 0..px.width {
            if px.get(x, y) {
                sx += x as f64;
                sy += y as f64;
                n += 1.0;
            }
        }
    }
    let (cx, cy) = (sx / n, sy / n);
    let mut best: Option<(f64, f64, usize, usize)> = None;
    for y in 0..px.height {
        for x in 0..px.width {
            if !px.get(x, y) {
                continue;
            }
            let d = dt[y * px.width + x];
            let c = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            let better = match best {
                None => true,
                Some((bd, bc, _, _)) => d > bd || (d == bd && c < bc),
            };
            if better {
                best = Some((d, c, x, y));
            }
        }
    }
    let (_, _, x, y) = best.expect("components are non-empty");
    (comp.bbox.x0 + x, comp.bbox.y0 + y)
}

/// Sends every class outside `keep` to background.
pub fn subsample_classes(mask: &SegMap, keep: &BTreeSet<ClassId>) -> Result<SegMap> {
    if keep.is_empty() {
        return Err(Error::Parameter("class keep-set must not be empty".into()));
    }
    if let Some(bad) = keep.iter().find(|c| !mask.present().contains(c)) {
        return Err(Error::Parameter(format!("class {bad} is not present in the mask")));
    }
    Ok(mask.map_classes(|c| if keep.contains(&c) { c } else { BACKGROUND }))
}
