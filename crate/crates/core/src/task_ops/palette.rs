use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::{rgb_distance_sq, ClassId, Palette, Rgb, BACKGROUND};
use crate::rng::RngState;

/// Minimum Euclidean RGB distance between any two palette colors.
pub const DEFAULT_PALETTE_FLOOR: f64 = 48.0;

const DRAWS_PER_COLOR: usize = 2000;

/// Upper bound on how many points with pairwise distance `floor` fit in the
/// RGB cube: disjoint balls of radius floor/2 inside the cube grown by floor/2.
fn packing_bound(floor: f64) -> f64 {
    if floor <= 0.0 {
        return f64::INFINITY;
    }
    let r = floor / 2.0;
    (255.0 + floor).powi(3) / (4.0 / 3.0 * std::f64::consts::PI * r.powi(3))
}

pub fn sample_palette(classes: &BTreeSet<ClassId>, rng: &mut RngState) -> Result<Palette> {
    sample_palette_with_floor(classes, DEFAULT_PALETTE_FLOOR, rng)
}

/// Random injective palette on a black background, every pair of colors (the
/// background included) at least `floor` apart.
pub fn sample_palette_with_floor(
    classes: &BTreeSet<ClassId>,
    floor: f64,
    rng: &mut RngState,
) -> Result<Palette> {
    if classes.is_empty() {
        return Err(Error::Palette("no classes to color".into()));
    }
    if classes.contains(&BACKGROUND) {
        return Err(Error::Palette("class id 0 is reserved for background".into()));
    }
    if (classes.len() + 1) as f64 > packing_bound(floor) {
        return Err(Error::Palette(format!(
            "{} colors cannot be {floor} apart in RGB space",
            classes.len() + 1
        )));
    }
    let background: Rgb = [0, 0, 0];
    let floor_sq = (floor * floor).ceil() as u32;
    let mut used = vec![background];
    let mut colors = BTreeMap::new();
    for &class in classes {
        let mut found = None;
        for _ in 0..DRAWS_PER_COLOR {
            let c: Rgb = [rng.random(), rng.random(), rng.random()];
            if used.iter().all(|u| rgb_distance_sq(*u, c) >= floor_sq) {
                found = Some(c);
                break;
            }
        }
        let c = found.ok_or_else(|| {
            Error::Palette(format!(
                "could not place color {} of {} at distance {floor}",
                colors.len() + 1,
                classes.len()
            ))
        })?;
        used.push(c);
        colors.insert(class, c);
    }
    Palette::new(colors, background)
}
