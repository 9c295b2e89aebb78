//! Dataset manifests, PNG ingestion and the synthetic fixture generator.
//!
//! A manifest is a JSON file naming the dataset, its class vocabulary and one
//! entry per record. Image and mask paths are resolved relative to the
//! manifest's directory. Masks are single-channel PNGs whose values are class
//! ids (0 = background).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ClassId, DatasetRecord, ImageRaster, Rgb, SegMap, BACKGROUND};
use crate::rng::RngState;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_id: String,
    pub classes: BTreeMap<ClassId, String>,
    pub records: Vec<ManifestEntry>,
}

/// Records of one dataset plus its declared class vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub id: String,
    pub classes: BTreeMap<ClassId, String>,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn class_ids(&self) -> BTreeSet<ClassId> {
        self.classes.keys().copied().collect()
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::ingest(path, e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::ingest(path, format!("bad manifest: {e}")))
}

pub fn read_image(path: &Path) -> Result<ImageRaster> {
    if !path.is_file() {
        return Err(Error::ingest(path, "image file not found"));
    }
    let img = image::open(path).map_err(|e| Error::ingest(path, e.to_string()))?;
    ImageRaster::from_rgb_image(&img.to_rgb8())
}

fn read_mask(path: &Path) -> Result<SegMap> {
    if !path.is_file() {
        return Err(Error::ingest(path, "mask file not found"));
    }
    let img = image::open(path).map_err(|e| Error::ingest(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let classes: Vec<ClassId> = match img {
        image::DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(ClassId::from).collect(),
        image::DynamicImage::ImageLuma16(buf) => {
            buf.into_raw().into_iter().map(ClassId::from).collect()
        }
        other => {
            return Err(Error::ingest(
                path,
                format!("mask must be single-channel, found {:?}", other.color()),
            ))
        }
    };
    SegMap::new(w, h, classes)
}

/// Loads every record named by the manifest, validating and resizing to a
/// `canonical_side` square.
pub fn load_dataset(manifest_path: &Path, canonical_side: usize) -> Result<Dataset> {
    if canonical_side == 0 {
        return Err(Error::Config("canonical_side must be positive".into()));
    }
    let manifest = read_manifest(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let allowed: BTreeSet<ClassId> = manifest.classes.keys().copied().collect();
    if allowed.contains(&BACKGROUND) {
        return Err(Error::ingest(manifest_path, "class id 0 is reserved for background"));
    }
    let mut records = Vec::with_capacity(manifest.records.len());
    for entry in &manifest.records {
        let image = read_image(&root.join(&entry.image))?;
        let mask = read_mask(&root.join(&entry.mask))?;
        if image.dims() != mask.dims() {
            return Err(Error::Validation {
                record: entry.id.clone(),
                message: format!("image is {:?} but mask is {:?}", image.dims(), mask.dims()),
            });
        }
        if let Some(bad) = mask.present().iter().find(|c| !allowed.contains(c)) {
            return Err(Error::Validation {
                record: entry.id.clone(),
                message: format!("mask contains class id {bad} not declared in the manifest"),
            });
        }
        let image = image.resize_bilinear(canonical_side, canonical_side);
        let mask = mask.resize_nearest(canonical_side, canonical_side);
        records.push(DatasetRecord::new(
            entry.id.clone(),
            manifest.dataset_id.clone(),
            image,
            mask,
        )?);
    }
    Ok(Dataset {
        id: manifest.dataset_id,
        classes: manifest.classes,
        records,
    })
}

pub fn write_image(path: &Path, image: &ImageRaster) -> Result<()> {
    image
        .to_rgb_image()
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::ingest(path, e.to_string()))
}

fn write_mask(path: &Path, mask: &SegMap) -> Result<()> {
    let (w, h) = (mask.width() as u32, mask.height() as u32);
    let max = mask.classes().iter().copied().max().unwrap_or(0);
    let result = if max <= u8::MAX as ClassId {
        let raw = mask.classes().iter().map(|&c| c as u8).collect();
        image::GrayImage::from_raw(w, h, raw)
            .expect("length matches")
            .save_with_format(path, image::ImageFormat::Png)
    } else if max <= u16::MAX as ClassId {
        let raw = mask.classes().iter().map(|&c| c as u16).collect();
        image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(w, h, raw)
            .expect("length matches")
            .save_with_format(path, image::ImageFormat::Png)
    } else {
        return Err(Error::ingest(path, format!("class id {max} does not fit a 16-bit mask")));
    };
    result.map_err(|e| Error::ingest(path, e.to_string()))
}

/// Writes `images/<id>.png`, `masks/<id>.png` and a manifest under `dir`.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<PathBuf> {
    let images = dir.join("images");
    let masks = dir.join("masks");
    for d in [&images, &masks] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut entries = Vec::with_capacity(dataset.records.len());
    for record in &dataset.records {
        let image_rel = PathBuf::from("images").join(format!("{}.png", record.id));
        let mask_rel = PathBuf::from("masks").join(format!("{}.png", record.id));
        write_image(&dir.join(&image_rel), &record.image)?;
        write_mask(&dir.join(&mask_rel), &record.mask)?;
        entries.push(ManifestEntry {
            id: record.id.clone(),
            image: image_rel,
            mask: mask_rel,
        });
    }
    let manifest = Manifest {
        dataset_id: dataset.id.clone(),
        classes: dataset.classes.clone(),
        records: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

const PLACEMENT_RETRIES: usize = 200;
const SHAPE_GAP: isize = 2;

#[derive(Clone, Copy)]
enum Shape {
    Ellipse,
    Rect,
}

#[derive(Clone, Copy)]
struct Placed {
    shape: Shape,
    cx: isize,
    cy: isize,
    ax: isize,
    ay: isize,
}

impl Placed {
    fn contains(&self, x: isize, y: isize) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        match self.shape {
            Shape::Rect => dx.abs() <= self.ax && dy.abs() <= self.ay,
            Shape::Ellipse => {
                let (a, b) = (self.ax as f64 + 0.5, self.ay as f64 + 0.5);
                (dx as f64 / a).powi(2) + (dy as f64 / b).powi(2) <= 1.0
            }
        }
    }

    /// Normalized distance from the center, 0 at the center and about 1 at the rim.
    fn radial(&self, x: isize, y: isize) -> f64 {
        let (dx, dy) = ((x - self.cx) as f64, (y - self.cy) as f64);
        ((dx / (self.ax as f64 + 0.5)).powi(2) + (dy / (self.ay as f64 + 0.5)).powi(2))
            .sqrt()
            .min(1.0)
    }

    fn overlaps(&self, other: &Placed) -> bool {
        (self.cx - other.cx).abs() <= self.ax + other.ax + SHAPE_GAP
            && (self.cy - other.cy).abs() <= self.ay + other.ay + SHAPE_GAP
    }
}

/// Class names used for fixture manifests: `class_1`, `class_2`, ...
pub fn fixture_classes(n_classes: usize) -> BTreeMap<ClassId, String> {
    (1..=n_classes as ClassId).map(|c| (c, format!("class_{c}"))).collect()
}

/// Where fixture shapes are placed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureLayout {
    /// Anywhere in the frame, rejecting overlaps.
    #[default]
    Scattered,
    /// Each class owns one cell of a square grid, shared by every record, and
    /// is jittered inside it. Gives the dataset a spatial prior like anatomy.
    Anchored,
}

/// Deterministic synthetic records: each record holds one filled ellipse or
/// rectangle for a random non-empty subset of the classes, on a smooth
/// gradient background, with per-class shading correlated with the mask.
pub fn generate_fixture(
    n_records: usize,
    n_classes: usize,
    side: usize,
    rng: &RngState,
) -> Result<Vec<DatasetRecord>> {
    generate_fixture_with(n_records, n_classes, side, FixtureLayout::Scattered, rng)
}

pub fn generate_fixture_with(
    n_records: usize,
    n_classes: usize,
    side: usize,
    layout: FixtureLayout,
    rng: &RngState,
) -> Result<Vec<DatasetRecord>> {
    if n_classes == 0 {
        return Err(Error::Parameter("fixture needs at least one class".into()));
    }
    if side < 16 {
        return Err(Error::Parameter(format!("fixture side must be >= 16, got {side}")));
    }
    let mut color_rng = rng.derive_named("class-colors");
    let class_colors: Vec<Rgb> = (0..n_classes)
        .map(|_| {
            [
                color_rng.random_range(60..=255),
                color_rng.random_range(60..=255),
                color_rng.random_range(60..=255),
            ]
        })
        .collect();
    let cells = match layout {
        FixtureLayout::Scattered => None,
        FixtureLayout::Anchored => {
            let grid = (n_classes as f64).sqrt().ceil() as usize;
            if side / grid < 8 {
                return Err(Error::Parameter(format!(
                    "anchored fixture needs cells of at least 8 pixels, {n_classes} classes at side {side} give {}",
                    side / grid
                )));
            }
            let mut order: Vec<usize> = (0..grid * grid).collect();
            order.shuffle(&mut rng.derive_named("class-anchors"));
            Some((grid, order))
        }
    };
    (0..n_records)
        .map(|i| {
            let mut r = rng.derive(i as u64);
            let id = format!("r{i:04}");
            let chosen = choose_classes(n_classes, &mut r);
            let placed = match &cells {
                None => scatter(&id, &chosen, side, &mut r)?,
                Some((grid, order)) => anchor(&chosen, side, *grid, order, &mut r),
            };
            fixture_record(&id, side, &placed, &class_colors, &mut r)
        })
        .collect()
}

fn choose_classes(n_classes: usize, rng: &mut RngState) -> Vec<ClassId> {
    let k = rng.random_range(1..=n_classes);
    let mut chosen: Vec<ClassId> = sample(rng, n_classes, k)
        .into_iter()
        .map(|i| i as ClassId + 1)
        .collect();
    chosen.sort_unstable();
    chosen
}

fn anchor(chosen: &[ClassId], side: usize, grid: usize, order: &[usize], rng: &mut RngState) -> Vec<(ClassId, Placed)> {
    let cell = (side / grid) as isize;
    let offset = (side as isize - cell * grid as isize) / 2;
    chosen
        .iter()
        .map(|&class| {
            let slot = order[class as usize - 1] as isize;
            let (gx, gy) = (slot % grid as isize, slot / grid as isize);
            let lo = (cell / 5).max(2);
            let hi = (cell / 3).max(lo);
            let ax = rng.random_range(lo as i64..=hi as i64) as isize;
            let ay = rng.random_range(lo as i64..=hi as i64) as isize;
            // one free pixel on each side of the shape keeps neighbours apart
            let jx = (cell / 2 - ax - 1).min(ax / 2).max(0);
            let jy = (cell / 2 - ay - 1).min(ay / 2).max(0);
            let shape = Placed {
                shape: if rng.random_bool(0.5) { Shape::Ellipse } else { Shape::Rect },
                cx: offset + gx * cell + cell / 2 + rng.random_range(-jx as i64..=jx as i64) as isize,
                cy: offset + gy * cell + cell / 2 + rng.random_range(-jy as i64..=jy as i64) as isize,
                ax,
                ay,
            };
            (class, shape)
        })
        .collect()
}

fn scatter(id: &str, chosen: &[ClassId], side: usize, rng: &mut RngState) -> Result<Vec<(ClassId, Placed)>> {
    let k = chosen.len();
    let s = side as isize;
    let min_half = (s / 14).max(2);
    let max_half = ((side as f64 / (2.0 + 2.0 * (k as f64).sqrt())) as isize).max(min_half);
    let mut placed: Vec<(ClassId, Placed)> = Vec::with_capacity(k);
    for &class in chosen {
        let mut ok = None;
        for _ in 0..PLACEMENT_RETRIES {
            let ax = rng.random_range(min_half as i64..=max_half as i64) as isize;
            let ay = rng.random_range(min_half as i64..=max_half as i64) as isize;
            if 2 * ax + 3 > s || 2 * ay + 3 > s {
                continue;
            }
            let cand = Placed {
                shape: if rng.random_bool(0.5) { Shape::Ellipse } else { Shape::Rect },
                cx: rng.random_range((ax + 1) as i64..=(s - ax - 2) as i64) as isize,
                cy: rng.random_range((ay + 1) as i64..=(s - ay - 2) as i64) as isize,
                ax,
                ay,
            };
            if placed.iter().all(|(_, p)| !p.overlaps(&cand)) {
                ok = Some(cand);
                break;
            }
        }
        let shape = ok.ok_or_else(|| {
            Error::Fixture(format!(
                "could not place class {class} in record {id} without overlap after {PLACEMENT_RETRIES} tries"
            ))
        })?;
        placed.push((class, shape));
    }
    Ok(placed)
}

fn fixture_record(
    id: &str,
    side: usize,
    placed: &[(ClassId, Placed)],
    class_colors: &[Rgb],
    rng: &mut RngState,
) -> Result<DatasetRecord> {
    let s = side as isize;
    let dark = |rng: &mut RngState| -> Rgb {
        [
            rng.random_range(10..=110),
            rng.random_range(10..=110),
            rng.random_range(10..=110),
        ]
    };
    let (c0, c1) = (dark(rng), dark(rng));
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());

    let mut image = ImageRaster::filled(side, side, [0; 3]);
    let mut classes = vec![BACKGROUND; side * side];
    let half = (side as f64 - 1.0) / 2.0;
    for y in 0..side {
        for x in 0..side {
            let proj = ((x as f64 - half) * dx + (y as f64 - half) * dy) / (half * 1.5) * 0.5 + 0.5;
            let t = proj.clamp(0.0, 1.0);
            let mut px = [0u8; 3];
            for ch in 0..3 {
                px[ch] = (c0[ch] as f64 * (1.0 - t) + c1[ch] as f64 * t).round() as u8;
            }
            image.set(x, y, px);
        }
    }
    for (class, shape) in placed {
        let base = class_colors[*class as usize - 1];
        for y in (shape.cy - shape.ay).max(0)..=(shape.cy + shape.ay).min(s - 1) {
            for x in (shape.cx - shape.ax).max(0)..=(shape.cx + shape.ax).min(s - 1) {
                if !shape.contains(x, y) {
                    continue;
                }
                let shade = 1.0 - 0.3 * shape.radial(x, y);
                let px = base.map(|v| (v as f64 * shade).round() as u8);
                image.set(x as usize, y as usize, px);
                classes[y as usize * side + x as usize] = *class;
            }
        }
    }
    let mask = SegMap::new(side, side, classes)?;
    DatasetRecord::new(id, "fixture", image, mask)
}

/// Fixture records wrapped as a dataset with generated class names.
pub fn fixture_dataset(
    n_records: usize,
    n_classes: usize,
    side: usize,
    rng: &RngState,
) -> Result<Dataset> {
    fixture_dataset_with(n_records, n_classes, side, FixtureLayout::Scattered, rng)
}

pub fn fixture_dataset_with(
    n_records: usize,
    n_classes: usize,
    side: usize,
    layout: FixtureLayout,
    rng: &RngState,
) -> Result<Dataset> {
    Ok(Dataset {
        id: "fixture".into(),
        classes: fixture_classes(n_classes),
        records: generate_fixture_with(n_records, n_classes, side, layout, rng)?,
    })
}
