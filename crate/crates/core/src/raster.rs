//! Raster domain types shared by every stage of the pipeline.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ClassId = u32;
pub type Rgb = [u8; 3];

/// Class id reserved for background. Never part of `SegMap::present`.
pub const BACKGROUND: ClassId = 0;

/// Default edge length images are resized to at ingestion.
pub const DEFAULT_CANONICAL_SIDE: usize = 200;

/// Row-major 8-bit RGB raster.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ImageRaster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageRaster {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image must be non-empty, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::Dimension(format!(
                "pixel buffer of {} bytes does not match {width}x{height}x3",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        assert!(width > 0 && height > 0, "image must be non-empty");
        let pixels = color.iter().copied().cycle().take(width * height * 3).collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, color: Rgb) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&color);
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    /// Bilinear resample with pixel-center alignment. Same-size requests
    /// return an exact copy.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> ImageRaster {
        assert!(width > 0 && height > 0, "resize target must be non-empty");
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut out = vec![0u8; width * height * 3];
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
                for ch in 0..3 {
                    let top = a[ch] as f64 * (1.0 - wx) + b[ch] as f64 * wx;
                    let bottom = c[ch] as f64 * (1.0 - wx) + d[ch] as f64 * wx;
                    let v = top * (1.0 - wy) + bottom * wy;
                    out[(y * width + x) * 3 + ch] = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        ImageRaster {
            width,
            height,
            pixels: out,
        }
    }

    pub fn to_rgb_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("buffer length checked at construction")
    }

    pub fn from_rgb_image(img: &image::RgbImage) -> Result<Self> {
        Self::new(img.width() as usize, img.height() as usize, img.as_raw().clone())
    }
}

/// Nearest-neighbor source index for `dst` when mapping `dst_len` samples onto `src_len`.
#[inline]
pub(crate) fn nearest_index(dst: usize, src_len: usize, dst_len: usize) -> usize {
    ((2 * dst + 1) * src_len / (2 * dst_len)).min(src_len - 1)
}

/// Row-major class-id raster with its cached set of present classes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SegMap {
    width: usize,
    height: usize,
    classes: Vec<ClassId>,
    present: BTreeSet<ClassId>,
}

impl SegMap {
    pub fn new(width: usize, height: usize, classes: Vec<ClassId>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "mask must be non-empty, got {width}x{height}"
            )));
        }
        if classes.len() != width * height {
            return Err(Error::Dimension(format!(
                "class buffer of {} entries does not match {width}x{height}",
                classes.len()
            )));
        }
        let present = scan_present(&classes);
        Ok(Self {
            width,
            height,
            classes,
            present,
        })
    }

    pub fn background(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![BACKGROUND; width * height]).expect("non-empty dims")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn present(&self) -> &BTreeSet<ClassId> {
        &self.present
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> ClassId {
        self.classes[y * self.width + x]
    }

    /// Applies `f` to every class id and recomputes `present`.
    pub fn map_classes(&self, f: impl Fn(ClassId) -> ClassId) -> SegMap {
        let classes: Vec<ClassId> = self.classes.iter().map(|&c| f(c)).collect();
        SegMap::new(self.width, self.height, classes).expect("dims unchanged")
    }

    /// Nearest-neighbor resample; class ids are never interpolated.
    pub fn resize_nearest(&self, width: usize, height: usize) -> SegMap {
        assert!(width > 0 && height > 0, "resize target must be non-empty");
        if (width, height) == self.dims() {
            return self.clone();
        }
        let mut classes = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = nearest_index(y, self.height, height);
            for x in 0..width {
                let sx = nearest_index(x, self.width, width);
                classes.push(self.get(sx, sy));
            }
        }
        SegMap::new(width, height, classes).expect("non-empty dims")
    }

    pub fn mask_of(&self, class_id: ClassId) -> Vec<bool> {
        self.classes.iter().map(|&c| c == class_id).collect()
    }
}

fn scan_present(classes: &[ClassId]) -> BTreeSet<ClassId> {
    classes.iter().copied().filter(|&c| c != BACKGROUND).collect()
}

/// Class id to color assignment used to render discriminative tasks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PaletteRepr")]
pub struct Palette {
    colors: BTreeMap<ClassId, Rgb>,
    background: Rgb,
}

impl Palette {
    pub fn new(colors: BTreeMap<ClassId, Rgb>, background: Rgb) -> Result<Self> {
        if colors.contains_key(&BACKGROUND) {
            return Err(Error::Palette("class id 0 is reserved for background".into()));
        }
        let mut seen = BTreeSet::new();
        seen.insert(background);
        for (id, c) in &colors {
            if !seen.insert(*c) {
                return Err(Error::Palette(format!(
                    "color {c:?} of class {id} is not unique"
                )));
            }
        }
        Ok(Self { colors, background })
    }

    pub fn background(&self) -> Rgb {
        self.background
    }

    pub fn colors(&self) -> &BTreeMap<ClassId, Rgb> {
        &self.colors
    }

    pub fn color(&self, class_id: ClassId) -> Option<Rgb> {
        if class_id == BACKGROUND {
            Some(self.background)
        } else {
            self.colors.get(&class_id).copied()
        }
    }

    pub fn covers<'a>(&self, ids: impl IntoIterator<Item = &'a ClassId>) -> bool {
        ids.into_iter()
            .all(|id| *id == BACKGROUND || self.colors.contains_key(id))
    }

    pub fn class_of(&self, color: Rgb) -> Option<ClassId> {
        if color == self.background {
            return Some(BACKGROUND);
        }
        self.colors
            .iter()
            .find_map(|(id, c)| (*c == color).then_some(*id))
    }

    /// Smallest Euclidean RGB distance between any two palette colors,
    /// background included. `None` when there is only the background.
    pub fn min_distance(&self) -> Option<f64> {
        let all: Vec<Rgb> = std::iter::once(self.background)
            .chain(self.colors.values().copied())
            .collect();
        let mut best: Option<f64> = None;
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                let d = rgb_distance(all[i], all[j]);
                best = Some(best.map_or(d, |b: f64| b.min(d)));
            }
        }
        best
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }
}

#[derive(Deserialize)]
struct PaletteRepr {
    colors: BTreeMap<ClassId, Rgb>,
    background: Rgb,
}

impl TryFrom<PaletteRepr> for Palette {
    type Error = Error;

    fn try_from(repr: PaletteRepr) -> Result<Self> {
        Palette::new(repr.colors, repr.background)
    }
}

pub fn rgb_distance_sq(a: Rgb, b: Rgb) -> u32 {
    (0..3)
        .map(|i| {
            let d = a[i] as i32 - b[i] as i32;
            (d * d) as u32
        })
        .sum()
}

pub fn rgb_distance(a: Rgb, b: Rgb) -> f64 {
    (rgb_distance_sq(a, b) as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetRecord {
    pub id: String,
    pub dataset_id: String,
    pub image: ImageRaster,
    pub mask: SegMap,
}

impl DatasetRecord {
    pub fn new(
        id: impl Into<String>,
        dataset_id: impl Into<String>,
        image: ImageRaster,
        mask: SegMap,
    ) -> Result<Self> {
        let id = id.into();
        if image.dims() != mask.dims() {
            return Err(Error::Validation {
                record: id,
                message: format!(
                    "image is {:?} but mask is {:?}",
                    image.dims(),
                    mask.dims()
                ),
            });
        }
        Ok(Self {
            id,
            dataset_id: dataset_id.into(),
            image,
            mask,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert!(ImageRaster::new(0, 3, vec![]).is_err());
        assert!(ImageRaster::new(2, 2, vec![0; 11]).is_err());
        assert!(SegMap::new(2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn present_excludes_background() {
        let m = SegMap::new(3, 1, vec![0, 4, 2]).unwrap();
        assert_eq!(m.present().iter().copied().collect::<Vec<_>>(), vec![2, 4]);
    }

    #[test]
    fn nearest_resize_keeps_ids_categorical() {
        let m = SegMap::new(2, 2, vec![1, 2, 3, 4]).unwrap();
        let up = m.resize_nearest(4, 4);
        assert_eq!(
            up.classes(),
            &[1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4]
        );
        assert_eq!(up.present(), m.present());
    }

    #[test]
    fn bilinear_preserves_constant_images() {
        let img = ImageRaster::filled(7, 5, [10, 20, 30]);
        let out = img.resize_bilinear(13, 11);
        assert_eq!(out, ImageRaster::filled(13, 11, [10, 20, 30]));
    }

    #[test]
    fn palette_must_be_injective() {
        let mut colors = BTreeMap::new();
        colors.insert(1, [1, 2, 3]);
        colors.insert(2, [1, 2, 3]);
        assert!(Palette::new(colors, [0, 0, 0]).is_err());
        let mut colors = BTreeMap::new();
        colors.insert(1, [0, 0, 0]);
        assert!(Palette::new(colors, [0, 0, 0]).is_err());
    }

    #[test]
    fn record_dims_must_match() {
        let err = DatasetRecord::new(
            "r9",
            "d",
            ImageRaster::filled(4, 4, [0; 3]),
            SegMap::background(4, 5),
        )
        .unwrap_err();
        assert!(err.to_string().contains("r9"));
    }
}
