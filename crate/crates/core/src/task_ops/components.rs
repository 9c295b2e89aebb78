use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::raster::{ClassId, SegMap};

/// Row-major boolean raster.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryRaster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryRaster {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), width * height, "binary raster buffer length");
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-bounds reads are `false`.
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Square `width`×`width` dilation (odd widths centered on each pixel).
    pub fn dilate_square(&self, width: usize) -> BinaryRaster {
        if width <= 1 {
            return self.clone();
        }
        let r = (width / 2) as isize;
        let mut out = BinaryRaster::new(self.width, self.height);
        for y in 0..self.height as isize {
            for x in 0..self.width as isize {
                if !self.get(x as usize, y as usize) {
                    continue;
                }
                for yy in (y - r).max(0)..=(y + r).min(self.height as isize - 1) {
                    for xx in (x - r).max(0)..=(x + r).min(self.width as isize - 1) {
                        out.set(xx as usize, yy as usize, true);
                    }
                }
            }
        }
        out
    }
}

/// Inclusive pixel bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }
}

/// One 8-connected segment: its tight bounding box and the foreground
/// cropped to that box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub bbox: BBox,
    pub pixels: BinaryRaster,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.count()
    }

    /// The component placed back into a full `width`×`height` raster.
    pub fn to_full(&self, width: usize, height: usize) -> BinaryRaster {
        let mut out = BinaryRaster::new(width, height);
        for y in 0..self.pixels.height {
            for x in 0..self.pixels.width {
                if self.pixels.get(x, y) {
                    out.set(self.bbox.x0 + x, self.bbox.y0 + y, true);
                }
            }
        }
        out
    }
}

const NEIGHBORS8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// 8-connected labeling of a binary raster. Labels start at 1 in row-major
/// order of each component's first pixel; 0 marks background. Returns the
/// label raster and the component count.
pub fn label_components(raster: &BinaryRaster) -> (Vec<u32>, u32) {
    let (w, h) = (raster.width, raster.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !raster.data[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for (dx, dy) in NEIGHBORS8 {
                let (nx, ny) = (x + dx, y + dy);
                if raster.get_signed(nx, ny) {
                    let j = ny as usize * w + nx as usize;
                    if labels[j] == 0 {
                        labels[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    (labels, next)
}

/// 8-connected components of `class_id`, in row-major order of first pixel.
/// An absent class yields no components.
pub fn connected_components(mask: &SegMap, class_id: ClassId) -> Vec<Component> {
    if !mask.present().contains(&class_id) {
        return Vec::new();
    }
    let (w, h) = mask.dims();
    let binary = BinaryRaster::from_data(w, h, mask.mask_of(class_id));
    let (labels, count) = label_components(&binary);
    let mut boxes = vec![
        BBox {
            x0: usize::MAX,
            y0: usize::MAX,
            x1: 0,
            y1: 0,
        };
        count as usize
    ];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let b = &mut boxes[l as usize - 1];
        let (x, y) = (i % w, i / w);
        b.x0 = b.x0.min(x);
        b.y0 = b.y0.min(y);
        b.x1 = b.x1.max(x);
        b.y1 = b.y1.max(y);
    }
    boxes
        .into_iter()
        .enumerate()
        .map(|(k, bbox)| {
            let label = k as u32 + 1;
            let mut pixels = BinaryRaster::new(bbox.width(), bbox.height());
            for y in bbox.y0..=bbox.y1 {
                for x in bbox.x0..=bbox.x1 {
                    if labels[y * w + x] == label {
                        pixels.set(x - bbox.x0, y - bbox.y0, true);
                    }
                }
            }
            Component { bbox, pixels }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> SegMap {
        let h = rows.len();
        let w = rows[0].len();
        let classes = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c.to_digit(10).unwrap()))
            .collect();
        SegMap::new(w, h, classes).unwrap()
    }

    #[test]
    fn two_disjoint_squares() {
        let m = mask_from(&["11000", "11011", "00011"]);
        let comps = connected_components(&m, 1);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].bbox, BBox { x0: 0, y0: 0, x1: 1, y1: 1 });
        assert_eq!(comps[1].bbox, BBox { x0: 3, y0: 1, x1: 4, y1: 2 });
        assert!(comps.iter().all(|c| c.area() == 4));
    }

    #[test]
    fn single_pixel_has_unit_box() {
        let m = mask_from(&["000", "020", "000"]);
        let comps = connected_components(&m, 2);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].bbox.width(), 1);
        assert_eq!(comps[0].bbox.height(), 1);
    }

    #[test]
    fn diagonal_touch_joins_under_8_connectivity() {
        let m = mask_from(&["1100", "1100", "0011", "0011"]);
        let comps = connected_components(&m, 1);
        assert_eq!(comps.len(), 1);
    }

    #[test]
    fn absent_class_is_empty() {
        let m = mask_from(&["11", "11"]);
        assert!(connected_components(&m, 3).is_empty());
    }
}
