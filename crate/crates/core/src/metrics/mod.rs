//! Palette snapping, segmentation and image-quality metrics, and
//! position-wise scoring of predicted output chains.

mod evaluate;

pub use evaluate::{evaluate_output_sequence, metrics_for, FamilyAggregate, PositionScore, TaskReport};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{rgb_distance_sq, ClassId, ImageRaster, Palette, SegMap, BACKGROUND};

/// PSNR reported for identical images, and the ceiling for all others.
pub const PSNR_SENTINEL: f64 = 99.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Iou,
    F1,
    Mae,
    Rmse,
    Psnr,
    Mse,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Iou => "iou",
            MetricKind::F1 => "f1",
            MetricKind::Mae => "mae",
            MetricKind::Rmse => "rmse",
            MetricKind::Psnr => "psnr",
            MetricKind::Mse => "mse",
        }
    }

    pub fn higher_is_better(&self) -> bool {
        matches!(self, MetricKind::Iou | MetricKind::F1 | MetricKind::Psnr)
    }

    pub fn on_segmaps(&self) -> bool {
        matches!(self, MetricKind::Iou | MetricKind::F1)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Operand<'a> {
    Seg(&'a SegMap),
    Image(&'a ImageRaster),
}

/// Nearest palette entry per pixel. Ties go to the lowest class id; the
/// background only wins when strictly closer than every class.
pub fn snap_to_palette(image: &ImageRaster, palette: &Palette) -> SegMap {
    let (w, h) = image.dims();
    let classes = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            let px = image.get(x, y);
            let mut best = (BACKGROUND, u32::MAX);
            for (&id, &c) in palette.colors() {
                let d = rgb_distance_sq(px, c);
                if d < best.1 {
                    best = (id, d);
                }
            }
            if rgb_distance_sq(px, palette.background()) < best.1 {
                BACKGROUND
            } else {
                best.0
            }
        })
        .collect();
    SegMap::new(w, h, classes).expect("dimensions match the image")
}

fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::Metric(format!("dimension mismatch: {a:?} vs {b:?}")));
    }
    Ok(())
}

fn scored_classes(gt: &SegMap) -> BTreeSet<ClassId> {
    gt.present().iter().copied().filter(|&c| c != BACKGROUND).collect()
}

/// Per-class `(tp, fp, fn)` pixel counts.
fn confusion(pred: &SegMap, gt: &SegMap, class: ClassId) -> (usize, usize, usize) {
    let mut out = (0, 0, 0);
    for (&p, &g) in pred.classes().iter().zip(gt.classes()) {
        match (p == class, g == class) {
            (true, true) => out.0 += 1,
            (true, false) => out.1 += 1,
            (false, true) => out.2 += 1,
            _ => {}
        }
    }
    out
}

/// Mean over non-background classes present in `gt` of per-class IoU. When
/// `gt` is all background, 1 if `pred` is too and 0 otherwise.
pub fn iou(pred: &SegMap, gt: &SegMap) -> Result<f64> {
    class_mean(pred, gt, |tp, fp, fn_| tp as f64 / (tp + fp + fn_) as f64)
}

/// Mean over non-background classes present in `gt` of pixelwise
/// `2PR / (P + R)`, taken as 0 when there are no true positives.
pub fn f1(pred: &SegMap, gt: &SegMap) -> Result<f64> {
    class_mean(pred, gt, |tp, fp, fn_| {
        if tp == 0 {
            0.0
        } else {
            let p = tp as f64 / (tp + fp) as f64;
            let r = tp as f64 / (tp + fn_) as f64;
            2.0 * p * r / (p + r)
        }
    })
}

fn class_mean(pred: &SegMap, gt: &SegMap, score: impl Fn(usize, usize, usize) -> f64) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    let classes = scored_classes(gt);
    if classes.is_empty() {
        let clean = pred.classes().iter().all(|&c| c == BACKGROUND);
        return Ok(if clean { 1.0 } else { 0.0 });
    }
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let (tp, fp, fn_) = confusion(pred, gt, c);
            score(tp, fp, fn_)
        })
        .sum();
    Ok(total / classes.len() as f64)
}

fn channel_errors<'a>(pred: &'a ImageRaster, gt: &'a ImageRaster) -> Result<impl Iterator<Item = f64> + 'a> {
    check_dims(pred.dims(), gt.dims())?;
    if pred.pixels().is_empty() {
        return Err(Error::Metric("empty image".into()));
    }
    Ok(pred
        .pixels()
        .iter()
        .zip(gt.pixels())
        .map(|(&a, &b)| (a as f64 - b as f64) / 255.0))
}

/// Mean absolute channel error on a [0, 1] scale.
pub fn mae(pred: &ImageRaster, gt: &ImageRaster) -> Result<f64> {
    let n = pred.pixels().len() as f64;
    Ok(channel_errors(pred, gt)?.map(f64::abs).sum::<f64>() / n)
}

/// Mean squared channel error on a [0, 1] scale.
pub fn mse(pred: &ImageRaster, gt: &ImageRaster) -> Result<f64> {
    let n = pred.pixels().len() as f64;
    Ok(channel_errors(pred, gt)?.map(|e| e * e).sum::<f64>() / n)
}

pub fn rmse(pred: &ImageRaster, gt: &ImageRaster) -> Result<f64> {
    Ok(mse(pred, gt)?.sqrt())
}

/// `10·log10(1 / MSE)`, capped at [`PSNR_SENTINEL`].
pub fn psnr(pred: &ImageRaster, gt: &ImageRaster) -> Result<f64> {
    Ok(psnr_from_mse(mse(pred, gt)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_SENTINEL
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_SENTINEL)
    }
}

pub fn compute_metric(pred: Operand<'_>, gt: Operand<'_>, kind: MetricKind) -> Result<f64> {
    match (pred, gt) {
        (Operand::Seg(p), Operand::Seg(g)) => match kind {
            MetricKind::Iou => iou(p, g),
            MetricKind::F1 => f1(p, g),
            _ => Err(Error::Metric(format!("{kind} needs images, got segmentation maps"))),
        },
        (Operand::Image(p), Operand::Image(g)) => match kind {
            MetricKind::Mae => mae(p, g),
            MetricKind::Rmse => rmse(p, g),
            MetricKind::Psnr => psnr(p, g),
            MetricKind::Mse => mse(p, g),
            _ => Err(Error::Metric(format!("{kind} needs segmentation maps, got images"))),
        },
        _ => Err(Error::Metric("prediction and ground truth have different operand types".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    use proptest::prelude::*;

    fn seg(w: usize, h: usize, c: &[u32]) -> SegMap {
        SegMap::new(w, h, c.to_vec()).unwrap()
    }

    fn palette() -> Palette {
        Palette::new(
            BTreeMap::from([(1, [100, 0, 0]), (2, [0, 100, 0]), (3, [0, 0, 200])]),
            [0, 0, 0],
        )
        .unwrap()
    }

    #[test]
    fn hand_enumerated_binary_case() {
        let pred = seg(2, 2, &[1, 0, 0, 0]);
        let gt = seg(2, 2, &[1, 0, 1, 0]);
        assert_eq!(iou(&pred, &gt).unwrap(), 0.5);
        assert!((f1(&pred, &gt).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identical_inputs_are_perfect() {
        let s = seg(3, 1, &[0, 2, 1]);
        assert_eq!(iou(&s, &s).unwrap(), 1.0);
        assert_eq!(f1(&s, &s).unwrap(), 1.0);
        let img = ImageRaster::filled(4, 4, [9, 8, 7]);
        assert_eq!(mae(&img, &img).unwrap(), 0.0);
        assert_eq!(psnr(&img, &img).unwrap(), PSNR_SENTINEL);
    }

    #[test]
    fn all_background_ground_truth() {
        let bg = seg(2, 1, &[0, 0]);
        assert_eq!(iou(&bg, &bg).unwrap(), 1.0);
        assert_eq!(iou(&seg(2, 1, &[0, 1]), &bg).unwrap(), 0.0);
    }

    #[test]
    fn snapping_ties_and_exact_colors() {
        let p = palette();
        let img = ImageRaster::new(4, 1, vec![100, 0, 0, 50, 50, 0, 50, 0, 0, 0, 0, 200]).unwrap();
        // [50,50,0] is equidistant from classes 1 and 2; [50,0,0] from class 1 and background.
        assert_eq!(snap_to_palette(&img, &p).classes(), &[1, 1, 1, 3]);
    }

    #[test]
    fn errors() {
        let a = seg(2, 1, &[0, 1]);
        let b = seg(1, 2, &[0, 1]);
        assert!(matches!(iou(&a, &b), Err(Error::Metric(_))));
        let img = ImageRaster::filled(2, 1, [0; 3]);
        assert!(compute_metric(Operand::Seg(&a), Operand::Image(&img), MetricKind::Iou).is_err());
        assert!(compute_metric(Operand::Image(&img), Operand::Image(&img), MetricKind::Iou).is_err());
        assert!(compute_metric(Operand::Seg(&a), Operand::Seg(&a), MetricKind::Mae).is_err());
    }

    fn raster(w: usize, h: usize) -> impl Strategy<Value = ImageRaster> {
        proptest::collection::vec(any::<u8>(), w * h * 3).prop_map(move |p| ImageRaster::new(w, h, p).unwrap())
    }

    proptest! {
        #[test]
        fn snapping_is_a_projection(img in raster(5, 4)) {
            let p = palette();
            let s = snap_to_palette(&img, &p);
            let rendered = crate::task_ops::render_discriminative(
                &s, crate::task_ops::DiscriminativeKind::Segmentation, &p).unwrap();
            prop_assert_eq!(snap_to_palette(&rendered, &p), s);
        }

        #[test]
        fn symmetric_and_bounded(a in raster(3, 3), b in raster(3, 3)) {
            prop_assert_eq!(mae(&a, &b).unwrap(), mae(&b, &a).unwrap());
            prop_assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
            prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
            let p = palette();
            let (sa, sb) = (snap_to_palette(&a, &p), snap_to_palette(&b, &p));
            let v = iou(&sa, &sb).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            let v = f1(&sa, &sb).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn psnr_falls_as_noise_grows(img in raster(4, 4), step in 1u8..20) {
            let noisy = |amount: u8| {
                let px = img.pixels().iter().map(|&v| if v < 128 { v + amount } else { v - amount }).collect();
                ImageRaster::new(4, 4, px).unwrap()
            };
            let small = psnr(&noisy(step), &img).unwrap();
            let large = psnr(&noisy(step * 2), &img).unwrap();
            prop_assert!(large < small);
        }
    }
}
