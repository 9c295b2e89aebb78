use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ImageRaster;
use crate::rng::RngState;

use super::SUPER_RES_SIDES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerativeFamily {
    SuperRes,
    Inpaint,
    Noise,
    ColorJitter,
    Invert,
    Equalize,
    Brightness,
}

impl GenerativeFamily {
    pub const ALL: [GenerativeFamily; 7] = [
        GenerativeFamily::SuperRes,
        GenerativeFamily::Inpaint,
        GenerativeFamily::Noise,
        GenerativeFamily::ColorJitter,
        GenerativeFamily::Invert,
        GenerativeFamily::Equalize,
        GenerativeFamily::Brightness,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            GenerativeFamily::SuperRes => "super_res",
            GenerativeFamily::Inpaint => "inpaint",
            GenerativeFamily::Noise => "noise",
            GenerativeFamily::ColorJitter => "color_jitter",
            GenerativeFamily::Invert => "invert",
            GenerativeFamily::Equalize => "equalize",
            GenerativeFamily::Brightness => "brightness",
        }
    }
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// A degradation with its parameters. Noise parameters are in 0..255 units,
/// jitter deltas are fractions (hue in turns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenerativeKind {
    SuperRes { target_side: usize },
    Inpaint { rects: Vec<Rect> },
    Noise { mean: f64, sigma: f64 },
    ColorJitter { hue: f64, saturation: f64, brightness: f64 },
    Invert,
    Equalize,
    Brightness { factor: f64 },
}

impl GenerativeKind {
    pub fn family(&self) -> GenerativeFamily {
        match self {
            GenerativeKind::SuperRes { .. } => GenerativeFamily::SuperRes,
            GenerativeKind::Inpaint { .. } => GenerativeFamily::Inpaint,
            GenerativeKind::Noise { .. } => GenerativeFamily::Noise,
            GenerativeKind::ColorJitter { .. } => GenerativeFamily::ColorJitter,
            GenerativeKind::Invert => GenerativeFamily::Invert,
            GenerativeKind::Equalize => GenerativeFamily::Equalize,
            GenerativeKind::Brightness { .. } => GenerativeFamily::Brightness,
        }
    }

    /// Draws parameters for `family` on a `side`×`side` image.
    ///
    /// Ranges: noise mean in ±0.1·255 and sigma in [0.02, 0.25]·255; one to four
    /// inpaint rectangles each covering 5–20% of the area; brightness factor in
    /// [0.5, 1.5]; jitter deltas in ±0.2; super-resolution sides from
    /// {25, 50, 100} strictly below `side` (or `side / 2` if none qualify).
    pub fn sample(family: GenerativeFamily, side: usize, rng: &mut RngState) -> GenerativeKind {
        match family {
            GenerativeFamily::SuperRes => {
                let options: Vec<usize> = SUPER_RES_SIDES.iter().copied().filter(|&s| s < side).collect();
                let target_side = if options.is_empty() {
                    (side / 2).max(1)
                } else {
                    options[rng.random_range(0..options.len())]
                };
                GenerativeKind::SuperRes { target_side }
            }
            GenerativeFamily::Inpaint => {
                let n = rng.random_range(1..=4);
                let area = (side * side) as f64;
                let rects = (0..n)
                    .map(|_| {
                        let frac: f64 = rng.random_range(0.05..=0.20);
                        let aspect: f64 = rng.random_range(0.5..=2.0);
                        let w = ((frac * area * aspect).sqrt().round() as usize).clamp(1, side);
                        let h = ((frac * area / w as f64).round() as usize).clamp(1, side);
                        Rect {
                            x: rng.random_range(0..=side - w),
                            y: rng.random_range(0..=side - h),
                            width: w,
                            height: h,
                        }
                    })
                    .collect();
                GenerativeKind::Inpaint { rects }
            }
            GenerativeFamily::Noise => GenerativeKind::Noise {
                mean: rng.random_range(-0.1..=0.1) * 255.0,
                sigma: rng.random_range(0.02..=0.25) * 255.0,
            },
            GenerativeFamily::ColorJitter => GenerativeKind::ColorJitter {
                hue: rng.random_range(-0.2..=0.2),
                saturation: rng.random_range(-0.2..=0.2),
                brightness: rng.random_range(-0.2..=0.2),
            },
            GenerativeFamily::Invert => GenerativeKind::Invert,
            GenerativeFamily::Equalize => GenerativeKind::Equalize,
            GenerativeFamily::Brightness => GenerativeKind::Brightness {
                factor: rng.random_range(0.5..=1.5),
            },
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        match self {
            GenerativeKind::SuperRes { target_side } => {
                if *target_side == 0 || *target_side > width.min(height) {
                    return Err(Error::Parameter(format!(
                        "super-resolution side {target_side} must be in 1..={}",
                        width.min(height)
                    )));
                }
            }
            GenerativeKind::Inpaint { rects } => {
                for r in rects {
                    if r.width == 0 || r.height == 0 || r.x + r.width > width || r.y + r.height > height {
                        return Err(Error::Parameter(format!(
                            "inpaint rectangle {r:?} outside {width}x{height} image"
                        )));
                    }
                }
            }
            GenerativeKind::Noise { mean, sigma } => {
                if !(*sigma >= 0.0) || !mean.is_finite() || !sigma.is_finite() {
                    return Err(Error::Parameter(format!(
                        "noise needs finite mean and sigma >= 0, got ({mean}, {sigma})"
                    )));
                }
            }
            GenerativeKind::ColorJitter { hue, saturation, brightness } => {
                if ![hue, saturation, brightness].iter().all(|v| v.is_finite()) {
                    return Err(Error::Parameter("color jitter deltas must be finite".into()));
                }
            }
            GenerativeKind::Brightness { factor } => {
                if !(*factor >= 0.0) || !factor.is_finite() {
                    return Err(Error::Parameter(format!(
                        "brightness factor must be finite and >= 0, got {factor}"
                    )));
                }
            }
            GenerativeKind::Invert | GenerativeKind::Equalize => {}
        }
        Ok(())
    }
}

/// Returns the degraded version of `image`; the input is the restoration
/// target. Dimensions are always preserved.
pub fn apply_generative(
    image: &ImageRaster,
    kind: &GenerativeKind,
    rng: &mut RngState,
) -> Result<ImageRaster> {
    kind.validate(image.width(), image.height())?;
    let out = match kind {
        GenerativeKind::SuperRes { target_side } => super_res(image, *target_side),
        GenerativeKind::Inpaint { rects } => {
            let mut out = image.clone();
            for r in rects {
                for y in r.y..r.y + r.height {
                    for x in r.x..r.x + r.width {
                        out.set(x, y, [0, 0, 0]);
                    }
                }
            }
            out
        }
        GenerativeKind::Noise { mean, sigma } => {
            let mut out = image.clone();
            for v in out.pixels_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v = (*v as f64 + mean + sigma * z).round().clamp(0.0, 255.0) as u8;
            }
            out
        }
        GenerativeKind::ColorJitter { hue, saturation, brightness } => {
            color_jitter(image, *hue, *saturation, *brightness)
        }
        GenerativeKind::Invert => {
            let mut out = image.clone();
            out.pixels_mut().iter_mut().for_each(|v| *v = 255 - *v);
            out
        }
        GenerativeKind::Equalize => equalize(image),
        GenerativeKind::Brightness { factor } => {
            let mut out = image.clone();
            for v in out.pixels_mut() {
                *v = (*v as f64 * factor).round().clamp(0.0, 255.0) as u8;
            }
            out
        }
    };
    Ok(out)
}

fn span(i: usize, src: usize, dst: usize) -> (usize, usize) {
    let start = i * src / dst;
    let end = ((i + 1) * src / dst).max(start + 1);
    (start, end)
}

/// Box-average down to `target` per axis, then nearest-neighbor back up.
fn super_res(image: &ImageRaster, target: usize) -> ImageRaster {
    let (w, h) = image.dims();
    let (tw, th) = (target.min(w), target.min(h));
    let mut small = vec![0u8; tw * th * 3];
    for ty in 0..th {
        let (y0, y1) = span(ty, h, th);
        for tx in 0..tw {
            let (x0, x1) = span(tx, w, tw);
            let n = ((y1 - y0) * (x1 - x0)) as u32;
            let mut acc = [0u32; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = image.get(x, y);
                    for ch in 0..3 {
                        acc[ch] += p[ch] as u32;
                    }
                }
            }
            for ch in 0..3 {
                small[(ty * tw + tx) * 3 + ch] = ((acc[ch] + n / 2) / n) as u8;
            }
        }
    }
    let mut out = ImageRaster::filled(w, h, [0; 3]);
    for y in 0..h {
        let sy = y * th / h;
        for x in 0..w {
            let sx = x * tw / w;
            let i = (sy * tw + sx) * 3;
            out.set(x, y, [small[i], small[i + 1], small[i + 2]]);
        }
    }
    out
}

fn rgb_to_hsv(p: [u8; 3]) -> (f64, f64, f64) {
    let [r, g, b] = p.map(|v| v as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6 % 2.0 - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|u| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8)
}

fn color_jitter(image: &ImageRaster, dh: f64, ds: f64, dv: f64) -> ImageRaster {
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            let (h, s, v) = rgb_to_hsv(image.get(x, y));
            out.set(
                x,
                y,
                hsv_to_rgb(h + dh, (s + ds).clamp(0.0, 1.0), (v + dv).clamp(0.0, 1.0)),
            );
        }
    }
    out
}

/// Per-channel histogram equalization. Constant channels are left unchanged.
fn equalize(image: &ImageRaster) -> ImageRaster {
    let n = (image.width() * image.height()) as u64;
    let mut out = image.clone();
    for ch in 0..3 {
        let mut hist = [0u64; 256];
        for px in image.pixels().chunks_exact(3) {
            hist[px[ch] as usize] += 1;
        }
        let mut cdf = [0u64; 256];
        let mut acc = 0;
        for (i, h) in hist.iter().enumerate() {
            acc += h;
            cdf[i] = acc;
        }
        let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
        if cdf_min == n {
            continue;
        }
        let lut: Vec<u8> = cdf
            .iter()
            .map(|&c| {
                let num = c.saturating_sub(cdf_min) as f64 * 255.0;
                (num / (n - cdf_min) as f64).round() as u8
            })
            .collect();
        for px in out.pixels_mut().chunks_exact_mut(3) {
            px[ch] = lut[px[ch] as usize];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(side: usize) -> ImageRaster {
        let mut img = ImageRaster::filled(side, side, [0; 3]);
        for y in 0..side {
            for x in 0..side {
                img.set(x, y, [(x * 7 % 256) as u8, (y * 5 % 256) as u8, ((x + y) % 256) as u8]);
            }
        }
        img
    }

    #[test]
    fn invert_complements() {
        let img = ImageRaster::filled(2, 2, [0, 0, 0]);
        let out = apply_generative(&img, &GenerativeKind::Invert, &mut RngState::new(0)).unwrap();
        assert_eq!(out.get(0, 0), [255, 255, 255]);
    }

    #[test]
    fn zero_noise_is_identity() {
        let img = gradient(16);
        let kind = GenerativeKind::Noise { mean: 0.0, sigma: 0.0 };
        assert_eq!(apply_generative(&img, &kind, &mut RngState::new(3)).unwrap(), img);
    }

    #[test]
    fn negative_sigma_rejected() {
        let kind = GenerativeKind::Noise { mean: 0.0, sigma: -1.0 };
        assert!(matches!(
            apply_generative(&gradient(8), &kind, &mut RngState::new(0)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn inpaint_out_of_bounds_rejected() {
        let kind = GenerativeKind::Inpaint {
            rects: vec![Rect { x: 6, y: 0, width: 3, height: 2 }],
        };
        assert!(matches!(
            apply_generative(&gradient(8), &kind, &mut RngState::new(0)),
            Err(Error::Parameter(_))
        ));
    }

    /// Reference: average each 2x2 block, then replicate it.
    fn box_half_oracle(img: &ImageRaster) -> ImageRaster {
        let mut out = img.clone();
        for by in (0..img.height()).step_by(2) {
            for bx in (0..img.width()).step_by(2) {
                let mut avg = [0u8; 3];
                for (ch, a) in avg.iter_mut().enumerate() {
                    let s: u32 = [(0, 0), (1, 0), (0, 1), (1, 1)]
                        .iter()
                        .map(|(dx, dy)| img.get(bx + dx, by + dy)[ch] as u32)
                        .sum();
                    *a = ((s + 2) / 4) as u8;
                }
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    out.set(bx + dx, by + dy, avg);
                }
            }
        }
        out
    }

    #[test]
    fn super_res_half_gives_2x2_blocks() {
        let img = gradient(200);
        let out = apply_generative(&img, &GenerativeKind::SuperRes { target_side: 100 }, &mut RngState::new(0))
            .unwrap();
        assert_eq!(out, box_half_oracle(&img));
        for y in (0..200).step_by(2) {
            for x in (0..200).step_by(2) {
                let p = out.get(x, y);
                assert_eq!(out.get(x + 1, y), p);
                assert_eq!(out.get(x, y + 1), p);
                assert_eq!(out.get(x + 1, y + 1), p);
            }
        }
    }

    #[test]
    fn hsv_round_trip_is_exact_for_zero_jitter() {
        let img = gradient(32);
        let kind = GenerativeKind::ColorJitter { hue: 0.0, saturation: 0.0, brightness: 0.0 };
        assert_eq!(apply_generative(&img, &kind, &mut RngState::new(0)).unwrap(), img);
    }

    #[test]
    fn equalize_spreads_range() {
        let mut img = ImageRaster::filled(4, 1, [0; 3]);
        for x in 0..4 {
            img.set(x, 0, [100 + x as u8; 3]);
        }
        let out = apply_generative(&img, &GenerativeKind::Equalize, &mut RngState::new(0)).unwrap();
        assert_eq!(out.get(0, 0), [0; 3]);
        assert_eq!(out.get(3, 0), [255; 3]);
        let flat = ImageRaster::filled(3, 3, [9, 9, 9]);
        assert_eq!(apply_generative(&flat, &GenerativeKind::Equalize, &mut RngState::new(0)).unwrap(), flat);
    }

    #[test]
    fn sampled_parameters_are_valid_and_keep_dimensions() {
        let img = gradient(64);
        let mut rng = RngState::new(5);
        for _ in 0..20 {
            for fam in GenerativeFamily::ALL {
                let kind = GenerativeKind::sample(fam, 64, &mut rng);
                let out = apply_generative(&img, &kind, &mut rng).unwrap();
                assert_eq!(out.dims(), img.dims());
                assert_eq!(kind.family(), fam);
            }
        }
    }
}
