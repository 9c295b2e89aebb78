use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ImageRaster;
use crate::rng::RngState;

use super::{Codec, CodecGeometry, TokenId};

pub const CODEBOOK_MAGIC: &[u8; 4] = b"TFCB";
pub const CODEBOOK_VERSION: u32 = 1;

/// Patch quantizer with one centroid per token id.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeansCodebook {
    geometry: CodecGeometry,
    /// `N × patch_dim`, row-major, channel values in 0..=255.
    centroids: Vec<f32>,
}

#[inline]
fn dist_sq(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

const PARTIAL_BLOCK: usize = 48;

/// Nearest centroid, ties to the lowest id. A candidate is dropped as soon as
/// its running sum reaches the best distance; sums run in the same order as
/// `dist_sq`, so the result is identical to the exhaustive scan.
fn nearest(centroids: &[f32], dim: usize, v: &[f32]) -> (usize, f32) {
    let mut best = (0, f32::INFINITY);
    'candidates: for (k, c) in centroids.chunks_exact(dim).enumerate() {
        let mut d = 0.0f32;
        for (cb, vb) in c.chunks(PARTIAL_BLOCK).zip(v.chunks(PARTIAL_BLOCK)) {
            for (x, y) in cb.iter().zip(vb) {
                d += (x - y) * (x - y);
            }
            if d >= best.1 {
                continue 'candidates;
            }
        }
        best = (k, d);
    }
    best
}

impl KMeansCodebook {
    pub fn from_centroids(geometry: CodecGeometry, centroids: Vec<f32>) -> Result<Self> {
        let dim = geometry.patch_dim();
        if centroids.is_empty() || centroids.len() % dim != 0 {
            return Err(Error::Codec(format!(
                "{} centroid values is not a positive multiple of patch dimension {dim}",
                centroids.len()
            )));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::Codec("centroids must be finite".into()));
        }
        Ok(Self { geometry, centroids })
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn centroid(&self, id: usize) -> &[f32] {
        let dim = self.geometry.patch_dim();
        &self.centroids[id * dim..(id + 1) * dim]
    }

    /// Writes the `TFCB` file: a little-endian header (magic, version, N, q,
    /// grid rows, grid cols, patch side as u32) followed by N centroid
    /// vectors of little-endian f32.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(28 + self.centroids.len() * 4);
        buf.extend_from_slice(CODEBOOK_MAGIC);
        for v in [
            CODEBOOK_VERSION,
            self.vocab_size(),
            self.geometry.tokens_per_image() as u32,
            self.geometry.grid as u32,
            self.geometry.grid as u32,
            self.geometry.patch_side as u32,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for c in &self.centroids {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    /// Reads a `TFCB` file. The file fixes the token grid; `image_side` is
    /// the side of the images the codec will be used on.
    pub fn read(path: &Path, image_side: usize) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, image_side)
    }

    pub fn from_bytes(bytes: &[u8], image_side: usize) -> Result<Self> {
        const KIND: &str = "codebook";
        if bytes.len() < 28 || &bytes[..4] != CODEBOOK_MAGIC {
            return Err(Error::format(KIND, "missing TFCB header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
        let (version, n, q, rows, cols, patch) = (word(0), word(1), word(2), word(3), word(4), word(5));
        if version != CODEBOOK_VERSION {
            return Err(Error::format(KIND, format!("unsupported version {version}")));
        }
        if rows != cols || rows * cols != q || n == 0 || patch == 0 {
            return Err(Error::format(
                KIND,
                format!("inconsistent geometry: N={n}, q={q}, grid={rows}x{cols}, patch={patch}"),
            ));
        }
        let geometry = CodecGeometry::new(image_side, patch as usize, rows as usize)?;
        let expected = n as usize * geometry.patch_dim() * 4;
        let body = &bytes[28..];
        if body.len() != expected {
            return Err(Error::format(KIND, format!("expected {expected} centroid bytes, found {}", body.len())));
        }
        let centroids = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Self::from_centroids(geometry, centroids)
    }

    fn patch_vectors(&self, image: &ImageRaster) -> Vec<Vec<f32>> {
        let codec = self.geometry.to_codec(image);
        let g = self.geometry.grid;
        (0..g * g)
            .map(|k| {
                self.geometry
                    .patch_bytes(&codec, k % g, k / g)
                    .into_iter()
                    .map(f32::from)
                    .collect()
            })
            .collect()
    }
}

impl Codec for KMeansCodebook {
    fn vocab_size(&self) -> u32 {
        (self.centroids.len() / self.geometry.patch_dim()) as u32
    }

    fn geometry(&self) -> CodecGeometry {
        self.geometry
    }

    fn encode(&self, image: &ImageRaster) -> Result<Vec<TokenId>> {
        self.geometry.check_image(image)?;
        let dim = self.geometry.patch_dim();
        Ok(self
            .patch_vectors(image)
            .iter()
            .map(|v| nearest(&self.centroids, dim, v).0 as TokenId)
            .collect())
    }

    fn decode(&self, tokens: &[TokenId]) -> Result<ImageRaster> {
        self.geometry.check_tokens(tokens, self.vocab_size())?;
        let patches: Vec<Vec<u8>> = tokens
            .iter()
            .map(|&t| {
                self.centroid(t as usize)
                    .iter()
                    .map(|v| v.round().clamp(0.0, 255.0) as u8)
                    .collect()
            })
            .collect();
        let refs: Vec<&[u8]> = patches.iter().map(Vec::as_slice).collect();
        Ok(self.geometry.from_codec(self.geometry.assemble(&refs)))
    }

    fn describe(&self) -> String {
        format!(
            "kmeans(N={}, patch={}, grid={})",
            self.vocab_size(),
            self.geometry.patch_side,
            self.geometry.grid
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub vocab_size: usize,
    pub geometry: CodecGeometry,
    pub iterations: usize,
    /// Images drawn from the stream.
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Sum of squared patch-to-centroid distances after each assignment step.
    pub objective: Vec<f64>,
    pub patches: usize,
    pub reseeded: usize,
}

/// k-means over patch vectors: k-means++ seeding, a fixed number of Lloyd
/// iterations, empty clusters reseeded from the farthest patches.
pub fn train_codebook(
    stream: impl IntoIterator<Item = ImageRaster>,
    config: &TrainConfig,
) -> Result<(KMeansCodebook, TrainReport)> {
    let k = config.vocab_size;
    if k == 0 {
        return Err(Error::Training("vocabulary size must be positive".into()));
    }
    let geometry = config.geometry;
    let dim = geometry.patch_dim();
    let g = geometry.grid;

    let mut data: Vec<f32> = Vec::new();
    for image in stream.into_iter().take(config.samples) {
        geometry.check_image(&image).map_err(|e| Error::Training(e.to_string()))?;
        let codec = geometry.to_codec(&image);
        for cell in 0..g * g {
            data.extend(geometry.patch_bytes(&codec, cell % g, cell / g).into_iter().map(f32::from));
        }
    }
    let n = data.len() / dim;
    if n < k {
        return Err(Error::Training(format!("stream yielded {n} patches, need at least {k}")));
    }

    let mut rng = RngState::new(config.seed);
    let mut centroids = seed_plus_plus(&data, dim, k, &mut rng);
    let mut report = TrainReport {
        patches: n,
        ..TrainReport::default()
    };
    let mut assign = vec![0usize; n];
    let mut dists = vec![0f32; n];

    for _ in 0..config.iterations.max(1) {
        data.par_chunks_exact(dim)
            .zip(assign.par_iter_mut().zip(dists.par_iter_mut()))
            .for_each(|(v, (a, d))| {
                let (id, dd) = nearest(&centroids, dim, v);
                *a = id;
                *d = dd;
            });
        let objective: f64 = dists.iter().map(|&d| d as f64).sum();
        if let Some(&prev) = report.objective.last() {
            if objective > prev * (1.0 + 1e-5) + 1e-3 {
                return Err(Error::Training(format!(
                    "k-means objective rose from {prev} to {objective}"
                )));
            }
        }
        report.objective.push(objective);

        let mut sums = vec![0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (v, &a) in data.chunks_exact(dim).zip(&assign) {
            counts[a] += 1;
            for (s, x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(v) {
                *s += *x as f64;
            }
        }
        let mut far: Vec<usize> = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..]) {
                    *dst = (*s / counts[c] as f64) as f32;
                }
                continue;
            }
            if far.is_empty() {
                far = (0..n).collect();
                far.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
                far.reverse();
            }
            let p = far.pop().expect("at least k patches");
            centroids[c * dim..(c + 1) * dim].copy_from_slice(&data[p * dim..(p + 1) * dim]);
            report.reseeded += 1;
        }
    }
    Ok((KMeansCodebook::from_centroids(geometry, centroids)?, report))
}

fn seed_plus_plus(data: &[f32], dim: usize, k: usize, rng: &mut RngState) -> Vec<f32> {
    let n = data.len() / dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&data[first * dim..(first + 1) * dim]);
    let mut best: Vec<f64> = data
        .par_chunks_exact(dim)
        .map(|v| dist_sq(v, &centroids[..dim]) as f64)
        .collect();
    for _ in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in best.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = data[pick * dim..(pick + 1) * dim].to_vec();
        best.par_iter_mut()
            .zip(data.par_chunks_exact(dim))
            .for_each(|(b, v)| *b = b.min(dist_sq(v, &c) as f64));
        centroids.extend_from_slice(&c);
    }
    centroids
}
