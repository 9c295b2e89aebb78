//! Image/token codecs.
//!
//! A codec maps a square image to exactly `q` token ids in `[0, N)` and
//! back. Images enter at `image_side` and are resampled to the codec's
//! internal grid (`grid · patch_side`) at the boundary when the two differ.

mod identity;
mod kmeans;
mod stream;

pub use identity::{IdentityCodebook, IDENTITY_VOCAB};
pub use kmeans::{train_codebook, KMeansCodebook, TrainConfig, TrainReport, CODEBOOK_MAGIC, CODEBOOK_VERSION};
pub use stream::{balanced_stream, BalanceConfig, BalancedStream, StreamDraw, StreamSample};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ImageRaster;

pub type TokenId = u32;

/// Token grid geometry shared by every codec.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecGeometry {
    /// Side of the images callers pass in and get back.
    pub image_side: usize,
    pub patch_side: usize,
    pub grid: usize,
}

impl CodecGeometry {
    /// The default toy geometry: 200-pixel images seen as a 12×12 grid of
    /// 16-pixel patches (q = 144).
    pub const DEFAULT: CodecGeometry = CodecGeometry {
        image_side: 200,
        patch_side: 16,
        grid: 12,
    };

    pub fn new(image_side: usize, patch_side: usize, grid: usize) -> Result<Self> {
        if image_side == 0 || patch_side == 0 || grid == 0 {
            return Err(Error::Config(format!(
                "codec geometry needs positive sizes, got image {image_side}, patch {patch_side}, grid {grid}"
            )));
        }
        Ok(Self {
            image_side,
            patch_side,
            grid,
        })
    }

    pub fn tokens_per_image(&self) -> usize {
        self.grid * self.grid
    }

    pub fn codec_side(&self) -> usize {
        self.grid * self.patch_side
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_side * self.patch_side * 3
    }

    pub(crate) fn check_image(&self, image: &ImageRaster) -> Result<()> {
        if image.dims() != (self.image_side, self.image_side) {
            return Err(Error::Codec(format!(
                "codec expects {0}x{0} images, got {1}x{2}",
                self.image_side,
                image.width(),
                image.height()
            )));
        }
        Ok(())
    }

    /// Image at the internal codec resolution.
    pub(crate) fn to_codec(&self, image: &ImageRaster) -> ImageRaster {
        let s = self.codec_side();
        image.resize_bilinear(s, s)
    }

    pub(crate) fn from_codec(&self, image: ImageRaster) -> ImageRaster {
        image.resize_bilinear(self.image_side, self.image_side)
    }

    /// Raw bytes of grid cell `(gx, gy)`, row-major pixels.
    pub(crate) fn patch_bytes(&self, image: &ImageRaster, gx: usize, gy: usize) -> Vec<u8> {
        let p = self.patch_side;
        let mut out = Vec::with_capacity(self.patch_dim());
        let w = image.width();
        for y in gy * p..(gy + 1) * p {
            let start = (y * w + gx * p) * 3;
            out.extend_from_slice(&image.pixels()[start..start + p * 3]);
        }
        out
    }

    /// Assembles patches (row-major grid order) into a codec-side image.
    pub(crate) fn assemble(&self, patches: &[&[u8]]) -> ImageRaster {
        let p = self.patch_side;
        let s = self.codec_side();
        let mut pixels = vec![0u8; s * s * 3];
        for (k, patch) in patches.iter().enumerate() {
            let (gx, gy) = (k % self.grid, k / self.grid);
            for row in 0..p {
                let dst = ((gy * p + row) * s + gx * p) * 3;
                pixels[dst..dst + p * 3].copy_from_slice(&patch[row * p * 3..(row + 1) * p * 3]);
            }
        }
        ImageRaster::new(s, s, pixels).expect("assembled buffer has codec size")
    }

    pub(crate) fn check_tokens(&self, tokens: &[TokenId], vocab: u32) -> Result<()> {
        if tokens.len() != self.tokens_per_image() {
            return Err(Error::Codec(format!(
                "expected {} tokens, got {}",
                self.tokens_per_image(),
                tokens.len()
            )));
        }
        if let Some(bad) = tokens.iter().find(|&&t| t >= vocab) {
            return Err(Error::Codec(format!("token id {bad} outside vocabulary of {vocab}")));
        }
        Ok(())
    }
}

/// Encoder/decoder pair over a fixed vocabulary.
pub trait Codec: Send + Sync {
    fn vocab_size(&self) -> u32;
    fn geometry(&self) -> CodecGeometry;
    fn encode(&self, image: &ImageRaster) -> Result<Vec<TokenId>>;
    fn decode(&self, tokens: &[TokenId]) -> Result<ImageRaster>;
    /// Short human-readable description for reports.
    fn describe(&self) -> String;

    fn tokens_per_image(&self) -> usize {
        self.geometry().tokens_per_image()
    }

    fn image_side(&self) -> usize {
        self.geometry().image_side
    }

    /// `decode(encode(image))`.
    fn reconstruct(&self, image: &ImageRaster) -> Result<ImageRaster> {
        self.decode(&self.encode(image)?)
    }
}
