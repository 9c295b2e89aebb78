use std::collections::HashMap;
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::raster::ImageRaster;

use super::{Codec, CodecGeometry, TokenId};

/// Vocabulary of the lossless codec (one id per distinct patch, up to 256³).
pub const IDENTITY_VOCAB: u32 = 1 << 24;

#[derive(Default)]
struct PatchTable {
    patches: Vec<Vec<u8>>,
    ids: HashMap<Vec<u8>, TokenId>,
}

/// Lossless reference codec: every distinct patch is interned on first sight
/// and its id is its table index, so `decode(encode(x)) == x` bit-exactly.
pub struct IdentityCodebook {
    geometry: CodecGeometry,
    table: RwLock<PatchTable>,
}

impl IdentityCodebook {
    pub fn new(side: usize, grid: usize) -> Result<Self> {
        if grid == 0 || side == 0 || side % grid != 0 {
            return Err(Error::Config(format!("grid {grid}x{grid} does not divide side {side}")));
        }
        Ok(Self {
            geometry: CodecGeometry::new(side, side / grid, grid)?,
            table: RwLock::new(PatchTable::default()),
        })
    }

    /// Distinct patches interned so far.
    pub fn interned(&self) -> usize {
        self.table.read().expect("patch table lock").patches.len()
    }
}

impl Codec for IdentityCodebook {
    fn vocab_size(&self) -> u32 {
        IDENTITY_VOCAB
    }

    fn geometry(&self) -> CodecGeometry {
        self.geometry
    }

    fn encode(&self, image: &ImageRaster) -> Result<Vec<TokenId>> {
        self.geometry.check_image(image)?;
        let g = self.geometry.grid;
        let mut table = self.table.write().expect("patch table lock");
        let mut out = Vec::with_capacity(g * g);
        for gy in 0..g {
            for gx in 0..g {
                let patch = self.geometry.patch_bytes(image, gx, gy);
                let id = match table.ids.get(&patch) {
                    Some(&id) => id,
                    None => {
                        let id = table.patches.len() as TokenId;
                        if id >= IDENTITY_VOCAB {
                            return Err(Error::Codec("identity patch table is full".into()));
                        }
                        table.patches.push(patch.clone());
                        table.ids.insert(patch, id);
                        id
                    }
                };
                out.push(id);
            }
        }
        Ok(out)
    }

    fn decode(&self, tokens: &[TokenId]) -> Result<ImageRaster> {
        self.geometry.check_tokens(tokens, IDENTITY_VOCAB)?;
        let table = self.table.read().expect("patch table lock");
        let patches = tokens
            .iter()
            .map(|&t| {
                table
                    .patches
                    .get(t as usize)
                    .map(Vec::as_slice)
                    .ok_or_else(|| Error::Codec(format!("token {t} was never produced by this codec")))
            })
            .collect::<Result<Vec<&[u8]>>>()?;
        Ok(self.geometry.assemble(&patches))
    }

    fn describe(&self) -> String {
        format!("identity(side={}, grid={})", self.geometry.image_side, self.geometry.grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use rand::Rng;

    fn noise_image(side: usize, seed: u64) -> ImageRaster {
        let mut rng = RngState::new(seed);
        let px = (0..side * side * 3).map(|_| rng.random()).collect();
        ImageRaster::new(side, side, px).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let cb = IdentityCodebook::new(192, 12).unwrap();
        for seed in 0..3 {
            let img = noise_image(192, seed);
            assert_eq!(cb.reconstruct(&img).unwrap(), img);
        }
        assert_eq!(cb.tokens_per_image(), 144);
    }

    #[test]
    fn grid_must_divide_side() {
        assert!(matches!(IdentityCodebook::new(192, 7), Err(Error::Config(_))));
    }

    #[test]
    fn wrong_size_and_bad_tokens_rejected() {
        let cb = IdentityCodebook::new(16, 4).unwrap();
        assert!(matches!(cb.encode(&noise_image(8, 0)), Err(Error::Codec(_))));
        assert!(matches!(cb.decode(&[0; 15]), Err(Error::Codec(_))));
        assert!(matches!(cb.decode(&[IDENTITY_VOCAB; 16]), Err(Error::Codec(_))));
    }
}
