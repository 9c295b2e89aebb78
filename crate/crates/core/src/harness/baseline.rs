use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::ImageRaster;
use crate::rng::RngState;
use crate::sampler::CqoBundle;

/// Predicts `O` by copying the output-aligned images of one context chain
/// drawn uniformly. Positions the chosen chain lacks are filled with the
/// palette background.
pub fn copy_baseline_predict(bundle: &CqoBundle, rng: &RngState) -> Result<Vec<ImageRaster>> {
    if bundle.context.is_empty() {
        return Err(Error::Evaluation("copy baseline needs at least one context chain".into()));
    }
    let mut draws = rng.clone();
    let chain = &bundle.context[draws.random_range(0..bundle.context.len())];
    Ok(bundle
        .output
        .iter()
        .enumerate()
        .map(|(j, gt)| {
            chain
                .images
                .get(j + 1)
                .cloned()
                .unwrap_or_else(|| ImageRaster::filled(gt.width(), gt.height(), bundle.palette.background()))
        })
        .collect())
}
