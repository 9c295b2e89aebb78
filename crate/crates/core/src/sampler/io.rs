//! Bundle directories: one PNG per chain element plus a JSON descriptor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::write_image;
use crate::error::{Error, Result};
use crate::raster::{ImageRaster, Palette};
use crate::rng::RngState;

use super::bundle::CqoBundle;
use super::chain::{ChainSource, ImageChain};
use super::structure::{ChainElement, TaskStructure};

pub const BUNDLE_DESCRIPTOR: &str = "bundle.json";

#[derive(Serialize, Deserialize)]
struct ChainEntry {
    source: ChainSource,
    images: Vec<String>,
    elements: Vec<ChainElement>,
}

#[derive(Serialize, Deserialize)]
struct QueryEntry {
    source: ChainSource,
    query: String,
    output: Vec<String>,
    elements: Vec<ChainElement>,
}

#[derive(Serialize, Deserialize)]
struct Descriptor {
    dataset_id: String,
    seed: RngState,
    image_budget: usize,
    t_max: usize,
    structure: TaskStructure,
    palette: Palette,
    context: Vec<ChainEntry>,
    held_out: QueryEntry,
}

pub fn write_bundle(dir: &Path, bundle: &CqoBundle) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut context = Vec::with_capacity(bundle.context.len());
    for (i, chain) in bundle.context.iter().enumerate() {
        let mut names = Vec::with_capacity(chain.len());
        for (j, img) in chain.images.iter().enumerate() {
            let name = format!("c{i}_{j:02}.png");
            write_image(&dir.join(&name), img)?;
            names.push(name);
        }
        context.push(ChainEntry {
            source: chain.source.clone(),
            images: names,
            elements: bundle.structure.elements(&chain.source.keep),
        });
    }
    write_image(&dir.join("q.png"), &bundle.query)?;
    let mut output = Vec::with_capacity(bundle.output.len());
    for (j, img) in bundle.output.iter().enumerate() {
        let name = format!("o_{j:02}.png");
        write_image(&dir.join(&name), img)?;
        output.push(name);
    }
    let descriptor = Descriptor {
        dataset_id: bundle.dataset_id.clone(),
        seed: bundle.seed.clone(),
        image_budget: bundle.image_budget,
        t_max: bundle.t_max,
        structure: bundle.structure.clone(),
        palette: bundle.palette.clone(),
        context,
        held_out: QueryEntry {
            source: bundle.query_source.clone(),
            query: "q.png".into(),
            output,
            elements: bundle.query_elements(),
        },
    };
    let path = dir.join(BUNDLE_DESCRIPTOR);
    let text = serde_json::to_string_pretty(&descriptor).expect("descriptor serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn load_png(dir: &Path, name: &str) -> Result<ImageRaster> {
    let path = dir.join(name);
    let img = image::open(&path).map_err(|e| Error::ingest(&path, e.to_string()))?;
    ImageRaster::from_rgb_image(&img.to_rgb8())
}

pub fn read_bundle(dir: &Path) -> Result<CqoBundle> {
    let path = dir.join(BUNDLE_DESCRIPTOR);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let d: Descriptor =
        serde_json::from_str(&text).map_err(|e| Error::format("bundle descriptor", format!("{}: {e}", path.display())))?;
    let context = d
        .context
        .into_iter()
        .map(|entry| {
            let images = entry
                .images
                .iter()
                .map(|n| load_png(dir, n))
                .collect::<Result<Vec<_>>>()?;
            Ok(ImageChain {
                images,
                source: entry.source,
                palette: d.palette.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let output = d
        .held_out
        .output
        .iter()
        .map(|n| load_png(dir, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(CqoBundle {
        dataset_id: d.dataset_id,
        structure: d.structure,
        palette: d.palette,
        context,
        query: load_png(dir, &d.held_out.query)?,
        output,
        query_source: d.held_out.source,
        image_budget: d.image_budget,
        t_max: d.t_max,
        seed: d.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_fixture;
    use crate::sampler::{check_guardrails, sample_cqo, SamplerConfig, StructureLimits};

    #[test]
    fn bundle_directory_round_trip() {
        let recs = generate_fixture(6, 3, 32, &RngState::new(1)).unwrap();
        let cfg = SamplerConfig {
            limits: StructureLimits {
                image_side: 32,
                ..StructureLimits::default()
            },
            ..SamplerConfig::default()
        };
        let b = sample_cqo(&recs, &RngState::new(3), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &b).unwrap();
        let back = read_bundle(dir.path()).unwrap();
        assert_eq!(back, b);
        assert!(check_guardrails(&back, Some(&recs)).passed());
    }

    #[test]
    fn missing_descriptor_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_bundle(dir.path()), Err(Error::Io { .. })));
    }
}
