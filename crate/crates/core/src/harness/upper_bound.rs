use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::Codec;
use crate::error::{Error, Result};
use crate::metrics::{f1, iou, mae, snap_to_palette, MetricKind};
use crate::raster::{ClassId, DatasetRecord, Palette};
use crate::rng::RngState;
use crate::task_ops::{render_variant, sample_palette, DiscriminativeKind, TaskVariant};

pub const DEFAULT_UPPER_BOUND_SAMPLES: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorProtocol {
    /// One palette for every render.
    Fixed,
    /// A fresh palette per render.
    Random,
}

impl ColorProtocol {
    pub fn name(&self) -> &'static str {
        match self {
            ColorProtocol::Fixed => "fixed",
            ColorProtocol::Random => "random",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundConfig {
    /// Renders per task.
    pub samples: usize,
    /// Palette of the fixed protocol; sampled over the dataset classes when
    /// absent.
    #[serde(default)]
    pub fixed_palette: Option<Palette>,
}

impl Default for UpperBoundConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_UPPER_BOUND_SAMPLES,
            fixed_palette: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundRow {
    pub dataset: String,
    pub task: String,
    pub protocol: ColorProtocol,
    pub metric: MetricKind,
    pub value: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundReport {
    pub codec: String,
    pub rows: Vec<UpperBoundRow>,
}

impl UpperBoundReport {
    pub fn get(&self, task: &str, protocol: ColorProtocol) -> Option<&UpperBoundRow> {
        self.rows.iter().find(|r| r.task == task && r.protocol == protocol)
    }
}

fn metric_for(variant: &TaskVariant) -> MetricKind {
    match variant {
        TaskVariant::Discriminative { kind: DiscriminativeKind::Segmentation } => MetricKind::Iou,
        TaskVariant::Discriminative { .. } => MetricKind::F1,
        _ => MetricKind::Mae,
    }
}

/// Renders `config.samples` outputs per task, passes them through `codec`
/// and scores the reconstruction against the render. Record choice and
/// generative parameters depend only on `rng`, so both protocols see the
/// same samples.
pub fn codebook_upper_bound(
    codec: &dyn Codec,
    dataset: &[DatasetRecord],
    tasks: &[TaskVariant],
    protocol: ColorProtocol,
    config: &UpperBoundConfig,
    rng: &RngState,
) -> Result<UpperBoundReport> {
    let Some(first) = dataset.first() else {
        return Err(Error::Evaluation("upper bound needs a non-empty dataset".into()));
    };
    let dataset_id = first.dataset_id.clone();
    let vocab: BTreeSet<ClassId> = {
        let mut v: BTreeSet<ClassId> = dataset.iter().flat_map(|r| r.mask.present().iter().copied()).collect();
        if v.is_empty() {
            v.insert(1);
        }
        v
    };
    let fixed = match &config.fixed_palette {
        Some(p) if p.covers(&vocab) => p.clone(),
        Some(_) => return Err(Error::Evaluation("fixed palette does not cover the dataset classes".into())),
        None => sample_palette(&vocab, &mut rng.derive_named("fixed-palette"))?,
    };
    let records_root = rng.derive_named("records");
    let render_root = rng.derive_named("render");
    let palette_root = rng.derive_named("palettes");

    let mut rows = Vec::with_capacity(tasks.len());
    for (t, variant) in tasks.iter().enumerate() {
        // A random permutation of the records, cycled when more samples
        // than records are requested.
        let order = sample(&mut records_root.derive(t as u64), dataset.len(), dataset.len()).into_vec();
        let picks: Vec<usize> = (0..config.samples).map(|i| order[i % order.len()]).collect();
        let metric = metric_for(variant);
        let values = picks
            .par_iter()
            .enumerate()
            .map(|(s, &idx)| {
                let record = &dataset[idx];
                let key = ((t as u64) << 32) | s as u64;
                let palette: Palette = match protocol {
                    ColorProtocol::Fixed => fixed.clone(),
                    ColorProtocol::Random => sample_palette(&vocab, &mut palette_root.derive(key))?,
                };
                let rendered = render_variant(record, *variant, &palette, &mut render_root.derive(key))?;
                let recon = codec
                    .reconstruct(&rendered)
                    .map_err(|e| Error::Evaluation(format!("record {}: {e}", record.id)))?;
                match metric {
                    MetricKind::Iou => iou(&snap_to_palette(&recon, &palette), &snap_to_palette(&rendered, &palette)),
                    MetricKind::F1 => f1(&snap_to_palette(&recon, &palette), &snap_to_palette(&rendered, &palette)),
                    _ => mae(&recon, &rendered),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(UpperBoundRow {
            dataset: dataset_id.clone(),
            task: variant.file_stem(),
            protocol,
            metric,
            value: values.iter().sum::<f64>() / values.len().max(1) as f64,
            samples: values.len(),
        });
    }
    Ok(UpperBoundReport {
        codec: codec.describe(),
        rows,
    })
}

/// Writes `upper_bound.json` and a text table `upper_bound.txt` into `dir`.
pub fn write_upper_bound_report(dir: &Path, reports: &[UpperBoundReport]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rows: Vec<&UpperBoundRow> = reports.iter().flat_map(|r| &r.rows).collect();
    rows.sort_by(|a, b| (&a.dataset, &a.task, a.protocol).cmp(&(&b.dataset, &b.task, b.protocol)));
    let mut text = String::new();
    let codecs: BTreeSet<&str> = reports.iter().map(|r| r.codec.as_str()).collect();
    for c in codecs {
        writeln!(text, "# codec: {c}").unwrap();
    }
    writeln!(text, "{:<16} {:<16} {:<8} {:<6} {:>10} {:>8}", "dataset", "task", "colors", "metric", "value", "samples").unwrap();
    for r in rows {
        let shown = if r.metric.higher_is_better() { r.value * 100.0 } else { r.value };
        writeln!(
            text,
            "{:<16} {:<16} {:<8} {:<6} {:>10.4} {:>8}",
            r.dataset,
            r.task,
            r.protocol.name(),
            r.metric.name(),
            shown,
            r.samples
        )
        .unwrap();
    }
    let json = serde_json::to_string_pretty(reports).expect("report serializes") + "\n";
    let json_path = dir.join("upper_bound.json");
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    let txt_path = dir.join("upper_bound.txt");
    fs::write(&txt_path, text).map_err(|e| Error::io(&txt_path, e))
}
