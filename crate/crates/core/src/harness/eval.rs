use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::read_image;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_output_sequence, FamilyAggregate, TaskReport};
use crate::raster::ImageRaster;
use crate::rng::RngState;
use crate::sampler::{read_bundle, BUNDLE_DESCRIPTOR};

use super::baseline::copy_baseline_predict;

/// File prefix of predicted output images, `pred_00.png`, ...
pub const PREDICTION_PREFIX: &str = "pred_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Directory of bundle directories.
    pub bundles: PathBuf,
    /// Directory mirroring `bundles` with `pred_XX.png` per bundle; the copy
    /// baseline is scored when absent.
    pub predictions: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub bundle: String,
    pub report: TaskReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub predictor: String,
    pub rows: Vec<EvalRow>,
    pub aggregates: Vec<FamilyAggregate>,
}

/// Sorted bundle directories under `dir`.
pub fn list_bundles(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.join(BUNDLE_DESCRIPTOR).is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn read_predictions(dir: &Path, count: usize) -> Result<Vec<ImageRaster>> {
    (0..count)
        .map(|j| read_image(&dir.join(format!("{PREDICTION_PREFIX}{j:02}.png"))))
        .collect()
}

/// Scores every bundle under `config.bundles` and writes `eval.json` and
/// `eval.txt` to `config.out`. Nothing is written when any bundle fails.
pub fn run_eval(config: &EvalConfig) -> Result<EvalOutcome> {
    let dirs = list_bundles(&config.bundles)?;
    if dirs.is_empty() {
        return Err(Error::Evaluation(format!("no bundles under {}", config.bundles.display())));
    }
    let root = RngState::new(config.seed).derive_named("copy-baseline");
    let rows = dirs
        .par_iter()
        .enumerate()
        .map(|(i, dir)| {
            let name = dir.file_name().expect("bundle dirs have names").to_string_lossy().into_owned();
            let bundle = read_bundle(dir)?;
            let pred = match &config.predictions {
                Some(p) => read_predictions(&p.join(&name), bundle.output.len())?,
                None => copy_baseline_predict(&bundle, &root.derive(i as u64))?,
            };
            let report = evaluate_output_sequence(&pred, &bundle.output, &bundle.output_elements(), &bundle.palette)
                .map_err(|e| Error::Evaluation(format!("bundle {name}: {e}")))?;
            Ok(EvalRow { bundle: name, report })
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled = TaskReport::merge(rows.iter().map(|r| &r.report));
    let outcome = EvalOutcome {
        predictor: if config.predictions.is_some() { "predictions".into() } else { "copy_baseline".into() },
        rows,
        aggregates: pooled.aggregates,
    };
    write_outcome(&config.out, &outcome)?;
    Ok(outcome)
}

fn write_outcome(dir: &Path, outcome: &EvalOutcome) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut text = format!("# predictor: {}\n", outcome.predictor);
    writeln!(text, "{:<24} {:<16} {:<6} {:>10} {:>6}", "bundle", "family", "metric", "value", "count").unwrap();
    let mut line = |bundle: &str, a: &FamilyAggregate| {
        writeln!(text, "{:<24} {:<16} {:<6} {:>10.4} {:>6}", bundle, a.family, a.metric.name(), a.mean, a.count).unwrap();
    };
    for row in &outcome.rows {
        for a in &row.report.aggregates {
            line(&row.bundle, a);
        }
    }
    for a in &outcome.aggregates {
        line("ALL", a);
    }
    let json_path = dir.join("eval.json");
    let json = serde_json::to_string_pretty(outcome).expect("outcome serializes") + "\n";
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    let txt_path = dir.join("eval.txt");
    fs::write(&txt_path, text).map_err(|e| Error::io(&txt_path, e))
}
