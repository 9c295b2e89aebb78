use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ImageRaster, Palette};
use crate::sampler::ChainElement;

use super::{f1, iou, mae, mse, psnr, rmse, snap_to_palette, MetricKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionScore {
    pub position: usize,
    pub task: String,
    pub family: String,
    pub metric: MetricKind,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyAggregate {
    pub family: String,
    pub metric: MetricKind,
    pub mean: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub positions: Vec<PositionScore>,
    pub aggregates: Vec<FamilyAggregate>,
}

impl TaskReport {
    pub fn from_scores(positions: Vec<PositionScore>) -> Self {
        let aggregates = aggregate(&positions);
        Self { positions, aggregates }
    }

    /// Pools the position scores of several reports.
    pub fn merge<'a>(reports: impl IntoIterator<Item = &'a TaskReport>) -> TaskReport {
        Self::from_scores(reports.into_iter().flat_map(|r| r.positions.iter().cloned()).collect())
    }

    pub fn aggregate(&self, family: &str, metric: MetricKind) -> Option<&FamilyAggregate> {
        self.aggregates.iter().find(|a| a.family == family && a.metric == metric)
    }

    /// Mean of `metric` over every position that reports it.
    pub fn mean(&self, metric: MetricKind) -> Option<f64> {
        let values: Vec<f64> = self.positions.iter().filter(|p| p.metric == metric).map(|p| p.value).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn aggregate(positions: &[PositionScore]) -> Vec<FamilyAggregate> {
    let mut sums: BTreeMap<(&str, MetricKind), (f64, usize)> = BTreeMap::new();
    for p in positions {
        let e = sums.entry((&p.family, p.metric)).or_default();
        e.0 += p.value;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|((family, metric), (sum, count))| FamilyAggregate {
            family: family.to_string(),
            metric,
            mean: sum / count as f64,
            count,
        })
        .collect()
}

/// `(task label, family, metrics)` for a chain position: PSNR, MAE and RMSE
/// for raw and degraded images, MSE for transforms, IoU for segmentation
/// and F1 for thin-structure renders.
pub fn metrics_for(element: &ChainElement) -> (String, String, &'static [MetricKind]) {
    const IMAGE: &[MetricKind] = &[MetricKind::Psnr, MetricKind::Mae, MetricKind::Rmse];
    match element {
        ChainElement::Degraded { family, .. } => (family.name().into(), family.name().into(), IMAGE),
        ChainElement::Image => ("image".into(), "image".into(), IMAGE),
        ChainElement::Transformed { kind, .. } => (kind.name().into(), kind.name().into(), &[MetricKind::Mse]),
        ChainElement::Rendered { kind, class } => {
            let task = match class {
                Some(c) => format!("{}_c{c}", kind.label()),
                None => kind.label(),
            };
            let metric: &'static [MetricKind] = if matches!(kind, crate::task_ops::DiscriminativeKind::Segmentation) {
                &[MetricKind::Iou]
            } else {
                &[MetricKind::F1]
            };
            (task, kind.family_name().into(), metric)
        }
    }
}

/// Scores a predicted output chain position by position against `gt`.
/// Discriminative positions are snapped to `palette` before scoring.
pub fn evaluate_output_sequence(
    pred: &[ImageRaster],
    gt: &[ImageRaster],
    elements: &[ChainElement],
    palette: &Palette,
) -> Result<TaskReport> {
    if pred.len() != gt.len() || gt.len() != elements.len() {
        return Err(Error::Evaluation(format!(
            "{} predicted, {} ground-truth images for {} positions",
            pred.len(),
            gt.len(),
            elements.len()
        )));
    }
    let mut scores = Vec::new();
    for (position, ((p, g), element)) in pred.iter().zip(gt).zip(elements).enumerate() {
        let (task, family, metrics) = metrics_for(element);
        let (snapped_p, snapped_g) = if element.is_discriminative() {
            (Some(snap_to_palette(p, palette)), Some(snap_to_palette(g, palette)))
        } else {
            (None, None)
        };
        for &metric in metrics {
            let value = match (metric, &snapped_p, &snapped_g) {
                (MetricKind::Iou, Some(sp), Some(sg)) => iou(sp, sg),
                (MetricKind::F1, Some(sp), Some(sg)) => f1(sp, sg),
                (MetricKind::Psnr, ..) => psnr(p, g),
                (MetricKind::Mae, ..) => mae(p, g),
                (MetricKind::Rmse, ..) => rmse(p, g),
                (MetricKind::Mse, ..) => mse(p, g),
                _ => unreachable!("segmentation metrics only on discriminative positions"),
            }
            .map_err(|e| Error::Evaluation(format!("position {position} ({task}): {e}")))?;
            scores.push(PositionScore {
                position,
                task: task.clone(),
                family: family.clone(),
                metric,
                value,
            });
        }
    }
    Ok(TaskReport::from_scores(scores))
}
