use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ClassId, DatasetRecord, ImageRaster, Palette};
use crate::rng::RngState;
use crate::task_ops::{render_variant, sample_palette, TaskVariant};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BalanceConfig {
    /// Draw buckets (see [`TaskVariant::bucket`]) by weight instead of
    /// variants uniformly.
    pub task_balance: bool,
    /// Draw a dataset uniformly before drawing a record from it.
    pub dataset_balance: bool,
    /// Render each discriminative sample under a fresh palette.
    pub recolor: bool,
    /// Per-bucket weights; uniform over active buckets when absent.
    #[serde(default)]
    pub bucket_weights: Option<BTreeMap<String, f64>>,
    /// Palette for discriminative renders without recoloring; sampled over
    /// all dataset classes when absent.
    #[serde(default)]
    pub fixed_palette: Option<Palette>,
}

impl BalanceConfig {
    fn weights(&self, buckets: &[String]) -> Result<Vec<f64>> {
        let Some(map) = &self.bucket_weights else {
            return Ok(vec![1.0 / buckets.len() as f64; buckets.len()]);
        };
        if let Some(unknown) = map.keys().find(|k| !buckets.contains(k)) {
            return Err(Error::Config(format!("weight given for inactive bucket {unknown:?}")));
        }
        let w: Vec<f64> = buckets.iter().map(|b| map.get(b).copied().unwrap_or(0.0)).collect();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("bucket weights must be non-negative".into()));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("bucket weights sum to {total}, expected 1")));
        }
        Ok(w)
    }
}

/// Where a sample came from, before rendering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamDraw {
    pub dataset: usize,
    pub record: usize,
    pub variant: TaskVariant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamSample {
    pub draw: StreamDraw,
    pub image: ImageRaster,
    /// Palette used for discriminative renders.
    pub palette: Option<Palette>,
}

/// Endless iterator of balanced training samples.
pub struct BalancedStream<'a> {
    datasets: Vec<&'a [DatasetRecord]>,
    variants: Vec<TaskVariant>,
    by_bucket: Vec<Vec<usize>>,
    bucket_dist: Option<WeightedIndex<f64>>,
    vocab: Vec<BTreeSet<ClassId>>,
    fixed_palette: Palette,
    recolor: bool,
    dataset_balance: bool,
    pooled: usize,
    rng: RngState,
    render_root: RngState,
    index: u64,
}

/// Builds a balanced sample stream over `datasets` rendering the given task
/// variants.
pub fn balanced_stream<'a>(
    datasets: &[&'a [DatasetRecord]],
    tasks: &[TaskVariant],
    config: &BalanceConfig,
    rng: &RngState,
) -> Result<BalancedStream<'a>> {
    if datasets.is_empty() || datasets.iter().any(|d| d.is_empty()) {
        return Err(Error::Config("balanced stream needs at least one non-empty dataset".into()));
    }
    if tasks.is_empty() {
        return Err(Error::Config("balanced stream needs at least one task variant".into()));
    }
    let mut variants: Vec<TaskVariant> = tasks.to_vec();
    variants.sort();
    variants.dedup();

    let min_side = datasets
        .iter()
        .flat_map(|d| d.iter())
        .map(|r| r.image.width().min(r.image.height()))
        .min()
        .expect("non-empty");
    for v in &variants {
        if let TaskVariant::SuperRes { target_side } = v {
            if *target_side > min_side {
                return Err(Error::Config(format!(
                    "super-resolution side {target_side} exceeds smallest record side {min_side}"
                )));
            }
        }
    }

    let mut buckets: Vec<String> = variants.iter().map(TaskVariant::bucket).collect();
    buckets.sort();
    buckets.dedup();
    let by_bucket: Vec<Vec<usize>> = buckets
        .iter()
        .map(|b| (0..variants.len()).filter(|&i| variants[i].bucket() == *b).collect())
        .collect();
    let bucket_dist = if config.task_balance {
        let w = config.weights(&buckets)?;
        Some(WeightedIndex::new(&w).map_err(|e| Error::Config(format!("bucket weights: {e}")))?)
    } else {
        if config.bucket_weights.is_some() {
            return Err(Error::Config("bucket weights require task balancing".into()));
        }
        None
    };

    let vocab: Vec<BTreeSet<ClassId>> = datasets
        .iter()
        .map(|d| {
            let mut v: BTreeSet<ClassId> = d.iter().flat_map(|r| r.mask.present().iter().copied()).collect();
            if v.is_empty() {
                v.insert(1);
            }
            v
        })
        .collect();
    let all: BTreeSet<ClassId> = vocab.iter().flatten().copied().collect();
    let fixed_palette = match &config.fixed_palette {
        Some(p) if p.covers(&all) => p.clone(),
        Some(_) => return Err(Error::Config("fixed palette does not cover every dataset class".into())),
        None => sample_palette(&all, &mut rng.derive_named("stream-palette"))?,
    };

    Ok(BalancedStream {
        pooled: datasets.iter().map(|d| d.len()).sum(),
        datasets: datasets.to_vec(),
        variants,
        by_bucket,
        bucket_dist,
        vocab,
        fixed_palette,
        recolor: config.recolor,
        dataset_balance: config.dataset_balance,
        rng: rng.derive_named("stream-draws"),
        render_root: rng.derive_named("stream-render"),
        index: 0,
    })
}

impl<'a> BalancedStream<'a> {
    /// Next draw without rendering it. [`Iterator::next`] renders the same
    /// sequence of draws.
    pub fn next_draw(&mut self) -> StreamDraw {
        let variant = match &self.bucket_dist {
            Some(dist) => {
                let members = &self.by_bucket[dist.sample(&mut self.rng)];
                self.variants[members[self.rng.random_range(0..members.len())]]
            }
            None => self.variants[self.rng.random_range(0..self.variants.len())],
        };
        let (dataset, record) = if self.dataset_balance {
            let d = self.rng.random_range(0..self.datasets.len());
            (d, self.rng.random_range(0..self.datasets[d].len()))
        } else {
            let mut i = self.rng.random_range(0..self.pooled);
            let mut d = 0;
            while i >= self.datasets[d].len() {
                i -= self.datasets[d].len();
                d += 1;
            }
            (d, i)
        };
        StreamDraw { dataset, record, variant }
    }

    pub fn render(&self, draw: &StreamDraw, rng: &mut RngState) -> Result<StreamSample> {
        let record = &self.datasets[draw.dataset][draw.record];
        let palette = if !draw.variant.is_discriminative() {
            None
        } else if self.recolor {
            Some(sample_palette(&self.vocab[draw.dataset], rng)?)
        } else {
            Some(self.fixed_palette.clone())
        };
        let image = render_variant(record, draw.variant, palette.as_ref().unwrap_or(&self.fixed_palette), rng)?;
        Ok(StreamSample {
            draw: draw.clone(),
            image,
            palette,
        })
    }

    /// Renders the next `n` samples' images.
    pub fn take_images(&mut self, n: usize) -> Result<Vec<ImageRaster>> {
        self.take(n).map(|s| s.map(|s| s.image)).collect()
    }
}

impl Iterator for BalancedStream<'_> {
    type Item = Result<StreamSample>;

    fn next(&mut self) -> Option<Self::Item> {
        let draw = self.next_draw();
        let mut rng = self.render_root.derive(self.index);
        self.index += 1;
        Some(self.render(&draw, &mut rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_fixture;
    use crate::task_ops::{DiscriminativeKind, TransformKind};

    fn records(n: usize, seed: u64) -> Vec<DatasetRecord> {
        generate_fixture(n, 3, 32, &RngState::new(seed)).unwrap()
    }

    fn within_3_sigma(count: usize, n: usize, p: f64) -> bool {
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        (count as f64 - mean).abs() <= 3.0 * sigma
    }

    #[test]
    fn task_balance_equalizes_buckets() {
        let recs = records(4, 1);
        // One bucket holds three variants, the other one.
        let tasks = [
            TaskVariant::Image,
            TaskVariant::Discriminative { kind: DiscriminativeKind::Edges { width: 1 } },
            TaskVariant::Discriminative { kind: DiscriminativeKind::Edges { width: 3 } },
            TaskVariant::Discriminative { kind: DiscriminativeKind::Edges { width: 5 } },
        ];
        let config = BalanceConfig {
            task_balance: true,
            ..BalanceConfig::default()
        };
        let mut s = balanced_stream(&[&recs], &tasks, &config, &RngState::new(7)).unwrap();
        let images = (0..10_000).filter(|_| s.next_draw().variant == TaskVariant::Image).count();
        assert!(within_3_sigma(images, 10_000, 0.5), "{images}");
    }

    #[test]
    fn unbalanced_datasets_follow_their_sizes() {
        let big = records(90, 2);
        let small = records(10, 3);
        let tasks = [TaskVariant::Image];
        let mut s = balanced_stream(&[&big, &small], &tasks, &BalanceConfig::default(), &RngState::new(9)).unwrap();
        let from_big = (0..10_000).filter(|_| s.next_draw().dataset == 0).count();
        assert!(within_3_sigma(from_big, 10_000, 0.9), "{from_big}");

        let config = BalanceConfig {
            dataset_balance: true,
            ..BalanceConfig::default()
        };
        let mut s = balanced_stream(&[&big, &small], &tasks, &config, &RngState::new(9)).unwrap();
        let from_big = (0..10_000).filter(|_| s.next_draw().dataset == 0).count();
        assert!(within_3_sigma(from_big, 10_000, 0.5), "{from_big}");
    }

    #[test]
    fn recolor_changes_palettes_but_keeps_classes_consistent() {
        let recs = records(1, 4);
        let tasks = [TaskVariant::Discriminative { kind: DiscriminativeKind::Segmentation }];
        let config = BalanceConfig {
            recolor: true,
            ..BalanceConfig::default()
        };
        let mut s = balanced_stream(&[&recs], &tasks, &config, &RngState::new(5)).unwrap();
        let a = s.next().unwrap().unwrap();
        let b = s.next().unwrap().unwrap();
        assert_ne!(a.palette, b.palette);
        for sample in [a, b] {
            let palette = sample.palette.unwrap();
            let mask = &recs[0].mask;
            for y in 0..32 {
                for x in 0..32 {
                    let expect = palette.color(mask.get(x, y)).unwrap();
                    assert_eq!(sample.image.get(x, y), expect);
                }
            }
        }
    }

    #[test]
    fn deterministic_and_rendered_in_draw_order() {
        let recs = records(5, 6);
        let tasks = [
            TaskVariant::Image,
            TaskVariant::Transform { kind: TransformKind::Rot90 },
        ];
        let config = BalanceConfig::default();
        let a = balanced_stream(&[&recs], &tasks, &config, &RngState::new(1)).unwrap().take_images(8).unwrap();
        let b = balanced_stream(&[&recs], &tasks, &config, &RngState::new(1)).unwrap().take_images(8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn configuration_errors() {
        let recs = records(2, 8);
        let tasks = [TaskVariant::Image];
        let rng = RngState::new(0);
        assert!(matches!(balanced_stream(&[], &tasks, &BalanceConfig::default(), &rng), Err(Error::Config(_))));
        assert!(matches!(balanced_stream(&[&recs], &[], &BalanceConfig::default(), &rng), Err(Error::Config(_))));
        let bad = BalanceConfig {
            task_balance: true,
            bucket_weights: Some(BTreeMap::from([("image".to_string(), 0.5)])),
            ..BalanceConfig::default()
        };
        assert!(matches!(balanced_stream(&[&recs], &tasks, &bad, &rng), Err(Error::Config(_))));
        let sr = [TaskVariant::SuperRes { target_side: 50 }];
        assert!(matches!(balanced_stream(&[&recs], &sr, &BalanceConfig::default(), &rng), Err(Error::Config(_))));
    }
}
