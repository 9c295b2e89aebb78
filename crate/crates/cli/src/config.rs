//! Run configuration: one TOML file, overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use taskforge_core::dataset::FixtureLayout;
use taskforge_core::codebook::{BalanceConfig, CodecGeometry};
use taskforge_core::harness::DEFAULT_UPPER_BOUND_SAMPLES;
use taskforge_core::masking::{MaskingStrategy, CONTEXT_WINDOW, DEFAULT_K, DEFAULT_MASK_IMAGES, DEFAULT_MASK_P};
use taskforge_core::raster::DEFAULT_CANONICAL_SIDE;
use taskforge_core::sampler::{SamplerConfig, StructureLimits, DEFAULT_IMAGE_BUDGET, DEFAULT_T_MAX};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "TASKFORGE_CONFIG";
/// File written beside every output.
pub const EFFECTIVE_CONFIG: &str = "run_config.toml";

pub const MAX_IMAGE_BUDGET: usize = 30;
pub const MAX_T: usize = 15;
pub const MAX_K: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub fixtures: FixtureSettings,
    pub sampler: SamplerSettings,
    pub codec: CodecSettings,
    pub masking: MaskingSettings,
    pub balance: BalanceConfig,
    pub eval: EvalSettings,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Dataset manifests, or directories holding a `manifest.json`.
    pub datasets: Vec<PathBuf>,
    pub bundles: Option<PathBuf>,
    pub codebook: Option<PathBuf>,
    pub tokens: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSettings {
    pub records: usize,
    pub classes: usize,
    pub side: usize,
    pub layout: LayoutKind,
}

impl Default for FixtureSettings {
    fn default() -> Self {
        Self {
            records: 24,
            classes: 3,
            side: DEFAULT_CANONICAL_SIDE,
            layout: LayoutKind::Scattered,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    Scattered,
    Anchored,
}

impl LayoutKind {
    pub fn layout(self) -> FixtureLayout {
        match self {
            LayoutKind::Scattered => FixtureLayout::Scattered,
            LayoutKind::Anchored => FixtureLayout::Anchored,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub image_budget: usize,
    pub t_max: usize,
    pub n_context_min: usize,
    pub n_context_max: usize,
    pub count: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            image_budget: DEFAULT_IMAGE_BUDGET,
            t_max: DEFAULT_T_MAX,
            n_context_min: 1,
            n_context_max: 3,
            count: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CodecKind {
    Kmeans,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecSettings {
    pub kind: CodecKind,
    pub vocab_size: usize,
    pub patch_side: usize,
    pub grid: usize,
    /// Canonical side datasets are resized to on load.
    pub image_side: usize,
    pub iterations: usize,
    /// Stream samples used for training.
    pub train_samples: usize,
}

impl Default for CodecSettings {
    fn default() -> Self {
        Self {
            kind: CodecKind::Kmeans,
            vocab_size: 512,
            patch_side: CodecGeometry::DEFAULT.patch_side,
            grid: CodecGeometry::DEFAULT.grid,
            image_side: DEFAULT_CANONICAL_SIDE,
            iterations: 10,
            train_samples: 200,
        }
    }
}

impl CodecSettings {
    pub fn geometry(&self) -> anyhow::Result<CodecGeometry> {
        Ok(CodecGeometry::new(self.image_side, self.patch_side, self.grid)?)
    }

    pub fn q(&self) -> usize {
        self.grid * self.grid
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Token,
    ImageToken,
    SequenceToken,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskingSettings {
    pub strategy: StrategyKind,
    pub p: f64,
    pub n_images: usize,
    pub k: usize,
}

impl Default for MaskingSettings {
    fn default() -> Self {
        Self {
            strategy: StrategyKind::Mixed,
            p: DEFAULT_MASK_P,
            n_images: DEFAULT_MASK_IMAGES,
            k: DEFAULT_K,
        }
    }
}

impl MaskingSettings {
    pub fn strategy(&self) -> MaskingStrategy {
        match self.strategy {
            StrategyKind::Token => MaskingStrategy::Token { p: self.p },
            StrategyKind::ImageToken => MaskingStrategy::ImageToken { n_images: self.n_images },
            StrategyKind::SequenceToken => MaskingStrategy::SequenceToken,
            StrategyKind::Mixed => MaskingStrategy::Mixed {
                p: self.p,
                n_images: self.n_images,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub samples_per_task: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            samples_per_task: DEFAULT_UPPER_BOUND_SAMPLES,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            fixtures: FixtureSettings::default(),
            sampler: SamplerSettings::default(),
            codec: CodecSettings::default(),
            masking: MaskingSettings::default(),
            balance: BalanceConfig::default(),
            eval: EvalSettings::default(),
        }
    }
}

/// A configuration value outside its documented range.
#[derive(Debug)]
pub struct ValidationError {
    pub field: &'static str,
    pub message: String,
}

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid {}: {}", self.field, self.message)
    }
}

impl std::error::Error for ValidationError {}

fn fail(field: &'static str, message: String) -> Result<(), ValidationError> {
    Err(ValidationError { field, message })
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the effective config as `run_config.toml` in `dir`.
    pub fn write_beside(&self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(EFFECTIVE_CONFIG);
        fs::write(&path, self.to_toml()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let s = &self.sampler;
        if s.image_budget > MAX_IMAGE_BUDGET {
            return fail(
                "image_budget",
                format!("{} exceeds the hard maximum {MAX_IMAGE_BUDGET}", s.image_budget),
            );
        }
        if s.image_budget < 2 * (s.n_context_min + 1) {
            return fail(
                "image_budget",
                format!("{} cannot hold {} chains of two images", s.image_budget, s.n_context_min + 1),
            );
        }
        if s.t_max < 2 || s.t_max > MAX_T {
            return fail("t_max", format!("{} not in [2, {MAX_T}]", s.t_max));
        }
        if s.n_context_min == 0 || s.n_context_min > s.n_context_max {
            return fail(
                "n_context_min",
                format!("range [{}, {}] is empty or starts at 0", s.n_context_min, s.n_context_max),
            );
        }
        let c = &self.codec;
        if c.vocab_size == 0 || c.vocab_size > (1 << 24) {
            return fail("vocab_size", format!("{} not in [1, 2^24]", c.vocab_size));
        }
        if c.patch_side == 0 || c.grid == 0 || c.image_side == 0 {
            return fail("grid", "patch_side, grid and image_side must be positive".into());
        }
        if c.kind == CodecKind::Identity && c.image_side % c.grid != 0 {
            return fail("grid", format!("{} does not divide image_side {}", c.grid, c.image_side));
        }
        if c.iterations == 0 {
            return fail("iterations", "must be positive".into());
        }
        let m = &self.masking;
        if !(m.p > 0.0 && m.p < 1.0) {
            return fail("p", format!("{} not in (0, 1)", m.p));
        }
        if m.n_images == 0 || m.n_images > s.image_budget {
            return fail("n_images", format!("{} not in [1, image_budget]", m.n_images));
        }
        if m.k == 0 || m.k > MAX_K {
            return fail("k", format!("{} not in [1, {MAX_K}]", m.k));
        }
        let longest = s.image_budget * (c.q() + m.k) + s.n_context_max * m.k;
        if longest > CONTEXT_WINDOW {
            return fail(
                "image_budget",
                format!("longest sequence of {longest} tokens exceeds the {CONTEXT_WINDOW}-token window"),
            );
        }
        if self.fixtures.classes == 0 || self.fixtures.side < 16 {
            return fail("fixtures", "need at least one class and side >= 16".into());
        }
        if self.eval.samples_per_task == 0 {
            return fail("samples_per_task", "must be positive".into());
        }
        Ok(())
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            n_context_min: self.sampler.n_context_min,
            n_context_max: self.sampler.n_context_max,
            image_budget: self.sampler.image_budget,
            limits: StructureLimits {
                t_max: self.sampler.t_max,
                image_side: self.codec.image_side,
                ..StructureLimits::default()
            },
            ..SamplerConfig::default()
        }
    }
}
