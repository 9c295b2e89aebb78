use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use taskforge_core::codebook::{
    balanced_stream, train_codebook, Codec, IdentityCodebook, KMeansCodebook, TrainConfig,
};
use taskforge_core::dataset::{fixture_dataset_with, load_dataset, write_dataset, write_image, Dataset, MANIFEST_FILE};
use taskforge_core::harness::{
    codebook_upper_bound, list_bundles, run_eval, write_upper_bound_report, ColorProtocol, EvalConfig,
    UpperBoundConfig,
};
use taskforge_core::masking::{
    apply_masking, assemble_tokens, read_token_file, split_targets, write_token_file, TokenFile, TokenRecord,
};
use taskforge_core::raster::{ClassId, ImageRaster};
use taskforge_core::sampler::{read_bundle, sample_cqo, write_bundle, ImageRole};
use taskforge_core::task_ops::{render_variant, sample_palette, TaskVariant};
use taskforge_core::RngState;

use crate::config::{CodecKind, RunConfig};
use crate::{apply_codec, apply_data, base_config, set, Command};

pub const TOKEN_FILE: &str = "tokens.tfts";
pub const MASKED_FILE: &str = "masked.tfts";
pub const CODEBOOK_FILE: &str = "codebook.tfcb";

pub(crate) fn execute(command: Command) -> Result<()> {
    match command {
        Command::Fixtures {
            common,
            records,
            classes,
            side,
            layout,
        } => {
            let mut c = base_config(&common)?;
            set(&mut c.fixtures.records, records);
            set(&mut c.fixtures.classes, classes);
            set(&mut c.fixtures.side, side);
            set(&mut c.fixtures.layout, layout);
            fixtures(&finish(c)?)
        }
        Command::Enrich { common, data, record } => {
            let mut c = base_config(&common)?;
            apply_data(&mut c, &data);
            enrich(&finish(c)?, record.as_deref())
        }
        Command::Sample {
            common,
            data,
            budget,
            t_max,
            count,
            n_context_min,
            n_context_max,
        } => {
            let mut c = base_config(&common)?;
            apply_data(&mut c, &data);
            set(&mut c.sampler.image_budget, budget);
            set(&mut c.sampler.t_max, t_max);
            set(&mut c.sampler.count, count);
            set(&mut c.sampler.n_context_min, n_context_min);
            set(&mut c.sampler.n_context_max, n_context_max);
            sample(&finish(c)?)
        }
        Command::TrainCodebook {
            common,
            data,
            vocab_size,
            patch_side,
            grid,
            iterations,
            samples,
            task_balance,
            dataset_balance,
            recolor,
        } => {
            let mut c = base_config(&common)?;
            apply_data(&mut c, &data);
            set(&mut c.codec.vocab_size, vocab_size);
            set(&mut c.codec.patch_side, patch_side);
            set(&mut c.codec.grid, grid);
            set(&mut c.codec.iterations, iterations);
            set(&mut c.codec.train_samples, samples);
            set(&mut c.balance.task_balance, task_balance);
            set(&mut c.balance.dataset_balance, dataset_balance);
            set(&mut c.balance.recolor, recolor);
            c.codec.kind = CodecKind::Kmeans;
            train(&finish(c)?)
        }
        Command::Tokenize {
            common,
            codec,
            bundles,
            image_side,
            k,
        } => {
            let mut c = base_config(&common)?;
            apply_codec(&mut c, &codec);
            if bundles.is_some() {
                c.paths.bundles = bundles;
            }
            set(&mut c.codec.image_side, image_side);
            set(&mut c.masking.k, k);
            tokenize(&finish(c)?)
        }
        Command::Mask {
            common,
            tokens,
            strategy,
            p,
            n_images,
        } => {
            let mut c = base_config(&common)?;
            if tokens.is_some() {
                c.paths.tokens = tokens;
            }
            set(&mut c.masking.strategy, strategy);
            set(&mut c.masking.p, p);
            set(&mut c.masking.n_images, n_images);
            mask(&finish(c)?)
        }
        Command::EvalCodebook {
            common,
            data,
            codec,
            samples,
        } => {
            let mut c = base_config(&common)?;
            apply_data(&mut c, &data);
            apply_codec(&mut c, &codec);
            set(&mut c.eval.samples_per_task, samples);
            eval_codebook(&finish(c)?)
        }
        Command::EvalPreds {
            common,
            bundles,
            predictions,
        } => {
            let mut c = base_config(&common)?;
            if bundles.is_some() {
                c.paths.bundles = bundles;
            }
            if predictions.is_some() {
                c.paths.predictions = predictions;
            }
            eval_preds(&finish(c)?)
        }
        Command::Preview { common, bundle } => {
            let mut c = base_config(&common)?;
            if bundle.is_some() {
                c.paths.bundles = bundle;
            }
            preview(&finish(c)?)
        }
    }
}

/// Validates the merged config and records it in the output directory.
fn finish(config: RunConfig) -> Result<RunConfig> {
    config.validate()?;
    let out = out_dir(&config)?;
    config.write_beside(&out)?;
    Ok(config)
}

fn out_dir(config: &RunConfig) -> Result<PathBuf> {
    config
        .paths
        .out
        .clone()
        .ok_or_else(|| anyhow!("no output directory: pass --out or set paths.out"))
}

fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| anyhow!("missing {what}"))
}

fn master(config: &RunConfig, command: &str) -> RngState {
    RngState::new(config.seed).derive_named(command)
}

fn load_datasets(config: &RunConfig) -> Result<Vec<Dataset>> {
    if config.paths.datasets.is_empty() {
        bail!("no dataset given: pass --dataset or set paths.datasets");
    }
    config
        .paths
        .datasets
        .iter()
        .map(|p| {
            let manifest = if p.is_dir() { p.join(MANIFEST_FILE) } else { p.clone() };
            load_dataset(&manifest, config.codec.image_side).with_context(|| format!("loading dataset {}", p.display()))
        })
        .collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn fixtures(config: &RunConfig) -> Result<()> {
    let f = &config.fixtures;
    let dataset = fixture_dataset_with(f.records, f.classes, f.side, f.layout.layout(), &master(config, "fixtures"))?;
    write_dataset(&out_dir(config)?, &dataset)?;
    Ok(())
}

fn variants_for(side: usize) -> Vec<TaskVariant> {
    TaskVariant::all()
        .into_iter()
        .filter(|v| !matches!(v, TaskVariant::SuperRes { target_side } if *target_side >= side))
        .collect()
}

fn enrich(config: &RunConfig, record: Option<&str>) -> Result<()> {
    let out = out_dir(config)?;
    let root = master(config, "enrich");
    for (d, dataset) in load_datasets(config)?.iter().enumerate() {
        let classes: BTreeSet<ClassId> = dataset.class_ids();
        let palette = sample_palette(&classes, &mut root.derive_named(&dataset.id))?;
        let selected: Vec<(usize, _)> = dataset
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| record.is_none_or(|id| r.id == id))
            .collect();
        if selected.is_empty() {
            if let Some(id) = record {
                bail!("record {id} not found in dataset {}", dataset.id);
            }
        }
        selected.par_iter().try_for_each(|(i, r)| -> Result<()> {
            let dir = out.join(&dataset.id).join(&r.id);
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let side = r.image.width().min(r.image.height());
            for (v, variant) in variants_for(side).into_iter().enumerate() {
                let mut rng = root.derive(d as u64).derive(*i as u64).derive(v as u64);
                let img = render_variant(r, variant, &palette, &mut rng)?;
                write_image(&dir.join(format!("{}.png", variant.file_stem())), &img)?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn sample(config: &RunConfig) -> Result<()> {
    let out = out_dir(config)?;
    let records: Vec<_> = load_datasets(config)?.into_iter().flat_map(|d| d.records).collect();
    let sampler = config.sampler_config();
    let root = master(config, "sample");
    (0..config.sampler.count).into_par_iter().try_for_each(|i| -> Result<()> {
        let bundle = sample_cqo(&records, &root.derive(i as u64), &sampler).with_context(|| format!("bundle {i}"))?;
        write_bundle(&out.join(format!("b{i:04}")), &bundle)?;
        Ok(())
    })
}

fn train(config: &RunConfig) -> Result<()> {
    let out = out_dir(config)?;
    let datasets = load_datasets(config)?;
    let slices: Vec<&[_]> = datasets.iter().map(|d| d.records.as_slice()).collect();
    let side = datasets
        .iter()
        .flat_map(|d| &d.records)
        .map(|r| r.image.width().min(r.image.height()))
        .min()
        .ok_or_else(|| anyhow!("datasets hold no records"))?;
    let root = master(config, "train-codebook");
    let mut stream = balanced_stream(&slices, &variants_for(side), &config.balance, &root.derive_named("stream"))?;
    let images = stream.take_images(config.codec.train_samples)?;
    let train_config = TrainConfig {
        vocab_size: config.codec.vocab_size,
        geometry: config.codec.geometry()?,
        iterations: config.codec.iterations,
        samples: config.codec.train_samples,
        seed: root.derive_named("kmeans").seed(),
    };
    let (codebook, report) = train_codebook(images, &train_config)?;
    codebook.write(&out.join(CODEBOOK_FILE))?;
    write_json(&out.join("train_report.json"), &report)
}

fn codec(config: &RunConfig) -> Result<Box<dyn Codec>> {
    Ok(match config.codec.kind {
        CodecKind::Identity => Box::new(IdentityCodebook::new(config.codec.image_side, config.codec.grid)?),
        CodecKind::Kmeans => {
            let path = required(&config.paths.codebook, "codebook: pass --codebook or set paths.codebook")?;
            let path = if path.is_dir() { path.join(CODEBOOK_FILE) } else { path.to_path_buf() };
            Box::new(KMeansCodebook::read(&path, config.codec.image_side)?)
        }
    })
}

#[derive(Serialize)]
struct TokenIndex {
    codec: String,
    bundles: Vec<String>,
    warnings: Vec<String>,
}

fn tokenize(config: &RunConfig) -> Result<()> {
    let out = out_dir(config)?;
    let bundles_dir = required(&config.paths.bundles, "bundle directory: pass --bundles or set paths.bundles")?;
    let dirs = list_bundles(bundles_dir)?;
    if dirs.is_empty() {
        bail!("no bundles under {}", bundles_dir.display());
    }
    let codec = codec(config)?;
    let k = config.masking.k;
    // Sequential: the identity codec assigns ids in first-seen order.
    let mut records = Vec::with_capacity(dirs.len());
    let mut names = Vec::with_capacity(dirs.len());
    let mut warnings = Vec::new();
    for dir in &dirs {
        let name = dir.file_name().expect("named").to_string_lossy().into_owned();
        let bundle = read_bundle(dir)?;
        let seq = assemble_tokens(&bundle, codec.as_ref(), k).with_context(|| format!("bundle {name}"))?;
        warnings.extend(seq.warnings().into_iter().map(|w| format!("{name}: {w}")));
        records.push(TokenRecord::plain(&seq));
        names.push(name);
    }
    let file = TokenFile {
        vocab: codec.vocab_size(),
        q: codec.tokens_per_image(),
        k,
        records,
    };
    write_token_file(&out.join(TOKEN_FILE), &file)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    write_json(
        &out.join("tokens.json"),
        &TokenIndex {
            codec: codec.describe(),
            bundles: names,
            warnings,
        },
    )
}

fn mask(config: &RunConfig) -> Result<()> {
    let out = out_dir(config)?;
    let path = required(&config.paths.tokens, "token file: pass --tokens or set paths.tokens")?;
    let path = if path.is_dir() { path.join(TOKEN_FILE) } else { path.to_path_buf() };
    let input = read_token_file(&path)?;
    let strategy = config.masking.strategy();
    let root = master(config, "mask");
    let records = input
        .sequences()?
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            let masked = apply_masking(seq, strategy, &root.derive(i as u64)).with_context(|| format!("record {i}"))?;
            Ok(TokenRecord::masked(seq, &split_targets(&masked)))
        })
        .collect::<Result<Vec<_>>>()?;
    write_token_file(&out.join(MASKED_FILE), &TokenFile { records, ..input })?;
    Ok(())
}

fn eval_codebook(config: &RunConfig) -> Result<()> {
    let out = out_dir(config)?;
    let codec = codec(config)?;
    let root = master(config, "eval-codebook");
    let mut reports = Vec::new();
    for dataset in load_datasets(config)? {
        let side = dataset
            .records
            .iter()
            .map(|r| r.image.width().min(r.image.height()))
            .min()
            .ok_or_else(|| anyhow!("dataset {} is empty", dataset.id))?;
        let tasks = variants_for(side);
        let rng = root.derive_named(&dataset.id);
        let ub = UpperBoundConfig {
            samples: config.eval.samples_per_task,
            fixed_palette: config.balance.fixed_palette.clone(),
        };
        for protocol in [ColorProtocol::Fixed, ColorProtocol::Random] {
            reports.push(codebook_upper_bound(codec.as_ref(), &dataset.records, &tasks, protocol, &ub, &rng)?);
        }
    }
    write_upper_bound_report(&out, &reports)?;
    Ok(())
}

fn eval_preds(config: &RunConfig) -> Result<()> {
    let eval = EvalConfig {
        bundles: required(&config.paths.bundles, "bundle directory: pass --bundles or set paths.bundles")?.to_path_buf(),
        predictions: config.paths.predictions.clone(),
        out: out_dir(config)?,
        seed: master(config, "eval-preds").seed(),
    };
    run_eval(&eval)?;
    Ok(())
}

const GAP: usize = 4;
const CHAIN_GAP: usize = 16;

fn preview(config: &RunConfig) -> Result<()> {
    let dir = required(&config.paths.bundles, "bundle: pass --bundle")?;
    let bundle = read_bundle(dir)?;
    let images = bundle.images();
    let height = images.iter().map(|(_, img)| img.height()).max().unwrap_or(0);
    let mut layout: Vec<(usize, &ImageRaster)> = Vec::with_capacity(images.len());
    let mut x = 0;
    let mut prev: Option<ImageRole> = None;
    for (role, img) in &images {
        if let Some(p) = prev {
            let new_chain = p != *role && !(p == ImageRole::Query && *role == ImageRole::Output);
            x += if new_chain { CHAIN_GAP } else { GAP };
        }
        layout.push((x, img));
        x += img.width();
        prev = Some(*role);
    }
    let mut strip = ImageRaster::filled(x.max(1), height.max(1), [255, 255, 255]);
    for (x0, img) in layout {
        for y in 0..img.height() {
            for xx in 0..img.width() {
                strip.set(x0 + xx, y, img.get(xx, y));
            }
        }
    }
    write_image(&out_dir(config)?.join("preview.png"), &strip)?;
    Ok(())
}
