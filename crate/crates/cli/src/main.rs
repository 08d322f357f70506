//! `synthbench` — train generative models on an image corpus, triage the
//! synthetic replicas, and price the cost of substituting them for real
//! training data.
//!
//! Exit codes: 0 on a fully clean run, 2 when a run completed but left
//! rejects behind (e.g. undecodable files at ingest), 1 on any error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use synthbench_core::bench::{
    render_report, run_tstr, FileSource, GanRegistry, Report, ReportFormat, RunMetadata,
    TstrOptions,
};
use synthbench_core::config::{parse_label_rule, ExperimentConfig, Preset};
use synthbench_core::corpus::{ingest_directory, Manifest, Modality, Split};
use synthbench_core::features::combined_descriptor;
use synthbench_core::gan::{
    export_samples, load_checkpoint, train_gan, TrainingLog,
};
use synthbench_core::grid::PixelGrid;
use synthbench_core::preprocess::{
    foreground_mask, percentile_normalize, resize, tile_image, to_grayscale,
};
use synthbench_core::triage::{emit_montage, filter_synthetic, ReferenceSet, DEFAULT_TAU};
use synthbench_core::{imageio, toycorpus};

#[derive(Parser)]
#[command(name = "synthbench", version, about = "Synthetic-image substitution benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Catalog a directory of PNG/TIFF images into a manifest.
    Ingest(IngestArgs),
    /// Normalize, resize, grayscale and/or tile a cataloged corpus.
    Preprocess(PreprocessArgs),
    /// Train a GAN named in the experiment config on a manifest.
    TrainGan(TrainGanArgs),
    /// Render a review grid of samples from a checkpoint.
    Montage(MontageArgs),
    /// Sample a checkpoint into provenance-tagged synthetic records.
    Generate(GenerateArgs),
    /// Filter candidate images by average-hash distance to references.
    Triage(TriageArgs),
    /// Export combined LBP descriptors as CSV.
    Features(FeaturesArgs),
    /// Run the train-real vs train-synthetic benchmark for one task.
    Benchmark(BenchmarkArgs),
    /// Re-render a stored benchmark result set.
    Report(ReportArgs),
    /// Emit the procedural stripes/blobs demo corpus.
    DemoCorpus(DemoCorpusArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    root: PathBuf,
    #[arg(long, value_parser = parse_modality)]
    modality: Modality,
    /// Label rules like class=dir:0, age=re:_a(\d+)_, site=fixed:minsk.
    #[arg(long = "label-rule")]
    label_rules: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the rejects list (default: <out>.rejects.jsonl).
    #[arg(long)]
    rejects: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Convert color inputs to grayscale first.
    #[arg(long)]
    grayscale: bool,
    /// Percentile-normalize inside the Otsu+hull foreground mask.
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 5.0)]
    lo_pct: f64,
    #[arg(long, default_value_t = 95.0)]
    hi_pct: f64,
    /// Resize to size x size after normalization.
    #[arg(long)]
    size: Option<usize>,
    /// Cut into tile x tile patches (drops partial borders).
    #[arg(long)]
    tile: Option<usize>,
    /// Tile stride, defaults to the tile size.
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Args)]
struct TrainGanArgs {
    #[arg(long)]
    config: PathBuf,
    /// Name of the [gan.<name>] section.
    #[arg(long)]
    gan: String,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Label key for conditional training.
    #[arg(long)]
    label_key: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
}

#[derive(Args)]
struct MontageArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 4)]
    rows: usize,
    #[arg(long, default_value_t = 4)]
    cols: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(short = 'n', long)]
    count: usize,
    #[arg(long)]
    out_dir: PathBuf,
    /// Manifest of the emitted synthetic records.
    #[arg(long)]
    manifest: PathBuf,
    /// Fixed labels stamped on every record, e.g. class=stripes.
    #[arg(long = "set-label")]
    set_labels: Vec<String>,
    /// Conditional models: cycle these class values, e.g. class=a,b.
    #[arg(long)]
    cycle_labels: Option<String>,
    #[arg(long, value_parser = parse_modality, default_value = "xray")]
    modality: Modality,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct TriageArgs {
    /// Manifest of candidate (synthetic) images.
    #[arg(long)]
    candidates: PathBuf,
    /// Manifest of verified-valid reference images.
    #[arg(long)]
    refs: PathBuf,
    /// Use at most this many references.
    #[arg(long, default_value_t = 256)]
    ref_count: usize,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: u32,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated LBP radii.
    #[arg(long, default_value = "2,3,4")]
    radii: String,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    config: PathBuf,
    /// Name of the [task.<name>] section.
    #[arg(long)]
    task: String,
    #[arg(long)]
    real_train: PathBuf,
    #[arg(long)]
    synth_train: PathBuf,
    #[arg(long)]
    real_test: PathBuf,
    /// Training logs of every generator feeding the synthetic arm.
    #[arg(long = "training-log")]
    training_logs: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
}

#[derive(Args)]
struct ReportArgs {
    /// results.json produced by `benchmark`.
    #[arg(long)]
    results: PathBuf,
    #[arg(long, default_value = "markdown")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DemoCorpusArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 800)]
    n_train: usize,
    #[arg(long, default_value_t = 200)]
    n_test: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn parse_modality(s: &str) -> Result<Modality, String> {
    match s {
        "xray" => Ok(Modality::Xray),
        "histology" => Ok(Modality::Histology),
        other => Err(format!("unknown modality '{other}' (xray|histology)")),
    }
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    match s {
        "desk" => Ok(Preset::Desk),
        "paper" => Ok(Preset::Paper),
        other => Err(format!("unknown preset '{other}' (desk|paper)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(clean) => {
            if clean {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns whether the run was fully clean (no rejects or warnings).
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::TrainGan(a) => cmd_train_gan(a),
        Command::Montage(a) => cmd_montage(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Triage(a) => cmd_triage(a),
        Command::Features(a) => cmd_features(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Report(a) => cmd_report(a),
        Command::DemoCorpus(a) => cmd_demo_corpus(a),
    }
}

fn load_images(manifest: &Manifest) -> Result<Vec<PixelGrid>> {
    manifest
        .records()
        .iter()
        .map(|rec| {
            imageio::load(Path::new(&rec.path))
                .with_context(|| format!("loading record {}", rec.id))
        })
        .collect()
}

fn cmd_ingest(a: IngestArgs) -> Result<bool> {
    let rules = a
        .label_rules
        .iter()
        .map(|r| parse_label_rule(r).map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    let report = ingest_directory(&a.root, a.modality, &rules)?;
    report.manifest.write_to(&a.out)?;
    println!(
        "ingested {} records from {} (checksum {})",
        report.manifest.len(),
        a.root.display(),
        report.manifest.checksum()
    );
    if report.rejects.is_empty() {
        return Ok(true);
    }
    let rejects_path = a
        .rejects
        .unwrap_or_else(|| a.out.with_extension("rejects.jsonl"));
    let mut out = String::new();
    for r in &report.rejects {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(&rejects_path, out)?;
    eprintln!("{} rejects recorded in {}", report.rejects.len(), rejects_path.display());
    Ok(false)
}

fn cmd_preprocess(a: PreprocessArgs) -> Result<bool> {
    let manifest = Manifest::read_from(&a.manifest)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let mut records = Vec::new();
    let mut degenerate = 0usize;
    for rec in manifest.records() {
        let mut img = imageio::load(Path::new(&rec.path))
            .with_context(|| format!("loading record {}", rec.id))?;
        if a.grayscale {
            img = to_grayscale(&img)?;
        }
        if a.normalize {
            let gray = to_grayscale(&img)?;
            let fg = foreground_mask(&gray)?;
            let norm = percentile_normalize(&img, &fg.mask, a.lo_pct, a.hi_pct)?;
            if norm.degenerate {
                degenerate += 1;
            }
            img = norm.image;
        }
        if let Some(size) = a.size {
            img = resize(&img, size, size)?;
        }
        let outputs: Vec<(String, PixelGrid)> = match a.tile {
            None => vec![(rec.id.clone(), img)],
            Some(t) => {
                let stride = a.stride.unwrap_or(t);
                let class = rec.labels.get("class").cloned().unwrap_or_default();
                tile_image(&img, t, stride, &class)?
                    .into_iter()
                    .enumerate()
                    .map(|(k, (tile, _))| (format!("{}_t{k:03}", rec.id), tile))
                    .collect()
            }
        };
        for (id, img) in outputs {
            let rel = format!("{}.png", id.replace('/', "_"));
            let path = a.out_dir.join(&rel);
            let depth = if img.channels() == 1 {
                imageio::SaveDepth::Sixteen
            } else {
                imageio::SaveDepth::Eight
            };
            imageio::save(&img, &path, depth)?;
            let mut out_rec = rec.clone();
            out_rec.id = id;
            out_rec.path = path.to_string_lossy().into_owned();
            out_rec.width = img.width() as u32;
            out_rec.height = img.height() as u32;
            out_rec.channels = img.channels() as u8;
            records.push(out_rec);
        }
    }
    let out_manifest = Manifest::new(records)?;
    out_manifest.write_to(&a.out)?;
    println!("preprocessed {} -> {} records", manifest.len(), out_manifest.len());
    if degenerate > 0 {
        eprintln!("warning: {degenerate} images hit degenerate normalization (constant output)");
    }
    Ok(degenerate == 0)
}

fn cmd_train_gan(a: TrainGanArgs) -> Result<bool> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(p) = a.preset {
        config.run.preset = p;
    }
    let seed = a.seed.unwrap_or(config.run.seed);
    let gan_cfg = config.gan_config(&a.gan)?;
    let manifest = Manifest::read_from(&a.manifest)?;
    if manifest.is_empty() {
        bail!("manifest {} has no records", a.manifest.display());
    }
    let images = load_images(&manifest)?;

    let labels: Option<Vec<usize>> = match (&a.label_key, gan_cfg.conditional) {
        (Some(key), true) => {
            let mut values: Vec<String> = manifest
                .records()
                .iter()
                .map(|r| r.label(key).map(str::to_string))
                .collect::<synthbench_core::Result<Vec<_>>>()?;
            let mut uniq = values.clone();
            uniq.sort();
            uniq.dedup();
            if uniq.len() != gan_cfg.label_cardinality {
                bail!(
                    "label key '{key}' has {} values but label_cardinality is {}",
                    uniq.len(),
                    gan_cfg.label_cardinality
                );
            }
            let index: BTreeMap<&str, usize> =
                uniq.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
            Some(values.drain(..).map(|v| index[v.as_str()]).collect())
        }
        (None, true) => bail!("conditional model requires --label-key"),
        (_, false) => None,
    };

    std::fs::create_dir_all(&a.out_dir)?;
    let run = train_gan(&gan_cfg, &images, labels.as_deref(), seed, Some(&a.out_dir))?;

    let log = TrainingLog {
        model_id: gan_cfg.model_id.clone(),
        seed,
        record_ids: manifest.ids().map(str::to_string).collect(),
    };
    log.save(&a.out_dir.join(format!("{}_training_log.json", gan_cfg.model_id)))?;

    let trace: Vec<serde_json::Value> = run
        .d_loss_trace
        .iter()
        .zip(run.g_loss_trace.iter())
        .map(|(d, g)| serde_json::json!({"d_loss": d, "g_loss": g}))
        .collect();
    std::fs::write(
        a.out_dir.join(format!("{}_losses.json", gan_cfg.model_id)),
        serde_json::to_string_pretty(&trace)?,
    )?;

    println!(
        "trained {}: {} checkpoints, final d_loss {:.4}, g_loss {:.4}",
        gan_cfg.model_id,
        run.checkpoints.len(),
        run.d_loss_trace.last().copied().unwrap_or(f64::NAN),
        run.g_loss_trace.last().copied().unwrap_or(f64::NAN),
    );
    match run.aborted {
        Some(reason) => {
            eprintln!("training aborted: {reason}");
            Ok(false)
        }
        None => Ok(true),
    }
}

fn cmd_montage(a: MontageArgs) -> Result<bool> {
    let (model, meta) = load_checkpoint(&a.checkpoint)?;
    let path = emit_montage(&model, &meta, a.rows, a.cols, a.seed, &a.out_dir)?;
    println!("montage written to {}", path.display());
    Ok(true)
}

fn cmd_generate(a: GenerateArgs) -> Result<bool> {
    let (model, meta) = load_checkpoint(&a.checkpoint)?;
    let fixed: Vec<(String, String)> = a
        .set_labels
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| anyhow::anyhow!("--set-label '{s}' is not key=value"))
        })
        .collect::<Result<Vec<_>>>()?;

    let (label_ids, label_key_values): (Option<Vec<usize>>, Option<(String, Vec<String>)>) =
        match &a.cycle_labels {
            None => {
                if model.config().conditional {
                    bail!("conditional checkpoint requires --cycle-labels key=v0,v1,...");
                }
                (None, None)
            }
            Some(spec) => {
                let (key, vals) = spec
                    .split_once('=')
                    .ok_or_else(|| anyhow::anyhow!("--cycle-labels '{spec}' is not key=v0,v1"))?;
                let values: Vec<String> = vals.split(',').map(str::to_string).collect();
                if values.len() != model.config().label_cardinality {
                    bail!(
                        "{} label values given but model cardinality is {}",
                        values.len(),
                        model.config().label_cardinality
                    );
                }
                let ids = (0..a.count).map(|i| i % values.len()).collect();
                (Some(ids), Some((key.to_string(), values)))
            }
        };

    let records = export_samples(
        &model,
        &meta,
        a.count,
        label_ids.as_deref(),
        label_key_values.as_ref().map(|(k, v)| (k.as_str(), v.as_slice())),
        &fixed,
        a.modality,
        a.seed,
        &a.out_dir,
    )?;
    let manifest = Manifest::new(records)?;
    manifest.write_to(&a.manifest)?;
    println!(
        "generated {} samples from {} into {} (manifest {})",
        a.count,
        meta.checkpoint_id(),
        a.out_dir.display(),
        a.manifest.display()
    );
    Ok(true)
}

fn cmd_triage(a: TriageArgs) -> Result<bool> {
    let refs_manifest = Manifest::read_from(&a.refs)?;
    let cand_manifest = Manifest::read_from(&a.candidates)?;
    let ref_images: Vec<PixelGrid> = load_images(&refs_manifest)?
        .into_iter()
        .take(a.ref_count)
        .collect();
    let candidates = load_images(&cand_manifest)?;
    let refs = ReferenceSet::from_images(&ref_images, a.tau)?;
    let outcome = filter_synthetic(&candidates, &refs)?;

    std::fs::create_dir_all(&a.out_dir)?;
    let ids: Vec<String> = cand_manifest.ids().map(str::to_string).collect();
    let kept_ids: Vec<String> = outcome.kept.iter().map(|i| ids[*i].clone()).collect();
    let rejected_ids: Vec<String> = outcome.rejected.iter().map(|i| ids[*i].clone()).collect();
    cand_manifest.select(&kept_ids)?.write_to(&a.out_dir.join("kept.jsonl"))?;
    cand_manifest.select(&rejected_ids)?.write_to(&a.out_dir.join("rejected.jsonl"))?;
    std::fs::write(a.out_dir.join("distances.jsonl"), outcome.audit_lines())?;
    println!(
        "kept {} / rejected {} (rejection rate {:.1}%), tau {}",
        outcome.kept.len(),
        outcome.rejected.len(),
        100.0 * outcome.rejection_rate(),
        a.tau
    );
    Ok(true)
}

fn cmd_features(a: FeaturesArgs) -> Result<bool> {
    let manifest = Manifest::read_from(&a.manifest)?;
    let radii: Vec<f64> = a
        .radii
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow::anyhow!("bad radius '{s}': {e}")))
        .collect::<Result<Vec<_>>>()?;
    let images = load_images(&manifest)?;
    let mut out = String::new();
    let dim = (1usize << 8) * radii.len();
    out.push_str("id");
    for i in 0..dim {
        out.push_str(&format!(",f{i:04}"));
    }
    out.push('\n');
    for (rec, img) in manifest.records().iter().zip(images.iter()) {
        let fv = combined_descriptor(img, &radii)?;
        out.push_str(&rec.id);
        for v in fv.values() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    std::fs::write(&a.out, out)?;
    println!("wrote {} feature rows ({} dims) to {}", manifest.len(), dim, a.out.display());
    Ok(true)
}

fn cmd_benchmark(a: BenchmarkArgs) -> Result<bool> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(p) = a.preset {
        config.run.preset = p;
    }
    let seed = a.seed.unwrap_or(config.run.seed);
    let task = config.benchmark_task(&a.task)?;
    let specs = config.classifier_specs()?;

    let real_train = Manifest::read_from(&a.real_train)?;
    let synth_train = Manifest::read_from(&a.synth_train)?;
    let real_test = Manifest::read_from(&a.real_test)?;

    let mut registry = GanRegistry::new();
    for log_path in &a.training_logs {
        let log = TrainingLog::load(log_path)?;
        registry.insert(&log.model_id.clone(), log.record_ids);
    }

    let image_size = real_train
        .records()
        .first()
        .map(|r| r.width as usize)
        .unwrap_or(32);
    let mut opts = TstrOptions::desk(image_size);
    opts.cnn = config.cnn_config(image_size);
    opts.registry = registry;

    let results = run_tstr(
        &task,
        &real_train,
        &synth_train,
        &real_test,
        &specs,
        seed,
        &FileSource { base: None },
        &opts,
    )?;

    let report = Report {
        results,
        metadata: RunMetadata {
            seed,
            real_train_checksum: real_train.checksum().to_string(),
            synth_train_checksum: synth_train.checksum().to_string(),
            real_test_checksum: real_test.checksum().to_string(),
            notes: vec![format!("task={} preset={:?}", task.name, config.run.preset)],
        },
    };

    std::fs::create_dir_all(&a.out_dir)?;
    std::fs::write(a.out_dir.join("results.json"), serde_json::to_string_pretty(&report)?)?;
    let md = render_report(&report, ReportFormat::Markdown)?;
    std::fs::write(a.out_dir.join("report.md"), &md)?;
    std::fs::write(
        a.out_dir.join("report.csv"),
        render_report(&report, ReportFormat::Csv)?,
    )?;
    println!("{md}");
    Ok(true)
}

fn cmd_report(a: ReportArgs) -> Result<bool> {
    let text = std::fs::read_to_string(&a.results)?;
    let report: Report = serde_json::from_str(&text)?;
    let format = match a.format.as_str() {
        "markdown" | "md" => ReportFormat::Markdown,
        "csv" => ReportFormat::Csv,
        other => bail!("unknown format '{other}' (markdown|csv)"),
    };
    let rendered = render_report(&report, format)?;
    match a.out {
        Some(path) => {
            std::fs::write(&path, rendered)?;
            println!("report written to {}", path.display());
        }
        None => print!("{rendered}"),
    }
    Ok(true)
}

fn cmd_demo_corpus(a: DemoCorpusArgs) -> Result<bool> {
    let total = a.n_train + a.n_test;
    let corpus = toycorpus::texture_corpus(total, a.size, a.seed);
    let train_dir = a.out_dir.join("train");
    let test_dir = a.out_dir.join("test");
    let train = toycorpus::ToyCorpus {
        images: corpus.images[..a.n_train].to_vec(),
        labels: corpus.labels[..a.n_train].to_vec(),
    };
    let test = toycorpus::ToyCorpus {
        images: corpus.images[a.n_train..].to_vec(),
        labels: corpus.labels[a.n_train..].to_vec(),
    };
    toycorpus::write_corpus(&train, &train_dir)?;
    toycorpus::write_corpus(&test, &test_dir)?;

    let rules = [parse_label_rule("class=dir:0")?];
    let mut train_manifest = ingest_directory(&train_dir, Modality::Xray, &rules)?.manifest;
    let test_manifest = ingest_directory(&test_dir, Modality::Xray, &rules)?.manifest;
    // Mark splits explicitly in the emitted manifests.
    let train_ids: Vec<String> = train_manifest.ids().map(str::to_string).collect();
    train_manifest = train_manifest.with_split(&train_ids, &[])?;
    let test_ids: Vec<String> = test_manifest.ids().map(str::to_string).collect();
    let test_manifest = {
        let m = test_manifest.with_split(&[], &test_ids)?;
        let records = m
            .records()
            .iter()
            .cloned()
            .map(|mut r| {
                r.split = Split::Test;
                r
            })
            .collect();
        Manifest::new(records)?
    };
    train_manifest.write_to(&a.out_dir.join("train.jsonl"))?;
    test_manifest.write_to(&a.out_dir.join("test.jsonl"))?;
    println!(
        "demo corpus: {} train / {} test images at {} ({}x{})",
        a.n_train,
        a.n_test,
        a.out_dir.display(),
        a.size,
        a.size
    );
    Ok(true)
}
