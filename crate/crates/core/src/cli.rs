//! Command-line front end over the experiment harness.
//!
//! Every subcommand starts from an [`ExperimentConfig`]: the file given by
//! `--config` (or the built-in synthetic default), then `--set key=value`
//! overrides on dotted TOML paths, then the dedicated flags.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::data::{self, Payload};
use crate::error::{Error, Result};
use crate::experiment::pipeline::{files, round_f32};
use crate::experiment::sweep::{compare_csv, parse_variants};
use crate::experiment::{
    compare_codebooks, load_dataset, sweep_q, Artifacts, DatasetSpec, ExperimentConfig, Pipeline,
    RunState, Stage,
};
use crate::forest::io::{read_bow_csv, write_bow_csv};
use crate::forest::BowHistogram;
use crate::phog;

#[derive(Parser, Debug)]
#[command(
    name = "hic-zeroshot",
    version,
    about = "Zero-shot recognition with forest codebooks, pLSA topics and a coarse/fine hierarchy"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct Global {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed; every stage seed is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Reuse stage artifacts in the output directory when the configuration
    /// fingerprint matches.
    #[arg(long, global = true)]
    pub checkpoint: bool,
    /// Unseen classes per coarse class.
    #[arg(long, global = true)]
    pub q: Option<usize>,
    #[arg(long, global = true)]
    pub num_topics: Option<usize>,
    /// Forest variant: fine, coarse, jcofi or cofi.
    #[arg(long, global = true)]
    pub variant: Option<String>,
    /// Override any configuration field, e.g. `forest.num_trees=10`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// PHOG descriptors of the seen-class training images.
    Extract,
    /// Train the forest codebook.
    TrainCodebook,
    /// Quantize the training images and fit pLSA.
    FitPlsa,
    /// Signature topic sets for seen classes and unions for unseen ones.
    BuildClassifier,
    /// Classify images or histograms with trained artifacts.
    Classify(ClassifyArgs),
    /// Run every stage and report accuracy on the test split.
    Evaluate,
    /// Repeated runs over the number of unseen classes per coarse class.
    SweepQ(SweepArgs),
    /// One run per forest variant.
    CompareCodebooks(CompareArgs),
    /// Write a synthetic hierarchical histogram dataset.
    Synth,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// Run directory holding the trained artifacts (default: the output
    /// directory).
    #[arg(long, value_name = "DIR")]
    pub artifacts: Option<PathBuf>,
    /// Histogram CSV (`image_id,leaf_id,count`) instead of images.
    #[arg(long, value_name = "FILE", conflicts_with = "images")]
    pub bow: Option<PathBuf>,
    /// Write predictions here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// PNG or JPEG images.
    pub images: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Comma-separated q values (default: `sweep.q_values`).
    #[arg(long, value_delimiter = ',')]
    pub q_values: Option<Vec<usize>>,
    /// Runs per q (default: `sweep.repeats`).
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long, value_delimiter = ',', default_value = "fine,coarse,jcofi,cofi")]
    pub variants: Vec<String>,
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(e.to_string())
}

/// Set `key` (a dotted path) in `root`. The value is read as a TOML value,
/// falling back to a bare string.
fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_error(format!("expected KEY=VALUE, got `{assignment}`")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut table = root;
    for part in path {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| config_error(format!("`{part}` in `{key}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// The configuration after the file, `--set` overrides and flags.
pub fn build_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io(io) => config_error(format!("{}: {io}", p.display())),
            e => e,
        })?,
        None => ExperimentConfig::default(),
    };
    if !g.set.is_empty() {
        let mut table = toml::Table::try_from(&cfg).map_err(config_error)?;
        for s in &g.set {
            apply_override(&mut table, s)?;
        }
        cfg = table.try_into().map_err(config_error)?;
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &g.out_dir {
        cfg.out_dir = dir.clone();
    }
    if g.checkpoint {
        cfg.checkpoint = true;
    }
    if g.q.is_some() {
        cfg.q = g.q;
    }
    if g.num_topics.is_some() {
        cfg.num_topics = g.num_topics;
    }
    if let Some(v) = &g.variant {
        cfg.forest.variant = v.parse()?;
    }
    Ok(cfg)
}

fn run_until(cfg: &ExperimentConfig, until: Stage) -> Result<RunState> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    Pipeline::new(cfg, &dataset)
        .with_output(&cfg.out_dir)
        .run(until)
}

fn written(out: &mut dyn Write, dir: &Path, names: &[&str]) -> Result<()> {
    for n in names {
        let p = dir.join(n);
        if p.exists() {
            writeln!(out, "wrote {}", p.display())?;
        }
    }
    Ok(())
}

fn classify(cfg: &ExperimentConfig, args: &ClassifyArgs, out: &mut dyn Write) -> Result<()> {
    let dir = args.artifacts.clone().unwrap_or_else(|| cfg.out_dir.clone());
    let a = Artifacts::load(&dir)?;
    let run_cfg = a.config.as_ref().unwrap_or(cfg);
    let em = run_cfg.em_config();
    let inputs: Vec<(String, BowHistogram)> = match &args.bow {
        Some(path) => read_bow_csv(BufReader::new(File::open(path)?), a.model.vocab_size())?,
        None => {
            if args.images.is_empty() {
                return Err(config_error("give images or --bow"));
            }
            let cb = a.codebook.as_ref().ok_or_else(|| {
                config_error("run has no codebook; classify histograms with --bow")
            })?;
            args.images
                .par_iter()
                .map(|p| {
                    let raster = data::folder::decode_image(p)?.to_raster()?;
                    let feats = round_f32(phog::extract(&raster, &run_cfg.phog)?);
                    Ok((p.display().to_string(), cb.quantize(&feats)?))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let scored = inputs
        .par_iter()
        .map(|(id, h)| Ok((id, a.classifier.classify(&a.model, h, &em)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut sink: Box<dyn Write + '_> = match &args.output {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(&mut *out),
    };
    let mut w = csv::Writer::from_writer(&mut sink);
    w.write_record(["image_id", "predicted", "score"])?;
    for (id, c) in scored {
        let (best, score) = c.ranked[0];
        w.write_record([
            id.as_str(),
            a.classifier.class_name(best),
            &format!("{score:.6}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn synth(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let DatasetSpec::Synthetic(spec) = &cfg.dataset else {
        return Err(config_error("synth needs a synthetic dataset section"));
    };
    let mut spec = spec.clone();
    spec.rng_seed = cfg.data_seed();
    if let Some(q) = cfg.q {
        spec.unseen_per_coarse = q;
    }
    if spec.feature_dim.is_some() {
        return Err(config_error("synth writes histograms; unset feature_dim"));
    }
    let (ds, truth) = data::generate_synthetic(&spec)?;
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir)?;
    let rows: Vec<(String, BowHistogram)> = (0..ds.samples().len())
        .map(|i| match ds.read(i, "synth") {
            Payload::Bow(h) => (ds.samples()[i].id.clone(), h.clone()),
            _ => unreachable!("synthetic data without descriptors is histograms"),
        })
        .collect();
    write_bow_csv(BufWriter::new(File::create(dir.join("bow.csv"))?), &rows)?;
    ds.write_split_manifest(File::create(dir.join("labels.csv"))?)?;
    fs::write(dir.join(files::TAXONOMY), ds.taxonomy().to_text())?;
    fs::write(
        dir.join("ground_truth.json"),
        serde_json::to_string_pretty(&truth)?,
    )?;
    let experiment = ExperimentConfig {
        out_dir: dir.join("run"),
        num_topics: Some(spec.num_topics()),
        q: None,
        checkpoint: false,
        dataset: DatasetSpec::Bow {
            bow: "bow.csv".into(),
            labels: "labels.csv".into(),
            taxonomy: files::TAXONOMY.into(),
            vocab_size: spec.vocab_size(),
        },
        ..cfg.clone()
    };
    fs::write(dir.join("experiment.toml"), experiment.to_toml()?)?;
    written(
        out,
        dir,
        &[
            "bow.csv",
            "labels.csv",
            files::TAXONOMY,
            "ground_truth.json",
            "experiment.toml",
        ],
    )
}

/// Execute a parsed command line, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = build_config(&cli.global)?;
    let dir = cfg.out_dir.clone();
    match &cli.command {
        Command::Extract => {
            run_until(&cfg, Stage::Extract)?;
            written(out, &dir, &[files::FEATURES, files::SPLIT])
        }
        Command::TrainCodebook => {
            run_until(&cfg, Stage::Codebook)?;
            written(out, &dir, &[files::FEATURES, files::CODEBOOK])
        }
        Command::FitPlsa => {
            run_until(&cfg, Stage::Plsa)?;
            written(out, &dir, &[files::TRAIN_BOW, files::PLSA, files::PLSA_META])
        }
        Command::BuildClassifier => {
            run_until(&cfg, Stage::Classifier)?;
            written(out, &dir, &[files::CLASSIFIER])
        }
        Command::Evaluate => {
            let state = run_until(&cfg, Stage::Evaluate)?;
            let report = state.report.expect("evaluate stage produces a report");
            write!(out, "{}", report.to_text())?;
            Ok(())
        }
        Command::Classify(args) => classify(&cfg, args, out),
        Command::SweepQ(args) => {
            let q_values = args.q_values.clone().unwrap_or(cfg.sweep.q_values.clone());
            let repeats = args.repeats.unwrap_or(cfg.sweep.repeats);
            let result = sweep_q(&cfg, &q_values, repeats, true)?;
            write!(out, "{}", result.accuracy_vs_q_csv())?;
            writeln!(out, "consistency {:.6}", result.consistency())?;
            Ok(())
        }
        Command::CompareCodebooks(args) => {
            let variants = parse_variants(&args.variants)?;
            let rows = compare_codebooks(&cfg, &variants, true)?;
            write!(out, "{}", compare_csv(&rows))?;
            Ok(())
        }
        Command::Synth => synth(&cfg, out),
    }
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn global(set: &[&str]) -> Global {
        Global {
            set: set.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn set_overrides_nested_fields() {
        let cfg = build_config(&global(&[
            "forest.num_trees=3",
            "forest.variant=fine",
            "dataset.coarse_count=2",
            "classifier.normalize_by_set_size=true",
        ]))
        .unwrap();
        assert_eq!(cfg.forest.num_trees, 3);
        assert_eq!(cfg.forest.variant, crate::forest::Variant::Fine);
        assert!(cfg.classifier.normalize_by_set_size);
        match cfg.dataset {
            DatasetSpec::Synthetic(s) => assert_eq!(s.coarse_count, 2),
            _ => panic!("expected synthetic"),
        }
    }

    #[test]
    fn flags_win_over_set() {
        let g = Global {
            seed: Some(9),
            q: Some(2),
            ..global(&["seed=4", "q=1"])
        };
        let cfg = build_config(&g).unwrap();
        assert_eq!((cfg.seed, cfg.q), (9, Some(2)));
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        for bad in ["forest.num_trees", "forest.num_trees=many", "nonsense=1"] {
            assert_eq!(build_config(&global(&[bad])).unwrap_err().exit_code(), 2, "{bad}");
        }
        let g = Global {
            variant: Some("deep".into()),
            ..Default::default()
        };
        assert_eq!(build_config(&g).unwrap_err().exit_code(), 2);
    }
}
