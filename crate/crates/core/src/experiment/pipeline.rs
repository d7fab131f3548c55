//! Stage-by-stage execution with on-disk checkpoints.
//!
//! Stages, in order: `extract` (descriptors of seen-class training images),
//! `codebook` (forest training), `quantize` (training histograms), `plsa`,
//! `classifier` (signature sets and unseen-class unions) and `evaluate`
//! (every test image, seen and unseen classes alike). Only `evaluate`
//! reads test images, and no stage reads training images of unseen classes.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetSpec, ExperimentConfig, PairPolicyKind};
use super::report::{EvaluationReport, PairChoice};
use crate::data::{self, Dataset, Payload, PayloadKind, Sample, Split};
use crate::error::{Error, Result};
use crate::forest::io::{read_bow_csv, write_bow_csv};
use crate::forest::{self, BowHistogram, Codebook, LabeledDescriptor};
use crate::phog::{self, ImageFeatures};
use crate::plsa::{self, Corpus, PlsaModel, PlsaSidecar};
use crate::taxonomy::{FineClassId, LoadMode, Taxonomy};
use crate::zeroshot::{ClassifierOptions, PairPolicy, ZeroShotClassifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Extract,
    Codebook,
    Quantize,
    Plsa,
    Classifier,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Extract,
        Stage::Codebook,
        Stage::Quantize,
        Stage::Plsa,
        Stage::Classifier,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Codebook => "codebook",
            Stage::Quantize => "quantize",
            Stage::Plsa => "plsa",
            Stage::Classifier => "classifier",
            Stage::Evaluate => "evaluate",
        }
    }
}

pub mod files {
    pub const MANIFEST: &str = "checkpoint.json";
    pub const CONFIG: &str = "config.toml";
    pub const SPLIT: &str = "split.csv";
    pub const TAXONOMY: &str = "taxonomy.txt";
    pub const FEATURES: &str = "features.phog";
    pub const CODEBOOK: &str = "codebook.hicf";
    pub const TRAIN_BOW: &str = "train_bow.csv";
    pub const PLSA: &str = "plsa.bin";
    pub const PLSA_META: &str = "plsa.json";
    pub const CLASSIFIER: &str = "classifier.json";
    pub const PREDICTIONS: &str = "predictions.csv";
    pub const REPORT_JSON: &str = "report.json";
    pub const REPORT_TEXT: &str = "report.txt";
    pub const CONFUSION: &str = "confusion.csv";
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    fingerprint: String,
    completed: Stage,
}

/// Topic count: configured, or the generating count for synthetic data.
pub fn effective_topics(cfg: &ExperimentConfig) -> Result<usize> {
    match (&cfg.dataset, cfg.num_topics) {
        (_, Some(k)) => Ok(k),
        (DatasetSpec::Synthetic(spec), None) => Ok(synthetic_spec(cfg, spec).num_topics()),
        _ => Err(Error::InvalidConfig("num_topics is not set".into())),
    }
}

fn synthetic_spec(cfg: &ExperimentConfig, spec: &data::SyntheticSpec) -> data::SyntheticSpec {
    let mut spec = spec.clone();
    spec.rng_seed = cfg.data_seed();
    if let Some(q) = cfg.q {
        spec.unseen_per_coarse = q;
    }
    spec
}

/// Load or generate the dataset and apply the seen/unseen assignment.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let seed = cfg.data_seed();
    let mut ds = match &cfg.dataset {
        DatasetSpec::Synthetic(spec) => {
            return Ok(data::generate_synthetic(&synthetic_spec(cfg, spec))?.0);
        }
        DatasetSpec::Cifar100 { path, split } => data::load_cifar100(path, *split, seed)?,
        DatasetSpec::Folder {
            root,
            taxonomy,
            split,
            permissive,
        } => {
            let mode = if *permissive {
                LoadMode::Permissive
            } else {
                LoadMode::Strict
            };
            data::load_image_folder(root, taxonomy, mode, *split, seed)?
        }
        DatasetSpec::Bow {
            bow,
            labels,
            taxonomy,
            vocab_size,
        } => load_bow_dataset(bow, labels, taxonomy, *vocab_size)?,
    };
    if let Some(q) = cfg.q {
        let t = ds.taxonomy().with_unseen_per_coarse(q, cfg.unseen_seed())?;
        ds.set_taxonomy(t)?;
    }
    Ok(ds)
}

/// Histogram dataset from a BoW CSV, an `image_id,class,split` manifest and
/// a taxonomy file.
pub fn load_bow_dataset(
    bow: &Path,
    labels: &Path,
    taxonomy: &Path,
    vocab_size: usize,
) -> Result<Dataset> {
    let taxonomy = Taxonomy::load(taxonomy, LoadMode::Strict)?;
    let mut hist: BTreeMap<String, BowHistogram> =
        read_bow_csv(File::open(bow)?, vocab_size)?.into_iter().collect();
    let mut rdr = csv::Reader::from_reader(File::open(labels)?);
    let mut samples = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let err = |m: String| Error::Parse {
            line: line + 2,
            message: m,
        };
        if rec.len() != 3 {
            return Err(err("expected image_id,class,split".into()));
        }
        let class = taxonomy
            .fine_by_name(&rec[1])
            .ok_or_else(|| err(format!("unknown class `{}`", &rec[1])))?;
        let split = match &rec[2] {
            "train" => Split::Train,
            "test" => Split::Test,
            s => return Err(err(format!("bad split `{s}`"))),
        };
        let h = hist
            .remove(&rec[0])
            .unwrap_or_else(|| BowHistogram::new(vec![0; vocab_size]));
        samples.push(Sample::new(&rec[0], class, split, Payload::Bow(h)));
    }
    Dataset::new(taxonomy, samples)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub sample: usize,
    pub truth: FineClassId,
    pub predicted: FineClassId,
    pub score: f64,
}

/// Everything produced up to the requested stage.
#[derive(Debug, Default)]
pub struct RunState {
    pub codebook: Option<Codebook>,
    pub train_bow: Option<Vec<BowHistogram>>,
    pub model: Option<PlsaModel>,
    pub classifier: Option<ZeroShotClassifier>,
    pub predictions: Vec<Prediction>,
    pub report: Option<EvaluationReport>,
}

pub struct Pipeline<'a> {
    cfg: &'a ExperimentConfig,
    dataset: &'a Dataset,
    dir: Option<PathBuf>,
    timings: BTreeMap<String, f64>,
}

fn timed<T>(
    timings: &mut BTreeMap<String, f64>,
    stage: Stage,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage.name()));
    *timings.entry(stage.name().to_string()).or_default() +=
        start.elapsed().as_secs_f64() * 1000.0;
    out
}

/// PHOG values are rounded to `f32` so the descriptor dump reloads exactly.
pub(crate) fn round_f32(mut f: ImageFeatures) -> ImageFeatures {
    for d in &mut f.descriptors {
        d.values.iter_mut().for_each(|v| *v = *v as f32 as f64);
    }
    f
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a ExperimentConfig, dataset: &'a Dataset) -> Self {
        Pipeline {
            cfg,
            dataset,
            dir: None,
            timings: BTreeMap::new(),
        }
    }

    /// Write stage artifacts under `dir`; with `cfg.checkpoint` set, reuse
    /// the ones already there.
    pub fn with_output(mut self, dir: impl Into<PathBuf>) -> Self {
        self.dir = Some(dir.into());
        self
    }

    pub fn timings(&self) -> &BTreeMap<String, f64> {
        &self.timings
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    fn completed(&self) -> Option<Stage> {
        if !self.cfg.checkpoint {
            return None;
        }
        let text = fs::read_to_string(self.path(files::MANIFEST)?).ok()?;
        let m: Manifest = serde_json::from_str(&text).ok()?;
        (m.fingerprint == self.cfg.fingerprint()).then_some(m.completed)
    }

    fn mark(&self, stage: Stage) -> Result<()> {
        if let Some(p) = self.path(files::MANIFEST) {
            let m = Manifest {
                fingerprint: self.cfg.fingerprint(),
                completed: stage,
            };
            fs::write(p, serde_json::to_string_pretty(&m)?)?;
        }
        Ok(())
    }

    fn kind(&self) -> Result<PayloadKind> {
        self.dataset
            .payload_kind()
            .ok_or_else(|| Error::InvalidConfig("dataset is empty".into()))
    }

    /// Descriptors of one sample, read under `stage`.
    fn features(&self, index: usize, stage: Stage) -> Result<ImageFeatures> {
        match self.dataset.read(index, stage.name()) {
            Payload::Pixels(p) => Ok(round_f32(phog::extract(&p.to_raster()?, &self.cfg.phog)?)),
            Payload::Features(f) => Ok(f.clone()),
            Payload::Bow(_) => Err(Error::InvalidConfig(
                "histogram datasets have no descriptors".into(),
            )),
        }
    }

    fn train_indices(&self) -> Vec<usize> {
        self.dataset.seen_train_indices()
    }

    fn extract(&self, reuse: bool) -> Result<Vec<ImageFeatures>> {
        let idx = self.train_indices();
        let pixels = self.kind()? == PayloadKind::Pixels;
        if reuse && pixels {
            if let Some(p) = self.path(files::FEATURES) {
                let (_, _, feats) = phog::read_dump(BufReader::new(File::open(p)?))?;
                if feats.len() == idx.len() {
                    return Ok(feats);
                }
            }
        }
        let feats = idx
            .par_iter()
            .map(|&i| self.features(i, Stage::Extract))
            .collect::<Result<Vec<_>>>()?;
        if pixels {
            if let Some(p) = self.path(files::FEATURES) {
                phog::write_dump(BufWriter::new(File::create(p)?), &self.cfg.phog, &feats)?;
            }
        }
        Ok(feats)
    }

    fn train_codebook(&self, feats: &[ImageFeatures]) -> Result<Codebook> {
        let tax = self.dataset.taxonomy();
        let mut data = Vec::new();
        for (f, &i) in feats.iter().zip(&self.train_indices()) {
            let fine = self.dataset.samples()[i].fine;
            for d in &f.descriptors {
                data.push(LabeledDescriptor {
                    values: d.values.clone(),
                    fine,
                    coarse: tax.parent(fine),
                });
            }
        }
        let cb = forest::train(&data, &self.cfg.forest_config())?;
        if let Some(p) = self.path(files::CODEBOOK) {
            cb.write_to(BufWriter::new(File::create(p)?))?;
        }
        Ok(cb)
    }

    fn load_codebook(&self) -> Result<Codebook> {
        let p = self.path(files::CODEBOOK).expect("checkpoint directory");
        Codebook::read_from(BufReader::new(File::open(p)?))
    }

    fn quantize(
        &self,
        codebook: Option<&Codebook>,
        feats: Option<Vec<ImageFeatures>>,
    ) -> Result<Vec<BowHistogram>> {
        let idx = self.train_indices();
        let hists = match codebook {
            None => idx
                .iter()
                .map(|&i| match self.dataset.read(i, Stage::Quantize.name()) {
                    Payload::Bow(h) => Ok(h.clone()),
                    _ => Err(Error::InvalidConfig("expected histograms".into())),
                })
                .collect::<Result<Vec<_>>>()?,
            Some(cb) => {
                let feats = match feats {
                    Some(f) => f,
                    None => idx
                        .par_iter()
                        .map(|&i| self.features(i, Stage::Quantize))
                        .collect::<Result<Vec<_>>>()?,
                };
                feats
                    .par_iter()
                    .map(|f| cb.quantize(f))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        if let Some(p) = self.path(files::TRAIN_BOW) {
            let rows: Vec<(String, BowHistogram)> = idx
                .iter()
                .zip(&hists)
                .map(|(&i, h)| (self.dataset.samples()[i].id.clone(), h.clone()))
                .collect();
            write_bow_csv(BufWriter::new(File::create(p)?), &rows)?;
        }
        Ok(hists)
    }

    fn load_train_bow(&self, vocab: usize) -> Result<Vec<BowHistogram>> {
        let p = self.path(files::TRAIN_BOW).expect("checkpoint directory");
        let mut rows: BTreeMap<String, BowHistogram> =
            read_bow_csv(BufReader::new(File::open(p)?), vocab)?
                .into_iter()
                .collect();
        Ok(self
            .train_indices()
            .iter()
            .map(|&i| {
                rows.remove(&self.dataset.samples()[i].id)
                    .unwrap_or_else(|| BowHistogram::new(vec![0; vocab]))
            })
            .collect())
    }

    fn vocab_size(&self, codebook: Option<&Codebook>) -> Result<usize> {
        match (codebook, &self.cfg.dataset) {
            (Some(cb), _) => Ok(cb.vocab_size()),
            (None, DatasetSpec::Bow { vocab_size, .. }) => Ok(*vocab_size),
            (None, DatasetSpec::Synthetic(s)) => Ok(synthetic_spec(self.cfg, s).vocab_size()),
            _ => Err(Error::InvalidConfig("vocabulary size unknown".into())),
        }
    }

    fn fit_plsa(&self, hists: &[BowHistogram]) -> Result<PlsaModel> {
        let corpus = Corpus::from_histograms(hists)?;
        let em = self.cfg.em_config();
        let model = plsa::fit(&corpus, effective_topics(self.cfg)?, &em)?;
        if let (Some(p), Some(meta)) = (self.path(files::PLSA), self.path(files::PLSA_META)) {
            model.write_to(BufWriter::new(File::create(p)?))?;
            fs::write(meta, serde_json::to_string_pretty(&model.sidecar(&em))?)?;
        }
        Ok(model)
    }

    fn load_plsa(&self) -> Result<PlsaModel> {
        let p = self.path(files::PLSA).expect("checkpoint directory");
        let meta = self.path(files::PLSA_META).expect("checkpoint directory");
        let model = PlsaModel::read_from(BufReader::new(File::open(p)?))?;
        let sidecar: PlsaSidecar = serde_json::from_str(&fs::read_to_string(meta)?)?;
        model.with_sidecar(&sidecar)
    }

    fn pair_policy(&self) -> Result<PairPolicy> {
        let tax = self.dataset.taxonomy();
        Ok(match self.cfg.classifier.pair_policy {
            PairPolicyKind::Random => PairPolicy::Random {
                seed: self.cfg.pair_seed(),
            },
            PairPolicyKind::Exhaustive => PairPolicy::Exhaustive,
            PairPolicyKind::Explicit => {
                let id = |n: &str| {
                    tax.fine_by_name(n)
                        .ok_or_else(|| Error::InvalidConfig(format!("unknown class `{n}` in pairs")))
                };
                let mut map = BTreeMap::new();
                for (u, [g, h]) in &self.cfg.classifier.pairs {
                    map.insert(id(u)?, (id(g)?, id(h)?));
                }
                PairPolicy::Explicit(map)
            }
        })
    }

    fn build_classifier(&self, model: &PlsaModel) -> Result<ZeroShotClassifier> {
        let tax = self.dataset.taxonomy();
        tax.validate_zero_shot()?;
        let labels: Vec<FineClassId> = self
            .train_indices()
            .iter()
            .map(|&i| self.dataset.samples()[i].fine)
            .collect();
        let options = ClassifierOptions {
            normalize_by_set_size: self.cfg.classifier.normalize_by_set_size,
            cross_class_norm: self.cfg.classifier.cross_class_norm,
        };
        let mut clf = ZeroShotClassifier::from_seen(model, &labels, tax, options)?;
        clf.infer_unseen_sets(tax, &self.pair_policy()?)?;
        if let Some(p) = self.path(files::CLASSIFIER) {
            fs::write(p, clf.to_json()?)?;
        }
        Ok(clf)
    }

    fn load_classifier(&self) -> Result<ZeroShotClassifier> {
        let p = self.path(files::CLASSIFIER).expect("checkpoint directory");
        ZeroShotClassifier::from_json(&fs::read_to_string(p)?)
    }

    fn evaluate(
        &self,
        codebook: Option<&Codebook>,
        model: &PlsaModel,
        clf: &ZeroShotClassifier,
    ) -> Result<Vec<Prediction>> {
        let em = self.cfg.em_config();
        self.dataset
            .test_indices()
            .par_iter()
            .map(|&i| {
                let hist = match codebook {
                    Some(cb) => cb.quantize(&self.features(i, Stage::Evaluate)?)?,
                    None => match self.dataset.read(i, Stage::Evaluate.name()) {
                        Payload::Bow(h) => h.clone(),
                        _ => return Err(Error::InvalidConfig("expected histograms".into())),
                    },
                };
                let c = clf.classify(model, &hist, &em)?;
                Ok(Prediction {
                    sample: i,
                    truth: self.dataset.samples()[i].fine,
                    predicted: c.predicted(),
                    score: c.ranked[0].1,
                })
            })
            .collect()
    }

    fn write_outputs(&self, preds: &[Prediction], report: &EvaluationReport) -> Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let tax = self.dataset.taxonomy();
        let mut w = csv::Writer::from_path(dir.join(files::PREDICTIONS))?;
        w.write_record(["image_id", "true", "predicted", "score"])?;
        for p in preds {
            w.write_record([
                self.dataset.samples()[p.sample].id.as_str(),
                &tax.fine(p.truth).name,
                &tax.fine(p.predicted).name,
                &format!("{:.6}", p.score),
            ])?;
        }
        w.flush()?;
        fs::write(dir.join(files::REPORT_JSON), report.to_json())?;
        fs::write(dir.join(files::REPORT_TEXT), report.to_text())?;
        fs::write(dir.join(files::CONFUSION), report.confusion_csv())?;
        Ok(())
    }

    /// Run every stage up to and including `until`.
    pub fn run(&mut self, until: Stage) -> Result<RunState> {
        let done = self.completed();
        let finished = |s: Stage| done.is_some_and(|d| d >= s);
        if let Some(dir) = &self.dir {
            fs::create_dir_all(dir)?;
            self.dataset
                .write_split_manifest(File::create(dir.join(files::SPLIT))?)?;
            fs::write(dir.join(files::TAXONOMY), self.dataset.taxonomy().to_text())?;
            fs::write(dir.join(files::CONFIG), self.cfg.to_toml()?)?;
        }
        let mut state = RunState::default();
        let bow_data = self.kind()? == PayloadKind::Bow;
        let mut timings = std::mem::take(&mut self.timings);

        let mut feats = None;
        if !bow_data {
            if finished(Stage::Codebook) {
                state.codebook = Some(self.load_codebook()?);
            } else {
                let f = timed(&mut timings, Stage::Extract, || self.extract(finished(Stage::Extract)))?;
                self.mark(Stage::Extract)?;
                if until == Stage::Extract {
                    self.timings = timings;
                    return Ok(state);
                }
                let cb = timed(&mut timings, Stage::Codebook, || self.train_codebook(&f))?;
                self.mark(Stage::Codebook)?;
                state.codebook = Some(cb);
                feats = Some(f);
            }
        }
        if until <= Stage::Codebook {
            self.timings = timings;
            return Ok(state);
        }

        let vocab = self.vocab_size(state.codebook.as_ref())?;
        if !finished(Stage::Plsa) {
            let hists = if finished(Stage::Quantize) {
                self.load_train_bow(vocab)?
            } else {
                let h = timed(&mut timings, Stage::Quantize, || {
                    self.quantize(state.codebook.as_ref(), feats.take())
                })?;
                self.mark(Stage::Quantize)?;
                h
            };
            state.train_bow = Some(hists);
        }
        if until == Stage::Quantize {
            self.timings = timings;
            return Ok(state);
        }

        let model = if finished(Stage::Plsa) {
            self.load_plsa()?
        } else {
            let m = timed(&mut timings, Stage::Plsa, || {
                self.fit_plsa(state.train_bow.as_ref().unwrap())
            })?;
            self.mark(Stage::Plsa)?;
            m
        };
        if until == Stage::Plsa {
            state.model = Some(model);
            self.timings = timings;
            return Ok(state);
        }

        let clf = if finished(Stage::Classifier) {
            self.load_classifier()?
        } else {
            let c = timed(&mut timings, Stage::Classifier, || self.build_classifier(&model))?;
            self.mark(Stage::Classifier)?;
            c
        };
        if until == Stage::Classifier {
            state.model = Some(model);
            state.classifier = Some(clf);
            self.timings = timings;
            return Ok(state);
        }

        let preds = timed(&mut timings, Stage::Evaluate, || {
            self.evaluate(state.codebook.as_ref(), &model, &clf)
        })?;
        let tax = self.dataset.taxonomy();
        let pairs: Vec<(FineClassId, FineClassId)> =
            preds.iter().map(|p| (p.truth, p.predicted)).collect();
        let mut report = EvaluationReport::from_predictions(
            tax,
            &pairs,
            self.cfg.fingerprint(),
            model.num_topics(),
            model.vocab_size(),
        );
        report.pair_choices = clf
            .pair_choices()
            .iter()
            .map(|(u, (g, h))| PairChoice {
                unseen: tax.fine(*u).name.clone(),
                pair: (tax.fine(*g).name.clone(), tax.fine(*h).name.clone()),
            })
            .collect();
        report.timings_ms = timings.clone();
        self.write_outputs(&preds, &report)?;
        self.mark(Stage::Evaluate)?;
        self.timings = timings;
        state.model = Some(model);
        state.classifier = Some(clf);
        state.predictions = preds;
        state.report = Some(report);
        Ok(state)
    }
}

/// Load (or generate) the data and run every stage.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    let state = Pipeline::new(cfg, &dataset)
        .with_output(&cfg.out_dir)
        .run(Stage::Evaluate)?;
    Ok(state.report.expect("evaluate stage produces a report"))
}

/// Trained artifacts read back from a run directory.
pub struct Artifacts {
    /// The configuration the run was made with, when recorded.
    pub config: Option<ExperimentConfig>,
    pub codebook: Option<Codebook>,
    pub model: PlsaModel,
    pub classifier: ZeroShotClassifier,
}

impl Artifacts {
    pub fn load(dir: &Path) -> Result<Artifacts> {
        let cb = dir.join(files::CODEBOOK);
        let codebook = if cb.exists() {
            Some(Codebook::read_from(BufReader::new(File::open(cb)?))?)
        } else {
            None
        };
        let cfg_path = dir.join(files::CONFIG);
        let config = if cfg_path.exists() {
            Some(ExperimentConfig::from_toml(&fs::read_to_string(cfg_path)?)?)
        } else {
            None
        };
        let model = PlsaModel::read_from(BufReader::new(File::open(dir.join(files::PLSA))?))?;
        let classifier =
            ZeroShotClassifier::from_json(&fs::read_to_string(dir.join(files::CLASSIFIER))?)?;
        Ok(Artifacts {
            config,
            codebook,
            model,
            classifier,
        })
    }
}
