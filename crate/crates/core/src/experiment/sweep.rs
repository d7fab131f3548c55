//! Repeated runs over `q` and over codebook variants.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::{load_dataset, Pipeline, Stage};
use super::report::EvaluationReport;
use crate::data::PayloadKind;
use crate::error::{Error, Result};
use crate::forest::Variant;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub q: usize,
    pub repeat: usize,
    pub seed: u64,
    pub overall: f64,
    pub seen: Option<f64>,
    pub unseen: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSummary {
    pub q: usize,
    pub mean_overall: f64,
    pub min_overall: f64,
    pub max_overall: f64,
    pub mean_seen: Option<f64>,
    pub mean_unseen: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub reports: Vec<EvaluationReport>,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl SweepResult {
    /// `q,repeat,seed,overall,seen_acc,unseen_acc`; no timing columns.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("q,repeat,seed,overall,seen_acc,unseen_acc\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.6},{},{}",
                r.q,
                r.repeat,
                r.seed,
                r.overall,
                fmt_opt(r.seen),
                fmt_opt(r.unseen)
            )
            .unwrap();
        }
        out
    }

    pub fn per_q(&self) -> Vec<QSummary> {
        let mut qs: Vec<usize> = self.rows.iter().map(|r| r.q).collect();
        qs.dedup();
        qs.into_iter()
            .map(|q| {
                let rows: Vec<&SweepRow> = self.rows.iter().filter(|r| r.q == q).collect();
                let overall = rows.iter().map(|r| r.overall);
                QSummary {
                    q,
                    mean_overall: mean(overall.clone()).unwrap_or(0.0),
                    min_overall: overall.clone().fold(f64::INFINITY, f64::min),
                    max_overall: overall.fold(f64::NEG_INFINITY, f64::max),
                    mean_seen: mean(rows.iter().filter_map(|r| r.seen)),
                    mean_unseen: mean(rows.iter().filter_map(|r| r.unseen)),
                }
            })
            .collect()
    }

    /// Plot-ready accuracy against `q`.
    pub fn accuracy_vs_q_csv(&self) -> String {
        let mut out =
            String::from("q,mean_overall,min_overall,max_overall,mean_seen,mean_unseen\n");
        for s in self.per_q() {
            writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{},{}",
                s.q,
                s.mean_overall,
                s.min_overall,
                s.max_overall,
                fmt_opt(s.mean_seen),
                fmt_opt(s.mean_unseen)
            )
            .unwrap();
        }
        out
    }

    /// Spread (max - min) of the mean overall accuracy across `q`.
    pub fn consistency(&self) -> f64 {
        let means: Vec<f64> = self.per_q().iter().map(|s| s.mean_overall).collect();
        let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = means.iter().copied().fold(f64::INFINITY, f64::min);
        if means.is_empty() {
            0.0
        } else {
            max - min
        }
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.csv"), self.summary_csv())?;
        fs::write(dir.join("accuracy_vs_q.csv"), self.accuracy_vs_q_csv())?;
        fs::write(
            dir.join("consistency.txt"),
            format!("{:.6}\n", self.consistency()),
        )?;
        Ok(())
    }
}

fn run_one(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<EvaluationReport> {
    let dataset = load_dataset(cfg)?;
    let mut p = Pipeline::new(cfg, &dataset);
    if let Some(d) = dir {
        p = p.with_output(d);
    }
    let state = p.run(Stage::Evaluate)?;
    Ok(state.report.expect("evaluate stage produces a report"))
}

/// Independent runs per `(q, repeat)`. Repeat `r` uses the derived master
/// seed [`seeds::repeat_seed`], shared across `q` values. Per-run artifacts
/// go to `out_dir/q{q}_r{r}` when `write` is set.
pub fn sweep_q(
    cfg: &ExperimentConfig,
    q_values: &[usize],
    repeats: usize,
    write: bool,
) -> Result<SweepResult> {
    if repeats == 0 || q_values.is_empty() {
        return Err(Error::InvalidConfig("sweep needs q values and repeats".into()));
    }
    let jobs: Vec<(usize, usize)> = q_values
        .iter()
        .flat_map(|&q| (0..repeats).map(move |r| (q, r)))
        .collect();
    for &(q, _) in &jobs {
        cfg.with_run(cfg.seed, Some(q)).validate()?;
    }
    let reports = jobs
        .par_iter()
        .map(|&(q, r)| {
            let run = cfg.with_run(seeds::repeat_seed(cfg.seed, r), Some(q));
            let dir = write.then(|| cfg.out_dir.join(format!("q{q}_r{r}")));
            run_one(&run, dir.as_deref())
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = jobs
        .iter()
        .zip(&reports)
        .map(|(&(q, r), rep)| SweepRow {
            q,
            repeat: r,
            seed: seeds::repeat_seed(cfg.seed, r),
            overall: rep.overall_accuracy,
            seen: rep.seen_accuracy,
            unseen: rep.unseen_accuracy,
        })
        .collect();
    let result = SweepResult { rows, reports };
    if write {
        result.write_to(&cfg.out_dir)?;
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub variant: String,
    pub overall: f64,
    pub seen: Option<f64>,
    pub unseen: Option<f64>,
}

pub fn parse_variants(names: &[String]) -> Result<Vec<Variant>> {
    names.iter().map(|n| n.parse()).collect()
}

/// The same experiment once per forest variant; nothing but the variant
/// changes between runs.
pub fn compare_codebooks(
    cfg: &ExperimentConfig,
    variants: &[Variant],
    write: bool,
) -> Result<Vec<CompareRow>> {
    cfg.validate()?;
    if variants.is_empty() {
        return Err(Error::InvalidConfig("no variants to compare".into()));
    }
    let dataset = load_dataset(cfg)?;
    if dataset.payload_kind() == Some(PayloadKind::Bow) {
        return Err(Error::InvalidConfig(
            "codebook comparison needs image or descriptor data".into(),
        ));
    }
    let rows = variants
        .par_iter()
        .map(|&v| {
            let mut run = cfg.clone();
            run.forest.variant = v;
            let mut p = Pipeline::new(&run, &dataset);
            if write {
                p = p.with_output(cfg.out_dir.join(format!("variant_{}", v.name())));
            }
            let report = p.run(Stage::Evaluate)?.report.unwrap();
            Ok(CompareRow {
                variant: v.to_string(),
                overall: report.overall_accuracy,
                seen: report.seen_accuracy,
                unseen: report.unseen_accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if write {
        fs::create_dir_all(&cfg.out_dir)?;
        fs::write(cfg.out_dir.join("compare_codebooks.csv"), compare_csv(&rows))?;
    }
    Ok(rows)
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("variant,overall,seen_acc,unseen_acc\n");
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{},{}",
            r.variant,
            r.overall,
            fmt_opt(r.seen),
            fmt_opt(r.unseen)
        )
        .unwrap();
    }
    out
}
