use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::taxonomy::{FineClassId, Taxonomy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub name: String,
    pub coarse: String,
    pub seen: bool,
    pub total: u64,
    pub correct: u64,
    /// `None` when the class has no test images.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairChoice {
    pub unseen: String,
    pub pair: (String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config_fingerprint: String,
    pub num_topics: usize,
    pub vocab_size: usize,
    pub num_test: u64,
    pub overall_accuracy: f64,
    /// Accuracy over test images of seen classes; `None` when there are none.
    pub seen_accuracy: Option<f64>,
    pub unseen_accuracy: Option<f64>,
    pub per_class: Vec<ClassResult>,
    /// `confusion[true][predicted]`, fine classes in taxonomy order.
    pub confusion: Vec<Vec<u64>>,
    pub pair_choices: Vec<PairChoice>,
    /// Wall-clock milliseconds per stage.
    pub timings_ms: BTreeMap<String, f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl EvaluationReport {
    /// Tally `(true class, predicted class)` pairs.
    pub fn from_predictions(
        taxonomy: &Taxonomy,
        predictions: &[(FineClassId, FineClassId)],
        config_fingerprint: String,
        num_topics: usize,
        vocab_size: usize,
    ) -> EvaluationReport {
        let n = taxonomy.num_fine();
        let mut confusion = vec![vec![0u64; n]; n];
        for &(t, p) in predictions {
            confusion[t.0][p.0] += 1;
        }
        let per_class: Vec<ClassResult> = taxonomy
            .fine_ids()
            .map(|c| {
                let total: u64 = confusion[c.0].iter().sum();
                let correct = confusion[c.0][c.0];
                let f = taxonomy.fine(c);
                ClassResult {
                    name: f.name.clone(),
                    coarse: taxonomy.coarse_classes()[f.parent.0].name.clone(),
                    seen: f.seen,
                    total,
                    correct,
                    accuracy: ratio(correct, total),
                }
            })
            .collect();
        let tally = |seen: Option<bool>| {
            per_class
                .iter()
                .filter(|c| seen.is_none_or(|s| c.seen == s))
                .fold((0, 0), |(k, t), c| (k + c.correct, t + c.total))
        };
        let (correct, total) = tally(None);
        let (seen_correct, seen_total) = tally(Some(true));
        let (unseen_correct, unseen_total) = tally(Some(false));
        EvaluationReport {
            config_fingerprint,
            num_topics,
            vocab_size,
            num_test: total,
            overall_accuracy: ratio(correct, total).unwrap_or(0.0),
            seen_accuracy: ratio(seen_correct, seen_total),
            unseen_accuracy: ratio(unseen_correct, unseen_total),
            per_class,
            confusion,
            pair_choices: Vec::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn num_unseen_classes(&self) -> usize {
        self.per_class.iter().filter(|c| !c.seen).count()
    }

    /// Copy with the timings cleared, for run-to-run comparison.
    pub fn without_timings(&self) -> EvaluationReport {
        EvaluationReport {
            timings_ms: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let pct = |a: Option<f64>| match a {
            Some(a) => format!("{:6.2}%", 100.0 * a),
            None => "    n/a".to_string(),
        };
        let mut out = String::new();
        writeln!(out, "config     {}", self.config_fingerprint).unwrap();
        writeln!(out, "topics     {}", self.num_topics).unwrap();
        writeln!(out, "vocabulary {}", self.vocab_size).unwrap();
        writeln!(out, "test       {}", self.num_test).unwrap();
        writeln!(out, "overall    {}", pct(Some(self.overall_accuracy))).unwrap();
        writeln!(out, "seen       {}", pct(self.seen_accuracy)).unwrap();
        writeln!(out, "unseen     {}", pct(self.unseen_accuracy)).unwrap();
        let width = self
            .per_class
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(5)
            .max(5);
        writeln!(out).unwrap();
        writeln!(out, "{:<width$}  {:<6}  {:>7}  {:>7}  accuracy", "class", "status", "correct", "total").unwrap();
        for c in &self.per_class {
            let status = if c.seen { "seen" } else { "unseen" };
            writeln!(
                out,
                "{:<width$}  {:<6}  {:>7}  {:>7}  {}",
                c.name,
                status,
                c.correct,
                c.total,
                pct(c.accuracy)
            )
            .unwrap();
        }
        if !self.pair_choices.is_empty() {
            writeln!(out).unwrap();
            for p in &self.pair_choices {
                writeln!(out, "{} <- {} + {}", p.unseen, p.pair.0, p.pair.1).unwrap();
            }
        }
        if !self.timings_ms.is_empty() {
            writeln!(out).unwrap();
            for (stage, ms) in &self.timings_ms {
                writeln!(out, "{stage:<12} {ms:>10.1} ms").unwrap();
            }
        }
        out
    }

    /// Confusion matrix as CSV, true classes in rows.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in &self.per_class {
            write!(out, ",{}", c.name).unwrap();
        }
        out.push('\n');
        for (c, row) in self.per_class.iter().zip(&self.confusion) {
            out.push_str(&c.name);
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_identities() {
        let tax =
            Taxonomy::from_groups(&[("c", vec![("a", true), ("b", true), ("u", false)])]).unwrap();
        let f = FineClassId;
        let preds = [
            (f(0), f(0)),
            (f(0), f(1)),
            (f(1), f(1)),
            (f(2), f(2)),
            (f(2), f(0)),
            (f(2), f(2)),
        ];
        let r = EvaluationReport::from_predictions(&tax, &preds, "x".into(), 3, 9);
        for (c, row) in r.per_class.iter().zip(&r.confusion) {
            assert_eq!(row.iter().sum::<u64>(), c.total);
        }
        let trace: u64 = (0..3).map(|i| r.confusion[i][i]).sum();
        assert_eq!(r.overall_accuracy, trace as f64 / 6.0);
        assert_eq!(r.seen_accuracy, Some(2.0 / 3.0));
        assert_eq!(r.unseen_accuracy, Some(2.0 / 3.0));
        assert_eq!(r.num_unseen_classes(), 1);
        assert!(r.to_text().contains("unseen"));
        assert!(r.confusion_csv().starts_with("true\\predicted,a,b,u\na,1,1,0\n"));
    }

    #[test]
    fn unseen_accuracy_is_na_without_unseen_classes() {
        let tax = Taxonomy::from_groups(&[("c", vec![("a", true), ("b", true)])]).unwrap();
        let r = EvaluationReport::from_predictions(
            &tax,
            &[(FineClassId(0), FineClassId(0))],
            "x".into(),
            2,
            4,
        );
        assert_eq!(r.unseen_accuracy, None);
        assert!(r.to_text().contains("unseen         n/a"));
        assert!(r.to_json().contains("\"unseen_accuracy\": null"));
    }
}
