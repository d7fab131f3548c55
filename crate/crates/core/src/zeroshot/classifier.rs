//! Signature-topic-set classifier over seen and unseen fine classes.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::topics::{class_topic_profile, cross_class_normalize, signature_set, TopicSet};
use crate::error::{Error, Result};
use crate::forest::BowHistogram;
use crate::plsa::{EmConfig, PlsaModel};
use crate::seeds;
use crate::taxonomy::{FineClassId, Taxonomy};

/// How an unseen class picks the seen sibling pair whose topic sets it
/// inherits.
#[derive(Debug, Clone, PartialEq)]
pub enum PairPolicy {
    /// Uniform over the eligible pairs, seeded.
    Random { seed: u64 },
    /// User-chosen pair per unseen class.
    Explicit(BTreeMap<FineClassId, (FineClassId, FineClassId)>),
    /// Score an unseen class by averaging over every eligible pair.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierOptions {
    /// Divide each class's raw score by the size of its topic set.
    pub normalize_by_set_size: bool,
    /// Divide class profiles by their per-topic sum over seen classes
    /// before thresholding.
    pub cross_class_norm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroShotClassifier {
    num_topics: usize,
    class_names: Vec<String>,
    seen: Vec<bool>,
    topic_sets: Vec<Option<TopicSet>>,
    /// Every candidate union for unseen classes under the exhaustive policy.
    alternatives: BTreeMap<FineClassId, Vec<TopicSet>>,
    pair_choices: BTreeMap<FineClassId, (FineClassId, FineClassId)>,
    options: ClassifierOptions,
    seed: Option<u64>,
}

/// Per-class scores sorted best first; ties keep the lower class index first.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub ranked: Vec<(FineClassId, f64)>,
}

impl Classification {
    pub fn predicted(&self) -> FineClassId {
        self.ranked[0].0
    }

    pub fn score(&self, class: FineClassId) -> Option<f64> {
        self.ranked.iter().find(|(c, _)| *c == class).map(|&(_, s)| s)
    }
}

impl ZeroShotClassifier {
    /// Profiles and signature sets for every seen class. `doc_labels[d]` is
    /// the fine class of training document `d` of `model`.
    pub fn from_seen(
        model: &PlsaModel,
        doc_labels: &[FineClassId],
        taxonomy: &Taxonomy,
        options: ClassifierOptions,
    ) -> Result<ZeroShotClassifier> {
        let mut profiles = Vec::new();
        for class in taxonomy.seen_classes() {
            let p = class_topic_profile(model, doc_labels, class).map_err(|e| match e {
                Error::EmptyClass(_) => Error::EmptyClass(taxonomy.fine(class).name.clone()),
                e => e,
            })?;
            profiles.push(p);
        }
        if options.cross_class_norm {
            cross_class_normalize(&mut profiles);
        }
        let mut topic_sets = vec![None; taxonomy.num_fine()];
        for p in &profiles {
            topic_sets[p.class.0] = Some(signature_set(&p.profile));
        }
        Ok(ZeroShotClassifier {
            num_topics: model.num_topics(),
            class_names: taxonomy.fine_classes().iter().map(|f| f.name.clone()).collect(),
            seen: taxonomy.fine_classes().iter().map(|f| f.seen).collect(),
            topic_sets,
            alternatives: BTreeMap::new(),
            pair_choices: BTreeMap::new(),
            options,
            seed: None,
        })
    }

    /// Topic set of every unseen class as the union of a seen sibling pair's
    /// sets.
    pub fn infer_unseen_sets(&mut self, taxonomy: &Taxonomy, policy: &PairPolicy) -> Result<()> {
        let mut rng = match policy {
            PairPolicy::Random { seed } => {
                self.seed = Some(*seed);
                Some(seeds::rng(*seed))
            }
            _ => None,
        };
        for u in taxonomy.unseen_classes() {
            let set = taxonomy.unseen_pairs(u)?;
            let mut alts: Option<Vec<TopicSet>> = None;
            let union = |(g, h): (FineClassId, FineClassId)| -> Result<TopicSet> {
                let tg = self.set_of(g)?;
                let th = self.set_of(h)?;
                Ok(tg.union(th))
            };
            let pair = match policy {
                PairPolicy::Random { .. } => {
                    let rng = rng.as_mut().unwrap();
                    set.pairs[rng.random_range(0..set.pairs.len())]
                }
                PairPolicy::Explicit(map) => {
                    let &(g, h) = map
                        .get(&u)
                        .ok_or_else(|| Error::NoPairAvailable(self.class_names[u.0].clone()))?;
                    let ok = set.pairs.contains(&(g, h)) || set.pairs.contains(&(h, g));
                    if !ok {
                        return Err(Error::InvalidConfig(format!(
                            "pair ({}, {}) is not a seen sibling pair of `{}`",
                            self.class_names[g.0], self.class_names[h.0], self.class_names[u.0]
                        )));
                    }
                    (g, h)
                }
                PairPolicy::Exhaustive => {
                    alts = Some(set.pairs.iter().map(|&p| union(p)).collect::<Result<_>>()?);
                    set.pairs[0]
                }
            };
            let chosen = union(pair)?;
            if let Some(a) = alts {
                self.alternatives.insert(u, a);
            }
            self.topic_sets[u.0] = Some(chosen);
            self.pair_choices.insert(u, pair);
        }
        Ok(())
    }

    fn set_of(&self, class: FineClassId) -> Result<&TopicSet> {
        self.topic_sets[class.0]
            .as_ref()
            .ok_or_else(|| Error::IncompleteClassifier(self.class_names[class.0].clone()))
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_name(&self, class: FineClassId) -> &str {
        &self.class_names[class.0]
    }

    pub fn topic_set(&self, class: FineClassId) -> Option<&TopicSet> {
        self.topic_sets[class.0].as_ref()
    }

    pub fn pair_choice(&self, unseen: FineClassId) -> Option<(FineClassId, FineClassId)> {
        self.pair_choices.get(&unseen).copied()
    }

    pub fn pair_choices(&self) -> &BTreeMap<FineClassId, (FineClassId, FineClassId)> {
        &self.pair_choices
    }

    pub fn options(&self) -> ClassifierOptions {
        self.options
    }

    fn raw_score(&self, set: &TopicSet, theta: &[f64]) -> f64 {
        let m = set.mass(theta);
        if self.options.normalize_by_set_size {
            m / set.count() as f64
        } else {
            m
        }
    }

    /// Scores for a topic mixture `theta`: each class's raw score is the
    /// mass of `theta` on its topic set; scores are raw values normalized to
    /// sum to one over all classes.
    pub fn score_mixture(&self, theta: &[f64]) -> Result<Classification> {
        if theta.len() != self.num_topics {
            return Err(Error::DimensionMismatch {
                expected: self.num_topics,
                found: theta.len(),
            });
        }
        let mut raw = Vec::with_capacity(self.class_names.len());
        for c in 0..self.class_names.len() {
            let class = FineClassId(c);
            let r = match self.alternatives.get(&class) {
                Some(alts) => {
                    alts.iter().map(|s| self.raw_score(s, theta)).sum::<f64>() / alts.len() as f64
                }
                None => self.raw_score(self.set_of(class)?, theta),
            };
            raw.push((class, r));
        }
        let total: f64 = raw.iter().map(|(_, r)| r).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numeric(format!("class scores sum to {total}")));
        }
        let mut ranked: Vec<(FineClassId, f64)> =
            raw.into_iter().map(|(c, r)| (c, r / total)).collect();
        // stable sort keeps lower class index first on ties
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(Classification { ranked })
    }

    /// Fold the histogram into the topic model, then score.
    pub fn classify(
        &self,
        model: &PlsaModel,
        histogram: &BowHistogram,
        em: &EmConfig,
    ) -> Result<Classification> {
        if model.num_topics() != self.num_topics {
            return Err(Error::DimensionMismatch {
                expected: self.num_topics,
                found: model.num_topics(),
            });
        }
        let theta = model.fold_in(histogram, em)?;
        self.score_mixture(&theta)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassifierFile {
    num_topics: usize,
    seed: Option<u64>,
    options: ClassifierOptions,
    classes: Vec<ClassEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassEntry {
    name: String,
    seen: bool,
    topic_set: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pair: Option<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    alternatives: Vec<String>,
}

impl ZeroShotClassifier {
    pub fn to_json(&self) -> Result<String> {
        let classes = (0..self.class_names.len())
            .map(|c| {
                let id = FineClassId(c);
                ClassEntry {
                    name: self.class_names[c].clone(),
                    seen: self.seen[c],
                    topic_set: self.topic_sets[c].as_ref().map(TopicSet::to_hex),
                    pair: self.pair_choices.get(&id).map(|(g, h)| {
                        (self.class_names[g.0].clone(), self.class_names[h.0].clone())
                    }),
                    alternatives: self
                        .alternatives
                        .get(&id)
                        .map(|a| a.iter().map(TopicSet::to_hex).collect())
                        .unwrap_or_default(),
                }
            })
            .collect();
        let file = ClassifierFile {
            num_topics: self.num_topics,
            seed: self.seed,
            options: self.options,
            classes,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<ZeroShotClassifier> {
        let file: ClassifierFile = serde_json::from_str(text)?;
        let k = file.num_topics;
        let class_names: Vec<String> = file.classes.iter().map(|c| c.name.clone()).collect();
        let find = |name: &str| -> Result<FineClassId> {
            class_names
                .iter()
                .position(|n| n == name)
                .map(FineClassId)
                .ok_or_else(|| Error::Format(format!("unknown class `{name}` in pair")))
        };
        let mut topic_sets = Vec::new();
        let mut pair_choices = BTreeMap::new();
        let mut alternatives = BTreeMap::new();
        for (c, entry) in file.classes.iter().enumerate() {
            topic_sets.push(
                entry
                    .topic_set
                    .as_deref()
                    .map(|h| TopicSet::from_hex(k, h))
                    .transpose()?,
            );
            if let Some((g, h)) = &entry.pair {
                pair_choices.insert(FineClassId(c), (find(g)?, find(h)?));
            }
            if !entry.alternatives.is_empty() {
                let alts = entry
                    .alternatives
                    .iter()
                    .map(|h| TopicSet::from_hex(k, h))
                    .collect::<Result<Vec<_>>>()?;
                alternatives.insert(FineClassId(c), alts);
            }
        }
        Ok(ZeroShotClassifier {
            num_topics: k,
            seen: file.classes.iter().map(|c| c.seen).collect(),
            class_names,
            topic_sets,
            alternatives,
            pair_choices,
            options: file.options,
            seed: file.seed,
        })
    }
}
