//! Synthetic corpora with known topic structure.
//!
//! [`generate_synthetic`] builds a two-level dataset. Every coarse class owns
//! one shared topic (when `shared_weight > 0`) and each of its seen fine
//! classes owns a private topic. A seen class mixes its private topic with
//! the shared one; an unseen class mixes the shared topic with the private
//! topics of a designed seen sibling pair, so its support is exactly the
//! union of that pair's supports. Topics have disjoint blocks of
//! `words_per_topic` dominant words plus a uniform background.

use rand::Rng;
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Payload, Sample, Split};
use crate::error::{Error, Result};
use crate::forest::BowHistogram;
use crate::phog::{Descriptor, ImageFeatures};
use crate::seeds;
use crate::taxonomy::{FineClassId, Taxonomy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub coarse_count: usize,
    pub fine_per_coarse: usize,
    /// Fine classes per coarse class built as composites of a seen pair and
    /// marked unseen.
    pub unseen_per_coarse: usize,
    pub words_per_topic: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub tokens_per_doc: usize,
    /// Mass of the coarse class's shared topic in a seen class mixture;
    /// zero gives every seen class a single private topic.
    pub shared_weight: f64,
    /// Mass of the shared topic in an unseen class mixture.
    pub unseen_shared_weight: f64,
    /// Uniform word mass mixed into every topic.
    pub background: f64,
    /// Per-document spread of the shared topic's mass: a document draws
    /// `w * (1 + shared_jitter * (2u - 1))`, `u` uniform in `[0, 1)`, around
    /// the class weight `w`, and rescales the private topics to fill the
    /// rest. Zero gives every document the class mixture.
    pub shared_jitter: f64,
    /// Emit descriptor sets (one descriptor per token, drawn around a
    /// per-word center in the unit cube) instead of word histograms.
    pub feature_dim: Option<usize>,
    pub feature_noise: f64,
    pub rng_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            coarse_count: 5,
            fine_per_coarse: 3,
            unseen_per_coarse: 1,
            words_per_topic: 10,
            train_per_class: 30,
            test_per_class: 40,
            tokens_per_doc: 200,
            shared_weight: 0.3,
            unseen_shared_weight: 0.1,
            background: 0.05,
            shared_jitter: 1.0,
            feature_dim: None,
            feature_noise: 0.01,
            rng_seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.coarse_count == 0 || self.fine_per_coarse == 0 {
            return bad("need at least one coarse and one fine class".into());
        }
        if self.unseen_per_coarse > 0 && self.unseen_per_coarse + 2 > self.fine_per_coarse {
            return bad(format!(
                "{} unseen of {} fine classes leaves fewer than two seen siblings",
                self.unseen_per_coarse, self.fine_per_coarse
            ));
        }
        if self.tokens_per_doc == 0 {
            return bad("tokens_per_doc must be positive".into());
        }
        if self.words_per_topic == 0 {
            return bad("words_per_topic must be positive".into());
        }
        for (name, w) in [
            ("shared_weight", self.shared_weight),
            ("unseen_shared_weight", self.unseen_shared_weight),
            ("background", self.background),
        ] {
            if !(0.0..1.0).contains(&w) {
                return bad(format!("{name} must lie in [0, 1), got {w}"));
            }
        }
        if !(0.0..=1.0).contains(&self.shared_jitter) {
            return bad(format!("shared_jitter must lie in [0, 1], got {}", self.shared_jitter));
        }
        if self.feature_dim == Some(0) || !(self.feature_noise >= 0.0) {
            return bad("feature_dim must be positive and feature_noise non-negative".into());
        }
        Ok(())
    }

    fn seen_per_coarse(&self) -> usize {
        self.fine_per_coarse - self.unseen_per_coarse
    }

    fn has_shared(&self) -> bool {
        self.shared_weight > 0.0
    }

    pub fn num_topics(&self) -> usize {
        self.coarse_count * (self.seen_per_coarse() + usize::from(self.has_shared()))
    }

    pub fn vocab_size(&self) -> usize {
        self.num_topics() * self.words_per_topic
    }

    pub fn num_fine(&self) -> usize {
        self.coarse_count * self.fine_per_coarse
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignedPair {
    pub unseen: FineClassId,
    pub pair: (FineClassId, FineClassId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    /// `K x V`, rows stochastic.
    pub topic_word: Vec<Vec<f64>>,
    /// Per fine class, over `K`.
    pub class_mixtures: Vec<Vec<f64>>,
    pub designed_pairs: Vec<DesignedPair>,
    /// Shared topic of each coarse class.
    pub shared_topics: Vec<Option<usize>>,
    /// Private topic of each seen fine class.
    pub private_topics: Vec<Option<usize>>,
    /// Center of each word in descriptor space when features are emitted.
    pub word_centers: Option<Vec<Vec<f64>>>,
}

impl SyntheticTruth {
    pub fn num_topics(&self) -> usize {
        self.topic_word.len()
    }

    /// Topics with positive mass in the class mixture.
    pub fn support(&self, class: FineClassId) -> Vec<usize> {
        let m = &self.class_mixtures[class.0];
        (0..m.len()).filter(|&k| m[k] > 0.0).collect()
    }
}

/// Topic-word matrix with contiguous disjoint dominant blocks.
fn block_topic_word(k: usize, v: usize, background: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|z| {
            let (lo, hi) = block(z, k, v);
            (0..v)
                .map(|w| {
                    let dominant = if (lo..hi).contains(&w) {
                        (1.0 - background) / (hi - lo) as f64
                    } else {
                        0.0
                    };
                    dominant + background / v as f64
                })
                .collect()
        })
        .collect()
}

fn block(z: usize, k: usize, v: usize) -> (usize, usize) {
    (z * v / k, (z + 1) * v / k)
}

fn sample_word(rng: &mut ChaCha8Rng, z: usize, k: usize, v: usize, background: f64) -> usize {
    if rng.random::<f64>() < background {
        rng.random_range(0..v)
    } else {
        let (lo, hi) = block(z, k, v);
        rng.random_range(lo..hi)
    }
}

fn sample_categorical(rng: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let u = rng.random::<f64>() * p.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Dirichlet draw around `mean` with total concentration `c`; entries with
/// zero mean stay zero.
fn dirichlet_around(rng: &mut ChaCha8Rng, mean: &[f64], c: f64) -> Vec<f64> {
    let mut theta: Vec<f64> = mean
        .iter()
        .map(|&m| {
            if m > 0.0 {
                Gamma::new(c * m, 1.0).unwrap().sample(rng)
            } else {
                0.0
            }
        })
        .collect();
    let s: f64 = theta.iter().sum();
    if s > 0.0 {
        theta.iter_mut().for_each(|t| *t /= s);
        theta
    } else {
        mean.to_vec()
    }
}

/// Redraw the mass of shared topic `a` and rescale the other entries.
fn jitter_shared(rng: &mut ChaCha8Rng, mixture: &[f64], a: usize, jitter: f64) -> Vec<f64> {
    let w = mixture[a];
    let rest = 1.0 - w;
    if rest <= 0.0 {
        return mixture.to_vec();
    }
    let drawn = (w * (1.0 + jitter * (2.0 * rng.random::<f64>() - 1.0))).clamp(0.0, 1.0);
    let scale = (1.0 - drawn) / rest;
    let mut theta: Vec<f64> = mixture.iter().map(|&m| m * scale).collect();
    theta[a] = drawn;
    theta
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, SyntheticTruth)> {
    spec.validate()?;
    let mut rng = seeds::rng(spec.rng_seed);
    let k = spec.num_topics();
    let v = spec.vocab_size();
    let per = spec.seen_per_coarse() + usize::from(spec.has_shared());

    let mut groups = Vec::new();
    let mut unseen_flags = Vec::new();
    for c in 0..spec.coarse_count {
        let mut flags = vec![false; spec.fine_per_coarse];
        for i in sample(&mut rng, spec.fine_per_coarse, spec.unseen_per_coarse) {
            flags[i] = true;
        }
        let fines = (0..spec.fine_per_coarse)
            .map(|j| (format!("c{c}f{j}"), !flags[j]))
            .collect::<Vec<_>>();
        groups.push((format!("c{c}"), fines));
        unseen_flags.push(flags);
    }
    let taxonomy = Taxonomy::from_groups(&groups)?;

    let mut shared_topics = Vec::new();
    let mut private_topics = vec![None; spec.num_fine()];
    let mut class_mixtures = vec![vec![0.0; k]; spec.num_fine()];
    let mut designed_pairs = Vec::new();
    for c in 0..spec.coarse_count {
        let base = c * per;
        let shared = spec.has_shared().then_some(base);
        shared_topics.push(shared);
        let first_private = base + usize::from(spec.has_shared());
        let ids: Vec<FineClassId> = (0..spec.fine_per_coarse)
            .map(|j| FineClassId(c * spec.fine_per_coarse + j))
            .collect();
        let seen: Vec<FineClassId> = ids
            .iter()
            .zip(&unseen_flags[c])
            .filter(|(_, &u)| !u)
            .map(|(&f, _)| f)
            .collect();
        for (i, &g) in seen.iter().enumerate() {
            let t = first_private + i;
            private_topics[g.0] = Some(t);
            let m = &mut class_mixtures[g.0];
            match shared {
                Some(a) => {
                    m[a] = spec.shared_weight;
                    m[t] = 1.0 - spec.shared_weight;
                }
                None => m[t] = 1.0,
            }
        }
        for (&u, _) in ids.iter().zip(&unseen_flags[c]).filter(|(_, &u)| u) {
            let pick = sample(&mut rng, seen.len(), 2);
            let (g, h) = (seen[pick.index(0)], seen[pick.index(1)]);
            let (g, h) = if g < h { (g, h) } else { (h, g) };
            let s = if shared.is_some() {
                spec.unseen_shared_weight
            } else {
                0.0
            };
            let m = &mut class_mixtures[u.0];
            if let Some(a) = shared {
                m[a] = s;
            }
            m[private_topics[g.0].unwrap()] = (1.0 - s) / 2.0;
            m[private_topics[h.0].unwrap()] = (1.0 - s) / 2.0;
            designed_pairs.push(DesignedPair {
                unseen: u,
                pair: (g, h),
            });
        }
    }

    let topic_word = block_topic_word(k, v, spec.background);
    let word_centers = spec.feature_dim.map(|d| {
        (0..v)
            .map(|_| (0..d).map(|_| rng.random::<f64>()).collect::<Vec<f64>>())
            .collect::<Vec<_>>()
    });
    let noise = Normal::new(0.0, spec.feature_noise).unwrap();

    let mut samples = Vec::new();
    for class in taxonomy.fine_ids() {
        let name = taxonomy.fine(class).name.clone();
        let mixture = &class_mixtures[class.0];
        for (split, count) in [
            (Split::Train, spec.train_per_class),
            (Split::Test, spec.test_per_class),
        ] {
            for n in 0..count {
                let theta = match shared_topics[taxonomy.parent(class).0] {
                    Some(a) if spec.shared_jitter > 0.0 => {
                        jitter_shared(&mut rng, mixture, a, spec.shared_jitter)
                    }
                    _ => mixture.clone(),
                };
                let words: Vec<usize> = (0..spec.tokens_per_doc)
                    .map(|_| {
                        let z = sample_categorical(&mut rng, &theta);
                        sample_word(&mut rng, z, k, v, spec.background)
                    })
                    .collect();
                let payload = match &word_centers {
                    None => {
                        let mut counts = vec![0u32; v];
                        words.iter().for_each(|&w| counts[w] += 1);
                        Payload::Bow(BowHistogram::new(counts))
                    }
                    Some(centers) => Payload::Features(ImageFeatures {
                        descriptors: words
                            .iter()
                            .enumerate()
                            .map(|(i, &w)| Descriptor {
                                values: centers[w]
                                    .iter()
                                    .map(|&x| x + noise.sample(&mut rng))
                                    .collect(),
                                level: 0,
                                cell_index: i,
                            })
                            .collect(),
                    }),
                };
                let id = format!("{name}_{}_{n:04}", split.as_str());
                samples.push(Sample::new(id, class, split, payload));
            }
        }
    }

    let truth = SyntheticTruth {
        topic_word,
        class_mixtures,
        designed_pairs,
        shared_topics,
        private_topics,
        word_centers,
    };
    Ok((Dataset::new(taxonomy, samples)?, truth))
}

/// Flat topic corpus: every document draws its own mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicCorpusSpec {
    pub num_topics: usize,
    pub vocab_size: usize,
    pub num_docs: usize,
    pub tokens_per_doc: usize,
    /// Symmetric Dirichlet parameter of the document mixtures.
    pub doc_alpha: f64,
    pub background: f64,
    pub rng_seed: u64,
}

impl Default for TopicCorpusSpec {
    fn default() -> Self {
        TopicCorpusSpec {
            num_topics: 3,
            vocab_size: 50,
            num_docs: 300,
            tokens_per_doc: 200,
            doc_alpha: 0.5,
            background: 0.1,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicCorpus {
    pub docs: Vec<BowHistogram>,
    pub topic_word: Vec<Vec<f64>>,
    pub doc_topic: Vec<Vec<f64>>,
}

pub fn generate_topic_corpus(spec: &TopicCorpusSpec) -> Result<TopicCorpus> {
    let (k, v) = (spec.num_topics, spec.vocab_size);
    if k == 0 || v < k {
        return Err(Error::InvalidSpec(format!("need 1 <= K <= V, got K={k}, V={v}")));
    }
    if spec.tokens_per_doc == 0 || spec.num_docs == 0 {
        return Err(Error::InvalidSpec("need documents with tokens".into()));
    }
    if !(spec.doc_alpha > 0.0) || !(0.0..1.0).contains(&spec.background) {
        return Err(Error::InvalidSpec("bad doc_alpha or background".into()));
    }
    let mut rng = seeds::rng(spec.rng_seed);
    let topic_word = block_topic_word(k, v, spec.background);
    let uniform = vec![1.0 / k as f64; k];
    let mut docs = Vec::with_capacity(spec.num_docs);
    let mut doc_topic = Vec::with_capacity(spec.num_docs);
    for _ in 0..spec.num_docs {
        let theta = dirichlet_around(&mut rng, &uniform, spec.doc_alpha * k as f64);
        let mut counts = vec![0u32; v];
        for _ in 0..spec.tokens_per_doc {
            let z = sample_categorical(&mut rng, &theta);
            counts[sample_word(&mut rng, z, k, v, spec.background)] += 1;
        }
        docs.push(BowHistogram::new(counts));
        doc_topic.push(theta);
    }
    Ok(TopicCorpus {
        docs,
        topic_word,
        doc_topic,
    })
}
