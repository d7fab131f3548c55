//! Probabilistic latent semantic analysis fitted by expectation maximization.
//!
//! The model is kept in its asymmetric form `p(w|d) = sum_z p(w|z) p(z|d)`.
//! Topic-word and document-topic distributions are stored as dense row-major
//! matrices; documents are stored sparsely.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::BowHistogram;
use crate::seeds;

/// Added inside the logarithm during fold-in so words with zero probability
/// under every topic do not produce `-inf`.
const FOLD_IN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    docs: Vec<Vec<(u32, f64)>>,
    vocab_size: usize,
}

impl Corpus {
    pub fn from_histograms<'a, I>(histograms: I) -> Result<Corpus>
    where
        I: IntoIterator<Item = &'a BowHistogram>,
    {
        let mut docs = Vec::new();
        let mut vocab_size = None;
        for h in histograms {
            match vocab_size {
                None => vocab_size = Some(h.len()),
                Some(v) if v != h.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: v,
                        found: h.len(),
                    })
                }
                _ => {}
            }
            docs.push(sparse(h)?);
        }
        let vocab_size = vocab_size.ok_or(Error::EmptyCorpus)?;
        if vocab_size == 0 {
            return Err(Error::EmptyCorpus);
        }
        Ok(Corpus { docs, vocab_size })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Non-zero `(word, count)` entries of document `d`.
    pub fn doc(&self, d: usize) -> &[(u32, f64)] {
        &self.docs[d]
    }
}

fn sparse(h: &BowHistogram) -> Result<Vec<(u32, f64)>> {
    let doc: Vec<(u32, f64)> = h
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(w, &c)| (w as u32, c as f64))
        .collect();
    if doc.is_empty() {
        return Err(Error::EmptyDocument);
    }
    Ok(doc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub rng_seed: u64,
    pub fold_in_iters: usize,
    /// Independent EM runs from different random starts; the one with the
    /// highest final log-likelihood is kept.
    pub restarts: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iters: 500,
            rel_tol: 1e-6,
            rng_seed: 0,
            fold_in_iters: 50,
            restarts: 1,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidConfig("rel_tol must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlsaModel {
    k: usize,
    v: usize,
    topic_word: Vec<f64>,
    doc_topic: Vec<f64>,
    loglik_trace: Vec<f64>,
    iterations: usize,
}

impl PlsaModel {
    /// Build a model from explicit rows; every row must be a probability
    /// vector.
    pub fn from_parts(topic_word: Vec<Vec<f64>>, doc_topic: Vec<Vec<f64>>) -> Result<PlsaModel> {
        let k = topic_word.len();
        let v = topic_word.first().map_or(0, Vec::len);
        if k == 0 || v == 0 {
            return Err(Error::InvalidK { k, vocab: v });
        }
        let rows = topic_word
            .iter()
            .map(|r| (r, v))
            .chain(doc_topic.iter().map(|r| (r, k)));
        for (row, expected) in rows {
            if row.len() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    found: row.len(),
                });
            }
            let s: f64 = row.iter().sum();
            if row.iter().any(|&x| !(x >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::Numeric("row is not a probability vector".into()));
            }
        }
        Ok(PlsaModel {
            k,
            v,
            topic_word: topic_word.concat(),
            doc_topic: doc_topic.concat(),
            loglik_trace: Vec::new(),
            iterations: 0,
        })
    }

    pub fn num_topics(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.v
    }

    pub fn num_docs(&self) -> usize {
        self.doc_topic.len() / self.k
    }

    /// `p(w|z)` for topic `z`.
    pub fn topic_word(&self, z: usize) -> &[f64] {
        &self.topic_word[z * self.v..(z + 1) * self.v]
    }

    /// `p(z|d)` for training document `d`.
    pub fn doc_topic(&self, d: usize) -> &[f64] {
        &self.doc_topic[d * self.k..(d + 1) * self.k]
    }

    /// Log-likelihood (nats) before each EM update, followed by the value at
    /// the returned parameters.
    pub fn loglik_trace(&self) -> &[f64] {
        &self.loglik_trace
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// `p(z) = sum_d p(z|d) / N`.
    pub fn topic_prior(&self) -> Vec<f64> {
        let n = self.num_docs().max(1) as f64;
        (0..self.k)
            .map(|z| (0..self.num_docs()).map(|d| self.doc_topic(d)[z]).sum::<f64>() / n)
            .collect()
    }

    /// `sum_{d,w} n(d,w) log p(w|d)` in nats.
    pub fn log_likelihood(&self, corpus: &Corpus) -> Result<f64> {
        self.check_corpus(corpus)?;
        let mut ll = 0.0;
        for d in 0..corpus.len() {
            let theta = self.doc_topic(d);
            for &(w, c) in corpus.doc(d) {
                ll += c * self.word_prob(theta, w as usize).ln();
            }
        }
        Ok(ll)
    }

    fn check_corpus(&self, corpus: &Corpus) -> Result<()> {
        if corpus.vocab_size() != self.v {
            return Err(Error::DimensionMismatch {
                expected: self.v,
                found: corpus.vocab_size(),
            });
        }
        if corpus.len() != self.num_docs() {
            return Err(Error::DimensionMismatch {
                expected: self.num_docs(),
                found: corpus.len(),
            });
        }
        Ok(())
    }

    #[inline]
    fn word_prob(&self, theta: &[f64], w: usize) -> f64 {
        theta
            .iter()
            .enumerate()
            .map(|(z, t)| t * self.topic_word[z * self.v + w])
            .sum()
    }

    /// Topic mixture of a held-out document with `p(w|z)` frozen: EM on
    /// `p(z|d)` alone, from the uniform mixture.
    pub fn fold_in(&self, histogram: &BowHistogram, cfg: &EmConfig) -> Result<Vec<f64>> {
        if histogram.len() != self.v {
            return Err(Error::DimensionMismatch {
                expected: self.v,
                found: histogram.len(),
            });
        }
        let doc = sparse(histogram)?;
        let mut theta = vec![1.0 / self.k as f64; self.k];
        if self.k == 1 {
            return Ok(theta);
        }
        let mut acc = vec![0.0; self.k];
        let mut prev_ll: Option<f64> = None;
        for _ in 0..cfg.fold_in_iters {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut ll = 0.0;
            for &(w, c) in &doc {
                let w = w as usize;
                let s = self.word_prob(&theta, w);
                ll += c * (s + FOLD_IN_EPS).ln();
                if s > 0.0 {
                    for z in 0..self.k {
                        acc[z] += c * theta[z] * self.topic_word[z * self.v + w] / s;
                    }
                }
            }
            let total: f64 = acc.iter().sum();
            if !(total > 0.0) {
                // no word of the document is known to any topic
                break;
            }
            for z in 0..self.k {
                theta[z] = acc[z] / total;
            }
            if let Some(p) = prev_ll {
                if ((ll - p) / p.abs().max(f64::MIN_POSITIVE)).abs() < cfg.rel_tol {
                    break;
                }
            }
            prev_ll = Some(ll);
        }
        Ok(theta)
    }
}

/// Fit a `k`-topic model. Restart `r` starts from seed
/// `derive(rng_seed, r)` (restart 0 from `rng_seed` itself); ties in final
/// log-likelihood go to the earliest restart.
pub fn fit(corpus: &Corpus, k: usize, cfg: &EmConfig) -> Result<PlsaModel> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let v = corpus.vocab_size();
    if k == 0 || k > v {
        return Err(Error::InvalidK { k, vocab: v });
    }
    let runs = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = if r == 0 {
                cfg.rng_seed
            } else {
                seeds::derive(cfg.rng_seed, r as u64)
            };
            fit_once(corpus, k, cfg, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let final_ll = |m: &PlsaModel| *m.loglik_trace.last().unwrap();
    let mut best = None;
    for m in runs {
        if best.as_ref().is_none_or(|b| final_ll(&m) > final_ll(b)) {
            best = Some(m);
        }
    }
    Ok(best.unwrap())
}

fn fit_once(corpus: &Corpus, k: usize, cfg: &EmConfig, seed: u64) -> Result<PlsaModel> {
    let v = corpus.vocab_size();
    let n = corpus.len();
    let mut rng = seeds::rng(seed);

    // Random document mixtures; topic-word rows then follow from one M-step
    // so the initialization does not depend on vocabulary order.
    let mut doc_topic: Vec<f64> = (0..n * k).map(|_| rng.random_range(0.05..1.0)).collect();
    for row in doc_topic.chunks_exact_mut(k) {
        normalize(row);
    }
    let mut topic_word = vec![0.0; k * v];
    for d in 0..n {
        for &(w, c) in corpus.doc(d) {
            for z in 0..k {
                topic_word[z * v + w as usize] += c * doc_topic[d * k + z];
            }
        }
    }
    for row in topic_word.chunks_exact_mut(v) {
        normalize(row);
    }

    let mut model = PlsaModel {
        k,
        v,
        topic_word,
        doc_topic,
        loglik_trace: Vec::new(),
        iterations: 0,
    };
    let mut next_tw = vec![0.0; k * v];
    let mut next_dt = vec![0.0; n * k];
    let mut post = vec![0.0; k];
    for _ in 0..cfg.max_iters {
        next_tw.iter_mut().for_each(|x| *x = 0.0);
        next_dt.iter_mut().for_each(|x| *x = 0.0);
        let mut ll = 0.0;
        for d in 0..n {
            let theta = &model.doc_topic[d * k..(d + 1) * k];
            for &(w, c) in corpus.doc(d) {
                let w = w as usize;
                let mut s = 0.0;
                for z in 0..k {
                    post[z] = theta[z] * model.topic_word[z * v + w];
                    s += post[z];
                }
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::Numeric(format!(
                        "p(w|d) vanished for document {d}, word {w}"
                    )));
                }
                ll += c * s.ln();
                for z in 0..k {
                    let r = c * post[z] / s;
                    next_tw[z * v + w] += r;
                    next_dt[d * k + z] += r;
                }
            }
        }
        model.loglik_trace.push(ll);
        for row in next_tw.chunks_exact_mut(v) {
            normalize(row);
        }
        for row in next_dt.chunks_exact_mut(k) {
            normalize(row);
        }
        std::mem::swap(&mut model.topic_word, &mut next_tw);
        std::mem::swap(&mut model.doc_topic, &mut next_dt);
        model.iterations += 1;
        if let [.., prev, last] = model.loglik_trace[..] {
            if ((last - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < cfg.rel_tol {
                break;
            }
        }
    }
    let final_ll = model.log_likelihood(corpus)?;
    model.loglik_trace.push(final_ll);
    Ok(model)
}

/// Scale a non-negative row to sum to one; an all-zero row becomes uniform.
fn normalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    if s > 0.0 {
        row.iter_mut().for_each(|x| *x /= s);
    } else {
        let u = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|x| *x = u);
    }
}

const MAGIC: &[u8; 4] = b"PLSA";
const VERSION: u32 = 1;

/// Training metadata written next to the binary model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsaSidecar {
    pub num_topics: usize,
    pub vocab_size: usize,
    pub num_docs: usize,
    pub iterations: usize,
    pub loglik_trace: Vec<f64>,
    pub config: EmConfig,
}

impl PlsaModel {
    /// `"PLSA"`, version, K, V, N (u32 LE), then `p(w|z)` (K x V) and
    /// `p(z|d)` (N x K) as row-major little-endian f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        for x in [VERSION, self.k as u32, self.v as u32, self.num_docs() as u32] {
            w.write_all(&x.to_le_bytes())?;
        }
        for x in self.topic_word.iter().chain(&self.doc_topic) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<PlsaModel> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a PLSA model".into()));
        }
        let mut word = || -> Result<usize> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b) as usize)
        };
        let version = word()?;
        if version != VERSION as usize {
            return Err(Error::Format(format!("unsupported PLSA version {version}")));
        }
        let (k, v, n) = (word()?, word()?, word()?);
        if k == 0 || v == 0 {
            return Err(Error::Format("empty PLSA model".into()));
        }
        let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; count * 8];
            r.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let topic_word = read_f64s(k * v)?;
        let doc_topic = read_f64s(n * k)?;
        Ok(PlsaModel {
            k,
            v,
            topic_word,
            doc_topic,
            loglik_trace: Vec::new(),
            iterations: 0,
        })
    }

    pub fn sidecar(&self, config: &EmConfig) -> PlsaSidecar {
        PlsaSidecar {
            num_topics: self.k,
            vocab_size: self.v,
            num_docs: self.num_docs(),
            iterations: self.iterations,
            loglik_trace: self.loglik_trace.clone(),
            config: *config,
        }
    }

    /// Restore training diagnostics from a sidecar.
    pub fn with_sidecar(mut self, sidecar: &PlsaSidecar) -> Result<PlsaModel> {
        if sidecar.num_topics != self.k || sidecar.vocab_size != self.v {
            return Err(Error::Format("sidecar does not match model".into()));
        }
        self.loglik_trace = sidecar.loglik_trace.clone();
        self.iterations = sidecar.iterations;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(rows: &[&[u32]]) -> Corpus {
        let hs: Vec<_> = rows.iter().map(|r| BowHistogram::new(r.to_vec())).collect();
        Corpus::from_histograms(&hs).unwrap()
    }

    fn max_row_dev(m: &PlsaModel) -> f64 {
        let tw = (0..m.k).map(|z| (m.topic_word(z).iter().sum::<f64>() - 1.0).abs());
        let dt = (0..m.num_docs()).map(|d| (m.doc_topic(d).iter().sum::<f64>() - 1.0).abs());
        tw.chain(dt).fold(0.0, f64::max)
    }

    #[test]
    fn single_topic_is_corpus_frequency() {
        let c = corpus(&[&[3, 1, 0, 0], &[1, 1, 2, 0], &[0, 0, 0, 4]]);
        let m = fit(&c, 1, &EmConfig::default()).unwrap();
        let freq = [4.0 / 12.0, 2.0 / 12.0, 2.0 / 12.0, 4.0 / 12.0];
        for (a, b) in m.topic_word(0).iter().zip(freq) {
            assert!((a - b).abs() < 1e-12);
        }
        for d in 0..3 {
            assert_eq!(m.doc_topic(d), &[1.0]);
        }
        // stationary after the first update
        let t = m.loglik_trace();
        assert!(t[1..].windows(2).all(|w| (w[1] - w[0]).abs() < 1e-9 * w[0].abs()));
        assert!(m.iterations() <= 3);
    }

    #[test]
    fn disjoint_vocabularies_reach_two_unigram_bound() {
        let c = corpus(&[&[5, 3, 2, 0, 0, 0], &[0, 0, 0, 1, 4, 5]]);
        let m = fit(&c, 2, &EmConfig::default()).unwrap();
        // sum_w n log(n / N) per document
        let unigram = |counts: &[f64]| {
            let n: f64 = counts.iter().sum();
            counts.iter().map(|&x| x * (x / n).ln()).sum::<f64>()
        };
        let bound = unigram(&[5.0, 3.0, 2.0]) + unigram(&[1.0, 4.0, 5.0]);
        let ll = *m.loglik_trace().last().unwrap();
        assert!(ll <= bound + 1e-9);
        assert!(bound - ll < 1e-3, "ll {ll} bound {bound}");
        for d in 0..2 {
            let row = m.doc_topic(d);
            assert!(row.iter().cloned().fold(0.0, f64::max) > 0.999);
        }
        assert!(max_row_dev(&m) < 1e-9);
    }

    #[test]
    fn log_likelihood_examples() {
        let m = PlsaModel::from_parts(vec![vec![1.0, 0.0]], vec![vec![1.0]]).unwrap();
        assert_eq!(m.log_likelihood(&corpus(&[&[2, 0]])).unwrap(), 0.0);
        let m = PlsaModel::from_parts(vec![vec![0.5, 0.5]], vec![vec![1.0]]).unwrap();
        let ll = m.log_likelihood(&corpus(&[&[1, 1]])).unwrap();
        assert!((ll - (-1.3863)).abs() < 1e-4);
        assert!((ll / std::f64::consts::LN_2 - (-2.0)).abs() < 1e-12);
        assert!(matches!(
            m.log_likelihood(&corpus(&[&[1, 1, 1]])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fitted_beats_uniform() {
        let c = corpus(&[&[4, 0, 1, 0, 2], &[0, 3, 0, 3, 0], &[1, 1, 1, 1, 6]]);
        let m = fit(&c, 2, &EmConfig::default()).unwrap();
        let uniform = PlsaModel::from_parts(
            vec![vec![0.2; 5], vec![0.2; 5]],
            vec![vec![0.5, 0.5]; 3],
        )
        .unwrap();
        assert!(m.log_likelihood(&c).unwrap() >= uniform.log_likelihood(&c).unwrap());
    }

    #[test]
    fn errors() {
        let c = corpus(&[&[1, 2]]);
        assert!(matches!(
            fit(&c, 3, &EmConfig::default()),
            Err(Error::InvalidK { .. })
        ));
        assert!(matches!(
            fit(&c, 0, &EmConfig::default()),
            Err(Error::InvalidK { .. })
        ));
        assert!(matches!(
            Corpus::from_histograms(&[BowHistogram::new(vec![0, 0])]),
            Err(Error::EmptyDocument)
        ));
        let none: [BowHistogram; 0] = [];
        assert!(matches!(
            Corpus::from_histograms(&none),
            Err(Error::EmptyCorpus)
        ));
        let m = fit(&c, 1, &EmConfig::default()).unwrap();
        assert_eq!(
            m.fold_in(&BowHistogram::new(vec![1, 1]), &EmConfig::default())
                .unwrap(),
            vec![1.0]
        );
        assert!(matches!(
            m.fold_in(&BowHistogram::new(vec![1]), &EmConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            m.fold_in(&BowHistogram::new(vec![0, 0]), &EmConfig::default()),
            Err(Error::EmptyDocument)
        ));
    }

    #[test]
    fn fold_in_prefers_dominant_topic() {
        // topic 0 puts >= 10x the mass of topic 1 on words 0 and 1
        let m = PlsaModel::from_parts(
            vec![vec![0.45, 0.45, 0.05, 0.05], vec![0.02, 0.03, 0.5, 0.45]],
            vec![vec![0.5, 0.5]],
        )
        .unwrap();
        let theta = m
            .fold_in(&BowHistogram::new(vec![7, 3, 0, 0]), &EmConfig::default())
            .unwrap();
        assert!(theta[0] >= 0.9, "{theta:?}");
    }

    #[test]
    fn model_binary_round_trip() {
        let c = corpus(&[&[4, 0, 1], &[0, 3, 2]]);
        let cfg = EmConfig::default();
        let m = fit(&c, 2, &cfg).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 16 + (2 * 3 + 2 * 2) * 8);
        let sidecar: PlsaSidecar =
            serde_json::from_str(&serde_json::to_string(&m.sidecar(&cfg)).unwrap()).unwrap();
        let back = PlsaModel::read_from(&buf[..])
            .unwrap()
            .with_sidecar(&sidecar)
            .unwrap();
        assert_eq!(back, m);
    }
}
