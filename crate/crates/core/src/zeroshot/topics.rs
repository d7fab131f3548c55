//! Class topic profiles and signature topic sets.

use std::fmt;

use crate::error::{Error, Result};
use crate::plsa::PlsaModel;
use crate::taxonomy::FineClassId;

/// Bitmask over `K` topics.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopicSet {
    len: usize,
    words: Vec<u64>,
}

impl TopicSet {
    pub fn empty(num_topics: usize) -> TopicSet {
        TopicSet {
            len: num_topics,
            words: vec![0; num_topics.div_ceil(64)],
        }
    }

    pub fn full(num_topics: usize) -> TopicSet {
        TopicSet::from_indices(num_topics, 0..num_topics)
    }

    /// `bits[k] != 0` marks topic `k`.
    pub fn from_bits(bits: &[u8]) -> TopicSet {
        TopicSet::from_indices(
            bits.len(),
            bits.iter().enumerate().filter(|(_, &b)| b != 0).map(|(k, _)| k),
        )
    }

    pub fn from_indices(num_topics: usize, topics: impl IntoIterator<Item = usize>) -> TopicSet {
        let mut s = TopicSet::empty(num_topics);
        for k in topics {
            s.insert(k);
        }
        s
    }

    pub fn num_topics(&self) -> usize {
        self.len
    }

    pub fn insert(&mut self, k: usize) {
        assert!(k < self.len, "topic {k} out of range for K={}", self.len);
        self.words[k / 64] |= 1 << (k % 64);
    }

    pub fn contains(&self, k: usize) -> bool {
        k < self.len && self.words[k / 64] & (1 << (k % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&k| self.contains(k))
    }

    pub fn union(&self, other: &TopicSet) -> TopicSet {
        assert_eq!(self.len, other.len, "topic sets over different K");
        TopicSet {
            len: self.len,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a | b)
                .collect(),
        }
    }

    pub fn is_subset(&self, other: &TopicSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Sum of `theta` over the member topics.
    pub fn mass(&self, theta: &[f64]) -> f64 {
        self.iter().map(|k| theta[k]).sum()
    }

    /// Hex string of the mask, topic 0 in the least significant bit.
    pub fn to_hex(&self) -> String {
        let nibbles = self.len.div_ceil(4).max(1);
        (0..nibbles)
            .rev()
            .map(|i| {
                let v = (self.words[i / 16] >> ((i % 16) * 4)) & 0xF;
                char::from_digit(v as u32, 16).unwrap()
            })
            .collect()
    }

    pub fn from_hex(num_topics: usize, hex: &str) -> Result<TopicSet> {
        let mut s = TopicSet::empty(num_topics);
        for (i, ch) in hex.chars().rev().enumerate() {
            let v = ch
                .to_digit(16)
                .ok_or_else(|| Error::Format(format!("bad hex digit `{ch}` in topic set")))?;
            for b in 0..4 {
                if v & (1 << b) != 0 {
                    let k = i * 4 + b;
                    if k >= num_topics {
                        return Err(Error::Format(format!(
                            "topic set `{hex}` exceeds K={num_topics}"
                        )));
                    }
                    s.insert(k);
                }
            }
        }
        Ok(s)
    }
}

impl fmt::Display for TopicSet {
    /// `[1 0 1]`, topic 0 first.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for k in 0..self.len {
            if k > 0 {
                f.write_str(" ")?;
            }
            f.write_str(if self.contains(k) { "1" } else { "0" })?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassTopicProfile {
    pub class: FineClassId,
    pub profile: Vec<f64>,
}

/// Mean document-topic posterior over the training documents of `class`.
/// `doc_labels[d]` is the class of training document `d`.
pub fn class_topic_profile(
    model: &PlsaModel,
    doc_labels: &[FineClassId],
    class: FineClassId,
) -> Result<ClassTopicProfile> {
    if doc_labels.len() != model.num_docs() {
        return Err(Error::DimensionMismatch {
            expected: model.num_docs(),
            found: doc_labels.len(),
        });
    }
    let k = model.num_topics();
    let mut profile = vec![0.0; k];
    let mut n = 0usize;
    for (d, _) in doc_labels.iter().enumerate().filter(|(_, &l)| l == class) {
        for (p, t) in profile.iter_mut().zip(model.doc_topic(d)) {
            *p += t;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyClass(format!("#{}", class.0)));
    }
    profile.iter_mut().for_each(|p| *p /= n as f64);
    Ok(ClassTopicProfile { class, profile })
}

/// Divide every topic column by its sum over the given classes, then
/// renormalize each profile.
pub fn cross_class_normalize(profiles: &mut [ClassTopicProfile]) {
    let Some(k) = profiles.first().map(|p| p.profile.len()) else {
        return;
    };
    let column: Vec<f64> = (0..k)
        .map(|z| profiles.iter().map(|p| p.profile[z]).sum())
        .collect();
    for p in profiles.iter_mut() {
        for (x, c) in p.profile.iter_mut().zip(&column) {
            if *c > 0.0 {
                *x /= c;
            }
        }
        let s: f64 = p.profile.iter().sum();
        if s > 0.0 {
            p.profile.iter_mut().for_each(|x| *x /= s);
        }
    }
}

/// Topics whose class mass is at least the uniform share `1/K`.
///
/// Equivalently, the subset maximizing `sum_{k in T} (profile_k - 1/K)`.
/// Never empty for a probability vector since its largest entry is at least
/// `1/K`.
pub fn signature_set(profile: &[f64]) -> TopicSet {
    let k = profile.len();
    let threshold = 1.0 / k as f64;
    let mut set = TopicSet::from_indices(
        k,
        profile
            .iter()
            .enumerate()
            .filter(|(_, &p)| p >= threshold - 1e-12)
            .map(|(i, _)| i),
    );
    if set.is_empty() && k > 0 {
        // only reachable for rows that are not normalized
        let best = profile
            .iter()
            .enumerate()
            .fold(0, |b, (i, &p)| if p > profile[b] { i } else { b });
        set.insert(best);
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_example() {
        let g = TopicSet::from_bits(&[0, 0, 1]);
        let h = TopicSet::from_bits(&[1, 0, 0]);
        assert_eq!(g.union(&h), TopicSet::from_bits(&[1, 0, 1]));
        assert_eq!(g.union(&h).to_string(), "[1 0 1]");
    }

    #[test]
    fn hex_round_trip() {
        let s = TopicSet::from_bits(&[1, 0, 1]);
        assert_eq!(s.to_hex(), "5");
        assert_eq!(TopicSet::from_hex(3, "5").unwrap(), s);
        let wide = TopicSet::from_indices(70, [0, 63, 64, 69]);
        assert_eq!(TopicSet::from_hex(70, &wide.to_hex()).unwrap(), wide);
        assert!(TopicSet::from_hex(3, "8").is_err());
        assert!(TopicSet::from_hex(3, "z").is_err());
    }

    #[test]
    fn signature_examples() {
        assert_eq!(
            signature_set(&[0.6, 0.3, 0.1]),
            TopicSet::from_bits(&[1, 0, 0])
        );
        let third = 1.0 / 3.0;
        assert_eq!(signature_set(&[third; 3]), TopicSet::full(3));
        assert_eq!(signature_set(&[1.0, 0.0]), TopicSet::from_bits(&[1, 0]));
    }

    #[test]
    fn profile_examples() {
        let m = PlsaModel::from_parts(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.2, 0.8], vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let labels = [FineClassId(0), FineClassId(1), FineClassId(1)];
        let p = class_topic_profile(&m, &labels, FineClassId(0)).unwrap();
        assert_eq!(p.profile, vec![0.2, 0.8]);
        let p = class_topic_profile(&m, &labels, FineClassId(1)).unwrap();
        assert_eq!(p.profile, vec![0.5, 0.5]);
        assert!(matches!(
            class_topic_profile(&m, &labels, FineClassId(2)),
            Err(Error::EmptyClass(_))
        ));
    }

    #[test]
    fn cross_class_normalization_keeps_rows_stochastic() {
        let mut ps = vec![
            ClassTopicProfile {
                class: FineClassId(0),
                profile: vec![0.7, 0.2, 0.1],
            },
            ClassTopicProfile {
                class: FineClassId(1),
                profile: vec![0.6, 0.1, 0.3],
            },
        ];
        cross_class_normalize(&mut ps);
        for p in &ps {
            assert!((p.profile.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // topic 1 is relatively more typical of class 0 after normalization
        assert!(ps[0].profile[1] > ps[1].profile[1]);
    }
}
