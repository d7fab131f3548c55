use std::io::Write;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::BowHistogram;
use crate::phog::{ImageFeatures, RasterImage};
use crate::seeds;
use crate::taxonomy::{FineClassId, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// 8-bit image, interleaved channels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub bytes: Vec<u8>,
}

impl PixelImage {
    pub fn to_raster(&self) -> Result<RasterImage> {
        let data = self.bytes.iter().map(|&b| b as f64).collect();
        RasterImage::new(self.width, self.height, self.channels, data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Pixels(PixelImage),
    Features(ImageFeatures),
    Bow(BowHistogram),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Pixels,
    Features,
    Bow,
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Pixels(_) => PayloadKind::Pixels,
            Payload::Features(_) => PayloadKind::Features,
            Payload::Bow(_) => PayloadKind::Bow,
        }
    }
}

/// A labeled item. The payload is only reachable through
/// [`Dataset::read`], which records the access.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub fine: FineClassId,
    pub split: Split,
    payload: Payload,
}

impl Sample {
    pub fn new(id: impl Into<String>, fine: FineClassId, split: Split, payload: Payload) -> Self {
        Sample {
            id: id.into(),
            fine,
            split,
            payload,
        }
    }

    pub fn kind(&self) -> PayloadKind {
        self.payload.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Access {
    pub stage: String,
    pub sample: usize,
}

/// Labeled samples over a taxonomy, with a log of every payload read.
#[derive(Debug)]
pub struct Dataset {
    taxonomy: Taxonomy,
    samples: Vec<Sample>,
    log: Mutex<Vec<Access>>,
}

impl Clone for Dataset {
    /// The copy starts with an empty access log.
    fn clone(&self) -> Self {
        Dataset {
            taxonomy: self.taxonomy.clone(),
            samples: self.samples.clone(),
            log: Mutex::new(Vec::new()),
        }
    }
}

impl Dataset {
    pub fn new(taxonomy: Taxonomy, samples: Vec<Sample>) -> Result<Dataset> {
        if let Some(s) = samples.iter().find(|s| s.fine.0 >= taxonomy.num_fine()) {
            return Err(Error::InvalidConfig(format!(
                "sample `{}` has class #{} outside the taxonomy",
                s.id, s.fine.0
            )));
        }
        let kinds = samples.first().map(Sample::kind);
        if samples.iter().any(|s| Some(s.kind()) != kinds) {
            return Err(Error::InvalidConfig("dataset mixes payload kinds".into()));
        }
        Ok(Dataset {
            taxonomy,
            samples,
            log: Mutex::new(Vec::new()),
        })
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    /// Replace the taxonomy with one over the same fine classes, e.g. a
    /// different seen/unseen assignment.
    pub fn set_taxonomy(&mut self, taxonomy: Taxonomy) -> Result<()> {
        let same = taxonomy.num_fine() == self.taxonomy.num_fine()
            && taxonomy
                .fine_classes()
                .iter()
                .zip(self.taxonomy.fine_classes())
                .all(|(a, b)| a.name == b.name && a.parent == b.parent);
        if !same {
            return Err(Error::InvalidConfig(
                "replacement taxonomy has different fine classes".into(),
            ));
        }
        self.taxonomy = taxonomy;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn payload_kind(&self) -> Option<PayloadKind> {
        self.samples.first().map(Sample::kind)
    }

    /// Payload of sample `index`, logged under `stage`.
    pub fn read(&self, index: usize, stage: &str) -> &Payload {
        self.log.lock().unwrap().push(Access {
            stage: stage.to_string(),
            sample: index,
        });
        &self.samples[index].payload
    }

    /// Training samples of seen classes.
    pub fn seen_train_indices(&self) -> Vec<usize> {
        self.indices(|s| s.split == Split::Train && self.taxonomy.is_seen(s.fine))
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.indices(|s| s.split == Split::Test)
    }

    pub fn indices(&self, keep: impl Fn(&Sample) -> bool) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| keep(&self.samples[i]))
            .collect()
    }

    pub fn access_log(&self) -> Vec<Access> {
        self.log.lock().unwrap().clone()
    }

    pub fn clear_access_log(&self) {
        self.log.lock().unwrap().clear();
    }

    /// Logged reads of training samples whose class is unseen.
    pub fn leaks(&self) -> Vec<Access> {
        self.access_log()
            .into_iter()
            .filter(|a| {
                let s = &self.samples[a.sample];
                s.split == Split::Train && !self.taxonomy.is_seen(s.fine)
            })
            .collect()
    }

    /// `image_id,class,split` rows.
    pub fn write_split_manifest<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["image_id", "class", "split"])?;
        for s in &self.samples {
            out.write_record([
                s.id.as_str(),
                &self.taxonomy.fine(s.fine).name,
                s.split.as_str(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `train/test` images per class: `"30/rest"` or `"30/50"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: usize,
    /// `None` sends every remaining image to test.
    pub test: Option<usize>,
}

impl SplitSpec {
    pub fn parse(text: &str) -> Result<SplitSpec> {
        let bad = || Error::InvalidConfig(format!("bad split spec `{text}`, expected e.g. 30/rest"));
        let (train, test) = text.trim().split_once('/').ok_or_else(bad)?;
        let train = train.trim().parse().map_err(|_| bad())?;
        let test = match test.trim() {
            "rest" => None,
            n => Some(n.parse().map_err(|_| bad())?),
        };
        Ok(SplitSpec { train, test })
    }

    /// Seeded per-class assignment. `None` marks an image left out.
    pub fn assign(&self, labels: &[FineClassId], seed: u64) -> Result<Vec<Option<Split>>> {
        let mut by_class: std::collections::BTreeMap<FineClassId, Vec<usize>> = Default::default();
        for (i, &l) in labels.iter().enumerate() {
            by_class.entry(l).or_default().push(i);
        }
        let mut rng = seeds::rng(seed);
        let mut out = vec![None; labels.len()];
        for (class, mut members) in by_class {
            if members.len() < self.train {
                return Err(Error::InvalidConfig(format!(
                    "class #{} has {} images, fewer than the {} training images requested",
                    class.0,
                    members.len(),
                    self.train
                )));
            }
            members.shuffle(&mut rng);
            let test_end = match self.test {
                Some(t) => (self.train + t).min(members.len()),
                None => members.len(),
            };
            for (rank, &i) in members.iter().enumerate() {
                if rank < self.train {
                    out[i] = Some(Split::Train);
                } else if rank < test_end {
                    out[i] = Some(Split::Test);
                }
            }
        }
        Ok(out)
    }
}

impl std::fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.test {
            Some(t) => write!(f, "{}/{t}", self.train),
            None => write!(f, "{}/rest", self.train),
        }
    }
}

impl Serialize for SplitSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SplitSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        SplitSpec::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let tax = Taxonomy::from_groups(&[("c", vec![("a", true), ("b", true), ("u", false)])])
            .unwrap();
        let samples = (0..6)
            .map(|i| {
                Sample::new(
                    format!("s{i}"),
                    FineClassId(i % 3),
                    if i < 3 { Split::Train } else { Split::Test },
                    Payload::Bow(BowHistogram::new(vec![1, 0])),
                )
            })
            .collect();
        Dataset::new(tax, samples).unwrap()
    }

    #[test]
    fn access_log_flags_unseen_training_reads() {
        let ds = toy();
        assert_eq!(ds.seen_train_indices(), vec![0, 1]);
        ds.read(0, "plsa");
        ds.read(5, "classify");
        assert!(ds.leaks().is_empty());
        ds.read(2, "plsa");
        assert_eq!(
            ds.leaks(),
            vec![Access {
                stage: "plsa".into(),
                sample: 2
            }]
        );
        assert!(ds.clone().access_log().is_empty());
    }

    #[test]
    fn split_spec_parsing() {
        assert_eq!(
            SplitSpec::parse("30/rest").unwrap(),
            SplitSpec {
                train: 30,
                test: None
            }
        );
        assert_eq!(SplitSpec::parse("2/5").unwrap().test, Some(5));
        assert!(SplitSpec::parse("30").is_err());
        assert!(SplitSpec::parse("x/rest").is_err());
        assert_eq!(SplitSpec::parse("4/rest").unwrap().to_string(), "4/rest");
    }

    #[test]
    fn split_assignment_is_seeded_and_exact() {
        let labels: Vec<FineClassId> = (0..40).map(|i| FineClassId(i % 4)).collect();
        let spec = SplitSpec {
            train: 3,
            test: None,
        };
        let a = spec.assign(&labels, 9).unwrap();
        assert_eq!(a, spec.assign(&labels, 9).unwrap());
        assert_ne!(a, spec.assign(&labels, 10).unwrap());
        for c in 0..4 {
            let train = (0..40)
                .filter(|&i| labels[i].0 == c && a[i] == Some(Split::Train))
                .count();
            assert_eq!(train, 3);
        }
        assert!(a.iter().all(Option::is_some));
        let capped = SplitSpec {
            train: 3,
            test: Some(2),
        }
        .assign(&labels, 9)
        .unwrap();
        assert_eq!(capped.iter().filter(|s| s.is_none()).count(), 20);
        assert!(SplitSpec {
            train: 11,
            test: None
        }
        .assign(&labels, 0)
        .is_err());
    }

    #[test]
    fn manifest_lists_every_sample() {
        let ds = toy();
        let mut buf = Vec::new();
        ds.write_split_manifest(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("image_id,class,split\ns0,a,train\n"));
        assert_eq!(text.lines().count(), 7);
    }
}
