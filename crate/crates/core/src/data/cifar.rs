//! Cifar-100 binary archive.
//!
//! Each record is 3074 bytes: coarse label, fine label, then a 32x32 RGB
//! image stored channel-planar (1024 red, 1024 green, 1024 blue bytes, each
//! plane row-major). `train.bin` and `test.bin` are pooled and re-split per
//! class with a seeded draw.

use std::fs;
use std::path::Path;

use super::dataset::{Dataset, Payload, PixelImage, Sample, SplitSpec};
use crate::error::{Error, Result};
use crate::taxonomy::{FineClassId, LoadMode, Taxonomy};

pub const SIDE: usize = 32;
pub const PIXELS: usize = SIDE * SIDE * 3;
pub const RECORD_LEN: usize = PIXELS + 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CifarRecord {
    pub coarse: u8,
    pub fine: u8,
    /// Channel-planar pixel bytes as stored.
    pub planar: Vec<u8>,
}

impl CifarRecord {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(RECORD_LEN);
        out.push(self.coarse);
        out.push(self.fine);
        out.extend_from_slice(&self.planar);
        out
    }

    pub fn to_pixels(&self) -> PixelImage {
        let plane = SIDE * SIDE;
        let mut bytes = Vec::with_capacity(PIXELS);
        for i in 0..plane {
            bytes.extend([self.planar[i], self.planar[plane + i], self.planar[2 * plane + i]]);
        }
        PixelImage {
            width: SIDE,
            height: SIDE,
            channels: 3,
            bytes,
        }
    }
}

pub fn parse_records(bytes: &[u8]) -> Result<Vec<CifarRecord>> {
    if !bytes.len().is_multiple_of(RECORD_LEN) {
        return Err(Error::CorruptRecord(format!(
            "{} bytes is not a multiple of the {RECORD_LEN}-byte record",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(RECORD_LEN)
        .enumerate()
        .map(|(i, r)| {
            if r[0] >= 20 || r[1] >= 100 {
                return Err(Error::CorruptRecord(format!(
                    "record {i} has labels ({}, {}) outside 20/100",
                    r[0], r[1]
                )));
            }
            Ok(CifarRecord {
                coarse: r[0],
                fine: r[1],
                planar: r[2..].to_vec(),
            })
        })
        .collect()
}

fn label_names(dir: &Path, file: &str, count: usize, prefix: &str) -> Result<Vec<String>> {
    let path = dir.join(file);
    if !path.exists() {
        return Ok((0..count).map(|i| format!("{prefix}{i:02}")).collect());
    }
    let names: Vec<String> = fs::read_to_string(&path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if names.len() != count {
        return Err(Error::CorruptRecord(format!(
            "{} lists {} names, expected {count}",
            path.display(),
            names.len()
        )));
    }
    Ok(names)
}

/// Taxonomy from the native grouping: coarse classes in label order, each
/// followed by its fine classes in label order. Returns the taxonomy and
/// the fine-label to class-id map.
pub fn native_taxonomy(
    records: &[CifarRecord],
    coarse_names: &[String],
    fine_names: &[String],
) -> Result<(Taxonomy, Vec<Option<FineClassId>>)> {
    let mut parent: Vec<Option<u8>> = vec![None; 100];
    for r in records {
        match parent[r.fine as usize] {
            Some(c) if c != r.coarse => {
                return Err(Error::CorruptRecord(format!(
                    "fine label {} appears under coarse labels {c} and {}",
                    r.fine, r.coarse
                )))
            }
            _ => parent[r.fine as usize] = Some(r.coarse),
        }
    }
    let mut groups = Vec::new();
    let mut map = vec![None; 100];
    let mut next = 0;
    for c in 0..20u8 {
        let fines: Vec<(String, bool)> = (0..100)
            .filter(|&f| parent[f] == Some(c))
            .map(|f| {
                map[f] = Some(FineClassId(next));
                next += 1;
                (fine_names[f].clone(), true)
            })
            .collect();
        if !fines.is_empty() {
            groups.push((coarse_names[c as usize].clone(), fines));
        }
    }
    let tax = Taxonomy::from_groups(&groups)?;
    Ok((tax, map))
}

/// Load `train.bin` and/or `test.bin` from `dir` (label name files
/// `coarse_label_names.txt` and `fine_label_names.txt` are used when
/// present) and draw `split.train` training images per fine class.
pub fn load_cifar100(dir: impl AsRef<Path>, split: SplitSpec, seed: u64) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut records = Vec::new();
    let mut ids = Vec::new();
    let mut found = false;
    for name in ["train", "test"] {
        let path = dir.join(format!("{name}.bin"));
        if !path.exists() {
            continue;
        }
        found = true;
        let recs = parse_records(&fs::read(&path)?)?;
        ids.extend((0..recs.len()).map(|i| format!("{name}_{i:05}")));
        records.extend(recs);
    }
    if !found {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no train.bin or test.bin in {}", dir.display()),
        )));
    }
    let coarse_names = label_names(dir, "coarse_label_names.txt", 20, "coarse_")?;
    let fine_names = label_names(dir, "fine_label_names.txt", 100, "fine_")?;
    let (taxonomy, map) = native_taxonomy(&records, &coarse_names, &fine_names)?;
    let labels: Vec<FineClassId> = records
        .iter()
        .map(|r| map[r.fine as usize].unwrap())
        .collect();
    let splits = split.assign(&labels, seed)?;
    let samples = records
        .iter()
        .zip(ids)
        .zip(labels.iter().zip(splits))
        .filter_map(|((r, id), (&fine, s))| {
            s.map(|s| Sample::new(id, fine, s, Payload::Pixels(r.to_pixels())))
        })
        .collect();
    Dataset::new(taxonomy, samples)
}

/// Taxonomy of a Cifar-100 directory without decoding images.
pub fn load_cifar100_taxonomy(dir: impl AsRef<Path>) -> Result<Taxonomy> {
    let dir = dir.as_ref();
    let coarse_names = label_names(dir, "coarse_label_names.txt", 20, "coarse_")?;
    let fine_names = label_names(dir, "fine_label_names.txt", 100, "fine_")?;
    let mut records = Vec::new();
    for name in ["train", "test"] {
        let path = dir.join(format!("{name}.bin"));
        if path.exists() {
            records.extend(parse_records(&fs::read(path)?)?);
        }
    }
    let text = native_taxonomy(&records, &coarse_names, &fine_names)?
        .0
        .to_text();
    Taxonomy::parse(&text, LoadMode::Strict)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(coarse: u8, fine: u8, fill: u8) -> CifarRecord {
        CifarRecord {
            coarse,
            fine,
            planar: (0..PIXELS).map(|i| (i as u8).wrapping_add(fill)).collect(),
        }
    }

    #[test]
    fn encode_round_trip() {
        let recs = vec![record(3, 17, 0), record(19, 99, 5)];
        let bytes: Vec<u8> = recs.iter().flat_map(CifarRecord::encode).collect();
        assert_eq!(bytes.len(), 2 * RECORD_LEN);
        let back = parse_records(&bytes).unwrap();
        assert_eq!(back, recs);
        let again: Vec<u8> = back.iter().flat_map(CifarRecord::encode).collect();
        assert_eq!(again, bytes);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let bytes = record(0, 0, 0).encode();
        assert!(matches!(
            parse_records(&bytes[..RECORD_LEN - 1]),
            Err(Error::CorruptRecord(_))
        ));
        let mut bad = bytes.clone();
        bad[1] = 100;
        assert!(matches!(parse_records(&bad), Err(Error::CorruptRecord(_))));
    }

    #[test]
    fn planar_to_interleaved() {
        let mut r = record(0, 0, 0);
        r.planar.iter_mut().for_each(|b| *b = 0);
        r.planar[0] = 10;
        r.planar[1024] = 20;
        r.planar[2048] = 30;
        r.planar[1023] = 7;
        let p = r.to_pixels();
        assert_eq!(&p.bytes[..3], &[10, 20, 30]);
        assert_eq!(p.bytes[3 * 1023], 7);
    }

    #[test]
    fn loads_and_splits_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = Vec::new();
        // 2 coarse classes x 2 fine classes x 6 images
        for i in 0..24u8 {
            let fine = i % 4;
            bytes.extend(record(fine / 2, fine * 10, i).encode());
        }
        fs::write(dir.path().join("train.bin"), &bytes[..12 * RECORD_LEN]).unwrap();
        fs::write(dir.path().join("test.bin"), &bytes[12 * RECORD_LEN..]).unwrap();
        let split = SplitSpec::parse("2/rest").unwrap();
        let ds = load_cifar100(dir.path(), split, 4).unwrap();
        let tax = ds.taxonomy();
        assert_eq!(tax.num_coarse(), 2);
        assert_eq!(tax.num_fine(), 4);
        assert_eq!(tax.fine(FineClassId(1)).name, "fine_10");
        assert_eq!(ds.len(), 24);
        assert_eq!(ds.seen_train_indices().len(), 8);
        assert_eq!(ds.test_indices().len(), 16);
        let again = load_cifar100(dir.path(), split, 4).unwrap();
        assert_eq!(again.samples(), ds.samples());
        assert_eq!(load_cifar100_taxonomy(dir.path()).unwrap(), *tax);
    }
}
