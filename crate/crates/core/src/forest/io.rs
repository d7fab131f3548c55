//! Codebook binary format and bag-of-words CSV export.
//!
//! Codebook layout (little-endian):
//!
//! ```text
//! "HICF" | version u32 | dim u32
//! num_trees u32 | max_leaves u32 | variant u8 | jcofi_r u32 (u32::MAX = default)
//! candidates u32 | min_samples u32 | seed u64
//! tree_count u32
//! per tree: objective u8 | leaf_offset u32 | leaf_count u32 | node_count u32
//!   per node: tag u8 (0 leaf, 1 split)
//!     leaf:  leaf u32
//!     split: feature u32 | threshold f64 | left u32 | right u32 | gain f64
//! ```

use std::io::{Read, Write};

use super::{BowHistogram, Codebook, ForestConfig, Node, Objective, Tree, Variant};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HICF";
const VERSION: u32 = 1;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        Ok(self.0.write_all(&[v])?)
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.0.write_all(&v.to_le_bytes())?)
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b)?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

fn objective_tag(o: Objective) -> u8 {
    match o {
        Objective::Fine => 0,
        Objective::Coarse => 1,
        Objective::CoFi => 2,
    }
}

fn variant_tag(v: Variant) -> (u8, u32) {
    match v {
        Variant::Fine => (0, u32::MAX),
        Variant::Coarse => (1, u32::MAX),
        Variant::JCoFi { coarse_trees } => (2, coarse_trees.map_or(u32::MAX, |r| r as u32)),
        Variant::CoFi => (3, u32::MAX),
    }
}

impl Codebook {
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = Writer(w);
        w.0.write_all(MAGIC)?;
        w.u32(VERSION)?;
        w.u32(self.dim as u32)?;
        let c = &self.config;
        w.u32(c.num_trees as u32)?;
        w.u32(c.max_leaves_per_tree as u32)?;
        let (tag, r) = variant_tag(c.variant);
        w.u8(tag)?;
        w.u32(r)?;
        w.u32(c.candidate_splits_per_node as u32)?;
        w.u32(c.min_samples_per_leaf as u32)?;
        w.u64(c.rng_seed)?;
        w.u32(self.trees.len() as u32)?;
        for t in &self.trees {
            w.u8(objective_tag(t.objective))?;
            w.u32(t.leaf_offset as u32)?;
            w.u32(t.leaf_count as u32)?;
            w.u32(t.nodes.len() as u32)?;
            for n in &t.nodes {
                match *n {
                    Node::Leaf { leaf } => {
                        w.u8(0)?;
                        w.u32(leaf)?;
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        gain,
                    } => {
                        w.u8(1)?;
                        w.u32(feature)?;
                        w.f64(threshold)?;
                        w.u32(left)?;
                        w.u32(right)?;
                        w.f64(gain)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Codebook> {
        let mut r = Reader(r);
        if &r.bytes::<4>()? != MAGIC {
            return Err(Error::Format("not a HICF codebook".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported codebook version {version}")));
        }
        let dim = r.u32()? as usize;
        let num_trees = r.u32()? as usize;
        let max_leaves_per_tree = r.u32()? as usize;
        let vtag = r.u8()?;
        let ratio = r.u32()?;
        let variant = match vtag {
            0 => Variant::Fine,
            1 => Variant::Coarse,
            2 => Variant::JCoFi {
                coarse_trees: (ratio != u32::MAX).then_some(ratio as usize),
            },
            3 => Variant::CoFi,
            t => return Err(Error::Format(format!("unknown variant tag {t}"))),
        };
        let config = ForestConfig {
            num_trees,
            max_leaves_per_tree,
            variant,
            candidate_splits_per_node: r.u32()? as usize,
            min_samples_per_leaf: r.u32()? as usize,
            rng_seed: r.u64()?,
        };
        let tree_count = r.u32()? as usize;
        let mut trees = Vec::with_capacity(tree_count);
        let mut expected_offset = 0usize;
        for _ in 0..tree_count {
            let objective = match r.u8()? {
                0 => Objective::Fine,
                1 => Objective::Coarse,
                2 => Objective::CoFi,
                t => return Err(Error::Format(format!("unknown objective tag {t}"))),
            };
            let leaf_offset = r.u32()? as usize;
            let leaf_count = r.u32()? as usize;
            let node_count = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(node_count);
            for _ in 0..node_count {
                nodes.push(match r.u8()? {
                    0 => Node::Leaf { leaf: r.u32()? },
                    1 => Node::Split {
                        feature: r.u32()?,
                        threshold: r.f64()?,
                        left: r.u32()?,
                        right: r.u32()?,
                        gain: r.f64()?,
                    },
                    t => return Err(Error::Format(format!("unknown node tag {t}"))),
                });
            }
            let tree = Tree {
                nodes,
                objective,
                leaf_count,
                leaf_offset,
            };
            validate_tree(&tree, dim)?;
            if leaf_offset != expected_offset {
                return Err(Error::Format("leaf ids are not contiguous".into()));
            }
            expected_offset += leaf_count;
            trees.push(tree);
        }
        if trees.is_empty() {
            return Err(Error::Format("codebook has no trees".into()));
        }
        Ok(Codebook { trees, dim, config })
    }
}

fn validate_tree(t: &Tree, dim: usize) -> Result<()> {
    let n = t.nodes.len() as u32;
    let mut leaves = 0usize;
    for node in &t.nodes {
        match *node {
            Node::Leaf { leaf } => {
                if leaf as usize >= t.leaf_count {
                    return Err(Error::Format("leaf index out of range".into()));
                }
                leaves += 1;
            }
            Node::Split {
                feature,
                left,
                right,
                ..
            } => {
                if feature as usize >= dim || left >= n || right >= n || left == 0 || right == 0 {
                    return Err(Error::Format("split node references are invalid".into()));
                }
            }
        }
    }
    if leaves != t.leaf_count || t.nodes.is_empty() {
        return Err(Error::Format("leaf count does not match node array".into()));
    }
    Ok(())
}

/// Write `image_id,leaf_id,count` triples for the non-zero bins.
pub fn write_bow_csv<W: Write>(w: W, rows: &[(String, BowHistogram)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["image_id", "leaf_id", "count"])?;
    for (id, h) in rows {
        for (leaf, &c) in h.counts.iter().enumerate() {
            if c > 0 {
                out.write_record([id.as_str(), &leaf.to_string(), &c.to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Read histograms of length `vocab_size`, in order of first appearance.
pub fn read_bow_csv<R: Read>(r: R, vocab_size: usize) -> Result<Vec<(String, BowHistogram)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out: Vec<(String, BowHistogram)> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse_err = |what: &str| Error::Parse {
            line: line + 2,
            message: format!("bad {what}"),
        };
        if rec.len() != 3 {
            return Err(parse_err("record width"));
        }
        let id = rec[0].to_string();
        let leaf: usize = rec[1].parse().map_err(|_| parse_err("leaf id"))?;
        let count: u32 = rec[2].parse().map_err(|_| parse_err("count"))?;
        if leaf >= vocab_size {
            return Err(Error::DimensionMismatch {
                expected: vocab_size,
                found: leaf + 1,
            });
        }
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            out.push((id, BowHistogram::new(vec![0; vocab_size])));
            out.len() - 1
        });
        out[slot].1.counts[leaf] += count;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{train, LabeledDescriptor};
    use crate::taxonomy::{CoarseClassId, FineClassId};

    fn toy_codebook() -> Codebook {
        let data: Vec<_> = (0..60)
            .map(|i| LabeledDescriptor {
                values: vec![(i as f64 * 0.37).fract(), (i as f64 * 0.71).fract()],
                fine: FineClassId(i % 3),
                coarse: CoarseClassId((i % 3) / 2),
            })
            .collect();
        let cfg = ForestConfig {
            num_trees: 3,
            max_leaves_per_tree: 6,
            variant: Variant::JCoFi {
                coarse_trees: Some(1),
            },
            ..Default::default()
        };
        train(&data, &cfg).unwrap()
    }

    #[test]
    fn codebook_round_trip() {
        let cb = toy_codebook();
        let mut buf = Vec::new();
        cb.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"HICF");
        let back = Codebook::read_from(&buf[..]).unwrap();
        assert_eq!(back, cb);
    }

    #[test]
    fn corrupt_codebooks_rejected() {
        let cb = toy_codebook();
        let mut buf = Vec::new();
        cb.write_to(&mut buf).unwrap();
        assert!(Codebook::read_from(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(Codebook::read_from(&bad[..]), Err(Error::Format(_))));
    }

    #[test]
    fn bow_csv_round_trip() {
        let rows = vec![
            ("img_a".to_string(), BowHistogram::new(vec![0, 3, 0, 1])),
            ("img_b".to_string(), BowHistogram::new(vec![2, 0, 0, 0])),
        ];
        let mut buf = Vec::new();
        write_bow_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("image_id,leaf_id,count\nimg_a,1,3\n"));
        assert_eq!(read_bow_csv(&buf[..], 4).unwrap(), rows);
        assert!(matches!(
            read_bow_csv(&buf[..], 2),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
