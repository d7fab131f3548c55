//! Two-level class hierarchy: coarse classes (parents) and fine classes,
//! each fine class flagged seen or unseen.
//!
//! Text format, one coarse class per block:
//!
//! ```text
//! # comment
//! coarse: hooves
//!   fine: antelope
//!   fine: pig [unseen]
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FineClassId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoarseClassId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoarseClass {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FineClass {
    pub name: String,
    pub parent: CoarseClassId,
    pub seen: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Reject a fine class listed under more than one coarse class.
    #[default]
    Strict,
    /// Keep the first occurrence of a repeated fine class and record the rest.
    Permissive,
}

/// A repeated fine-class entry dropped by permissive loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedDuplicate {
    pub name: String,
    pub coarse: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Taxonomy {
    coarse: Vec<CoarseClass>,
    fine: Vec<FineClass>,
    dropped: Vec<DroppedDuplicate>,
}

/// Seen sibling pairs `(g, h)` eligible to define an unseen class's topics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnseenPairSet {
    pub unseen: FineClassId,
    pub pairs: Vec<(FineClassId, FineClassId)>,
}

impl Taxonomy {
    /// Build from `(coarse name, [(fine name, seen)])` groups.
    pub fn from_groups<S: AsRef<str>>(groups: &[(S, Vec<(S, bool)>)]) -> Result<Taxonomy> {
        let mut text = String::new();
        for (coarse, fines) in groups {
            writeln!(text, "coarse: {}", coarse.as_ref()).unwrap();
            for (name, seen) in fines {
                let marker = if *seen { "" } else { " [unseen]" };
                writeln!(text, "  fine: {}{marker}", name.as_ref()).unwrap();
            }
        }
        Taxonomy::parse(&text, LoadMode::Strict)
    }

    pub fn load(path: impl AsRef<Path>, mode: LoadMode) -> Result<Taxonomy> {
        Taxonomy::parse(&std::fs::read_to_string(path)?, mode)
    }

    pub fn parse(text: &str, mode: LoadMode) -> Result<Taxonomy> {
        let mut tax = Taxonomy::default();
        let mut fine_index: HashMap<String, usize> = HashMap::new();
        let mut coarse_index: HashMap<String, usize> = HashMap::new();
        let mut current: Option<CoarseClassId> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected `coarse:` or `fine:`, found `{line}`"),
            })?;
            let value = value.trim();
            match key.trim() {
                "coarse" => {
                    if value.is_empty() {
                        return Err(Error::Parse {
                            line: line_no,
                            message: "empty coarse class name".into(),
                        });
                    }
                    if coarse_index.contains_key(value) {
                        return Err(Error::DuplicateClass {
                            name: value.to_string(),
                            line: line_no,
                        });
                    }
                    coarse_index.insert(value.to_string(), tax.coarse.len());
                    current = Some(CoarseClassId(tax.coarse.len()));
                    tax.coarse.push(CoarseClass {
                        name: value.to_string(),
                    });
                }
                "fine" => {
                    let (name, seen) = match value.strip_suffix("[unseen]") {
                        Some(n) => (n.trim(), false),
                        None => (value, true),
                    };
                    if name.is_empty() {
                        return Err(Error::Parse {
                            line: line_no,
                            message: "empty fine class name".into(),
                        });
                    }
                    let parent = current.ok_or_else(|| Error::OrphanFineClass {
                        name: name.to_string(),
                        line: line_no,
                    })?;
                    if fine_index.contains_key(name) {
                        match mode {
                            LoadMode::Strict => {
                                return Err(Error::DuplicateClass {
                                    name: name.to_string(),
                                    line: line_no,
                                })
                            }
                            LoadMode::Permissive => {
                                tax.dropped.push(DroppedDuplicate {
                                    name: name.to_string(),
                                    coarse: tax.coarse[parent.0].name.clone(),
                                    line: line_no,
                                });
                                continue;
                            }
                        }
                    }
                    fine_index.insert(name.to_string(), tax.fine.len());
                    tax.fine.push(FineClass {
                        name: name.to_string(),
                        parent,
                        seen,
                    });
                }
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        if tax.fine.is_empty() {
            return Err(Error::Parse {
                line: text.lines().count().max(1),
                message: "taxonomy declares no fine classes".into(),
            });
        }
        Ok(tax)
    }

    /// Serialize back to the text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (c, coarse) in self.coarse.iter().enumerate() {
            writeln!(out, "coarse: {}", coarse.name).unwrap();
            for f in self.children(CoarseClassId(c)) {
                let fine = &self.fine[f.0];
                let marker = if fine.seen { "" } else { " [unseen]" };
                writeln!(out, "  fine: {}{marker}", fine.name).unwrap();
            }
        }
        out
    }

    pub fn coarse_classes(&self) -> &[CoarseClass] {
        &self.coarse
    }

    pub fn fine_classes(&self) -> &[FineClass] {
        &self.fine
    }

    pub fn num_fine(&self) -> usize {
        self.fine.len()
    }

    pub fn num_coarse(&self) -> usize {
        self.coarse.len()
    }

    pub fn fine(&self, id: FineClassId) -> &FineClass {
        &self.fine[id.0]
    }

    pub fn parent(&self, id: FineClassId) -> CoarseClassId {
        self.fine[id.0].parent
    }

    pub fn is_seen(&self, id: FineClassId) -> bool {
        self.fine[id.0].seen
    }

    pub fn fine_by_name(&self, name: &str) -> Option<FineClassId> {
        self.fine.iter().position(|f| f.name == name).map(FineClassId)
    }

    pub fn coarse_by_name(&self, name: &str) -> Option<CoarseClassId> {
        self.coarse.iter().position(|c| c.name == name).map(CoarseClassId)
    }

    /// Entries dropped by permissive loading.
    pub fn dropped_duplicates(&self) -> &[DroppedDuplicate] {
        &self.dropped
    }

    pub fn fine_ids(&self) -> impl Iterator<Item = FineClassId> + '_ {
        (0..self.fine.len()).map(FineClassId)
    }

    pub fn children(&self, coarse: CoarseClassId) -> impl Iterator<Item = FineClassId> + '_ {
        self.fine
            .iter()
            .enumerate()
            .filter(move |(_, f)| f.parent == coarse)
            .map(|(i, _)| FineClassId(i))
    }

    pub fn seen_classes(&self) -> impl Iterator<Item = FineClassId> + '_ {
        self.fine_ids().filter(|&f| self.is_seen(f))
    }

    pub fn unseen_classes(&self) -> impl Iterator<Item = FineClassId> + '_ {
        self.fine_ids().filter(|&f| !self.is_seen(f))
    }

    /// All seen sibling pairs `(g, h)`, `g < h`, under `unseen`'s parent.
    pub fn unseen_pairs(&self, unseen: FineClassId) -> Result<UnseenPairSet> {
        let seen: Vec<FineClassId> = self
            .children(self.parent(unseen))
            .filter(|&f| f != unseen && self.is_seen(f))
            .collect();
        let mut pairs = Vec::new();
        for (i, &g) in seen.iter().enumerate() {
            for &h in &seen[i + 1..] {
                pairs.push((g, h));
            }
        }
        if pairs.is_empty() {
            return Err(Error::NoPairAvailable(self.fine[unseen.0].name.clone()));
        }
        Ok(UnseenPairSet { unseen, pairs })
    }

    /// Every coarse class with an unseen member has at least two seen members.
    pub fn validate_zero_shot(&self) -> Result<()> {
        for u in self.unseen_classes() {
            self.unseen_pairs(u)?;
        }
        Ok(())
    }

    pub fn with_all_seen(&self) -> Taxonomy {
        let mut t = self.clone();
        t.fine.iter_mut().for_each(|f| f.seen = true);
        t
    }

    /// Copy with exactly `q` seeded-random fine classes per coarse class
    /// marked unseen and the rest seen.
    pub fn with_unseen_per_coarse(&self, q: usize, seed: u64) -> Result<Taxonomy> {
        let mut t = self.with_all_seen();
        let mut rng = seeds::rng(seed);
        for c in 0..self.coarse.len() {
            let kids: Vec<FineClassId> = self.children(CoarseClassId(c)).collect();
            if q > 0 && q >= kids.len() {
                return Err(Error::InvalidConfig(format!(
                    "q={q} leaves no seen class in coarse class `{}` ({} members)",
                    self.coarse[c].name,
                    kids.len()
                )));
            }
            for i in sample(&mut rng, kids.len(), q) {
                t.fine[kids[i].0].seen = false;
            }
        }
        Ok(t)
    }

    /// Copy with the named classes unseen and all others seen.
    pub fn with_unseen(&self, unseen: &[FineClassId]) -> Taxonomy {
        let mut t = self.with_all_seen();
        for u in unseen {
            t.fine[u.0].seen = false;
        }
        t
    }
}
