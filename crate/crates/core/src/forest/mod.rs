//! Random-forest visual codebook.
//!
//! Trees are grown on labeled local descriptors; their leaves, numbered
//! contiguously across the forest, form the visual vocabulary. Each tree
//! optimizes one of three split objectives: information gain on fine labels,
//! on coarse labels, or the sum of both (CoFi). A J-CoFi forest mixes
//! coarse-objective and fine-objective trees.

mod gain;
pub mod io;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phog::ImageFeatures;
use crate::seeds;
use crate::taxonomy::{CoarseClassId, FineClassId};

pub use gain::{cofi_gain, entropy, information_gain};

/// Gains at or below this are treated as zero (rounding noise).
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDescriptor {
    pub values: Vec<f64>,
    pub fine: FineClassId,
    pub coarse: CoarseClassId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    Fine,
    Coarse,
    CoFi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    Fine,
    Coarse,
    /// `coarse_trees` of the forest use the coarse objective, the rest fine.
    JCoFi { coarse_trees: Option<usize> },
    CoFi,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Fine => "fine",
            Variant::Coarse => "coarse",
            Variant::JCoFi { .. } => "jcofi",
            Variant::CoFi => "cofi",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::JCoFi {
                coarse_trees: Some(r),
            } => write!(f, "jcofi:{r}"),
            v => f.write_str(v.name()),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (head, ratio) = match lower.split_once(':') {
            Some((h, r)) => (h.to_string(), Some(r.to_string())),
            None => (lower.replace('-', ""), None),
        };
        let v = match (head.as_str(), ratio) {
            ("fine", None) => Variant::Fine,
            ("coarse", None) => Variant::Coarse,
            ("cofi", None) => Variant::CoFi,
            ("jcofi", None) => Variant::JCoFi { coarse_trees: None },
            ("jcofi", Some(r)) => Variant::JCoFi {
                coarse_trees: Some(r.parse().map_err(|_| {
                    Error::InvalidConfig(format!("bad J-CoFi tree count `{r}`"))
                })?),
            },
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown codebook variant `{s}` (expected fine, coarse, jcofi[:r], cofi)"
                )))
            }
        };
        Ok(v)
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub num_trees: usize,
    pub max_leaves_per_tree: usize,
    pub variant: Variant,
    pub candidate_splits_per_node: usize,
    pub min_samples_per_leaf: usize,
    pub rng_seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            num_trees: 10,
            max_leaves_per_tree: 100,
            variant: Variant::CoFi,
            candidate_splits_per_node: 32,
            min_samples_per_leaf: 2,
            rng_seed: 0,
        }
    }
}

impl ForestConfig {
    /// 50 codewords per tree.
    pub fn cifar() -> Self {
        ForestConfig {
            max_leaves_per_tree: 50,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_trees == 0 {
            return bad("forest needs at least one tree".into());
        }
        if self.max_leaves_per_tree == 0 {
            return bad("max leaves per tree must be positive".into());
        }
        if self.candidate_splits_per_node == 0 {
            return bad("candidate splits per node must be positive".into());
        }
        if self.min_samples_per_leaf == 0 {
            return bad("min samples per leaf must be positive".into());
        }
        if let Variant::JCoFi {
            coarse_trees: Some(r),
        } = self.variant
        {
            if r > self.num_trees {
                return bad(format!(
                    "J-CoFi coarse tree count {r} exceeds {} trees",
                    self.num_trees
                ));
            }
        }
        Ok(())
    }

    /// Split objective of every tree, in tree order.
    pub fn objectives(&self) -> Vec<Objective> {
        let r = self.num_trees;
        match self.variant {
            Variant::Fine => vec![Objective::Fine; r],
            Variant::Coarse => vec![Objective::Coarse; r],
            Variant::CoFi => vec![Objective::CoFi; r],
            Variant::JCoFi { coarse_trees } => {
                let c = coarse_trees.unwrap_or(r / 2).min(r);
                (0..r)
                    .map(|i| if i < c { Objective::Coarse } else { Objective::Fine })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// `x[feature] < threshold` goes left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
        gain: f64,
    },
    Leaf { leaf: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
    pub(crate) objective: Objective,
    pub(crate) leaf_count: usize,
    pub(crate) leaf_offset: usize,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn leaf_offset(&self) -> usize {
        self.leaf_offset
    }

    /// Local leaf index reached by `x`.
    pub fn route(&self, x: &[f64]) -> usize {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { leaf } => return leaf as usize,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[feature as usize] < threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + go(nodes, left as usize).max(go(nodes, right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BowHistogram {
    pub counts: Vec<u32>,
}

impl BowHistogram {
    pub fn new(counts: Vec<u32>) -> Self {
        BowHistogram { counts }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub(crate) trees: Vec<Tree>,
    pub(crate) dim: usize,
    pub(crate) config: ForestConfig,
}

impl Codebook {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    /// Descriptor length the trees were trained on.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.trees.iter().map(|t| t.leaf_count).sum()
    }

    /// Global leaf id of `x` in every tree.
    pub fn leaf_ids(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.check_dim(x.len())?;
        Ok(self
            .trees
            .iter()
            .map(|t| t.leaf_offset + t.route(x))
            .collect())
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }

    /// Bag-of-words histogram: every descriptor is routed through every tree
    /// and the reached leaves are counted.
    pub fn quantize(&self, features: &ImageFeatures) -> Result<BowHistogram> {
        let mut counts = vec![0u32; self.vocab_size()];
        for d in &features.descriptors {
            self.check_dim(d.values.len())?;
            for t in &self.trees {
                counts[t.leaf_offset + t.route(&d.values)] += 1;
            }
        }
        Ok(BowHistogram { counts })
    }
}

/// Column-major-free flat copy of the training data.
struct TrainingSet {
    dim: usize,
    x: Vec<f64>,
    fine: Vec<u32>,
    coarse: Vec<u32>,
    n_fine: usize,
    n_coarse: usize,
}

impl TrainingSet {
    fn new(data: &[LabeledDescriptor]) -> Result<Self> {
        let first = data.first().ok_or(Error::EmptyTrainingSet)?;
        let dim = first.values.len();
        if dim == 0 {
            return Err(Error::InvalidConfig("descriptors have zero length".into()));
        }
        let mut x = Vec::with_capacity(dim * data.len());
        for d in data {
            if d.values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: d.values.len(),
                });
            }
            x.extend_from_slice(&d.values);
        }
        let fine: Vec<u32> = data.iter().map(|d| d.fine.0 as u32).collect();
        let coarse: Vec<u32> = data.iter().map(|d| d.coarse.0 as u32).collect();
        Ok(TrainingSet {
            dim,
            n_fine: fine.iter().max().map_or(0, |&m| m as usize + 1),
            n_coarse: coarse.iter().max().map_or(0, |&m| m as usize + 1),
            x,
            fine,
            coarse,
        })
    }

    fn len(&self) -> usize {
        self.fine.len()
    }

    #[inline]
    fn value(&self, i: u32, feature: usize) -> f64 {
        self.x[i as usize * self.dim + feature]
    }
}

pub fn train(data: &[LabeledDescriptor], cfg: &ForestConfig) -> Result<Codebook> {
    cfg.validate()?;
    let set = TrainingSet::new(data)?;
    let objectives = cfg.objectives();
    let mut trees: Vec<Tree> = objectives
        .par_iter()
        .enumerate()
        .map(|(i, &objective)| {
            let mut rng = seeds::rng(seeds::derive(cfg.rng_seed, i as u64));
            let sample: Vec<u32> = (0..set.len())
                .map(|_| rng.random_range(0..set.len()) as u32)
                .collect();
            TreeBuilder {
                set: &set,
                objective,
                cfg,
                rng,
            }
            .grow(sample)
        })
        .collect();
    let mut offset = 0;
    for t in &mut trees {
        t.leaf_offset = offset;
        offset += t.leaf_count;
    }
    Ok(Codebook {
        trees,
        dim: set.dim,
        config: *cfg,
    })
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Frontier {
    node: usize,
    samples: Vec<u32>,
    split: Candidate,
}

struct TreeBuilder<'a> {
    set: &'a TrainingSet,
    objective: Objective,
    cfg: &'a ForestConfig,
    rng: rand_chacha::ChaCha8Rng,
}

impl TreeBuilder<'_> {
    /// Best-first growth: always expand the frontier node with the largest
    /// gain until the leaf budget is met or no node has positive gain.
    fn grow(mut self, root: Vec<u32>) -> Tree {
        let mut nodes = vec![Node::Leaf { leaf: 0 }];
        let mut leaves = 1usize;
        let mut frontier: Vec<Frontier> = Vec::new();
        if let Some(split) = self.best_split(&root) {
            frontier.push(Frontier {
                node: 0,
                samples: root,
                split,
            });
        }
        while leaves < self.cfg.max_leaves_per_tree && !frontier.is_empty() {
            // highest gain, earliest pushed on ties
            let mut best = 0;
            for (i, f) in frontier.iter().enumerate().skip(1) {
                if f.split.gain > frontier[best].split.gain {
                    best = i;
                }
            }
            let Frontier {
                node,
                samples,
                split,
            } = frontier.remove(best);
            let (left, right): (Vec<u32>, Vec<u32>) = samples
                .iter()
                .partition(|&&i| self.set.value(i, split.feature) < split.threshold);
            let (li, ri) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { leaf: 0 });
            nodes.push(Node::Leaf { leaf: 0 });
            nodes[node] = Node::Split {
                feature: split.feature as u32,
                threshold: split.threshold,
                left: li as u32,
                right: ri as u32,
                gain: split.gain,
            };
            leaves += 1;
            for (child, samples) in [(li, left), (ri, right)] {
                if let Some(split) = self.best_split(&samples) {
                    frontier.push(Frontier {
                        node: child,
                        samples,
                        split,
                    });
                }
            }
        }
        let mut next = 0u32;
        for n in nodes.iter_mut() {
            if let Node::Leaf { leaf } = n {
                *leaf = next;
                next += 1;
            }
        }
        Tree {
            nodes,
            objective: self.objective,
            leaf_count: leaves,
            leaf_offset: 0,
        }
    }

    fn histograms(&self, samples: &[u32]) -> (Vec<u32>, Vec<u32>) {
        let mut fine = vec![0u32; self.set.n_fine];
        let mut coarse = vec![0u32; self.set.n_coarse];
        for &i in samples {
            fine[self.set.fine[i as usize] as usize] += 1;
            coarse[self.set.coarse[i as usize] as usize] += 1;
        }
        (fine, coarse)
    }

    fn uses_fine(&self) -> bool {
        matches!(self.objective, Objective::Fine | Objective::CoFi)
    }

    fn uses_coarse(&self) -> bool {
        matches!(self.objective, Objective::Coarse | Objective::CoFi)
    }

    fn best_split(&mut self, samples: &[u32]) -> Option<Candidate> {
        let min_leaf = self.cfg.min_samples_per_leaf;
        if samples.len() < 2 * min_leaf {
            return None;
        }
        let n = samples.len() as u32;
        let (fine, coarse) = self.histograms(samples);
        let pure = |h: &[u32]| h.iter().filter(|&&c| c > 0).count() <= 1;
        let fine_pure = !self.uses_fine() || pure(&fine);
        let coarse_pure = !self.uses_coarse() || pure(&coarse);
        if fine_pure && coarse_pure {
            return None;
        }
        let mut best: Option<Candidate> = None;
        let mut left_fine = vec![0u32; fine.len()];
        let mut left_coarse = vec![0u32; coarse.len()];
        for _ in 0..self.cfg.candidate_splits_per_node {
            let feature = self.rng.random_range(0..self.set.dim);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in samples {
                let v = self.set.value(i, feature);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if !(hi > lo) {
                continue;
            }
            let threshold = self.rng.random_range(lo..hi);
            if !(threshold > lo) {
                // the left side would be empty
                continue;
            }
            left_fine.iter_mut().for_each(|c| *c = 0);
            left_coarse.iter_mut().for_each(|c| *c = 0);
            let mut n_left = 0u32;
            for &i in samples {
                if self.set.value(i, feature) < threshold {
                    n_left += 1;
                    left_fine[self.set.fine[i as usize] as usize] += 1;
                    left_coarse[self.set.coarse[i as usize] as usize] += 1;
                }
            }
            let n_right = n - n_left;
            if (n_left as usize) < min_leaf || (n_right as usize) < min_leaf {
                continue;
            }
            let mut g = 0.0;
            if self.uses_coarse() {
                g += gain::gain_counts(&coarse, &left_coarse, n_left, n_right);
            }
            if self.uses_fine() {
                g += gain::gain_counts(&fine, &left_fine, n_left, n_right);
            }
            if g > MIN_GAIN && best.is_none_or(|b| g > b.gain) {
                best = Some(Candidate {
                    feature,
                    threshold,
                    gain: g,
                });
            }
        }
        best
    }
}
