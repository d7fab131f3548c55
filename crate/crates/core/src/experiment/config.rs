//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! out_dir = "runs/cifar"
//! num_topics = 10
//! q = 2
//!
//! [dataset]
//! kind = "cifar100"
//! path = "data/cifar-100-binary"
//! split = "30/rest"
//!
//! [phog]
//! levels = 2
//!
//! [forest]
//! num_trees = 10
//! max_leaves_per_tree = 50
//! variant = "cofi"
//!
//! [classifier]
//! pair_policy = "random"
//! ```
//!
//! The forest, pLSA, data and pair-selection seeds are derived from `seed`;
//! any `rng_seed` given in a sub-table is replaced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{SplitSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::forest::ForestConfig;
use crate::phog::PhogConfig;
use crate::plsa::EmConfig;
use crate::seeds::{self, stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    /// Generated in memory; `rng_seed` and `unseen_per_coarse` are set by
    /// the experiment.
    Synthetic(SyntheticSpec),
    Cifar100 {
        path: PathBuf,
        #[serde(default = "default_split")]
        split: SplitSpec,
    },
    Folder {
        root: PathBuf,
        taxonomy: PathBuf,
        #[serde(default = "default_split")]
        split: SplitSpec,
        #[serde(default)]
        permissive: bool,
    },
    /// Word histograms as written by `synth`: a `image_id,leaf_id,count`
    /// CSV, an `image_id,class,split` manifest and a taxonomy file.
    Bow {
        bow: PathBuf,
        labels: PathBuf,
        taxonomy: PathBuf,
        vocab_size: usize,
    },
}

fn default_split() -> SplitSpec {
    SplitSpec {
        train: 30,
        test: None,
    }
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairPolicyKind {
    #[default]
    Random,
    Explicit,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub pair_policy: PairPolicyKind,
    /// For the explicit policy: unseen class name to seen pair names.
    pub pairs: BTreeMap<String, [String; 2]>,
    pub normalize_by_set_size: bool,
    pub cross_class_norm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub q_values: Vec<usize>,
    pub repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            q_values: vec![0, 1, 2],
            repeats: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Defaults to the generating topic count for synthetic data; required
    /// otherwise.
    pub num_topics: Option<usize>,
    /// Unseen classes per coarse class, re-drawn from the seed. `None` keeps
    /// the flags of the taxonomy (or of the synthetic spec).
    pub q: Option<usize>,
    /// Reuse stage artifacts already in `out_dir` when their configuration
    /// fingerprint matches.
    pub checkpoint: bool,
    pub dataset: DatasetSpec,
    pub phog: PhogConfig,
    pub forest: ForestConfig,
    pub em: EmConfig,
    pub classifier: ClassifierConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            num_topics: None,
            q: None,
            checkpoint: false,
            dataset: DatasetSpec::default(),
            phog: PhogConfig::default(),
            forest: ForestConfig::default(),
            em: EmConfig::default(),
            classifier: ClassifierConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = ExperimentConfig::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Make relative dataset paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.dataset {
            DatasetSpec::Synthetic(_) => {}
            DatasetSpec::Cifar100 { path, .. } => fix(path),
            DatasetSpec::Folder { root, taxonomy, .. } => {
                fix(root);
                fix(taxonomy);
            }
            DatasetSpec::Bow {
                bow,
                labels,
                taxonomy,
                ..
            } => {
                fix(bow);
                fix(labels);
                fix(taxonomy);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.phog.validate()?;
        self.forest.validate()?;
        self.em.validate()?;
        if self.num_topics == Some(0) {
            return Err(Error::InvalidConfig("num_topics must be positive".into()));
        }
        if self.sweep.repeats == 0 {
            return Err(Error::InvalidConfig("sweep.repeats must be positive".into()));
        }
        let missing = |p: &Path| -> Result<()> {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{} does not exist", p.display())))
            }
        };
        match &self.dataset {
            DatasetSpec::Synthetic(spec) => {
                let mut spec = spec.clone();
                if let Some(q) = self.q {
                    spec.unseen_per_coarse = q;
                }
                spec.validate()?;
            }
            DatasetSpec::Cifar100 { path, .. } => missing(path)?,
            DatasetSpec::Folder { root, taxonomy, .. } => {
                missing(root)?;
                missing(taxonomy)?;
            }
            DatasetSpec::Bow {
                bow,
                labels,
                taxonomy,
                ..
            } => {
                missing(bow)?;
                missing(labels)?;
                missing(taxonomy)?;
            }
        }
        if self.num_topics.is_none() && !matches!(self.dataset, DatasetSpec::Synthetic(_)) {
            return Err(Error::InvalidConfig(
                "num_topics is required for non-synthetic datasets".into(),
            ));
        }
        if self.classifier.pair_policy == PairPolicyKind::Explicit && self.q.is_some() {
            return Err(Error::InvalidConfig(
                "explicit pairs need fixed unseen classes; leave q unset".into(),
            ));
        }
        Ok(())
    }

    pub fn data_seed(&self) -> u64 {
        seeds::derive(self.seed, stage::DATA)
    }

    pub fn unseen_seed(&self) -> u64 {
        seeds::derive(self.seed, stage::UNSEEN)
    }

    pub fn pair_seed(&self) -> u64 {
        seeds::derive(self.seed, stage::PAIRS)
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            rng_seed: seeds::derive(self.seed, stage::FOREST),
            ..self.forest
        }
    }

    pub fn em_config(&self) -> EmConfig {
        EmConfig {
            rng_seed: seeds::derive(self.seed, stage::PLSA),
            ..self.em
        }
    }

    /// The same experiment under another master seed and `q`.
    pub fn with_run(&self, seed: u64, q: Option<usize>) -> ExperimentConfig {
        ExperimentConfig {
            seed,
            q,
            ..self.clone()
        }
    }

    /// SHA-256 over the settings that affect results (everything except the
    /// output directory, checkpoint flag and sweep grid).
    pub fn fingerprint(&self) -> String {
        let relevant = ExperimentConfig {
            out_dir: PathBuf::new(),
            checkpoint: false,
            sweep: SweepConfig::default(),
            ..self.clone()
        };
        let json = serde_json::to_string(&relevant).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::Variant;

    #[test]
    fn parses_documented_example() {
        let text = r#"
seed = 7
out_dir = "runs/cifar"
num_topics = 10
q = 2

[dataset]
kind = "cifar100"
path = "data/cifar-100-binary"
split = "30/rest"

[phog]
levels = 2

[forest]
num_trees = 10
max_leaves_per_tree = 50
variant = "cofi"

[classifier]
pair_policy = "random"
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.q, Some(2));
        assert_eq!(cfg.phog.levels, 2);
        assert_eq!(cfg.phog.bins, 20);
        assert_eq!(cfg.forest.variant, Variant::CoFi);
        assert_eq!(cfg.forest.max_leaves_per_tree, 50);
        assert!(matches!(cfg.dataset, DatasetSpec::Cifar100 { ref split, .. } if split.train == 30));
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn synthetic_dataset_table() {
        let cfg = ExperimentConfig::from_toml(
            "[dataset]\nkind = \"synthetic\"\ncoarse_count = 2\nfine_per_coarse = 4\n",
        )
        .unwrap();
        match &cfg.dataset {
            DatasetSpec::Synthetic(s) => {
                assert_eq!(s.coarse_count, 2);
                assert_eq!(s.tokens_per_doc, 200);
            }
            _ => panic!("expected synthetic"),
        }
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        for text in [
            "bogus = 1",
            "[forest]\nvariant = \"deep\"",
            "[phog]\nangle_range = 90",
        ] {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
        let cfg = ExperimentConfig {
            q: Some(2),
            ..Default::default()
        };
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
        let cfg = ExperimentConfig {
            dataset: DatasetSpec::Cifar100 {
                path: "/nonexistent".into(),
                split: default_split(),
            },
            num_topics: Some(10),
            ..Default::default()
        };
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn fingerprint_ignores_output_location() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            out_dir: "elsewhere".into(),
            checkpoint: true,
            ..Default::default()
        };
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), a.with_run(1, None).fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
