//! The same experiment under each forest variant.

use hic_zeroshot::data::SyntheticSpec;
use hic_zeroshot::experiment::sweep::{compare_csv, parse_variants};
use hic_zeroshot::experiment::{compare_codebooks, DatasetSpec, ExperimentConfig};

fn main() -> hic_zeroshot::Result<()> {
    let mut cfg = ExperimentConfig {
        seed: 5,
        q: Some(1),
        dataset: DatasetSpec::Synthetic(SyntheticSpec {
            feature_dim: Some(8),
            tokens_per_doc: 60,
            ..Default::default()
        }),
        ..Default::default()
    };
    cfg.forest.num_trees = 6;
    cfg.forest.max_leaves_per_tree = 40;
    cfg.em.restarts = 10;
    cfg.classifier.normalize_by_set_size = true;

    let names: Vec<String> = ["fine", "coarse", "jcofi", "cofi"].map(String::from).to_vec();
    let rows = compare_codebooks(&cfg, &parse_variants(&names)?, false)?;
    print!("{}", compare_csv(&rows));
    Ok(())
}
