//! Accuracy against the number of unseen classes per coarse class.

use hic_zeroshot::data::SyntheticSpec;
use hic_zeroshot::experiment::{sweep_q, DatasetSpec, ExperimentConfig};

fn main() -> hic_zeroshot::Result<()> {
    let mut cfg = ExperimentConfig {
        seed: 3,
        dataset: DatasetSpec::Synthetic(SyntheticSpec {
            fine_per_coarse: 5,
            ..Default::default()
        }),
        out_dir: std::env::temp_dir().join("hic-zeroshot-sweep"),
        ..Default::default()
    };
    cfg.em.restarts = 10;
    cfg.classifier.normalize_by_set_size = true;

    let result = sweep_q(&cfg, &[0, 1, 2], 3, true)?;
    print!("{}", result.summary_csv());
    println!();
    print!("{}", result.accuracy_vs_q_csv());
    println!("consistency (max - min mean accuracy): {:.4}", result.consistency());
    Ok(())
}
