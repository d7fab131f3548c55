//! The Cifar-100 protocol: 30 training images per class, K = 10 topics,
//! 10 trees of 50 leaves, 2-level PHOG.
//!
//! ```text
//! cargo run --release --example cifar100 -- path/to/cifar-100-binary [q]
//! ```

use hic_zeroshot::data::SplitSpec;
use hic_zeroshot::experiment::{run_pipeline, DatasetSpec, ExperimentConfig};
use hic_zeroshot::forest::ForestConfig;
use hic_zeroshot::phog::PhogConfig;

fn main() -> hic_zeroshot::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(path) = args.next() else {
        eprintln!("usage: cifar100 <cifar-100-binary dir> [q]");
        std::process::exit(2);
    };
    let q = args.next().map(|s| s.parse().expect("q is a number")).unwrap_or(0);
    let cfg = ExperimentConfig {
        seed: 0,
        q: Some(q),
        num_topics: Some(10),
        out_dir: format!("cifar100-q{q}").into(),
        dataset: DatasetSpec::Cifar100 {
            path: path.into(),
            split: SplitSpec {
                train: 30,
                test: None,
            },
        },
        phog: PhogConfig::cifar(),
        forest: ForestConfig::cifar(),
        ..Default::default()
    };
    let report = run_pipeline(&cfg)?;
    print!("{}", report.to_text());
    Ok(())
}
