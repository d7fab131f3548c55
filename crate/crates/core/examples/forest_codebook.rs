//! Train a CoFi random-forest codebook on labelled descriptors, quantize an
//! image and round-trip the codebook through its binary format.

use hic_zeroshot::data::{generate_synthetic, Payload, SyntheticSpec};
use hic_zeroshot::forest::{self, ForestConfig, LabeledDescriptor, Variant};
use hic_zeroshot::forest::Codebook;

fn main() -> hic_zeroshot::Result<()> {
    let spec = SyntheticSpec {
        coarse_count: 3,
        unseen_per_coarse: 0,
        tokens_per_doc: 40,
        feature_dim: Some(8),
        ..Default::default()
    };
    let (dataset, _) = generate_synthetic(&spec)?;
    let tax = dataset.taxonomy();

    let train = dataset.seen_train_indices();
    let mut data = Vec::new();
    for &i in &train {
        let fine = dataset.samples()[i].fine;
        if let Payload::Features(f) = dataset.read(i, "example") {
            for d in &f.descriptors {
                data.push(LabeledDescriptor {
                    values: d.values.clone(),
                    fine,
                    coarse: tax.parent(fine),
                });
            }
        }
    }

    let cfg = ForestConfig {
        num_trees: 5,
        max_leaves_per_tree: 30,
        variant: Variant::CoFi,
        ..Default::default()
    };
    let codebook = forest::train(&data, &cfg)?;
    println!(
        "{} descriptors -> {} trees, vocabulary of {} words",
        data.len(),
        codebook.trees().len(),
        codebook.vocab_size()
    );
    for (t, tree) in codebook.trees().iter().enumerate() {
        println!(
            "tree {t}: {:?} objective, {} leaves, depth {}",
            tree.objective(),
            tree.leaf_count(),
            tree.depth()
        );
    }

    let test = dataset.test_indices()[0];
    if let Payload::Features(f) = dataset.read(test, "example") {
        let hist = codebook.quantize(f)?;
        println!(
            "test image with {} descriptors -> histogram with {} counts",
            f.len(),
            hist.total()
        );
    }

    let mut bytes = Vec::new();
    codebook.write_to(&mut bytes)?;
    let back = Codebook::read_from(bytes.as_slice())?;
    println!(
        "serialized to {} bytes; reload equal: {}",
        bytes.len(),
        back == codebook
    );
    Ok(())
}
