//! Load the shipped coarse/fine taxonomies and list the sibling pairs each
//! unseen class can borrow topics from.

use hic_zeroshot::taxonomy::{LoadMode, Taxonomy};

fn main() -> hic_zeroshot::Result<()> {
    let assets = concat!(env!("CARGO_MANIFEST_DIR"), "/assets");
    for file in ["caltech256.taxonomy", "awa.taxonomy"] {
        let tax = Taxonomy::load(format!("{assets}/{file}"), LoadMode::Permissive)?;
        println!(
            "{file}: {} coarse, {} fine ({} repeated entries dropped)",
            tax.num_coarse(),
            tax.num_fine(),
            tax.dropped_duplicates().len()
        );
        for u in tax.unseen_classes() {
            let pairs = match tax.unseen_pairs(u) {
                Ok(p) => format!("{} candidate pairs", p.pairs.len()),
                Err(e) => e.to_string(),
            };
            println!(
                "  unseen {:<16} under {:<12} {pairs}",
                tax.fine(u).name,
                tax.coarse_classes()[tax.parent(u).0].name,
            );
        }
    }

    let drawn = Taxonomy::load(format!("{assets}/caltech256.taxonomy"), LoadMode::Permissive)?
        .with_unseen_per_coarse(2, 7)?;
    println!("caltech256 with q=2: {} unseen classes", drawn.unseen_classes().count());
    Ok(())
}
