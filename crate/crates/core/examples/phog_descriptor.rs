//! PHOG descriptors of a synthetic image: one histogram per pyramid cell.

use hic_zeroshot::phog::{self, PhogConfig, RasterImage};

fn main() -> hic_zeroshot::Result<()> {
    let (w, h) = (64, 64);
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let inside = (16..48).contains(&x) && (16..48).contains(&y);
            pixels.push(if inside { 220u8 } else { 30 });
        }
    }
    let image = RasterImage::from_gray_u8(w, h, &pixels)?;

    let cfg = PhogConfig::default();
    let features = phog::extract(&image, &cfg)?;
    println!(
        "{} levels, {} bins, {} cells -> {} descriptors of dimension {}",
        cfg.levels,
        cfg.bins,
        cfg.cell_count(),
        features.len(),
        features.dim().unwrap_or(0)
    );
    let root = &features.descriptors[0].values;
    let peak = root
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    println!("level-0 histogram sums to {:.6}", root.iter().sum::<f64>());
    println!("dominant orientation bin: {peak} of {}", cfg.bins);

    let rotated = phog::extract(&image.rotated_90(), &cfg)?;
    let diff: f64 = root
        .iter()
        .zip(&rotated.descriptors[0].values)
        .map(|(a, b)| (a - b).abs())
        .sum();
    println!("a square looks the same rotated by 90 degrees: L1 difference {diff:.2e}");
    Ok(())
}
