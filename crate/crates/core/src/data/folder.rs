//! Directory-per-class image folders.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat, ImageReader};
use rayon::prelude::*;

use super::dataset::{Dataset, Payload, PixelImage, Sample, SplitSpec};
use crate::error::{Error, Result};
use crate::taxonomy::{FineClassId, LoadMode, Taxonomy};

/// Decode a PNG or JPEG file; the format is taken from the extension.
pub fn decode_image(path: &Path) -> Result<PixelImage> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let format = match ext.as_deref() {
        Some("png") => ImageFormat::Png,
        Some("jpg" | "jpeg") => ImageFormat::Jpeg,
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    };
    let mut reader = ImageReader::open(path)?;
    reader.set_format(format);
    Ok(match reader.decode()? {
        DynamicImage::ImageLuma8(g) => PixelImage {
            width: g.width() as usize,
            height: g.height() as usize,
            channels: 1,
            bytes: g.into_raw(),
        },
        other => {
            let rgb = other.to_rgb8();
            PixelImage {
                width: rgb.width() as usize,
                height: rgb.height() as usize,
                channels: 3,
                bytes: rgb.into_raw(),
            }
        }
    })
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir)? {
        let path = e?.path();
        let hidden = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'));
        if !hidden {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Load `root/<fine class>/<image>` against a taxonomy file. Every class
/// directory must name a taxonomy fine class; files other than PNG/JPEG are
/// rejected.
pub fn load_image_folder(
    root: impl AsRef<Path>,
    taxonomy_file: impl AsRef<Path>,
    mode: LoadMode,
    split: SplitSpec,
    seed: u64,
) -> Result<Dataset> {
    let taxonomy = Taxonomy::load(taxonomy_file, mode)?;
    load_image_folder_with(root, taxonomy, split, seed)
}

pub fn load_image_folder_with(
    root: impl AsRef<Path>,
    taxonomy: Taxonomy,
    split: SplitSpec,
    seed: u64,
) -> Result<Dataset> {
    let mut files = Vec::new();
    for dir in sorted_entries(root.as_ref())? {
        if !dir.is_dir() {
            continue;
        }
        let name = dir.file_name().unwrap().to_string_lossy().into_owned();
        let class = taxonomy
            .fine_by_name(&name)
            .ok_or_else(|| Error::MissingClassDir(name.clone()))?;
        for f in sorted_entries(&dir)? {
            if f.is_file() {
                files.push((class, name.clone(), f));
            }
        }
    }
    let images = files
        .par_iter()
        .map(|(_, _, path)| decode_image(path))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<FineClassId> = files.iter().map(|f| f.0).collect();
    let splits = split.assign(&labels, seed)?;
    let samples = files
        .into_iter()
        .zip(images)
        .zip(splits)
        .filter_map(|(((class, dir, path), img), s)| {
            let id = format!("{dir}/{}", path.file_name().unwrap().to_string_lossy());
            s.map(|s| Sample::new(id, class, s, Payload::Pixels(img)))
        })
        .collect();
    Dataset::new(taxonomy, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, RgbImage};

    fn write_class(root: &Path, name: &str, n: usize) {
        let dir = root.join(name);
        fs::create_dir_all(&dir).unwrap();
        for i in 0..n {
            let img = GrayImage::from_fn(8, 8, |x, y| image::Luma([(x * 30 + y + i as u32) as u8]));
            img.save(dir.join(format!("{i}.png"))).unwrap();
        }
    }

    #[test]
    fn two_classes_one_coarse() {
        let root = tempfile::tempdir().unwrap();
        write_class(root.path(), "cat", 4);
        write_class(root.path(), "dog", 3);
        let tax_path = root.path().join("tax.txt");
        fs::write(&tax_path, "coarse: pets\n  fine: cat\n  fine: dog\n").unwrap();
        let ds = load_image_folder(
            root.path(),
            &tax_path,
            LoadMode::Strict,
            SplitSpec::parse("2/rest").unwrap(),
            1,
        )
        .unwrap();
        assert_eq!(ds.taxonomy().num_fine(), 2);
        assert_eq!(ds.taxonomy().num_coarse(), 1);
        assert_eq!(ds.len(), 7);
        assert_eq!(ds.seen_train_indices().len(), 4);
        match ds.read(0, "test") {
            Payload::Pixels(p) => assert_eq!((p.width, p.height, p.channels), (8, 8, 1)),
            _ => panic!("expected pixels"),
        }
    }

    #[test]
    fn unknown_class_dir_is_named() {
        let root = tempfile::tempdir().unwrap();
        write_class(root.path(), "cat", 1);
        write_class(root.path(), "emu", 1);
        let tax = Taxonomy::parse("coarse: pets\n  fine: cat\n", LoadMode::Strict).unwrap();
        let err = load_image_folder_with(root.path(), tax, SplitSpec::parse("1/rest").unwrap(), 0)
            .unwrap_err();
        assert!(matches!(err, Error::MissingClassDir(ref n) if n == "emu"));
    }

    #[test]
    fn rgb_jpeg_and_unsupported_files() {
        let root = tempfile::tempdir().unwrap();
        let img = RgbImage::from_fn(6, 5, |x, _| image::Rgb([x as u8 * 40, 0, 255]));
        let jpg = root.path().join("a.jpg");
        img.save(&jpg).unwrap();
        let p = decode_image(&jpg).unwrap();
        assert_eq!((p.width, p.height, p.channels), (6, 5, 3));
        let bmp = root.path().join("a.bmp");
        fs::write(&bmp, b"BM").unwrap();
        assert!(matches!(decode_image(&bmp), Err(Error::UnsupportedFormat(_))));
    }
}
