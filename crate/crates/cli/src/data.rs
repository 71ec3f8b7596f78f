//! Loading image directories and annotated datasets from disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nnnf_core::eval::load_annotations;
use nnnf_core::image::decode_image;
use nnnf_core::{AnnotatedImage, Error, PixelBox, Result, RgbImage};

pub const ANNOTATIONS_FILE: &str = "annotations.csv";

fn is_image(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("ppm" | "png")
    )
}

/// Sorted image files directly inside `dir`.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| io_error(dir, e))?.path();
        if p.is_file() && is_image(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Expand the command-line inputs into `(name, path)` pairs. Files keep the
/// name as given; images found in a directory are named relative to it so
/// that they line up with that directory's annotations.
pub fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            for p in list_images(input)? {
                let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
                out.push((name, p));
            }
        } else {
            out.push((input.to_string_lossy().into_owned(), input.clone()));
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("no input images".into()));
    }
    Ok(out)
}

/// Every image of `dir` with the non-ignored boxes of `dir/annotations.csv`.
/// A missing directory or one without any box is reported as
/// `InsufficientData`.
pub fn load_dataset(dir: &Path) -> Result<Vec<(String, AnnotatedImage)>> {
    if !dir.is_dir() {
        return Err(Error::InsufficientData(format!("{} is not a directory", dir.display())));
    }
    let ann = dir.join(ANNOTATIONS_FILE);
    let gts = if ann.exists() { load_annotations(&ann)? } else { Vec::new() };
    let mut boxes: BTreeMap<String, Vec<PixelBox>> = BTreeMap::new();
    for g in gts.iter().filter(|g| !g.ignore) {
        boxes.entry(g.image.clone()).or_default().push(g.bbox());
    }
    let mut names: Vec<String> = list_images(dir)?
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    for name in boxes.keys() {
        if !names.contains(name) {
            names.push(name.clone());
        }
    }
    names.sort();
    if boxes.values().all(Vec::is_empty) {
        return Err(Error::InsufficientData(format!("no annotated boxes in {}", dir.display())));
    }
    names
        .into_iter()
        .map(|name| {
            let image = decode_image(dir.join(&name))?;
            let b = boxes.remove(&name).unwrap_or_default();
            Ok((name, AnnotatedImage { image, boxes: b }))
        })
        .collect()
}

/// Images of `dir` without annotations, used as extra negatives.
pub fn load_negatives(dir: &Path) -> Result<Vec<AnnotatedImage>> {
    list_images(dir)?
        .iter()
        .map(|p| {
            Ok(AnnotatedImage {
                image: decode_image(p)?,
                boxes: Vec::new(),
            })
        })
        .collect()
}

pub fn load_images(inputs: &[PathBuf]) -> Result<Vec<(String, RgbImage)>> {
    expand_inputs(inputs)?
        .into_iter()
        .map(|(name, p)| Ok((name, decode_image(&p)?)))
        .collect()
}
