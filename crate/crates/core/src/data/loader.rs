//! Directory-per-class image ingestion.

use std::path::{Path, PathBuf};

use super::dataset::{LabeledDataset, Sample};
use super::resize_bilinear;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DecodePolicy {
    #[default]
    Fatal,
    Skip,
}

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    /// Resize every image to `(height, width)` after decoding.
    pub target_size: Option<(usize, usize)>,
    pub on_decode_error: DecodePolicy,
}

#[derive(Debug)]
pub struct LoadReport {
    pub dataset: LabeledDataset,
    /// Files that failed to decode under [`DecodePolicy::Skip`].
    pub skipped: Vec<(PathBuf, String)>,
}

/// Loads `root/<class>/*` for each class name, in class order and sorted
/// path order. Images are converted to RGB with values in `[0, 1]`.
pub fn load_directory_dataset(
    root: &Path,
    classes: &[String],
    options: &LoadOptions,
) -> Result<LoadReport> {
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (label, class) in classes.iter().enumerate() {
        let dir = root.join(class);
        if !dir.is_dir() {
            return Err(Error::Data(format!(
                "class directory {} does not exist",
                dir.display()
            )));
        }
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| !n.starts_with('.'))
            })
            .collect();
        files.sort();
        let before = samples.len();
        for path in files {
            match decode(&path) {
                Ok(image) => {
                    let image = match options.target_size {
                        Some(size) => resize_bilinear(&image, size)?,
                        None => image,
                    };
                    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                    samples.push(Sample {
                        id: format!("{class}/{name}"),
                        image,
                        label,
                    });
                }
                Err(reason) => match options.on_decode_error {
                    DecodePolicy::Fatal => return Err(Error::Decode { path, reason }),
                    DecodePolicy::Skip => skipped.push((path, reason)),
                },
            }
        }
        if samples.len() == before {
            return Err(Error::Data(format!("class {class:?} has no images")));
        }
    }
    Ok(LoadReport {
        dataset: LabeledDataset::new(classes.to_vec(), samples)?,
        skipped,
    })
}

fn decode(path: &Path) -> std::result::Result<Tensor, String> {
    let img = image::ImageReader::open(path)
        .map_err(|e| e.to_string())?
        .with_guessed_format()
        .map_err(|e| e.to_string())?
        .decode()
        .map_err(|e| e.to_string())?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    Tensor::new(vec![h as usize, w as usize, 3], data).map_err(|e| e.to_string())
}
