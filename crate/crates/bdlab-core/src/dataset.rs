//! Dataset directory scanning, manifests and in-memory loading.
//!
//! On-disk layout is one directory per class under a dataset root; class
//! names are sorted lexicographically to assign integer labels `0..K-1`.

use crate::error::{Error, Result};
use crate::image::{load_image, Image, ResizePolicy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// One labeled sample by path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub path: PathBuf,
    pub label: usize,
}

/// A dataset description: class names plus ordered sample records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Class names sorted lexicographically; the label of a class is its index.
    pub classes: Vec<String>,
    pub samples: Vec<SampleRecord>,
    /// Expected `(height, width, channels)` of every image.
    pub image_shape: (usize, usize, usize),
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes.len()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path.as_ref(), json).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("bad dataset manifest: {e}")))
    }
}

/// Scan a directory-per-class tree into a manifest.
pub fn scan_dataset(root: impl AsRef<Path>, image_shape: (usize, usize, usize)) -> Result<DatasetManifest> {
    let root = root.as_ref();
    let mut classes: Vec<String> = Vec::new();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            classes.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    if classes.is_empty() {
        return Err(Error::Data(format!("no class directories under `{}`", root.display())));
    }
    classes.sort();
    let mut samples = Vec::new();
    for (label, class) in classes.iter().enumerate() {
        let dir = root.join(class);
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                    .unwrap_or(false)
            })
            .collect();
        files.sort();
        for path in files {
            samples.push(SampleRecord { path, label });
        }
    }
    if samples.is_empty() {
        return Err(Error::Data(format!("no image files under `{}`", root.display())));
    }
    Ok(DatasetManifest {
        classes,
        samples,
        image_shape,
    })
}

/// A dataset with every image decoded into memory.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub images: Vec<Image>,
}

impl LoadedDataset {
    pub fn labels(&self) -> Vec<usize> {
        self.manifest.samples.iter().map(|s| s.label).collect()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.num_classes()
    }

    /// Indices of samples whose label differs from `excluded`.
    pub fn indices_excluding_class(&self, excluded: usize) -> Vec<usize> {
        self.manifest
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label != excluded)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Decode every sample in the manifest.
pub fn load_dataset(manifest: &DatasetManifest, policy: ResizePolicy) -> Result<LoadedDataset> {
    let mut images = Vec::with_capacity(manifest.len());
    for record in &manifest.samples {
        images.push(load_image(&record.path, manifest.image_shape, policy)?);
    }
    Ok(LoadedDataset {
        manifest: manifest.clone(),
        images,
    })
}

/// Hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(sha256_hex(&bytes))
}

/// Content hash of an entire dataset: file names and contents, order-stable.
pub fn dataset_content_hash(manifest: &DatasetManifest) -> Result<String> {
    let mut hasher = Sha256::new();
    for record in &manifest.samples {
        hasher.update(record.path.to_string_lossy().as_bytes());
        hasher.update([record.label as u8]);
        let bytes = std::fs::read(&record.path).map_err(|e| Error::io(&record.path, e))?;
        hasher.update(&bytes);
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
