//! Layer manifests: a JSON file listing each layer's image and mask,
//! bottom layer first.
//!
//! ```json
//! {
//!   "canvas": { "width": 128, "height": 128 },
//!   "layers": [
//!     { "id": "background", "image": "bg.png", "mask": "bg_mask.png", "z": 0 },
//!     { "id": "disk", "image": "disk.png", "mask": "disk_mask.png", "z": 1 }
//!   ]
//! }
//! ```
//!
//! Paths are relative to the manifest. Masks are thresholded at 0.5.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::raster::read_png;
use crate::scene::{LayerTarget, Mask, Provenance, RgbaImage};

/// Above this fraction of mid-gray values a mask is rejected as not binary.
pub const MAX_AMBIGUOUS_FRACTION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub image: String,
    pub mask: String,
    pub z: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerManifest {
    pub canvas: Canvas,
    pub layers: Vec<ManifestEntry>,
}

impl LayerManifest {
    pub fn validate(&self) -> Result<()> {
        if self.canvas.width == 0 || self.canvas.height == 0 {
            return Err(Error::Manifest(format!(
                "canvas must be non-empty, got {}x{}",
                self.canvas.width, self.canvas.height
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::Manifest("manifest lists no layers".into()));
        }
        let mut ids = HashSet::new();
        for (k, entry) in self.layers.iter().enumerate() {
            if entry.id.is_empty() {
                return Err(Error::Manifest(format!("layer {k} has an empty id")));
            }
            if !ids.insert(entry.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate layer id `{}`", entry.id)));
            }
            if k > 0 && entry.z <= self.layers[k - 1].z {
                return Err(Error::Manifest(format!(
                    "layer `{}` has z {} but must be above `{}` (z {})",
                    entry.id,
                    entry.z,
                    self.layers[k - 1].id,
                    self.layers[k - 1].z
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LoadedManifest {
    pub manifest: LayerManifest,
    pub targets: Vec<LayerTarget>,
    pub provenance: Vec<Provenance>,
}

impl LoadedManifest {
    pub fn width(&self) -> usize {
        self.manifest.canvas.width
    }

    pub fn height(&self) -> usize {
        self.manifest.canvas.height
    }
}

pub fn read_manifest(path: &Path) -> Result<LayerManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_manifest(path: &Path, manifest: &LayerManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Binary mask from a decoded raster: mean of the color channels times
/// alpha, thresholded at 0.5.
pub fn threshold_mask(image: &RgbaImage) -> std::result::Result<Mask, f64> {
    let values: Vec<f64> = image
        .pixels
        .iter()
        .map(|p| (p[0] + p[1] + p[2]) / 3.0 * p[3])
        .collect();
    let ambiguous = values.iter().filter(|v| **v > 0.25 && **v < 0.75).count() as f64 / values.len().max(1) as f64;
    if ambiguous > MAX_AMBIGUOUS_FRACTION {
        return Err(ambiguous);
    }
    Ok(Mask {
        width: image.width,
        height: image.height,
        bits: values.iter().map(|v| *v >= 0.5).collect(),
    })
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    base.join(file)
}

/// Reads, validates and decodes every layer of a manifest.
pub fn load_manifest(path: &Path) -> Result<LoadedManifest> {
    let manifest = read_manifest(path)?;
    manifest.validate()?;
    let base = path.parent().unwrap_or(Path::new(""));
    let (w, h) = (manifest.canvas.width, manifest.canvas.height);
    let mut targets = Vec::with_capacity(manifest.layers.len());
    let mut provenance = Vec::with_capacity(manifest.layers.len());
    for entry in &manifest.layers {
        let image_path = resolve(base, &entry.image);
        let mask_path = resolve(base, &entry.mask);
        let image = read_png(&image_path)?;
        let mask_image = read_png(&mask_path)?;
        for (what, img) in [("image", &image), ("mask", &mask_image)] {
            if img.width != w || img.height != h {
                return Err(Error::DimensionMismatch(format!(
                    "layer `{}`: {what} {} is {}x{} but the canvas is {w}x{h}",
                    entry.id,
                    if what == "image" { &entry.image } else { &entry.mask },
                    img.width,
                    img.height
                )));
            }
        }
        let mask = threshold_mask(&mask_image).map_err(|fraction| {
            Error::Manifest(format!(
                "layer `{}`: mask {} is not binary ({:.1}% of values lie between 0.25 and 0.75)",
                entry.id,
                entry.mask,
                100.0 * fraction
            ))
        })?;
        let target = LayerTarget::new(entry.id.clone(), image, mask).map_err(|e| Error::Manifest(format!("layer `{}`: {e}", entry.id)))?;
        targets.push(target);
        provenance.push(Provenance {
            image: entry.image.clone(),
            mask: entry.mask.clone(),
            z: entry.z,
        });
    }
    Ok(LoadedManifest {
        manifest,
        targets,
        provenance,
    })
}
