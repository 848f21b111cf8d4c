//! Writes the bundled three-layer synthetic scene: a gradient background,
//! a disk, and a star overlapping the disk, each as a complete layer with
//! its own mask, plus `composite.png`, the layers stacked.
//!
//! Usage: cargo run --example make_fixture -- <output dir>

use std::path::PathBuf;

use layervec::io::metrics::stack_images;
use layervec::io::manifest::{write_manifest, Canvas, LayerManifest, ManifestEntry};
use layervec::io::raster::{write_mask_png, write_png};
use layervec::scene::{Mask, RgbaImage};

const SIZE: usize = 128;

fn star_contains(px: f64, py: f64, cx: f64, cy: f64, outer: f64, inner: f64, points: usize) -> bool {
    let verts: Vec<(f64, f64)> = (0..2 * points)
        .map(|k| {
            let r = if k % 2 == 0 { outer } else { inner };
            let a = -std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / points as f64;
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    let mut inside = false;
    for k in 0..verts.len() {
        let (x0, y0) = verts[k];
        let (x1, y1) = verts[(k + 1) % verts.len()];
        if (y0 > py) != (y1 > py) && px < x0 + (py - y0) / (y1 - y0) * (x1 - x0) {
            inside = !inside;
        }
    }
    inside
}

fn layer(shape: impl Fn(f64, f64) -> bool, color: impl Fn(f64, f64) -> [f64; 3]) -> (RgbaImage, Mask) {
    let image = RgbaImage::from_fn(SIZE, SIZE, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        if shape(px, py) {
            let c = color(px, py);
            [c[0], c[1], c[2], 1.0]
        } else {
            [0.0; 4]
        }
    });
    let mask = Mask::from_fn(SIZE, SIZE, |x, y| shape(x as f64 + 0.5, y as f64 + 0.5));
    (image, mask)
}

fn main() -> layervec::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/three_layer".into()));
    std::fs::create_dir_all(&dir).map_err(|e| layervec::Error::Io { path: dir.clone(), source: e })?;
    let s = SIZE as f64;
    let layers = [
        (
            "background",
            layer(
                |_, _| true,
                |x, y| {
                    let t = (0.3 * x + 0.7 * y) / s;
                    [0.15 + 0.6 * t, 0.35 + 0.4 * t, 0.7 - 0.3 * t]
                },
            ),
        ),
        ("disk", layer(|x, y| (x - 50.0).hypot(y - 56.0) <= 30.0, |_, _| [0.85, 0.2, 0.2])),
        ("star", layer(|x, y| star_contains(x, y, 84.0, 76.0, 34.0, 14.0, 5), |_, _| [0.95, 0.8, 0.15])),
    ];
    let mut entries = Vec::new();
    for (z, (id, (image, mask))) in layers.iter().enumerate() {
        let image_name = format!("{id}.png");
        let mask_name = format!("{id}_mask.png");
        write_png(&dir.join(&image_name), image)?;
        write_mask_png(&dir.join(&mask_name), mask)?;
        entries.push(ManifestEntry {
            id: id.to_string(),
            image: image_name,
            mask: mask_name,
            z: z as i64,
        });
    }
    let images: Vec<&RgbaImage> = layers.iter().map(|(_, (image, _))| image).collect();
    write_png(&dir.join("composite.png"), &stack_images(&images))?;
    write_manifest(
        &dir.join("manifest.json"),
        &LayerManifest {
            canvas: Canvas { width: SIZE, height: SIZE },
            layers: entries,
        },
    )
}
