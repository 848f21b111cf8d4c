//! Reading layer manifests and rasters, writing and reading the SVG subset,
//! lossless document files, quality metrics and run reports.

pub mod document;
pub mod manifest;
pub mod metrics;
pub mod raster;
pub mod report;
pub mod svg;

pub use document::{read_document, write_document};
pub use manifest::{load_manifest, LayerManifest, LoadedManifest, ManifestEntry};
pub use metrics::{compute_metrics, mse, psnr, ssim, ImageMetrics, LayerMetrics, MetricsReport};
pub use raster::{read_png, write_png};
pub use svg::{emit_svg, parse_svg_subset, parse_svg_str, svg_string};
