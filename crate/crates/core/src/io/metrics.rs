//! MSE, PSNR and SSIM between renders and reference rasters.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::raster::{composite, RenderOutput, RenderSettings};
use crate::scene::{LayerTarget, Mask, RgbaImage, VectorDocument};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Writes infinite PSNR as the string `"inf"`.
mod psnr_value {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("unexpected PSNR value `{t}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub mse: f64,
    #[serde(with = "psnr_value")]
    pub psnr: f64,
    pub ssim: f64,
}

impl ImageMetrics {
    /// PSNR agrees with MSE at peak 1.
    pub fn is_consistent(&self) -> bool {
        let expected = psnr(self.mse);
        if expected.is_infinite() {
            self.psnr.is_infinite()
        } else {
            (self.psnr - expected).abs() <= 1e-9 * expected.abs().max(1.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerMetrics {
    pub layer_id: String,
    #[serde(flatten)]
    pub metrics: ImageMetrics,
    pub primitives: usize,
    /// Mean alpha outside the layer mask.
    pub leakage: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub document: ImageMetrics,
    pub layers: Vec<LayerMetrics>,
    pub primitives: usize,
    pub seconds: f64,
}

pub fn psnr(mse: f64) -> f64 {
    if mse > 0.0 {
        10.0 * (1.0 / mse).log10()
    } else {
        f64::INFINITY
    }
}

/// Mean squared error over RGB, restricted to `mask` when given.
pub fn mse(a: &[[f64; 3]], b: &[[f64; 3]], mask: Option<&[bool]>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..a.len() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        sum += (0..3).map(|ch| (a[i][ch] - b[i][ch]).powi(2)).sum::<f64>();
        count += 3;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Valid-region separable Gaussian filter.
fn filter(src: &[f64], width: usize, height: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (width + 1 - n, height + 1 - n);
    let mut rows = vec![0.0; ow * height];
    for y in 0..height {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * src[y * width + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over window positions and channels. The window shrinks to the
/// largest odd size that fits images smaller than 11 pixels. With a mask,
/// only windows centered inside it count.
pub fn ssim(a: &[[f64; 3]], b: &[[f64; 3]], width: usize, height: usize, mask: Option<&[bool]>) -> f64 {
    let mut size = SSIM_WINDOW.min(width).min(height);
    if size % 2 == 0 {
        size -= 1;
    }
    let k = gaussian_kernel(size, SSIM_SIGMA);
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let (ow, oh) = (width + 1 - size, height + 1 - size);
    let half = size / 2;
    let keep: Vec<bool> = (0..ow * oh)
        .map(|i| mask.is_none_or(|m| m[(i / ow + half) * width + i % ow + half]))
        .collect();
    let kept = keep.iter().filter(|k| **k).count();
    if kept == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for ch in 0..3 {
        let x: Vec<f64> = a.iter().map(|p| p[ch]).collect();
        let y: Vec<f64> = b.iter().map(|p| p[ch]).collect();
        let prod = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).collect::<Vec<f64>>();
        let mx = filter(&x, width, height, &k);
        let my = filter(&y, width, height, &k);
        let mxx = filter(&prod(&x, &x), width, height, &k);
        let myy = filter(&prod(&y, &y), width, height, &k);
        let mxy = filter(&prod(&x, &y), width, height, &k);
        let mut sum = 0.0;
        for i in (0..ow * oh).filter(|&i| keep[i]) {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cov = mxy[i] - ux * uy;
            sum += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += sum / kept as f64;
    }
    total / 3.0
}

pub fn metrics_rgb(a: &[[f64; 3]], b: &[[f64; 3]], width: usize, height: usize, mask: Option<&[bool]>) -> Result<ImageMetrics> {
    let n = width * height;
    if a.len() != n || b.len() != n || mask.is_some_and(|m| m.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "metric inputs have {} and {} pixels, expected {width}x{height}",
            a.len(),
            b.len()
        )));
    }
    let e = mse(a, b, mask);
    Ok(ImageMetrics {
        mse: e,
        psnr: psnr(e),
        ssim: ssim(a, b, width, height, mask),
    })
}

pub const WHITE: [f64; 3] = [1.0; 3];

pub fn image_over(image: &RgbaImage, background: [f64; 3]) -> Vec<[f64; 3]> {
    image
        .pixels
        .iter()
        .map(|p| [0, 1, 2].map(|ch| p[ch] * p[3] + background[ch] * (1.0 - p[3])))
        .collect()
}

/// Compares a render with a reference raster, both composited on white.
pub fn compute_metrics(rendered: &RenderOutput, reference: &RgbaImage, mask: Option<&Mask>) -> Result<ImageMetrics> {
    if rendered.width != reference.width || rendered.height != reference.height {
        return Err(Error::DimensionMismatch(format!(
            "render is {}x{} but the reference is {}x{}",
            rendered.width, rendered.height, reference.width, reference.height
        )));
    }
    if let Some(m) = mask {
        if m.width != reference.width || m.height != reference.height {
            return Err(Error::DimensionMismatch(format!(
                "mask is {}x{} but the reference is {}x{}",
                m.width, m.height, reference.width, reference.height
            )));
        }
    }
    metrics_rgb(
        &rendered.over(WHITE),
        &image_over(reference, WHITE),
        reference.width,
        reference.height,
        mask.map(|m| m.bits.as_slice()),
    )
}

/// Mean alpha over pixels outside `mask`.
pub fn leakage(render: &RenderOutput, mask: &Mask) -> f64 {
    let outside: Vec<f64> = render
        .alpha
        .iter()
        .zip(&mask.bits)
        .filter(|(_, m)| !**m)
        .map(|(a, _)| *a)
        .collect();
    if outside.is_empty() {
        0.0
    } else {
        outside.iter().sum::<f64>() / outside.len() as f64
    }
}

/// Straight-alpha over-composite of `layers`, bottom first.
pub fn stack_images(layers: &[&RgbaImage]) -> RgbaImage {
    let first = layers[0];
    let mut premul = vec![[0.0f64; 4]; first.pixels.len()];
    for layer in layers {
        for (dst, px) in premul.iter_mut().zip(&layer.pixels) {
            let a = px[3];
            for ch in 0..3 {
                dst[ch] = px[ch] * a + (1.0 - a) * dst[ch];
            }
            dst[3] = a + (1.0 - a) * dst[3];
        }
    }
    RgbaImage {
        width: first.width,
        height: first.height,
        pixels: premul
            .into_iter()
            .map(|p| {
                if p[3] > 0.0 {
                    [p[0] / p[3], p[1] / p[3], p[2] / p[3], p[3]]
                } else {
                    [0.0; 4]
                }
            })
            .collect(),
    }
}

/// Document-level and per-layer quality of a fitted document against the
/// layer targets it was fitted to. Layers are matched by position.
pub fn evaluate_document(
    doc: &VectorDocument,
    targets: &[LayerTarget],
    smoothing: f64,
    seconds: &[f64],
) -> Result<MetricsReport> {
    if doc.layers.len() != targets.len() {
        return Err(Error::invalid(format!(
            "document has {} layers but {} targets were given",
            doc.layers.len(),
            targets.len()
        )));
    }
    let settings = RenderSettings::new(doc.canvas_width, doc.canvas_height).with_smoothing(smoothing);
    let mut layers = Vec::with_capacity(targets.len());
    for (k, (layer, target)) in doc.layers.iter().zip(targets).enumerate() {
        let render = composite(&layer.vector, &settings);
        layers.push(LayerMetrics {
            layer_id: layer.vector.layer_id.clone(),
            metrics: compute_metrics(&render, &target.image, Some(&target.mask))?,
            primitives: layer.vector.len(),
            leakage: leakage(&render, &target.mask),
            seconds: seconds.get(k).copied().unwrap_or(0.0),
        });
    }
    let images: Vec<&RgbaImage> = targets.iter().map(|t| &t.image).collect();
    let reference = stack_images(&images);
    let render = composite(&doc.flattened(), &settings);
    Ok(MetricsReport {
        document: compute_metrics(&render, &reference, None)?,
        layers,
        primitives: doc.primitive_count(),
        seconds: seconds.iter().sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images() {
        let a = vec![[0.2, 0.4, 0.6]; 16 * 16];
        let m = metrics_rgb(&a, &a, 16, 16, None).unwrap();
        assert_eq!(m.mse, 0.0);
        assert!(m.psnr.is_infinite());
        assert!((m.ssim - 1.0).abs() < 1e-12);
        assert_eq!(serde_json::to_value(m).unwrap()["psnr"], "inf");
    }

    #[test]
    fn uniform_offset_gives_twenty_db() {
        let a = vec![[0.2, 0.4, 0.6]; 64];
        let b = vec![[0.3, 0.5, 0.7]; 64];
        let m = metrics_rgb(&a, &b, 8, 8, None).unwrap();
        assert!((m.mse - 0.01).abs() < 1e-12);
        assert!((m.psnr - 20.0).abs() < 1e-9);
        assert!(m.is_consistent());
    }

    #[test]
    fn psnr_round_trips_through_json() {
        let m = ImageMetrics {
            mse: 0.0,
            psnr: f64::INFINITY,
            ssim: 1.0,
        };
        let back: ImageMetrics = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
