#![allow(dead_code)]

pub mod fd;

use layervec::scene::{make_seed_primitive, LayerTarget, LayerVector, Mask, PathPrimitive, Point, RgbaImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A seed circle deformed while keeping tangents continuous at segment
/// joins: each join moves rigidly with its two handles by up to `jitter` px
/// and each handle is rescaled along its own direction.
pub fn random_blob(rng: &mut ChaCha8Rng, w: f64, h: f64, r_lo: f64, r_hi: f64, jitter: f64, opacity: (f64, f64)) -> PathPrimitive {
    let center = Point::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
    let radius = rng.random_range(r_lo..r_hi);
    let rgba = [
        rng.random::<f64>(),
        rng.random::<f64>(),
        rng.random::<f64>(),
        if opacity.0 == opacity.1 { opacity.0 } else { rng.random_range(opacity.0..opacity.1) },
    ];
    let mut prim = make_seed_primitive(center, radius, rgba, 4).unwrap();
    if jitter > 0.0 {
        let n = prim.points().len();
        let pts = prim.points_mut();
        for j in (0..n).step_by(3) {
            let join = pts[j];
            let (next, prev) = (j + 1, (j + n - 1) % n);
            for h in [next, prev] {
                let scale = rng.random_range(0.7..1.3);
                pts[h] = join + (pts[h] - join) * scale;
            }
            let d = Point::new(rng.random_range(-jitter..jitter), rng.random_range(-jitter..jitter));
            for k in [j, next, prev] {
                pts[k] = pts[k] + d;
            }
        }
    }
    prim
}

pub fn random_layer(rng: &mut ChaCha8Rng, n: usize, w: usize, h: usize, r: (f64, f64), jitter: f64, opacity: (f64, f64)) -> LayerVector {
    LayerVector::with_primitives(
        "random",
        (0..n)
            .map(|_| random_blob(rng, w as f64, h as f64, r.0, r.1, jitter, opacity))
            .collect(),
    )
}

/// Smooth random colors inside a disk mask, transparent outside.
pub fn random_target(rng: &mut ChaCha8Rng, w: usize, h: usize) -> LayerTarget {
    let cx = rng.random_range(0.3..0.7) * w as f64;
    let cy = rng.random_range(0.3..0.7) * h as f64;
    let r = rng.random_range(0.25..0.45) * w.min(h) as f64;
    let base: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let slope: [f64; 3] = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
    let inside = move |x: usize, y: usize| (x as f64 + 0.5 - cx).hypot(y as f64 + 0.5 - cy) <= r;
    let image = RgbaImage::from_fn(w, h, |x, y| {
        if inside(x, y) {
            let u = x as f64 / w as f64;
            let c = [0, 1, 2].map(|k| (base[k] + slope[k] * u).clamp(0.0, 1.0));
            [c[0], c[1], c[2], 1.0]
        } else {
            [0.0; 4]
        }
    });
    LayerTarget::new("random", image, Mask::from_fn(w, h, inside)).unwrap()
}

/// Opaque flat disk on a transparent background.
pub fn disk_target(w: usize, h: usize, cx: f64, cy: f64, r: f64, rgb: [f64; 3]) -> LayerTarget {
    let inside = move |x: usize, y: usize| (x as f64 + 0.5 - cx).hypot(y as f64 + 0.5 - cy) <= r;
    let image = RgbaImage::from_fn(w, h, |x, y| if inside(x, y) { [rgb[0], rgb[1], rgb[2], 1.0] } else { [0.0; 4] });
    LayerTarget::new("disk", image, Mask::from_fn(w, h, inside)).unwrap()
}

/// Flat disk whose alpha is the exact area coverage, estimated on a 16×16
/// subpixel grid. The mask holds pixels whose center lies in the disk.
pub fn smooth_disk_target(w: usize, h: usize, cx: f64, cy: f64, r: f64, rgb: [f64; 3]) -> LayerTarget {
    let coverage = |x: usize, y: usize| {
        let hits = (0..256)
            .filter(|k| {
                let sx = x as f64 + (k % 16) as f64 / 16.0 + 1.0 / 32.0;
                let sy = y as f64 + (k / 16) as f64 / 16.0 + 1.0 / 32.0;
                (sx - cx).hypot(sy - cy) <= r
            })
            .count();
        hits as f64 / 256.0
    };
    let image = RgbaImage::from_fn(w, h, |x, y| [rgb[0], rgb[1], rgb[2], coverage(x, y)]);
    let mask = Mask::from_fn(w, h, |x, y| (x as f64 + 0.5 - cx).hypot(y as f64 + 0.5 - cy) <= r);
    LayerTarget::new("disk", image, mask).unwrap()
}
