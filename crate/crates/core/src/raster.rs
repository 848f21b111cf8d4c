//! Soft rasterization of closed Bézier paths and painter's-order
//! compositing.
//!
//! Coverage of a primitive at a pixel center is a smoothstep of the signed
//! distance to its outline (negative inside under the nonzero winding rule),
//! so alpha is differentiable in the control points. Winding is taken on a
//! flattened polygon; band distances are refined onto the true curve.

use crate::error::{Error, Result};
use crate::scene::{bernstein, cubic_point, LayerVector, PathPrimitive, Point};

pub const DEFAULT_SMOOTHING: f64 = 1.0;
pub const DEFAULT_FLATNESS: f64 = 0.1;

const MAX_SUBDIVISIONS: usize = 256;

/// Canvas size plus the coverage model parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSettings {
    pub width: usize,
    pub height: usize,
    /// Width in pixels of the soft transition band around outlines.
    pub smoothing: f64,
    /// Maximum deviation in pixels between a curve and its flattening.
    pub flatness: f64,
}

impl RenderSettings {
    pub fn new(width: usize, height: usize) -> Self {
        RenderSettings {
            width,
            height,
            smoothing: DEFAULT_SMOOTHING,
            flatness: DEFAULT_FLATNESS,
        }
    }

    pub fn with_smoothing(mut self, smoothing: f64) -> Self {
        self.smoothing = smoothing;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid(format!(
                "canvas must be non-empty, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.smoothing > 0.0) || !self.smoothing.is_finite() {
            return Err(Error::invalid(format!("smoothing must be positive, got {}", self.smoothing)));
        }
        if !(self.flatness > 0.0) {
            return Err(Error::invalid(format!("flatness must be positive, got {}", self.flatness)));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// A closed polygon approximating a primitive's outline. Vertex `k` lies at
/// parameter `sources[k].1` of segment `sources[k].0`.
#[derive(Clone, Debug)]
pub struct Flattened {
    pub vertices: Vec<Point>,
    pub sources: Vec<(usize, f64)>,
}

impl Flattened {
    /// Absolute shoelace area.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let twice: f64 = (0..n)
            .map(|k| self.vertices[k].cross(self.vertices[(k + 1) % n]))
            .sum();
        0.5 * twice.abs()
    }

    pub fn edge(&self, k: usize) -> (Point, Point) {
        (self.vertices[k], self.vertices[(k + 1) % self.vertices.len()])
    }
}

/// Subdivision count for one cubic so the chord polygon stays within
/// `tolerance` of the curve (Wang's bound).
pub fn subdivisions(seg: &[Point; 4], tolerance: f64) -> usize {
    let d1 = (seg[0] - seg[1] * 2.0 + seg[2]).length();
    let d2 = (seg[1] - seg[2] * 2.0 + seg[3]).length();
    let m = d1.max(d2);
    let n = (0.75 * m / tolerance).sqrt().ceil();
    if n.is_finite() {
        (n as usize).clamp(1, MAX_SUBDIVISIONS)
    } else {
        MAX_SUBDIVISIONS
    }
}

pub fn flatten(prim: &PathPrimitive, tolerance: f64) -> Flattened {
    let mut vertices = Vec::new();
    let mut sources = Vec::new();
    for (j, seg) in prim.segments().enumerate() {
        let n = subdivisions(&seg, tolerance);
        for k in 0..n {
            let t = k as f64 / n as f64;
            vertices.push(cubic_point(&seg, t));
            sources.push((j, t));
        }
    }
    Flattened { vertices, sources }
}

/// Subdivision counts per segment; flattening (and hence the coverage
/// function) is smooth in the control points while these stay fixed.
pub fn flattening_signature(prim: &PathPrimitive, tolerance: f64) -> Vec<usize> {
    prim.segments().map(|s| subdivisions(&s, tolerance)).collect()
}

pub(crate) fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Distance from `p` to segment `ab` and the clamped projection parameter.
pub(crate) fn segment_distance(p: Point, a: Point, b: Point) -> (f64, f64) {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let u = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = a + ab * u;
    ((p - q).length(), u)
}

/// A pixel inside the soft band around an outline, with its nearest
/// point on the curve.
#[derive(Clone, Copy, Debug)]
pub(crate) struct BandSample {
    /// Index into the bounding-box-local buffer.
    pub local: u32,
    pub segment: u32,
    pub t: f64,
    pub signed_distance: f64,
}

/// Per-primitive alpha `opacity * coverage`, stored over the primitive's
/// dilated bounding box clipped to the canvas; zero elsewhere.
#[derive(Clone, Debug)]
pub struct AlphaMap {
    pub primitive_index: usize,
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    pub opacity: f64,
    /// Coverage in `[0, 1]`, `w * h` row-major.
    pub coverage: Vec<f64>,
    /// All control points coincide.
    pub degenerate: bool,
    pub(crate) band: Vec<BandSample>,
}

impl AlphaMap {
    fn empty(index: usize, opacity: f64, degenerate: bool) -> Self {
        AlphaMap {
            primitive_index: index,
            x0: 0,
            y0: 0,
            w: 0,
            h: 0,
            opacity,
            coverage: Vec::new(),
            degenerate,
            band: Vec::new(),
        }
    }

    pub fn alpha_at(&self, x: usize, y: usize) -> f64 {
        if x < self.x0 || y < self.y0 || x >= self.x0 + self.w || y >= self.y0 + self.h {
            return 0.0;
        }
        self.opacity * self.coverage[(y - self.y0) * self.w + (x - self.x0)]
    }

    /// Full-canvas alpha values.
    pub fn to_dense(&self, width: usize, height: usize) -> Vec<f64> {
        let mut out = vec![0.0; width * height];
        self.for_each(|idx, a| out[idx] = a, width);
        out
    }

    /// Soft area `Σ_p α(p)`, ignoring occlusion.
    pub fn total(&self) -> f64 {
        self.opacity * self.coverage.iter().sum::<f64>()
    }

    /// Calls `f(canvas_index, alpha)` for every pixel of the bounding box.
    #[inline]
    pub(crate) fn for_each(&self, mut f: impl FnMut(usize, f64), width: usize) {
        for ly in 0..self.h {
            let row = (self.y0 + ly) * width + self.x0;
            let cov = &self.coverage[ly * self.w..(ly + 1) * self.w];
            for (lx, c) in cov.iter().enumerate() {
                f(row + lx, self.opacity * c);
            }
        }
    }

    pub(crate) fn canvas_index(&self, local: usize, width: usize) -> usize {
        let ly = local / self.w;
        let lx = local % self.w;
        (self.y0 + ly) * width + self.x0 + lx
    }
}

/// Position, first and second derivative of a cubic at `t`.
fn cubic_jet(seg: &[Point; 4], t: f64) -> (Point, Point, Point) {
    let s = 1.0 - t;
    let d1 = ((seg[1] - seg[0]) * (s * s) + (seg[2] - seg[1]) * (2.0 * s * t) + (seg[3] - seg[2]) * (t * t)) * 3.0;
    let d2 = ((seg[2] - seg[1] * 2.0 + seg[0]) * s + (seg[3] - seg[2] * 2.0 + seg[1]) * t) * 6.0;
    (cubic_point(seg, t), d1, d2)
}

/// Nearest point on the closed outline to `p`, by Newton iteration on the
/// squared distance starting from `(segment, t)`, hopping across segment
/// joins when the minimum lies beyond the current segment.
fn project_to_outline(prim: &PathPrimitive, mut segment: usize, mut t: f64, p: Point) -> (usize, f64, Point, Point) {
    let n = prim.segment_count();
    let mut hops = 0;
    let mut seg = prim.segment(segment);
    for _ in 0..24 {
        let (b, d1, d2) = cubic_jet(&seg, t);
        let r = b - p;
        let g = r.dot(d1);
        let gn = d1.dot(d1);
        let mut hess = gn + r.dot(d2);
        if !(hess > 1e-12 * gn.max(1e-300)) {
            hess = gn;
        }
        if !(hess > 0.0) {
            break;
        }
        let next = t - g / hess;
        if next < 0.0 && hops < 4 && g > 0.0 {
            segment = (segment + n - 1) % n;
            seg = prim.segment(segment);
            t = 1.0;
            hops += 1;
            continue;
        }
        if next > 1.0 && hops < 4 && g < 0.0 {
            segment = (segment + 1) % n;
            seg = prim.segment(segment);
            t = 0.0;
            hops += 1;
            continue;
        }
        let next = next.clamp(0.0, 1.0);
        let done = (next - t).abs() < 1e-14;
        t = next;
        if done {
            break;
        }
    }
    let (b, d1, _) = cubic_jet(&seg, t);
    (segment, t, b, d1)
}

/// Computes `α_i(p)` for one primitive.
pub fn primitive_alpha(prim: &PathPrimitive, index: usize, settings: &RenderSettings) -> AlphaMap {
    let first = prim.points()[0];
    let degenerate = prim.points().iter().all(|p| *p == first);
    if degenerate {
        return AlphaMap::empty(index, prim.fill_opacity, true);
    }
    let outline = flatten(prim, settings.flatness);

    let s = settings.smoothing;
    let half = 0.5 * s;
    // The polygon deviates from the curve by at most the flatness, so every
    // pixel within `half` of the curve is within `reach` of the polygon.
    let reach = half + settings.flatness;
    let pad = 3.0 * s;
    let (mut lo, mut hi) = (outline.vertices[0], outline.vertices[0]);
    for v in &outline.vertices {
        lo.x = lo.x.min(v.x);
        lo.y = lo.y.min(v.y);
        hi.x = hi.x.max(v.x);
        hi.y = hi.y.max(v.y);
    }
    let pad = pad.max(reach);
    let clip = |v: f64, max: usize| v.clamp(0.0, max as f64) as usize;
    let x0 = clip((lo.x - pad).floor(), settings.width);
    let x1 = clip((hi.x + pad).ceil(), settings.width);
    let y0 = clip((lo.y - pad).floor(), settings.height);
    let y1 = clip((hi.y + pad).ceil(), settings.height);
    if x0 >= x1 || y0 >= y1 {
        return AlphaMap::empty(index, prim.fill_opacity, false);
    }
    let (w, h) = (x1 - x0, y1 - y0);
    let m = outline.vertices.len();

    // Nonzero winding of the polygon at pixel centers, one scanline at a
    // time.
    let mut winding = vec![0i32; w * h];
    let mut crossings: Vec<(f64, i32)> = Vec::with_capacity(16);
    for ly in 0..h {
        let yc = (y0 + ly) as f64 + 0.5;
        crossings.clear();
        for k in 0..m {
            let (a, b) = outline.edge(k);
            if (a.y <= yc) != (b.y <= yc) {
                let x = a.x + (yc - a.y) / (b.y - a.y) * (b.x - a.x);
                crossings.push((x, if b.y > a.y { 1 } else { -1 }));
            }
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut wn = 0;
        let mut next = 0;
        let row = &mut winding[ly * w..(ly + 1) * w];
        for (lx, cell) in row.iter_mut().enumerate() {
            let xc = (x0 + lx) as f64 + 0.5;
            while next < crossings.len() && crossings[next].0 < xc {
                wn += crossings[next].1;
                next += 1;
            }
            *cell = wn;
        }
    }
    let mut coverage: Vec<f64> = winding.iter().map(|wn| if *wn != 0 { 1.0 } else { 0.0 }).collect();

    // Polygon distance, only near each edge, to find band candidates.
    let mut nearest = vec![f64::INFINITY; w * h];
    let mut nearest_edge = vec![u32::MAX; w * h];
    for k in 0..m {
        let (a, b) = outline.edge(k);
        let px_lo = ((a.x.min(b.x) - reach - 0.5).ceil()).max(x0 as f64);
        let px_hi = ((a.x.max(b.x) + reach - 0.5).floor()).min(x1 as f64 - 1.0);
        let py_lo = ((a.y.min(b.y) - reach - 0.5).ceil()).max(y0 as f64);
        let py_hi = ((a.y.max(b.y) + reach - 0.5).floor()).min(y1 as f64 - 1.0);
        if px_lo > px_hi || py_lo > py_hi {
            continue;
        }
        for py in py_lo as usize..=py_hi as usize {
            let yc = py as f64 + 0.5;
            for px in px_lo as usize..=px_hi as usize {
                let p = Point::new(px as f64 + 0.5, yc);
                let (d, _) = segment_distance(p, a, b);
                let local = (py - y0) * w + (px - x0);
                if d < nearest[local] {
                    nearest[local] = d;
                    nearest_edge[local] = k as u32;
                }
            }
        }
    }

    // Winding on the negative-cross side of a directed edge exceeds the
    // positive side by one.
    let step_across = |side: f64| if side < 0.0 { 1 } else { -1 };
    let mut band = Vec::new();
    for local in 0..w * h {
        if !(nearest[local] < reach) {
            continue;
        }
        let k = nearest_edge[local] as usize;
        let (a, b) = outline.edge(k);
        let p = Point::new((x0 + local % w) as f64 + 0.5, (y0 + local / w) as f64 + 0.5);
        let (_, u) = segment_distance(p, a, b);
        let (seg_a, t_a) = outline.sources[k];
        let (seg_b, t_b) = outline.sources[(k + 1) % m];
        let t_end = if seg_b == seg_a { t_b } else { 1.0 };
        let (segment, t, q, tangent) = project_to_outline(prim, seg_a, t_a + u * (t_end - t_a), p);
        let dist = p.distance(q);
        let side_poly = (b - a).cross(p - a);
        let mut side_curve = tangent.cross(p - q);
        if dist == 0.0 || side_curve == 0.0 {
            side_curve = side_poly;
        }
        let mut here = winding[local];
        if (side_curve < 0.0) != (side_poly < 0.0) {
            // Between chord and curve: the polygon put this pixel on the
            // wrong side of the outline.
            here -= step_across(side_poly);
        }
        let opposite = here - step_across(side_curve);
        let inside = here != 0;
        if inside == (opposite != 0) {
            coverage[local] = if inside { 1.0 } else { 0.0 };
            continue;
        }
        if dist >= half {
            coverage[local] = if inside { 1.0 } else { 0.0 };
            continue;
        }
        let signed = if inside { -dist } else { dist };
        coverage[local] = smoothstep(0.5 - signed / s);
        band.push(BandSample {
            local: local as u32,
            segment: segment as u32,
            t,
            signed_distance: signed,
        });
    }

    AlphaMap {
        primitive_index: index,
        x0,
        y0,
        w,
        h,
        opacity: prim.fill_opacity,
        coverage,
        degenerate,
        band,
    }
}

pub fn rasterize_layer(layer: &LayerVector, settings: &RenderSettings) -> Vec<AlphaMap> {
    layer
        .primitives
        .iter()
        .enumerate()
        .map(|(i, p)| primitive_alpha(p, i, settings))
        .collect()
}

/// Straight (non-premultiplied) color with composite coverage.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[f64; 3]>,
    pub alpha: Vec<f64>,
}

impl RenderOutput {
    pub fn transparent(width: usize, height: usize) -> Self {
        RenderOutput {
            width,
            height,
            rgb: vec![[0.0; 3]; width * height],
            alpha: vec![0.0; width * height],
        }
    }

    pub fn premultiplied(&self, idx: usize) -> [f64; 3] {
        let a = self.alpha[idx];
        self.rgb[idx].map(|c| c * a)
    }

    /// Composites over a solid background color.
    pub fn over(&self, background: [f64; 3]) -> Vec<[f64; 3]> {
        (0..self.alpha.len())
            .map(|i| {
                let a = self.alpha[i];
                let c = self.rgb[i];
                [0, 1, 2].map(|ch| c[ch] * a + background[ch] * (1.0 - a))
            })
            .collect()
    }

    fn from_premultiplied(width: usize, height: usize, premul: Vec<[f64; 3]>, alpha: Vec<f64>) -> Self {
        let rgb = premul
            .iter()
            .zip(&alpha)
            .map(|(c, &a)| if a > 0.0 { c.map(|v| (v / a).clamp(0.0, 1.0)) } else { [0.0; 3] })
            .collect();
        RenderOutput {
            width,
            height,
            rgb,
            alpha,
        }
    }
}

/// Premultiplied back-to-front accumulation.
pub(crate) struct Accumulation {
    pub premul: Vec<[f64; 3]>,
    pub alpha: Vec<f64>,
}

pub(crate) fn accumulate(maps: &[AlphaMap], colors: &[[f64; 3]], settings: &RenderSettings) -> Accumulation {
    let n = settings.pixel_count();
    let mut premul = vec![[0.0; 3]; n];
    let mut alpha = vec![0.0; n];
    for (map, c) in maps.iter().zip(colors) {
        map.for_each(
            |idx, a| {
                if a > 0.0 {
                    let keep = 1.0 - a;
                    let dst = &mut premul[idx];
                    dst[0] = c[0] * a + keep * dst[0];
                    dst[1] = c[1] * a + keep * dst[1];
                    dst[2] = c[2] * a + keep * dst[2];
                    alpha[idx] = a + keep * alpha[idx];
                }
            },
            settings.width,
        );
    }
    Accumulation { premul, alpha }
}

/// Back-to-front over-compositing of a layer onto a transparent canvas.
pub fn composite(layer: &LayerVector, settings: &RenderSettings) -> RenderOutput {
    let maps = rasterize_layer(layer, settings);
    composite_maps(layer, &maps, settings)
}

pub fn composite_maps(layer: &LayerVector, maps: &[AlphaMap], settings: &RenderSettings) -> RenderOutput {
    let colors: Vec<[f64; 3]> = layer.primitives.iter().map(|p| p.fill_rgb).collect();
    let acc = accumulate(maps, &colors, settings);
    RenderOutput::from_premultiplied(settings.width, settings.height, acc.premul, acc.alpha)
}

/// Cumulative occlusion `O_i` above primitive `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct OcclusionField {
    pub depth_index: usize,
    pub values: Vec<f64>,
}

/// One occlusion field per primitive (index-aligned with the layer),
/// computed in a single top-to-bottom pass.
pub fn cumulative_occlusion(layer: &LayerVector, settings: &RenderSettings) -> Vec<OcclusionField> {
    let maps = rasterize_layer(layer, settings);
    let mut running = vec![0.0; settings.pixel_count()];
    let mut fields = Vec::with_capacity(maps.len());
    for map in maps.iter().rev() {
        fields.push(OcclusionField {
            depth_index: map.primitive_index,
            values: running.clone(),
        });
        map.for_each(|idx, a| running[idx] += a * (1.0 - running[idx]), settings.width);
    }
    fields.reverse();
    fields
}

/// Visible alpha area `C_i = Σ_p α_i(p)(1 - O_i(p))` of every primitive.
pub fn contribution_scores(layer: &LayerVector, settings: &RenderSettings) -> Vec<f64> {
    let maps = rasterize_layer(layer, settings);
    contribution_scores_from_maps(&maps, settings)
}

pub fn contribution_scores_from_maps(maps: &[AlphaMap], settings: &RenderSettings) -> Vec<f64> {
    let mut occlusion = vec![0.0; settings.pixel_count()];
    let mut scores = vec![0.0; maps.len()];
    for (i, map) in maps.iter().enumerate().rev() {
        let mut visible = 0.0;
        map.for_each(
            |idx, a| {
                let o = occlusion[idx];
                visible += a * (1.0 - o);
                occlusion[idx] = o + a * (1.0 - o);
            },
            settings.width,
        );
        scores[i] = visible;
    }
    scores
}

/// Gradient of a scalar with respect to every control point of one
/// primitive, given `dL/dcoverage` at each band pixel.
pub(crate) fn backprop_coverage_to_points(
    prim: &PathPrimitive,
    map: &AlphaMap,
    settings: &RenderSettings,
    mut d_coverage: impl FnMut(usize) -> f64,
    out: &mut [Point],
) {
    let s = settings.smoothing;
    for sample in &map.band {
        let local = sample.local as usize;
        let g = d_coverage(map.canvas_index(local, settings.width));
        if g == 0.0 {
            continue;
        }
        let t = 0.5 - sample.signed_distance / s;
        // d coverage / d signed distance
        let dcov_dd = -6.0 * t * (1.0 - t) / s;
        let px = Point::new(
            (map.x0 + local % map.w) as f64 + 0.5,
            (map.y0 + local / map.w) as f64 + 0.5,
        );
        let segment = sample.segment as usize;
        let q = cubic_point(&prim.segment(segment), sample.t);
        let dist = px.distance(q);
        if dist <= 0.0 {
            continue;
        }
        // The projection parameter is stationary, so only the explicit
        // dependence of the nearest point on the control points remains:
        // d dist / d P_m = -(p - q)/|p - q| * b_m(t).
        let normal = (px - q) * (1.0 / dist);
        let sign = if sample.signed_distance < 0.0 { -1.0 } else { 1.0 };
        let scale = -g * dcov_dd * sign;
        for (idx, bw) in prim.segment_indices(segment).into_iter().zip(bernstein(sample.t)) {
            if bw != 0.0 {
                out[idx] = out[idx] + normal * (scale * bw);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::make_seed_primitive;

    fn disk(cx: f64, cy: f64, r: f64, rgba: [f64; 4]) -> PathPrimitive {
        make_seed_primitive(Point::new(cx, cy), r, rgba, 4).unwrap()
    }

    /// Hard coverage of a circle by 16x16 supersampling of each pixel.
    fn supersampled_circle_area(cx: f64, cy: f64, r: f64, w: usize, h: usize) -> f64 {
        let mut hits = 0usize;
        for y in 0..h {
            for x in 0..w {
                for sy in 0..16 {
                    for sx in 0..16 {
                        let px = x as f64 + (sx as f64 + 0.5) / 16.0;
                        let py = y as f64 + (sy as f64 + 0.5) / 16.0;
                        if (px - cx).hypot(py - cy) <= r {
                            hits += 1;
                        }
                    }
                }
            }
        }
        hits as f64 / 256.0
    }

    #[test]
    fn transparent_primitive_has_zero_alpha() {
        let s = RenderSettings::new(32, 32);
        let map = primitive_alpha(&disk(16.0, 16.0, 6.0, [1.0, 0.0, 0.0, 0.0]), 0, &s);
        assert!(map.to_dense(32, 32).iter().all(|a| *a == 0.0));
    }

    #[test]
    fn opaque_disk_area_matches_supersampling() {
        let s = RenderSettings::new(64, 64);
        let map = primitive_alpha(&disk(32.0, 32.0, 10.0, [1.0, 1.0, 1.0, 1.0]), 0, &s);
        let oracle = supersampled_circle_area(32.0, 32.0, 10.0, 64, 64);
        let total = map.total();
        assert!((total - oracle).abs() / oracle < 0.02, "{total} vs {oracle}");
        let pi_r2 = std::f64::consts::PI * 100.0;
        assert!((total - pi_r2).abs() / pi_r2 < 0.02);
    }

    #[test]
    fn offscreen_disk_is_empty() {
        let s = RenderSettings::new(16, 16);
        let map = primitive_alpha(&disk(-40.0, 8.0, 5.0, [1.0; 4]), 0, &s);
        assert_eq!(map.total(), 0.0);
        assert!(map.to_dense(16, 16).iter().all(|a| *a == 0.0));
    }

    #[test]
    fn degenerate_path_is_flagged() {
        let p = PathPrimitive::new(vec![Point::new(3.0, 3.0); 12], [0.2; 3], 1.0).unwrap();
        let map = primitive_alpha(&p, 0, &RenderSettings::new(8, 8));
        assert!(map.degenerate);
        assert_eq!(map.total(), 0.0);
    }

    #[test]
    fn alpha_vanishes_outside_dilated_bounds() {
        let s = RenderSettings::new(40, 40);
        let prim = disk(20.0, 20.0, 5.0, [1.0; 4]);
        let map = primitive_alpha(&prim, 0, &s);
        let dense = map.to_dense(40, 40);
        for y in 0..40 {
            for x in 0..40 {
                let c = Point::new(x as f64 + 0.5, y as f64 + 0.5);
                if c.distance(Point::new(20.0, 20.0)) > 5.0 + 3.0 * s.smoothing + 1.0 {
                    assert_eq!(dense[y * 40 + x], 0.0);
                }
            }
        }
    }

    #[test]
    fn empty_layer_is_transparent() {
        let s = RenderSettings::new(8, 8);
        let out = composite(&LayerVector::new("x"), &s);
        assert!(out.alpha.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn full_canvas_path_reproduces_color() {
        let s = RenderSettings::new(16, 16);
        let c = [0.2, 0.4, 0.6];
        let prim = PathPrimitive::from_segments(
            &line_square(Point::new(-4.0, -4.0), 24.0),
            c,
            1.0,
        )
        .unwrap();
        let out = composite(&LayerVector::with_primitives("x", vec![prim]), &s);
        for (rgb, a) in out.rgb.iter().zip(&out.alpha) {
            assert_eq!(*a, 1.0);
            for ch in 0..3 {
                assert!((rgb[ch] - c[ch]).abs() < 1e-12);
            }
        }
    }

    fn line_square(origin: Point, size: f64) -> Vec<[Point; 4]> {
        let corners = [
            origin,
            origin + Point::new(size, 0.0),
            origin + Point::new(size, size),
            origin + Point::new(0.0, size),
        ];
        (0..4)
            .map(|k| {
                let a = corners[k];
                let b = corners[(k + 1) % 4];
                [a, a + (b - a) * (1.0 / 3.0), a + (b - a) * (2.0 / 3.0), b]
            })
            .collect()
    }

    #[test]
    fn topmost_field_is_zero_and_saturates_under_opaque_cover() {
        let s = RenderSettings::new(32, 32);
        let bottom = disk(16.0, 16.0, 5.0, [1.0, 0.0, 0.0, 1.0]);
        let top = disk(16.0, 16.0, 10.0, [0.0, 0.0, 1.0, 1.0]);
        let layer = LayerVector::with_primitives("x", vec![bottom, top]);
        let fields = cumulative_occlusion(&layer, &s);
        assert!(fields[1].values.iter().all(|v| *v == 0.0));
        // Interior of the top disk, away from its band.
        for y in 10..22 {
            for x in 10..22 {
                assert_eq!(fields[0].values[y * 32 + x], 1.0);
            }
        }
        let scores = contribution_scores(&layer, &s);
        assert_eq!(scores[0], 0.0);
    }

    #[test]
    fn isolated_primitive_score_equals_alpha_sum() {
        let s = RenderSettings::new(32, 32);
        let prim = disk(10.0, 12.0, 6.0, [0.3, 0.3, 0.3, 0.7]);
        let layer = LayerVector::with_primitives("x", vec![prim.clone()]);
        let scores = contribution_scores(&layer, &s);
        let sum: f64 = primitive_alpha(&prim, 0, &s).total();
        assert!((scores[0] - sum).abs() < 1e-6);
    }

    #[test]
    fn swapping_disjoint_primitives_keeps_render() {
        let s = RenderSettings::new(32, 32);
        let a = disk(8.0, 8.0, 4.0, [1.0, 0.0, 0.0, 0.8]);
        let b = disk(24.0, 24.0, 4.0, [0.0, 1.0, 0.0, 0.6]);
        let ab = composite(&LayerVector::with_primitives("x", vec![a.clone(), b.clone()]), &s);
        let ba = composite(&LayerVector::with_primitives("x", vec![b, a]), &s);
        for i in 0..ab.alpha.len() {
            assert!((ab.alpha[i] - ba.alpha[i]).abs() < 1e-9);
            for ch in 0..3 {
                assert!((ab.rgb[i][ch] - ba.rgb[i][ch]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn swapping_overlapping_primitives_changes_render() {
        let s = RenderSettings::new(32, 32);
        let a = disk(14.0, 16.0, 6.0, [1.0, 0.0, 0.0, 1.0]);
        let b = disk(18.0, 16.0, 6.0, [0.0, 1.0, 0.0, 1.0]);
        let ab = composite(&LayerVector::with_primitives("x", vec![a.clone(), b.clone()]), &s);
        let ba = composite(&LayerVector::with_primitives("x", vec![b, a]), &s);
        let idx = 16 * 32 + 16;
        assert!((ab.rgb[idx][0] - ba.rgb[idx][0]).abs() > 0.5);
    }

    #[test]
    fn subdivision_count_grows_with_curvature() {
        let small = make_seed_primitive(Point::new(0.0, 0.0), 5.0, [0.0; 4], 4).unwrap();
        let large = make_seed_primitive(Point::new(0.0, 0.0), 50.0, [0.0; 4], 4).unwrap();
        let n_small: usize = flattening_signature(&small, 0.1).iter().sum();
        let n_large: usize = flattening_signature(&large, 0.1).iter().sum();
        assert!(n_large > n_small);
        // Flattening error stays within tolerance for the large circle.
        let flat = flatten(&large, 0.1);
        let n = flat.vertices.len();
        for k in 0..n {
            let (a, b) = flat.edge(k);
            let mid = (a + b) * 0.5;
            assert!(50.0 - mid.length() < 0.1 + 0.01);
        }
    }
}
