//! Data model: closed Bézier path primitives, per-layer stacks, layer
//! targets, and the assembled multi-layer document.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of cubic segments in a closed seed path.
pub const DEFAULT_SEGMENTS: usize = 4;

/// Default seed radius in pixels.
pub const DEFAULT_SEED_RADIUS: f64 = 5.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn length(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).length()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

/// A single filled, closed path made of cubic Bézier segments.
///
/// Control points are stored once per shared vertex: segment `j` uses
/// `points[3j..3j+3]` plus `points[3(j+1) mod 3n]` as its end point, so
/// every segment starts where the previous one ends and the last segment
/// ends on the first point. Closure therefore cannot drift under updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PrimitiveRepr", into = "PrimitiveRepr")]
pub struct PathPrimitive {
    points: Vec<Point>,
    pub fill_rgb: [f64; 3],
    pub fill_opacity: f64,
}

#[derive(Serialize, Deserialize)]
struct PrimitiveRepr {
    points: Vec<Point>,
    fill_rgb: [f64; 3],
    fill_opacity: f64,
}

impl TryFrom<PrimitiveRepr> for PathPrimitive {
    type Error = Error;
    fn try_from(r: PrimitiveRepr) -> Result<Self> {
        PathPrimitive::new(r.points, r.fill_rgb, r.fill_opacity)
    }
}

impl From<PathPrimitive> for PrimitiveRepr {
    fn from(p: PathPrimitive) -> Self {
        PrimitiveRepr {
            points: p.points,
            fill_rgb: p.fill_rgb,
            fill_opacity: p.fill_opacity,
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {v} is outside [0, 1]")))
    }
}

impl PathPrimitive {
    /// Builds a primitive from its shared control-point ring (`3 * segments`
    /// points).
    pub fn new(points: Vec<Point>, fill_rgb: [f64; 3], fill_opacity: f64) -> Result<Self> {
        if points.is_empty() || points.len() % 3 != 0 {
            return Err(Error::invalid(format!(
                "a closed cubic path needs a positive multiple of 3 control points, got {}",
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("non-finite control point {p:?}")));
        }
        for (c, name) in fill_rgb.iter().zip(["red", "green", "blue"]) {
            check_unit(name, *c)?;
        }
        check_unit("fill_opacity", fill_opacity)?;
        Ok(PathPrimitive {
            points,
            fill_rgb,
            fill_opacity,
        })
    }

    /// Builds a primitive from explicit 4-point segments. Consecutive
    /// segments must share endpoints exactly and the path must close.
    pub fn from_segments(segments: &[[Point; 4]], fill_rgb: [f64; 3], fill_opacity: f64) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("path has no segments"));
        }
        let n = segments.len();
        let mut points = Vec::with_capacity(3 * n);
        for (j, seg) in segments.iter().enumerate() {
            let next = &segments[(j + 1) % n];
            if seg[3] != next[0] {
                return Err(Error::invalid(format!(
                    "segment {j} ends at {:?} but segment {} starts at {:?}",
                    seg[3],
                    (j + 1) % n,
                    next[0]
                )));
            }
            points.extend_from_slice(&seg[..3]);
        }
        PathPrimitive::new(points, fill_rgb, fill_opacity)
    }

    pub fn segment_count(&self) -> usize {
        self.points.len() / 3
    }

    /// The shared control-point ring.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [Point] {
        &mut self.points
    }

    /// Indices into [`points`](Self::points) of the four control points of
    /// segment `j`.
    pub fn segment_indices(&self, j: usize) -> [usize; 4] {
        let m = self.points.len();
        [3 * j, 3 * j + 1, 3 * j + 2, (3 * j + 3) % m]
    }

    pub fn segment(&self, j: usize) -> [Point; 4] {
        self.segment_indices(j).map(|i| self.points[i])
    }

    pub fn segments(&self) -> impl Iterator<Item = [Point; 4]> + '_ {
        (0..self.segment_count()).map(|j| self.segment(j))
    }

    /// Checks that each segment's last point is the next segment's first.
    pub fn is_closed(&self) -> bool {
        let n = self.segment_count();
        (0..n).all(|j| self.segment(j)[3] == self.segment((j + 1) % n)[0])
    }

    pub fn rgba(&self) -> [f64; 4] {
        let [r, g, b] = self.fill_rgb;
        [r, g, b, self.fill_opacity]
    }

    /// Clamps color and opacity into `[0, 1]`.
    pub fn clamp_paint(&mut self) {
        for c in &mut self.fill_rgb {
            *c = c.clamp(0.0, 1.0);
        }
        self.fill_opacity = self.fill_opacity.clamp(0.0, 1.0);
    }

    /// Axis-aligned bounds of the control polygon, which contain the curve.
    pub fn control_bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    pub fn translate(&mut self, offset: Point) {
        for p in &mut self.points {
            *p = *p + offset;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for p in &mut self.points {
            *p = *p * factor;
        }
    }
}

/// Evaluates a cubic Bézier at `t`.
pub fn cubic_point(seg: &[Point; 4], t: f64) -> Point {
    let w = bernstein(t);
    seg[0] * w[0] + seg[1] * w[1] + seg[2] * w[2] + seg[3] * w[3]
}

/// Cubic Bernstein basis at `t`.
pub fn bernstein(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    [s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t]
}

/// A closed circle approximation of `segments` cubic arcs, filled with the
/// straight-alpha `color`.
pub fn make_seed_primitive(center: Point, radius: f64, color: [f64; 4], segments: usize) -> Result<PathPrimitive> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!("seed radius must be positive, got {radius}")));
    }
    if segments == 0 {
        return Err(Error::invalid("seed path needs at least one segment"));
    }
    let step = 2.0 * PI / segments as f64;
    let kappa = 4.0 / 3.0 * (step / 4.0).tan();
    let mut points = Vec::with_capacity(3 * segments);
    for k in 0..segments {
        let a0 = k as f64 * step;
        let a1 = a0 + step;
        let p0 = center + Point::new(a0.cos(), a0.sin()) * radius;
        let p3 = center + Point::new(a1.cos(), a1.sin()) * radius;
        let t0 = Point::new(-a0.sin(), a0.cos()) * (kappa * radius);
        let t1 = Point::new(-a1.sin(), a1.cos()) * (kappa * radius);
        points.push(p0);
        points.push(p0 + t0);
        points.push(p3 - t1);
    }
    PathPrimitive::new(points, [color[0], color[1], color[2]], color[3])
}

/// Ordered primitive stack of one layer; index 0 renders first (bottom).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerVector {
    pub layer_id: String,
    pub primitives: Vec<PathPrimitive>,
}

impl LayerVector {
    pub fn new(layer_id: impl Into<String>) -> Self {
        LayerVector {
            layer_id: layer_id.into(),
            primitives: Vec::new(),
        }
    }

    pub fn with_primitives(layer_id: impl Into<String>, primitives: Vec<PathPrimitive>) -> Self {
        LayerVector {
            layer_id: layer_id.into(),
            primitives,
        }
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }
}

/// Straight-alpha RGBA raster with components in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbaImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 4]>,
}

impl RgbaImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 4]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(RgbaImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: [f64; 4]) -> Self {
        RgbaImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 4]) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        RgbaImage { width, height, pixels }
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 4] {
        self.pixels[y * self.width + x]
    }
}

/// Binary mask, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} mask values for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Mask { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Mask { width, height, bits }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// A layer's raster target and its binary support mask.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTarget {
    pub layer_id: String,
    pub image: RgbaImage,
    pub mask: Mask,
}

impl LayerTarget {
    pub fn new(layer_id: impl Into<String>, image: RgbaImage, mask: Mask) -> Result<Self> {
        let layer_id = layer_id.into();
        if image.width != mask.width || image.height != mask.height {
            return Err(Error::DimensionMismatch(format!(
                "layer `{layer_id}`: image is {}x{} but mask is {}x{}",
                image.width, image.height, mask.width, mask.height
            )));
        }
        if image.width == 0 || image.height == 0 {
            return Err(Error::invalid(format!("layer `{layer_id}` has an empty canvas")));
        }
        if mask.count() == 0 {
            return Err(Error::invalid(format!("layer `{layer_id}` has an empty mask")));
        }
        if let Some(px) = image
            .pixels
            .iter()
            .find(|px| px.iter().any(|c| !(0.0..=1.0).contains(c)))
        {
            return Err(Error::invalid(format!(
                "layer `{layer_id}` has a pixel outside [0, 1]: {px:?}"
            )));
        }
        Ok(LayerTarget { layer_id, image, mask })
    }

    pub fn width(&self) -> usize {
        self.image.width
    }

    pub fn height(&self) -> usize {
        self.image.height
    }
}

/// Where a document layer came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub image: String,
    pub mask: String,
    pub z: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentLayer {
    pub vector: LayerVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// The full vector result: layers stacked back (index 0) to front.
///
/// Control points may lie outside the canvas; clipping happens at render.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorDocument {
    pub canvas_width: usize,
    pub canvas_height: usize,
    pub layers: Vec<DocumentLayer>,
}

impl VectorDocument {
    pub fn new(canvas_width: usize, canvas_height: usize) -> Self {
        VectorDocument {
            canvas_width,
            canvas_height,
            layers: Vec::new(),
        }
    }

    pub fn push_layer(&mut self, vector: LayerVector, provenance: Option<Provenance>) {
        self.layers.push(DocumentLayer { vector, provenance });
    }

    pub fn primitive_count(&self) -> usize {
        self.layers.iter().map(|l| l.vector.len()).sum()
    }

    /// All primitives of all layers in global paint order.
    pub fn flattened(&self) -> LayerVector {
        LayerVector::with_primitives(
            "document",
            self.layers
                .iter()
                .flat_map(|l| l.vector.primitives.iter().cloned())
                .collect(),
        )
    }
}
