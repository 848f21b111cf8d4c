//! Pruning of low-value primitives and error-driven addition of new ones.

use std::collections::VecDeque;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::Objective;
use crate::raster::{composite_maps, contribution_scores_from_maps, rasterize_layer, AlphaMap, RenderSettings};
use crate::scene::{make_seed_primitive, LayerTarget, LayerVector, Point, DEFAULT_SEED_RADIUS, DEFAULT_SEGMENTS};

pub const DEFAULT_TAU_P: f64 = 10.0;
pub const DEFAULT_TEMPERATURE: f64 = 0.5;
pub const DEFAULT_TARGET_LOSS: f64 = 1e-3;
pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_SEED_DELTA: f64 = 1e-3;
pub const DEFAULT_N_MIN: usize = 5;
pub const DEFAULT_N_MAX: usize = 100;
pub const DEFAULT_ADAPT_START: usize = 200;
pub const DEFAULT_ADAPT_INTERVAL: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneStrategy {
    OcclusionAware,
    Area,
    Opacity,
    Oracle,
}

impl PruneStrategy {
    pub const ALL: [PruneStrategy; 4] = [
        PruneStrategy::OcclusionAware,
        PruneStrategy::Area,
        PruneStrategy::Opacity,
        PruneStrategy::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PruneStrategy::OcclusionAware => "occlusion_aware",
            PruneStrategy::Area => "area",
            PruneStrategy::Opacity => "opacity",
            PruneStrategy::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for PruneStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PruneStrategy::ALL
            .into_iter()
            .find(|p| p.name() == s || p.name().replace('_', "-") == s)
            .ok_or_else(|| Error::invalid(format!("unknown pruning strategy `{s}`")))
    }
}

impl std::fmt::Display for PruneStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub strategy: PruneStrategy,
    /// Score threshold; primitives scoring strictly below it are removed.
    pub tau_p: f64,
    /// When set, removes this fraction of the layer instead.
    pub ratio: Option<f64>,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            strategy: PruneStrategy::OcclusionAware,
            tau_p: DEFAULT_TAU_P,
            ratio: None,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_p >= 0.0) || !self.tau_p.is_finite() {
            return Err(Error::invalid(format!("tau_p must be a finite value >= 0, got {}", self.tau_p)));
        }
        if let Some(r) = self.ratio {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid(format!("prune ratio must lie in [0, 1], got {r}")));
            }
            if r == 1.0 {
                return Err(Error::invalid("prune ratio 1 would remove every primitive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PruneOutcome {
    pub layer: LayerVector,
    /// Indices into the input layer, ascending.
    pub removed: Vec<usize>,
    /// Score of every input primitive under the chosen strategy.
    pub scores: Vec<f64>,
}

/// Visible alpha area of each primitive.
pub fn occlusion_scores(maps: &[AlphaMap], settings: &RenderSettings) -> Vec<f64> {
    contribution_scores_from_maps(maps, settings)
}

/// Soft area `Σ_p α_i(p)`, ignoring anything above.
pub fn area_scores(maps: &[AlphaMap]) -> Vec<f64> {
    maps.iter().map(AlphaMap::total).collect()
}

pub fn opacity_scores(layer: &LayerVector) -> Vec<f64> {
    layer.primitives.iter().map(|p| p.fill_opacity).collect()
}

/// Leave-one-out render change: mean squared difference over the canvas of
/// premultiplied RGBA with and without each primitive.
///
/// Only pixels inside a candidate's bounding box can change, so each
/// candidate recomposites the stack over that box alone.
pub fn oracle_scores(layer: &LayerVector, maps: &[AlphaMap], settings: &RenderSettings) -> Vec<f64> {
    let denom = 4.0 * settings.pixel_count() as f64;
    let mut with = Vec::new();
    let mut without = Vec::new();
    maps.iter()
        .enumerate()
        .map(|(i, cand)| {
            if cand.w == 0 {
                return 0.0;
            }
            with.clear();
            with.resize(cand.w * cand.h, [0.0f64; 4]);
            without.clear();
            without.resize(cand.w * cand.h, [0.0f64; 4]);
            for (j, map) in maps.iter().enumerate() {
                let xa = map.x0.max(cand.x0);
                let xb = (map.x0 + map.w).min(cand.x0 + cand.w);
                let ya = map.y0.max(cand.y0);
                let yb = (map.y0 + map.h).min(cand.y0 + cand.h);
                if xa >= xb || ya >= yb {
                    continue;
                }
                let c = layer.primitives[j].fill_rgb;
                for y in ya..yb {
                    for x in xa..xb {
                        let a = map.opacity * map.coverage[(y - map.y0) * map.w + (x - map.x0)];
                        if a == 0.0 {
                            continue;
                        }
                        let local = (y - cand.y0) * cand.w + (x - cand.x0);
                        let over = |px: &mut [f64; 4]| {
                            for ch in 0..3 {
                                px[ch] = c[ch] * a + (1.0 - a) * px[ch];
                            }
                            px[3] = a + (1.0 - a) * px[3];
                        };
                        over(&mut with[local]);
                        if j != i {
                            over(&mut without[local]);
                        }
                    }
                }
            }
            let sq: f64 = with
                .iter()
                .zip(&without)
                .map(|(a, b)| (0..4).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>())
                .sum();
            sq / denom
        })
        .collect()
}

pub fn strategy_scores(strategy: PruneStrategy, layer: &LayerVector, maps: &[AlphaMap], settings: &RenderSettings) -> Vec<f64> {
    match strategy {
        PruneStrategy::OcclusionAware => occlusion_scores(maps, settings),
        PruneStrategy::Area => area_scores(maps),
        PruneStrategy::Opacity => opacity_scores(layer),
        PruneStrategy::Oracle => oracle_scores(layer, maps, settings),
    }
}

/// Indices of the `k` lowest scores; ties go to the lower (deeper) index.
fn lowest(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order.truncate(k);
    order
}

fn without(layer: &LayerVector, removed: &[usize]) -> LayerVector {
    let mut drop = vec![false; layer.len()];
    for &i in removed {
        drop[i] = true;
    }
    LayerVector::with_primitives(
        layer.layer_id.clone(),
        layer
            .primitives
            .iter()
            .zip(&drop)
            .filter(|(_, d)| !**d)
            .map(|(p, _)| p.clone())
            .collect(),
    )
}

/// Removes primitives by score, preserving the order of survivors.
pub fn prune(layer: &LayerVector, target: &LayerTarget, cfg: &PruneConfig, settings: &RenderSettings) -> Result<PruneOutcome> {
    cfg.validate()?;
    if layer.is_empty() {
        return Err(Error::invalid(format!("layer `{}` has no primitives to prune", layer.layer_id)));
    }
    if target.width() != settings.width || target.height() != settings.height {
        return Err(Error::DimensionMismatch(format!(
            "layer `{}` is {}x{} but the canvas is {}x{}",
            target.layer_id,
            target.width(),
            target.height(),
            settings.width,
            settings.height
        )));
    }
    let maps = rasterize_layer(layer, settings);
    let scores = strategy_scores(cfg.strategy, layer, &maps, settings);
    let mut removed = match cfg.ratio {
        None => (0..layer.len()).filter(|&i| scores[i] < cfg.tau_p).collect(),
        Some(ratio) => {
            let k = ((ratio * layer.len() as f64) + 1e-9).floor() as usize;
            if cfg.strategy == PruneStrategy::Oracle {
                greedy_oracle(layer, maps, settings, k)
            } else {
                lowest(&scores, k)
            }
        }
    };
    removed.sort_unstable();
    Ok(PruneOutcome {
        layer: without(layer, &removed),
        removed,
        scores,
    })
}

/// Removes `k` primitives one at a time, rescoring the survivors after
/// every removal.
fn greedy_oracle(layer: &LayerVector, mut maps: Vec<AlphaMap>, settings: &RenderSettings, k: usize) -> Vec<usize> {
    let mut current = layer.clone();
    let mut original: Vec<usize> = (0..layer.len()).collect();
    let mut removed = Vec::with_capacity(k);
    for _ in 0..k {
        let scores = oracle_scores(&current, &maps, settings);
        let pick = lowest(&scores, 1)[0];
        removed.push(original.remove(pick));
        current.primitives.remove(pick);
        maps.remove(pick);
    }
    removed
}

/// Per-pixel importance for placing new primitives.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Pixels eligible for sampling.
    pub mask: Vec<bool>,
}

impl ErrorField {
    /// No positive value: sampling falls back to uniform over the mask.
    pub fn is_degenerate(&self) -> bool {
        !self.values.iter().any(|v| *v > 0.0)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Gradient magnitude of an RGB image by central differences with
/// replicated borders, combined over channels.
pub fn gradient_magnitude(rgb: &[[f64; 3]], width: usize, height: usize) -> Vec<f64> {
    let at = |x: usize, y: usize| rgb[y * width + x];
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(height - 1));
        for x in 0..width {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(width - 1));
            let mut sq = 0.0;
            for ch in 0..3 {
                let gx = 0.5 * (at(xr, y)[ch] - at(xl, y)[ch]);
                let gy = 0.5 * (at(x, yd)[ch] - at(x, yu)[ch]);
                sq += gx * gx + gy * gy;
            }
            out.push(sq.sqrt());
        }
    }
    out
}

/// `E(p) = Σ_ch (render - target)^2 · (1 + |∇target|)` inside the mask.
pub fn build_error_field(layer: &LayerVector, objective: &Objective, target: &LayerTarget) -> ErrorField {
    let settings = &objective.settings;
    let maps = rasterize_layer(layer, settings);
    error_field_from_maps(layer, &maps, objective, target)
}

pub fn error_field_from_maps(layer: &LayerVector, maps: &[AlphaMap], objective: &Objective, target: &LayerTarget) -> ErrorField {
    let settings = &objective.settings;
    let render = composite_maps(layer, maps, settings);
    let premul: Vec<[f64; 3]> = (0..settings.pixel_count()).map(|i| render.premultiplied(i)).collect();
    let out = objective.composited(&premul, &render.alpha);
    let reference = objective.reference();
    let grad = gradient_magnitude(reference, settings.width, settings.height);
    let values = (0..settings.pixel_count())
        .map(|i| {
            if !target.mask.bits[i] {
                return 0.0;
            }
            let err: f64 = (0..3).map(|ch| (out[i][ch] - reference[i][ch]).powi(2)).sum();
            err * (1.0 + grad[i])
        })
        .collect();
    ErrorField {
        width: settings.width,
        height: settings.height,
        values,
        mask: target.mask.bits.clone(),
    }
}

/// Sampling distribution `E^{1/T} / Σ E^{1/T}`, evaluated in log space.
/// A degenerate field yields the uniform distribution over the mask.
pub fn sampling_probabilities(field: &ErrorField, temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    let logits: Vec<f64> = if field.is_degenerate() {
        field.mask.iter().map(|m| if *m { 0.0 } else { f64::NEG_INFINITY }).collect()
    } else {
        field
            .values
            .iter()
            .map(|v| if *v > 0.0 { v.ln() / temperature } else { f64::NEG_INFINITY })
            .collect()
    };
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::invalid("error field has no pixel to sample from"));
    }
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / sum).collect())
}

/// Draws `n` pixels `(x, y)` with replacement.
pub fn sample_additions(field: &ErrorField, n: usize, temperature: f64, seed: u64) -> Result<Vec<(usize, usize)>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let probs = sampling_probabilities(field, temperature)?;
    let dist = WeightedIndex::new(&probs).map_err(|e| Error::invalid(format!("sampling weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let i = dist.sample(&mut rng);
            (i % field.width, i / field.width)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AddConfig {
    pub temperature: f64,
    pub target_loss: f64,
    pub window: usize,
    /// Per-primitive loss reduction assumed before any addition is observed.
    pub seed_delta: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub start: usize,
    pub interval: usize,
}

impl Default for AddConfig {
    fn default() -> Self {
        AddConfig {
            temperature: DEFAULT_TEMPERATURE,
            target_loss: DEFAULT_TARGET_LOSS,
            window: DEFAULT_WINDOW,
            seed_delta: DEFAULT_SEED_DELTA,
            n_min: DEFAULT_N_MIN,
            n_max: DEFAULT_N_MAX,
            start: DEFAULT_ADAPT_START,
            interval: DEFAULT_ADAPT_INTERVAL,
        }
    }
}

impl AddConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.target_loss >= 0.0) {
            return Err(Error::invalid(format!("target loss must be >= 0, got {}", self.target_loss)));
        }
        if !(self.seed_delta > 0.0) {
            return Err(Error::invalid(format!("initial marginal gain must be positive, got {}", self.seed_delta)));
        }
        if self.window == 0 {
            return Err(Error::invalid("history window must be at least 1"));
        }
        if self.n_min > self.n_max {
            return Err(Error::invalid(format!("n_min {} exceeds n_max {}", self.n_min, self.n_max)));
        }
        if self.interval == 0 {
            return Err(Error::invalid("adaptation interval must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdditionEvent {
    pub loss_before: f64,
    pub loss_after: f64,
    pub n_added: usize,
}

/// The most recent addition events, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditionHistory {
    capacity: usize,
    events: VecDeque<AdditionEvent>,
}

impl AdditionHistory {
    pub fn new(capacity: usize) -> Self {
        AdditionHistory {
            capacity: capacity.max(1),
            events: VecDeque::new(),
        }
    }

    pub fn push(&mut self, event: AdditionEvent) -> Result<()> {
        if event.n_added == 0 {
            return Err(Error::invalid("an addition event must add at least one primitive"));
        }
        if self.events.len() == self.capacity {
            self.events.pop_front();
        }
        self.events.push_back(event);
        Ok(())
    }

    pub fn events(&self) -> impl Iterator<Item = &AdditionEvent> {
        self.events.iter()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Window mean of the loss reduction per added primitive.
    pub fn mean_gain(&self) -> Option<f64> {
        if self.events.is_empty() {
            return None;
        }
        let sum: f64 = self
            .events
            .iter()
            .map(|e| (e.loss_before - e.loss_after) / e.n_added as f64)
            .sum();
        Some(sum / self.events.len() as f64)
    }
}

/// How many primitives to add to close the gap to the target loss.
pub fn estimate_addition_count(history: &AdditionHistory, current_loss: f64, cfg: &AddConfig) -> usize {
    if current_loss <= cfg.target_loss {
        return 0;
    }
    let gain = match history.mean_gain() {
        Some(g) if g > 0.0 => g,
        _ => cfg.seed_delta,
    };
    // Slack absorbs rounding in the quotient, e.g. 0.010 / 0.001.
    let raw = ((current_loss - cfg.target_loss) / gain * (1.0 - 1e-12)).ceil();
    if raw >= cfg.n_max as f64 {
        cfg.n_max
    } else {
        (raw as usize).clamp(cfg.n_min, cfg.n_max)
    }
}

/// Appends one opaque seed per pixel at the top of the stack, colored from
/// the target.
pub fn add_primitives(layer: &mut LayerVector, target: &LayerTarget, coords: &[(usize, usize)]) -> Result<()> {
    add_primitives_with(layer, target, coords, DEFAULT_SEED_RADIUS, DEFAULT_SEGMENTS)
}

pub fn add_primitives_with(
    layer: &mut LayerVector,
    target: &LayerTarget,
    coords: &[(usize, usize)],
    radius: f64,
    segments: usize,
) -> Result<()> {
    let mut fresh = Vec::with_capacity(coords.len());
    for &(x, y) in coords {
        if x >= target.width() || y >= target.height() {
            return Err(Error::invalid(format!(
                "pixel ({x}, {y}) lies outside the {}x{} canvas",
                target.width(),
                target.height()
            )));
        }
        let px = target.image.get(x, y);
        fresh.push(make_seed_primitive(
            Point::new(x as f64 + 0.5, y as f64 + 0.5),
            radius,
            [px[0], px[1], px[2], 1.0],
            segments,
        )?);
    }
    layer.primitives.extend(fresh);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::LossConfig;
    use crate::scene::{Mask, RgbaImage};

    fn square(x0: f64, y0: f64, x1: f64, y1: f64, rgb: [f64; 3], opacity: f64) -> crate::scene::PathPrimitive {
        let c = [Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)];
        let segs: Vec<[Point; 4]> = (0..4)
            .map(|k| {
                let (a, b) = (c[k], c[(k + 1) % 4]);
                [a, a + (b - a) * (1.0 / 3.0), a + (b - a) * (2.0 / 3.0), b]
            })
            .collect();
        crate::scene::PathPrimitive::from_segments(&segs, rgb, opacity).unwrap()
    }

    fn flat_target(w: usize, h: usize, rgb: [f64; 3]) -> LayerTarget {
        LayerTarget::new(
            "t",
            RgbaImage::filled(w, h, [rgb[0], rgb[1], rgb[2], 1.0]),
            Mask::from_fn(w, h, |_, _| true),
        )
        .unwrap()
    }

    fn covered_pair(top_opacity: f64) -> LayerVector {
        LayerVector::with_primitives(
            "l",
            vec![
                square(6.0, 6.0, 10.0, 10.0, [0.0, 0.0, 1.0], 1.0),
                square(2.0, 2.0, 14.0, 14.0, [1.0, 0.0, 0.0], top_opacity),
            ],
        )
    }

    #[test]
    fn occlusion_pruning_removes_hidden_primitive() {
        let layer = covered_pair(1.0);
        let settings = RenderSettings::new(16, 16);
        let out = prune(&layer, &flat_target(16, 16, [1.0, 0.0, 0.0]), &PruneConfig::default(), &settings).unwrap();
        assert_eq!(out.removed, vec![0]);
        assert_eq!(out.layer.primitives, vec![layer.primitives[1].clone()]);
    }

    #[test]
    fn opacity_pruning_drops_visible_translucent_top() {
        let layer = covered_pair(0.9);
        let settings = RenderSettings::new(16, 16);
        let cfg = PruneConfig {
            strategy: PruneStrategy::Opacity,
            tau_p: 0.0,
            ratio: Some(0.5),
        };
        let out = prune(&layer, &flat_target(16, 16, [1.0, 0.0, 0.0]), &cfg, &settings).unwrap();
        assert_eq!(out.removed, vec![1]);
    }

    #[test]
    fn prune_rejects_full_ratio_and_empty_layer() {
        let settings = RenderSettings::new(16, 16);
        let target = flat_target(16, 16, [1.0, 0.0, 0.0]);
        let cfg = PruneConfig {
            ratio: Some(1.0),
            ..PruneConfig::default()
        };
        assert!(prune(&covered_pair(1.0), &target, &cfg, &settings).is_err());
        assert!(prune(&LayerVector::new("e"), &target, &PruneConfig::default(), &settings).is_err());
    }

    #[test]
    fn oracle_score_of_isolated_opaque_primitive() {
        let layer = LayerVector::with_primitives("l", vec![square(4.0, 4.0, 8.0, 8.0, [1.0, 1.0, 1.0], 1.0)]);
        let settings = RenderSettings::new(16, 16).with_smoothing(0.01);
        let maps = rasterize_layer(&layer, &settings);
        let s = oracle_scores(&layer, &maps, &settings)[0];
        // 16 pixels each change by 1 in all four channels.
        assert!((s - 16.0 * 4.0 / (4.0 * 256.0)).abs() < 1e-9, "{s}");
    }

    fn objective(target: &LayerTarget) -> Objective {
        Objective::new(target, LossConfig::default(), RenderSettings::new(target.width(), target.height())).unwrap()
    }

    #[test]
    fn perfect_fit_gives_degenerate_field() {
        let target = flat_target(8, 8, [0.3, 0.6, 0.9]);
        let layer = LayerVector::with_primitives("l", vec![square(-4.0, -4.0, 12.0, 12.0, [0.3, 0.6, 0.9], 1.0)]);
        let field = build_error_field(&layer, &objective(&target), &target);
        assert!(field.is_degenerate());
        let p = sampling_probabilities(&field, 0.5).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 64.0).abs() < 1e-12));
    }

    #[test]
    fn single_pixel_error_gives_delta_field() {
        let mut image = RgbaImage::filled(8, 8, [0.5, 0.5, 0.5, 1.0]);
        image.pixels[3 * 8 + 5] = [0.9, 0.5, 0.5, 1.0];
        let target = LayerTarget::new("t", image, Mask::from_fn(8, 8, |_, _| true)).unwrap();
        // An empty layer over the gray interior background reproduces
        // every gray pixel exactly.
        let field = build_error_field(&LayerVector::new("l"), &objective(&target), &target);
        let nonzero: Vec<usize> = (0..64).filter(|&i| field.values[i] > 0.0).collect();
        assert_eq!(nonzero, vec![3 * 8 + 5]);
    }

    #[test]
    fn edges_weigh_more_under_uniform_error() {
        let image = RgbaImage::from_fn(16, 16, |x, _| if x < 8 { [0.0, 0.0, 0.0, 1.0] } else { [1.0, 1.0, 1.0, 1.0] });
        let target = LayerTarget::new("t", image, Mask::from_fn(16, 16, |_, _| true)).unwrap();
        // Gray 0.5 everywhere is off by 0.5 on every pixel.
        let field = build_error_field(&LayerVector::new("l"), &objective(&target), &target);
        let mean = |xs: &[usize]| {
            let v: Vec<f64> = (0..16).flat_map(|y| xs.iter().map(move |x| y * 16 + x)).map(|i| field.values[i]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(&[7, 8]) > mean(&[0, 1, 2, 3, 12, 13, 14, 15]));
    }

    fn two_pixel_field() -> ErrorField {
        let mut values = vec![0.0; 4];
        values[0] = 1.0;
        values[3] = 2.0;
        ErrorField {
            width: 2,
            height: 2,
            values,
            mask: vec![true; 4],
        }
    }

    #[test]
    fn temperature_sharpens_distribution() {
        let p = sampling_probabilities(&two_pixel_field(), 0.5).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-12 && (p[3] - 0.8).abs() < 1e-12);
        let draws = sample_additions(&two_pixel_field(), 100_000, 0.5, 3).unwrap();
        let hits = draws.iter().filter(|c| **c == (1, 1)).count() as f64 / 1e5;
        assert!((hits - 0.8).abs() < 0.02, "{hits}");
    }

    #[test]
    fn low_temperature_concentrates_on_argmax() {
        let draws = sample_additions(&two_pixel_field(), 100_000, 0.01, 4).unwrap();
        let hits = draws.iter().filter(|c| **c == (1, 1)).count();
        assert!(hits as f64 >= 0.999 * 1e5);
    }

    #[test]
    fn sampling_is_reproducible() {
        let f = two_pixel_field();
        assert_eq!(sample_additions(&f, 50, 1.0, 9).unwrap(), sample_additions(&f, 50, 1.0, 9).unwrap());
    }

    #[test]
    fn addition_count_examples() {
        let cfg = AddConfig::default();
        let empty = AdditionHistory::new(3);
        assert_eq!(estimate_addition_count(&empty, 0.0005, &cfg), 0);
        assert_eq!(estimate_addition_count(&empty, 0.011, &cfg), 10);
        let single = |n_added| {
            let mut h = AdditionHistory::new(3);
            h.push(AdditionEvent {
                loss_before: 0.02,
                loss_after: 0.01,
                n_added,
            })
            .unwrap();
            h
        };
        // Gain 1e-3 per primitive: 0.05 / 1e-3.
        assert_eq!(estimate_addition_count(&single(10), 0.051, &cfg), 50);
        // Gain 1e-4: 500 before clamping.
        assert_eq!(estimate_addition_count(&single(100), 0.051, &cfg), 100);
    }

    #[test]
    fn negative_gain_falls_back_to_seed() {
        let mut h = AdditionHistory::new(3);
        h.push(AdditionEvent {
            loss_before: 0.01,
            loss_after: 0.02,
            n_added: 5,
        })
        .unwrap();
        assert_eq!(estimate_addition_count(&h, 0.011, &AddConfig::default()), 10);
    }

    #[test]
    fn history_keeps_last_window() {
        let mut h = AdditionHistory::new(2);
        for k in 1..=3 {
            h.push(AdditionEvent {
                loss_before: k as f64,
                loss_after: 0.0,
                n_added: 1,
            })
            .unwrap();
        }
        assert_eq!(h.len(), 2);
        assert_eq!(h.mean_gain(), Some(2.5));
        assert!(h
            .push(AdditionEvent {
                loss_before: 1.0,
                loss_after: 0.0,
                n_added: 0
            })
            .is_err());
    }

    #[test]
    fn added_primitive_takes_target_color_on_top() {
        let target = flat_target(8, 8, [1.0, 0.0, 0.0]);
        let mut layer = covered_pair(1.0);
        add_primitives(&mut layer, &target, &[(3, 4)]).unwrap();
        assert_eq!(layer.len(), 3);
        let top = &layer.primitives[2];
        assert_eq!(top.fill_rgb, [1.0, 0.0, 0.0]);
        assert_eq!(top.fill_opacity, 1.0);
        let before = layer.clone();
        add_primitives(&mut layer, &target, &[]).unwrap();
        assert_eq!(layer, before);
        assert!(add_primitives(&mut layer, &target, &[(8, 0)]).is_err());
    }
}
