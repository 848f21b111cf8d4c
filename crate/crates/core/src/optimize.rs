//! Masked reconstruction objective, its analytic gradient under the soft
//! coverage model, and the adaptive-moment optimizer used to fit layers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{
    accumulate, backprop_coverage_to_points, flatten, rasterize_layer, AlphaMap, RenderSettings,
};
use crate::scene::{LayerTarget, LayerVector, Point};

pub const DEFAULT_LAMBDA_MASK: f64 = 0.5;
pub const DEFAULT_LR_POINTS: f64 = 1.0;
pub const DEFAULT_LR_COLORS: f64 = 0.01;
pub const DEFAULT_DECAY_RATIO: f64 = 0.4;
pub const DEFAULT_ALPHA_WEIGHT: f64 = 1.0;

/// Minimum polygon area (px²) before a primitive's geometry is frozen.
pub const DEGENERATE_AREA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_mask: f64,
    /// Gray level the render is composited over inside the mask. Outside
    /// the mask the target itself serves as background.
    pub interior_background: f64,
    /// Weight of `(α - α_target)²` inside the mask, added to the
    /// reconstruction term.
    #[serde(default)]
    pub alpha_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_mask: DEFAULT_LAMBDA_MASK,
            interior_background: 0.5,
            alpha_weight: DEFAULT_ALPHA_WEIGHT,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_mask >= 0.0) {
            return Err(Error::invalid(format!("lambda_mask must be >= 0, got {}", self.lambda_mask)));
        }
        if !(0.0..=1.0).contains(&self.interior_background) {
            return Err(Error::invalid("interior_background must lie in [0, 1]"));
        }
        if !(self.alpha_weight >= 0.0) || !self.alpha_weight.is_finite() {
            return Err(Error::invalid(format!("alpha_weight must be >= 0, got {}", self.alpha_weight)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub recon: f64,
    pub mask: f64,
}

/// Gradient with respect to one primitive's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveGradient {
    pub points: Vec<Point>,
    pub rgb: [f64; 3],
    pub opacity: f64,
}

/// Per-primitive gradients, index-aligned with the layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradients {
    pub primitives: Vec<PrimitiveGradient>,
}

impl LayerGradients {
    pub fn zeros_like(layer: &LayerVector) -> Self {
        LayerGradients {
            primitives: layer
                .primitives
                .iter()
                .map(|p| PrimitiveGradient {
                    points: vec![Point::default(); p.points().len()],
                    rgb: [0.0; 3],
                    opacity: 0.0,
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.primitives.iter().all(|g| {
            g.opacity.is_finite()
                && g.rgb.iter().all(|c| c.is_finite())
                && g.points.iter().all(|p| p.is_finite())
        })
    }
}

/// Precomputed per-pixel data for evaluating one layer's objective.
#[derive(Clone, Debug)]
pub struct Objective {
    pub settings: RenderSettings,
    pub config: LossConfig,
    /// Background the render is composited over before comparison.
    background: Vec<[f64; 3]>,
    /// Target composited over the same background.
    reference: Vec<[f64; 3]>,
    target_alpha: Vec<f64>,
    outside: Vec<bool>,
}

impl Objective {
    pub fn new(target: &LayerTarget, config: LossConfig, settings: RenderSettings) -> Result<Self> {
        config.validate()?;
        settings.validate()?;
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
        let gray = config.interior_background;
        let mut background = Vec::with_capacity(settings.pixel_count());
        let mut reference = Vec::with_capacity(settings.pixel_count());
        for (px, &inside) in target.image.pixels.iter().zip(&target.mask.bits) {
            let bg = if inside { [gray; 3] } else { [px[0], px[1], px[2]] };
            let a = px[3];
            background.push(bg);
            reference.push([0, 1, 2].map(|ch| px[ch] * a + bg[ch] * (1.0 - a)));
        }
        let outside = target.mask.bits.iter().map(|b| !b).collect();
        let target_alpha = target.image.pixels.iter().map(|p| p[3]).collect();
        Ok(Objective {
            settings,
            config,
            background,
            reference,
            target_alpha,
            outside,
        })
    }

    /// Target as compared against renders.
    pub fn reference(&self) -> &[[f64; 3]] {
        &self.reference
    }

    /// Render composited over the comparison background.
    pub fn composited(&self, premul: &[[f64; 3]], alpha: &[f64]) -> Vec<[f64; 3]> {
        premul
            .iter()
            .zip(alpha)
            .zip(&self.background)
            .map(|((c, &a), bg)| [0, 1, 2].map(|ch| c[ch] + (1.0 - a) * bg[ch]))
            .collect()
    }

    fn breakdown(&self, premul: &[[f64; 3]], alpha: &[f64]) -> LossBreakdown {
        let n = self.settings.pixel_count() as f64;
        let mut recon = 0.0;
        let mut mask = 0.0;
        for i in 0..premul.len() {
            let a = alpha[i];
            for ch in 0..3 {
                let out = premul[i][ch] + (1.0 - a) * self.background[i][ch];
                let diff = out - self.reference[i][ch];
                recon += diff * diff;
            }
            if self.outside[i] {
                mask += a * a;
            } else {
                recon += self.config.alpha_weight * (a - self.target_alpha[i]).powi(2);
            }
        }
        let recon = recon / (3.0 * n);
        let mask = mask / n;
        LossBreakdown {
            total: recon + self.config.lambda_mask * mask,
            recon,
            mask,
        }
    }

    pub fn loss(&self, layer: &LayerVector) -> LossBreakdown {
        let maps = rasterize_layer(layer, &self.settings);
        self.loss_from_maps(layer, &maps)
    }

    pub fn loss_from_maps(&self, layer: &LayerVector, maps: &[AlphaMap]) -> LossBreakdown {
        let colors: Vec<[f64; 3]> = layer.primitives.iter().map(|p| p.fill_rgb).collect();
        let acc = accumulate(maps, &colors, &self.settings);
        self.breakdown(&acc.premul, &acc.alpha)
    }

    /// Loss and its gradient with respect to every primitive parameter.
    pub fn loss_and_gradients(&self, layer: &LayerVector) -> (LossBreakdown, LayerGradients) {
        let settings = &self.settings;
        let width = settings.width;
        let npx = settings.pixel_count();
        let maps = rasterize_layer(layer, settings);
        let colors: Vec<[f64; 3]> = layer.primitives.iter().map(|p| p.fill_rgb).collect();
        let acc = accumulate(&maps, &colors, settings);
        let loss = self.breakdown(&acc.premul, &acc.alpha);

        // dL/d(premultiplied color) and dL/d(composite alpha) per pixel.
        let mut g_color = vec![[0.0; 3]; npx];
        let mut g_alpha = vec![0.0; npx];
        let recon_scale = 2.0 / (3.0 * npx as f64);
        let mask_scale = 2.0 * self.config.lambda_mask / npx as f64;
        for i in 0..npx {
            let a = acc.alpha[i];
            let bg = self.background[i];
            let mut ga = 0.0;
            for ch in 0..3 {
                let out = acc.premul[i][ch] + (1.0 - a) * bg[ch];
                let g = recon_scale * (out - self.reference[i][ch]);
                g_color[i][ch] = g;
                ga -= g * bg[ch];
            }
            if self.outside[i] {
                ga += mask_scale * a;
            } else {
                ga += recon_scale * self.config.alpha_weight * (a - self.target_alpha[i]);
            }
            g_alpha[i] = ga;
        }

        // Transmittance above each primitive, T_i = Π_{j>i} (1 - α_j),
        // stored over each bounding box.
        let mut transmittance = vec![1.0; npx];
        let mut above: Vec<Vec<f64>> = vec![Vec::new(); maps.len()];
        for (i, map) in maps.iter().enumerate().rev() {
            let mut local = Vec::with_capacity(map.coverage.len());
            map.for_each(
                |idx, a| {
                    local.push(transmittance[idx]);
                    transmittance[idx] *= 1.0 - a;
                },
                width,
            );
            above[i] = local;
        }

        // Bottom-to-top: the accumulation below primitive i is known when it
        // is visited. dC/dα_i = T_i (c_i - P_below), dA/dα_i = T_i (1 - Q_below).
        let mut below_color = vec![[0.0; 3]; npx];
        let mut below_alpha = vec![0.0; npx];
        let mut grads = LayerGradients::zeros_like(layer);
        let mut d_coverage = vec![0.0; npx];
        for (i, map) in maps.iter().enumerate() {
            let prim = &layer.primitives[i];
            let c = prim.fill_rgb;
            let o = prim.fill_opacity;
            let t_above = &above[i];
            let mut g_rgb = [0.0; 3];
            let mut g_opacity = 0.0;
            let mut k = 0;
            map.for_each(
                |idx, a| {
                    let t = t_above[k];
                    let cov = map.coverage[k];
                    k += 1;
                    let gc = g_color[idx];
                    let pb = below_color[idx];
                    let qb = below_alpha[idx];
                    let g_a = t
                        * (gc[0] * (c[0] - pb[0])
                            + gc[1] * (c[1] - pb[1])
                            + gc[2] * (c[2] - pb[2])
                            + g_alpha[idx] * (1.0 - qb));
                    let w = a * t;
                    g_rgb[0] += gc[0] * w;
                    g_rgb[1] += gc[1] * w;
                    g_rgb[2] += gc[2] * w;
                    g_opacity += g_a * cov;
                    d_coverage[idx] = g_a * o;

                    let keep = 1.0 - a;
                    below_color[idx] = [
                        c[0] * a + keep * pb[0],
                        c[1] * a + keep * pb[1],
                        c[2] * a + keep * pb[2],
                    ];
                    below_alpha[idx] = a + keep * qb;
                },
                width,
            );
            let g = &mut grads.primitives[i];
            g.rgb = g_rgb;
            g.opacity = g_opacity;
            backprop_coverage_to_points(prim, map, settings, |idx| d_coverage[idx], &mut g.points);
        }
        (loss, grads)
    }
}

/// Evaluates the masked reconstruction loss for one layer.
pub fn compute_loss(
    layer: &LayerVector,
    target: &LayerTarget,
    cfg: &LossConfig,
    settings: &RenderSettings,
) -> Result<LossBreakdown> {
    Ok(Objective::new(target, *cfg, *settings)?.loss(layer))
}

pub fn compute_gradients(
    layer: &LayerVector,
    target: &LayerTarget,
    cfg: &LossConfig,
    settings: &RenderSettings,
) -> Result<LayerGradients> {
    Ok(Objective::new(target, *cfg, *settings)?.loss_and_gradients(layer).1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr_points: f64,
    pub lr_colors: f64,
    /// Final learning rate as a fraction of the initial one.
    pub decay_ratio: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr_points: DEFAULT_LR_POINTS,
            lr_colors: DEFAULT_LR_COLORS,
            decay_ratio: DEFAULT_DECAY_RATIO,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_points > 0.0) || !(self.lr_colors > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if !(self.decay_ratio > 0.0 && self.decay_ratio <= 1.0) {
            return Err(Error::invalid(format!(
                "decay ratio must lie in (0, 1], got {}",
                self.decay_ratio
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::invalid("invalid moment constants"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
struct Moments {
    m_points: Vec<Point>,
    v_points: Vec<Point>,
    m_paint: [f64; 4],
    v_paint: [f64; 4],
    steps: u32,
    frozen: bool,
}

impl Moments {
    fn new(n_points: usize) -> Self {
        Moments {
            m_points: vec![Point::default(); n_points],
            v_points: vec![Point::default(); n_points],
            ..Default::default()
        }
    }
}

/// Adaptive-moment state for one layer. Moments are tracked per primitive
/// so primitives can be inserted or removed between steps; bias correction
/// uses each primitive's own step count.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    total_steps: usize,
    step: usize,
    moments: Vec<Moments>,
    flatness: f64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, total_steps: usize, layer: &LayerVector) -> Result<Self> {
        config.validate()?;
        Ok(OptimizerState {
            config,
            total_steps: total_steps.max(1),
            step: 0,
            moments: layer.primitives.iter().map(|p| Moments::new(p.points().len())).collect(),
            flatness: crate::raster::DEFAULT_FLATNESS,
        })
    }

    pub fn with_flatness(mut self, flatness: f64) -> Self {
        self.flatness = flatness;
        self
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Multiplier on the initial learning rates at the current step: falls
    /// linearly from 1 at the first step to `decay_ratio` at the last.
    pub fn lr_factor(&self) -> f64 {
        if self.total_steps <= 1 {
            return 1.0;
        }
        let progress = (self.step as f64 / (self.total_steps - 1) as f64).min(1.0);
        1.0 - (1.0 - self.config.decay_ratio) * progress
    }

    pub fn lr_points(&self) -> f64 {
        self.config.lr_points * self.lr_factor()
    }

    pub fn lr_colors(&self) -> f64 {
        self.config.lr_colors * self.lr_factor()
    }

    pub fn len(&self) -> usize {
        self.moments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moments.is_empty()
    }

    pub fn is_frozen(&self, index: usize) -> bool {
        self.moments[index].frozen
    }

    /// Drops state for removed primitives (indices into the pre-removal
    /// layer, any order).
    pub fn remove(&mut self, removed: &[usize]) {
        let mut drop = vec![false; self.moments.len()];
        for &i in removed {
            if i < drop.len() {
                drop[i] = true;
            }
        }
        let mut k = 0;
        self.moments.retain(|_| {
            let keep = !drop[k];
            k += 1;
            keep
        });
    }

    /// Fresh state for primitives appended to the layer.
    pub fn extend(&mut self, layer: &LayerVector) {
        for p in &layer.primitives[self.moments.len()..] {
            self.moments.push(Moments::new(p.points().len()));
        }
    }

    pub fn unfreeze_all(&mut self) {
        for m in &mut self.moments {
            m.frozen = false;
        }
    }

    /// Applies one update, clamps paint to `[0, 1]`, and advances the
    /// schedule.
    pub fn step(&mut self, layer: &mut LayerVector, grads: &LayerGradients) -> Result<()> {
        if grads.primitives.len() != layer.primitives.len() || self.moments.len() != layer.primitives.len() {
            return Err(Error::invalid(format!(
                "optimizer tracks {} primitives, layer has {}, gradients have {}",
                self.moments.len(),
                layer.primitives.len(),
                grads.primitives.len()
            )));
        }
        for (i, (p, g)) in layer.primitives.iter().zip(&grads.primitives).enumerate() {
            if g.points.len() != p.points().len() || self.moments[i].m_points.len() != p.points().len() {
                return Err(Error::invalid(format!("primitive {i}: parameter shape mismatch")));
            }
        }
        let OptimizerConfig { beta1, beta2, eps, .. } = self.config;
        let lr_pts = self.lr_points();
        let lr_col = self.lr_colors();
        for ((prim, g), mom) in layer.primitives.iter_mut().zip(&grads.primitives).zip(&mut self.moments) {
            mom.steps += 1;
            let bc1 = 1.0 - beta1.powi(mom.steps as i32);
            let bc2 = 1.0 - beta2.powi(mom.steps as i32);
            let update = |m: &mut f64, v: &mut f64, grad: f64, lr: f64| -> f64 {
                *m = beta1 * *m + (1.0 - beta1) * grad;
                *v = beta2 * *v + (1.0 - beta2) * grad * grad;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                lr * m_hat / (v_hat.sqrt() + eps)
            };

            let paint_grad = [g.rgb[0], g.rgb[1], g.rgb[2], g.opacity];
            let mut paint = prim.rgba();
            for k in 0..4 {
                paint[k] -= update(&mut mom.m_paint[k], &mut mom.v_paint[k], paint_grad[k], lr_col);
            }
            prim.fill_rgb = [paint[0], paint[1], paint[2]];
            prim.fill_opacity = paint[3];
            prim.clamp_paint();

            if mom.frozen {
                continue;
            }
            let before: Vec<Point> = prim.points().to_vec();
            for (k, pt) in prim.points_mut().iter_mut().enumerate() {
                let gp = g.points[k];
                let (m, v) = (&mut mom.m_points[k], &mut mom.v_points[k]);
                pt.x -= update(&mut m.x, &mut v.x, gp.x, lr_pts);
                pt.y -= update(&mut m.y, &mut v.y, gp.y, lr_pts);
            }
            if flatten(prim, self.flatness).area() < DEGENERATE_AREA {
                prim.points_mut().copy_from_slice(&before);
                mom.frozen = true;
            }
        }
        self.step += 1;
        Ok(())
    }
}
