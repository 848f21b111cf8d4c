//! Per-layer fitting loop: seeding, optimization, and the periodic
//! prune-then-add schedule.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adapt::{
    add_primitives_with, build_error_field, estimate_addition_count, prune, sample_additions, AddConfig,
    AdditionEvent, AdditionHistory, PruneConfig,
};
use crate::error::{Error, Result};
use crate::optimize::{LossBreakdown, LossConfig, Objective, OptimizerConfig, OptimizerState};
use crate::raster::RenderSettings;
use crate::scene::{
    make_seed_primitive, LayerTarget, LayerVector, Point, Provenance, VectorDocument, DEFAULT_SEED_RADIUS,
    DEFAULT_SEGMENTS,
};

pub const DEFAULT_BUDGET: usize = 512;
pub const DEFAULT_ITERATIONS: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlvConfig {
    /// Primitives shared among all layers at initialization.
    pub budget: usize,
    pub iterations: usize,
    pub prune: PruneConfig,
    /// Also holds the adaptation start and interval.
    pub add: AddConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub smoothing: f64,
    pub segments: usize,
    pub seed_radius: f64,
    pub seed: u64,
    pub enable_prune: bool,
    pub enable_add: bool,
    /// Layers fitted concurrently.
    pub jobs: usize,
}

impl Default for AlvConfig {
    fn default() -> Self {
        AlvConfig {
            budget: DEFAULT_BUDGET,
            iterations: DEFAULT_ITERATIONS,
            prune: PruneConfig::default(),
            add: AddConfig::default(),
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            smoothing: crate::raster::DEFAULT_SMOOTHING,
            segments: DEFAULT_SEGMENTS,
            seed_radius: DEFAULT_SEED_RADIUS,
            seed: 0,
            enable_prune: true,
            enable_add: true,
            jobs: 1,
        }
    }
}

impl AlvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::invalid("budget must be at least 1"));
        }
        if self.add.start >= self.iterations {
            return Err(Error::invalid(format!(
                "adaptation start {} must precede the iteration count {}",
                self.add.start, self.iterations
            )));
        }
        if self.segments == 0 {
            return Err(Error::invalid("paths need at least one segment"));
        }
        if !(self.seed_radius > 0.0) {
            return Err(Error::invalid(format!("seed radius must be positive, got {}", self.seed_radius)));
        }
        if self.jobs == 0 {
            return Err(Error::invalid("jobs must be at least 1"));
        }
        self.prune.validate()?;
        self.add.validate()?;
        self.loss.validate()?;
        self.optimizer.validate()?;
        self.render_settings(1, 1).validate()
    }

    pub fn render_settings(&self, width: usize, height: usize) -> RenderSettings {
        RenderSettings::new(width, height).with_smoothing(self.smoothing)
    }
}

/// One line of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub loss: LossBreakdown,
    pub primitives: usize,
    pub pruned: usize,
    pub added: usize,
    /// Per-primitive loss reduction the addition count was based on.
    pub delta_e: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub layer_id: String,
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn final_loss(&self) -> Option<LossBreakdown> {
        self.records.last().map(|r| r.loss)
    }

    pub fn total_added(&self) -> usize {
        self.records.iter().map(|r| r.added).sum()
    }

    pub fn total_pruned(&self) -> usize {
        self.records.iter().map(|r| r.pruned).sum()
    }
}

/// Splits `total` in proportion to `areas`: floors first, then one extra
/// each to the largest layers until the total is met. Every layer gets at
/// least one.
pub fn proportional_budgets(areas: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = areas.iter().sum();
    if areas.is_empty() {
        return Vec::new();
    }
    if sum == 0 {
        return vec![1; areas.len()];
    }
    let mut budgets: Vec<usize> = areas
        .iter()
        .map(|&a| ((a as u128 * total as u128) / sum as u128) as usize)
        .collect();
    let mut order: Vec<usize> = (0..areas.len()).collect();
    order.sort_by(|&a, &b| areas[b].cmp(&areas[a]));
    let mut left = total.saturating_sub(budgets.iter().sum());
    for &i in order.iter().cycle().take(left.min(areas.len() * 2)) {
        if left == 0 {
            break;
        }
        budgets[i] += 1;
        left -= 1;
    }
    for b in &mut budgets {
        *b = (*b).max(1);
    }
    budgets
}

/// Decorrelated seed for a sub-stream of `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `budget` seed primitives centered on mask pixels drawn in proportion to
/// the error of the empty scene, colored from the target.
pub fn content_adaptive_init(target: &LayerTarget, budget: usize, seed: u64) -> Result<LayerVector> {
    content_adaptive_init_with(target, budget, seed, &AlvConfig::default())
}

pub fn content_adaptive_init_with(target: &LayerTarget, budget: usize, seed: u64, cfg: &AlvConfig) -> Result<LayerVector> {
    if budget == 0 {
        return Err(Error::invalid("initial budget must be at least 1"));
    }
    let settings = cfg.render_settings(target.width(), target.height());
    let objective = Objective::new(target, cfg.loss, settings)?;
    let empty = LayerVector::new(target.layer_id.clone());
    let field = build_error_field(&empty, &objective, target);
    let coords = sample_additions(&field, budget, 1.0, seed)?;
    let mut layer = empty;
    layer.primitives = coords
        .iter()
        .map(|&(x, y)| {
            let px = target.image.get(x, y);
            make_seed_primitive(
                Point::new(x as f64 + 0.5, y as f64 + 0.5),
                cfg.seed_radius,
                [px[0], px[1], px[2], 1.0],
                cfg.segments,
            )
        })
        .collect::<Result<_>>()?;
    Ok(layer)
}

fn checked(loss: LossBreakdown, iteration: usize) -> Result<LossBreakdown> {
    if loss.total.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFinite {
            iteration,
            detail: format!("recon {} mask {}", loss.recon, loss.mask),
        })
    }
}

/// Fits one layer from a fresh initialization of `budget` primitives.
pub fn run_alv(target: &LayerTarget, cfg: &AlvConfig, budget: usize, seed: u64) -> Result<(LayerVector, RunTrace)> {
    cfg.validate()?;
    let layer = content_adaptive_init_with(target, budget, seed, cfg)?;
    optimize_layer(target, cfg, layer, seed)
}

/// Runs the optimization schedule starting from `layer`.
pub fn optimize_layer(target: &LayerTarget, cfg: &AlvConfig, mut layer: LayerVector, seed: u64) -> Result<(LayerVector, RunTrace)> {
    cfg.validate()?;
    let start = Instant::now();
    let settings = cfg.render_settings(target.width(), target.height());
    let objective = Objective::new(target, cfg.loss, settings)?;
    let add = &cfg.add;
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.iterations, &layer)?.with_flatness(settings.flatness);
    let mut history = AdditionHistory::new(add.window);
    let mut pending: Option<(f64, usize)> = None;
    let mut trace = RunTrace {
        layer_id: target.layer_id.clone(),
        records: Vec::new(),
    };
    let record = |trace: &mut RunTrace, iteration, loss, primitives, pruned, added, delta_e| {
        trace.records.push(TraceRecord {
            iteration,
            loss,
            primitives,
            pruned,
            added,
            delta_e,
            seconds: start.elapsed().as_secs_f64(),
        })
    };
    record(&mut trace, 0, checked(objective.loss(&layer), 0)?, layer.len(), 0, 0, None);

    let mut it = 0;
    while it < cfg.iterations {
        let checkpoint = it >= add.start && (it - add.start) % add.interval == 0 && it + add.interval <= cfg.iterations;
        if checkpoint && (cfg.enable_prune || cfg.enable_add) {
            let loss = checked(objective.loss(&layer), it)?;
            if let Some((before, n_added)) = pending.take() {
                history.push(AdditionEvent {
                    loss_before: before,
                    loss_after: loss.total,
                    n_added,
                })?;
            }
            let mut pruned = 0;
            if cfg.enable_prune && !layer.is_empty() {
                let out = prune(&layer, target, &cfg.prune, &settings)?;
                opt.remove(&out.removed);
                pruned = out.removed.len();
                layer = out.layer;
            }
            opt.unfreeze_all();
            let after_prune = if pruned > 0 { checked(objective.loss(&layer), it)? } else { loss };
            let mut added = 0;
            let mut delta_e = None;
            if cfg.enable_add {
                delta_e = Some(history.mean_gain().filter(|g| *g > 0.0).unwrap_or(add.seed_delta));
                let n = estimate_addition_count(&history, after_prune.total, add);
                if n > 0 {
                    let field = build_error_field(&layer, &objective, target);
                    let coords = sample_additions(&field, n, add.temperature, derive_seed(seed, it as u64))?;
                    add_primitives_with(&mut layer, target, &coords, cfg.seed_radius, cfg.segments)?;
                    opt.extend(&layer);
                    pending = Some((after_prune.total, n));
                    added = n;
                }
            }
            record(&mut trace, it, after_prune, layer.len(), pruned, added, delta_e);
            // Stop once the target is met and the checkpoint changed
            // nothing that still needs optimizing.
            if pending.is_none() && pruned == 0 && after_prune.total <= add.target_loss {
                break;
            }
        }
        let (loss, grads) = objective.loss_and_gradients(&layer);
        checked(loss, it)?;
        opt.step(&mut layer, &grads)?;
        it += 1;
    }
    let final_loss = checked(objective.loss(&layer), it)?;
    if trace.records.last().map(|r| r.iteration) != Some(it) {
        record(&mut trace, it, final_loss, layer.len(), 0, 0, None);
    }
    Ok((layer, trace))
}

/// Output of fitting every layer of a document.
#[derive(Clone, Debug)]
pub struct DocumentRun {
    pub document: VectorDocument,
    pub traces: Vec<RunTrace>,
}

/// Fits each layer independently (up to `cfg.jobs` at a time) with budgets
/// proportional to mask area, and stacks the results in input order.
pub fn vectorize_document(targets: &[LayerTarget], provenance: Option<&[Provenance]>, cfg: &AlvConfig) -> Result<DocumentRun> {
    cfg.validate()?;
    let first = targets.first().ok_or_else(|| Error::invalid("document has no layers"))?;
    let (width, height) = (first.width(), first.height());
    for t in targets {
        if t.width() != width || t.height() != height {
            return Err(Error::DimensionMismatch(format!(
                "layer `{}` is {}x{} but the canvas is {width}x{height}",
                t.layer_id,
                t.width(),
                t.height()
            )));
        }
    }
    if let Some(p) = provenance {
        if p.len() != targets.len() {
            return Err(Error::invalid("provenance must have one entry per layer"));
        }
    }
    let areas: Vec<usize> = targets.iter().map(|t| t.mask.count()).collect();
    let budgets = proportional_budgets(&areas, cfg.budget);

    let fit = |k: usize| {
        run_alv(&targets[k], cfg, budgets[k], derive_seed(cfg.seed, k as u64)).map_err(|e| Error::Layer {
            layer: targets[k].layer_id.clone(),
            source: Box::new(e),
        })
    };
    let mut results: Vec<Option<Result<(LayerVector, RunTrace)>>> = (0..targets.len()).map(|_| None).collect();
    let jobs = cfg.jobs.min(targets.len());
    if jobs <= 1 {
        for (k, slot) in results.iter_mut().enumerate() {
            *slot = Some(fit(k));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let done = std::sync::Mutex::new(&mut results);
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if k >= targets.len() {
                        break;
                    }
                    let r = fit(k);
                    done.lock().unwrap()[k] = Some(r);
                });
            }
        });
    }

    let mut document = VectorDocument::new(width, height);
    let mut traces = Vec::with_capacity(targets.len());
    for (k, r) in results.into_iter().enumerate() {
        let (layer, trace) = r.expect("every layer is fitted")?;
        document.push_layer(layer, provenance.map(|p| p[k].clone()));
        traces.push(trace);
    }
    Ok(DocumentRun { document, traces })
}
