//! Run traces as JSON lines, and the pruning benchmark table.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adapt::{prune, PruneConfig, PruneStrategy};
use crate::error::{Error, Result};
use crate::io::metrics::{compute_metrics, ImageMetrics};
use crate::pipeline::{RunTrace, TraceRecord};
use crate::raster::{composite, RenderSettings};
use crate::scene::{LayerTarget, LayerVector, Mask, RgbaImage};

#[derive(Serialize)]
struct TraceLine<'a> {
    layer: &'a str,
    #[serde(flatten)]
    record: &'a TraceRecord,
}

pub fn trace_lines(traces: &[RunTrace]) -> String {
    let mut out = String::new();
    for trace in traces {
        for record in &trace.records {
            let line = TraceLine {
                layer: &trace.layer_id,
                record,
            };
            out.push_str(&serde_json::to_string(&line).expect("trace records serialize"));
            out.push('\n');
        }
    }
    out
}

pub fn write_trace(path: &Path, traces: &[RunTrace]) -> Result<()> {
    std::fs::write(path, trace_lines(traces)).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "{text}").map_err(|e| Error::io(path, e))
}

/// Column label used in benchmark tables.
pub fn method_label(strategy: PruneStrategy) -> &'static str {
    match strategy {
        PruneStrategy::OcclusionAware => "Ours",
        PruneStrategy::Area => "Area",
        PruneStrategy::Opacity => "Opacity",
        PruneStrategy::Oracle => "Oracle",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub ratio: f64,
    pub method: String,
    #[serde(flatten)]
    pub metrics: ImageMetrics,
    /// Scoring and selection time.
    pub seconds: f64,
    pub removed: usize,
    pub remaining: usize,
}

/// Prunes `layer` at every ratio with every strategy and scores each
/// result against `reference` composited on white.
pub fn prune_benchmark(
    layer: &LayerVector,
    reference: &RgbaImage,
    strategies: &[PruneStrategy],
    ratios: &[f64],
    settings: &RenderSettings,
) -> Result<Vec<BenchRow>> {
    let full = Mask::from_fn(reference.width, reference.height, |_, _| true);
    let target = LayerTarget::new(layer.layer_id.clone(), reference.clone(), full)?;
    let mut rows = Vec::with_capacity(strategies.len() * ratios.len());
    for &ratio in ratios {
        for &strategy in strategies {
            let cfg = PruneConfig {
                strategy,
                tau_p: 0.0,
                ratio: Some(ratio),
            };
            let clock = Instant::now();
            let outcome = prune(layer, &target, &cfg, settings)?;
            let seconds = clock.elapsed().as_secs_f64();
            let render = composite(&outcome.layer, settings);
            rows.push(BenchRow {
                ratio,
                method: method_label(strategy).to_string(),
                metrics: compute_metrics(&render, reference, None)?,
                seconds,
                removed: outcome.removed.len(),
                remaining: outcome.layer.len(),
            });
        }
    }
    Ok(rows)
}

pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut out = format!("{:>6}  {:<8} {:>10} {:>8} {:>7} {:>10}\n", "ratio", "method", "MSE", "PSNR", "SSIM", "time(s)");
    for r in rows {
        out.push_str(&format!(
            "{:>5.0}%  {:<8} {:>10.3e} {:>8.3} {:>7.4} {:>10.4}\n",
            r.ratio * 100.0,
            r.method,
            r.metrics.mse,
            r.metrics.psnr,
            r.metrics.ssim,
            r.seconds
        ));
    }
    out
}
