//! Python bindings: `import pylayervec`.
//!
//! Configurations and reports cross the boundary as plain dicts. A config
//! dict only needs the keys it overrides; see `default_config()`.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use layervec::adapt::PruneStrategy;
use layervec::io::manifest::{load_manifest, threshold_mask};
use layervec::io::metrics::{compute_metrics, evaluate_document};
use layervec::io::raster::{image_as_render, read_png, render_to_image, write_png};
use layervec::io::report::{bench_table, prune_benchmark, trace_lines};
use layervec::io::{emit_svg, parse_svg_subset};
use layervec::pipeline::{vectorize_document, AlvConfig};
use layervec::raster::{composite, contribution_scores, RenderSettings};
use layervec::Error;

fn to_py_err(e: Error) -> PyErr {
    match &e {
        Error::Io { .. } if !e.is_validation() => PyOSError::new_err(e.to_string()),
        _ if e.is_validation() => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn merge(base: &mut serde_json::Value, overrides: serde_json::Value) {
    match (base, overrides) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn config_from(py: Python<'_>, overrides: Option<&Bound<'_, PyAny>>) -> PyResult<AlvConfig> {
    let mut value = serde_json::to_value(AlvConfig::default()).expect("config serializes");
    if let Some(o) = overrides {
        let text: String = py.import("json")?.call_method1("dumps", (o,))?.extract()?;
        let parsed: serde_json::Value = serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        merge(&mut value, parsed);
    }
    let cfg: AlvConfig = serde_json::from_value(value).map_err(|e| PyValueError::new_err(format!("invalid config: {e}")))?;
    cfg.validate().map_err(to_py_err)?;
    Ok(cfg)
}

/// The reference hyperparameters as a dict.
#[pyfunction]
fn default_config(py: Python<'_>) -> PyResult<Py<PyAny>> {
    to_py(py, &AlvConfig::default())
}

/// Fits every layer of `manifest`, writes the SVG to `out` and returns
/// `(metrics_report, trace_records)`.
#[pyfunction]
#[pyo3(signature = (manifest, out, config=None))]
fn vectorize(py: Python<'_>, manifest: PathBuf, out: PathBuf, config: Option<&Bound<'_, PyAny>>) -> PyResult<(Py<PyAny>, Py<PyAny>)> {
    let cfg = config_from(py, config)?;
    let (report, trace) = py
        .detach(|| -> layervec::Result<_> {
            let loaded = load_manifest(&manifest)?;
            let clock = std::time::Instant::now();
            let run = vectorize_document(&loaded.targets, Some(&loaded.provenance), &cfg)?;
            let seconds = clock.elapsed().as_secs_f64();
            emit_svg(&run.document, &out)?;
            let mut report = evaluate_document(&run.document, &loaded.targets, cfg.smoothing, &[])?;
            report.seconds = seconds;
            Ok((report, trace_lines(&run.traces)))
        })
        .map_err(to_py_err)?;
    let records: Vec<serde_json::Value> = trace
        .lines()
        .map(|l| serde_json::from_str(l).expect("trace lines are JSON"))
        .collect();
    Ok((to_py(py, &report)?, to_py(py, &records)?))
}

/// Rasterizes an SVG to PNG, optionally at a different resolution.
#[pyfunction]
#[pyo3(signature = (svg, out, scale=1.0, smoothing=layervec::raster::DEFAULT_SMOOTHING))]
fn render(svg: PathBuf, out: PathBuf, scale: f64, smoothing: f64) -> PyResult<(usize, usize)> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(PyValueError::new_err(format!("scale must be positive, got {scale}")));
    }
    let doc = parse_svg_subset(&svg).map_err(to_py_err)?;
    let mut stack = doc.flattened();
    for p in &mut stack.primitives {
        p.scale(scale);
    }
    let w = (doc.canvas_width as f64 * scale).round().max(1.0) as usize;
    let h = (doc.canvas_height as f64 * scale).round().max(1.0) as usize;
    let settings = RenderSettings::new(w, h).with_smoothing(smoothing);
    settings.validate().map_err(to_py_err)?;
    write_png(&out, &render_to_image(&composite(&stack, &settings))).map_err(to_py_err)?;
    Ok((w, h))
}

/// MSE, PSNR and SSIM of `image` against `reference`, both PNG paths.
#[pyfunction]
#[pyo3(signature = (image, reference, mask=None))]
fn metrics(py: Python<'_>, image: PathBuf, reference: PathBuf, mask: Option<PathBuf>) -> PyResult<Py<PyAny>> {
    let a = read_png(&image).map_err(to_py_err)?;
    let b = read_png(&reference).map_err(to_py_err)?;
    let mask = match mask {
        Some(path) => Some(
            threshold_mask(&read_png(&path).map_err(to_py_err)?)
                .map_err(|_| PyValueError::new_err(format!("mask {} is not binary", path.display())))?,
        ),
        None => None,
    };
    let m = compute_metrics(&image_as_render(&a), &b, mask.as_ref()).map_err(to_py_err)?;
    to_py(py, &m)
}

/// Visible alpha area of every path, per layer, keyed by layer id.
#[pyfunction]
#[pyo3(signature = (svg, smoothing=layervec::raster::DEFAULT_SMOOTHING))]
fn contributions(py: Python<'_>, svg: PathBuf, smoothing: f64) -> PyResult<Py<PyAny>> {
    let doc = parse_svg_subset(&svg).map_err(to_py_err)?;
    let settings = RenderSettings::new(doc.canvas_width, doc.canvas_height).with_smoothing(smoothing);
    settings.validate().map_err(to_py_err)?;
    let scores: serde_json::Map<String, serde_json::Value> = doc
        .layers
        .iter()
        .map(|l| (l.vector.layer_id.clone(), contribution_scores(&l.vector, &settings).into()))
        .collect();
    to_py(py, &scores)
}

/// Prunes the stacked paths of `svg` with each strategy at each ratio and
/// scores the result against `reference`. Returns `(rows, table)`.
#[pyfunction]
#[pyo3(signature = (svg, reference, strategies=None, ratios=vec![0.1, 0.2, 0.3], smoothing=layervec::raster::DEFAULT_SMOOTHING))]
fn prune_bench(
    py: Python<'_>,
    svg: PathBuf,
    reference: PathBuf,
    strategies: Option<Vec<String>>,
    ratios: Vec<f64>,
    smoothing: f64,
) -> PyResult<(Py<PyAny>, String)> {
    let strategies: Vec<PruneStrategy> = match strategies {
        None => PruneStrategy::ALL.to_vec(),
        Some(names) => names.iter().map(|s| s.parse().map_err(to_py_err)).collect::<PyResult<_>>()?,
    };
    let rows = py
        .detach(|| -> layervec::Result<_> {
            let doc = parse_svg_subset(&svg)?;
            let image = read_png(&reference)?;
            let settings = RenderSettings::new(doc.canvas_width, doc.canvas_height).with_smoothing(smoothing);
            prune_benchmark(&doc.flattened(), &image, &strategies, &ratios, &settings)
        })
        .map_err(to_py_err)?;
    Ok((to_py(py, &rows)?, bench_table(&rows)))
}

#[pymodule]
fn pylayervec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(vectorize, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(contributions, m)?)?;
    m.add_function(wrap_pyfunction!(prune_bench, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
