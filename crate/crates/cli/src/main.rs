//! `layervec` command-line tool.
//!
//! Exit status is 0 on success, 1 for invalid input or usage and 2 when a
//! run fails on valid input.

mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;
use layervec::adapt::PruneStrategy;
use layervec::io::manifest::{load_manifest, threshold_mask};
use layervec::io::metrics::{compute_metrics, evaluate_document};
use layervec::io::raster::{image_as_render, read_png, render_to_image, write_png};
use layervec::io::report::{bench_table, prune_benchmark, write_json, write_trace};
use layervec::io::{emit_svg, parse_svg_subset, write_document};
use layervec::pipeline::{vectorize_document, AlvConfig};
use layervec::raster::{composite, contribution_scores_from_maps, rasterize_layer, RenderSettings};
use layervec::scene::VectorDocument;
use layervec::{Error, Result};
use serde::Serialize;

use args::{default_jobs, Cli, Command, InspectArgs, MetricsArgs, PruneBenchArgs, RenderArgs, VectorizeArgs};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.print_defaults {
        let defaults = AlvConfig {
            jobs: default_jobs(),
            ..AlvConfig::default()
        };
        println!("{}", to_json(&defaults));
        return Ok(());
    }
    match cli.command {
        Some(Command::Vectorize(a)) => vectorize(a),
        Some(Command::Render(a)) => render(a),
        Some(Command::PruneBench(a)) => prune_bench(a),
        Some(Command::Metrics(a)) => metrics(a),
        Some(Command::Inspect(a)) => inspect(a),
        None => Err(Error::InvalidArgument(
            "no subcommand given (try `layervec --help`)".into(),
        )),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("reports serialize")
}

fn print_config<T: Serialize>(value: &T) {
    println!("config: {}", to_json(value));
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn check_smoothing(smoothing: f64) -> Result<()> {
    RenderSettings::new(1, 1).with_smoothing(smoothing).validate()
}

fn vectorize(a: VectorizeArgs) -> Result<()> {
    let cfg = a.hyper.config();
    print_config(&cfg);
    cfg.validate()?;
    let loaded = load_manifest(&a.input)?;
    let clock = Instant::now();
    let run = vectorize_document(&loaded.targets, Some(&loaded.provenance), &cfg)?;
    let seconds = clock.elapsed().as_secs_f64();

    let trace_path = a.trace.unwrap_or_else(|| sibling(&a.out, ".trace.jsonl"));
    let report_path = a.report.unwrap_or_else(|| sibling(&a.out, ".metrics.json"));
    emit_svg(&run.document, &a.out)?;
    write_trace(&trace_path, &run.traces)?;
    if let Some(path) = &a.document {
        write_document(path, &run.document)?;
    }
    let layer_seconds: Vec<f64> = run
        .traces
        .iter()
        .map(|t| t.records.last().map_or(0.0, |r| r.seconds))
        .collect();
    let mut report = evaluate_document(&run.document, &loaded.targets, cfg.smoothing, &layer_seconds)?;
    report.seconds = seconds;
    write_json(&report_path, &report)?;

    for layer in &report.layers {
        println!(
            "layer {}: {} primitives, PSNR {:.2} dB, leakage {:.4}",
            layer.layer_id, layer.primitives, layer.metrics.psnr, layer.leakage
        );
    }
    println!(
        "document: PSNR {:.2} dB, SSIM {:.4}, {} primitives, {:.1} s",
        report.document.psnr, report.document.ssim, report.primitives, seconds
    );
    println!("wrote {}, {}, {}", a.out.display(), trace_path.display(), report_path.display());
    Ok(())
}

fn render(a: RenderArgs) -> Result<()> {
    print_config(&serde_json::json!({ "scale": a.scale, "smoothing": a.smoothing }));
    if !(a.scale > 0.0) || !a.scale.is_finite() {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {}", a.scale)));
    }
    check_smoothing(a.smoothing)?;
    let doc = parse_svg_subset(&a.input)?;
    let mut stack = doc.flattened();
    let width = (doc.canvas_width as f64 * a.scale).round().max(1.0) as usize;
    let height = (doc.canvas_height as f64 * a.scale).round().max(1.0) as usize;
    if a.scale != 1.0 {
        for p in &mut stack.primitives {
            p.scale(a.scale);
        }
    }
    let settings = RenderSettings::new(width, height).with_smoothing(a.smoothing);
    let image = render_to_image(&composite(&stack, &settings));
    write_png(&a.out, &image)?;
    println!("wrote {} ({width}x{height}, {} paths)", a.out.display(), stack.len());
    Ok(())
}

fn prune_bench(a: PruneBenchArgs) -> Result<()> {
    let strategies = if a.strategy.is_empty() { PruneStrategy::ALL.to_vec() } else { a.strategy.clone() };
    print_config(&serde_json::json!({
        "strategies": strategies,
        "ratios": a.ratio,
        "smoothing": a.smoothing,
    }));
    check_smoothing(a.smoothing)?;
    let doc = parse_svg_subset(&a.input)?;
    let reference = read_png(&a.reference)?;
    if reference.width != doc.canvas_width || reference.height != doc.canvas_height {
        return Err(Error::DimensionMismatch(format!(
            "reference {} is {}x{} but the SVG canvas is {}x{}",
            a.reference.display(),
            reference.width,
            reference.height,
            doc.canvas_width,
            doc.canvas_height
        )));
    }
    let stack = doc.flattened();
    if stack.is_empty() {
        return Err(Error::InvalidArgument(format!("{} contains no paths", a.input.display())));
    }
    let settings = RenderSettings::new(doc.canvas_width, doc.canvas_height).with_smoothing(a.smoothing);
    let rows = prune_benchmark(&stack, &reference, &strategies, &a.ratio, &settings)?;
    print!("{}", bench_table(&rows));
    if let Some(out) = &a.out {
        write_json(out, &rows)?;
    }
    Ok(())
}

fn metrics(a: MetricsArgs) -> Result<()> {
    print_config(&serde_json::json!({ "mask": a.mask }));
    let image = read_png(&a.input)?;
    let reference = read_png(&a.reference)?;
    let mask = match &a.mask {
        Some(path) => Some(threshold_mask(&read_png(path)?).map_err(|fraction| {
            Error::InvalidArgument(format!(
                "mask {} is not binary ({:.1}% of values lie between 0.25 and 0.75)",
                path.display(),
                100.0 * fraction
            ))
        })?),
        None => None,
    };
    let m = compute_metrics(&image_as_render(&image), &reference, mask.as_ref())?;
    println!("{}", to_json(&m));
    if let Some(out) = &a.out {
        write_json(out, &m)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PrimitiveReport {
    index: usize,
    /// Alpha left visible after everything above it.
    contribution: f64,
    area: f64,
    opacity: f64,
    occluded_fraction: f64,
}

#[derive(Serialize)]
struct LayerReport {
    layer_id: String,
    primitives: Vec<PrimitiveReport>,
    contribution_total: f64,
    /// Sum of the layer's composite alpha; equals `contribution_total`.
    alpha_total: f64,
}

fn inspect_document(doc: &VectorDocument, smoothing: f64) -> Vec<LayerReport> {
    let settings = RenderSettings::new(doc.canvas_width, doc.canvas_height).with_smoothing(smoothing);
    doc.layers
        .iter()
        .map(|layer| {
            let maps = rasterize_layer(&layer.vector, &settings);
            let scores = contribution_scores_from_maps(&maps, &settings);
            let primitives = maps
                .iter()
                .zip(&scores)
                .enumerate()
                .map(|(index, (map, &c))| {
                    let area = map.total();
                    PrimitiveReport {
                        index,
                        contribution: c,
                        area,
                        opacity: layer.vector.primitives[index].fill_opacity,
                        occluded_fraction: if area > 0.0 { (1.0 - c / area).max(0.0) } else { 0.0 },
                    }
                })
                .collect();
            LayerReport {
                layer_id: layer.vector.layer_id.clone(),
                primitives,
                contribution_total: scores.iter().sum(),
                alpha_total: composite(&layer.vector, &settings).alpha.iter().sum(),
            }
        })
        .collect()
}

fn inspect(a: InspectArgs) -> Result<()> {
    print_config(&serde_json::json!({ "smoothing": a.smoothing }));
    check_smoothing(a.smoothing)?;
    let doc = parse_svg_subset(&a.input)?;
    let report = inspect_document(&doc, a.smoothing);
    for layer in &report {
        let hidden = layer.primitives.iter().filter(|p| p.contribution < 1.0).count();
        println!(
            "layer {}: {} paths, visible alpha {:.2} px, {hidden} with under one visible pixel",
            layer.layer_id,
            layer.primitives.len(),
            layer.contribution_total
        );
    }
    match &a.out {
        Some(out) => write_json(out, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize")),
    }
    Ok(())
}
