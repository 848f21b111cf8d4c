mod common;

use layervec::io::metrics::{compute_metrics, evaluate_document};
use layervec::pipeline::{content_adaptive_init, derive_seed, optimize_layer, run_alv, vectorize_document, AlvConfig};
use layervec::raster::composite;
use layervec::scene::{LayerTarget, Mask, Point, RgbaImage, VectorDocument};

fn quick(budget: usize, iterations: usize) -> AlvConfig {
    AlvConfig {
        budget,
        iterations,
        seed: 11,
        ..AlvConfig::default()
    }
}

fn background(w: usize, h: usize) -> LayerTarget {
    let image = RgbaImage::from_fn(w, h, |x, _| {
        let u = x as f64 / w as f64;
        [0.2 + 0.5 * u, 0.6, 0.8 - 0.4 * u, 1.0]
    });
    LayerTarget::new("background", image, Mask::from_fn(w, h, |_, _| true)).unwrap()
}

#[test]
fn flat_disk_fits_closely() {
    let target = common::smooth_disk_target(32, 32, 16.0, 16.0, 9.0, [0.9, 0.3, 0.1]);
    let cfg = quick(8, 600);
    let (layer, trace) = run_alv(&target, &cfg, 8, 3).unwrap();
    let m = compute_metrics(&composite(&layer, &cfg.render_settings(32, 32)), &target.image, Some(&target.mask)).unwrap();
    assert!(m.psnr >= 35.0, "in-mask PSNR {:.2} dB", m.psnr);
    assert!(trace.records.last().unwrap().iteration <= 600);
}

#[test]
fn pruning_shrinks_an_over_seeded_layer() {
    let target = common::smooth_disk_target(32, 32, 16.0, 16.0, 9.0, [0.1, 0.5, 0.9]);
    let start = content_adaptive_init(&target, 20, 4).unwrap();
    let run = |prune: bool| {
        let cfg = AlvConfig {
            enable_prune: prune,
            ..quick(20, AlvConfig::default().iterations)
        };
        let (layer, trace) = optimize_layer(&target, &cfg, start.clone(), 4).unwrap();
        (layer.len(), trace.final_loss().unwrap().total)
    };
    let (n_on, loss_on) = run(true);
    let (n_off, loss_off) = run(false);
    assert!(n_on < n_off, "{n_on} vs {n_off} primitives");
    assert!(
        (loss_on - loss_off).abs() <= 0.1 * loss_off,
        "final loss {loss_on:.3e} with pruning ({n_on} paths) vs {loss_off:.3e} without ({n_off} paths)"
    );
}

#[test]
fn seeds_start_inside_the_mask() {
    let mut rng = common::rng(77);
    for k in 0..100 {
        let target = common::random_target(&mut rng, 24, 24);
        let layer = content_adaptive_init(&target, 12, k).unwrap();
        assert_eq!(layer.len(), 12);
        for prim in &layer.primitives {
            let joins: Vec<Point> = prim.points().iter().step_by(3).copied().collect();
            let c = joins.iter().fold(Point::default(), |a, &p| a + p) * (1.0 / joins.len() as f64);
            assert!(target.mask.get(c.x.floor() as usize, c.y.floor() as usize), "seed at {c:?}");
        }
    }
}

#[test]
fn single_layer_document_matches_direct_run() {
    let target = common::disk_target(24, 24, 12.0, 12.0, 7.0, [0.4, 0.8, 0.2]);
    let cfg = quick(10, 400);
    let doc = vectorize_document(std::slice::from_ref(&target), None, &cfg).unwrap();
    let (layer, trace) = run_alv(&target, &cfg, 10, derive_seed(cfg.seed, 0)).unwrap();
    assert_eq!(doc.document.layers[0].vector, layer);
    assert_eq!(doc.traces[0].records.len(), trace.records.len());
}

fn two_layers() -> Vec<LayerTarget> {
    vec![background(32, 32), common::disk_target(32, 32, 14.0, 18.0, 8.0, [0.95, 0.85, 0.1])]
}

#[test]
fn two_layer_document_reconstructs() {
    let targets = two_layers();
    let cfg = AlvConfig { jobs: 2, ..quick(48, 600) };
    let run = vectorize_document(&targets, None, &cfg).unwrap();
    let report = evaluate_document(&run.document, &targets, cfg.smoothing, &[]).unwrap();
    assert!(report.document.psnr >= 28.0, "document PSNR {:.2} dB", report.document.psnr);
    assert_eq!(run.traces.len(), 2);
}

#[test]
fn dropping_the_top_layer_leaves_the_background_fit() {
    let targets = two_layers();
    let cfg = quick(32, 400);
    let run = vectorize_document(&targets, None, &cfg).unwrap();
    let bottom = &run.document.layers[0].vector;

    let mut truncated = VectorDocument::new(32, 32);
    truncated.push_layer(bottom.clone(), None);
    let settings = cfg.render_settings(32, 32);
    let a = composite(&truncated.flattened(), &settings);
    let b = composite(bottom, &settings);
    assert_eq!(a.alpha, b.alpha);
    for i in 0..settings.pixel_count() {
        assert_eq!(a.premultiplied(i), b.premultiplied(i));
    }

    let areas = [32 * 32, targets[1].mask.count()];
    let budgets = layervec::pipeline::proportional_budgets(&areas, cfg.budget);
    let (alone, _) = run_alv(&targets[0], &cfg, budgets[0], derive_seed(cfg.seed, 0)).unwrap();
    assert_eq!(&alone, bottom);
}
