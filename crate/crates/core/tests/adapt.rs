mod common;

use layervec::adapt::{add_primitives, build_error_field, prune, sample_additions, ErrorField, PruneConfig, PruneStrategy};
use layervec::optimize::{LossConfig, Objective, OptimizerConfig, OptimizerState};
use layervec::raster::{composite, RenderSettings};
use layervec::scene::{make_seed_primitive, LayerTarget, LayerVector, Mask, Point, RgbaImage};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Mean squared premultiplied RGBA difference between two renders.
fn render_gap(a: &LayerVector, b: &LayerVector, s: &RenderSettings) -> f64 {
    let (ra, rb) = (composite(a, s), composite(b, s));
    let n = s.pixel_count();
    let sq: f64 = (0..n)
        .map(|i| {
            let (pa, pb) = (ra.premultiplied(i), rb.premultiplied(i));
            (0..3).map(|ch| (pa[ch] - pb[ch]).powi(2)).sum::<f64>() + (ra.alpha[i] - rb.alpha[i]).powi(2)
        })
        .sum();
    sq / (4 * n) as f64
}

#[test]
fn occlusion_pruning_beats_heuristics_and_trails_oracle() {
    let s = RenderSettings::new(16, 16);
    let (mut beats_area, mut beats_opacity, mut oracle_wins) = (0u64, 0u64, 0u64);
    let seeds = 50u64;
    for seed in 0..seeds {
        let mut rng = common::rng(3000 + seed);
        let layer = common::random_layer(&mut rng, 10, 16, 16, (2.0, 7.0), 1.5, (0.2, 1.0));
        let reference = composite(&layer, &s);
        let image = RgbaImage::from_fn(16, 16, |x, y| {
            let i = y * 16 + x;
            let c = reference.rgb[i];
            [c[0], c[1], c[2], reference.alpha[i]]
        });
        let target = LayerTarget::new("t", image, Mask::from_fn(16, 16, |_, _| true)).unwrap();
        let gap = |strategy| {
            let cfg = PruneConfig {
                strategy,
                tau_p: 0.0,
                ratio: Some(0.2),
            };
            let out = prune(&layer, &target, &cfg, &s).unwrap();
            assert_eq!(out.removed.len(), 2);
            render_gap(&out.layer, &layer, &s)
        };
        let ours = gap(PruneStrategy::OcclusionAware);
        let eps = 1e-15;
        beats_area += (ours <= gap(PruneStrategy::Area) + eps) as u64;
        beats_opacity += (ours <= gap(PruneStrategy::Opacity) + eps) as u64;
        oracle_wins += (gap(PruneStrategy::Oracle) <= ours + eps) as u64;
    }
    let need = seeds * 4 / 5;
    assert!(beats_area >= need, "ours at least as good as area on {beats_area}/{seeds}");
    assert!(beats_opacity >= need, "ours at least as good as opacity on {beats_opacity}/{seeds}");
    assert!(oracle_wins >= need, "oracle at least as good as ours on {oracle_wins}/{seeds}");
}

#[test]
fn uniform_field_samples_uniformly() {
    let (w, h) = (12, 10);
    let mask: Vec<bool> = (0..w * h).map(|i| (i % w) >= 2 && (i / w) < 8).collect();
    let field = ErrorField {
        width: w,
        height: h,
        values: mask.iter().map(|m| if *m { 0.3 } else { 0.0 }).collect(),
        mask: mask.clone(),
    };
    let draws = 100_000;
    let coords = sample_additions(&field, draws, 0.5, 17).unwrap();
    let mut counts = vec![0usize; w * h];
    for (x, y) in coords {
        counts[y * w + x] += 1;
    }
    let cells: Vec<usize> = (0..w * h).filter(|&i| mask[i]).collect();
    assert!(counts.iter().enumerate().all(|(i, c)| mask[i] || *c == 0));
    let expected = draws as f64 / cells.len() as f64;
    let chi2: f64 = cells.iter().map(|&i| (counts[i] as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((cells.len() - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi-square {chi2:.1} over {} cells, p = {p:.4}", cells.len());
}

#[test]
fn adding_where_the_error_is_reduces_loss() {
    let (w, h) = (32, 32);
    let inside = |x: usize, y: usize| (4..28).contains(&x) && (8..24).contains(&y);
    let image = RgbaImage::from_fn(w, h, |x, y| if inside(x, y) { [0.2, 0.7, 0.3, 1.0] } else { [0.0; 4] });
    let target = LayerTarget::new("bar", image, Mask::from_fn(w, h, inside)).unwrap();
    let s = RenderSettings::new(w, h);
    let objective = Objective::new(&target, LossConfig::default(), s).unwrap();
    let seed = make_seed_primitive(Point::new(10.0, 16.0), 5.0, [0.2, 0.7, 0.3, 1.0], 4).unwrap();
    let base = LayerVector::with_primitives("bar", vec![seed]);

    let run = |mut layer: LayerVector, steps: usize| {
        let mut opt = OptimizerState::new(OptimizerConfig::default(), steps, &layer).unwrap();
        for _ in 0..steps {
            let (_, g) = objective.loss_and_gradients(&layer);
            opt.step(&mut layer, &g).unwrap();
        }
        objective.loss(&layer).total
    };
    let before = objective.loss(&base).total;
    let field = build_error_field(&base, &objective, &target);
    let coords = sample_additions(&field, 3, 0.5, 5).unwrap();
    assert!(coords.iter().all(|&(x, y)| inside(x, y)));
    let mut grown = base.clone();
    add_primitives(&mut grown, &target, &coords).unwrap();
    let after = run(grown, 200);
    assert!(after < before, "{after} vs {before}");
    assert!(after < run(base, 200), "added primitives must beat optimizing the original alone");
}
