use layervec::optimize::{LossConfig, Objective};
use layervec::raster::RenderSettings;
use layervec::scene::LayerVector;

/// Which parameter of which primitive to perturb.
#[derive(Clone, Copy, Debug)]
enum Param {
    PointX(usize, usize),
    PointY(usize, usize),
    Color(usize, usize),
    Opacity(usize),
}

fn perturbed(layer: &LayerVector, param: Param, delta: f64) -> LayerVector {
    let mut out = layer.clone();
    match param {
        Param::PointX(i, k) => out.primitives[i].points_mut()[k].x += delta,
        Param::PointY(i, k) => out.primitives[i].points_mut()[k].y += delta,
        // Paint is stored unclamped here; perturbations stay inside [0, 1]
        // because the generator keeps values away from the bounds.
        Param::Color(i, c) => out.primitives[i].fill_rgb[c] += delta,
        Param::Opacity(i) => out.primitives[i].fill_opacity += delta,
    }
    out
}

pub struct FdStats {
    pub checked: usize,
    pub worst_rel: f64,
    pub failures: Vec<String>,
}

/// Compares analytic gradients with central differences on `scenes`
/// random 3-primitive 24x24 scenes.
pub fn finite_difference_check(scenes: u64, seed_base: u64) -> FdStats {
    let mut stats = FdStats { checked: 0, worst_rel: 0.0, failures: Vec::new() };
    for seed in seed_base..seed_base + scenes {
        let mut rng = super::rng(seed);
        let target = super::random_target(&mut rng, 24, 24);
        let mut layer = super::random_layer(&mut rng, 3, 24, 24, (3.0, 9.0), 1.5, (0.3, 0.95));
        for p in &mut layer.primitives {
            for c in &mut p.fill_rgb {
                *c = 0.05 + 0.9 * *c;
            }
        }
        let settings = RenderSettings::new(24, 24);
        let objective = Objective::new(&target, LossConfig::default(), settings).unwrap();
        let (_, grads) = objective.loss_and_gradients(&layer);
        let mut params = Vec::new();
        for (i, p) in layer.primitives.iter().enumerate() {
            for k in 0..p.points().len() {
                params.push((Param::PointX(i, k), grads.primitives[i].points[k].x, 1e-3));
                params.push((Param::PointY(i, k), grads.primitives[i].points[k].y, 1e-3));
            }
            for c in 0..3 {
                params.push((Param::Color(i, c), grads.primitives[i].rgb[c], 1e-4));
            }
            params.push((Param::Opacity(i), grads.primitives[i].opacity, 1e-4));
        }
        for (param, analytic, h) in params {
            let plus = perturbed(&layer, param, h);
            let minus = perturbed(&layer, param, -h);
            let fd = (objective.loss(&plus).total - objective.loss(&minus).total) / (2.0 * h);
            let abs = (analytic - fd).abs();
            let scale = analytic.abs().max(fd.abs());
            stats.checked += 1;
            let rel = if scale > 0.0 { abs / scale } else { 0.0 };
            if scale > 1e-5 {
                stats.worst_rel = stats.worst_rel.max(rel);
            }
            if abs > 1e-6 && rel >= 1e-3 {
                stats.failures.push(format!("seed {seed} {param:?}: analytic {analytic:e} fd {fd:e} rel {rel:e}"));
            }
        }
    }
    stats
}
