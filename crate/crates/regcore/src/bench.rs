//! Latency measurement for the solve + warp cycle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::geom::{KernelVariant, LandmarkSet, Point2, TransformModel};
use crate::pipeline::ModelKind;
use crate::solvers::{solve_affine, solve_rigid, solve_tps};
use crate::warp::{build_sample_grid, resample_bilinear, ImageGrid};

/// Timing summary over repeated solve + grid + resample cycles.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub model: String,
    pub landmark_count: usize,
    pub grid_size: usize,
    pub iterations: usize,
    pub single_thread_median_ms: f64,
    pub single_thread_p95_ms: f64,
    pub multi_thread_median_ms: f64,
    pub multi_thread_p95_ms: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

fn run_cycles(
    model: ModelKind,
    mov: &LandmarkSet,
    fix: &LandmarkSet,
    image: &ImageGrid,
    grid_size: usize,
    iters: usize,
) -> Vec<f64> {
    let mut times = Vec::with_capacity(iters);
    for _ in 0..iters {
        let start = std::time::Instant::now();
        let transform = match model {
            ModelKind::Rigid => TransformModel::Rigid(solve_rigid(mov, fix).unwrap()),
            ModelKind::Affine => TransformModel::Affine(solve_affine(mov, fix).unwrap()),
            ModelKind::Tps => TransformModel::Tps(
                solve_tps(mov, fix, 0.1, KernelVariant::StandardRLogR).unwrap(),
            ),
        };
        let grid = build_sample_grid(&transform, grid_size, grid_size);
        let out = resample_bilinear(image, &grid);
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box(out);
        times.push(elapsed);
    }
    times
}

/// Measure one full registration cycle, single- and multi-threaded.
/// The landmark pairs are synthetic, derived from `seed`.
pub fn run_bench(m: usize, grid_size: usize, iters: usize, model: ModelKind, seed: u64) -> BenchReport {
    assert!(m >= 3 && grid_size >= 8 && iters >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_set = |rng: &mut ChaCha8Rng| {
        LandmarkSet::new(
            (0..m)
                .map(|_| {
                    Point2::new(rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9))
                })
                .collect(),
        )
        .unwrap()
    };
    let mov = random_set(&mut rng);
    let fix = LandmarkSet::new(
        mov.iter()
            .map(|p| {
                Point2::new(
                    p.x + rng.gen_range(-0.02..0.02),
                    p.y + rng.gen_range(-0.02..0.02),
                )
            })
            .collect(),
    )
    .unwrap();
    let image = ImageGrid::from_fn(grid_size, grid_size, (1.0, 1.0), |r, c| {
        ((r * 31 + c * 17) % 251) as f64 / 251.0
    });

    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let mut st = single.install(|| run_cycles(model, &mov, &fix, &image, grid_size, iters));
    st.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut mt = run_cycles(model, &mov, &fix, &image, grid_size, iters);
    mt.sort_by(|a, b| a.partial_cmp(b).unwrap());

    BenchReport {
        model: model.name().to_string(),
        landmark_count: m,
        grid_size,
        iterations: iters,
        single_thread_median_ms: percentile(&st, 0.5),
        single_thread_p95_ms: percentile(&st, 0.95),
        multi_thread_median_ms: percentile(&mt, 0.5),
        multi_thread_p95_ms: percentile(&mt, 0.95),
    }
}
