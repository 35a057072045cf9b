//! The thin-plate-spline regularization family: as λ grows the kernel
//! weights shrink, bending energy falls, and the warp converges to the
//! plain affine least-squares fit.
//!
//! Run with: cargo run --release --example spline_regularization

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use regcore::geom::{KernelVariant, LandmarkSet, Point2};
use regcore::solvers::{solve_affine, solve_tps, tps_bending_energy};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let random_set = |rng: &mut ChaCha8Rng| {
        LandmarkSet::new(
            (0..12)
                .map(|_| Point2::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)))
                .collect(),
        )
        .unwrap()
    };
    let mov = random_set(&mut rng);
    let fix = random_set(&mut rng);

    let affine = solve_affine(&mov, &fix).unwrap();
    let queries: Vec<Point2> = (0..200)
        .map(|_| Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();

    println!("{:>10}  {:>12}  {:>14}  {:>16}", "lambda", "‖W‖_F", "bending energy", "max |tps-affine|");
    for lambda in [0.0, 0.01, 0.1, 1.0, 10.0, 1e3, 1e6] {
        let tps = solve_tps(&mov, &fix, lambda, KernelVariant::StandardRLogR).unwrap();
        let w_norm: f64 = tps
            .weights()
            .iter()
            .map(|w| w.norm_squared())
            .sum::<f64>()
            .sqrt();
        let energy = tps_bending_energy(&tps);
        let gap = queries
            .iter()
            .map(|&q| tps.apply(q).distance(affine.apply(q)))
            .fold(0.0f64, f64::max);
        println!("{lambda:>10.0e}  {w_norm:>12.4e}  {energy:>14.4e}  {gap:>16.4e}");
    }
    println!("\nat lambda = 0 the spline interpolates its control points exactly:");
    let tps = solve_tps(&mov, &fix, 0.0, KernelVariant::StandardRLogR).unwrap();
    let worst = mov
        .iter()
        .zip(fix.iter())
        .map(|(m, f)| tps.apply(*m).distance(*f))
        .fold(0.0f64, f64::max);
    println!("  max residual at the 12 control points: {worst:.2e}");
}
