//! Time the full solve + warp cycle (64 landmark pairs, 224x224 grid).
//!
//! Run with: cargo run --release --example latency_bench

use regcore::bench::run_bench;
use regcore::pipeline::ModelKind;

fn main() {
    println!("one cycle = fit transform + build 224x224 sample grid + bilinear resample\n");
    for model in [ModelKind::Rigid, ModelKind::Affine, ModelKind::Tps] {
        let r = run_bench(64, 224, 20, model, 0xBE7C);
        println!(
            "{:>6} (M=64): single-thread median {:>7.2} ms (p95 {:>7.2}), \
             multi-thread median {:>7.2} ms",
            r.model, r.single_thread_median_ms, r.single_thread_p95_ms,
            r.multi_thread_median_ms
        );
    }
}
