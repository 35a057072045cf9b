//! Extract landmarks from an activation stack with the center-of-mass
//! layer and demonstrate its translation equivariance.
//!
//! Run with: cargo run --release --example landmarks_from_activations

use regcore::landmarks::{center_of_mass, ActivationStack};

fn blob_stack(centers: &[(f64, f64)], h: usize, w: usize, sigma: f64) -> ActivationStack {
    let mut stack = ActivationStack::zeros(centers.len(), h, w);
    for (ch, &(cc, cr)) in centers.iter().enumerate() {
        let map = stack.channel_mut(ch);
        for r in 0..h {
            for c in 0..w {
                let d2 = (c as f64 - cc).powi(2) + (r as f64 - cr).powi(2);
                map[r * w + c] = (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    stack
}

fn main() {
    let (h, w) = (224, 224);
    let centers = [(60.0, 60.0), (150.5, 80.25), (111.5, 111.5), (90.0, 170.0)];
    let stack = blob_stack(&centers, h, w, 3.0);

    let extraction = center_of_mass(&stack);
    println!("channel -> landmark (normalized [-1, 1]):");
    for (i, p) in extraction.points().iter().enumerate() {
        println!("  {i}: ({:+.4}, {:+.4})", p.x, p.y);
    }

    // shift every map 10 px right, 5 px up: landmarks follow exactly
    let shifted_centers: Vec<(f64, f64)> =
        centers.iter().map(|&(c, r)| (c + 10.0, r - 5.0)).collect();
    let shifted = center_of_mass(&blob_stack(&shifted_centers, h, w, 3.0));
    println!("\nafter a (+10, -5) px shift, landmark deltas (want {:+.5}, {:+.5}):",
        2.0 * 10.0 / w as f64, 2.0 * -5.0 / h as f64);
    for (a, b) in extraction.points().iter().zip(shifted.points().iter()) {
        println!("  ({:+.5}, {:+.5})", b.x - a.x, b.y - a.y);
    }

    // an all-zero channel localizes nowhere and is flagged, not fatal
    let mut with_dead_channel = ActivationStack::zeros(3, 32, 32);
    with_dead_channel.channel_mut(0)[5 * 32 + 5] = 1.0;
    with_dead_channel.channel_mut(2)[20 * 32 + 9] = 1.0;
    let flagged = center_of_mass(&with_dead_channel);
    println!(
        "\ndegenerate channels in the 3-channel stack: {:?} (landmark defaults to the origin)",
        flagged.degenerate_channels()
    );
}
