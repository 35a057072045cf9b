//! Generate a phantom dataset, write it to disk in the interchange
//! formats, and read a frame back.
//!
//! Run with: cargo run --release --example phantom_dataset

use regcore::io;
use regcore::landmarks::center_of_mass;
use regcore::phantom::{generate_phantom, PhantomConfig};

fn main() {
    let cfg = PhantomConfig {
        frame_count: 5,
        seed: 42,
        ..PhantomConfig::default()
    };
    let phantom = generate_phantom(&cfg);

    let dir = std::env::temp_dir().join("regcore_phantom_demo");
    io::write_phantom_dataset(&dir, &phantom).expect("dataset writes");
    println!(
        "wrote template + {} frames ({} organs, {} landmarks each) to {}",
        phantom.frames.len(),
        cfg.organ_count,
        cfg.landmark_count,
        dir.display()
    );

    // read one frame back through the file formats
    let image = io::read_image(&dir.join("frame_002.img")).unwrap();
    let masks = io::read_label_masks(&dir.join("frame_002.mask")).unwrap();
    let stack = io::read_activations(&dir.join("frame_002.act")).unwrap();
    println!(
        "\nframe_002: {}x{} px at {:?} mm, labels {:?}",
        image.height(),
        image.width(),
        image.spacing_mm(),
        masks.iter().map(|m| m.label.as_str()).collect::<Vec<_>>()
    );

    // the activation stack reproduces the stored oracle landmarks
    let com = center_of_mass(&stack);
    let gt: io::FrameGroundTruth = serde_json::from_str(
        &std::fs::read_to_string(dir.join("frame_002.json")).unwrap(),
    )
    .unwrap();
    let worst = com
        .points()
        .iter()
        .zip(gt.landmarks.iter())
        .map(|(a, b)| a.distance(*b))
        .fold(0.0f64, f64::max);
    println!(
        "center of mass of the {} stored activation maps matches the \
         ground-truth landmarks to {worst:.2e} (f32 file quantization)",
        stack.channels()
    );
}
