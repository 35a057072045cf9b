//! Center-of-mass landmark extraction from activation stacks, and the
//! image-discrepancy loss used to score a registration.
//!
//! The activation stack is the plug point for externally produced deep
//! features: any backbone that emits non-negative per-landmark heat maps
//! can drive the solvers through this module. Channel `i` is converted to
//! landmark `i` as the intensity-weighted mean of the pixel-center
//! coordinates, rescaled to the normalized [-1, 1] range, which keeps
//! localization approximately translation-equivariant.

use rayon::prelude::*;

use crate::error::{GeomError, MetricError};
use crate::geom::{pixel_to_normalized, LandmarkSet, Point2};
use crate::warp::ImageGrid;

/// Channels whose total mass falls below this are flagged as degenerate
/// and yield the landmark (0, 0).
pub const DEGENERATE_MASS_EPS: f64 = 1e-12;

/// N non-negative activation maps sharing one h×w layout, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationStack {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ActivationStack {
    /// Panics on empty shape or on negative / non-finite samples.
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert!(channels >= 1, "need at least one channel");
        assert!(height >= 1 && width >= 1, "maps must be at least 1x1");
        assert_eq!(data.len(), channels * height * width);
        assert!(
            data.iter().all(|v| v.is_finite() && *v >= 0.0),
            "activations must be finite and non-negative"
        );
        ActivationStack {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        ActivationStack {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[i * n..(i + 1) * n]
    }
}

/// Result of center-of-mass extraction: one landmark per channel plus the
/// indices of channels whose mass was too small to localize.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkExtraction {
    points: Vec<Point2>,
    degenerate_channels: Vec<usize>,
}

impl LandmarkExtraction {
    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn degenerate_channels(&self) -> &[usize] {
        &self.degenerate_channels
    }

    pub fn has_degenerate_channels(&self) -> bool {
        !self.degenerate_channels.is_empty()
    }

    /// All landmarks, degenerate ones included, as a solver-ready set.
    /// Fails when fewer than three channels were extracted.
    pub fn landmark_set(&self) -> Result<LandmarkSet, GeomError> {
        LandmarkSet::new(self.points.clone())
    }

    /// Landmarks with degenerate channels dropped, for callers that opt
    /// in to excluding them; pair this with the same filter on the other
    /// image so indices stay matched.
    pub fn landmark_set_excluding_degenerate(&self) -> Result<LandmarkSet, GeomError> {
        let pts = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.degenerate_channels.contains(i))
            .map(|(_, &p)| p)
            .collect();
        LandmarkSet::new(pts)
    }
}

/// Kahan-compensated accumulator; keeps channel sums independent of
/// chunking so parallel and sequential reductions agree.
#[derive(Default, Clone, Copy)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

fn channel_center_of_mass(map: &[f64], height: usize, width: usize) -> (Point2, bool) {
    let mut mass = Compensated::default();
    let mut mx = Compensated::default();
    let mut my = Compensated::default();
    for r in 0..height {
        for c in 0..width {
            let a = map[r * width + c];
            if a == 0.0 {
                continue;
            }
            let p = pixel_to_normalized(c as f64, r as f64, width, height);
            mass.add(a);
            mx.add(a * p.x);
            my.add(a * p.y);
        }
    }
    if mass.sum < DEGENERATE_MASS_EPS {
        (Point2::new(0.0, 0.0), true)
    } else {
        (Point2::new(mx.sum / mass.sum, my.sum / mass.sum), false)
    }
}

/// Convert each activation channel to a landmark via its center of mass.
///
/// Channels are processed in parallel; each channel is reduced
/// sequentially with compensated summation, so the output is identical
/// regardless of thread count.
pub fn center_of_mass(stack: &ActivationStack) -> LandmarkExtraction {
    let per_channel: Vec<(Point2, bool)> = (0..stack.channels)
        .into_par_iter()
        .map(|i| channel_center_of_mass(stack.channel(i), stack.height, stack.width))
        .collect();

    let mut points = Vec::with_capacity(per_channel.len());
    let mut degenerate = Vec::new();
    for (i, (p, is_degenerate)) in per_channel.into_iter().enumerate() {
        points.push(p);
        if is_degenerate {
            degenerate.push(i);
        }
    }
    LandmarkExtraction {
        points,
        degenerate_channels: degenerate,
    }
}

/// Mean squared intensity difference between two same-shaped images.
pub fn mse_loss(template: &ImageGrid, registered: &ImageGrid) -> Result<f64, MetricError> {
    if !template.same_shape(registered) {
        return Err(MetricError::ShapeMismatch {
            a_h: template.height(),
            a_w: template.width(),
            b_h: registered.height(),
            b_w: registered.width(),
        });
    }
    let n = template.values().len() as f64;
    let sum: f64 = template
        .values()
        .iter()
        .zip(registered.values().iter())
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok(sum / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_stack_at(centers: &[(f64, f64)], h: usize, w: usize, sigma: f64) -> ActivationStack {
        let mut data = Vec::with_capacity(centers.len() * h * w);
        for &(cc, cr) in centers {
            for r in 0..h {
                for c in 0..w {
                    let d2 = (c as f64 - cc).powi(2) + (r as f64 - cr).powi(2);
                    data.push((-d2 / (2.0 * sigma * sigma)).exp());
                }
            }
        }
        ActivationStack::new(centers.len(), h, w, data)
    }

    #[test]
    fn delta_at_midpoint_maps_to_origin() {
        let mut stack = ActivationStack::zeros(1, 8, 8);
        // 8x8 has no single central pixel; use the exact midpoint via a
        // symmetric 2x2 block instead of one pixel
        for (r, c) in [(3, 3), (3, 4), (4, 3), (4, 4)] {
            stack.channel_mut(0)[r * 8 + c] = 1.0;
        }
        let out = center_of_mass(&stack);
        assert!(out.points()[0].x.abs() < 1e-15);
        assert!(out.points()[0].y.abs() < 1e-15);

        // odd-sized map: the single center pixel is the midpoint
        let mut odd = ActivationStack::zeros(1, 9, 9);
        odd.channel_mut(0)[4 * 9 + 4] = 1.0;
        let out = center_of_mass(&odd);
        assert_eq!(out.points()[0], Point2::new(0.0, 0.0));
    }

    #[test]
    fn uniform_channel_maps_to_origin() {
        let stack = ActivationStack::new(1, 6, 10, vec![0.5; 60]);
        let out = center_of_mass(&stack);
        assert!(out.points()[0].x.abs() < 1e-14);
        assert!(out.points()[0].y.abs() < 1e-14);
    }

    #[test]
    fn gaussian_blob_matches_brute_force_mean() {
        let stack = gaussian_stack_at(&[(167.5, 55.5)], 224, 224, 3.0);
        let out = center_of_mass(&stack);
        let p = out.points()[0];
        assert!((p.x - 0.5).abs() < 1e-3, "x = {}", p.x);
        assert!((p.y - -0.5).abs() < 1e-3, "y = {}", p.y);

        // brute-force weighted mean in plain f64, no compensation
        let map = stack.channel(0);
        let (mut m, mut sx, mut sy) = (0.0f64, 0.0f64, 0.0f64);
        for r in 0..224 {
            for c in 0..224 {
                let a = map[r * 224 + c];
                let q = pixel_to_normalized(c as f64, r as f64, 224, 224);
                m += a;
                sx += a * q.x;
                sy += a * q.y;
            }
        }
        assert!((p.x - sx / m).abs() < 1e-12);
        assert!((p.y - sy / m).abs() < 1e-12);
    }

    #[test]
    fn all_zero_channel_is_flagged_not_fatal() {
        let mut stack = ActivationStack::zeros(3, 8, 8);
        stack.channel_mut(0)[9] = 1.0;
        stack.channel_mut(2)[13] = 1.0;
        let out = center_of_mass(&stack);
        assert_eq!(out.degenerate_channels(), &[1]);
        assert_eq!(out.points()[1], Point2::new(0.0, 0.0));
        assert_eq!(out.len(), 3);
        assert!(out.landmark_set().is_ok());
    }

    #[test]
    fn integer_shift_translates_landmarks_exactly() {
        let (h, w) = (48, 64);
        let base = gaussian_stack_at(&[(20.0, 25.0), (30.5, 18.0), (40.0, 30.0)], h, w, 2.0);
        let (dc, dr) = (6i64, -4i64);

        // shift every channel by (dc, dr) with zero padding
        let mut shifted = ActivationStack::zeros(3, h, w);
        for ch in 0..3 {
            for r in 0..h as i64 {
                for c in 0..w as i64 {
                    let (sr, sc) = (r - dr, c - dc);
                    if sr >= 0 && sc >= 0 && (sr as usize) < h && (sc as usize) < w {
                        shifted.channel_mut(ch)[r as usize * w + c as usize] =
                            base.channel(ch)[sr as usize * w + sc as usize];
                    }
                }
            }
        }

        let a = center_of_mass(&base);
        let b = center_of_mass(&shifted);
        for (pa, pb) in a.points().iter().zip(b.points().iter()) {
            let want_dx = 2.0 * dc as f64 / w as f64;
            let want_dy = 2.0 * dr as f64 / h as f64;
            assert!((pb.x - pa.x - want_dx).abs() < 1e-9);
            assert!((pb.y - pa.y - want_dy).abs() < 1e-9);
        }
    }

    #[test]
    fn positive_scaling_leaves_landmarks_unchanged() {
        let stack = gaussian_stack_at(&[(10.0, 12.0), (22.5, 7.25)], 32, 32, 2.5);
        let scaled_data: Vec<f64> = stack.data().iter().map(|v| v * 37.5).collect();
        let scaled = ActivationStack::new(2, 32, 32, scaled_data);

        let a = center_of_mass(&stack);
        let b = center_of_mass(&scaled);
        for (pa, pb) in a.points().iter().zip(b.points().iter()) {
            assert!((pa.x - pb.x).abs() < 1e-12);
            assert!((pa.y - pb.y).abs() < 1e-12);
        }
    }

    #[test]
    fn landmarks_stay_in_normalized_range() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let data: Vec<f64> = (0..4 * 16 * 16).map(|_| rng.gen_range(0.0..1.0)).collect();
            let stack = ActivationStack::new(4, 16, 16, data);
            for p in center_of_mass(&stack).points() {
                assert!(p.x >= -1.0 && p.x <= 1.0);
                assert!(p.y >= -1.0 && p.y <= 1.0);
            }
        }
    }

    #[test]
    fn mse_basics() {
        let a = ImageGrid::zeros(224, 224, (1.0, 1.0));
        let b = ImageGrid::from_fn(224, 224, (1.0, 1.0), |_, _| 1.0);
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(mse_loss(&a, &b).unwrap(), 1.0);

        let c = ImageGrid::zeros(10, 10, (1.0, 1.0));
        assert!(matches!(
            mse_loss(&a, &c),
            Err(MetricError::ShapeMismatch { .. })
        ));
    }
}
