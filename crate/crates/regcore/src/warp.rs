//! Dense transformation grids and resampling of images and masks.
//!
//! Warping is backward: the sample grid stores, for every output pixel,
//! the normalized coordinate in the *moving* image at which to sample.
//! A grid built from transform `T` therefore realizes `out = moving ∘ T`,
//! and the registration pipeline fits `T` from fixed landmarks to moving
//! landmarks so the output lives on the template lattice with no holes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::{normalized_to_pixel, pixel_to_normalized, Point2, TransformModel};

/// Sub-pixel tolerance below which sample coordinates snap to the exact
/// pixel center, keeping identity and integer-shift warps bit-exact
/// instead of smearing values across one-ulp bilinear weights. 1e-6 px is
/// far below any physically meaningful motion at 1 mm spacing.
pub const PIXEL_SNAP_TOL: f64 = 1e-6;

/// An H×W scalar image with physical pixel spacing in millimetres,
/// stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    /// (row spacing, column spacing) in mm.
    spacing_mm: (f64, f64),
    values: Vec<f64>,
}

impl ImageGrid {
    /// Panics on empty shape, non-positive spacing, or non-finite values.
    pub fn new(height: usize, width: usize, spacing_mm: (f64, f64), values: Vec<f64>) -> Self {
        assert!(height >= 1 && width >= 1, "image must be at least 1x1");
        assert!(
            spacing_mm.0 > 0.0 && spacing_mm.1 > 0.0,
            "pixel spacing must be strictly positive"
        );
        assert_eq!(values.len(), height * width, "value count != H*W");
        assert!(
            values.iter().all(|v| v.is_finite()),
            "image values must be finite"
        );
        ImageGrid {
            height,
            width,
            spacing_mm,
            values,
        }
    }

    pub fn zeros(height: usize, width: usize, spacing_mm: (f64, f64)) -> Self {
        ImageGrid::new(height, width, spacing_mm, vec![0.0; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        spacing_mm: (f64, f64),
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        ImageGrid::new(height, width, spacing_mm, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn spacing_mm(&self) -> (f64, f64) {
        self.spacing_mm
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        assert!(v.is_finite());
        self.values[row * self.width + col] = v;
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Physical extent (height_mm, width_mm).
    pub fn extent_mm(&self) -> (f64, f64) {
        (
            self.height as f64 * self.spacing_mm.0,
            self.width as f64 * self.spacing_mm.1,
        )
    }

    /// Convert a physical offset in mm to normalized-coordinate units,
    /// where the full image width spans 2.0.
    pub fn mm_offset_to_normalized(&self, dx_mm: f64, dy_mm: f64) -> (f64, f64) {
        let (h_mm, w_mm) = self.extent_mm();
        (2.0 * dx_mm / w_mm, 2.0 * dy_mm / h_mm)
    }
}

/// A boolean segmentation mask sharing the layout of its paired image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationMask {
    height: usize,
    width: usize,
    spacing_mm: (f64, f64),
    values: Vec<bool>,
}

impl SegmentationMask {
    pub fn new(height: usize, width: usize, spacing_mm: (f64, f64), values: Vec<bool>) -> Self {
        assert!(height >= 1 && width >= 1);
        assert!(spacing_mm.0 > 0.0 && spacing_mm.1 > 0.0);
        assert_eq!(values.len(), height * width);
        SegmentationMask {
            height,
            width,
            spacing_mm,
            values,
        }
    }

    pub fn empty(height: usize, width: usize, spacing_mm: (f64, f64)) -> Self {
        SegmentationMask::new(height, width, spacing_mm, vec![false; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        spacing_mm: (f64, f64),
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Self {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        SegmentationMask::new(height, width, spacing_mm, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn spacing_mm(&self) -> (f64, f64) {
        self.spacing_mm
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.values[row * self.width + col] = v;
    }

    pub fn foreground_count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn same_shape(&self, other: &SegmentationMask) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Union of two same-shaped masks.
    pub fn union(&self, other: &SegmentationMask) -> SegmentationMask {
        assert!(self.same_shape(other));
        let values = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| *a || *b)
            .collect();
        SegmentationMask::new(self.height, self.width, self.spacing_mm, values)
    }
}

/// Per-output-pixel source coordinates in normalized moving-image space.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    height: usize,
    width: usize,
    spacing_mm: (f64, f64),
    points: Vec<Point2>,
}

impl SampleGrid {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn spacing_mm(&self) -> (f64, f64) {
        self.spacing_mm
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn get(&self, row: usize, col: usize) -> Point2 {
        self.points[row * self.width + col]
    }

    /// Apply a further transform to every grid entry (grid of `t ∘ grid`).
    pub fn map_through(&self, t: &TransformModel) -> SampleGrid {
        SampleGrid {
            height: self.height,
            width: self.width,
            spacing_mm: self.spacing_mm,
            points: self.points.iter().map(|&p| t.apply(p)).collect(),
        }
    }
}

/// Evaluate `transform` at the pixel-center coordinates of an
/// `out_h × out_w` lattice. Output spacing defaults to 1 mm; use
/// [`build_sample_grid_with_spacing`] to stamp the template's spacing.
pub fn build_sample_grid(transform: &TransformModel, out_h: usize, out_w: usize) -> SampleGrid {
    build_sample_grid_with_spacing(transform, out_h, out_w, (1.0, 1.0))
}

pub fn build_sample_grid_with_spacing(
    transform: &TransformModel,
    out_h: usize,
    out_w: usize,
    spacing_mm: (f64, f64),
) -> SampleGrid {
    let mut points = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        for c in 0..out_w {
            let p = pixel_to_normalized(c as f64, r as f64, out_w, out_h);
            points.push(transform.apply(p));
        }
    }
    SampleGrid {
        height: out_h,
        width: out_w,
        spacing_mm,
        points,
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < PIXEL_SNAP_TOL {
        r
    } else {
        v
    }
}

/// Bilinear sample with zero padding outside the pixel lattice.
fn sample_bilinear_zero(img: &ImageGrid, row: f64, col: f64) -> f64 {
    let row = snap(row);
    let col = snap(col);
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let r0 = r0 as i64;
    let c0 = c0 as i64;

    let at = |r: i64, c: i64| -> f64 {
        if r < 0 || c < 0 || r >= img.height as i64 || c >= img.width as i64 {
            0.0
        } else {
            img.values[r as usize * img.width + c as usize]
        }
    };

    if fr == 0.0 && fc == 0.0 {
        return at(r0, c0);
    }
    let v00 = at(r0, c0);
    let v01 = at(r0, c0 + 1);
    let v10 = at(r0 + 1, c0);
    let v11 = at(r0 + 1, c0 + 1);
    (1.0 - fr) * ((1.0 - fc) * v00 + fc * v01) + fr * ((1.0 - fc) * v10 + fc * v11)
}

/// Resample `moving` through `grid` with bilinear interpolation.
///
/// Grid coordinates outside the normalized [-1, 1] range fill with 0, as
/// do out-of-lattice taps of the bilinear stencil near the border. Rows
/// are processed in parallel; per-pixel work is pure, so the result is
/// independent of the schedule.
pub fn resample_bilinear(moving: &ImageGrid, grid: &SampleGrid) -> ImageGrid {
    let (h, w) = (grid.height, grid.width);
    let mut values = vec![0.0; h * w];
    values
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(r, out_row)| {
            for (c, out) in out_row.iter_mut().enumerate() {
                let p = grid.points[r * w + c];
                if p.x < -1.0 || p.x > 1.0 || p.y < -1.0 || p.y > 1.0 {
                    continue;
                }
                let (col, row) = normalized_to_pixel(p, moving.width, moving.height);
                *out = sample_bilinear_zero(moving, row, col);
            }
        });
    ImageGrid::new(h, w, grid.spacing_mm, values)
}

/// Rescale an image to a new pixel count with bilinear interpolation,
/// preserving the physical extent (spacing is recomputed). Pixel centers
/// map proportionally, so a same-size resize is the identity.
pub fn resize_bilinear(img: &ImageGrid, out_h: usize, out_w: usize) -> ImageGrid {
    assert!(out_h >= 1 && out_w >= 1);
    let (ext_h, ext_w) = img.extent_mm();
    let spacing = (ext_h / out_h as f64, ext_w / out_w as f64);
    let rr = img.height() as f64 / out_h as f64;
    let cc = img.width() as f64 / out_w as f64;
    let mut values = vec![0.0; out_h * out_w];
    values
        .par_chunks_mut(out_w)
        .enumerate()
        .for_each(|(r, out_row)| {
            let src_r = (r as f64 + 0.5) * rr - 0.5;
            for (c, out) in out_row.iter_mut().enumerate() {
                let src_c = (c as f64 + 0.5) * cc - 0.5;
                *out = sample_bilinear_zero(img, src_r, src_c);
            }
        });
    ImageGrid::new(out_h, out_w, spacing, values)
}

/// Resample a mask through `grid` with nearest-neighbor lookup;
/// out-of-bounds samples are background.
pub fn resample_mask_nearest(mask: &SegmentationMask, grid: &SampleGrid) -> SegmentationMask {
    let (h, w) = (grid.height, grid.width);
    let mut values = vec![false; h * w];
    values
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(r, out_row)| {
            for (c, out) in out_row.iter_mut().enumerate() {
                let p = grid.points[r * w + c];
                if p.x < -1.0 || p.x > 1.0 || p.y < -1.0 || p.y > 1.0 {
                    continue;
                }
                let (col, row) = normalized_to_pixel(p, mask.width, mask.height);
                let ri = row.round() as i64;
                let ci = col.round() as i64;
                if ri >= 0 && ci >= 0 && ri < mask.height as i64 && ci < mask.width as i64 {
                    *out = mask.values[ri as usize * mask.width + ci as usize];
                }
            }
        });
    SegmentationMask::new(h, w, grid.spacing_mm, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{AffineTransform, RigidTransform};
    use nalgebra::Vector2;

    fn delta_image(h: usize, w: usize, r: usize, c: usize) -> ImageGrid {
        let mut img = ImageGrid::zeros(h, w, (1.0, 1.0));
        img.set(r, c, 1.0);
        img
    }

    #[test]
    fn identity_grid_holds_pixel_centers() {
        let grid = build_sample_grid(&TransformModel::identity(), 4, 4);
        for r in 0..4 {
            for c in 0..4 {
                let want = pixel_to_normalized(c as f64, r as f64, 4, 4);
                assert_eq!(grid.get(r, c), want);
            }
        }
    }

    #[test]
    fn identity_resample_is_bit_exact() {
        let img = ImageGrid::from_fn(17, 23, (1.0, 1.0), |r, c| {
            ((r * 31 + c * 7) % 97) as f64 / 97.0
        });
        let grid = build_sample_grid(&TransformModel::identity(), 17, 23);
        let out = resample_bilinear(&img, &grid);
        assert_eq!(out.values(), img.values());
    }

    #[test]
    fn pure_translation_grid_shifts_by_whole_pixels() {
        let w = 16usize;
        let k = 3i64;
        let t = TransformModel::Affine(AffineTransform::translation(2.0 * k as f64 / w as f64, 0.0));
        let grid = build_sample_grid(&t, 8, w);
        let id = build_sample_grid(&TransformModel::identity(), 8, w);
        for r in 0..8 {
            for c in 0..w {
                let got = grid.get(r, c);
                let want_x = if (c as i64 + k) < w as i64 {
                    id.get(r, (c as i64 + k) as usize).x
                } else {
                    continue;
                };
                assert!((got.x - want_x).abs() < 1e-12);
                assert!((got.y - id.get(r, c).y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn integer_shift_moves_delta_exactly() {
        let img = delta_image(9, 16, 4, 5);
        let t = TransformModel::Affine(AffineTransform::translation(2.0 * 3.0 / 16.0, 0.0));
        let grid = build_sample_grid(&t, 9, 16);
        let out = resample_bilinear(&img, &grid);
        // backward warp samples at x+3 pixels, so content moves 3 px left
        assert_eq!(out.get(4, 2), 1.0);
        assert_eq!(out.values().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn half_pixel_shift_splits_delta_evenly() {
        let img = delta_image(5, 8, 2, 4);
        let t = TransformModel::Affine(AffineTransform::translation(2.0 * 0.5 / 8.0, 0.0));
        let grid = build_sample_grid(&t, 5, 8);
        let out = resample_bilinear(&img, &grid);
        assert!((out.get(2, 3) - 0.5).abs() < 1e-12);
        assert!((out.get(2, 4) - 0.5).abs() < 1e-12);
        assert!((out.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_mask_resample_is_exact() {
        let mask = SegmentationMask::from_fn(11, 13, (1.0, 1.0), |r, c| (r + c) % 3 == 0);
        let grid = build_sample_grid(&TransformModel::identity(), 11, 13);
        let out = resample_mask_nearest(&mask, &grid);
        assert_eq!(out.values(), mask.values());
    }

    #[test]
    fn integer_shift_preserves_interior_foreground() {
        let mask = SegmentationMask::from_fn(12, 12, (1.0, 1.0), |r, c| {
            (4..8).contains(&r) && (4..8).contains(&c)
        });
        let t = TransformModel::Affine(AffineTransform::translation(2.0 * 2.0 / 12.0, 0.0));
        let grid = build_sample_grid(&t, 12, 12);
        let out = resample_mask_nearest(&mask, &grid);
        assert_eq!(out.foreground_count(), mask.foreground_count());
        assert!(out.get(5, 2) && !out.get(5, 6));
    }

    #[test]
    fn quarter_turn_mask_matches_index_permutation_oracle() {
        // L-shaped, asymmetric mask on a square lattice
        let n = 10usize;
        let mask = SegmentationMask::from_fn(n, n, (1.0, 1.0), |r, c| {
            (2..7).contains(&r) && c == 2 || r == 6 && (2..5).contains(&c)
        });
        let t = TransformModel::Rigid(RigidTransform::from_angle(
            std::f64::consts::FRAC_PI_2,
            Vector2::zeros(),
        ));
        let grid = build_sample_grid(&t, n, n);
        let out = resample_mask_nearest(&mask, &grid);

        // Sampling at coordinates rotated by +90° is the integer
        // permutation out[r][c] = in[c][n-1-r] under pixel centering.
        for r in 0..n {
            for c in 0..n {
                assert_eq!(out.get(r, c), mask.get(c, n - 1 - r), "pixel ({r},{c})");
            }
        }
    }

    #[test]
    fn tps_grid_is_finite_and_hits_control_points() {
        use crate::geom::{KernelVariant, LandmarkSet};
        use crate::solvers::solve_tps;
        use rand::{Rng, SeedableRng};

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut random_set = |n: usize| {
            LandmarkSet::new(
                (0..n)
                    .map(|_| {
                        Point2::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8))
                    })
                    .collect(),
            )
            .unwrap()
        };
        let fix = random_set(8);
        let mov = random_set(8);
        // backward-warp convention: fit fixed -> moving
        let t = TransformModel::Tps(
            solve_tps(&fix, &mov, 0.0, KernelVariant::StandardRLogR).unwrap(),
        );
        let (n, m) = (224usize, 224usize);
        let grid = build_sample_grid(&t, n, m);
        assert!(grid
            .points()
            .iter()
            .all(|p| p.x.is_finite() && p.y.is_finite()));

        // at the pixel containing each fixed landmark, the grid points at
        // the matching moving landmark to within one pixel
        for (f, target) in fix.iter().zip(mov.iter()) {
            let (col, row) = normalized_to_pixel(*f, m, n);
            let entry = grid.get(row.round() as usize, col.round() as usize);
            let (ec, er) = normalized_to_pixel(entry, m, n);
            let (tc, tr) = normalized_to_pixel(*target, m, n);
            let dist_px = ((ec - tc).powi(2) + (er - tr).powi(2)).sqrt();
            assert!(dist_px <= 1.0, "control point missed by {dist_px:.3} px");
        }
    }

    #[test]
    fn translation_grids_compose() {
        let img = ImageGrid::from_fn(12, 12, (1.0, 1.0), |r, c| ((r + 2 * c) % 11) as f64 / 11.0);
        let t1 = TransformModel::Affine(AffineTransform::translation(0.17, -0.05));
        let t2 = TransformModel::Affine(AffineTransform::translation(-0.06, 0.11));
        let sum = TransformModel::Affine(AffineTransform::translation(0.17 - 0.06, -0.05 + 0.11));

        let composed = build_sample_grid(&t1, 12, 12).map_through(&t2);
        let direct = build_sample_grid(&sum, 12, 12);
        let a = resample_bilinear(&img, &composed);
        let b = resample_bilinear(&img, &direct);
        for (x, y) in a.values().iter().zip(b.values().iter()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn bilinear_output_stays_in_convex_range() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let img = ImageGrid::from_fn(20, 20, (1.0, 1.0), |_, _| rng.gen_range(0.2..0.9));
        let (lo, hi) = img.min_max();
        let t = TransformModel::Rigid(RigidTransform::from_angle(
            0.3,
            Vector2::new(0.21, -0.13),
        ));
        let out = resample_bilinear(&img, &build_sample_grid(&t, 20, 20));
        for &v in out.values() {
            // fill value 0 participates in the convex combination
            assert!(v >= lo.min(0.0) - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn out_of_range_coordinates_fill_with_zero() {
        let img = ImageGrid::from_fn(6, 6, (1.0, 1.0), |_, _| 1.0);
        let t = TransformModel::Affine(AffineTransform::translation(5.0, 0.0));
        let out = resample_bilinear(&img, &build_sample_grid(&t, 6, 6));
        assert!(out.values().iter().all(|&v| v == 0.0));
    }
}
