//! Core coordinate, landmark, and transform types.
//!
//! All landmark coordinates live in a normalized frame where pixel
//! (col, row) of an H×W image maps to
//!
//! ```text
//! x = 2 (col + 0.5) / W - 1,    y = 2 (row + 0.5) / H - 1
//! ```
//!
//! so the image extent spans [-1, 1] with pixel-center alignment. The
//! transform family covers rigid maps `R x + t`, affine maps `B [x y 1]ᵀ`,
//! and thin-plate splines (affine part plus a radial-kernel expansion over
//! control points).

use nalgebra::{Matrix2, Matrix2x3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::GeomError;

/// Frobenius tolerance for `RᵀR = I` and `det R = 1` checks.
pub const ROTATION_TOL: f64 = 1e-10;
/// Tolerance for the thin-plate-spline weight side conditions.
pub const TPS_SIDE_CONDITION_TOL: f64 = 1e-8;

/// A 2D point in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    /// Panics if either coordinate is NaN or infinite; finiteness is a
    /// construction invariant relied on by every solver.
    pub fn new(x: f64, y: f64) -> Self {
        assert!(
            x.is_finite() && y.is_finite(),
            "Point2 coordinates must be finite, got ({x}, {y})"
        );
        Point2 { x, y }
    }

    pub fn checked(x: f64, y: f64) -> Result<Self, GeomError> {
        if x.is_finite() && y.is_finite() {
            Ok(Point2 { x, y })
        } else {
            Err(GeomError::NonFinite { x, y })
        }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        Point2::new(v.x, v.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn distance_squared(self, other: Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Map a (fractional) pixel position to normalized coordinates.
pub fn pixel_to_normalized(col: f64, row: f64, width: usize, height: usize) -> Point2 {
    let x = 2.0 * (col + 0.5) / width as f64 - 1.0;
    let y = 2.0 * (row + 0.5) / height as f64 - 1.0;
    Point2::new(x, y)
}

/// Map a normalized point back to (col, row) pixel coordinates.
pub fn normalized_to_pixel(p: Point2, width: usize, height: usize) -> (f64, f64) {
    let col = (p.x + 1.0) * 0.5 * width as f64 - 0.5;
    let row = (p.y + 1.0) * 0.5 * height as f64 - 0.5;
    (col, row)
}

/// An ordered list of at least three landmarks.
///
/// Order is semantic: index `i` in a moving set corresponds to index `i`
/// in the matching fixed set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    points: Vec<Point2>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point2>) -> Result<Self, GeomError> {
        if points.len() < 3 {
            return Err(GeomError::TooFewLandmarks { got: points.len() });
        }
        Ok(LandmarkSet { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least 3 points
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point2> {
        self.points.iter()
    }

    pub fn get(&self, i: usize) -> Point2 {
        self.points[i]
    }

    pub fn centroid(&self) -> Point2 {
        let n = self.points.len() as f64;
        let (sx, sy) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point2::new(sx / n, sy / n)
    }
}

/// The radial kernel used by the thin-plate spline, as a function of the
/// *squared* distance `s = r²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelVariant {
    /// `r² ln r` (equivalently `½ s ln s`), the classical 2D biharmonic
    /// kernel. Default.
    #[default]
    StandardRLogR,
    /// `s² ln s` applied literally to the squared distance, i.e.
    /// `r⁴ ln r²`. Kept for fidelity experiments.
    PaperLiteral,
}

impl KernelVariant {
    /// Evaluate the kernel at squared distance `s ≥ 0`; both variants
    /// take the limit value 0 at s = 0.
    pub fn evaluate(self, s: f64) -> f64 {
        debug_assert!(s >= 0.0, "kernel argument is a squared distance");
        if s <= 0.0 {
            return 0.0;
        }
        match self {
            KernelVariant::StandardRLogR => 0.5 * s * s.ln(),
            KernelVariant::PaperLiteral => s * s * s.ln(),
        }
    }

    /// Derivative dψ/ds, used when inverting a spline numerically.
    /// Both variants have a removable singularity at s = 0 once
    /// multiplied by (x - c); we return 0 there.
    pub(crate) fn derivative(self, s: f64) -> f64 {
        if s <= 1e-300 {
            return 0.0;
        }
        match self {
            KernelVariant::StandardRLogR => 0.5 * (s.ln() + 1.0),
            KernelVariant::PaperLiteral => s * (2.0 * s.ln() + 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelVariant::StandardRLogR => "standard",
            KernelVariant::PaperLiteral => "paper",
        }
    }
}

/// A proper rigid motion `p ↦ R p + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    rotation: Matrix2<f64>,
    translation: Vector2<f64>,
}

impl RigidTransform {
    /// Validates that `rotation` is orthogonal with determinant +1
    /// (within [`ROTATION_TOL`]).
    pub fn new(rotation: Matrix2<f64>, translation: Vector2<f64>) -> Result<Self, GeomError> {
        let defect = (rotation.transpose() * rotation - Matrix2::identity()).norm();
        let det_defect = (rotation.determinant() - 1.0).abs();
        if defect > ROTATION_TOL || det_defect > ROTATION_TOL {
            return Err(GeomError::NotARotation {
                defect: defect.max(det_defect),
            });
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix2::identity(),
            translation: Vector2::zeros(),
        }
    }

    /// Rotation by `angle` radians (counter-clockwise in the x-right,
    /// y-down pixel convention is clockwise on screen) plus translation.
    pub fn from_angle(angle: f64, translation: Vector2<f64>) -> Self {
        let (s, c) = angle.sin_cos();
        RigidTransform {
            rotation: Matrix2::new(c, -s, s, c),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix2<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector2<f64> {
        &self.translation
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        Point2::from_vector(self.rotation * p.to_vector() + self.translation)
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// View as a 2×3 affine matrix acting on [x, y, 1]ᵀ.
    pub fn to_affine(&self) -> AffineTransform {
        let r = &self.rotation;
        let t = &self.translation;
        AffineTransform::new(Matrix2x3::new(
            r[(0, 0)],
            r[(0, 1)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            t.y,
        ))
    }
}

/// An affine map `p ↦ B [x y 1]ᵀ` with `B` a 2×3 matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    matrix: Matrix2x3<f64>,
}

impl AffineTransform {
    /// Panics on non-finite entries; finiteness is a construction invariant.
    pub fn new(matrix: Matrix2x3<f64>) -> Self {
        assert!(
            matrix.iter().all(|v| v.is_finite()),
            "affine matrix entries must be finite"
        );
        AffineTransform { matrix }
    }

    pub fn identity() -> Self {
        AffineTransform::new(Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0))
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        AffineTransform::new(Matrix2x3::new(1.0, 0.0, dx, 0.0, 1.0, dy))
    }

    pub fn matrix(&self) -> &Matrix2x3<f64> {
        &self.matrix
    }

    /// The 2×2 linear part.
    pub fn linear(&self) -> Matrix2<f64> {
        self.matrix.fixed_view::<2, 2>(0, 0).into_owned()
    }

    /// The translation column.
    pub fn offset(&self) -> Vector2<f64> {
        self.matrix.column(2).into_owned()
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let m = &self.matrix;
        Point2::new(
            m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)],
            m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)],
        )
    }

    /// Compose with another affine map: `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &AffineTransform) -> AffineTransform {
        let a = self.linear();
        let b = other.linear();
        let ab = a * b;
        let t = a * other.offset() + self.offset();
        AffineTransform::new(Matrix2x3::new(
            ab[(0, 0)],
            ab[(0, 1)],
            t.x,
            ab[(1, 0)],
            ab[(1, 1)],
            t.y,
        ))
    }

    /// Inverse map, or `None` if the linear part is singular.
    pub fn inverse(&self) -> Option<AffineTransform> {
        let inv = self.linear().try_inverse()?;
        let t = -(inv * self.offset());
        Some(AffineTransform::new(Matrix2x3::new(
            inv[(0, 0)],
            inv[(0, 1)],
            t.x,
            inv[(1, 0)],
            inv[(1, 1)],
            t.y,
        )))
    }
}

/// A thin-plate spline `p ↦ B [x y 1]ᵀ + Σᵢ wᵢ ψ(‖cᵢ - p‖²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpsTransform {
    affine: Matrix2x3<f64>,
    weights: Vec<Vector2<f64>>,
    control_points: LandmarkSet,
    lambda: f64,
    kernel: KernelVariant,
}

impl TpsTransform {
    /// Validates the side conditions `Σ wᵢ = 0` and `Σ wᵢ cᵢᵀ = 0`
    /// (within [`TPS_SIDE_CONDITION_TOL`]) that make the spline's
    /// bending energy finite.
    pub fn new(
        affine: Matrix2x3<f64>,
        weights: Vec<Vector2<f64>>,
        control_points: LandmarkSet,
        lambda: f64,
        kernel: KernelVariant,
    ) -> Result<Self, GeomError> {
        if weights.len() != control_points.len() {
            return Err(GeomError::WeightCountMismatch {
                weights: weights.len(),
                controls: control_points.len(),
            });
        }
        let mut sum = Vector2::zeros();
        let mut moment = Matrix2::zeros();
        for (w, c) in weights.iter().zip(control_points.iter()) {
            sum += w;
            moment += w * c.to_vector().transpose();
        }
        let defect = sum.abs().max().max(moment.abs().max());
        if defect > TPS_SIDE_CONDITION_TOL {
            return Err(GeomError::UnbalancedWeights { defect });
        }
        Ok(TpsTransform {
            affine,
            weights,
            control_points,
            lambda,
            kernel,
        })
    }

    /// A spline with zero weights, equal to its affine part everywhere.
    pub fn from_affine(
        affine: AffineTransform,
        control_points: LandmarkSet,
        kernel: KernelVariant,
    ) -> Self {
        let weights = vec![Vector2::zeros(); control_points.len()];
        TpsTransform {
            affine: *affine.matrix(),
            weights,
            control_points,
            lambda: 0.0,
            kernel,
        }
    }

    pub fn affine_part(&self) -> AffineTransform {
        AffineTransform::new(self.affine)
    }

    pub fn weights(&self) -> &[Vector2<f64>] {
        &self.weights
    }

    pub fn control_points(&self) -> &LandmarkSet {
        &self.control_points
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kernel(&self) -> KernelVariant {
        self.kernel
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let m = &self.affine;
        let mut x = m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)];
        let mut y = m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)];
        for (w, c) in self.weights.iter().zip(self.control_points.iter()) {
            let k = self.kernel.evaluate(c.distance_squared(p));
            x += w.x * k;
            y += w.y * k;
        }
        Point2::new(x, y)
    }

    /// Jacobian of the spline at `p`, used for numerical inversion.
    pub(crate) fn jacobian(&self, p: Point2) -> Matrix2<f64> {
        let mut j = self.affine.fixed_view::<2, 2>(0, 0).into_owned();
        for (w, c) in self.weights.iter().zip(self.control_points.iter()) {
            let s = c.distance_squared(p);
            // ∂/∂p ψ(‖c-p‖²) = ψ'(s) · 2 (p - c)
            let g = 2.0 * self.kernel.derivative(s);
            let dx = p.x - c.x;
            let dy = p.y - c.y;
            j[(0, 0)] += w.x * g * dx;
            j[(0, 1)] += w.x * g * dy;
            j[(1, 0)] += w.y * g * dx;
            j[(1, 1)] += w.y * g * dy;
        }
        j
    }
}

/// Tagged union over the three transform families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TransformModel {
    Rigid(RigidTransform),
    Affine(AffineTransform),
    Tps(TpsTransform),
}

impl TransformModel {
    pub fn identity() -> Self {
        TransformModel::Rigid(RigidTransform::identity())
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        match self {
            TransformModel::Rigid(t) => t.apply(p),
            TransformModel::Affine(t) => t.apply(p),
            TransformModel::Tps(t) => t.apply(p),
        }
    }

    /// Element-wise application preserving order and length.
    pub fn apply_set(&self, pts: &LandmarkSet) -> LandmarkSet {
        let points = pts.iter().map(|&p| self.apply(p)).collect();
        LandmarkSet::new(points).expect("length preserved, so still >= 3 points")
    }

    pub fn jacobian(&self, p: Point2) -> Matrix2<f64> {
        match self {
            TransformModel::Rigid(t) => *t.rotation(),
            TransformModel::Affine(t) => t.linear(),
            TransformModel::Tps(t) => t.jacobian(p),
        }
    }

    /// Left-compose an affine map: returns `a ∘ self`. Every family is
    /// closed under this operation (the kernel expansion commutes with a
    /// linear map of its output), which is how sweep offsets are stacked
    /// on top of ground-truth deformations.
    pub fn compose_affine_left(&self, a: &AffineTransform) -> TransformModel {
        match self {
            TransformModel::Rigid(t) => {
                TransformModel::Affine(a.compose(&t.to_affine()))
            }
            TransformModel::Affine(t) => TransformModel::Affine(a.compose(t)),
            TransformModel::Tps(t) => {
                let lin = a.linear();
                let composed = a.compose(&AffineTransform::new(t.affine));
                let weights = t.weights.iter().map(|w| lin * w).collect();
                TransformModel::Tps(
                    TpsTransform::new(
                        *composed.matrix(),
                        weights,
                        t.control_points.clone(),
                        t.lambda,
                        t.kernel,
                    )
                    .expect("rotated weights preserve the side conditions"),
                )
            }
        }
    }

    /// Left-compose a rigid map, staying rigid where possible.
    pub fn compose_rigid_left(&self, r: &RigidTransform) -> TransformModel {
        match self {
            TransformModel::Rigid(t) => {
                let rot = r.rotation() * t.rotation();
                let tr = r.rotation() * t.translation() + r.translation();
                TransformModel::Rigid(
                    RigidTransform::new(rot, tr).expect("product of rotations is a rotation"),
                )
            }
            _ => self.compose_affine_left(&r.to_affine()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransformModel::Rigid(_) => "rigid",
            TransformModel::Affine(_) => "affine",
            TransformModel::Tps(_) => "tps",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn set(pts: &[(f64, f64)]) -> LandmarkSet {
        LandmarkSet::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn identity_rigid_is_a_fixed_point() {
        let t = TransformModel::identity();
        let p = Point2::new(0.3, -0.4);
        let q = t.apply(p);
        assert_eq!(q, p);
    }

    #[test]
    fn ninety_degree_rotation_moves_x_axis_to_y_axis() {
        let t = RigidTransform::from_angle(std::f64::consts::FRAC_PI_2, Vector2::zeros());
        let q = t.apply(Point2::new(1.0, 0.0));
        assert_abs_diff_eq!(q.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tps_with_zero_weights_is_its_affine_part() {
        let controls = set(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.5, 0.5)]);
        let b = Matrix2x3::new(1.0, 0.0, 0.1, 0.0, 1.0, -0.2);
        let tps = TpsTransform::new(
            b,
            vec![Vector2::zeros(); 4],
            controls,
            0.0,
            KernelVariant::StandardRLogR,
        )
        .unwrap();
        let q = tps.apply(Point2::new(0.0, 0.0));
        assert_eq!((q.x, q.y), (0.1, -0.2));

        // exact agreement with the contained affine part at arbitrary points
        let aff = tps.affine_part();
        for &(x, y) in &[(0.3, -0.9), (2.0, 1.5), (-0.25, 0.75)] {
            let p = Point2::new(x, y);
            assert_eq!(tps.apply(p), aff.apply(p));
        }
    }

    #[test]
    fn apply_set_preserves_order_and_length() {
        let s = set(&[(1.0, 0.0), (0.0, 1.0), (-0.5, -0.5)]);
        let t = TransformModel::Rigid(RigidTransform::from_angle(
            std::f64::consts::PI,
            Vector2::zeros(),
        ));
        let out = t.apply_set(&s);
        assert_eq!(out.len(), s.len());
        assert_abs_diff_eq!(out.get(0).x, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.get(0).y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.get(1).x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.get(1).y, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn rigid_transforms_are_isometries() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let t = RigidTransform::from_angle(
                rng.gen_range(-3.0..3.0),
                Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            );
            let p = Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let q = Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let before = p.distance(q);
            let after = t.apply(p).distance(t.apply(q));
            assert!(
                (before - after).abs() < 1e-9,
                "isometry violated: {before} vs {after}"
            );
        }
    }

    #[test]
    fn kernel_values() {
        for variant in [KernelVariant::StandardRLogR, KernelVariant::PaperLiteral] {
            assert_eq!(variant.evaluate(0.0), 0.0);
            assert_eq!(variant.evaluate(1.0), 0.0);
        }
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(
            KernelVariant::StandardRLogR.evaluate(e),
            e / 2.0,
            epsilon = 1e-15
        );
        // r² ln r == ½ s ln s with s = r²
        let r: f64 = 1.7;
        assert_abs_diff_eq!(
            KernelVariant::StandardRLogR.evaluate(r * r),
            r * r * r.ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn rotation_validation_rejects_reflections() {
        let reflect = Matrix2::new(1.0, 0.0, 0.0, -1.0);
        assert!(RigidTransform::new(reflect, Vector2::zeros()).is_err());
    }

    #[test]
    fn landmark_set_needs_three_points() {
        let r = LandmarkSet::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)]);
        assert!(matches!(r, Err(GeomError::TooFewLandmarks { got: 2 })));
    }

    #[test]
    fn tps_side_conditions_are_enforced() {
        let controls = set(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let bad = vec![
            Vector2::new(1.0, 0.0),
            Vector2::zeros(),
            Vector2::zeros(),
        ];
        let r = TpsTransform::new(
            Matrix2x3::identity(),
            bad,
            controls,
            0.0,
            KernelVariant::StandardRLogR,
        );
        assert!(matches!(r, Err(GeomError::UnbalancedWeights { .. })));
    }

    #[test]
    fn pixel_center_round_trip() {
        let p = pixel_to_normalized(111.5, 111.5, 224, 224);
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-15);
        let (c, r) = normalized_to_pixel(Point2::new(0.5, -0.5), 224, 224);
        assert_abs_diff_eq!(c, 167.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 55.5, epsilon = 1e-12);
    }
}
