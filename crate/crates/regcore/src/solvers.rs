//! Closed-form fitting of rigid, affine, and thin-plate-spline transforms
//! from corresponding landmark sets.
//!
//! All three solvers take a `(mov, fix)` pair of equally long landmark
//! sets and return the transform `T` that minimizes `Σᵢ ‖T(movᵢ) - fixᵢ‖²`
//! within its family:
//!
//! * `solve_rigid` — orthogonal Procrustes via SVD of the cross-correlation
//!   matrix of the centered sets, with the Kabsch sign correction so the
//!   result is always a proper rotation (physical tissue motion cannot
//!   reflect).
//! * `solve_affine` — linear least squares on homogeneous coordinates.
//! * `solve_tps` — the bordered kernel system; `λ` trades exact
//!   interpolation (λ=0) against affine-like smoothness (λ→∞) by replacing
//!   `K` with `K + λI`.

use nalgebra::{DMatrix, Matrix2, Matrix2x3, Vector2};

use crate::error::SolveError;
use crate::geom::{KernelVariant, LandmarkSet, RigidTransform, TpsTransform};
use crate::AffineTransform;

/// Condition-number threshold beyond which a system is reported as
/// degenerate instead of solved.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Cross-correlation norms below this are treated as "all landmarks
/// coincident" (exactly coincident points produce ~1e-31 from rounding
/// alone, while any spread above ~1e-10 lands orders of magnitude higher).
const SIGMA_ZERO_TOL: f64 = 1e-24;

fn check_lengths(mov: &LandmarkSet, fix: &LandmarkSet) -> Result<(), SolveError> {
    if mov.len() != fix.len() {
        return Err(SolveError::CountMismatch {
            mov: mov.len(),
            fix: fix.len(),
        });
    }
    Ok(())
}

/// Best proper rigid motion `p ↦ R p + t` mapping `mov` onto `fix`.
///
/// The rotation comes from the SVD `Σ = U Λ Vᵀ` of the cross-correlation
/// of the centered sets as `R = V diag(1, det(V Uᵀ)) Uᵀ`; the translation
/// is the centroid shift expressed in the `R p + t` parameterization,
/// `t = c_fix - R c_mov`.
pub fn solve_rigid(mov: &LandmarkSet, fix: &LandmarkSet) -> Result<RigidTransform, SolveError> {
    check_lengths(mov, fix)?;
    let c_mov = mov.centroid().to_vector();
    let c_fix = fix.centroid().to_vector();

    let mut sigma = Matrix2::zeros();
    for (m, f) in mov.iter().zip(fix.iter()) {
        let mc = m.to_vector() - c_mov;
        let fc = f.to_vector() - c_fix;
        sigma += mc * fc.transpose();
    }

    if sigma.norm() <= SIGMA_ZERO_TOL {
        return Err(SolveError::DegenerateConfiguration {
            reason: "all moving landmarks coincident; rotation is indeterminate".into(),
        });
    }

    let svd = sigma.svd(true, true);
    let u = svd.u.expect("2x2 SVD with U requested");
    let v_t = svd.v_t.expect("2x2 SVD with V requested");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant();
    let sign = if d < 0.0 { -1.0 } else { 1.0 };
    let correction = Matrix2::new(1.0, 0.0, 0.0, sign);
    let r = v * correction * u.transpose();

    let t = c_fix - r * c_mov;
    RigidTransform::new(r, t).map_err(|e| SolveError::DegenerateConfiguration {
        reason: format!("SVD produced an invalid rotation: {e}"),
    })
}

/// Best affine map `p ↦ B [x y 1]ᵀ` in the least-squares sense.
///
/// Solved through an SVD least-squares factorization of the M×3 design
/// matrix rather than the explicit normal-equation inverse; the Gram
/// matrix condition estimate is the squared design condition number.
pub fn solve_affine(mov: &LandmarkSet, fix: &LandmarkSet) -> Result<AffineTransform, SolveError> {
    check_lengths(mov, fix)?;
    let m = mov.len();

    let mut a = DMatrix::zeros(m, 3);
    let mut y = DMatrix::zeros(m, 2);
    for (i, (p, f)) in mov.iter().zip(fix.iter()).enumerate() {
        a[(i, 0)] = p.x;
        a[(i, 1)] = p.y;
        a[(i, 2)] = 1.0;
        y[(i, 0)] = f.x;
        y[(i, 1)] = f.y;
    }

    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let gram_cond = if smin > 0.0 {
        (smax / smin).powi(2)
    } else {
        f64::INFINITY
    };
    if !gram_cond.is_finite() || gram_cond > CONDITION_LIMIT {
        return Err(SolveError::DegenerateConfiguration {
            reason: format!(
                "moving landmarks are collinear or coincident (Gram condition {gram_cond:.3e})"
            ),
        });
    }

    let beta = svd
        .solve(&y, 0.0)
        .map_err(|e| SolveError::DegenerateConfiguration { reason: e.into() })?;
    // beta is 3x2; the transform matrix acts on [x y 1]ᵀ from the left.
    let b = Matrix2x3::new(
        beta[(0, 0)],
        beta[(1, 0)],
        beta[(2, 0)],
        beta[(0, 1)],
        beta[(1, 1)],
        beta[(2, 1)],
    );
    Ok(AffineTransform::new(b))
}

/// Radial kernel of the thin-plate spline as a function of squared
/// distance. See [`KernelVariant`] for the two variants.
pub fn tps_kernel(r2: f64, variant: KernelVariant) -> f64 {
    variant.evaluate(r2)
}

/// Fit a thin-plate spline through `M ≥ 3` landmark pairs.
///
/// Assembles the bordered linear system
///
/// ```text
/// [ K + λI   H ] [ W ]   [ X_fix ]
/// [ Hᵀ       0 ] [ B ] = [ 0     ]
/// ```
///
/// with `K_ij = ψ(‖movᵢ - movⱼ‖²)` and `H` rows `[xᵢ yᵢ 1]`, and solves it
/// by a dense pivoted LU factorization (M = 64 keeps the system trivial).
/// The zero bottom block enforces the side conditions that make the
/// weights sum to zero with vanishing first moments.
pub fn solve_tps(
    mov: &LandmarkSet,
    fix: &LandmarkSet,
    lambda: f64,
    variant: KernelVariant,
) -> Result<TpsTransform, SolveError> {
    if !(lambda >= 0.0) {
        return Err(SolveError::NegativeLambda { lambda });
    }
    check_lengths(mov, fix)?;
    let m = mov.len();
    let n = m + 3;

    let mut sys = DMatrix::zeros(n, n);
    for i in 0..m {
        let pi = mov.get(i);
        for j in 0..m {
            if i == j {
                sys[(i, i)] = lambda;
            } else {
                sys[(i, j)] = variant.evaluate(pi.distance_squared(mov.get(j)));
            }
        }
        sys[(i, m)] = pi.x;
        sys[(i, m + 1)] = pi.y;
        sys[(i, m + 2)] = 1.0;
        sys[(m, i)] = pi.x;
        sys[(m + 1, i)] = pi.y;
        sys[(m + 2, i)] = 1.0;
    }

    let sv = sys.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(SolveError::SingularSystem {
            cond,
            reason: "duplicate or collinear control points".into(),
        });
    }

    let mut rhs = DMatrix::zeros(n, 2);
    for (i, f) in fix.iter().enumerate() {
        rhs[(i, 0)] = f.x;
        rhs[(i, 1)] = f.y;
    }

    let solution = sys.lu().solve(&rhs).ok_or(SolveError::SingularSystem {
        cond,
        reason: "LU factorization failed".into(),
    })?;

    let weights: Vec<Vector2<f64>> = (0..m)
        .map(|i| Vector2::new(solution[(i, 0)], solution[(i, 1)]))
        .collect();
    let affine = Matrix2x3::new(
        solution[(m, 0)],
        solution[(m + 1, 0)],
        solution[(m + 2, 0)],
        solution[(m, 1)],
        solution[(m + 1, 1)],
        solution[(m + 2, 1)],
    );

    TpsTransform::new(affine, weights, mov.clone(), lambda, variant).map_err(|e| {
        SolveError::SingularSystem {
            cond,
            reason: format!("solution violates side conditions: {e}"),
        }
    })
}

/// Bending energy of a fitted spline.
///
/// For the standard `r² ln r` kernel this is the exact value of the
/// integral of the squared warp Hessian over the plane,
/// `8π · tr(Wᵀ K W)` (the kernel is `8π` times the biharmonic fundamental
/// solution). For the paper-literal kernel no such identity exists and the
/// raw quadratic form `tr(Wᵀ K W)` is returned; note it is only guaranteed
/// non-negative for the standard kernel.
pub fn tps_bending_energy(t: &TpsTransform) -> f64 {
    let controls = t.control_points();
    let weights = t.weights();
    let variant = t.kernel();
    let m = controls.len();

    let mut quad = 0.0;
    for i in 0..m {
        let pi = controls.get(i);
        for j in 0..m {
            if i == j {
                continue; // ψ(0) = 0
            }
            let k = variant.evaluate(pi.distance_squared(controls.get(j)));
            quad += k * weights[i].dot(&weights[j]);
        }
    }

    match variant {
        KernelVariant::StandardRLogR => 8.0 * std::f64::consts::PI * quad,
        KernelVariant::PaperLiteral => quad,
    }
}

/// Sum of squared alignment residuals `Σᵢ ‖T(movᵢ) - fixᵢ‖²`.
pub fn alignment_residual(
    transform: &crate::geom::TransformModel,
    mov: &LandmarkSet,
    fix: &LandmarkSet,
) -> f64 {
    mov.iter()
        .zip(fix.iter())
        .map(|(m, f)| transform.apply(*m).distance_squared(*f))
        .sum()
}
