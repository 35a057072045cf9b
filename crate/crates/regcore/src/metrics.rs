//! Segmentation overlap metrics and the paired statistical test used to
//! compare registration methods.
//!
//! Hausdorff distances are computed between mask *boundaries* (foreground
//! pixels with at least one background 4-neighbor, the image border
//! counting as background) with pixel centers scaled by the physical
//! spacing. Note the 4-connectivity choice: against an 8-connected
//! boundary the distance can differ by up to one pixel diagonal.

use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::warp::SegmentationMask;

/// Per-frame metric record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub frame_id: String,
    pub organ_label: String,
    /// Overlap in [0, 1].
    pub dice: f64,
    /// Boundary Hausdorff distance in millimetres.
    pub hausdorff_mm: f64,
}

fn check_shapes(a: &SegmentationMask, b: &SegmentationMask) -> Result<(), MetricError> {
    if !a.same_shape(b) {
        return Err(MetricError::ShapeMismatch {
            a_h: a.height(),
            a_w: a.width(),
            b_h: b.height(),
            b_w: b.width(),
        });
    }
    Ok(())
}

/// Dice overlap `2|A∩B| / (|A|+|B|)`. Two empty masks agree perfectly
/// and score 1.0; one empty mask scores 0.0.
pub fn dice(a: &SegmentationMask, b: &SegmentationMask) -> Result<f64, MetricError> {
    check_shapes(a, b)?;
    let mut inter = 0usize;
    let mut total = 0usize;
    for (x, y) in a.values().iter().zip(b.values().iter()) {
        inter += (*x && *y) as usize;
        total += *x as usize + *y as usize;
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Foreground pixels with at least one background 4-neighbor; pixels on
/// the image border always qualify.
pub fn boundary_pixels(mask: &SegmentationMask) -> Vec<(usize, usize)> {
    let (h, w) = (mask.height(), mask.width());
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let exposed = r == 0
                || c == 0
                || r == h - 1
                || c == w - 1
                || !mask.get(r - 1, c)
                || !mask.get(r + 1, c)
                || !mask.get(r, c - 1)
                || !mask.get(r, c + 1);
            if exposed {
                out.push((r, c));
            }
        }
    }
    out
}

fn directed_hausdorff_sq(
    from: &[(usize, usize)],
    to: &[(usize, usize)],
    spacing: (f64, f64),
) -> f64 {
    let mut worst = 0.0f64;
    for &(ra, ca) in from {
        let mut best = f64::INFINITY;
        for &(rb, cb) in to {
            let dr = (ra as f64 - rb as f64) * spacing.0;
            let dc = (ca as f64 - cb as f64) * spacing.1;
            let d = dr * dr + dc * dc;
            if d < best {
                best = d;
                if best <= worst {
                    // this point cannot raise the maximum
                    break;
                }
            }
        }
        if best > worst {
            worst = best;
        }
    }
    worst
}

/// Symmetric boundary Hausdorff distance in millimetres.
pub fn hausdorff_mm(a: &SegmentationMask, b: &SegmentationMask) -> Result<f64, MetricError> {
    check_shapes(a, b)?;
    let (sa, sb) = (a.spacing_mm(), b.spacing_mm());
    if sa != sb {
        return Err(MetricError::SpacingMismatch(sa.0, sa.1, sb.0, sb.1));
    }
    let ba = boundary_pixels(a);
    let bb = boundary_pixels(b);
    if ba.is_empty() || bb.is_empty() {
        return Err(MetricError::EmptyMask);
    }
    let fwd = directed_hausdorff_sq(&ba, &bb, sa);
    let bwd = directed_hausdorff_sq(&bb, &ba, sa);
    Ok(fwd.max(bwd).sqrt())
}

/// 95th-percentile variant of the directed boundary Hausdorff distance,
/// for sensitivity checks against the max variant.
pub fn hausdorff_percentile_mm(
    a: &SegmentationMask,
    b: &SegmentationMask,
    percentile: f64,
) -> Result<f64, MetricError> {
    check_shapes(a, b)?;
    assert!((0.0..=100.0).contains(&percentile));
    let (sa, sb) = (a.spacing_mm(), b.spacing_mm());
    if sa != sb {
        return Err(MetricError::SpacingMismatch(sa.0, sa.1, sb.0, sb.1));
    }
    let ba = boundary_pixels(a);
    let bb = boundary_pixels(b);
    if ba.is_empty() || bb.is_empty() {
        return Err(MetricError::EmptyMask);
    }
    let mut dists = Vec::with_capacity(ba.len() + bb.len());
    let min_dist_sq = |(ra, ca): (usize, usize), set: &[(usize, usize)]| {
        set.iter()
            .map(|&(rb, cb)| {
                let dr = (ra as f64 - rb as f64) * sa.0;
                let dc = (ca as f64 - cb as f64) * sa.1;
                dr * dr + dc * dc
            })
            .fold(f64::INFINITY, f64::min)
    };
    for &p in &ba {
        dists.push(min_dist_sq(p, &bb));
    }
    for &p in &bb {
        dists.push(min_dist_sq(p, &ba));
    }
    dists.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let idx = ((percentile / 100.0) * (dists.len() - 1) as f64).round() as usize;
    Ok(dists[idx].sqrt())
}

/// Result of a two-sided paired t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub p_value: f64,
    pub degrees_of_freedom: usize,
}

/// Two-sided paired t-test on equally long samples.
///
/// `t = mean(d) / (sd(d)/√n)` with `d = a - b` and the n−1 sample
/// standard deviation; the p-value comes from the Student-t CDF with n−1
/// degrees of freedom via the regularized incomplete beta function.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::DegenerateSample {
            reason: format!("sample lengths differ ({} vs {})", a.len(), b.len()),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(MetricError::DegenerateSample {
            reason: format!("need at least 2 pairs, got {n}"),
        });
    }
    let d: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var <= 0.0 {
        if mean == 0.0 {
            // identical samples: no evidence of a difference
            return Ok(TTestResult {
                t_statistic: 0.0,
                p_value: 1.0,
                degrees_of_freedom: n - 1,
            });
        }
        return Err(MetricError::DegenerateSample {
            reason: "differences have zero variance".into(),
        });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dof = (n - 1) as f64;
    let p = student_t_two_sided_p(t, dof);
    Ok(TTestResult {
        t_statistic: t,
        p_value: p,
        degrees_of_freedom: n - 1,
    })
}

/// Two-sided p-value for a Student-t statistic:
/// `p = I_x(ν/2, 1/2)` with `x = ν/(ν + t²)`.
pub fn student_t_two_sided_p(t: f64, dof: f64) -> f64 {
    let x = dof / (dof + t * t);
    regularized_incomplete_beta(0.5 * dof, 0.5, x).clamp(0.0, 1.0)
}

/// Regularized incomplete beta function I_x(a, b) via the standard
/// continued-fraction expansion (modified Lentz), with the symmetry
/// transform applied where the fraction converges fastest.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0 && (0.0..=1.0).contains(&x));
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, 9 coefficients), accurate to ~1e-13.
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection formula
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_9;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Per-organ mean ± std summary of a metric run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrganSummary {
    pub organ_label: String,
    pub count: usize,
    pub dice_mean: f64,
    pub dice_std: f64,
    pub hausdorff_mean_mm: f64,
    pub hausdorff_std_mm: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Group samples by organ label (sorted for deterministic output) and
/// report mean ± std with the n−1 denominator.
pub fn summarize(samples: &[MetricSample]) -> Vec<OrganSummary> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<&str, Vec<&MetricSample>> = BTreeMap::new();
    for s in samples {
        groups.entry(&s.organ_label).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|(organ, group)| {
            let dices: Vec<f64> = group.iter().map(|s| s.dice).collect();
            let hds: Vec<f64> = group.iter().map(|s| s.hausdorff_mm).collect();
            let (dm, ds) = mean_std(&dices);
            let (hm, hs) = mean_std(&hds);
            OrganSummary {
                organ_label: organ.to_string(),
                count: group.len(),
                dice_mean: dm,
                dice_std: ds,
                hausdorff_mean_mm: hm,
                hausdorff_std_mm: hs,
            }
        })
        .collect()
}
