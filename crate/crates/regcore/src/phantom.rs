//! Synthetic benchmark data with exact ground truth.
//!
//! A phantom is an analytic scene — a low-frequency background plus a few
//! soft-edged elliptical "organs" — observed through per-frame smooth
//! deformations. Frames are rendered by evaluating the scene at the
//! *inverse* of the ground-truth motion, so images, labeled masks,
//! landmark positions, and activation blobs all stay mutually consistent
//! to machine precision with no resampling step in between.
//!
//! Each frame carries 64 (configurable) landmark sites attached to the
//! scene: organ centers, points on inner organ rings, and a scattering of
//! background sites. Their activation maps are Gaussian blobs, so the
//! center-of-mass layer recovers the true landmark positions and the
//! phantom can stand in for a learned feature backbone when exercising
//! the solver / warp / metrics chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::{
    normalized_to_pixel, pixel_to_normalized, AffineTransform, KernelVariant, LandmarkSet, Point2,
    RigidTransform, TransformModel,
};
use crate::landmarks::{center_of_mass, ActivationStack};
use crate::solvers::solve_tps;
use crate::warp::{ImageGrid, SegmentationMask};
use nalgebra::{Matrix2x3, Vector2};

/// Which transform family the per-frame ground-truth motion is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeformationFamily {
    Rigid,
    Affine,
    /// Rigid motion plus a smooth spline jiggle; the richest setting and
    /// the default.
    #[default]
    Tps,
}

/// Phantom generation parameters. Defaults give a 224×224 canvas at 1 mm
/// with 3 organs, 20 frames, and 64 landmark sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub size: usize,
    pub spacing_mm: f64,
    pub organ_count: usize,
    pub frame_count: usize,
    pub seed: u64,
    pub deformation: DeformationFamily,
    /// Scales every motion range; 0 collapses all frames onto the template.
    pub amplitude: f64,
    pub landmark_count: usize,
    pub blob_sigma_px: f64,
    /// Std-dev of additive zero-mean intensity noise (0 disables).
    pub intensity_jitter: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            size: 224,
            spacing_mm: 1.0,
            organ_count: 3,
            frame_count: 20,
            seed: 42,
            deformation: DeformationFamily::Tps,
            amplitude: 1.0,
            landmark_count: 64,
            blob_sigma_px: 3.0,
            intensity_jitter: 0.0,
        }
    }
}

impl PhantomConfig {
    fn validate(&self) {
        assert!(self.size >= 32, "canvas too small");
        assert!(self.spacing_mm > 0.0);
        assert!(
            (2..=4).contains(&self.organ_count),
            "organ count must be 2..=4"
        );
        assert!(self.frame_count >= 1);
        assert!(
            (0.0..=3.0).contains(&self.amplitude),
            "amplitude must be within [0, 3] to keep deformations invertible"
        );
        assert!(self.landmark_count >= 3);
        assert!(self.blob_sigma_px > 0.0);
        assert!(self.intensity_jitter >= 0.0);
    }
}

/// A named organ mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMask {
    pub label: String,
    pub mask: SegmentationMask,
}

/// One phantom observation: image, labels, oracle landmarks with their
/// activation maps, and the exact template→frame motion.
#[derive(Debug, Clone)]
pub struct PhantomFrame {
    pub frame_id: usize,
    pub image: ImageGrid,
    pub masks: Vec<LabeledMask>,
    pub oracle_landmarks: LandmarkSet,
    pub oracle_activations: ActivationStack,
    pub ground_truth: TransformModel,
}

impl PhantomFrame {
    /// Union of all organ masks.
    pub fn union_mask(&self) -> SegmentationMask {
        let mut it = self.masks.iter();
        let first = it.next().expect("phantom frames have at least one organ");
        it.fold(first.mask.clone(), |acc, m| acc.union(&m.mask))
    }
}

/// A generated phantom dataset. The template is the frame with identity
/// ground truth.
pub struct Phantom {
    pub config: PhantomConfig,
    pub template: PhantomFrame,
    pub frames: Vec<PhantomFrame>,
    scene: Scene,
    sites: Vec<Point2>,
}

#[derive(Debug, Clone)]
struct Organ {
    center: Point2,
    radii: (f64, f64),
    angle: f64,
    intensity: f64,
    edge_width: f64,
}

impl Organ {
    /// Elliptical metric: ρ ≤ 1 inside the organ.
    fn rho(&self, p: Point2) -> f64 {
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        let (s, c) = self.angle.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        ((u / self.radii.0).powi(2) + (v / self.radii.1).powi(2)).sqrt()
    }

    fn contains(&self, p: Point2) -> bool {
        self.rho(p) <= 1.0
    }

    /// Soft-edge blend weight: 1 deep inside, cosine ramp to 0 at ρ = 1.
    fn blend(&self, p: Point2) -> f64 {
        let rho = self.rho(p);
        if rho >= 1.0 {
            0.0
        } else if rho <= 1.0 - self.edge_width {
            1.0
        } else {
            let t = (1.0 - rho) / self.edge_width;
            0.5 - 0.5 * (std::f64::consts::PI * t).cos()
        }
    }
}

#[derive(Debug, Clone)]
struct Scene {
    organs: Vec<Organ>,
    bg_coeffs: [f64; 6],
}

impl Scene {
    fn background(&self, p: Point2) -> f64 {
        let [a, b, c, d, e, f] = self.bg_coeffs;
        0.20 + 0.05 * (a * p.x + b * p.y + c).sin() + 0.04 * (d * p.x + e * p.y + f).cos()
    }

    /// Air margin: intensity fades to 0 toward the canvas edge, like the
    /// dark border of an MR scan. Keeps the zero fill of backward
    /// warping consistent with the scene content.
    fn edge_falloff(p: Point2) -> f64 {
        let r = (p.x * p.x + p.y * p.y).sqrt();
        if r <= 0.80 {
            1.0
        } else if r >= 1.0 {
            0.0
        } else {
            0.5 + 0.5 * (std::f64::consts::PI * (r - 0.80) / 0.20).cos()
        }
    }

    fn eval(&self, p: Point2) -> f64 {
        let mut v = self.background(p);
        for organ in &self.organs {
            let w = organ.blend(p);
            if w > 0.0 {
                v = v * (1.0 - w) + organ.intensity * w;
            }
        }
        (v * Self::edge_falloff(p)).clamp(0.0, 1.0)
    }
}

fn sample_scene(rng: &mut ChaCha8Rng, organ_count: usize) -> Scene {
    let bg_coeffs = [
        rng.gen_range(0.8..2.2),
        rng.gen_range(0.8..2.2),
        rng.gen_range(0.0..6.28),
        rng.gen_range(0.8..2.2),
        rng.gen_range(0.8..2.2),
        rng.gen_range(0.0..6.28),
    ];

    let mut organs = Vec::with_capacity(organ_count);
    for k in 0..organ_count {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / organ_count as f64
            + rng.gen_range(-0.10..0.10);
        let dist = rng.gen_range(0.18..0.27);
        let center = Point2::new(dist * theta.cos(), dist * theta.sin());
        organs.push(Organ {
            center,
            radii: (rng.gen_range(0.09..0.13), rng.gen_range(0.08..0.12)),
            angle: rng.gen_range(0.0..std::f64::consts::PI),
            intensity: rng.gen_range(0.55..0.85),
            edge_width: 0.25,
        });
    }

    // shrink any pair that would overlap so the label map stays disjoint
    for i in 0..organs.len() {
        for j in (i + 1)..organs.len() {
            let d = organs[i].center.distance(organs[j].center);
            let reach_i = organs[i].radii.0.max(organs[i].radii.1);
            let reach_j = organs[j].radii.0.max(organs[j].radii.1);
            if reach_i + reach_j > 0.92 * d {
                let scale = 0.92 * d / (reach_i + reach_j);
                for o in [i, j] {
                    organs[o].radii.0 *= scale;
                    organs[o].radii.1 *= scale;
                }
            }
        }
    }
    Scene {
        organs,
        bg_coeffs,
    }
}

/// Deterministic anatomy-attached landmark sites: organ centers, inner
/// rings, then background scatter, all kept within a central disk so that
/// deformed blobs stay well interior under sweep offsets.
fn sample_sites(rng: &mut ChaCha8Rng, scene: &Scene, count: usize) -> Vec<Point2> {
    const SITE_DISK: f64 = 0.36;
    let mut sites = Vec::with_capacity(count);
    for organ in &scene.organs {
        if sites.len() < count {
            sites.push(organ.center);
        }
        for k in 0..8 {
            if sites.len() >= count {
                break;
            }
            let theta = organ.angle + 2.0 * std::f64::consts::PI * k as f64 / 8.0;
            let p = Point2::new(
                organ.center.x + 0.5 * organ.radii.0 * theta.cos(),
                organ.center.y + 0.5 * organ.radii.1 * theta.sin(),
            );
            if p.to_vector().norm() <= SITE_DISK {
                sites.push(p);
            }
        }
    }
    // fill the remainder with a minimum-separation background scatter
    let mut guard = 0;
    while sites.len() < count {
        guard += 1;
        assert!(guard < 100_000, "site sampling failed to fill the quota");
        let r = SITE_DISK * rng.gen_range(0.0f64..1.0).sqrt();
        let theta = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let p = Point2::new(r * theta.cos(), r * theta.sin());
        if sites.iter().all(|s| s.distance(p) > 0.035) {
            sites.push(p);
        }
    }
    sites
}

fn per_frame_rng(seed: u64, frame: usize) -> ChaCha8Rng {
    let mixed = (frame as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha8Rng::seed_from_u64(seed ^ mixed)
}

/// Draw a ground-truth motion for one frame. Magnitudes scale with
/// `amplitude`; rotation and translation have a floor so every frame
/// moves measurably (keeps pre/post comparisons strict).
fn sample_ground_truth(
    rng: &mut ChaCha8Rng,
    cfg: &PhantomConfig,
) -> TransformModel {
    let a = cfg.amplitude;
    if a == 0.0 {
        return TransformModel::identity();
    }
    let angle = rng.gen_range(2.0f64..6.0).to_radians()
        * a
        * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let extent_mm = cfg.size as f64 * cfg.spacing_mm;
    let t_mm = rng.gen_range(4.0..10.0) * a;
    let t_dir = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
    let t = Vector2::new(
        2.0 * t_mm * t_dir.cos() / extent_mm,
        2.0 * t_mm * t_dir.sin() / extent_mm,
    );
    let rigid = RigidTransform::from_angle(angle, t);

    match cfg.deformation {
        DeformationFamily::Rigid => TransformModel::Rigid(rigid),
        DeformationFamily::Affine => {
            let scale = 1.0 + rng.gen_range(-0.04..0.04) * a;
            let shear = rng.gen_range(-0.03..0.03) * a;
            let lin = rigid.rotation()
                * nalgebra::Matrix2::new(scale, shear * scale, 0.0, scale);
            let m = Matrix2x3::new(
                lin[(0, 0)],
                lin[(0, 1)],
                t.x,
                lin[(1, 0)],
                lin[(1, 1)],
                t.y,
            );
            TransformModel::Affine(AffineTransform::new(m))
        }
        DeformationFamily::Tps => {
            // smooth jiggle: a spline through a 3x3 lattice of nudged knots
            let mut knots = Vec::with_capacity(9);
            let mut targets = Vec::with_capacity(9);
            for gy in -1..=1 {
                for gx in -1..=1 {
                    let k = Point2::new(0.5 * gx as f64, 0.5 * gy as f64);
                    let mag = rng.gen_range(0.010..0.035) * a;
                    let dir = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
                    knots.push(k);
                    targets.push(Point2::new(
                        k.x + mag * dir.cos(),
                        k.y + mag * dir.sin(),
                    ));
                }
            }
            let jiggle = solve_tps(
                &LandmarkSet::new(knots).unwrap(),
                &LandmarkSet::new(targets).unwrap(),
                0.0,
                KernelVariant::StandardRLogR,
            )
            .expect("well-spread lattice cannot be singular");
            TransformModel::Tps(jiggle).compose_rigid_left(&rigid)
        }
    }
}

/// Invert `g` at one target point by Newton iteration (closed-form for
/// rigid/affine), warm-started from `guess`.
fn invert_at(g: &TransformModel, target: Point2, guess: Point2) -> Point2 {
    match g {
        TransformModel::Rigid(t) => t.inverse().apply(target),
        TransformModel::Affine(t) => t
            .inverse()
            .expect("ground-truth affines are near identity, hence invertible")
            .apply(target),
        TransformModel::Tps(_) => {
            let mut x = guess;
            for _ in 0..60 {
                let fx = g.apply(x);
                let rx = fx.x - target.x;
                let ry = fx.y - target.y;
                if rx * rx + ry * ry < 1e-26 {
                    return x;
                }
                let j = g.jacobian(x);
                let inv = j
                    .try_inverse()
                    .expect("ground-truth deformations stay locally invertible");
                x = Point2::new(
                    x.x - (inv[(0, 0)] * rx + inv[(0, 1)] * ry),
                    x.y - (inv[(1, 0)] * rx + inv[(1, 1)] * ry),
                );
            }
            panic!("spline inversion did not converge at {target:?}");
        }
    }
}

/// Render the scene through motion `g`: frame(p) = scene(g⁻¹(p)).
fn render_frame(
    scene: &Scene,
    sites: &[Point2],
    cfg: &PhantomConfig,
    g: TransformModel,
    frame_id: usize,
) -> PhantomFrame {
    let n = cfg.size;
    let spacing = (cfg.spacing_mm, cfg.spacing_mm);

    // per-pixel noise drawn up front so the parallel pass stays pure
    let noise: Option<Vec<f64>> = if cfg.intensity_jitter > 0.0 {
        let mut rng = per_frame_rng(cfg.seed.wrapping_add(0xA5A5_5A5A), frame_id);
        let sigma = cfg.intensity_jitter;
        Some(
            (0..n * n)
                .map(|_| {
                    // Box-Muller
                    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    sigma
                        * (-2.0 * u1.ln()).sqrt()
                        * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect(),
        )
    } else {
        None
    };

    let organ_count = scene.organs.len();
    // one pass per row: invert g once per pixel, reuse for image + masks
    let rows: Vec<(Vec<f64>, Vec<Vec<bool>>)> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut img_row = Vec::with_capacity(n);
            let mut mask_rows = vec![Vec::with_capacity(n); organ_count];
            // warm start from the previous pixel's inverse
            let mut guess = invert_guess_seed(&g, r, n);
            for c in 0..n {
                let p = pixel_to_normalized(c as f64, r as f64, n, n);
                let x = invert_at(&g, p, guess);
                guess = x;
                let mut v = scene.eval(x);
                if let Some(noise) = &noise {
                    v = (v + noise[r * n + c]).clamp(0.0, 1.0);
                }
                img_row.push(v);
                for (k, organ) in scene.organs.iter().enumerate() {
                    mask_rows[k].push(organ.contains(x));
                }
            }
            (img_row, mask_rows)
        })
        .collect();

    let mut values = Vec::with_capacity(n * n);
    let mut mask_values = vec![Vec::with_capacity(n * n); organ_count];
    for (img_row, mask_rows) in rows {
        values.extend(img_row);
        for (k, mr) in mask_rows.into_iter().enumerate() {
            mask_values[k].extend(mr);
        }
    }
    let image = ImageGrid::new(n, n, spacing, values);
    let masks = mask_values
        .into_iter()
        .enumerate()
        .map(|(k, vals)| LabeledMask {
            label: format!("organ_{}", k + 1),
            mask: SegmentationMask::new(n, n, spacing, vals),
        })
        .collect();

    // landmark positions and their activation blobs
    let positions: Vec<Point2> = sites.iter().map(|&s| g.apply(s)).collect();
    let oracle_activations = render_blobs(&positions, n, cfg.blob_sigma_px);
    let oracle_landmarks = LandmarkSet::new(positions).expect("site count >= 3");

    let frame = PhantomFrame {
        frame_id,
        image,
        masks,
        oracle_landmarks,
        oracle_activations,
        ground_truth: g,
    };
    debug_assert!(oracle_landmarks_consistent(&frame));
    frame
}

fn invert_guess_seed(g: &TransformModel, row: usize, n: usize) -> Point2 {
    let p = pixel_to_normalized(0.0, row as f64, n, n);
    match g {
        TransformModel::Tps(t) => t
            .affine_part()
            .inverse()
            .map(|inv| inv.apply(p))
            .unwrap_or(p),
        _ => p,
    }
}

fn render_blobs(positions: &[Point2], n: usize, sigma_px: f64) -> ActivationStack {
    let box_r = (7.0 * sigma_px).ceil() as i64;
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma_px * sigma_px);
    let per_channel: Vec<Vec<f64>> = positions
        .par_iter()
        .map(|&pos| {
            let mut map = vec![0.0f64; n * n];
            let (col, row) = normalized_to_pixel(pos, n, n);
            let r0 = ((row - box_r as f64).floor() as i64).max(0);
            let r1 = ((row + box_r as f64).ceil() as i64).min(n as i64 - 1);
            let c0 = ((col - box_r as f64).floor() as i64).max(0);
            let c1 = ((col + box_r as f64).ceil() as i64).min(n as i64 - 1);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let d2 = (r as f64 - row).powi(2) + (c as f64 - col).powi(2);
                    map[r as usize * n + c as usize] = (-d2 * inv_two_sigma_sq).exp();
                }
            }
            map
        })
        .collect();
    let mut data = Vec::with_capacity(positions.len() * n * n);
    for ch in per_channel {
        data.extend(ch);
    }
    ActivationStack::new(positions.len(), n, n, data)
}

fn oracle_landmarks_consistent(frame: &PhantomFrame) -> bool {
    let com = center_of_mass(&frame.oracle_activations);
    com.points()
        .iter()
        .zip(frame.oracle_landmarks.iter())
        .all(|(a, b)| a.distance(*b) < 1e-6)
}

/// Generate a phantom dataset: analytic template plus `frame_count`
/// deformed observations, fully determined by the seed.
pub fn generate_phantom(cfg: &PhantomConfig) -> Phantom {
    cfg.validate();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scene = sample_scene(&mut rng, cfg.organ_count);
    let sites = sample_sites(&mut rng, &scene, cfg.landmark_count);

    let template = render_frame(&scene, &sites, cfg, TransformModel::identity(), usize::MAX);

    let frames: Vec<PhantomFrame> = (0..cfg.frame_count)
        .map(|i| {
            let mut frame_rng = per_frame_rng(cfg.seed, i);
            let g = sample_ground_truth(&mut frame_rng, cfg);
            render_frame(&scene, &sites, cfg, g, i)
        })
        .collect();

    Phantom {
        config: cfg.clone(),
        template,
        frames,
        scene,
        sites,
    }
}

impl Phantom {
    /// Landmark sites in template coordinates.
    pub fn sites(&self) -> &[Point2] {
        &self.sites
    }

    /// Re-render frame `idx` with an extra rigid offset stacked on top of
    /// its ground-truth motion (the robustness-sweep primitive). Offset 0
    /// reproduces the stored frame exactly.
    pub fn offset_variant(&self, idx: usize, offset: &RigidTransform) -> PhantomFrame {
        let base = &self.frames[idx];
        let g = base.ground_truth.compose_rigid_left(offset);
        render_frame(&self.scene, &self.sites, &self.config, g, base.frame_id)
    }
}
