//! End-to-end registration pipeline and experiment harness: templating,
//! preprocessing, augmentation, regularization sampling, single-frame
//! registration, and robustness sweeps over the synthetic phantom.
//!
//! Determinism contract: every operation that takes a seed or generator
//! is a pure function of it. Sweeps hand each (offset, frame) cell its
//! own counter-derived generator, and rows are emitted in sorted order,
//! so reruns produce identical output regardless of thread count.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::geom::{
    AffineTransform, KernelVariant, LandmarkSet, RigidTransform, TransformModel,
};
use crate::landmarks::mse_loss;
use crate::metrics::{dice, hausdorff_mm};
use crate::phantom::{generate_phantom, PhantomConfig};
use crate::solvers::{solve_affine, solve_rigid, solve_tps};
use crate::warp::{
    build_sample_grid_with_spacing, resample_bilinear, resample_mask_nearest, resize_bilinear,
    ImageGrid, SegmentationMask,
};
use nalgebra::{Matrix2x3, Vector2};

/// Canonical preprocessed image side length in pixels.
pub const CANONICAL_SIZE: usize = 224;
/// Canonical isotropic resolution in millimetres.
pub const CANONICAL_SPACING_MM: f64 = 1.0;
/// Log-uniform regularization sampling bounds. A literal lower bound of 0
/// has no log-uniform meaning; 1e-6 is numerically indistinguishable from
/// 0 for the solver at the landmark counts used here.
pub const LAMBDA_MIN: f64 = 1e-6;
pub const LAMBDA_MAX: f64 = 10.0;
/// Capture window (pixels) of the intensity-translation baseline.
pub const BASELINE_WINDOW_PX: i64 = 10;

/// Transform family fitted by [`register_frame`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Rigid,
    Affine,
    Tps,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rigid => "rigid",
            ModelKind::Affine => "affine",
            ModelKind::Tps => "tps",
        }
    }
}

/// Methods compared by a robustness sweep: the landmark-driven models
/// plus the deliberately simple intensity baseline that gives the sweep
/// curves contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMethod {
    Rigid,
    Affine,
    Tps,
    BaselineTranslation,
}

impl SweepMethod {
    pub fn name(self) -> &'static str {
        match self {
            SweepMethod::Rigid => "rigid",
            SweepMethod::Affine => "affine",
            SweepMethod::Tps => "tps",
            SweepMethod::BaselineTranslation => "baseline_translation",
        }
    }
}

/// Axis along which the sweep perturbs the moving frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    RotationDeg,
    TranslationMm,
}

/// Symmetric sweep: offsets run from `-extent` to `+extent` in `step`
/// increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub extent: f64,
    pub step: f64,
}

impl SweepSpec {
    pub fn offsets(&self) -> Vec<f64> {
        let n = (self.extent / self.step + 1e-9).floor() as i64;
        (-n..=n).map(|k| k as f64 * self.step).collect()
    }
}

/// Regularization weight: fixed, or drawn log-uniformly per registration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, rename_all = "snake_case")]
pub enum LambdaSpec {
    Fixed(f64),
    Sample(SampleMarker),
}

/// Serde marker for the string `"sample"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMarker {
    Sample,
}

impl LambdaSpec {
    pub fn resolve(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            LambdaSpec::Fixed(v) => v,
            LambdaSpec::Sample(_) => sample_lambda(rng),
        }
    }
}

/// Full experiment description; serializable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub models: Vec<SweepMethod>,
    pub lambda: LambdaSpec,
    #[serde(default)]
    pub kernel: KernelVariant,
    pub sweep: SweepSpec,
    pub seed: u64,
    pub frame_count: usize,
    #[serde(default)]
    pub phantom: PhantomParams,
}

/// Phantom knobs exposed through the experiment config (seed and frame
/// count live at the top level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomParams {
    pub size: usize,
    pub spacing_mm: f64,
    pub organ_count: usize,
    pub deformation: crate::phantom::DeformationFamily,
    pub amplitude: f64,
    pub landmark_count: usize,
    pub blob_sigma_px: f64,
    pub intensity_jitter: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        let d = PhantomConfig::default();
        PhantomParams {
            size: d.size,
            spacing_mm: d.spacing_mm,
            organ_count: d.organ_count,
            deformation: d.deformation,
            amplitude: d.amplitude,
            landmark_count: d.landmark_count,
            blob_sigma_px: d.blob_sigma_px,
            intensity_jitter: d.intensity_jitter,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.models.is_empty() {
            return Err(PipelineError::InvalidConfig("no models configured".into()));
        }
        if !(self.sweep.step > 0.0) {
            return Err(PipelineError::InvalidConfig(format!(
                "sweep step must be positive, got {}",
                self.sweep.step
            )));
        }
        if self.sweep.extent < 0.0 || !self.sweep.extent.is_finite() {
            return Err(PipelineError::InvalidConfig(format!(
                "sweep extent must be non-negative, got {}",
                self.sweep.extent
            )));
        }
        if let LambdaSpec::Fixed(l) = self.lambda {
            if !(l >= 0.0) {
                return Err(PipelineError::InvalidConfig(format!(
                    "lambda must be non-negative, got {l}"
                )));
            }
        }
        if self.frame_count == 0 {
            return Err(PipelineError::InvalidConfig("frame_count is zero".into()));
        }
        Ok(())
    }

    pub fn phantom_config(&self) -> PhantomConfig {
        PhantomConfig {
            size: self.phantom.size,
            spacing_mm: self.phantom.spacing_mm,
            organ_count: self.phantom.organ_count,
            frame_count: self.frame_count,
            seed: self.seed,
            deformation: self.phantom.deformation,
            amplitude: self.phantom.amplitude,
            landmark_count: self.phantom.landmark_count,
            blob_sigma_px: self.phantom.blob_sigma_px,
            intensity_jitter: self.phantom.intensity_jitter,
        }
    }
}

/// Pixel-wise arithmetic mean of equally shaped frames.
pub fn make_template(frames: &[ImageGrid]) -> Result<ImageGrid, PipelineError> {
    let first = frames.first().ok_or(PipelineError::EmptyInput)?;
    for f in frames {
        if !f.same_shape(first) {
            return Err(PipelineError::ShapeMismatch {
                a_h: first.height(),
                a_w: first.width(),
                b_h: f.height(),
                b_w: f.width(),
            });
        }
    }
    let n = frames.len() as f64;
    let len = first.values().len();
    // compensated accumulation keeps the mean within an ulp per pixel
    let mut acc = vec![0.0f64; len];
    let mut carry = vec![0.0f64; len];
    for f in frames {
        for i in 0..len {
            let y = f.values()[i] - carry[i];
            let t = acc[i] + y;
            carry[i] = (t - acc[i]) - y;
            acc[i] = t;
        }
    }
    for a in acc.iter_mut() {
        *a /= n;
    }
    Ok(ImageGrid::new(
        first.height(),
        first.width(),
        first.spacing_mm(),
        acc,
    ))
}

/// Canonicalize a raw scan: min-max normalize to [0, 1] (a constant image
/// becomes all zeros), resample to 1 mm isotropic, scale so the shorter
/// physical side spans 224 px, and center-crop to 224×224. Canonical
/// input passes through unchanged.
pub fn preprocess(raw: &ImageGrid) -> ImageGrid {
    // 1. intensity normalization
    let (lo, hi) = raw.min_max();
    let range = hi - lo;
    let normalized = if range > 0.0 {
        ImageGrid::new(
            raw.height(),
            raw.width(),
            raw.spacing_mm(),
            raw.values().iter().map(|v| (v - lo) / range).collect(),
        )
    } else {
        ImageGrid::zeros(raw.height(), raw.width(), raw.spacing_mm())
    };

    // 2. resample to 1 mm isotropic
    let (ext_h, ext_w) = normalized.extent_mm();
    let h_mm = (ext_h / CANONICAL_SPACING_MM).round().max(1.0) as usize;
    let w_mm = (ext_w / CANONICAL_SPACING_MM).round().max(1.0) as usize;
    let at_1mm = if h_mm == normalized.height() && w_mm == normalized.width() {
        normalized
    } else {
        resize_bilinear(&normalized, h_mm, w_mm)
    };

    // 3. shorter side to 224 px
    let (h, w) = (at_1mm.height(), at_1mm.width());
    let (h2, w2) = if h <= w {
        (
            CANONICAL_SIZE,
            ((w as f64 * CANONICAL_SIZE as f64 / h as f64).round() as usize).max(CANONICAL_SIZE),
        )
    } else {
        (
            ((h as f64 * CANONICAL_SIZE as f64 / w as f64).round() as usize).max(CANONICAL_SIZE),
            CANONICAL_SIZE,
        )
    };
    let resized = if h2 == h && w2 == w {
        at_1mm
    } else {
        resize_bilinear(&at_1mm, h2, w2)
    };

    // 4. center crop
    center_crop(&resized, CANONICAL_SIZE, CANONICAL_SIZE)
}

fn center_crop(img: &ImageGrid, out_h: usize, out_w: usize) -> ImageGrid {
    assert!(img.height() >= out_h && img.width() >= out_w);
    let r0 = (img.height() - out_h) / 2;
    let c0 = (img.width() - out_w) / 2;
    if r0 == 0 && c0 == 0 && img.height() == out_h && img.width() == out_w {
        return img.clone();
    }
    ImageGrid::from_fn(out_h, out_w, img.spacing_mm(), |r, c| {
        img.get(r + r0, c + c0)
    })
}

/// Inclusive parameter intervals for the affine augmentation draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentRanges {
    pub rotation_deg: (f64, f64),
    pub translation_mm: (f64, f64),
    pub scale: (f64, f64),
    pub shear: (f64, f64),
}

impl AugmentRanges {
    /// Symmetric ranges covering the robustness-sweep extents:
    /// rotation ±30°, translation ±30 mm, scale ±10%, shear ±5%.
    pub fn default_training() -> Self {
        AugmentRanges {
            rotation_deg: (-30.0, 30.0),
            translation_mm: (-30.0, 30.0),
            scale: (-0.10, 0.10),
            shear: (-0.05, 0.05),
        }
    }

    pub fn zero() -> Self {
        AugmentRanges {
            rotation_deg: (0.0, 0.0),
            translation_mm: (0.0, 0.0),
            scale: (0.0, 0.0),
            shear: (0.0, 0.0),
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    assert!(lo.is_finite() && hi.is_finite() && lo <= hi);
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// An augmented image/mask pair with the transform that produced it.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub image: ImageGrid,
    pub masks: Vec<SegmentationMask>,
    /// Content motion in normalized coordinates: a feature at `x` in the
    /// input appears at `applied(x)` in the output.
    pub applied: AffineTransform,
}

/// Apply a random affine perturbation to an image and its masks.
///
/// Parameters are drawn in a fixed order (rotation, translation x/y,
/// scale, shear) from the supplied generator, composed about the image
/// center as translate ∘ rotate ∘ shear ∘ scale, and applied by backward
/// warping (bilinear for the image, nearest for masks).
pub fn random_affine_augment(
    img: &ImageGrid,
    masks: &[SegmentationMask],
    rng: &mut ChaCha8Rng,
    ranges: &AugmentRanges,
) -> Augmented {
    let rot = draw(rng, ranges.rotation_deg).to_radians();
    let tx_mm = draw(rng, ranges.translation_mm);
    let ty_mm = draw(rng, ranges.translation_mm);
    let scale = 1.0 + draw(rng, ranges.scale);
    let shear = draw(rng, ranges.shear);

    let (tx, ty) = img.mm_offset_to_normalized(tx_mm, ty_mm);
    let rotate = RigidTransform::from_angle(rot, Vector2::new(tx, ty)).to_affine();
    let shear_scale = AffineTransform::new(Matrix2x3::new(
        scale,
        shear * scale,
        0.0,
        0.0,
        scale,
        0.0,
    ));
    let applied = rotate.compose(&shear_scale);

    let inverse = applied
        .inverse()
        .expect("augmentation transforms are near identity, hence invertible");
    let grid = build_sample_grid_with_spacing(
        &TransformModel::Affine(inverse),
        img.height(),
        img.width(),
        img.spacing_mm(),
    );
    let image = resample_bilinear(img, &grid);
    let masks = masks
        .iter()
        .map(|m| resample_mask_nearest(m, &grid))
        .collect();
    Augmented {
        image,
        masks,
        applied,
    }
}

/// Draw λ from the log-uniform distribution on [`LAMBDA_MIN`], [`LAMBDA_MAX`].
pub fn sample_lambda(rng: &mut ChaCha8Rng) -> f64 {
    sample_lambda_in(rng, LAMBDA_MIN, LAMBDA_MAX)
}

/// Log-uniform draw on [lo, hi]; a collapsed interval returns its value.
pub fn sample_lambda_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    assert!(lo > 0.0 && lo <= hi, "need 0 < lo <= hi");
    if lo == hi {
        return lo;
    }
    rng.gen_range(lo.ln()..hi.ln()).exp().clamp(lo, hi)
}

/// Record of one registration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub model: String,
    pub lambda: Option<f64>,
    pub kernel: Option<String>,
    pub mse_before: f64,
    pub mse_after: f64,
    pub runtime_ms: f64,
    pub transform: TransformModel,
}

/// Fit the chosen model and warp the moving image onto the template
/// lattice.
///
/// The solver is deliberately called with the *fixed* landmarks as the
/// source and the *moving* landmarks as the target, so the fitted map
/// sends template-space output pixels into moving-image space and the
/// resample is a standard backward warp.
pub fn register_frame(
    template: &ImageGrid,
    moving: &ImageGrid,
    lm_fix: &LandmarkSet,
    lm_mov: &LandmarkSet,
    model: ModelKind,
    lambda: f64,
    kernel: KernelVariant,
) -> Result<(TransformModel, ImageGrid, RegistrationReport), PipelineError> {
    if !template.same_shape(moving) {
        return Err(PipelineError::ShapeMismatch {
            a_h: template.height(),
            a_w: template.width(),
            b_h: moving.height(),
            b_w: moving.width(),
        });
    }
    let mse_before = mse_loss(template, moving)?;

    let start = Instant::now();
    let transform = match model {
        ModelKind::Rigid => TransformModel::Rigid(solve_rigid(lm_fix, lm_mov)?),
        ModelKind::Affine => TransformModel::Affine(solve_affine(lm_fix, lm_mov)?),
        ModelKind::Tps => TransformModel::Tps(solve_tps(lm_fix, lm_mov, lambda, kernel)?),
    };
    let grid = build_sample_grid_with_spacing(
        &transform,
        template.height(),
        template.width(),
        template.spacing_mm(),
    );
    let registered = resample_bilinear(moving, &grid);
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;

    let mse_after = mse_loss(template, &registered)?;
    let report = RegistrationReport {
        model: model.name().to_string(),
        lambda: match model {
            ModelKind::Tps => Some(lambda),
            _ => None,
        },
        kernel: match model {
            ModelKind::Tps => Some(kernel.name().to_string()),
            _ => None,
        },
        mse_before,
        mse_after,
        runtime_ms,
        transform: transform.clone(),
    };
    Ok((transform, registered, report))
}

/// Intensity-only translation baseline: exhaustive integer-pixel MSE
/// search within ±`window_px`. Its limited capture range and inability to
/// rotate are intentional; it exists to give robustness sweeps a
/// degrading reference curve.
pub fn baseline_translation(
    template: &ImageGrid,
    moving: &ImageGrid,
    window_px: i64,
) -> TransformModel {
    assert!(template.same_shape(moving));
    let (h, w) = (template.height() as i64, template.width() as i64);
    let mut best = (f64::INFINITY, 0i64, 0i64);
    for dy in -window_px..=window_px {
        for dx in -window_px..=window_px {
            let mut sum = 0.0;
            for r in 0..h {
                for c in 0..w {
                    let (sr, sc) = (r + dy, c + dx);
                    let m = if sr >= 0 && sc >= 0 && sr < h && sc < w {
                        moving.get(sr as usize, sc as usize)
                    } else {
                        0.0
                    };
                    let d = template.get(r as usize, c as usize) - m;
                    sum += d * d;
                }
            }
            if sum < best.0 {
                best = (sum, dx, dy);
            }
        }
    }
    let (_, dx, dy) = best;
    TransformModel::Affine(AffineTransform::translation(
        2.0 * dx as f64 / w as f64,
        2.0 * dy as f64 / h as f64,
    ))
}

/// One sweep measurement: overlap of the warped organ union against the
/// template's, for a given offset, frame, and method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub offset: f64,
    pub frame_id: usize,
    pub organ: String,
    pub method: String,
    pub dice: f64,
    pub hausdorff_mm: f64,
}

/// Run the robustness sweep described by `cfg`: for every offset along
/// the configured axis, re-render each phantom frame with that offset
/// stacked onto its ground-truth motion, register it with every
/// configured method using oracle landmarks, and measure mask overlap
/// against the template.
///
/// Rows come back sorted by (offset, frame, method). Cells are processed
/// in parallel but each is a pure function of the config, so the result
/// is identical for any thread count.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, PipelineError> {
    cfg.validate()?;
    let phantom = generate_phantom(&cfg.phantom_config());
    let template = &phantom.template;
    let template_union = template.union_mask();
    let offsets = cfg.sweep.offsets();

    let cells: Vec<(usize, usize)> = offsets
        .iter()
        .enumerate()
        .flat_map(|(oi, _)| (0..phantom.frames.len()).map(move |fi| (oi, fi)))
        .collect();

    let results: Result<Vec<Vec<SweepRow>>, PipelineError> = cells
        .par_iter()
        .map(|&(oi, fi)| {
            let offset = offsets[oi];
            let offset_transform = offset_to_transform(cfg.sweep.axis, offset, &template.image);
            let variant = phantom.offset_variant(fi, &offset_transform);
            let variant_union = variant.union_mask();

            let mut rows = Vec::with_capacity(cfg.models.len());
            for (mi, &method) in cfg.models.iter().enumerate() {
                let mut cell_rng = cell_rng(cfg.seed, oi, fi, mi);
                let transform = match method {
                    SweepMethod::Rigid => {
                        TransformModel::Rigid(solve_rigid(
                            &template.oracle_landmarks,
                            &variant.oracle_landmarks,
                        )?)
                    }
                    SweepMethod::Affine => {
                        TransformModel::Affine(solve_affine(
                            &template.oracle_landmarks,
                            &variant.oracle_landmarks,
                        )?)
                    }
                    SweepMethod::Tps => {
                        let lambda = cfg.lambda.resolve(&mut cell_rng);
                        TransformModel::Tps(solve_tps(
                            &template.oracle_landmarks,
                            &variant.oracle_landmarks,
                            lambda,
                            cfg.kernel,
                        )?)
                    }
                    SweepMethod::BaselineTranslation => {
                        baseline_translation(&template.image, &variant.image, BASELINE_WINDOW_PX)
                    }
                };
                let grid = build_sample_grid_with_spacing(
                    &transform,
                    template.image.height(),
                    template.image.width(),
                    template.image.spacing_mm(),
                );
                let warped = resample_mask_nearest(&variant_union, &grid);
                let d = dice(&template_union, &warped)?;
                let hd = match hausdorff_mm(&template_union, &warped) {
                    Ok(v) => v,
                    // a warp that empties the mask scores the image
                    // diagonal, the worst representable distance
                    Err(_) => {
                        let (eh, ew) = template.image.extent_mm();
                        (eh * eh + ew * ew).sqrt()
                    }
                };
                rows.push(SweepRow {
                    offset,
                    frame_id: fi,
                    organ: "all".to_string(),
                    method: method.name().to_string(),
                    dice: d,
                    hausdorff_mm: hd,
                });
            }
            Ok(rows)
        })
        .collect();

    Ok(results?.into_iter().flatten().collect())
}

fn cell_rng(seed: u64, offset_idx: usize, frame_idx: usize, model_idx: usize) -> ChaCha8Rng {
    let mix = (offset_idx as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((frame_idx as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F))
        .wrapping_add((model_idx as u64).wrapping_mul(0x1656_67B1_9E37_79F9));
    ChaCha8Rng::seed_from_u64(seed ^ mix)
}

/// Build the rigid misalignment for one sweep offset: a rotation about
/// the image center or a translation along the column axis.
pub fn offset_to_transform(axis: SweepAxis, offset: f64, reference: &ImageGrid) -> RigidTransform {
    match axis {
        SweepAxis::RotationDeg => {
            RigidTransform::from_angle(offset.to_radians(), Vector2::zeros())
        }
        SweepAxis::TranslationMm => {
            let (dx, _) = reference.mm_offset_to_normalized(offset, 0.0);
            RigidTransform::from_angle(0.0, Vector2::new(dx, 0.0))
        }
    }
}
