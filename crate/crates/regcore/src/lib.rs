//! Landmark-driven 2D image registration.
//!
//! `regcore` aligns a moving image to a fixed template from matched
//! landmark pairs using closed-form solvers — rigid (orthogonal
//! Procrustes), affine (linear least squares), and regularized thin-plate
//! splines — then resamples images, masks, and landmarks through the
//! fitted transform. Landmarks can be supplied directly, extracted from
//! non-negative activation stacks via a center-of-mass layer, or taken
//! from the built-in synthetic phantom that ships with ground-truth
//! deformations for benchmarking.
//!
//! The crate is organized around the registration pipeline:
//!
//! * [`geom`] — points, landmark sets, and the transform family
//! * [`solvers`] — closed-form transform fitting
//! * [`warp`] — sample-grid generation and image/mask resampling
//! * [`landmarks`] — center-of-mass landmark extraction and the MSE loss
//! * [`metrics`] — Dice, Hausdorff distance, paired t-tests
//! * [`pipeline`] — templating, preprocessing, augmentation, registration
//!   runs, robustness sweeps
//! * [`phantom`] — synthetic benchmark data with exact ground truth
//! * [`io`] — on-disk formats (raw images, activation stacks, landmark
//!   CSV, reports)
//!
//! Runnable demonstrations of each capability live in `examples/`.

pub mod bench;
pub mod error;
pub mod geom;
pub mod io;
pub mod landmarks;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod solvers;
pub mod warp;

pub use error::{FormatError, GeomError, MetricError, PipelineError, SolveError};
pub use geom::{
    AffineTransform, KernelVariant, LandmarkSet, Point2, RigidTransform, TpsTransform,
    TransformModel,
};
pub use landmarks::{center_of_mass, mse_loss, ActivationStack, LandmarkExtraction};
pub use metrics::{
    dice, hausdorff_mm, paired_t_test, summarize, MetricSample, OrganSummary, TTestResult,
};
pub use pipeline::{
    make_template, preprocess, random_affine_augment, register_frame, run_sweep, sample_lambda,
    AugmentRanges, ExperimentConfig, ModelKind, RegistrationReport, SweepAxis, SweepMethod,
    SweepRow, SweepSpec,
};
pub use solvers::{solve_affine, solve_rigid, solve_tps, tps_bending_energy, tps_kernel};
pub use warp::{
    build_sample_grid, build_sample_grid_with_spacing, resample_bilinear, resample_mask_nearest,
    ImageGrid, SampleGrid, SegmentationMask,
};
