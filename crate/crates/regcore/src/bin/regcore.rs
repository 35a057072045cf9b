//! Command-line front end. Thin wrappers over the library; all real work
//! lives in `regcore`.
//!
//! Exit codes: 0 success, 2 malformed input or I/O failure, 3 solver
//! degeneracy.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use regcore::bench::run_bench;
use regcore::error::{FormatError, PipelineError, SolveError};
use regcore::geom::KernelVariant;
use regcore::io;
use regcore::landmarks::center_of_mass;
use regcore::metrics::{dice, hausdorff_mm, MetricSample};
use regcore::phantom::generate_phantom;
use regcore::pipeline::{make_template, register_frame, run_sweep, ExperimentConfig, ModelKind};

#[derive(Parser)]
#[command(
    name = "regcore",
    about = "Landmark-driven 2D image registration toolkit",
    version
)]
struct Cli {
    /// Seed override for commands with random elements.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores; REGCORE_THREADS as fallback).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a moving image onto a template from landmark pairs.
    Register(RegisterArgs),
    /// Generate a synthetic phantom dataset directory.
    Phantom {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run a robustness sweep and write the report CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
    },
    /// Compare two label maps (Dice, Hausdorff) and write a report CSV.
    Metrics {
        #[arg(long)]
        mask_a: PathBuf,
        #[arg(long)]
        mask_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Average frames into a template image.
    Template {
        /// Input image files.
        #[arg(long, num_args = 1.., required = true)]
        frames: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the solve + warp cycle.
    Bench {
        /// Landmark pair count.
        #[arg(long, default_value_t = 64)]
        m: usize,
        /// Output grid side length in pixels.
        #[arg(long, default_value_t = 224)]
        grid: usize,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, value_enum, default_value_t = ModelArg::Tps)]
        model: ModelArg,
        /// Optional JSON report path (summary always prints to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    template: PathBuf,
    #[arg(long)]
    moving: PathBuf,

    /// Fixed/template landmarks (CSV). Mutually exclusive with
    /// --activations-fixed.
    #[arg(long, requires = "landmarks_moving", conflicts_with_all = ["activations_fixed", "activations_moving"])]
    landmarks_fixed: Option<PathBuf>,
    #[arg(long)]
    landmarks_moving: Option<PathBuf>,

    /// Fixed/template activation stack; landmarks are extracted with the
    /// center-of-mass layer.
    #[arg(long, requires = "activations_moving")]
    activations_fixed: Option<PathBuf>,
    #[arg(long)]
    activations_moving: Option<PathBuf>,

    #[arg(long, value_enum)]
    model: ModelArg,
    /// Spline regularization weight (tps only).
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = KernelArg::Standard)]
    kernel: KernelArg,

    #[arg(long)]
    out_image: PathBuf,
    #[arg(long)]
    out_report: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    Rigid,
    Affine,
    Tps,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Rigid => ModelKind::Rigid,
            ModelArg::Affine => ModelKind::Affine,
            ModelArg::Tps => ModelKind::Tps,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum KernelArg {
    Standard,
    Paper,
}

impl From<KernelArg> for KernelVariant {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Standard => KernelVariant::StandardRLogR,
            KernelArg::Paper => KernelVariant::PaperLiteral,
        }
    }
}

enum CmdError {
    Data(String),
    Solver(String),
}

impl CmdError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CmdError::Data(_) => ExitCode::from(2),
            CmdError::Solver(_) => ExitCode::from(3),
        }
    }

    fn message(&self) -> &str {
        match self {
            CmdError::Data(m) | CmdError::Solver(m) => m,
        }
    }
}

impl From<FormatError> for CmdError {
    fn from(e: FormatError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<SolveError> for CmdError {
    fn from(e: SolveError) -> Self {
        CmdError::Solver(e.to_string())
    }
}

impl From<PipelineError> for CmdError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Solve(s) => CmdError::Solver(s.to_string()),
            other => CmdError::Data(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let threads = cli.threads.or_else(|| {
        std::env::var("REGCORE_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized, --threads ignored");
        }
    }

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::Register(args) => cmd_register(args),
        Command::Phantom { config, out_dir } => {
            let cfg = read_config(&config, cli.seed)?;
            let phantom = generate_phantom(&cfg.phantom_config());
            io::write_phantom_dataset(&out_dir, &phantom)?;
            println!(
                "phantom: {} frames + template written to {}",
                phantom.frames.len(),
                out_dir.display()
            );
            Ok(())
        }
        Command::Sweep { config, out_csv } => {
            let cfg = read_config(&config, cli.seed)?;
            let rows = run_sweep(&cfg)?;
            io::write_sweep_csv(&out_csv, &rows)?;
            println!("sweep: {} rows written to {}", rows.len(), out_csv.display());
            Ok(())
        }
        Command::Metrics { mask_a, mask_b, out } => cmd_metrics(&mask_a, &mask_b, &out),
        Command::Template { frames, out } => {
            let images = frames
                .iter()
                .map(|p| io::read_image(p))
                .collect::<Result<Vec<_>, _>>()?;
            let template = make_template(&images)?;
            io::write_image(&out, &template)?;
            println!("template: averaged {} frames into {}", images.len(), out.display());
            Ok(())
        }
        Command::Bench {
            m,
            grid,
            iters,
            model,
            out,
        } => {
            if m < 3 || grid < 8 || iters == 0 {
                return Err(CmdError::Data(
                    "bench needs --m >= 3, --grid >= 8, --iters >= 1".into(),
                ));
            }
            let report = run_bench(m, grid, iters, model.into(), cli.seed.unwrap_or(0xBE7C));
            println!(
                "bench {} (M={}, grid={}x{}, iters={}):",
                report.model, report.landmark_count, report.grid_size, report.grid_size, iters
            );
            println!(
                "  single-thread: median {:.3} ms, p95 {:.3} ms",
                report.single_thread_median_ms, report.single_thread_p95_ms
            );
            println!(
                "  multi-thread:  median {:.3} ms, p95 {:.3} ms",
                report.multi_thread_median_ms, report.multi_thread_p95_ms
            );
            if let Some(path) = out {
                let json = serde_json::to_string_pretty(&report)
                    .map_err(|e| CmdError::Data(e.to_string()))?;
                std::fs::write(&path, json).map_err(|e| CmdError::Data(e.to_string()))?;
            }
            Ok(())
        }
    }
}

fn read_config(path: &PathBuf, seed_override: Option<u64>) -> Result<ExperimentConfig, CmdError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::Data(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| CmdError::Data(format!("malformed config {}: {e}", path.display())))?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_register(args: RegisterArgs) -> Result<(), CmdError> {
    let template = io::read_image(&args.template)?;
    let moving = io::read_image(&args.moving)?;

    let (lm_fix, lm_mov) = match (&args.landmarks_fixed, &args.activations_fixed) {
        (Some(fix_csv), None) => {
            let mov_csv = args.landmarks_moving.as_ref().ok_or_else(|| {
                CmdError::Data("--landmarks-moving is required with --landmarks-fixed".into())
            })?;
            (
                io::read_landmarks_csv(fix_csv)?,
                io::read_landmarks_csv(mov_csv)?,
            )
        }
        (None, Some(fix_act)) => {
            let mov_act = args.activations_moving.as_ref().ok_or_else(|| {
                CmdError::Data("--activations-moving is required with --activations-fixed".into())
            })?;
            let extract = |path: &PathBuf| -> Result<_, CmdError> {
                let stack = io::read_activations(path)?;
                let com = center_of_mass(&stack);
                if com.has_degenerate_channels() {
                    eprintln!(
                        "warning: {} has {} degenerate channel(s); their landmarks default to the origin",
                        path.display(),
                        com.degenerate_channels().len()
                    );
                }
                com.landmark_set()
                    .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))
            };
            (extract(fix_act)?, extract(mov_act)?)
        }
        _ => {
            return Err(CmdError::Data(
                "provide either --landmarks-fixed/--landmarks-moving or \
                 --activations-fixed/--activations-moving"
                    .into(),
            ))
        }
    };

    if lm_fix.len() != lm_mov.len() {
        return Err(CmdError::Data(format!(
            "landmark counts differ: {} fixed vs {} moving",
            lm_fix.len(),
            lm_mov.len()
        )));
    }

    let (_, registered, report) = register_frame(
        &template,
        &moving,
        &lm_fix,
        &lm_mov,
        args.model.into(),
        args.lambda,
        args.kernel.into(),
    )?;

    io::write_image(&args.out_image, &registered)?;
    io::write_report_json(&args.out_report, &report)?;
    println!(
        "registered {} -> {} ({}): mse {:.3e} -> {:.3e} in {:.2} ms",
        args.moving.display(),
        args.out_image.display(),
        report.model,
        report.mse_before,
        report.mse_after,
        report.runtime_ms
    );
    Ok(())
}

fn cmd_metrics(mask_a: &PathBuf, mask_b: &PathBuf, out: &PathBuf) -> Result<(), CmdError> {
    let a = io::read_label_masks(mask_a)?;
    let b = io::read_label_masks(mask_b)?;
    let stem = mask_a
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "pair".into());

    let mut rows = Vec::new();
    for la in &a {
        let Some(lb) = b.iter().find(|m| m.label == la.label) else {
            continue;
        };
        let start = std::time::Instant::now();
        let d = dice(&la.mask, &lb.mask).map_err(|e| CmdError::Data(e.to_string()))?;
        let hd = hausdorff_mm(&la.mask, &lb.mask).map_err(|e| CmdError::Data(e.to_string()))?;
        rows.push((
            MetricSample {
                frame_id: stem.clone(),
                organ_label: la.label.clone(),
                dice: d,
                hausdorff_mm: hd,
            },
            "masks".to_string(),
            start.elapsed().as_secs_f64() * 1e3,
        ));
    }
    if rows.is_empty() {
        return Err(CmdError::Data(
            "the two label maps share no labels".into(),
        ));
    }
    io::write_metrics_csv(out, &rows)?;
    for (sample, _, _) in &rows {
        println!(
            "{}: dice {:.4}, hausdorff {:.3} mm",
            sample.organ_label, sample.dice, sample.hausdorff_mm
        );
    }
    Ok(())
}
