//! `egohand` command line: fuse, smooth, ensemble, evaluate, simulate, and
//! camera-preprocessing utilities over line-delimited prediction streams.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 malformed data, 5 numeric
//! failure.

mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "egohand",
    version,
    about = "Egocentric hand-pose post-processing pipeline"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
struct SmoothingArgs {
    /// Savitzky-Golay window length (odd)
    #[arg(long, default_value_t = 9)]
    window: usize,
    /// Savitzky-Golay polynomial order
    #[arg(long, default_value_t = 2)]
    order: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Lift 2.5D records, transform to world, merge views per frame and
    /// smooth each video; writes the fused stream and a decision log
    Fuse {
        /// Prediction stream (JSONL)
        #[arg(long)]
        pred: PathBuf,
        /// Camera file (JSON)
        #[arg(long)]
        cameras: PathBuf,
        /// Output stream path
        #[arg(long)]
        out: PathBuf,
        /// Decision log path (default: <out>.decisions.json)
        #[arg(long)]
        decisions: Option<PathBuf>,
        /// Pair-MPJPE merge threshold, millimeters
        #[arg(long, default_value_t = 30.0)]
        threshold: f64,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        /// Skip the smoothing pass
        #[arg(long)]
        no_smooth: bool,
    },
    /// Smooth every (video, view, model) series of a stream
    Smooth {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        smoothing: SmoothingArgs,
    },
    /// Ensemble fused runs: primary runs averaged, then an optional
    /// secondary-architecture run folded in with the configured weights
    Ensemble {
        /// Primary run streams
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Secondary-architecture run stream
        #[arg(long)]
        secondary: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Primary and secondary weights (must sum to 1)
        #[arg(long, num_args = 2, default_values_t = [0.7, 0.3])]
        weights: Vec<f64>,
        /// Disagreement threshold that switches to 0.5/0.5 weights, millimeters
        #[arg(long, default_value_t = 20.0)]
        gap: f64,
    },
    /// Compare a prediction stream against ground truth
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Also report Procrustes-aligned error
        #[arg(long)]
        pa: bool,
        /// Write the machine-readable report here
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a synthetic scenario: ground truth, cameras and corrupted
    /// per-view predictions in the pipeline file formats
    Simulate {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        views: usize,
        #[arg(long, default_value_t = 300)]
        frames: usize,
        /// Per-joint Gaussian noise, millimeters
        #[arg(long, default_value_t = 5.0)]
        sigma: f64,
        /// Occluded-view outlier probability
        #[arg(long, default_value_t = 0.1)]
        outlier_prob: f64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the virtual rotation R and pixel homography H for a hand bbox
    Warp {
        /// Camera file (JSON)
        #[arg(long)]
        camera: PathBuf,
        /// View id (defaults to the only camera in the file)
        #[arg(long)]
        view: Option<String>,
        /// Bounding box as cx,cy,w,h in pixels
        #[arg(long)]
        bbox: String,
    },
    /// Build an undistortion map from a fisheye source camera to a pinhole
    /// destination camera and write it in the binary map format
    RectifyMap {
        /// Source camera file (fisheye)
        #[arg(long)]
        src: PathBuf,
        /// Destination camera file (pinhole geometry)
        #[arg(long)]
        dst: PathBuf,
        #[arg(long)]
        src_view: Option<String>,
        #[arg(long)]
        dst_view: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::Fuse {
            pred,
            cameras,
            out,
            decisions,
            threshold,
            smoothing,
            no_smooth,
        } => run::fuse(
            &pred,
            &cameras,
            &out,
            decisions.as_deref(),
            threshold,
            &smoothing_params(&smoothing),
            no_smooth,
        ),
        Command::Smooth {
            pred,
            out,
            smoothing,
        } => run::smooth(&pred, &out, &smoothing_params(&smoothing)),
        Command::Ensemble {
            runs,
            secondary,
            out,
            weights,
            gap,
        } => run::ensemble(
            &runs,
            secondary.as_deref(),
            &out,
            (weights[0], weights[1]),
            gap,
        ),
        Command::Metrics {
            pred,
            gt,
            pa,
            report,
        } => run::metrics(&pred, &gt, pa, report.as_deref()),
        Command::Simulate {
            seed,
            views,
            frames,
            sigma,
            outlier_prob,
            out,
        } => run::simulate(seed, views, frames, sigma, outlier_prob, &out),
        Command::Warp { camera, view, bbox } => run::warp(&camera, view.as_deref(), &bbox),
        Command::RectifyMap {
            src,
            dst,
            src_view,
            dst_view,
            out,
        } => run::rectify_map(&src, &dst, src_view.as_deref(), dst_view.as_deref(), &out),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn smoothing_params(args: &SmoothingArgs) -> egohand_core::SavGolParams {
    egohand_core::SavGolParams {
        window: args.window,
        polyorder: args.order,
    }
}
