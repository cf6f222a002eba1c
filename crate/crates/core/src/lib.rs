//! Non-neural pipeline of an egocentric 3D hand-pose system: camera
//! preprocessing (fisheye undistortion, virtual-rotation warp, crop
//! policy), 2.5D-to-3D lifting, multi-view merge with temporal fallback,
//! Savitzky-Golay smoothing, model ensembling, MPJPE/PA-MPJPE metrics, and
//! a deterministic synthetic benchmark that exercises all of it end to end.

pub mod camera;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod lift;
pub mod metrics;
pub mod preprocess;
pub mod sim;
pub mod smoothing;

pub use camera::CameraModel;
pub use error::{Error, Result};
pub use fusion::{
    branch_histogram, ensemble_frame, ensemble_sequences, merge_frame, merge_sequence,
    FusionConfig, MergeBranch, MergeDecision, SelectedViews,
};
pub use geometry::{
    project, rotation_between, to_camera, to_world, unproject, Extrinsics, Frame, Intrinsics, Mat3,
    Pixel, Skeleton, Vec3,
};
pub use lift::{decompose, lift, Prediction25D};
pub use metrics::{
    mpjpe, pa_mpjpe, sequence_metrics, umeyama_align, umeyama_align_with, MetricReport,
    SimilarityTransform,
};
pub use preprocess::{
    build_rectify_map, crop_scale_for_video, enlarge_bbox, fisheye_distort, fisheye_undistort,
    remap_bilinear, virtual_rotation_warp, BBox, CropPolicy, FisheyeDistortion, Image, RectifyMap,
    VideoStats,
};
pub use sim::{
    corrupt, generate_rig, generate_trajectory, run_benchmark, BenchmarkReport, NoiseModel,
    SimScenario,
};
pub use smoothing::{savgol_coeffs, smooth_series, smooth_skeleton_sequence, SavGolParams};
