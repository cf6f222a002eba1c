//! Deterministic synthetic benchmark: ground-truth hand trajectories, a
//! multi-camera rig and corrupted per-view predictions, so the fusion
//! pipeline's error reduction is testable without trained models.
//!
//! Everything is a pure function of the scenario and its seed; see [`rng`]
//! for the counter-based generator that makes outputs reproducible.

pub mod rng;

use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::fusion::{
    branch_histogram, ensemble_sequences, merge_sequence, FusionConfig, MergeDecision,
};
use crate::geometry::{
    project, to_camera, to_world, Extrinsics, Frame, Intrinsics, Mat3, Skeleton, Vec3,
};
use crate::metrics::sequence_metrics;
use crate::preprocess::FisheyeDistortion;
use crate::smoothing::{smooth_skeleton_sequence, SavGolParams};
use rng::CounterRng;

// stream-id words; first key word of every draw

const STREAM_TRAJ: u64 = 1;
const STREAM_GAUSS: u64 = 2;
const STREAM_OUTLIER: u64 = 3;

/// Prediction corruption model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Per-joint, per-axis Gaussian noise, millimeters.
    pub gaussian_sigma_mm: f64,
    /// Probability that a (view, frame) is an occlusion outlier.
    pub outlier_prob: f64,
    /// Magnitude range of the whole-hand rigid outlier offset, millimeters.
    pub outlier_range_mm: (f64, f64),
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            gaussian_sigma_mm: 5.0,
            outlier_prob: 0.1,
            outlier_range_mm: (30.0, 80.0),
            seed: 42,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if self.gaussian_sigma_mm < 0.0 {
            return Err(Error::InvalidParams("sigma must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.outlier_prob) {
            return Err(Error::InvalidParams(
                "outlier probability must be in [0, 1]".into(),
            ));
        }
        if self.outlier_range_mm.0 > self.outlier_range_mm.1 {
            return Err(Error::InvalidParams("outlier range min > max".into()));
        }
        Ok(())
    }
}

/// Full synthetic scenario: rig geometry, trajectory shape and noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub n_views: usize,
    pub n_frames: usize,
    pub joints: usize,
    /// Camera arc radius around the hand volume, millimeters.
    pub rig_radius_mm: f64,
    /// Angular span of the camera arc, radians.
    pub rig_arc_rad: f64,
    /// Camera height above the hand volume centre, millimeters.
    pub rig_height_mm: f64,
    /// Root path amplitude per axis, millimeters.
    pub root_amplitude_mm: [f64; 3],
    /// Hard bound on per-frame joint displacement, millimeters.
    pub max_step_mm: f64,
    pub noise: NoiseModel,
}

impl Default for SimScenario {
    fn default() -> Self {
        SimScenario {
            n_views: 4,
            n_frames: 300,
            joints: 21,
            rig_radius_mm: 800.0,
            rig_arc_rad: 1.75,
            rig_height_mm: 250.0,
            root_amplitude_mm: [60.0, 45.0, 40.0],
            max_step_mm: 25.0,
            noise: NoiseModel::default(),
        }
    }
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        if self.n_views < 1 || self.n_frames < 1 {
            return Err(Error::InvalidParams(
                "need at least one view and one frame".into(),
            ));
        }
        if self.joints != 21 {
            return Err(Error::InvalidParams(
                "the trajectory template is defined for 21 joints".into(),
            ));
        }
        self.noise.validate()
    }

    pub fn view_id(&self, v: usize) -> String {
        format!("v{v}")
    }
}

// Hand template: wrist + 5 four-joint finger chains, sizes in millimeters.
// Joint order: 0 = wrist, then per finger MCP, PIP, DIP, TIP.
const FINGER_SPLAY_DEG: [f64; 5] = [50.0, 20.0, 0.0, -18.0, -35.0];
const FINGER_BASE_MM: [f64; 5] = [35.0, 85.0, 90.0, 85.0, 75.0];
const FINGER_SEGMENTS_MM: [[f64; 3]; 5] = [
    [45.0, 32.0, 25.0],
    [45.0, 25.0, 22.0],
    [48.0, 28.0, 24.0],
    [44.0, 26.0, 23.0],
    [35.0, 20.0, 20.0],
];
// Centers the template so the rig can aim at the origin.
const TEMPLATE_OFFSET_MM: Vec3 = Vec3 {
    x: 0.0,
    y: 60.0,
    z: 0.0,
};

/// Hand pose in the local frame for the given per-finger curl angles.
fn hand_local(curl: &[f64; 5]) -> Vec<Vec3> {
    let mut joints = Vec::with_capacity(21);
    let wrist = Vec3::ZERO - TEMPLATE_OFFSET_MM;
    joints.push(wrist);
    for f in 0..5 {
        let splay = FINGER_SPLAY_DEG[f].to_radians();
        // finger direction in the palm plane, lateral curl axis orthogonal to it
        let dir = Vec3::new(splay.sin(), splay.cos(), 0.0);
        let lateral = Vec3::new(0.0, 0.0, 1.0).cross(dir);
        let mut pos = wrist + dir.scale(FINGER_BASE_MM[f]);
        joints.push(pos);
        let mut bend = 0.0;
        for (seg, &len) in FINGER_SEGMENTS_MM[f].iter().enumerate() {
            bend += curl[f] * (1.0 + 0.5 * seg as f64);
            let seg_dir = rotate_about(dir, lateral, bend);
            pos = pos + seg_dir.scale(len);
            joints.push(pos);
        }
    }
    joints
}

fn rotate_about(v: Vec3, axis: Vec3, angle: f64) -> Vec3 {
    // Rodrigues on a unit axis
    let (s, c) = angle.sin_cos();
    v.scale(c) + axis.cross(v).scale(s) + axis.scale(axis.dot(v) * (1.0 - c))
}

fn rotation_xyz(roll: f64, pitch: f64, yaw: f64) -> Mat3 {
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    let rx = Mat3::from_rows([1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]);
    let ry = Mat3::from_rows([cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]);
    let rz = Mat3::from_rows([cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]);
    rz.mul_mat(ry).mul_mat(rx)
}

/// Ground-truth world-frame trajectory: rigid bone-length template, smooth
/// sinusoidal root path and slow global rotation, smooth finger curl. Fully
/// deterministic in the scenario seed.
pub fn generate_trajectory(scenario: &SimScenario) -> Result<Vec<Skeleton>> {
    scenario.validate()?;
    let rng = CounterRng::new(scenario.noise.seed);
    // band-limited motion: two harmonics per axis, seeded phases/frequencies
    const TAU: f64 = std::f64::consts::TAU;
    let draw = |slot: u64, lo: f64, hi: f64| rng.uniform_in(&[STREAM_TRAJ, slot], lo, hi);
    let root_omega = [
        draw(0, 0.010, 0.030),
        draw(1, 0.010, 0.030),
        draw(2, 0.010, 0.030),
    ];
    let root_omega2 = [
        draw(3, 0.030, 0.060),
        draw(4, 0.030, 0.060),
        draw(5, 0.030, 0.060),
    ];
    let root_phase = [draw(6, 0.0, TAU), draw(7, 0.0, TAU), draw(8, 0.0, TAU)];
    let rot_omega = [
        draw(9, 0.004, 0.010),
        draw(10, 0.004, 0.010),
        draw(11, 0.004, 0.010),
    ];
    let rot_phase = [draw(12, 0.0, TAU), draw(13, 0.0, TAU), draw(14, 0.0, TAU)];
    let curl_omega: Vec<f64> = (0..5).map(|f| draw(20 + f, 0.015, 0.040)).collect();
    let curl_phase: Vec<f64> = (0..5).map(|f| draw(30 + f, 0.0, TAU)).collect();

    let amp = scenario.root_amplitude_mm;
    let mut out = Vec::with_capacity(scenario.n_frames);
    for frame in 0..scenario.n_frames {
        let t = frame as f64;
        let root = Vec3::new(
            amp[0]
                * (0.7 * (root_omega[0] * t + root_phase[0]).sin()
                    + 0.3 * (root_omega2[0] * t).sin()),
            amp[1]
                * (0.7 * (root_omega[1] * t + root_phase[1]).sin()
                    + 0.3 * (root_omega2[1] * t).sin()),
            amp[2]
                * (0.7 * (root_omega[2] * t + root_phase[2]).sin()
                    + 0.3 * (root_omega2[2] * t).sin()),
        );
        let r = rotation_xyz(
            0.25 * (rot_omega[0] * t + rot_phase[0]).sin(),
            0.25 * (rot_omega[1] * t + rot_phase[1]).sin(),
            0.25 * (rot_omega[2] * t + rot_phase[2]).sin(),
        );
        let mut curl = [0.0; 5];
        for f in 0..5 {
            curl[f] = 0.30 + 0.22 * (curl_omega[f] * t + curl_phase[f]).sin();
        }
        let joints = hand_local(&curl)
            .into_iter()
            .map(|p| r.mul_vec(p) + root)
            .collect();
        out.push(Skeleton::new(joints, Frame::World)?);
    }
    Ok(out)
}

/// Cameras on an arc facing the trajectory volume. Fails with
/// [`Error::InfeasibleRig`] if any ground-truth joint would project behind a
/// camera or outside its image.
pub fn generate_rig(scenario: &SimScenario) -> Result<Vec<CameraModel>> {
    scenario.validate()?;
    let intr = Intrinsics::new(420.0, 420.0, 319.5, 239.5, 640, 480)?;
    let n = scenario.n_views;
    let mut cams = Vec::with_capacity(n);
    for v in 0..n {
        let beta = if n == 1 {
            0.0
        } else {
            (v as f64 / (n - 1) as f64 - 0.5) * scenario.rig_arc_rad
        };
        let pos = Vec3::new(
            scenario.rig_radius_mm * beta.sin(),
            scenario.rig_height_mm,
            scenario.rig_radius_mm * beta.cos(),
        );
        let ext = look_at(pos, Vec3::ZERO)?;
        cams.push(CameraModel {
            view_id: scenario.view_id(v),
            intrinsics: intr,
            distortion: FisheyeDistortion::default(),
            extrinsics: ext,
        });
    }

    let gt = generate_trajectory(scenario)?;
    for cam in &cams {
        for (f, s) in gt.iter().enumerate() {
            let in_cam = to_camera(s, &cam.extrinsics, &cam.view_id)?;
            for (j, &p) in in_cam.joints().iter().enumerate() {
                if p.z <= 0.0 {
                    return Err(Error::InfeasibleRig(format!(
                        "joint {j} of frame {f} behind camera {}",
                        cam.view_id
                    )));
                }
                let px = project(p, &cam.intrinsics)?;
                if !cam.intrinsics.contains(px) {
                    return Err(Error::InfeasibleRig(format!(
                        "joint {j} of frame {f} outside image of camera {}",
                        cam.view_id
                    )));
                }
            }
        }
    }
    Ok(cams)
}

/// World-to-camera extrinsics for a camera at `pos` looking at `target`.
fn look_at(pos: Vec3, target: Vec3) -> Result<Extrinsics> {
    let z = (target - pos).normalized();
    let up = Vec3::new(0.0, 1.0, 0.0);
    let x = up.cross(z).normalized();
    let y = z.cross(x);
    let r = Mat3::from_rows([x.x, x.y, x.z], [y.x, y.y, y.z], [z.x, z.y, z.z]);
    let t = -r.mul_vec(pos);
    Extrinsics::new(r, t)
}

/// Corrupts the ground truth into per-view camera-frame predictions:
/// i.i.d. Gaussian noise on every joint, plus an occluded-view outlier that
/// rigidly displaces the whole hand with the configured probability.
/// Returned as `[view][frame]`.
pub fn corrupt(
    gt: &[Skeleton],
    rig: &[CameraModel],
    noise: &NoiseModel,
) -> Result<Vec<Vec<Skeleton>>> {
    noise.validate()?;
    let rng = CounterRng::new(noise.seed);
    let mut out = Vec::with_capacity(rig.len());
    for (v, cam) in rig.iter().enumerate() {
        let v64 = v as u64;
        let mut frames = Vec::with_capacity(gt.len());
        for (f, s) in gt.iter().enumerate() {
            let f64_id = f as u64;
            let cam_s = to_camera(s, &cam.extrinsics, &cam.view_id)?;
            let outlier = rng.uniform(&[STREAM_OUTLIER, v64, f64_id, 0]) < noise.outlier_prob;
            let offset = if outlier {
                let zc = rng.uniform_in(&[STREAM_OUTLIER, v64, f64_id, 1], -1.0, 1.0);
                let phi = rng.uniform_in(
                    &[STREAM_OUTLIER, v64, f64_id, 2],
                    0.0,
                    std::f64::consts::TAU,
                );
                let mag = rng.uniform_in(
                    &[STREAM_OUTLIER, v64, f64_id, 3],
                    noise.outlier_range_mm.0,
                    noise.outlier_range_mm.1,
                );
                let r = (1.0 - zc * zc).max(0.0).sqrt();
                Vec3::new(r * phi.cos(), r * phi.sin(), zc).scale(mag)
            } else {
                Vec3::ZERO
            };
            let joints = cam_s
                .joints()
                .iter()
                .enumerate()
                .map(|(j, &p)| {
                    let j64 = j as u64;
                    let g = Vec3::new(
                        rng.gaussian(&[STREAM_GAUSS, v64, f64_id, j64, 0]),
                        rng.gaussian(&[STREAM_GAUSS, v64, f64_id, j64, 1]),
                        rng.gaussian(&[STREAM_GAUSS, v64, f64_id, j64, 2]),
                    );
                    p + g.scale(noise.gaussian_sigma_mm) + offset
                })
                .collect();
            frames.push(Skeleton::new(joints, Frame::Camera(cam.view_id.clone()))?);
        }
        out.push(frames);
    }
    Ok(out)
}

/// One ablation row of the benchmark report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub id: usize,
    pub method: String,
    pub mpjpe_mm: f64,
}

/// Table-shaped ablation report over the synthetic scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scenario: SimScenario,
    pub fusion: FusionConfig,
    pub smoothing: SavGolParams,
    pub per_view_mpjpe_mm: Vec<(String, f64)>,
    pub rows: Vec<BenchRow>,
    pub branch_histogram: Vec<(String, usize)>,
}

impl BenchmarkReport {
    /// Human-readable table, config header first so runs are self-describing.
    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario: views={} frames={} sigma={}mm outlier_prob={} outlier_range={:?}mm seed={}",
            self.scenario.n_views,
            self.scenario.n_frames,
            self.scenario.noise.gaussian_sigma_mm,
            self.scenario.noise.outlier_prob,
            self.scenario.noise.outlier_range_mm,
            self.scenario.noise.seed,
        );
        let _ = writeln!(
            s,
            "config: merge_threshold={}mm window={} order={} weights={:?} gap_threshold={}mm gap_weights={:?}",
            self.fusion.merge_threshold_mm,
            self.smoothing.window,
            self.smoothing.polyorder,
            self.fusion.ensemble_weights,
            self.fusion.gap_threshold_mm,
            self.fusion.gap_weights,
        );
        for (view, err) in &self.per_view_mpjpe_mm {
            let _ = writeln!(s, "  single view {view}: {err:.3} mm");
        }
        let _ = writeln!(s, "{:<4}{:<42}MPJPE(mm)", "ID", "method");
        for row in &self.rows {
            let _ = writeln!(s, "{:<4}{:<42}{:.3}", row.id, row.method, row.mpjpe_mm);
        }
        let _ = writeln!(s, "merge branches:");
        for (branch, count) in &self.branch_histogram {
            let _ = writeln!(s, "  {branch}: {count}");
        }
        s
    }
}

/// Per-view world sequences of a corrupted run.
fn views_to_world(preds: &[Vec<Skeleton>], rig: &[CameraModel]) -> Result<Vec<Vec<Skeleton>>> {
    preds
        .iter()
        .zip(rig)
        .map(|(frames, cam)| {
            frames
                .iter()
                .map(|s| to_world(s, &cam.extrinsics))
                .collect()
        })
        .collect()
}

fn merge_and_smooth(
    world_views: &[Vec<Skeleton>],
    rig: &[CameraModel],
    n_frames: usize,
    cfg: &FusionConfig,
    savgol: &SavGolParams,
) -> Result<(Vec<Skeleton>, Vec<Skeleton>, Vec<MergeDecision>)> {
    let frames: Vec<(u64, Vec<(String, Skeleton)>)> = (0..n_frames)
        .map(|f| {
            (
                f as u64,
                world_views
                    .iter()
                    .zip(rig)
                    .map(|(seq, cam)| (cam.view_id.clone(), seq[f].clone()))
                    .collect(),
            )
        })
        .collect();
    let (merged, decisions) = merge_sequence(&frames, cfg)?;
    let smoothed = smooth_skeleton_sequence(&merged, savgol)?;
    Ok((merged, smoothed, decisions))
}

/// Runs the full ablation: per-view error, merged, merged+smoothed, and the
/// two-run ensemble (second run re-corrupted with seed+1).
pub fn run_benchmark(
    scenario: &SimScenario,
    cfg: &FusionConfig,
    savgol: &SavGolParams,
) -> Result<BenchmarkReport> {
    scenario.validate()?;
    cfg.validate()?;
    savgol.validate()?;
    let gt = generate_trajectory(scenario)?;
    let rig = generate_rig(scenario)?;

    let preds = corrupt(&gt, &rig, &scenario.noise)?;
    let world_views = views_to_world(&preds, &rig)?;
    let mut per_view = Vec::with_capacity(rig.len());
    for (cam, seq) in rig.iter().zip(&world_views) {
        per_view.push((cam.view_id.clone(), sequence_metrics(seq, &gt)?.mpjpe));
    }
    let mean_single = per_view.iter().map(|(_, e)| e).sum::<f64>() / per_view.len() as f64;

    let (merged, smoothed, decisions) =
        merge_and_smooth(&world_views, &rig, scenario.n_frames, cfg, savgol)?;
    let merged_mpjpe = sequence_metrics(&merged, &gt)?.mpjpe;
    let smoothed_mpjpe = sequence_metrics(&smoothed, &gt)?.mpjpe;

    // independent second run: same scenario, fresh corruption seed
    let noise2 = NoiseModel {
        seed: scenario.noise.seed.wrapping_add(1),
        ..scenario.noise
    };
    let preds2 = corrupt(&gt, &rig, &noise2)?;
    let world2 = views_to_world(&preds2, &rig)?;
    let (_, smoothed2, _) = merge_and_smooth(&world2, &rig, scenario.n_frames, cfg, savgol)?;
    let ensembled = ensemble_sequences(&[smoothed.clone(), smoothed2], None, cfg)?;
    let ensembled_mpjpe = sequence_metrics(&ensembled, &gt)?.mpjpe;

    let rows = vec![
        BenchRow {
            id: 1,
            method: "single-view mean".into(),
            mpjpe_mm: mean_single,
        },
        BenchRow {
            id: 2,
            method: "multi-view merge".into(),
            mpjpe_mm: merged_mpjpe,
        },
        BenchRow {
            id: 3,
            method: "merge + smooth".into(),
            mpjpe_mm: smoothed_mpjpe,
        },
        BenchRow {
            id: 4,
            method: "merge + smooth + two-run ensemble".into(),
            mpjpe_mm: ensembled_mpjpe,
        },
    ];
    Ok(BenchmarkReport {
        scenario: scenario.clone(),
        fusion: *cfg,
        smoothing: *savgol,
        per_view_mpjpe_mm: per_view,
        rows,
        branch_histogram: branch_histogram(&decisions),
    })
}
