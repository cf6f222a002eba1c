//! Command implementations. Grouping is deterministic (sorted keys) so
//! every pipeline composition matches the corresponding library call chain
//! bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use egohand_core::io::{
    read_camera_file, read_prediction_stream, write_camera_file, write_prediction_stream,
    PredictionRecord,
};
use egohand_core::{
    branch_histogram, build_rectify_map, corrupt, ensemble_sequences, generate_rig,
    generate_trajectory, merge_sequence, sequence_metrics, smooth_skeleton_sequence, to_world,
    virtual_rotation_warp, BBox, CameraModel, Error, Frame, FusionConfig, MergeDecision,
    MetricReport, NoiseModel, Pixel, Result, SavGolParams, SimScenario, Skeleton,
};

type ViewFrames = BTreeMap<u64, Vec<(String, Skeleton)>>;

/// Groups a stream into per-(video, model) frame lists of world skeletons,
/// lifting 2.5D records and applying extrinsics where needed.
fn group_world_frames(
    records: &[PredictionRecord],
    cameras: &BTreeMap<String, CameraModel>,
) -> Result<BTreeMap<(String, String), ViewFrames>> {
    let mut grouped: BTreeMap<(String, String), ViewFrames> = BTreeMap::new();
    for rec in records {
        let cam = cameras.get(&rec.view_id);
        let skeleton = rec.skeleton(cam)?;
        let world = match skeleton.frame() {
            Frame::World => skeleton,
            Frame::Camera(_) => {
                let cam = cam.ok_or_else(|| Error::InvariantViolation {
                    key: rec.key(),
                    message: format!("no camera entry for view {}", rec.view_id),
                })?;
                to_world(&skeleton, &cam.extrinsics)?
            }
        };
        grouped
            .entry((rec.video_id.clone(), rec.model_id.clone()))
            .or_default()
            .entry(rec.frame_id)
            .or_default()
            .push((rec.view_id.clone(), world));
    }
    Ok(grouped)
}

/// Groups a fused stream into one skeleton sequence per video; rejects
/// streams that still carry several records per frame.
fn group_single_sequences(
    records: &[PredictionRecord],
) -> Result<BTreeMap<String, Vec<(u64, Skeleton)>>> {
    let mut grouped: BTreeMap<String, BTreeMap<u64, (String, Skeleton)>> = BTreeMap::new();
    for rec in records {
        let skeleton = rec.skeleton(None)?;
        let frames = grouped.entry(rec.video_id.clone()).or_default();
        if frames.insert(rec.frame_id, (rec.key(), skeleton)).is_some() {
            return Err(Error::InvariantViolation {
                key: rec.key(),
                message: "several records per frame; fuse or select a single view first".into(),
            });
        }
    }
    Ok(grouped
        .into_iter()
        .map(|(video, frames)| {
            (
                video,
                frames.into_iter().map(|(f, (_, s))| (f, s)).collect(),
            )
        })
        .collect())
}

fn camera_index(path: &Path) -> Result<BTreeMap<String, CameraModel>> {
    Ok(read_camera_file(path)?
        .into_iter()
        .map(|c| (c.view_id.clone(), c))
        .collect())
}

#[derive(Serialize)]
struct DecisionLog<'a> {
    config: DecisionConfig,
    videos: Vec<VideoDecisions<'a>>,
}

#[derive(Serialize)]
struct DecisionConfig {
    merge_threshold_mm: f64,
    ensemble_weights: (f64, f64),
    gap_threshold_mm: f64,
    gap_weights: (f64, f64),
    window: usize,
    order: usize,
    smoothed: bool,
}

#[derive(Serialize)]
struct VideoDecisions<'a> {
    video_id: &'a str,
    model_id: &'a str,
    branch_histogram: Vec<(String, usize)>,
    decisions: &'a [MergeDecision],
}

pub fn fuse(
    pred: &Path,
    cameras: &Path,
    out: &Path,
    decisions_path: Option<&Path>,
    threshold: f64,
    savgol: &SavGolParams,
    no_smooth: bool,
) -> Result<()> {
    let cfg = FusionConfig {
        merge_threshold_mm: threshold,
        ..FusionConfig::default()
    };
    cfg.validate()?;
    savgol.validate()?;
    let cams = camera_index(cameras)?;
    let records = read_prediction_stream(pred)?;
    let grouped = group_world_frames(&records, &cams)?;

    let mut out_records = Vec::new();
    let mut all_decisions: Vec<((String, String), Vec<MergeDecision>)> = Vec::new();
    for ((video_id, model_id), frames) in grouped {
        let frame_list: Vec<(u64, Vec<(String, Skeleton)>)> = frames.into_iter().collect();
        let (merged, decisions) = merge_sequence(&frame_list, &cfg)?;
        let final_seq = if no_smooth {
            merged
        } else {
            smooth_skeleton_sequence(&merged, savgol)?
        };
        for ((frame_id, _), s) in frame_list.iter().zip(&final_seq) {
            out_records.push(PredictionRecord::from_skeleton(
                &video_id, *frame_id, "merged", &model_id, s,
            ));
        }
        all_decisions.push(((video_id, model_id), decisions));
    }
    write_prediction_stream(out, &out_records)?;

    let log = DecisionLog {
        config: DecisionConfig {
            merge_threshold_mm: cfg.merge_threshold_mm,
            ensemble_weights: cfg.ensemble_weights,
            gap_threshold_mm: cfg.gap_threshold_mm,
            gap_weights: cfg.gap_weights,
            window: savgol.window,
            order: savgol.polyorder,
            smoothed: !no_smooth,
        },
        videos: all_decisions
            .iter()
            .map(|((v, m), d)| VideoDecisions {
                video_id: v,
                model_id: m,
                branch_histogram: branch_histogram(d),
                decisions: d,
            })
            .collect(),
    };
    let default_path = out.with_extension("decisions.json");
    let decisions_path = decisions_path.unwrap_or(&default_path);
    std::fs::write(
        decisions_path,
        serde_json::to_string_pretty(&log).map_err(|e| Error::InvalidParams(e.to_string()))?,
    )?;
    println!(
        "fused {} records into {} frames (threshold {} mm, window {}, order {}, smooth {})",
        records.len(),
        out_records.len(),
        cfg.merge_threshold_mm,
        savgol.window,
        savgol.polyorder,
        !no_smooth,
    );
    Ok(())
}

pub fn smooth(pred: &Path, out: &Path, savgol: &SavGolParams) -> Result<()> {
    savgol.validate()?;
    let records = read_prediction_stream(pred)?;
    // independent series per (video, view, model)
    let mut grouped: BTreeMap<(String, String, String), Vec<(u64, usize)>> = BTreeMap::new();
    for (idx, rec) in records.iter().enumerate() {
        grouped
            .entry((
                rec.video_id.clone(),
                rec.view_id.clone(),
                rec.model_id.clone(),
            ))
            .or_default()
            .push((rec.frame_id, idx));
    }
    let mut out_records = Vec::new();
    for ((video_id, view_id, model_id), mut frames) in grouped {
        frames.sort_by_key(|&(f, _)| f);
        let seq: Vec<Skeleton> = frames
            .iter()
            .map(|&(_, idx)| records[idx].skeleton(None))
            .collect::<Result<_>>()?;
        let smoothed = smooth_skeleton_sequence(&seq, savgol)?;
        for (&(frame_id, _), s) in frames.iter().zip(&smoothed) {
            out_records.push(PredictionRecord::from_skeleton(
                &video_id, frame_id, &view_id, &model_id, s,
            ));
        }
    }
    write_prediction_stream(out, &out_records)?;
    println!(
        "smoothed {} records (window {}, order {})",
        out_records.len(),
        savgol.window,
        savgol.polyorder
    );
    Ok(())
}

pub fn ensemble(
    runs: &[std::path::PathBuf],
    secondary: Option<&Path>,
    out: &Path,
    weights: (f64, f64),
    gap: f64,
) -> Result<()> {
    let cfg = FusionConfig {
        ensemble_weights: weights,
        gap_threshold_mm: gap,
        ..FusionConfig::default()
    };
    cfg.validate()?;
    let mut run_seqs: Vec<BTreeMap<String, Vec<(u64, Skeleton)>>> = Vec::new();
    for path in runs {
        run_seqs.push(group_single_sequences(&read_prediction_stream(path)?)?);
    }
    let secondary_seqs = match secondary {
        Some(path) => Some(group_single_sequences(&read_prediction_stream(path)?)?),
        None => None,
    };

    // all runs must cover the same videos with the same frame ids
    let reference = run_seqs[0].clone();
    let first_records = read_prediction_stream(&runs[0])?;
    let mut out_records = Vec::new();
    for (video_id, ref_frames) in &reference {
        let frame_ids: Vec<u64> = ref_frames.iter().map(|&(f, _)| f).collect();
        let mut primaries: Vec<Vec<Skeleton>> = Vec::with_capacity(run_seqs.len());
        for (run_idx, run) in run_seqs.iter().enumerate() {
            let seq = run.get(video_id).ok_or_else(|| Error::InvariantViolation {
                key: video_id.clone(),
                message: format!("video missing from run {}", runs[run_idx].display()),
            })?;
            check_frames_align(video_id, &frame_ids, seq)?;
            primaries.push(seq.iter().map(|(_, s)| s.clone()).collect());
        }
        let secondary_seq: Option<Vec<Skeleton>> = match &secondary_seqs {
            Some(map) => {
                let seq = map.get(video_id).ok_or_else(|| Error::InvariantViolation {
                    key: video_id.clone(),
                    message: "video missing from the secondary run".into(),
                })?;
                check_frames_align(video_id, &frame_ids, seq)?;
                Some(seq.iter().map(|(_, s)| s.clone()).collect())
            }
            None => None,
        };
        let fused = ensemble_sequences(&primaries, secondary_seq.as_deref(), &cfg)?;
        let view_id = first_records
            .iter()
            .find(|r| &r.video_id == video_id)
            .map(|r| r.view_id.clone())
            .unwrap_or_else(|| "merged".into());
        for (&frame_id, s) in frame_ids.iter().zip(&fused) {
            out_records.push(PredictionRecord::from_skeleton(
                video_id, frame_id, &view_id, "ensemble", s,
            ));
        }
    }
    write_prediction_stream(out, &out_records)?;
    println!(
        "ensembled {} primary run(s){} (weights {:?}, gap {} mm)",
        runs.len(),
        if secondary.is_some() {
            " + secondary"
        } else {
            ""
        },
        weights,
        gap
    );
    Ok(())
}

fn check_frames_align(video: &str, expect: &[u64], seq: &[(u64, Skeleton)]) -> Result<()> {
    if seq.len() != expect.len() || seq.iter().map(|&(f, _)| f).ne(expect.iter().copied()) {
        return Err(Error::InvariantViolation {
            key: video.to_string(),
            message: "frame ids differ between runs".into(),
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricsDocument {
    pa: bool,
    videos: BTreeMap<String, MetricReport>,
    total_frames: usize,
    overall_mpjpe_mm: f64,
    overall_pa_mpjpe_mm: f64,
}

pub fn metrics(pred: &Path, gt: &Path, pa: bool, report_path: Option<&Path>) -> Result<()> {
    let pred_seqs = group_single_sequences(&read_prediction_stream(pred)?)?;
    let gt_seqs = group_single_sequences(&read_prediction_stream(gt)?)?;

    let mut videos = BTreeMap::new();
    let mut frame_sum = 0.0;
    let mut frame_pa_sum = 0.0;
    let mut total_frames = 0usize;
    for (video_id, pred_frames) in &pred_seqs {
        let gt_frames = gt_seqs
            .get(video_id)
            .ok_or_else(|| Error::InvariantViolation {
                key: video_id.clone(),
                message: "video missing from ground truth".into(),
            })?;
        if pred_frames.len() != gt_frames.len()
            || pred_frames
                .iter()
                .map(|&(f, _)| f)
                .ne(gt_frames.iter().map(|&(f, _)| f))
        {
            return Err(Error::LengthMismatch {
                left: pred_frames.len(),
                right: gt_frames.len(),
            });
        }
        let pred_seq: Vec<Skeleton> = pred_frames.iter().map(|(_, s)| s.clone()).collect();
        let gt_seq: Vec<Skeleton> = gt_frames.iter().map(|(_, s)| s.clone()).collect();
        let report = sequence_metrics(&pred_seq, &gt_seq)?;
        total_frames += report.per_frame.len();
        frame_sum += report.per_frame.iter().sum::<f64>();
        frame_pa_sum += report.pa_mpjpe * report.per_frame.len() as f64;
        videos.insert(video_id.clone(), report);
    }
    if videos.is_empty() {
        return Err(Error::InvalidParams(
            "no videos in the prediction stream".into(),
        ));
    }
    let overall = frame_sum / total_frames as f64;
    let overall_pa = frame_pa_sum / total_frames as f64;

    println!(
        "metrics over {} video(s), {} frames",
        videos.len(),
        total_frames
    );
    for (video_id, report) in &videos {
        if pa {
            println!(
                "  {video_id}: MPJPE {:.3} mm  PA-MPJPE {:.3} mm",
                report.mpjpe, report.pa_mpjpe
            );
        } else {
            println!("  {video_id}: MPJPE {:.3} mm", report.mpjpe);
        }
    }
    if pa {
        println!("overall: MPJPE {overall:.3} mm  PA-MPJPE {overall_pa:.3} mm");
    } else {
        println!("overall: MPJPE {overall:.3} mm");
    }

    if let Some(path) = report_path {
        let doc = MetricsDocument {
            pa,
            videos,
            total_frames,
            overall_mpjpe_mm: overall,
            overall_pa_mpjpe_mm: overall_pa,
        };
        std::fs::write(
            path,
            serde_json::to_string_pretty(&doc).map_err(|e| Error::InvalidParams(e.to_string()))?,
        )?;
    }
    Ok(())
}

pub fn simulate(
    seed: u64,
    views: usize,
    frames: usize,
    sigma: f64,
    outlier_prob: f64,
    out_dir: &Path,
) -> Result<()> {
    let scenario = SimScenario {
        n_views: views,
        n_frames: frames,
        noise: NoiseModel {
            gaussian_sigma_mm: sigma,
            outlier_prob,
            seed,
            ..NoiseModel::default()
        },
        ..SimScenario::default()
    };
    scenario.validate()?;
    let gt = generate_trajectory(&scenario)?;
    let rig = generate_rig(&scenario)?;
    let preds = corrupt(&gt, &rig, &scenario.noise)?;

    std::fs::create_dir_all(out_dir)?;
    write_camera_file(&out_dir.join("cameras.json"), &rig)?;

    let gt_records: Vec<PredictionRecord> = gt
        .iter()
        .enumerate()
        .map(|(f, s)| PredictionRecord::from_skeleton("sim", f as u64, "gt", "gt", s))
        .collect();
    write_prediction_stream(&out_dir.join("gt.jsonl"), &gt_records)?;

    let mut pred_records = Vec::new();
    for (v, cam) in rig.iter().enumerate() {
        for (f, s) in preds[v].iter().enumerate() {
            pred_records.push(PredictionRecord::from_skeleton(
                "sim",
                f as u64,
                &cam.view_id,
                "sim",
                s,
            ));
        }
    }
    write_prediction_stream(&out_dir.join("predictions.jsonl"), &pred_records)?;
    println!(
        "wrote {} ({} views x {} frames, sigma {} mm, outlier prob {}, seed {})",
        out_dir.display(),
        views,
        frames,
        sigma,
        outlier_prob,
        seed
    );
    Ok(())
}

fn pick_camera<'c>(
    cams: &'c [CameraModel],
    view: Option<&str>,
    path: &Path,
) -> Result<&'c CameraModel> {
    match view {
        Some(id) => cams.iter().find(|c| c.view_id == id).ok_or_else(|| {
            Error::InvalidParams(format!("view {id} not present in {}", path.display()))
        }),
        None if cams.len() == 1 => Ok(&cams[0]),
        None => Err(Error::InvalidParams(format!(
            "{} holds {} cameras; pick one with --view",
            path.display(),
            cams.len()
        ))),
    }
}

pub fn warp(camera: &Path, view: Option<&str>, bbox: &str) -> Result<()> {
    let cams = read_camera_file(camera)?;
    let cam = pick_camera(&cams, view, camera)?;
    let parts: Vec<f64> = bbox
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidParams(format!("bbox must be cx,cy,w,h: {e}")))?;
    if parts.len() != 4 {
        return Err(Error::InvalidParams("bbox must be cx,cy,w,h".into()));
    }
    let bbox = BBox::new(parts[0], parts[1], parts[2], parts[3])?;
    let (r, h) = virtual_rotation_warp(&cam.intrinsics, Pixel::new(bbox.cx, bbox.cy))?;
    println!("view: {}", cam.view_id);
    let fmt = |m: &egohand_core::Mat3| {
        m.to_flat()
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("R: {}", fmt(&r));
    println!("H: {}", fmt(&h));
    Ok(())
}

pub fn rectify_map(
    src: &Path,
    dst: &Path,
    src_view: Option<&str>,
    dst_view: Option<&str>,
    out: &Path,
) -> Result<()> {
    let src_cams = read_camera_file(src)?;
    let dst_cams = read_camera_file(dst)?;
    let src_cam = pick_camera(&src_cams, src_view, src)?;
    let dst_cam = pick_camera(&dst_cams, dst_view, dst)?;
    let map = build_rectify_map(
        &src_cam.intrinsics,
        &src_cam.distortion,
        &dst_cam.intrinsics,
    );
    map.write_to(out)?;
    let valid = (0..map.height())
        .flat_map(|v| (0..map.width()).map(move |u| (u, v)))
        .filter(|&(u, v)| map.is_valid(u, v))
        .count();
    println!(
        "wrote {} ({}x{}, {valid} valid of {})",
        out.display(),
        map.width(),
        map.height(),
        map.width() as u64 * map.height() as u64
    );
    Ok(())
}
