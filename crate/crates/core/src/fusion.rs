//! Multi-view merge and model ensembling.
//!
//! Per frame, the merge scores every unordered pair of views by mutual MPJPE
//! and keeps the most consistent pair: averaged when the pair error is below
//! the threshold, otherwise the pair member temporally closer (in PA-MPJPE)
//! to the previous fused frame wins. Ensembling is weighted joint-wise
//! averaging with a disagreement-triggered reweight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Frame, Skeleton};
use crate::metrics::{mpjpe, pa_mpjpe};

/// Thresholds and weights for merge and ensemble fusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Pair MPJPE below this merges by averaging, millimeters.
    pub merge_threshold_mm: f64,
    /// (primary, secondary) ensemble weights; must sum to 1.
    pub ensemble_weights: (f64, f64),
    /// Ensemble disagreement that triggers the gap weights, millimeters.
    pub gap_threshold_mm: f64,
    /// Weights used when the two ensemble inputs disagree strongly.
    pub gap_weights: (f64, f64),
    /// Compare every view (not just the selected pair) against the previous
    /// frame on temporal fallback.
    pub fallback_over_all_views: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            merge_threshold_mm: 30.0,
            ensemble_weights: (0.7, 0.3),
            gap_threshold_mm: 20.0,
            gap_weights: (0.5, 0.5),
            fallback_over_all_views: false,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.merge_threshold_mm <= 0.0
            || self.gap_threshold_mm <= 0.0
            || self.merge_threshold_mm.is_nan()
            || self.gap_threshold_mm.is_nan()
        {
            return Err(Error::InvalidParams(
                "fusion thresholds must be positive".into(),
            ));
        }
        for (name, (a, b)) in [
            ("ensemble_weights", self.ensemble_weights),
            ("gap_weights", self.gap_weights),
        ] {
            if a < 0.0 || b < 0.0 || (a + b - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParams(format!(
                    "{name} ({a}, {b}) must be non-negative and sum to 1"
                )));
            }
        }
        Ok(())
    }
}

/// Which rule produced a merged frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MergeBranch {
    /// Mean of the selected pair. `no_previous` marks frames where the pair
    /// error was above the threshold but no previous frame existed to fall
    /// back on, so the mean was used anyway.
    MeanOfPair { no_previous: bool },
    /// Pair error above threshold; the candidate closer to the previous
    /// fused frame was selected.
    TemporalFallback { view: String },
    /// Only one view observed this frame.
    Passthrough { view: String },
    /// No views; filled by interpolation at the sequence level.
    Missing,
}

/// Views considered for the output of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectedViews {
    Pair { view_i: String, view_j: String },
    Single { view: String },
    None,
}

/// Per-frame audit record of the merge decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeDecision {
    pub frame_id: u64,
    pub selected: SelectedViews,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_mpjpe_mm: Option<f64>,
    pub branch: MergeBranch,
    /// PA-MPJPE of each fallback candidate against the previous frame, only
    /// present when the temporal fallback fired.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fallback_pa_mpjpe: Option<Vec<(String, f64)>>,
}

/// Merges the per-view skeletons of one frame.
///
/// Returns `None` for the skeleton when no views are present; the sequence
/// level interpolates those afterwards. All views must be world-frame and
/// share the joint count.
pub fn merge_frame(
    frame_id: u64,
    views: &[(String, Skeleton)],
    prev: Option<&Skeleton>,
    cfg: &FusionConfig,
) -> Result<(Option<Skeleton>, MergeDecision)> {
    cfg.validate()?;
    for (_, s) in views {
        s.expect_frame(&Frame::World)?;
        s.expect_same_joint_count(&views[0].1)?;
    }
    if let Some(p) = prev {
        p.expect_frame(&Frame::World)?;
        if let Some((_, first)) = views.first() {
            first.expect_same_joint_count(p)?;
        }
    }

    match views.len() {
        0 => Ok((
            None,
            MergeDecision {
                frame_id,
                selected: SelectedViews::None,
                pair_mpjpe_mm: None,
                branch: MergeBranch::Missing,
                fallback_pa_mpjpe: None,
            },
        )),
        1 => Ok((
            Some(views[0].1.clone()),
            MergeDecision {
                frame_id,
                selected: SelectedViews::Single {
                    view: views[0].0.clone(),
                },
                pair_mpjpe_mm: None,
                branch: MergeBranch::Passthrough {
                    view: views[0].0.clone(),
                },
                fallback_pa_mpjpe: None,
            },
        )),
        _ => merge_multi(frame_id, views, prev, cfg),
    }
}

fn merge_multi(
    frame_id: u64,
    views: &[(String, Skeleton)],
    prev: Option<&Skeleton>,
    cfg: &FusionConfig,
) -> Result<(Option<Skeleton>, MergeDecision)> {
    // lowest mutual MPJPE over all unordered pairs; ties break on the
    // lexicographically smallest (view_i, view_j) with view_i < view_j
    let mut best: Option<(f64, usize, usize)> = None;
    for a in 0..views.len() {
        for b in (a + 1)..views.len() {
            let (i, j) = if views[a].0 <= views[b].0 {
                (a, b)
            } else {
                (b, a)
            };
            let err = mpjpe(&views[i].1, &views[j].1)?;
            let key = (&views[i].0, &views[j].0);
            let better = match &best {
                None => true,
                Some((berr, bi, bj)) => {
                    err < *berr || (err == *berr && key < (&views[*bi].0, &views[*bj].0))
                }
            };
            if better {
                best = Some((err, i, j));
            }
        }
    }
    let (pair_err, i, j) = best.expect("at least one pair");
    let (vi, vj) = (&views[i], &views[j]);

    if pair_err < cfg.merge_threshold_mm || prev.is_none() {
        let mean = pair_mean(&vi.1, &vj.1);
        let no_previous = pair_err >= cfg.merge_threshold_mm;
        return Ok((
            Some(mean),
            MergeDecision {
                frame_id,
                selected: SelectedViews::Pair {
                    view_i: vi.0.clone(),
                    view_j: vj.0.clone(),
                },
                pair_mpjpe_mm: Some(pair_err),
                branch: MergeBranch::MeanOfPair { no_previous },
                fallback_pa_mpjpe: None,
            },
        ));
    }

    // temporal fallback: candidate with the lower PA-MPJPE to the previous
    // fused frame, tie to the lower view id
    let prev = prev.expect("checked above");
    let candidates: Vec<&(String, Skeleton)> = if cfg.fallback_over_all_views {
        views.iter().collect()
    } else {
        vec![vi, vj]
    };
    let mut scored = Vec::with_capacity(candidates.len());
    for cand in candidates {
        scored.push((cand.0.clone(), pa_mpjpe(&cand.1, prev)?, &cand.1));
    }
    let mut winner = 0;
    for k in 1..scored.len() {
        let (wid, werr, _) = &scored[winner];
        let (kid, kerr, _) = &scored[k];
        if kerr < werr || (kerr == werr && kid < wid) {
            winner = k;
        }
    }
    let chosen = scored[winner].2.clone();
    let chosen_view = scored[winner].0.clone();
    Ok((
        Some(chosen),
        MergeDecision {
            frame_id,
            selected: SelectedViews::Pair {
                view_i: vi.0.clone(),
                view_j: vj.0.clone(),
            },
            pair_mpjpe_mm: Some(pair_err),
            branch: MergeBranch::TemporalFallback { view: chosen_view },
            fallback_pa_mpjpe: Some(scored.into_iter().map(|(v, e, _)| (v, e)).collect()),
        },
    ))
}

fn pair_mean(a: &Skeleton, b: &Skeleton) -> Skeleton {
    let joints = a
        .joints()
        .iter()
        .zip(b.joints())
        .map(|(&x, &y)| (x + y).scale(0.5))
        .collect();
    a.with_joints(joints)
}

/// Merges an ordered per-frame sequence, threading the previous fused output
/// (not the raw views) as the temporal reference. Frames with no views are
/// filled by linear interpolation between the nearest merged neighbours
/// (edge gaps copy the nearest merged frame) and carry the `Missing` branch
/// in their decision.
pub fn merge_sequence(
    frames: &[(u64, Vec<(String, Skeleton)>)],
    cfg: &FusionConfig,
) -> Result<(Vec<Skeleton>, Vec<MergeDecision>)> {
    if frames.is_empty() {
        return Err(Error::InvalidParams("empty frame sequence".into()));
    }
    if frames.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::InvalidParams(
            "frames must be strictly ordered by frame id".into(),
        ));
    }
    let mut merged: Vec<Option<Skeleton>> = Vec::with_capacity(frames.len());
    let mut decisions = Vec::with_capacity(frames.len());
    let mut prev: Option<Skeleton> = None;
    for (frame_id, views) in frames {
        let (out, decision) = merge_frame(*frame_id, views, prev.as_ref(), cfg)?;
        if let Some(s) = &out {
            prev = Some(s.clone());
        }
        merged.push(out);
        decisions.push(decision);
    }
    if merged.iter().all(Option::is_none) {
        return Err(Error::InvalidParams(
            "every frame in the sequence is empty".into(),
        ));
    }
    Ok((fill_missing(&merged, frames), decisions))
}

/// Linear interpolation of gaps, weighted by frame-id distance.
fn fill_missing(
    merged: &[Option<Skeleton>],
    frames: &[(u64, Vec<(String, Skeleton)>)],
) -> Vec<Skeleton> {
    let n = merged.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        if let Some(s) = &merged[k] {
            out.push(s.clone());
            continue;
        }
        let left = (0..k).rev().find(|&i| merged[i].is_some());
        let right = (k + 1..n).find(|&i| merged[i].is_some());
        let filled = match (left, right) {
            (Some(l), Some(r)) => {
                let (fl, fr, fk) = (frames[l].0 as f64, frames[r].0 as f64, frames[k].0 as f64);
                let t = (fk - fl) / (fr - fl);
                let a = merged[l].as_ref().unwrap();
                let b = merged[r].as_ref().unwrap();
                let joints = a
                    .joints()
                    .iter()
                    .zip(b.joints())
                    .map(|(&x, &y)| x + (y - x).scale(t))
                    .collect();
                a.with_joints(joints)
            }
            (Some(l), None) => merged[l].as_ref().unwrap().clone(),
            (None, Some(r)) => merged[r].as_ref().unwrap().clone(),
            (None, None) => unreachable!("guarded by the all-empty check"),
        };
        out.push(filled);
    }
    out
}

/// Branch counts over a decision list, for self-describing reports.
pub fn branch_histogram(decisions: &[MergeDecision]) -> Vec<(String, usize)> {
    let mut counts = [0usize; 5];
    for d in decisions {
        let idx = match d.branch {
            MergeBranch::MeanOfPair { no_previous: false } => 0,
            MergeBranch::MeanOfPair { no_previous: true } => 1,
            MergeBranch::TemporalFallback { .. } => 2,
            MergeBranch::Passthrough { .. } => 3,
            MergeBranch::Missing => 4,
        };
        counts[idx] += 1;
    }
    [
        "mean_of_pair",
        "mean_of_pair_no_previous",
        "temporal_fallback",
        "passthrough",
        "missing",
    ]
    .iter()
    .zip(counts)
    .map(|(name, c)| (name.to_string(), c))
    .collect()
}

/// Weighted joint-wise blend of two skeletons; strong disagreement switches
/// to the gap weights.
pub fn ensemble_frame(a: &Skeleton, b: &Skeleton, cfg: &FusionConfig) -> Result<Skeleton> {
    cfg.validate()?;
    let gap = mpjpe(a, b)?;
    let (_, wb) = if gap > cfg.gap_threshold_mm {
        cfg.gap_weights
    } else {
        cfg.ensemble_weights
    };
    // lerp form keeps a == b and (1, 0) weights exact
    let joints = a
        .joints()
        .iter()
        .zip(b.joints())
        .map(|(&x, &y)| x + (y - x).scale(wb))
        .collect();
    Ok(a.with_joints(joints))
}

/// Two-stage model ensemble: primary runs are averaged uniformly, then the
/// secondary run (different architecture) is folded in frame by frame with
/// the configured weights.
pub fn ensemble_sequences(
    primary_runs: &[Vec<Skeleton>],
    secondary: Option<&[Skeleton]>,
    cfg: &FusionConfig,
) -> Result<Vec<Skeleton>> {
    cfg.validate()?;
    let Some(first) = primary_runs.first() else {
        return Err(Error::InvalidParams("need at least one primary run".into()));
    };
    let n = first.len();
    for run in primary_runs {
        if run.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: run.len(),
            });
        }
    }
    if let Some(s) = secondary {
        if s.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: s.len(),
            });
        }
    }

    let mut out = Vec::with_capacity(n);
    for f in 0..n {
        // incremental mean keeps identical runs bit-exact
        let mut mean = first[f].clone();
        for (k, run) in primary_runs.iter().enumerate().skip(1) {
            mean.expect_same_joint_count(&run[f])?;
            run[f].expect_frame(mean.frame())?;
            let w = 1.0 / (k + 1) as f64;
            let joints = mean
                .joints()
                .iter()
                .zip(run[f].joints())
                .map(|(&m, &x)| m + (x - m).scale(w))
                .collect();
            mean = mean.with_joints(joints);
        }
        out.push(match secondary {
            Some(s) => ensemble_frame(&mean, &s[f], cfg)?,
            None => mean,
        });
    }
    Ok(out)
}
