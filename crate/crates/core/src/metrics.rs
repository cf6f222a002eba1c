//! Pose-error metrics: MPJPE, similarity-transform (Umeyama) alignment and
//! PA-MPJPE. These drive both evaluation and the temporal-fallback branch of
//! the multi-view merge.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Skeleton, Vec3};

/// Similarity transform `x -> scale * R * x + t`.
///
/// `degenerate` marks the fallback returned when the source points had rank
/// < 2 after centering (all coincident or collinear): scale 1, identity
/// rotation, centroid-difference translation. Degenerate inputs do not abort
/// a pipeline run because occlusion-corrupted frames can collapse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub r: Mat3,
    pub t: Vec3,
    pub degenerate: bool,
}

impl SimilarityTransform {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.r.mul_vec(p).scale(self.scale) + self.t
    }

    pub fn apply_skeleton(&self, s: &Skeleton) -> Skeleton {
        s.map_joints(|j| self.apply(j))
    }
}

/// Mean per-joint position error in millimeters.
pub fn mpjpe(a: &Skeleton, b: &Skeleton) -> Result<f64> {
    a.expect_frame(b.frame())?;
    a.expect_same_joint_count(b)?;
    let mut sum = 0.0;
    for (ja, jb) in a.joints().iter().zip(b.joints()) {
        sum += (*ja - *jb).norm();
    }
    Ok(sum / a.joint_count() as f64)
}

/// Least-squares similarity transform taking `src` onto `dst` (Umeyama).
///
/// Reflections are excluded by flipping the sign paired with the smallest
/// singular value of the cross-covariance when needed.
pub fn umeyama_align(src: &Skeleton, dst: &Skeleton) -> Result<SimilarityTransform> {
    umeyama_align_with(src, dst, true)
}

/// As [`umeyama_align`], optionally without the uniform scale (rigid only).
pub fn umeyama_align_with(
    src: &Skeleton,
    dst: &Skeleton,
    estimate_scale: bool,
) -> Result<SimilarityTransform> {
    src.expect_frame(dst.frame())?;
    src.expect_same_joint_count(dst)?;
    let n = src.joint_count() as f64;

    let centroid = |s: &Skeleton| {
        let mut c = Vec3::ZERO;
        for &j in s.joints() {
            c = c + j;
        }
        c.scale(1.0 / n)
    };
    let mu_s = centroid(src);
    let mu_d = centroid(dst);

    // Cross-covariance (dst x src^T) and source variance, both centered.
    let mut cov = Matrix3::<f64>::zeros();
    let mut var_src = 0.0;
    let mut scatter_src = Matrix3::<f64>::zeros();
    for (&s, &d) in src.joints().iter().zip(dst.joints()) {
        let sc = s - mu_s;
        let dc = d - mu_d;
        let sv = Vector3::new(sc.x, sc.y, sc.z);
        let dv = Vector3::new(dc.x, dc.y, dc.z);
        cov += dv * sv.transpose();
        scatter_src += sv * sv.transpose();
        var_src += sc.dot(sc);
    }
    cov /= n;
    scatter_src /= n;
    var_src /= n;

    // Rank of the centered source decides solvability.
    let eig = scatter_src.symmetric_eigenvalues();
    let lmax = eig.iter().cloned().fold(0.0f64, f64::max);
    let rank = eig.iter().filter(|&&l| l > lmax * 1e-12 && l > 0.0).count();
    if rank < 2 {
        return Ok(SimilarityTransform {
            scale: 1.0,
            r: Mat3::IDENTITY,
            t: mu_d - mu_s,
            degenerate: true,
        });
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let mut d_sign = [1.0, 1.0, 1.0];
    if u.determinant() * v_t.determinant() < 0.0 {
        // singular values are sorted descending; flip the smallest
        d_sign[2] = -1.0;
    }
    let s_diag = Matrix3::from_diagonal(&Vector3::new(d_sign[0], d_sign[1], d_sign[2]));
    let r_na = u * s_diag * v_t;

    let scale = if estimate_scale {
        let trace_ds: f64 = (0..3).map(|i| svd.singular_values[i] * d_sign[i]).sum();
        trace_ds / var_src
    } else {
        1.0
    };

    let r = Mat3::from_rows(
        [r_na[(0, 0)], r_na[(0, 1)], r_na[(0, 2)]],
        [r_na[(1, 0)], r_na[(1, 1)], r_na[(1, 2)]],
        [r_na[(2, 0)], r_na[(2, 1)], r_na[(2, 2)]],
    );
    let t = mu_d - r.mul_vec(mu_s).scale(scale);
    Ok(SimilarityTransform {
        scale,
        r,
        t,
        degenerate: false,
    })
}

/// MPJPE after removing the optimal similarity transform from `pred`.
pub fn pa_mpjpe(pred: &Skeleton, gt: &Skeleton) -> Result<f64> {
    let tf = umeyama_align(pred, gt)?;
    mpjpe(&tf.apply_skeleton(pred), gt)
}

/// Per-sequence evaluation summary (all values in millimeters).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    /// Mean of the per-frame MPJPE values.
    pub mpjpe: f64,
    /// Mean of the per-frame PA-MPJPE values.
    pub pa_mpjpe: f64,
    /// Mean error of each joint across frames.
    pub per_joint: Vec<f64>,
    /// MPJPE of each frame.
    pub per_frame: Vec<f64>,
}

/// Evaluates aligned prediction/ground-truth sequences frame by frame.
///
/// Callers are responsible for frame-id alignment; the slices must pair up
/// one-to-one and in order.
pub fn sequence_metrics(pred: &[Skeleton], gt: &[Skeleton]) -> Result<MetricReport> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::InvalidParams("empty sequence".into()));
    }
    let j = pred[0].joint_count();
    let n = pred.len();
    let mut per_joint = vec![0.0; j];
    let mut per_frame = Vec::with_capacity(n);
    let mut pa_sum = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        p.expect_same_joint_count(&pred[0])?;
        per_frame.push(mpjpe(p, g)?);
        pa_sum += pa_mpjpe(p, g)?;
        for (k, (jp, jg)) in p.joints().iter().zip(g.joints()).enumerate() {
            per_joint[k] += (*jp - *jg).norm();
        }
    }
    for v in &mut per_joint {
        *v /= n as f64;
    }
    Ok(MetricReport {
        mpjpe: per_frame.iter().sum::<f64>() / n as f64,
        pa_mpjpe: pa_sum / n as f64,
        per_joint,
        per_frame,
    })
}
