//! 2.5D-to-3D lifting: turns the regressor output representation (2D
//! keypoints, root-relative 3D keypoints, scalar root depth) into absolute
//! camera-frame skeletons.

use crate::error::{Error, Result};
use crate::geometry::{project, unproject, Frame, Intrinsics, Mat3, Pixel, Skeleton, Vec3};

/// Raw 2.5D output for one (frame, view) observation.
///
/// `warp_r` carries the virtual rotation applied at crop time, if any; the
/// 2.5D values then live in the warped camera frame and lifting rotates the
/// result back. Only the root's 2D keypoint participates in lifting; the
/// rest of `kp2d` is carried for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction25D {
    pub kp2d: Vec<Pixel>,
    pub rel3d: Vec<Vec3>,
    pub root_depth: f64,
    pub root_index: usize,
    pub warp_r: Option<Mat3>,
}

pub const DEFAULT_ROOT_INDEX: usize = 0;

impl Prediction25D {
    pub fn new(
        kp2d: Vec<Pixel>,
        rel3d: Vec<Vec3>,
        root_depth: f64,
        root_index: usize,
        warp_r: Option<Mat3>,
    ) -> Result<Self> {
        if kp2d.is_empty() || kp2d.len() != rel3d.len() {
            return Err(Error::InvalidParams(format!(
                "kp2d ({}) and rel3d ({}) must be equal-length and non-empty",
                kp2d.len(),
                rel3d.len()
            )));
        }
        if root_index >= rel3d.len() {
            return Err(Error::InvalidParams(format!(
                "root index {} out of range for {} joints",
                root_index,
                rel3d.len()
            )));
        }
        if rel3d[root_index].norm() > 1e-9 {
            return Err(Error::InvalidParams(
                "root-relative coordinates must be zero at the root joint".into(),
            ));
        }
        if root_depth <= 0.0 || root_depth.is_nan() {
            return Err(Error::InvalidParams(format!(
                "root depth {root_depth} must be positive"
            )));
        }
        if let Some(r) = &warp_r {
            if !r.is_rotation(1e-6) {
                return Err(Error::InvalidParams(
                    "warp_R is not a rotation matrix".into(),
                ));
            }
        }
        Ok(Prediction25D {
            kp2d,
            rel3d,
            root_depth,
            root_index,
            warp_r,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.rel3d.len()
    }
}

/// Recovers the absolute camera-frame skeleton: unproject the root, offset by
/// the root-relative coordinates, undo the crop-time virtual rotation.
pub fn lift(p: &Prediction25D, intr: &Intrinsics, view_id: &str) -> Result<Skeleton> {
    let root3d = unproject(p.kp2d[p.root_index], p.root_depth, intr)?;
    let mut joints: Vec<Vec3> = p.rel3d.iter().map(|&rel| root3d + rel).collect();
    if let Some(r) = &p.warp_r {
        let rt = r.transpose();
        for j in &mut joints {
            *j = rt.mul_vec(*j);
        }
    }
    Skeleton::new(joints, Frame::Camera(view_id.to_string()))
}

/// Inverse of [`lift`]: projects a camera-frame skeleton back into the 2.5D
/// representation (useful for synthesizing network-like inputs).
pub fn decompose(
    s: &Skeleton,
    intr: &Intrinsics,
    root_index: usize,
    warp_r: Option<Mat3>,
) -> Result<Prediction25D> {
    match s.frame() {
        Frame::Camera(_) => {}
        Frame::World => {
            return Err(Error::FrameMismatch {
                expected: Frame::Camera("<any>".into()),
                found: Frame::World,
            })
        }
    }
    if root_index >= s.joint_count() {
        return Err(Error::InvalidParams(format!(
            "root index {} out of range for {} joints",
            root_index,
            s.joint_count()
        )));
    }
    let warped: Vec<Vec3> = match &warp_r {
        Some(r) => s.joints().iter().map(|&j| r.mul_vec(j)).collect(),
        None => s.joints().to_vec(),
    };
    let root = warped[root_index];
    if root.z <= crate::geometry::MIN_DEPTH_MM {
        return Err(Error::NonPositiveDepth { depth: root.z });
    }
    let mut kp2d = Vec::with_capacity(warped.len());
    let mut rel3d = Vec::with_capacity(warped.len());
    for (i, &j) in warped.iter().enumerate() {
        kp2d.push(project(j, intr)?);
        rel3d.push(if i == root_index {
            Vec3::ZERO
        } else {
            j - root
        });
    }
    Prediction25D::new(kp2d, rel3d, root.z, root_index, warp_r)
}
