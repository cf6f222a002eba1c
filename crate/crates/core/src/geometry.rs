//! Coordinate-frame math shared by the whole pipeline: 3D vectors, rotation
//! matrices, skeletons, pinhole projection and rigid frame transforms.
//!
//! Conventions: 3D quantities are millimeters, 2D quantities are pixels.
//! Extrinsics map world to camera as `X_cam = R * X_world + t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Depth at or below this value (mm) counts as non-positive for projection.
pub const MIN_DEPTH_MM: f64 = 1e-9;

const ROTATION_TOL: f64 = 1e-9;

/// 3D vector, millimeters unless stated otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * o.z - self.z * o.y,
            y: self.z * o.x - self.x * o.z,
            z: self.x * o.y - self.y * o.x,
        }
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        Vec3::new(self.x / n, self.y / n, self.z / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// 3x3 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_rows(r0: [f64; 3], r1: [f64; 3], r2: [f64; 3]) -> Self {
        Mat3([r0, r1, r2])
    }

    /// Row-major flat view, e.g. for serialization.
    pub fn to_flat(self) -> [f64; 9] {
        let m = self.0;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn from_flat(v: [f64; 9]) -> Self {
        Mat3([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn transpose(self) -> Mat3 {
        let m = self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn det(self) -> f64 {
        let m = self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn mul_vec(self, v: Vec3) -> Vec3 {
        let m = self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(self, o: Mat3) -> Mat3 {
        let a = self.0;
        let b = o.0;
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        Mat3(out)
    }

    pub fn is_finite(self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    /// Max-abs deviation of R^T R from the identity.
    pub fn orthonormality_error(self) -> f64 {
        let g = self.transpose().mul_mat(self);
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                err = err.max((g.0[i][j] - expect).abs());
            }
        }
        err
    }

    /// True when R^T R = I and det(R) = 1, both within `tol`.
    pub fn is_rotation(self, tol: f64) -> bool {
        self.is_finite() && self.orthonormality_error() <= tol && (self.det() - 1.0).abs() <= tol
    }
}

/// Pixel position, sub-pixel precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Pixel { u, v }
    }
}

/// Coordinate frame a skeleton lives in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// Camera frame of the named view.
    Camera(String),
    /// Shared world frame.
    World,
}

/// J-joint hand skeleton in a tagged coordinate frame, millimeters.
///
/// Immutable after construction; all operations are pure functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    joints: Vec<Vec3>,
    frame: Frame,
}

impl Skeleton {
    pub fn new(joints: Vec<Vec3>, frame: Frame) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::InvalidParams(
                "skeleton needs at least one joint".into(),
            ));
        }
        if let Some(bad) = joints.iter().position(|j| !j.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "non-finite coordinate at joint {bad}"
            )));
        }
        Ok(Skeleton { joints, frame })
    }

    pub fn joints(&self) -> &[Vec3] {
        &self.joints
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    /// Applies `f` to every joint, keeping the frame tag.
    pub fn map_joints(&self, f: impl Fn(Vec3) -> Vec3) -> Skeleton {
        Skeleton {
            joints: self.joints.iter().map(|&j| f(j)).collect(),
            frame: self.frame.clone(),
        }
    }

    /// Same joints under a different frame tag. Internal: callers must pair
    /// this with the matching coordinate change.
    pub(crate) fn retagged(&self, frame: Frame) -> Skeleton {
        Skeleton {
            joints: self.joints.clone(),
            frame,
        }
    }

    pub(crate) fn with_joints(&self, joints: Vec<Vec3>) -> Skeleton {
        Skeleton {
            joints,
            frame: self.frame.clone(),
        }
    }

    pub(crate) fn expect_frame(&self, expected: &Frame) -> Result<()> {
        if self.frame != *expected {
            return Err(Error::FrameMismatch {
                expected: expected.clone(),
                found: self.frame.clone(),
            });
        }
        Ok(())
    }

    pub(crate) fn expect_same_joint_count(&self, other: &Skeleton) -> Result<()> {
        if self.joint_count() != other.joint_count() {
            return Err(Error::JointCountMismatch {
                left: self.joint_count(),
                right: other.joint_count(),
            });
        }
        Ok(())
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidParams(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(0.0 <= self.cx && self.cx < self.width as f64)
            || !(0.0 <= self.cy && self.cy < self.height as f64)
        {
            return Err(Error::InvalidParams(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.u >= 0.0 && p.u < self.width as f64 && p.v >= 0.0 && p.v < self.height as f64
    }
}

/// World-to-camera rigid transform: `X_cam = R * X_world + t` (t in mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    pub r: Mat3,
    pub t: Vec3,
}

impl Extrinsics {
    pub const IDENTITY: Extrinsics = Extrinsics {
        r: Mat3::IDENTITY,
        t: Vec3::ZERO,
    };

    pub fn new(r: Mat3, t: Vec3) -> Result<Self> {
        if !r.is_rotation(ROTATION_TOL) {
            return Err(Error::InvalidParams(
                "extrinsic R is not a rotation matrix".into(),
            ));
        }
        if !t.is_finite() {
            return Err(Error::InvalidParams("extrinsic t is not finite".into()));
        }
        Ok(Extrinsics { r, t })
    }
}

/// Projects a camera-frame point to pixels.
pub fn project(p: Vec3, intr: &Intrinsics) -> Result<Pixel> {
    if p.z <= MIN_DEPTH_MM {
        return Err(Error::NonPositiveDepth { depth: p.z });
    }
    Ok(Pixel::new(
        intr.fx * (p.x / p.z) + intr.cx,
        intr.fy * (p.y / p.z) + intr.cy,
    ))
}

/// Back-projects a pixel at the given depth into the camera frame.
pub fn unproject(px: Pixel, depth: f64, intr: &Intrinsics) -> Result<Vec3> {
    if depth <= MIN_DEPTH_MM {
        return Err(Error::NonPositiveDepth { depth });
    }
    Ok(Vec3::new(
        (px.u - intr.cx) / intr.fx * depth,
        (px.v - intr.cy) / intr.fy * depth,
        depth,
    ))
}

/// Camera-frame skeleton into the world frame: `X_world = R^T (X_cam - t)`.
pub fn to_world(s: &Skeleton, ext: &Extrinsics) -> Result<Skeleton> {
    match s.frame() {
        Frame::Camera(_) => {}
        Frame::World => {
            return Err(Error::FrameMismatch {
                expected: Frame::Camera("<any>".into()),
                found: Frame::World,
            })
        }
    }
    let rt = ext.r.transpose();
    Ok(s.map_joints(|j| rt.mul_vec(j - ext.t))
        .retagged(Frame::World))
}

/// World-frame skeleton into the camera frame of `view_id`.
pub fn to_camera(s: &Skeleton, ext: &Extrinsics, view_id: &str) -> Result<Skeleton> {
    s.expect_frame(&Frame::World)?;
    Ok(s.map_joints(|j| ext.r.mul_vec(j) + ext.t)
        .retagged(Frame::Camera(view_id.to_string())))
}

/// Minimal rotation taking unit vector `a` onto unit vector `b` (Rodrigues).
///
/// Callers must pass unit vectors (|a| = |b| = 1 within 1e-9). When a and b
/// are within 1e-6 of anti-parallel there is no unique minimal rotation; the
/// result is a half-turn about a deterministically chosen axis orthogonal to
/// `a` (crossed with the first coordinate axis that yields a usable axis).
pub fn rotation_between(a: Vec3, b: Vec3) -> Mat3 {
    debug_assert!((a.norm() - 1.0).abs() < 1e-9 && (b.norm() - 1.0).abs() < 1e-9);
    let c = a.dot(b).clamp(-1.0, 1.0);
    // angle within 1e-6 of pi  <=>  cos(angle) <= cos(pi - 1e-6)
    if c <= (std::f64::consts::PI - 1e-6).cos() {
        let axis = orthogonal_axis(a);
        return half_turn(axis);
    }
    let k = a.cross(b);
    let s2 = k.dot(k);
    if s2 == 0.0 {
        return Mat3::IDENTITY;
    }
    // R = I + K + K^2 (1 - c) / s^2 with K = [k]_x
    let kx = skew(k);
    let kx2 = kx.mul_mat(kx);
    let f = (1.0 - c) / s2;
    let mut out = Mat3::IDENTITY;
    for i in 0..3 {
        for j in 0..3 {
            out.0[i][j] += kx.0[i][j] + kx2.0[i][j] * f;
        }
    }
    out
}

fn skew(v: Vec3) -> Mat3 {
    Mat3([[0.0, -v.z, v.y], [v.z, 0.0, -v.x], [-v.y, v.x, 0.0]])
}

/// Rotation of pi about unit axis u: R = 2 u u^T - I.
fn half_turn(u: Vec3) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    let uv = [u.x, u.y, u.z];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = 2.0 * uv[i] * uv[j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    Mat3(m)
}

/// Unit vector orthogonal to `a`: cross with the smallest-index coordinate
/// axis that is not (near-)parallel to `a`.
fn orthogonal_axis(a: Vec3) -> Vec3 {
    for basis in [
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
    ] {
        let v = a.cross(basis);
        if v.norm() > 1e-6 {
            return v.normalized();
        }
    }
    unreachable!("a unit vector cannot be parallel to all three coordinate axes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rng::CounterRng;

    fn intr() -> Intrinsics {
        Intrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn project_on_axis() {
        let p = project(Vec3::new(0.0, 0.0, 1000.0), &intr()).unwrap();
        assert_eq!(p, Pixel::new(320.0, 240.0));
    }

    #[test]
    fn project_off_axis() {
        let p = project(Vec3::new(100.0, 0.0, 1000.0), &intr()).unwrap();
        assert_eq!(p, Pixel::new(370.0, 240.0));
    }

    #[test]
    fn project_rejects_non_positive_depth() {
        assert!(matches!(
            project(Vec3::new(0.0, 0.0, 0.0), &intr()),
            Err(Error::NonPositiveDepth { .. })
        ));
        assert!(matches!(
            project(Vec3::new(0.0, 0.0, 1e-10), &intr()),
            Err(Error::NonPositiveDepth { .. })
        ));
    }

    #[test]
    fn unproject_cases() {
        let v = unproject(Pixel::new(320.0, 240.0), 500.0, &intr()).unwrap();
        assert_eq!(v, Vec3::new(0.0, 0.0, 500.0));
        let v = unproject(Pixel::new(370.0, 240.0), 1000.0, &intr()).unwrap();
        assert_eq!(v, Vec3::new(100.0, 0.0, 1000.0));
    }

    #[test]
    fn project_unproject_roundtrip_1000_samples() {
        let rng = CounterRng::new(11);
        let intr = intr();
        for i in 0..1000u64 {
            let p = Vec3::new(
                rng.uniform_in(&[1, i, 0], -300.0, 300.0),
                rng.uniform_in(&[1, i, 1], -200.0, 200.0),
                rng.uniform_in(&[1, i, 2], 100.0, 2000.0),
            );
            let px = project(p, &intr).unwrap();
            let back = unproject(px, p.z, &intr).unwrap();
            assert!((back - p).norm() < 1e-9, "sample {i}: {back:?} vs {p:?}");
        }
    }

    #[test]
    fn to_world_identity_and_translation() {
        let s = Skeleton::new(vec![Vec3::new(0.0, 0.0, 100.0)], Frame::Camera("a".into())).unwrap();
        let w = to_world(&s, &Extrinsics::IDENTITY).unwrap();
        assert_eq!(w.joints()[0], Vec3::new(0.0, 0.0, 100.0));
        assert_eq!(*w.frame(), Frame::World);

        let ext = Extrinsics::new(Mat3::IDENTITY, Vec3::new(0.0, 0.0, 100.0)).unwrap();
        let w = to_world(&s, &ext).unwrap();
        assert_eq!(w.joints()[0], Vec3::ZERO);
    }

    #[test]
    fn to_world_rejects_world_frame_input() {
        let s = Skeleton::new(vec![Vec3::ZERO], Frame::World).unwrap();
        assert!(matches!(
            to_world(&s, &Extrinsics::IDENTITY),
            Err(Error::FrameMismatch { .. })
        ));
    }

    #[test]
    fn world_camera_roundtrip_random_rigid() {
        let rng = CounterRng::new(12);
        for i in 0..1000u64 {
            let axis = random_unit(&rng, &[2, i, 0]);
            let angle = rng.uniform_in(&[2, i, 1], -3.0, 3.0);
            let r = axis_angle(axis, angle);
            let t = Vec3::new(
                rng.uniform_in(&[2, i, 2], -500.0, 500.0),
                rng.uniform_in(&[2, i, 3], -500.0, 500.0),
                rng.uniform_in(&[2, i, 4], -500.0, 500.0),
            );
            let ext = Extrinsics::new(r, t).unwrap();
            let joints: Vec<Vec3> = (0..5)
                .map(|j| {
                    Vec3::new(
                        rng.uniform_in(&[2, i, 10 + j], -200.0, 200.0),
                        rng.uniform_in(&[2, i, 20 + j], -200.0, 200.0),
                        rng.uniform_in(&[2, i, 30 + j], -200.0, 200.0),
                    )
                })
                .collect();
            let s = Skeleton::new(joints, Frame::World).unwrap();
            let back = to_world(&to_camera(&s, &ext, "v").unwrap(), &ext).unwrap();
            for (a, b) in back.joints().iter().zip(s.joints()) {
                assert!((*a - *b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn rotation_between_identity_and_quarter_turn() {
        let a = Vec3::new(1.0, 0.0, 0.0);
        let r = rotation_between(a, a);
        assert!(r.is_rotation(1e-12));
        assert!((r.mul_vec(a) - a).norm() < 1e-12);

        let b = Vec3::new(0.0, 1.0, 0.0);
        let r = rotation_between(a, b);
        assert!((r.mul_vec(a) - b).norm() < 1e-12);
        // 90 degrees about z
        assert!((r.0[2][2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_between_antiparallel_is_deterministic_half_turn() {
        let a = Vec3::new(0.0, 0.0, 1.0);
        let b = Vec3::new(0.0, 0.0, -1.0);
        let r = rotation_between(a, b);
        assert!(r.is_rotation(1e-12));
        assert!((r.mul_vec(a) - b).norm() < 1e-12);
        assert_eq!(r, rotation_between(a, b));
    }

    #[test]
    fn rotation_between_random_pairs_property() {
        let rng = CounterRng::new(13);
        for i in 0..1000u64 {
            let a = random_unit(&rng, &[3, i, 0]);
            let b = random_unit(&rng, &[3, i, 1]);
            let r = rotation_between(a, b);
            assert!(r.is_rotation(1e-9), "sample {i}");
            assert!((r.mul_vec(a) - b).norm() < 1e-9, "sample {i}");
        }
    }

    pub(crate) fn random_unit(rng: &CounterRng, key: &[u64]) -> Vec3 {
        let z = rng.uniform_in(&[key[0], key[1], key[2], 100], -1.0, 1.0);
        let phi = rng.uniform_in(&[key[0], key[1], key[2], 101], 0.0, std::f64::consts::TAU);
        let r = (1.0 - z * z).max(0.0).sqrt();
        Vec3::new(r * phi.cos(), r * phi.sin(), z)
    }

    pub(crate) fn axis_angle(axis: Vec3, angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        let k = skew(axis);
        let k2 = k.mul_mat(k);
        let mut out = Mat3::IDENTITY;
        for i in 0..3 {
            for j in 0..3 {
                out.0[i][j] += s * k.0[i][j] + (1.0 - c) * k2.0[i][j];
            }
        }
        out
    }
}
