//! File formats: line-delimited prediction streams (one JSON object per
//! line, UTF-8) and the camera description file. Parsers are hardened
//! against malformed input and report the offending line.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::geometry::{Extrinsics, Frame, Intrinsics, Mat3, Pixel, Skeleton, Vec3};
use crate::lift::{lift, Prediction25D, DEFAULT_ROOT_INDEX};
use crate::preprocess::{FisheyeDistortion, DEFAULT_THETA_MAX};

/// Frame tag of a serialized record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameTag {
    Camera,
    World,
}

/// One (video, frame, view, model) observation. Either `joints` (flat
/// x,y,z triples, millimeters) or the raw 2.5D fields must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub video_id: String,
    pub frame_id: u64,
    pub view_id: String,
    pub model_id: String,
    pub frame: FrameTag,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joints: Option<Vec<f64>>,
    /// Flat (u, v) pairs in the rectified/warped image, pixels.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kp2d: Option<Vec<f64>>,
    /// Flat root-relative (x, y, z) triples, millimeters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel3d: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root_depth: Option<f64>,
    /// Row-major 3x3 virtual rotation applied at crop time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warp_r: Option<Vec<f64>>,
}

impl PredictionRecord {
    pub fn key(&self) -> String {
        format!(
            "{}/{}/{}/{}",
            self.video_id, self.frame_id, self.view_id, self.model_id
        )
    }

    fn invariant_err(&self, message: impl Into<String>) -> Error {
        Error::InvariantViolation {
            key: self.key(),
            message: message.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(joints) = &self.joints {
            if joints.is_empty() || joints.len() % 3 != 0 {
                return Err(self.invariant_err(format!(
                    "joints length {} must be a positive multiple of 3",
                    joints.len()
                )));
            }
            if joints.iter().any(|v| !v.is_finite()) {
                return Err(self.invariant_err("non-finite joint coordinate"));
            }
        }
        let raw = [
            self.kp2d.is_some(),
            self.rel3d.is_some(),
            self.root_depth.is_some(),
        ];
        let any_raw = raw.iter().any(|&b| b);
        if any_raw && !raw.iter().all(|&b| b) {
            return Err(self.invariant_err("kp2d, rel3d and root_depth must appear together"));
        }
        if self.joints.is_none() && !any_raw {
            return Err(self.invariant_err("record carries neither joints nor 2.5D fields"));
        }
        if any_raw && self.frame != FrameTag::Camera {
            return Err(self.invariant_err("raw 2.5D fields require a camera-frame record"));
        }
        if let (Some(kp2d), Some(rel3d)) = (&self.kp2d, &self.rel3d) {
            if kp2d.len() % 2 != 0 || rel3d.len() % 3 != 0 || kp2d.len() / 2 != rel3d.len() / 3 {
                return Err(self.invariant_err("kp2d and rel3d joint counts disagree"));
            }
            if let Some(joints) = &self.joints {
                if joints.len() / 3 != rel3d.len() / 3 {
                    return Err(self.invariant_err("joints and rel3d joint counts disagree"));
                }
            }
        }
        if let Some(w) = &self.warp_r {
            if w.len() != 9 {
                return Err(self.invariant_err("warp_r must hold 9 row-major entries"));
            }
        }
        Ok(())
    }

    /// The 3D skeleton of this record: stored joints when present, otherwise
    /// lifted from the 2.5D fields (which needs the view's intrinsics).
    pub fn skeleton(&self, camera: Option<&CameraModel>) -> Result<Skeleton> {
        self.validate()?;
        let frame = match self.frame {
            FrameTag::Camera => Frame::Camera(self.view_id.clone()),
            FrameTag::World => Frame::World,
        };
        if let Some(joints) = &self.joints {
            let vecs = joints
                .chunks_exact(3)
                .map(|c| Vec3::new(c[0], c[1], c[2]))
                .collect();
            return Skeleton::new(vecs, frame);
        }
        let cam = camera
            .ok_or_else(|| self.invariant_err("2.5D record needs camera intrinsics for lifting"))?;
        let kp2d: Vec<Pixel> = self
            .kp2d
            .as_ref()
            .expect("validated")
            .chunks_exact(2)
            .map(|c| Pixel::new(c[0], c[1]))
            .collect();
        let rel3d: Vec<Vec3> = self
            .rel3d
            .as_ref()
            .expect("validated")
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0], c[1], c[2]))
            .collect();
        let warp = self.warp_r.as_ref().map(|w| {
            Mat3::from_flat(<[f64; 9]>::try_from(w.as_slice()).expect("validated length"))
        });
        let pred = Prediction25D::new(
            kp2d,
            rel3d,
            self.root_depth.expect("validated"),
            DEFAULT_ROOT_INDEX,
            warp,
        )
        .map_err(|e| self.invariant_err(e.to_string()))?;
        lift(&pred, &cam.intrinsics, &self.view_id)
    }

    /// Builds a plain 3D record from a skeleton.
    pub fn from_skeleton(
        video_id: &str,
        frame_id: u64,
        view_id: &str,
        model_id: &str,
        s: &Skeleton,
    ) -> Self {
        let frame = match s.frame() {
            Frame::Camera(_) => FrameTag::Camera,
            Frame::World => FrameTag::World,
        };
        let joints = s
            .joints()
            .iter()
            .flat_map(|j| [j.x, j.y, j.z])
            .collect::<Vec<f64>>();
        PredictionRecord {
            video_id: video_id.to_string(),
            frame_id,
            view_id: view_id.to_string(),
            model_id: model_id.to_string(),
            frame,
            joints: Some(joints),
            kp2d: None,
            rel3d: None,
            root_depth: None,
            warp_r: None,
        }
    }
}

/// Parses a prediction stream from raw bytes. Any malformed line fails with
/// its 1-based line number; record invariants (including key uniqueness) are
/// checked afterwards.
pub fn parse_prediction_stream(bytes: &[u8]) -> Result<Vec<PredictionRecord>> {
    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in bytes.split(|&b| b == b'\n').enumerate() {
        let line_no = idx + 1;
        // a trailing newline leaves one empty slice at the end; interior
        // blank lines are malformed
        if line.is_empty() {
            continue;
        }
        let text = std::str::from_utf8(line).map_err(|e| Error::Parse {
            line: line_no,
            message: format!("invalid UTF-8: {e}"),
        })?;
        if text.trim().is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "blank line".into(),
            });
        }
        let record: PredictionRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        record.validate()?;
        if !seen.insert(record.key()) {
            return Err(record.invariant_err("duplicate (video, frame, view, model) key"));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn read_prediction_stream(path: &Path) -> Result<Vec<PredictionRecord>> {
    parse_prediction_stream(&std::fs::read(path)?)
}

/// Writes records one JSON object per line, preserving order. The JSON
/// number encoding round-trips every f64 exactly.
pub fn write_prediction_stream(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        r.validate()?;
        let line = serde_json::to_string(r).map_err(|e| Error::InvariantViolation {
            key: r.key(),
            message: e.to_string(),
        })?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

// -- camera file ------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RawCameraFile {
    cameras: Vec<RawCamera>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawCamera {
    view_id: String,
    intrinsics: RawIntrinsics,
    distortion: RawDistortion,
    extrinsics: RawExtrinsics,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDistortion {
    k1: f64,
    k2: f64,
    k3: f64,
    k4: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawExtrinsics {
    /// Row-major 3x3 rotation.
    r: Vec<f64>,
    t: Vec<f64>,
}

/// Loads a camera file: intrinsics validated, distortion checked monotone
/// over the default angle range, rotations orthonormal within 1e-6 (small
/// drift is re-orthonormalized via polar decomposition and logged).
pub fn parse_camera_file(bytes: &[u8]) -> Result<Vec<CameraModel>> {
    let raw: RawCameraFile = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut seen = HashSet::new();
    let mut cams = Vec::with_capacity(raw.cameras.len());
    for cam in raw.cameras {
        if !seen.insert(cam.view_id.clone()) {
            return Err(Error::InvariantViolation {
                key: cam.view_id.clone(),
                message: "duplicate view id".into(),
            });
        }
        let bad = |message: String| Error::InvariantViolation {
            key: cam.view_id.clone(),
            message,
        };
        let intr = Intrinsics::new(
            cam.intrinsics.fx,
            cam.intrinsics.fy,
            cam.intrinsics.cx,
            cam.intrinsics.cy,
            cam.intrinsics.width,
            cam.intrinsics.height,
        )
        .map_err(|e| bad(e.to_string()))?;
        let dist = FisheyeDistortion::new(
            cam.distortion.k1,
            cam.distortion.k2,
            cam.distortion.k3,
            cam.distortion.k4,
        );
        dist.validate_monotone(DEFAULT_THETA_MAX)
            .map_err(|e| bad(e.to_string()))?;
        if cam.extrinsics.r.len() != 9 || cam.extrinsics.t.len() != 3 {
            return Err(bad(
                "extrinsics need 9 rotation and 3 translation entries".into()
            ));
        }
        let mut r = Mat3::from_flat(<[f64; 9]>::try_from(cam.extrinsics.r.as_slice()).unwrap());
        if !r.is_finite() {
            return Err(bad("non-finite rotation".into()));
        }
        let err = r.orthonormality_error().max((r.det() - 1.0).abs());
        if err > 1e-6 {
            return Err(bad(format!(
                "rotation deviates from orthonormal by {err:.3e}"
            )));
        }
        if !r.is_rotation(1e-9) {
            log::warn!(
                "camera {}: rotation off by {err:.3e}, re-orthonormalizing",
                cam.view_id
            );
            r = polar_orthonormalize(r);
        }
        let t = Vec3::new(
            cam.extrinsics.t[0],
            cam.extrinsics.t[1],
            cam.extrinsics.t[2],
        );
        let ext = Extrinsics::new(r, t).map_err(|e| bad(e.to_string()))?;
        cams.push(CameraModel {
            view_id: cam.view_id,
            intrinsics: intr,
            distortion: dist,
            extrinsics: ext,
        });
    }
    Ok(cams)
}

/// Nearest rotation in the Frobenius sense: R' = U diag(1, 1, det(UV^T)) V^T.
fn polar_orthonormalize(r: Mat3) -> Mat3 {
    let m = Matrix3::from_row_slice(&r.to_flat());
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let d = (u * v_t).determinant();
    let s = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, d.signum()));
    let fixed = u * s * v_t;
    Mat3::from_rows(
        [fixed[(0, 0)], fixed[(0, 1)], fixed[(0, 2)]],
        [fixed[(1, 0)], fixed[(1, 1)], fixed[(1, 2)]],
        [fixed[(2, 0)], fixed[(2, 1)], fixed[(2, 2)]],
    )
}

pub fn read_camera_file(path: &Path) -> Result<Vec<CameraModel>> {
    parse_camera_file(&std::fs::read(path)?)
}

pub fn write_camera_file(path: &Path, cams: &[CameraModel]) -> Result<()> {
    let raw = RawCameraFile {
        cameras: cams
            .iter()
            .map(|c| RawCamera {
                view_id: c.view_id.clone(),
                intrinsics: RawIntrinsics {
                    fx: c.intrinsics.fx,
                    fy: c.intrinsics.fy,
                    cx: c.intrinsics.cx,
                    cy: c.intrinsics.cy,
                    width: c.intrinsics.width,
                    height: c.intrinsics.height,
                },
                distortion: RawDistortion {
                    k1: c.distortion.k1,
                    k2: c.distortion.k2,
                    k3: c.distortion.k3,
                    k4: c.distortion.k4,
                },
                extrinsics: RawExtrinsics {
                    r: c.extrinsics.r.to_flat().to_vec(),
                    t: vec![c.extrinsics.t.x, c.extrinsics.t.y, c.extrinsics.t.z],
                },
            })
            .collect(),
    };
    let json =
        serde_json::to_string_pretty(&raw).map_err(|e| Error::InvalidParams(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_rig, SimScenario};

    fn sample_record(frame_id: u64) -> PredictionRecord {
        PredictionRecord {
            video_id: "vid".into(),
            frame_id,
            view_id: "v0".into(),
            model_id: "m".into(),
            frame: FrameTag::World,
            joints: Some(vec![1.0, 2.0, 3.0, 4.5, -6.25, 0.1]),
            kp2d: None,
            rel3d: None,
            root_depth: None,
            warp_r: None,
        }
    }

    #[test]
    fn stream_roundtrip_preserves_order_and_bits() {
        let dir = std::env::temp_dir().join(format!("egohand-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("stream.jsonl");
        let records: Vec<PredictionRecord> = (0..20)
            .map(|i| {
                let mut r = sample_record(i);
                // values that exercise the shortest-roundtrip encoder
                r.joints = Some(vec![
                    0.1 + i as f64 * 1e-13,
                    std::f64::consts::PI,
                    -1.0 / 3.0,
                ]);
                r
            })
            .collect();
        write_prediction_stream(&path, &records).unwrap();
        let back = read_prediction_stream(&path).unwrap();
        assert_eq!(records.len(), back.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a, b);
            for (x, y) in a
                .joints
                .as_ref()
                .unwrap()
                .iter()
                .zip(b.joints.as_ref().unwrap())
            {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn empty_stream_is_ok() {
        assert!(parse_prediction_stream(b"").unwrap().is_empty());
        assert!(parse_prediction_stream(b"\n").unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let good = serde_json::to_string(&sample_record(0)).unwrap();
        let bytes = format!("{good}\nnot json\n");
        match parse_prediction_stream(bytes.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        // invalid UTF-8 on line 1
        match parse_prediction_stream(&[0xFF, 0xFE, b'\n']) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_keys_rejected() {
        let r = serde_json::to_string(&sample_record(1)).unwrap();
        let bytes = format!("{r}\n{r}\n");
        assert!(matches!(
            parse_prediction_stream(bytes.as_bytes()),
            Err(Error::InvariantViolation { .. })
        ));
    }

    #[test]
    fn record_invariants() {
        let mut r = sample_record(0);
        r.joints = Some(vec![1.0, 2.0]);
        assert!(r.validate().is_err());
        r.joints = None;
        assert!(r.validate().is_err()); // neither joints nor 2.5D
        r.kp2d = Some(vec![0.0, 0.0]);
        assert!(r.validate().is_err()); // incomplete 2.5D set
        r.rel3d = Some(vec![0.0, 0.0, 0.0]);
        r.root_depth = Some(100.0);
        assert!(r.validate().is_err()); // raw fields on a world-frame record
        r.frame = FrameTag::Camera;
        assert!(r.validate().is_ok());
    }

    #[test]
    fn camera_file_roundtrip_and_validation() {
        let rig = generate_rig(&SimScenario::default()).unwrap();
        let dir = std::env::temp_dir().join(format!("egohand-cam-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cameras.json");
        write_camera_file(&path, &rig).unwrap();
        let back = read_camera_file(&path).unwrap();
        assert_eq!(rig, back);
        std::fs::remove_dir_all(&dir).ok();

        assert!(parse_camera_file(b"{").is_err());
        assert!(parse_camera_file(b"{\"cameras\": 3}").is_err());

        // rotation slightly off orthonormal is repaired; badly off is rejected
        let mut json = serde_json::json!({
            "cameras": [{
                "view_id": "v0",
                "intrinsics": {"fx": 400.0, "fy": 400.0, "cx": 320.0, "cy": 240.0, "width": 640, "height": 480},
                "distortion": {"k1": 0.0, "k2": 0.0, "k3": 0.0, "k4": 0.0},
                "extrinsics": {"r": [1.0, 1e-7, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], "t": [0.0, 0.0, 0.0]}
            }]
        });
        let cams = parse_camera_file(json.to_string().as_bytes()).unwrap();
        assert!(cams[0].extrinsics.r.is_rotation(1e-9));

        json["cameras"][0]["extrinsics"]["r"][1] = serde_json::json!(0.5);
        assert!(parse_camera_file(json.to_string().as_bytes()).is_err());
    }

    #[test]
    fn lifting_record_through_skeleton() {
        use crate::geometry::{to_camera, Frame};
        let rig = generate_rig(&SimScenario::default()).unwrap();
        let cam = &rig[0];
        let gt = crate::sim::generate_trajectory(&SimScenario {
            n_frames: 1,
            ..SimScenario::default()
        })
        .unwrap();
        let cam_sk = to_camera(&gt[0], &cam.extrinsics, &cam.view_id).unwrap();
        let pred = crate::lift::decompose(&cam_sk, &cam.intrinsics, 0, None).unwrap();
        let rec = PredictionRecord {
            video_id: "vid".into(),
            frame_id: 0,
            view_id: cam.view_id.clone(),
            model_id: "m".into(),
            frame: FrameTag::Camera,
            joints: None,
            kp2d: Some(pred.kp2d.iter().flat_map(|p| [p.u, p.v]).collect()),
            rel3d: Some(pred.rel3d.iter().flat_map(|v| [v.x, v.y, v.z]).collect()),
            root_depth: Some(pred.root_depth),
            warp_r: None,
        };
        let s = rec.skeleton(Some(cam)).unwrap();
        assert_eq!(*s.frame(), Frame::Camera(cam.view_id.clone()));
        for (a, b) in s.joints().iter().zip(cam_sk.joints()) {
            assert!((*a - *b).norm() < 1e-9);
        }
        // 2.5D without a camera is an invariant violation
        assert!(matches!(
            rec.skeleton(None),
            Err(Error::InvariantViolation { .. })
        ));
    }
}
