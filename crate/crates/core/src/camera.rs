//! Full camera description: pinhole intrinsics, fisheye distortion and
//! world-to-camera extrinsics, keyed by view id.

use crate::geometry::{Extrinsics, Intrinsics};
use crate::preprocess::FisheyeDistortion;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub view_id: String,
    pub intrinsics: Intrinsics,
    pub distortion: FisheyeDistortion,
    pub extrinsics: Extrinsics,
}
