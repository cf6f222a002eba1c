//! Camera preprocessing: fisheye undistortion, rectification maps, the
//! virtual-rotation perspective warp, and the per-video crop policy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_between, Intrinsics, Mat3, Pixel, Vec3};

/// Widest incidence angle the equidistant polynomial is required to invert,
/// radians (80 degrees). Monotonicity of the forward model is validated over
/// [0, theta_max] when cameras are loaded.
pub const DEFAULT_THETA_MAX: f64 = 1.396_263_401_595_464_6;

/// Equidistant fisheye distortion: theta_d = theta (1 + k1 t^2 + k2 t^4 + k3 t^6 + k4 t^8).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FisheyeDistortion {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

impl FisheyeDistortion {
    pub fn new(k1: f64, k2: f64, k3: f64, k4: f64) -> Self {
        FisheyeDistortion { k1, k2, k3, k4 }
    }

    /// Distorted angle for incidence angle `theta`.
    pub fn forward_theta(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        let t6 = t4 * t2;
        let t8 = t4 * t4;
        theta * (1.0 + self.k1 * t2 + self.k2 * t4 + self.k3 * t6 + self.k4 * t8)
    }

    fn forward_theta_derivative(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        let t6 = t4 * t2;
        let t8 = t4 * t4;
        1.0 + 3.0 * self.k1 * t2 + 5.0 * self.k2 * t4 + 7.0 * self.k3 * t6 + 9.0 * self.k4 * t8
    }

    /// Checks the forward model is finite and strictly increasing over
    /// [0, theta_max]. Sampled on a dense grid.
    pub fn validate_monotone(&self, theta_max: f64) -> Result<()> {
        for k in [self.k1, self.k2, self.k3, self.k4] {
            if !k.is_finite() {
                return Err(Error::InvalidParams(
                    "non-finite distortion coefficient".into(),
                ));
            }
        }
        if !(theta_max > 0.0 && theta_max.is_finite()) {
            return Err(Error::InvalidParams(format!("bad theta_max {theta_max}")));
        }
        const SAMPLES: usize = 2048;
        for i in 0..=SAMPLES {
            let theta = theta_max * i as f64 / SAMPLES as f64;
            if self.forward_theta_derivative(theta) <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "distortion polynomial not monotone at theta = {theta:.4} rad"
                )));
            }
        }
        Ok(())
    }
}

/// Applies the forward fisheye model to a normalized camera ray (x, y) =
/// (X/Z, Y/Z). Total function; on-axis rays pass through unchanged.
pub fn fisheye_distort(p: (f64, f64), dist: &FisheyeDistortion) -> (f64, f64) {
    let (x, y) = p;
    let r = (x * x + y * y).sqrt();
    if r < 1e-12 {
        return (x, y);
    }
    let theta = r.atan();
    let theta_d = dist.forward_theta(theta);
    let s = theta_d / r;
    (s * x, s * y)
}

/// Inverts [`fisheye_distort`] by Newton iteration on the radial profile
/// (init theta = theta_d, tolerance 1e-10, at most 50 iterations).
pub fn fisheye_undistort(p_d: (f64, f64), dist: &FisheyeDistortion) -> Result<(f64, f64)> {
    let (xd, yd) = p_d;
    let r_d = (xd * xd + yd * yd).sqrt();
    if r_d < 1e-12 {
        return Ok((xd, yd));
    }
    let max_rd = dist.forward_theta(DEFAULT_THETA_MAX);
    if r_d > max_rd * (1.0 + 1e-9) {
        return Err(Error::OutOfModelRange {
            radius: r_d,
            max: max_rd,
        });
    }
    const TOL: f64 = 1e-10;
    const MAX_ITERS: usize = 50;
    let mut theta = r_d.min(DEFAULT_THETA_MAX);
    let mut residual = dist.forward_theta(theta) - r_d;
    for _ in 0..MAX_ITERS {
        if residual.abs() <= TOL {
            // one polishing step; quadratic convergence takes the residual
            // far below the stopping tolerance, which matters where tan()
            // amplifies the angle error
            let deriv = dist.forward_theta_derivative(theta);
            if deriv > 0.0 {
                theta = (theta - residual / deriv).clamp(0.0, DEFAULT_THETA_MAX * 1.0001);
            }
            let s = theta.tan() / r_d;
            return Ok((s * xd, s * yd));
        }
        let deriv = dist.forward_theta_derivative(theta);
        if deriv <= 0.0 {
            break;
        }
        theta = (theta - residual / deriv).clamp(0.0, DEFAULT_THETA_MAX * 1.0001);
        residual = dist.forward_theta(theta) - r_d;
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERS,
        residual: residual.abs(),
    })
}

/// Per-destination-pixel source lookup produced by [`build_rectify_map`].
///
/// Binary layout (little-endian): magic `HFMAP1`, u32 width, u32 height,
/// then width*height row-major (x, y) f64 pairs, then width*height u8 mask
/// (1 = source position valid).
#[derive(Debug, Clone, PartialEq)]
pub struct RectifyMap {
    width: u32,
    height: u32,
    source_xy: Vec<(f64, f64)>,
    mask: Vec<u8>,
}

const MAP_MAGIC: &[u8; 6] = b"HFMAP1";

impl RectifyMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn entry(&self, u: u32, v: u32) -> (f64, f64) {
        self.source_xy[(v * self.width + u) as usize]
    }

    pub fn is_valid(&self, u: u32, v: u32) -> bool {
        self.mask[(v * self.width + u) as usize] == 1
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.source_xy.len();
        let mut out = Vec::with_capacity(6 + 8 + n * 17);
        out.extend_from_slice(MAP_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for &(x, y) in &self.source_xy {
            out.extend_from_slice(&x.to_le_bytes());
            out.extend_from_slice(&y.to_le_bytes());
        }
        out.extend_from_slice(&self.mask);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: &str| Error::Parse {
            line: 0,
            message: msg.to_string(),
        };
        if bytes.len() < 14 {
            return Err(fail("truncated header"));
        }
        if &bytes[..6] != MAP_MAGIC {
            return Err(fail("bad magic"));
        }
        let width = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
        let n = width as u64 * height as u64;
        let expected = 14u64 + n * 16 + n;
        if bytes.len() as u64 != expected {
            return Err(fail(&format!(
                "payload size {} does not match {}x{} map ({} expected)",
                bytes.len(),
                width,
                height,
                expected
            )));
        }
        let n = n as usize;
        let mut source_xy = Vec::with_capacity(n);
        let mut off = 14;
        for _ in 0..n {
            let x = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            let y = f64::from_le_bytes(bytes[off + 8..off + 16].try_into().unwrap());
            source_xy.push((x, y));
            off += 16;
        }
        let mask = bytes[off..].to_vec();
        if mask.iter().any(|&m| m > 1) {
            return Err(fail("mask bytes must be 0 or 1"));
        }
        Ok(RectifyMap {
            width,
            height,
            source_xy,
            mask,
        })
    }

    pub fn write_to(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(path: &std::path::Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Builds the undistortion lookup: for every destination (pinhole) pixel,
/// trace its ray, push it through the source fisheye model and record where
/// it lands on the source pixel grid. Out-of-bounds hits are masked.
pub fn build_rectify_map(
    src_intr: &Intrinsics,
    src_dist: &FisheyeDistortion,
    dst_intr: &Intrinsics,
) -> RectifyMap {
    build_map_with(src_intr, dst_intr, |ray| fisheye_distort(ray, src_dist))
}

/// Map construction over an arbitrary forward model; the public entry point
/// fixes it to the fisheye polynomial.
pub(crate) fn build_map_with(
    src_intr: &Intrinsics,
    dst_intr: &Intrinsics,
    forward: impl Fn((f64, f64)) -> (f64, f64),
) -> RectifyMap {
    let (w, h) = (dst_intr.width, dst_intr.height);
    let mut source_xy = Vec::with_capacity((w * h) as usize);
    let mut mask = Vec::with_capacity((w * h) as usize);
    let max_x = (src_intr.width - 1) as f64;
    let max_y = (src_intr.height - 1) as f64;
    for v in 0..h {
        for u in 0..w {
            let ray = (
                (u as f64 - dst_intr.cx) / dst_intr.fx,
                (v as f64 - dst_intr.cy) / dst_intr.fy,
            );
            let (xd, yd) = forward(ray);
            let sx = src_intr.fx * xd + src_intr.cx;
            let sy = src_intr.fy * yd + src_intr.cy;
            let inside = sx >= 0.0 && sx <= max_x && sy >= 0.0 && sy <= max_y;
            source_xy.push((sx, sy));
            mask.push(u8::from(inside));
        }
    }
    RectifyMap {
        width: w,
        height: h,
        source_xy,
        mask,
    }
}

/// Dense real-valued image, row-major, channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: u32, height: u32, channels: u32, data: Vec<f64>) -> Result<Self> {
        if data.len() as u64 != width as u64 * height as u64 * channels as u64 {
            return Err(Error::DimensionMismatch(format!(
                "image data length {} vs {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: u32, height: u32, channels: u32) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0.0; (width as usize) * (height as usize) * (channels as usize)],
        }
    }

    pub fn get(&self, x: u32, y: u32, c: u32) -> f64 {
        self.data[((y * self.width + x) * self.channels + c) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, c: u32, v: f64) {
        self.data[((y * self.width + x) * self.channels + c) as usize] = v;
    }
}

/// Resamples `img` through the map with bilinear interpolation. Masked
/// destination pixels are written as 0. Valid map entries must land inside
/// the image.
pub fn remap_bilinear(img: &Image, map: &RectifyMap) -> Result<Image> {
    let mut out = Image::zeros(map.width, map.height, img.channels);
    for v in 0..map.height {
        for u in 0..map.width {
            if !map.is_valid(u, v) {
                continue;
            }
            let (sx, sy) = map.entry(u, v);
            if sx < 0.0 || sx > (img.width - 1) as f64 || sy < 0.0 || sy > (img.height - 1) as f64 {
                return Err(Error::DimensionMismatch(format!(
                    "map entry ({sx}, {sy}) outside {}x{} source image",
                    img.width, img.height
                )));
            }
            let x0 = sx.floor() as u32;
            let y0 = sy.floor() as u32;
            let x1 = (x0 + 1).min(img.width - 1);
            let y1 = (y0 + 1).min(img.height - 1);
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            for c in 0..img.channels {
                let top = img.get(x0, y0, c) * (1.0 - fx) + img.get(x1, y0, c) * fx;
                let bottom = img.get(x0, y1, c) * (1.0 - fx) + img.get(x1, y1, c) * fx;
                out.set(u, v, c, top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Ok(out)
}

/// Virtual camera rotation that re-centers a hand: the rotation R turning the
/// bbox-center ray onto the principal axis, and the induced pixel homography
/// H = K R K^-1 (output intrinsics kept equal to the input).
pub fn virtual_rotation_warp(intr: &Intrinsics, bbox_center: Pixel) -> Result<(Mat3, Mat3)> {
    if !intr.contains(bbox_center) {
        return Err(Error::InvalidParams(format!(
            "bbox center ({}, {}) outside {}x{} image",
            bbox_center.u, bbox_center.v, intr.width, intr.height
        )));
    }
    let d = Vec3::new(
        (bbox_center.u - intr.cx) / intr.fx,
        (bbox_center.v - intr.cy) / intr.fy,
        1.0,
    )
    .normalized();
    let r = rotation_between(d, Vec3::new(0.0, 0.0, 1.0));
    let k = Mat3::from_rows(
        [intr.fx, 0.0, intr.cx],
        [0.0, intr.fy, intr.cy],
        [0.0, 0.0, 1.0],
    );
    let k_inv = Mat3::from_rows(
        [1.0 / intr.fx, 0.0, -intr.cx / intr.fx],
        [0.0, 1.0 / intr.fy, -intr.cy / intr.fy],
        [0.0, 0.0, 1.0],
    );
    let h = k.mul_mat(r).mul_mat(k_inv);
    Ok((r, h))
}

/// Hand bounding box, center + size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::InvalidParams(format!(
                "bbox size {w}x{h} must be positive"
            )));
        }
        Ok(BBox { cx, cy, w, h })
    }

    pub fn diag(&self) -> f64 {
        (self.w * self.w + self.h * self.h).sqrt()
    }
}

/// Per-video crop-scale policy: videos with small hands or frequent
/// hand-over-hand overlap keep the tight crop, everything else is enlarged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropPolicy {
    pub expand_scale: f64,
    pub no_expand_scale: f64,
    pub small_hand_diag_px: f64,
    pub overlap_frac_threshold: f64,
}

impl Default for CropPolicy {
    fn default() -> Self {
        CropPolicy {
            expand_scale: 1.3,
            no_expand_scale: 1.0,
            small_hand_diag_px: 80.0,
            overlap_frac_threshold: 0.2,
        }
    }
}

impl CropPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.expand_scale >= self.no_expand_scale && self.no_expand_scale >= 1.0) {
            return Err(Error::InvalidParams(format!(
                "crop scales must satisfy expand >= no_expand >= 1 (got {} / {})",
                self.expand_scale, self.no_expand_scale
            )));
        }
        Ok(())
    }
}

/// Per-video statistics the crop policy keys on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoStats {
    pub median_bbox_diag_px: f64,
    /// Fraction of frames where the two hand boxes overlap, in [0, 1].
    pub overlap_fraction: f64,
}

/// Crop scale for one video: tight when hands are small or overlap a lot,
/// enlarged otherwise.
pub fn crop_scale_for_video(stats: &VideoStats, policy: &CropPolicy) -> f64 {
    if stats.median_bbox_diag_px < policy.small_hand_diag_px
        || stats.overlap_fraction > policy.overlap_frac_threshold
    {
        policy.no_expand_scale
    } else {
        policy.expand_scale
    }
}

/// Scales a box about its center, then clips it to the image. The center is
/// preserved whenever the scaled box fits.
pub fn enlarge_bbox(b: &BBox, scale: f64, width: u32, height: u32) -> BBox {
    debug_assert!(scale >= 1.0);
    let hw = b.w * scale * 0.5;
    let hh = b.h * scale * 0.5;
    let x0 = (b.cx - hw).max(0.0);
    let x1 = (b.cx + hw).min(width as f64);
    let y0 = (b.cy - hh).max(0.0);
    let y1 = (b.cy + hh).min(height as f64);
    BBox {
        cx: 0.5 * (x0 + x1),
        cy: 0.5 * (y0 + y1),
        w: x1 - x0,
        h: y1 - y0,
    }
}
