//! Offline Savitzky-Golay smoothing of fused trajectories, applied per video
//! and per coordinate series.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Skeleton, Vec3};

/// Filter parameters: odd window length and polynomial order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SavGolParams {
    pub window: usize,
    pub polyorder: usize,
}

impl Default for SavGolParams {
    fn default() -> Self {
        SavGolParams {
            window: 9,
            polyorder: 2,
        }
    }
}

impl SavGolParams {
    pub fn new(window: usize, polyorder: usize) -> Result<Self> {
        let p = SavGolParams { window, polyorder };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "window {} must be an odd integer >= 3",
                self.window
            )));
        }
        if self.polyorder >= self.window {
            return Err(Error::InvalidParams(format!(
                "polyorder {} must be < window {}",
                self.polyorder, self.window
            )));
        }
        Ok(())
    }

    pub fn half(&self) -> usize {
        (self.window - 1) / 2
    }
}

/// Central smoothing weights: the value at offset 0 of the least-squares
/// polynomial fit over offsets -h..h, i.e. row 0 of the pseudoinverse of the
/// Vandermonde system. Offsets are scaled by 1/h for conditioning, which
/// leaves the weights unchanged.
pub fn savgol_coeffs(p: &SavGolParams) -> Result<Vec<f64>> {
    p.validate()?;
    let h = p.half() as f64;
    let cols = p.polyorder + 1;
    let a = DMatrix::from_fn(p.window, cols, |i, c| ((i as f64 - h) / h).powi(c as i32));
    let pinv = a
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::InvalidParams(format!("pseudoinverse failed: {e}")))?;
    Ok(pinv.row(0).iter().copied().collect())
}

/// Smooths one series. Boundaries use mirror padding that excludes the edge
/// sample (x[-i] = x[i]); series shorter than the window fall back to a
/// single polynomial fit of degree min(polyorder, N-1) over the whole series.
pub fn smooth_series(x: &[f64], p: &SavGolParams) -> Result<Vec<f64>> {
    p.validate()?;
    let n = x.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n < p.window {
        return whole_series_fit(x, p.polyorder.min(n - 1));
    }
    let w = savgol_coeffs(p)?;
    let h = p.half() as isize;
    let n_i = n as isize;
    let mut out = Vec::with_capacity(n);
    for t in 0..n_i {
        let mut acc = 0.0;
        for (k, &wk) in w.iter().enumerate() {
            let mut idx = t + k as isize - h;
            if idx < 0 {
                idx = -idx;
            }
            if idx >= n_i {
                idx = 2 * (n_i - 1) - idx;
            }
            acc += wk * x[idx as usize];
        }
        out.push(acc);
    }
    Ok(out)
}

/// Least-squares polynomial of degree `deg` evaluated back at every sample.
fn whole_series_fit(x: &[f64], deg: usize) -> Result<Vec<f64>> {
    let n = x.len();
    // centered and scaled abscissa for conditioning
    let mid = (n as f64 - 1.0) / 2.0;
    let scale = if n > 1 { mid.max(1.0) } else { 1.0 };
    let a = DMatrix::from_fn(n, deg + 1, |i, c| ((i as f64 - mid) / scale).powi(c as i32));
    let pinv = a
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::InvalidParams(format!("pseudoinverse failed: {e}")))?;
    let xv = DMatrix::from_column_slice(n, 1, x);
    let coef = pinv * &xv;
    let fitted = a * coef;
    Ok(fitted.column(0).iter().copied().collect())
}

/// Applies [`smooth_series`] independently to each of the 3J coordinate
/// series of a skeleton sequence.
pub fn smooth_skeleton_sequence(seq: &[Skeleton], p: &SavGolParams) -> Result<Vec<Skeleton>> {
    p.validate()?;
    let Some(first) = seq.first() else {
        return Ok(Vec::new());
    };
    for s in seq {
        s.expect_same_joint_count(first)?;
        s.expect_frame(first.frame())?;
    }
    let j = first.joint_count();
    let n = seq.len();
    let mut smoothed_axes: Vec<Vec<f64>> = Vec::with_capacity(3 * j);
    for joint in 0..j {
        for axis in 0..3 {
            let series: Vec<f64> = seq
                .iter()
                .map(|s| {
                    let v = s.joints()[joint];
                    match axis {
                        0 => v.x,
                        1 => v.y,
                        _ => v.z,
                    }
                })
                .collect();
            smoothed_axes.push(smooth_series(&series, p)?);
        }
    }
    let mut out = Vec::with_capacity(n);
    for f in 0..n {
        let joints: Vec<Vec3> = (0..j)
            .map(|joint| {
                Vec3::new(
                    smoothed_axes[3 * joint][f],
                    smoothed_axes[3 * joint + 1][f],
                    smoothed_axes[3 * joint + 2][f],
                )
            })
            .collect();
        out.push(first.with_joints(joints).retagged(seq[f].frame().clone()));
    }
    Ok(out)
}
