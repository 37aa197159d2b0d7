//! Pinhole camera with Brown-Conrady lens distortion, and rectified stereo depth.
//!
//! Distortion acts on normalized image coordinates `(x, y) = (X/Z, Y/Z)`:
//!
//! ```text
//! r² = x² + y²
//! x_d = x·(1 + k1·r² + k2·r⁴ + k3·r⁶) + 2·p1·x·y + p2·(r² + 2x²)
//! y_d = y·(1 + k1·r² + k2·r⁴ + k3·r⁶) + p1·(r² + 2y²) + 2·p2·x·y
//! ```
//!
//! and pixels are `u = fx·x_d + cx`, `v = fy·y_d + cy` (zero skew). The same
//! convention is used by calibration, undistortion and back-projection.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Point3};

/// Largest r² at which the distortion polynomial is evaluated.
pub const MAX_MODEL_R2: f64 = 4.0;
/// Smallest camera-frame depth accepted by [`CameraIntrinsics::project`].
pub const MIN_DEPTH: f64 = 1e-9;

const UNDISTORT_MAX_ITERS: usize = 50;
const UNDISTORT_STEP_TOL: f64 = 1e-10;

/// Focal lengths, principal point and distortion coefficients of one camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
    pub width: u32,
    pub height: u32,
}

/// Radial and tangential coefficients, in the order `[k1, k2, k3, p1, p2]`.
pub type Distortion = [f64; 5];

impl CameraIntrinsics {
    /// Distortion-free camera.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        Self::with_distortion(fx, fy, cx, cy, [0.0; 5], width, height)
    }

    pub fn with_distortion(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        distortion: Distortion,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let [k1, k2, k3, p1, p2] = distortion;
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            k1,
            k2,
            k3,
            p1,
            p2,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.fx, self.fy, self.cx, self.cy, self.k1, self.k2, self.k3, self.p1, self.p2,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidIntrinsics("non-finite parameter".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics("image size must be positive".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn distortion(&self) -> Distortion {
        [self.k1, self.k2, self.k3, self.p1, self.p2]
    }

    pub fn has_distortion(&self) -> bool {
        self.distortion().iter().any(|&c| c != 0.0)
    }

    /// Copy with every distortion coefficient set to zero.
    pub fn without_distortion(&self) -> Self {
        Self {
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            p1: 0.0,
            p2: 0.0,
            ..*self
        }
    }

    /// The upper-triangular calibration matrix K (zero skew).
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn distort_normalized(&self, p: Point2) -> Result<Point2> {
        let r2 = p.x * p.x + p.y * p.y;
        if !(r2 <= MAX_MODEL_R2) {
            return Err(Error::OutOfModelRange(r2));
        }
        Ok(distort(&self.distortion(), p))
    }

    /// Inverts [`distort_normalized`](Self::distort_normalized) by fixed-point
    /// iteration seeded at the distorted point.
    pub fn undistort_normalized(&self, pd: Point2) -> Result<Point2> {
        if !pd.is_finite() {
            return Err(Error::NonFinite);
        }
        if !self.has_distortion() {
            return Ok(pd);
        }
        let [k1, k2, k3, p1, p2] = self.distortion();
        let (mut x, mut y) = (pd.x, pd.y);
        for _ in 0..UNDISTORT_MAX_ITERS {
            let r2 = x * x + y * y;
            let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
            let dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
            let dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
            // Relaxation from the radial slope keeps the iteration contracting
            // near the edge of the model disk, where plain substitution oscillates.
            let slope = 2.0 * r2 * (k1 + r2 * (2.0 * k2 + 3.0 * r2 * k3));
            let alpha = (radial / (radial + slope)).clamp(0.05, 2.0);
            let alpha = if alpha.is_finite() { alpha } else { 1.0 };
            let nx = x + alpha * ((pd.x - dx) / radial - x);
            let ny = y + alpha * ((pd.y - dy) / radial - y);
            if !(nx.is_finite() && ny.is_finite()) {
                break;
            }
            let step = (nx - x).hypot(ny - y);
            x = nx;
            y = ny;
            if step < UNDISTORT_STEP_TOL {
                return Ok(Point2::new(x, y));
            }
        }
        Err(Error::NonConvergence(UNDISTORT_MAX_ITERS))
    }

    /// Projects a camera-frame point to pixels.
    pub fn project(&self, p: Point3) -> Result<Point2> {
        if !(p.z > MIN_DEPTH) {
            return Err(Error::BehindCamera(p.z));
        }
        let d = self.distort_normalized(Point2::new(p.x / p.z, p.y / p.z))?;
        Ok(self.normalized_to_pixel(d))
    }

    pub fn normalized_to_pixel(&self, p: Point2) -> Point2 {
        Point2::new(self.fx * p.x + self.cx, self.fy * p.y + self.cy)
    }

    pub fn pixel_to_normalized(&self, p: Point2) -> Point2 {
        Point2::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy)
    }

    /// Maps a pixel of the raw (distorted) image to where an ideal pinhole
    /// camera with the same K would have imaged it.
    pub fn undistort_pixel(&self, p: Point2) -> Result<Point2> {
        let n = self.undistort_normalized(self.pixel_to_normalized(p))?;
        Ok(self.normalized_to_pixel(n))
    }

    /// Inverse of [`undistort_pixel`](Self::undistort_pixel).
    pub fn distort_pixel(&self, p: Point2) -> Result<Point2> {
        let d = self.distort_normalized(self.pixel_to_normalized(p))?;
        Ok(self.normalized_to_pixel(d))
    }

    /// Back-projects pixel `(u, v)` observed at depth `z` to a camera-frame point.
    pub fn pixel_depth_to_point(&self, u: f64, v: f64, z: f64) -> Result<Point3> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::NonPositiveDepth(z));
        }
        let n = self.undistort_normalized(self.pixel_to_normalized(Point2::new(u, v)))?;
        Ok(Point3::new(n.x * z, n.y * z, z))
    }
}

/// Applies the distortion polynomial without range checks.
pub(crate) fn distort(c: &Distortion, p: Point2) -> Point2 {
    let [k1, k2, k3, p1, p2] = *c;
    let (x, y) = (p.x, p.y);
    let r2 = x * x + y * y;
    let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
    Point2::new(
        x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
        y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y,
    )
}

/// A row-aligned stereo pair sharing one set of intrinsics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    pub intrinsics: CameraIntrinsics,
    /// Distance between the two projection centers, in meters.
    pub baseline: f64,
}

impl StereoRig {
    pub fn new(intrinsics: CameraIntrinsics, baseline: f64) -> Result<Self> {
        intrinsics.validate()?;
        if !(baseline.is_finite() && baseline > 0.0) {
            return Err(Error::InvalidBaseline(baseline));
        }
        Ok(Self { intrinsics, baseline })
    }

    /// `Z = fx · B / d`.
    pub fn disparity_to_depth(&self, disparity: f64) -> Result<f64> {
        if !(disparity > 0.0) || !disparity.is_finite() {
            return Err(Error::NonPositiveDisparity(disparity));
        }
        Ok(self.intrinsics.fx * self.baseline / disparity)
    }

    pub fn depth_to_disparity(&self, depth: f64) -> Result<f64> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(Error::NonPositiveDepth(depth));
        }
        Ok(self.intrinsics.fx * self.baseline / depth)
    }
}
