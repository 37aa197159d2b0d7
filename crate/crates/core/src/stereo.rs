//! Disparity estimation on a rectified pair and point-cloud assembly.
//!
//! Matching uses census signatures compared by Hamming distance, summed over
//! a square window, with winner-take-all selection, a uniqueness test, a
//! left-right consistency check and parabolic subpixel refinement. The left
//! image is the reference: a left pixel at column `x` with disparity `d`
//! matches the right pixel at column `x − d`.

use crate::camera::StereoRig;
use crate::cloud::{CloudPoint, PointCloud};
use crate::error::{Error, Result};
pub use crate::image::{GrayImage, RgbaImage};

/// Marker for pixels without a disparity. Never a legal disparity value.
pub const INVALID_DISPARITY: f64 = -1.0;

/// Default depth cut-off for point clouds, in meters.
pub const DEFAULT_Z_MAX: f64 = 20.0;

/// Per-pixel census signatures.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusImage {
    width: usize,
    height: usize,
    window: usize,
    bits: Vec<u128>,
    valid: Vec<bool>,
}

impl CensusImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of bits in each signature: `window² − 1`.
    pub fn pattern_len(&self) -> usize {
        self.window * self.window - 1
    }

    /// Signature at `(x, y)`, or `None` on the border band.
    pub fn get(&self, x: usize, y: usize) -> Option<u128> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.bits[i])
    }
}

fn check_window(window: usize, width: usize, height: usize) -> Result<()> {
    if window > 9 {
        return Err(Error::WindowTooLarge {
            window,
            width,
            height,
        });
    }
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidWindow(window));
    }
    if width <= window || height <= window {
        return Err(Error::WindowTooLarge {
            window,
            width,
            height,
        });
    }
    Ok(())
}

/// Census transform: bit `k` is set when the `k`-th neighbor (row-major over
/// the window, center skipped) is darker than the center pixel.
pub fn census_transform(img: &GrayImage, window: usize) -> Result<CensusImage> {
    let (w, h) = (img.width(), img.height());
    check_window(window, w, h)?;
    let r = window / 2;
    let mut bits = vec![0u128; w * h];
    let mut valid = vec![false; w * h];
    for y in r..h - r {
        for x in r..w - r {
            let center = img.get(x, y);
            let mut pattern = 0u128;
            let mut k = 0;
            for dy in 0..window {
                for dx in 0..window {
                    if dy == r && dx == r {
                        continue;
                    }
                    if img.get(x + dx - r, y + dy - r) < center {
                        pattern |= 1u128 << k;
                    }
                    k += 1;
                }
            }
            bits[y * w + x] = pattern;
            valid[y * w + x] = true;
        }
    }
    Ok(CensusImage {
        width: w,
        height: h,
        window,
        bits,
        valid,
    })
}

/// Subpixel disparities of the reference (left) image.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    pub d_min: usize,
    pub d_max: usize,
    values: Vec<f64>,
}

impl DisparityMap {
    pub fn new(width: usize, height: usize, d_min: usize, d_max: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        let (lo, hi) = (d_min as f64, d_max as f64);
        if let Some(v) = values.iter().find(|&&v| v != INVALID_DISPARITY && !(lo..=hi).contains(&v)) {
            return Err(Error::DimensionMismatch(format!("disparity {v} outside [{lo}, {hi}]")));
        }
        Ok(Self {
            width,
            height,
            d_min,
            d_max,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Disparity at `(x, y)`, `None` when invalid.
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let v = self.values[y * self.width + x];
        (v != INVALID_DISPARITY).then_some(v)
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != INVALID_DISPARITY).count()
    }
}

/// Matching settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub d_min: usize,
    pub d_max: usize,
    /// Census and aggregation window edge (3, 5, 7 or 9).
    pub window: usize,
    /// Maximum left/right disparity disagreement, in pixels.
    pub lr_tolerance: f64,
    /// A match is kept only if its cost is below `(1 − uniqueness)` times the
    /// best cost at any disparity more than one step away.
    pub uniqueness: f64,
}

impl MatchParams {
    pub fn new(d_min: usize, d_max: usize, window: usize) -> Self {
        Self {
            d_min,
            d_max,
            window,
            lr_tolerance: 1.0,
            uniqueness: 0.0,
        }
    }
}

const NO_COST: u32 = u32::MAX;

/// Dense disparity for the left image.
pub fn match_disparity(left: &GrayImage, right: &GrayImage, params: &MatchParams) -> Result<DisparityMap> {
    let (w, h) = (left.width(), left.height());
    if right.width() != w || right.height() != h {
        return Err(Error::SizeMismatch(format!(
            "left {w}x{h}, right {}x{}",
            right.width(),
            right.height()
        )));
    }
    let (d_min, d_max) = (params.d_min, params.d_max);
    if d_min >= d_max || d_max >= w {
        return Err(Error::EmptyRange(d_min, d_max));
    }
    let lc = census_transform(left, params.window)?;
    let rc = census_transform(right, params.window)?;

    let r = params.window / 2;
    let a = r;
    let margin = r + a;
    let nd = d_max - d_min + 1;
    let mut values = vec![INVALID_DISPARITY; w * h];
    if h <= 2 * margin || w <= 2 * margin + d_min {
        return DisparityMap::new(w, h, d_min, d_max, values);
    }

    let hamming = |x: usize, y: usize, d: usize| -> u32 {
        let i = y * w + x;
        (lc.bits[i] ^ rc.bits[i - d]).count_ones()
    };
    // Column sums of Hamming costs over the aggregation rows, indexed [x * nd + k].
    let mut colsum = vec![0u32; w * nd];
    let col_range = |k: usize| (r + d_min + k)..(w - r);
    let add_row = |colsum: &mut [u32], y: usize, sign_add: bool| {
        for k in 0..nd {
            let d = d_min + k;
            for x in col_range(k) {
                let c = hamming(x, y, d);
                let slot = &mut colsum[x * nd + k];
                if sign_add {
                    *slot += c;
                } else {
                    *slot -= c;
                }
            }
        }
    };
    for y in (margin - a)..=(margin + a) {
        add_row(&mut colsum, y, true);
    }

    let mut cost = vec![NO_COST; w * nd];
    let mut right_best = vec![usize::MAX; w];
    for y in margin..h - margin {
        if y > margin {
            add_row(&mut colsum, y + a, true);
            add_row(&mut colsum, y - a - 1, false);
        }
        // Horizontal box sum: cost at x needs columns x−a..=x+a, all with x'−d ≥ r.
        cost.fill(NO_COST);
        for k in 0..nd {
            let d = d_min + k;
            let first = margin + d;
            if first + a >= w - r {
                continue;
            }
            let mut acc: u32 = (first - a..=first + a).map(|x| colsum[x * nd + k]).sum();
            cost[first * nd + k] = acc;
            for x in first + 1..w - margin {
                acc = acc + colsum[(x + a) * nd + k] - colsum[(x - a - 1) * nd + k];
                cost[x * nd + k] = acc;
            }
        }

        // Right-image winners: right pixel xr pairs with left pixel xr + d.
        right_best.fill(usize::MAX);
        for (xr, best_slot) in right_best.iter_mut().enumerate().take(w - margin).skip(margin) {
            let mut best = NO_COST;
            for k in 0..nd {
                let xl = xr + d_min + k;
                if xl >= w {
                    break;
                }
                let c = cost[xl * nd + k];
                if c < best {
                    best = c;
                    *best_slot = k;
                }
            }
        }

        for x in (margin + d_max)..(w - margin) {
            let row = &cost[x * nd..(x + 1) * nd];
            let (mut best_k, mut best) = (0, NO_COST);
            for (k, &c) in row.iter().enumerate() {
                if c < best {
                    best = c;
                    best_k = k;
                }
            }
            if best == NO_COST {
                continue;
            }
            let second = row
                .iter()
                .enumerate()
                .filter(|(k, _)| k.abs_diff(best_k) > 1)
                .map(|(_, &c)| c)
                .min()
                .unwrap_or(NO_COST);
            if second != NO_COST && best as f64 >= (1.0 - params.uniqueness) * second as f64 {
                continue;
            }
            let d = d_min + best_k;
            let xr = x - d;
            let rk = right_best[xr];
            if rk == usize::MAX || (rk as f64 - best_k as f64).abs() > params.lr_tolerance {
                continue;
            }
            let mut disparity = d as f64;
            if best_k > 0 && best_k + 1 < nd {
                let (cm, c0, cp) = (row[best_k - 1] as f64, best as f64, row[best_k + 1] as f64);
                let denom = cm - 2.0 * c0 + cp;
                if denom > 0.0 {
                    disparity += ((cm - cp) / (2.0 * denom)).clamp(-0.5, 0.5);
                }
            }
            values[y * w + x] = disparity;
        }
    }
    DisparityMap::new(w, h, d_min, d_max, values)
}

/// Triangulates every valid disparity into a camera-frame point colored from
/// the reference image. Points deeper than `z_max` are dropped.
pub fn cloud_from_disparity(
    disparity: &DisparityMap,
    rig: &StereoRig,
    color: &RgbaImage,
    z_max: f64,
) -> Result<PointCloud> {
    let cam = &rig.intrinsics;
    let (w, h) = (disparity.width(), disparity.height());
    if w != cam.width as usize || h != cam.height as usize {
        return Err(Error::DimensionMismatch(format!(
            "disparity map {w}x{h}, camera {}x{}",
            cam.width, cam.height
        )));
    }
    if color.width() != w || color.height() != h {
        return Err(Error::DimensionMismatch(format!(
            "disparity map {w}x{h}, color image {}x{}",
            color.width(),
            color.height()
        )));
    }
    if z_max.is_nan() {
        return Err(Error::NonFinite);
    }
    let mut points = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let Some(d) = disparity.get(x, y) else { continue };
            if d <= 0.0 {
                continue;
            }
            let z = rig.disparity_to_depth(d)?;
            if z > z_max {
                continue;
            }
            let position = cam.pixel_depth_to_point(x as f64, y as f64, z)?;
            points.push(CloudPoint {
                position,
                color: color.get(x, y),
            });
        }
    }
    PointCloud::new(points)
}
