//! Projective georectification of a single photo against ground control.
//!
//! A homography maps image pixels onto world easting/northing. GCP elevations
//! are ignored by the fit: a single projective map can only model a plane.

use std::collections::HashSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::geometry::{fit_homography, GridGeometry, Homography, Point2, Point3};
use crate::image::RgbaImage;

/// Default output cell size in meters.
pub const DEFAULT_RECTIFY_CELL: f64 = 0.05;

/// Keys cubic-convolution parameter.
pub const KEYS_A: f64 = -0.5;

/// Output value for cells without source coverage.
pub const NODATA_RGBA: [u8; 4] = [0, 0, 0, 0];

/// A surveyed ground control point, optionally observed in the photo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gcp {
    pub id: String,
    pub world: Point3,
    pub image: Option<Point2>,
}

impl Gcp {
    pub fn new(id: impl Into<String>, world: Point3, image: Option<Point2>) -> Self {
        Self {
            id: id.into(),
            world,
            image,
        }
    }
}

/// Checks id uniqueness and finiteness of a GCP set.
pub fn validate_gcps(gcps: &[Gcp]) -> Result<()> {
    let mut seen = HashSet::new();
    for g in gcps {
        if !seen.insert(g.id.as_str()) {
            return Err(Error::DuplicateId(g.id.clone()));
        }
        if !g.world.is_finite() || g.image.is_some_and(|p| !p.is_finite()) {
            return Err(Error::NonFinite);
        }
    }
    Ok(())
}

fn observed(gcps: &[Gcp]) -> impl Iterator<Item = (&Gcp, Point2)> {
    gcps.iter().filter_map(|g| g.image.map(|p| (g, p)))
}

/// Least-squares homography from image pixels to world xy over every GCP
/// that has an image observation.
pub fn fit_ground_homography(gcps: &[Gcp]) -> Result<Homography> {
    validate_gcps(gcps)?;
    let (src, dst): (Vec<Point2>, Vec<Point2>) = observed(gcps).map(|(g, p)| (p, g.world.xy())).unzip();
    if src.len() < 4 {
        return Err(Error::InsufficientGcps(src.len()));
    }
    fit_homography(&src, &dst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResidual {
    pub id: String,
    pub dx: f64,
    pub dy: f64,
}

/// Planimetric accuracy of a fitted map at a set of GCPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub rmse_x: f64,
    pub rmse_y: f64,
    pub per_point_residuals: Vec<PointResidual>,
}

/// Root-mean-square of mapped-minus-surveyed coordinates, per axis.
pub fn rmse_xy(h: &Homography, gcps: &[Gcp]) -> Result<RmseReport> {
    let mut residuals = Vec::new();
    for (g, p) in observed(gcps) {
        let m = h.apply(p)?;
        residuals.push(PointResidual {
            id: g.id.clone(),
            dx: m.x - g.world.x,
            dy: m.y - g.world.y,
        });
    }
    if residuals.is_empty() {
        return Err(Error::EmptyGcpSet);
    }
    let n = residuals.len() as f64;
    let sx: f64 = residuals.iter().map(|r| r.dx * r.dx).sum();
    let sy: f64 = residuals.iter().map(|r| r.dy * r.dy).sum();
    Ok(RmseReport {
        rmse_x: (sx / n).sqrt(),
        rmse_y: (sy / n).sqrt(),
        per_point_residuals: residuals,
    })
}

/// Keys cubic-convolution weight at offset `t`.
pub fn keys_weight(t: f64) -> f64 {
    let a = KEYS_A;
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Bicubic sample at fractional pixel `(x, y)`; pixel centers sit at integer
/// coordinates. Returns `None` when a tap with nonzero weight falls outside
/// the image or on a source pixel whose alpha is 0.
pub fn bicubic_sample(img: &RgbaImage, x: f64, y: f64) -> Option<[u8; 4]> {
    if !(x.is_finite() && y.is_finite()) {
        return None;
    }
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let wx = [keys_weight(fx + 1.0), keys_weight(fx), keys_weight(fx - 1.0), keys_weight(fx - 2.0)];
    let wy = [keys_weight(fy + 1.0), keys_weight(fy), keys_weight(fy - 1.0), keys_weight(fy - 2.0)];
    let (w, h) = (img.width() as f64, img.height() as f64);
    let mut acc = [0.0f64; 3];
    for (j, &wyj) in wy.iter().enumerate() {
        if wyj == 0.0 {
            continue;
        }
        let py = y0 + j as f64 - 1.0;
        if py < 0.0 || py >= h {
            return None;
        }
        for (i, &wxi) in wx.iter().enumerate() {
            if wxi == 0.0 {
                continue;
            }
            let px = x0 + i as f64 - 1.0;
            if px < 0.0 || px >= w {
                return None;
            }
            let s = img.get(px as usize, py as usize);
            if s[3] == 0 {
                return None;
            }
            let wt = wxi * wyj;
            for c in 0..3 {
                acc[c] += wt * s[c] as f64;
            }
        }
    }
    let q = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    Some([q(acc[0]), q(acc[1]), q(acc[2]), 255])
}

/// A world-aligned RGBA raster. Cells with alpha 0 are NODATA.
#[derive(Debug, Clone, PartialEq)]
pub struct RectifiedRaster {
    pub geometry: GridGeometry,
    pub bands: Vec<[u8; 4]>,
}

impl RectifiedRaster {
    pub fn get(&self, col: usize, row: usize) -> [u8; 4] {
        self.bands[row * self.geometry.n_cols + col]
    }

    pub fn nodata_count(&self) -> usize {
        self.bands.iter().filter(|b| b[3] == 0).count()
    }

    pub fn to_image(&self) -> RgbaImage {
        RgbaImage::new(self.geometry.n_cols, self.geometry.n_rows, self.bands.clone())
            .expect("raster dimensions match its geometry")
    }
}

/// Inverse-maps every cell center of `geom` into the photo through `h⁻¹`
/// (`h` maps pixels to world) and resamples bicubically.
pub fn warp_to_grid(img: &RgbaImage, h: &Homography, geom: &GridGeometry) -> Result<RectifiedRaster> {
    // Invert in a frame centered on the grid origin; with projected
    // coordinates the raw inverse loses several digits.
    let (ox, oy) = (geom.origin_x, geom.origin_y);
    let inv = Homography::translation(-ox, -oy).compose(h)?.inverse()?;
    let m = inv.matrix();
    // World points on the far side of the horizon project with the opposite
    // sign of w and would otherwise land back inside the image mirrored.
    let center = h.apply(Point2::new(img.width() as f64 / 2.0, img.height() as f64 / 2.0))?;
    let w_ref = (m * Vector3::new(center.x - ox, center.y - oy, 1.0)).z.signum();
    let mut bands = Vec::with_capacity(geom.len());
    for row in 0..geom.n_rows {
        for col in 0..geom.n_cols {
            let c = geom.cell_center(col, row);
            let v = m * Vector3::new(c.x - ox, c.y - oy, 1.0);
            let px = if v.z * w_ref > 1e-12 {
                bicubic_sample(img, v.x / v.z, v.y / v.z)
            } else {
                None
            };
            bands.push(px.unwrap_or(NODATA_RGBA));
        }
    }
    Ok(RectifiedRaster { geometry: *geom, bands })
}

/// Resamples a raw photo into the ideal pinhole image with the same K.
/// Output pixels whose source lies outside the photo or the model range
/// get alpha 0.
pub fn undistort_image(img: &RgbaImage, intr: &CameraIntrinsics) -> Result<RgbaImage> {
    intr.validate()?;
    if !intr.has_distortion() {
        return Ok(img.clone());
    }
    RgbaImage::from_fn(img.width(), img.height(), |u, v| {
        intr.distort_pixel(Point2::new(u as f64, v as f64))
            .ok()
            .and_then(|p| bicubic_sample(img, p.x, p.y))
            .unwrap_or(NODATA_RGBA)
    })
}

/// Maps the GCP image observations from raw to undistorted pixel coordinates.
pub fn undistort_gcps(gcps: &[Gcp], intr: &CameraIntrinsics) -> Result<Vec<Gcp>> {
    gcps.iter()
        .map(|g| {
            Ok(Gcp {
                image: g.image.map(|p| intr.undistort_pixel(p)).transpose()?,
                ..g.clone()
            })
        })
        .collect()
}

/// Axis-aligned world box of the observed GCPs.
pub fn gcp_extent(gcps: &[Gcp]) -> Option<(Point2, Point2)> {
    let mut it = observed(gcps).map(|(g, _)| g.world.xy());
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), p| {
        (
            Point2::new(lo.x.min(p.x), lo.y.min(p.y)),
            Point2::new(hi.x.max(p.x), hi.y.max(p.y)),
        )
    }))
}
