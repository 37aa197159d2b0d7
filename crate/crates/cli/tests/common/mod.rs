//! Synthetic fixtures shared by the CLI and acceptance tests.
//!
//! Projection here is written out by hand rather than calling the library,
//! so the fixtures act as an independent oracle.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coastcam::calibration::{BoardSpec, CalibrationView};
use coastcam::camera::{CameraIntrinsics, StereoRig};
use coastcam::geometry::{Point2, Point3};
use coastcam::georectify::Gcp;
use coastcam::registration::{PointPair, PointPairSet};
use coastcam::{io, RgbaImage};
use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Factory intrinsics with the recalibrated distortion of the same camera.
pub const FACTORY: [f64; 4] = [1060.70, 1060.70, 950.42, 572.89];
pub const RECALIBRATED_DISTORTION: [f64; 5] = [0.0046, -0.0715, 0.1904, -0.0003, -0.0019];
pub const HD_WIDTH: u32 = 1920;
pub const HD_HEIGHT: u32 = 1080;

pub fn table1_camera() -> CameraIntrinsics {
    let [fx, fy, cx, cy] = FACTORY;
    CameraIntrinsics::with_distortion(fx, fy, cx, cy, RECALIBRATED_DISTORTION, HD_WIDTH, HD_HEIGHT).unwrap()
}

/// Pinhole plus radial/tangential distortion, evaluated directly.
pub fn project_oracle(c: &CameraIntrinsics, p: Vector3<f64>) -> (f64, f64) {
    let (x, y) = (p.x / p.z, p.y / p.z);
    let r2 = x * x + y * y;
    let radial = 1.0 + c.k1 * r2 + c.k2 * r2 * r2 + c.k3 * r2 * r2 * r2;
    let xd = x * radial + 2.0 * c.p1 * x * y + c.p2 * (r2 + 2.0 * x * x);
    let yd = y * radial + c.p1 * (r2 + 2.0 * y * y) + 2.0 * c.p2 * x * y;
    (c.fx * xd + c.cx, c.fy * yd + c.cy)
}

/// Board views from random tilted poses spread over the frame, corners kept
/// 20 px inside it, with Gaussian pixel noise of `sigma`.
pub fn board_views(cam: &CameraIntrinsics, board: &BoardSpec, n: usize, sigma: f64, seed: u64) -> Vec<CalibrationView> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    let (cols, rows, sq) = (board.cols, board.rows, board.square_size);
    let center = Vector3::new(0.5 * (cols - 1) as f64 * sq, 0.5 * (rows - 1) as f64 * sq, 0.0);
    let (w, h) = (cam.width as f64, cam.height as f64);
    let mut views = Vec::new();
    while views.len() < n {
        let axis = Vector3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.4..0.4));
        let rot = Rotation3::from_scaled_axis(axis);
        // Board centers spread over the whole field of view.
        let z = rng.random_range(0.35..0.6);
        let target = Vector3::new(rng.random_range(-0.65..0.65) * z, rng.random_range(-0.4..0.4) * z, z);
        let t = target - rot * center;
        let mut pts = Vec::with_capacity(cols * rows);
        let mut inside = true;
        for r in 0..rows {
            for c in 0..cols {
                let obj = Vector3::new(c as f64 * sq, r as f64 * sq, 0.0);
                let (u, v) = project_oracle(cam, rot * obj + t);
                inside &= u > 20.0 && v > 20.0 && u < w - 20.0 && v < h - 20.0;
                pts.push(Point2::new(u, v));
            }
        }
        if !inside {
            continue;
        }
        if sigma > 0.0 {
            for p in &mut pts {
                p.x += noise.sample(&mut rng);
                p.y += noise.sample(&mut rng);
            }
        }
        views.push(CalibrationView::new(pts));
    }
    views
}

/// A beach in front of an oblique stereo camera: a plane rising landward
/// with a smooth berm step, covered in a random-dot texture.
pub struct BeachScene {
    pub rig: StereoRig,
    /// World position of the left camera center.
    pub center: Vector3<f64>,
    /// Columns are the camera x, y, z axes in world coordinates.
    pub rotation: Matrix3<f64>,
    pub origin: (f64, f64),
    texture_seed: u64,
}

pub const BEACH_E0: f64 = 680_000.0;
pub const BEACH_N0: f64 = 3_075_000.0;
const BERM_START: f64 = 3.8;
const BERM_WIDTH: f64 = 2.0;
const BERM_HEIGHT: f64 = 0.25;
const TEXTURE_CELL: f64 = 0.02;

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

impl BeachScene {
    /// `scale` 1 gives a 640x480 camera with fx = 600.
    pub fn new(scale: f64) -> Self {
        let (w, h) = ((640.0 * scale) as u32, (480.0 * scale) as u32);
        let f = 600.0 * scale;
        let intr = CameraIntrinsics::pinhole(f, f, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, w, h).unwrap();
        let pitch = 40f64.to_radians();
        let x = Vector3::new(1.0, 0.0, 0.0);
        let z = Vector3::new(0.0, pitch.cos(), -pitch.sin());
        let y = z.cross(&x);
        Self {
            rig: StereoRig::new(intr, 0.12).unwrap(),
            center: Vector3::new(BEACH_E0, BEACH_N0, 3.0),
            rotation: Matrix3::from_columns(&[x, y, z]),
            origin: (BEACH_E0, BEACH_N0),
            texture_seed: 0xBEAC4,
        }
    }

    /// Ground elevation at a world position.
    pub fn surface_z(&self, e: f64, n: f64) -> f64 {
        let dn = n - self.origin.1;
        let _ = e;
        0.4 + 0.06 * dn + BERM_HEIGHT * smoothstep((dn - BERM_START) / BERM_WIDTH)
    }

    pub fn surface_point(&self, e: f64, n: f64) -> Vector3<f64> {
        Vector3::new(e, n, self.surface_z(e, n))
    }

    /// World point to camera frame of the left (`eye` 0) or right (1) camera.
    pub fn to_camera(&self, p: Vector3<f64>, eye: usize) -> Vector3<f64> {
        let c = self.rotation.transpose() * (p - self.center);
        c - Vector3::new(eye as f64 * self.rig.baseline, 0.0, 0.0)
    }

    pub fn project(&self, p: Vector3<f64>, eye: usize) -> (f64, f64) {
        project_oracle(&self.rig.intrinsics, self.to_camera(p, eye))
    }

    /// Where the ray through pixel `(u, v)` of `eye` meets the ground.
    fn ray_hit(&self, u: f64, v: f64, eye: usize) -> Vector3<f64> {
        let k = &self.rig.intrinsics;
        let dir = self.rotation * Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        let origin = self.center + self.rotation * Vector3::new(eye as f64 * self.rig.baseline, 0.0, 0.0);
        let above = |t: f64| {
            let p = origin + dir * t;
            p.z - self.surface_z(p.x, p.y)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        while above(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if above(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        origin + dir * (0.5 * (lo + hi))
    }

    fn lattice(&self, i: i64, j: i64) -> f64 {
        // Small integer hash; deterministic across platforms.
        let mut h = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F) ^ self.texture_seed;
        h ^= h >> 31;
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 29;
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Bilinear value noise on a 2 cm lattice, in `[0, 1]`.
    pub fn texture(&self, e: f64, n: f64) -> f64 {
        let (x, y) = ((e - self.origin.0) / TEXTURE_CELL, (n - self.origin.1) / TEXTURE_CELL);
        let (i, j) = (x.floor(), y.floor());
        let (fx, fy) = (x - i, y - j);
        let (i, j) = (i as i64, j as i64);
        let a = self.lattice(i, j) * (1.0 - fx) + self.lattice(i + 1, j) * fx;
        let b = self.lattice(i, j + 1) * (1.0 - fx) + self.lattice(i + 1, j + 1) * fx;
        a * (1.0 - fy) + b * fy
    }

    /// Renders one eye with 2x2 supersampling, sand-tinted.
    pub fn render(&self, eye: usize) -> RgbaImage {
        let k = &self.rig.intrinsics;
        RgbaImage::from_fn(k.width as usize, k.height as usize, |x, y| {
            let mut g = 0.0;
            for (du, dv) in [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)] {
                let p = self.ray_hit(x as f64 + du, y as f64 + dv, eye);
                g += self.texture(p.x, p.y) / 4.0;
            }
            let q = |s: f64| (255.0 * (0.1 + 0.85 * g) * s).round().clamp(0.0, 255.0) as u8;
            [q(1.0), q(0.92), q(0.75), 255]
        })
        .unwrap()
    }

    pub fn in_view(&self, p: Vector3<f64>, margin: f64) -> bool {
        let k = &self.rig.intrinsics;
        (0..2).all(|eye| {
            let (u, v) = self.project(p, eye);
            u > margin && v > margin && u < k.width as f64 - 1.0 - margin && v < k.height as f64 - 1.0 - margin
        })
    }

    /// Surveyed control points, local offsets in meters. All visible in both eyes.
    pub fn gcp_offsets(&self) -> Vec<(f64, f64)> {
        vec![(-0.8, 2.2), (0.9, 2.4), (-1.6, 3.6), (1.5, 3.4), (0.0, 4.4), (-2.0, 5.4), (2.1, 5.6)]
    }

    /// GCPs with exact survey coordinates and their pixel in the right photo.
    pub fn gcps(&self) -> Vec<Gcp> {
        self.gcp_offsets()
            .iter()
            .enumerate()
            .map(|(i, &(de, dn))| {
                let p = self.surface_point(self.origin.0 + de, self.origin.1 + dn);
                assert!(self.in_view(p, 0.015 * self.rig.intrinsics.width as f64), "GCP {i} is out of view");
                let (u, v) = self.project(p, 1);
                Gcp::new(format!("g{}", i + 1), Point3::new(p.x, p.y, p.z), Some(Point2::new(u, v)))
            })
            .collect()
    }

    /// Cloud-to-world correspondences: the target is the surveyed point and the
    /// source its camera-frame position picked with noise `sigma` per axis.
    pub fn pairs(&self, sigma: f64, seed: u64) -> PointPairSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
        let mut offsets = self.gcp_offsets();
        offsets.push((0.4, 3.0));
        let pairs = offsets
            .iter()
            .enumerate()
            .map(|(i, &(de, dn))| {
                let w = self.surface_point(self.origin.0 + de, self.origin.1 + dn);
                let mut c = self.to_camera(w, 0);
                if sigma > 0.0 {
                    c += Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
                }
                PointPair::new(format!("p{}", i + 1), Point3::new(c.x, c.y, c.z), Point3::new(w.x, w.y, w.z))
            })
            .collect();
        PointPairSet::new(pairs).unwrap()
    }

    /// Area of interest, well inside both views.
    pub fn clip_wkt(&self) -> String {
        let corners = [(-0.9, 2.0), (0.9, 2.0), (2.2, 5.6), (-2.2, 5.6)];
        let pts: Vec<String> = corners
            .iter()
            .chain(std::iter::once(&corners[0]))
            .map(|&(de, dn)| {
                let (e, n) = (self.origin.0 + de, self.origin.1 + dn);
                assert!(self.in_view(self.surface_point(e, n), 0.02 * self.rig.intrinsics.width as f64), "clip corner out of view");
                format!("{e} {n}")
            })
            .collect();
        format!("POLYGON (({}))", pts.join(", "))
    }
}

/// Writes every input of the beach pipeline into `dir` and returns the
/// config file path.
pub fn write_beach_inputs(scene: &BeachScene, dir: &Path, pair_sigma: f64) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("left.ppm"), io::write_ppm(&scene.render(0))).unwrap();
    std::fs::write(dir.join("right.ppm"), io::write_ppm(&scene.render(1))).unwrap();
    std::fs::write(dir.join("calibration.txt"), io::write_calibration(&scene.rig)).unwrap();
    std::fs::write(dir.join("gcps.csv"), io::write_gcp_csv(&scene.gcps())).unwrap();
    std::fs::write(dir.join("pairs.csv"), io::write_pairs_csv(&scene.pairs(pair_sigma, 11))).unwrap();
    std::fs::write(dir.join("clip.wkt"), scene.clip_wkt()).unwrap();
    let d_max = (scene.rig.intrinsics.fx * scene.rig.baseline / 1.8).ceil() as usize;
    let config = format!(
        "# synthetic beach\n\
         calibration = calibration.txt\n\
         depth.left = left.ppm\n\
         depth.right = right.ppm\n\
         depth.d_min = 2\n\
         depth.d_max = {d_max}\n\
         depth.window = 7\n\
         register.pairs = pairs.csv\n\
         dsm.cell = 0.10\n\
         dsm.clip = clip.wkt\n\
         check.gcps = gcps.csv\n\
         rectify.image = right.ppm\n\
         rectify.gcps = gcps.csv\n"
    );
    let path = dir.join("pipeline.conf");
    std::fs::write(&path, config).unwrap();
    path
}

pub fn coastcam(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coastcam"))
        .args(args)
        .arg("--out-dir")
        .arg(out_dir)
        .env_remove("COASTCAM_OUT_DIR")
        .output()
        .expect("binary runs")
}

pub fn report(out_dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(out_dir.join("report.json")).expect("report written");
    serde_json::from_str(&text).unwrap()
}

pub fn schema_validator() -> jsonschema::Validator {
    let text = include_str!("../../schema/run_report.schema.json");
    jsonschema::validator_for(&serde_json::from_str(text).unwrap()).unwrap()
}

pub fn assert_schema_valid(report: &serde_json::Value) {
    let v = schema_validator();
    let errors: Vec<String> = v.iter_errors(report).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "report violates schema: {errors:#?}");
}

/// Report with the timing sub-object removed, for determinism checks.
pub fn without_timing(mut report: serde_json::Value) -> serde_json::Value {
    report.as_object_mut().unwrap().remove("timing");
    report
}

/// RMSE of every valid DSM cell against the true surface, and the number of
/// valid cells.
pub fn dsm_rmse(scene: &BeachScene, asc: &Path) -> (f64, usize) {
    let grid = io::read_asc(&std::fs::read_to_string(asc).unwrap()).unwrap();
    let g = grid.geometry;
    let (mut sum, mut n) = (0.0, 0usize);
    for row in 0..g.n_rows {
        for col in 0..g.n_cols {
            if let Some(z) = grid.get(col, row) {
                let c = g.cell_center(col, row);
                let dz = z - scene.surface_z(c.x, c.y);
                sum += dz * dz;
                n += 1;
            }
        }
    }
    ((sum / n.max(1) as f64).sqrt(), n)
}
