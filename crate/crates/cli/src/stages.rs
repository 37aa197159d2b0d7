//! One function per pipeline stage. Each reads its inputs, writes its
//! outputs and returns its report fragment.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use coastcam::calibration::{calibrate, BoardSpec, RefineOptions};
use coastcam::camera::StereoRig;
use coastcam::geometry::{GridGeometry, Point2, DEFAULT_MAX_CELLS};
use coastcam::georectify::{
    fit_ground_homography, gcp_extent, rmse_xy, undistort_gcps, undistort_image, validate_gcps, warp_to_grid, Gcp,
};
use coastcam::io;
use coastcam::registration::{apply_alignment, estimate_alignment};
use coastcam::stereo::{cloud_from_disparity, match_disparity, MatchParams, INVALID_DISPARITY};
use coastcam::surface::{build_tin, clip_dsm, rasterize_tin, vertical_check, DsmGrid, Tin, DSM_NODATA};
use coastcam::{PointCloud, RgbaImage};

use crate::config::{
    load_rig, CalibrateConfig, CheckConfig, DepthConfig, DsmConfig, GcpPixels, RectifyConfig, RegisterConfig,
};
use crate::failure::{read_bytes, read_text, write_file, Failure};
use crate::report::*;

/// Margin added on every side of the GCP box when no extent is given, as a
/// fraction of the box size.
const RECTIFY_MARGIN: f64 = 0.10;

fn shown(p: &Path) -> String {
    p.display().to_string()
}

fn lib<T>(r: coastcam::Result<T>, source: &Path) -> Result<T, Failure> {
    r.map_err(|e| Failure::from_error(e, source))
}

fn read_cloud(path: &Path) -> Result<PointCloud, Failure> {
    let bytes = read_bytes(path)?;
    lib(io::read_las(&bytes), path).map(|(_, cloud)| cloud)
}

fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<(), Failure> {
    let bytes = lib(io::write_las(cloud, io::las::DEFAULT_SCALE, io::las::auto_offset(cloud)), path)?;
    write_file(path, bytes)
}

fn read_image(path: &Path) -> Result<RgbaImage, Failure> {
    lib(io::read_image(&read_bytes(path)?), path)
}

fn read_gcps(path: &Path) -> Result<Vec<Gcp>, Failure> {
    let gcps = lib(io::parse_gcp_csv(&read_text(path)?), path)?;
    lib(validate_gcps(&gcps), path)?;
    Ok(gcps)
}

/// TINs are built once per cloud file within a run.
#[derive(Default)]
pub struct TinCache {
    tins: HashMap<PathBuf, Rc<Tin>>,
}

impl TinCache {
    fn get(&mut self, cloud: &Path) -> Result<Rc<Tin>, Failure> {
        if let Some(t) = self.tins.get(cloud) {
            return Ok(t.clone());
        }
        let tin = Rc::new(lib(build_tin(&read_cloud(cloud)?), cloud)?);
        self.tins.insert(cloud.to_path_buf(), tin.clone());
        Ok(tin)
    }
}

fn eye_output(first: &Path, eye: usize) -> PathBuf {
    if eye == 0 {
        return first.to_path_buf();
    }
    let stem = first.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match first.extension() {
        Some(ext) => format!("{stem}_eye{eye}.{}", ext.to_string_lossy()),
        None => format!("{stem}_eye{eye}"),
    };
    first.with_file_name(name)
}

pub fn run_calibrate(cfg: &CalibrateConfig) -> Result<CalibrateReport, Failure> {
    let board = BoardSpec::new(cfg.board.0, cfg.board.1, cfg.square).map_err(Failure::from_library)?;
    let mut eyes = Vec::new();
    let (mut weighted, mut corners) = (0.0, 0usize);
    for (i, path) in cfg.corners.iter().enumerate() {
        let views = lib(io::parse_corners_csv(&read_text(path)?), path)?;
        let result = lib(calibrate(&board, &views, cfg.width, cfg.height, &RefineOptions::default()), path)?;
        let rig = StereoRig::new(result.intrinsics, cfg.baseline).map_err(Failure::from_library)?;
        let output = eye_output(&cfg.output, i);
        write_file(&output, io::write_calibration(&rig))?;
        println!(
            "calibrate: {}: {} views, mean reprojection error {:.4} px",
            path.display(),
            views.len(),
            result.mean_reprojection_error
        );
        let n = views.len() * board.corner_count();
        weighted += result.mean_reprojection_error * n as f64;
        corners += n;
        eyes.push(EyeReport {
            corners: shown(path),
            output: shown(&output),
            views: views.len(),
            mean_reprojection_error: px(result.mean_reprojection_error),
            per_view_errors: MeasureList {
                unit: "px",
                values: result.per_view_errors.clone(),
            },
            intrinsics: (&result.intrinsics).into(),
            iterations: result.iterations,
        });
    }
    Ok(CalibrateReport {
        eyes,
        pooled_mean_reprojection_error: px(weighted / corners as f64),
        baseline: m(cfg.baseline),
    })
}

fn padded_extent(gcps: &[Gcp]) -> Option<(Point2, Point2)> {
    let (lo, hi) = gcp_extent(gcps)?;
    let (mx, my) = ((hi.x - lo.x) * RECTIFY_MARGIN, (hi.y - lo.y) * RECTIFY_MARGIN);
    Some((Point2::new(lo.x - mx, lo.y - my), Point2::new(hi.x + mx, hi.y + my)))
}

pub fn run_rectify(cfg: &RectifyConfig) -> Result<RectifyReport, Failure> {
    let mut image = read_image(&cfg.image)?;
    let mut gcps = read_gcps(&cfg.gcps)?;
    if cfg.undistort {
        let cal = cfg.calibration.as_deref().expect("undistortion requires a calibration");
        let rig = load_rig(cal)?;
        image = lib(undistort_image(&image, &rig.intrinsics), &cfg.image)?;
        if cfg.gcp_pixels == GcpPixels::Distorted {
            gcps = lib(undistort_gcps(&gcps, &rig.intrinsics), &cfg.gcps)?;
        }
    }
    let h = lib(fit_ground_homography(&gcps), &cfg.gcps)?;
    let rmse = lib(rmse_xy(&h, &gcps), &cfg.gcps)?;
    let (lo, hi) = match cfg.extent {
        Some(e) => e,
        None => padded_extent(&gcps).ok_or_else(|| Failure::input(format!("{}: no observed GCPs", cfg.gcps.display())))?,
    };
    let geom = GridGeometry::covering(lo, hi, cfg.cell, DEFAULT_MAX_CELLS).map_err(Failure::from_library)?;
    let raster = warp_to_grid(&image, &h, &geom).map_err(Failure::from_library)?;
    let world_file = cfg.output.with_extension("wld");
    write_file(&cfg.output, io::write_ppm(&raster.to_image()))?;
    write_file(&world_file, io::write_world_file(&geom))?;
    println!(
        "rectify: RMSE_x {:.4} m, RMSE_y {:.4} m over {} GCPs",
        rmse.rmse_x,
        rmse.rmse_y,
        rmse.per_point_residuals.len()
    );
    Ok(RectifyReport {
        image: shown(&cfg.image),
        gcps: shown(&cfg.gcps),
        output: shown(&cfg.output),
        world_file: shown(&world_file),
        undistorted: cfg.undistort,
        gcp_pixels: cfg.gcp_pixels.as_str(),
        gcps_used: rmse.per_point_residuals.len(),
        rmse_definition: RMSE_ROOTED,
        rmse_x: m(rmse.rmse_x),
        rmse_y: m(rmse.rmse_y),
        per_gcp_residuals: MeasureList {
            unit: "m",
            values: rmse
                .per_point_residuals
                .iter()
                .map(|r| GcpResidual {
                    id: r.id.clone(),
                    dx: r.dx,
                    dy: r.dy,
                })
                .collect(),
        },
        homography: h.rows(),
        grid: (&geom).into(),
        nodata_cells: raster.nodata_count(),
    })
}

pub fn run_depth(cfg: &DepthConfig) -> Result<DepthReport, Failure> {
    let rig = load_rig(&cfg.calibration)?;
    let left = read_image(&cfg.left)?;
    let right = read_image(&cfg.right)?;
    let params = MatchParams::new(cfg.d_min, cfg.d_max, cfg.window);
    let disp = match_disparity(&left.to_gray(), &right.to_gray(), &params)
        .map_err(|e| Failure::from_library(e).prefixed(&format!("{} / {}", cfg.left.display(), cfg.right.display())))?;
    let cloud = cloud_from_disparity(&disp, &rig, &left, cfg.z_max).map_err(Failure::from_library)?;
    write_cloud(&cfg.output, &cloud)?;
    if let Some(path) = &cfg.disparity {
        // Pixel grid: column x at easting x, row y at northing −y.
        let geom = GridGeometry::new(0.0, 0.0, 1.0, disp.width(), disp.height()).map_err(Failure::from_library)?;
        let values = disp
            .values()
            .iter()
            .map(|&d| if d == INVALID_DISPARITY { DSM_NODATA } else { d })
            .collect();
        let grid = DsmGrid::new(geom, values).map_err(Failure::from_library)?;
        write_file(path, io::write_asc(&grid))?;
    }
    let valid = disp.valid_count();
    let total = disp.width() * disp.height();
    println!("depth: {valid} of {total} disparities valid, {} points", cloud.len());
    Ok(DepthReport {
        left: shown(&cfg.left),
        right: shown(&cfg.right),
        output: shown(&cfg.output),
        disparity_output: cfg.disparity.as_deref().map(shown),
        d_min: px(cfg.d_min as f64),
        d_max: px(cfg.d_max as f64),
        window: cfg.window,
        z_max: m(cfg.z_max),
        valid_disparities: valid,
        valid_fraction: Measure {
            value: valid as f64 / total as f64,
            unit: "1",
        },
        points: cloud.len(),
    })
}

pub fn run_register(cfg: &RegisterConfig) -> Result<RegisterReport, Failure> {
    let cloud = read_cloud(&cfg.cloud)?;
    let pairs = lib(io::parse_pairs_csv(&read_text(&cfg.pairs)?), &cfg.pairs)?;
    let r = lib(estimate_alignment(&pairs, cfg.with_scale), &cfg.pairs)?;
    write_cloud(&cfg.output, &apply_alignment(&cloud, &r.transform))?;
    println!("register: rms {:.4} m over {} pairs", r.rms, pairs.len());
    let rot = r.transform.rotation();
    let t = r.transform.translation();
    Ok(RegisterReport {
        cloud: shown(&cfg.cloud),
        pairs: shown(&cfg.pairs),
        output: shown(&cfg.output),
        with_scale: r.with_scale,
        rms: m(r.rms),
        per_pair_residuals: MeasureList {
            unit: "m",
            values: r
                .per_pair_residuals
                .iter()
                .map(|p| PairResidual {
                    id: p.id.clone(),
                    residual: p.residual,
                })
                .collect(),
        },
        transform: TransformReport {
            scale: Measure {
                value: r.transform.scale(),
                unit: "1",
            },
            rotation: MeasureList {
                unit: "1",
                values: (0..3).map(|i| [rot[(i, 0)], rot[(i, 1)], rot[(i, 2)]]).collect(),
            },
            translation: MeasureList {
                unit: "m",
                values: vec![t.x, t.y, t.z],
            },
        },
    })
}

pub fn run_dsm(cfg: &DsmConfig, tins: &mut TinCache) -> Result<DsmReport, Failure> {
    let clip = match &cfg.clip {
        Some(p) => Some(lib(io::parse_wkt_polygon(&read_text(p)?), p)?),
        None => None,
    };
    let tin = tins.get(&cfg.cloud)?;
    let (lo, hi) = match cfg.extent {
        Some(e) => e,
        None => {
            let v = tin.vertices();
            let lo = v.iter().fold(Point2::new(f64::INFINITY, f64::INFINITY), |a, p| Point2::new(a.x.min(p.x), a.y.min(p.y)));
            let hi = v
                .iter()
                .fold(Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY), |a, p| Point2::new(a.x.max(p.x), a.y.max(p.y)));
            (lo, hi)
        }
    };
    let geom = GridGeometry::covering(lo, hi, cfg.cell, DEFAULT_MAX_CELLS).map_err(Failure::from_library)?;
    let mut dsm = rasterize_tin(&tin, &geom, cfg.kill).map_err(Failure::from_library)?;
    if let Some(poly) = &clip {
        dsm = clip_dsm(&dsm, poly);
    }
    write_file(&cfg.output, io::write_asc(&dsm))?;
    let valid = dsm.valid_count();
    println!("dsm: {}x{} cells, {valid} with data", geom.n_cols, geom.n_rows);
    Ok(DsmReport {
        cloud: shown(&cfg.cloud),
        output: shown(&cfg.output),
        clip: cfg.clip.as_deref().map(shown),
        kill: m(cfg.kill),
        grid: (&geom).into(),
        valid_cells: valid,
        nodata_cells: geom.len() - valid,
        tin_vertices: tin.vertices().len(),
        tin_triangles: tin.triangles().len(),
    })
}

pub fn run_check(cfg: &CheckConfig, tins: &mut TinCache) -> Result<CheckReport, Failure> {
    let gcps = read_gcps(&cfg.gcps)?;
    let tin = tins.get(&cfg.cloud)?;
    let r = lib(vertical_check(&tin, &gcps), &cfg.gcps)?;
    match r.rmse_dz {
        Some(rmse) => println!("check: vertical RMSE {rmse:.4} m over {} GCPs", r.inside_count),
        None => println!("check: no GCP lies on the surface"),
    }
    Ok(CheckReport {
        cloud: shown(&cfg.cloud),
        gcps: shown(&cfg.gcps),
        inside: r.inside_count,
        outside: r.outside_count,
        mean_dz: r.mean_dz.map(m),
        rmse_dz: r.rmse_dz.map(m),
        max_abs_dz: r.max_abs_dz.map(m),
        per_gcp: MeasureList {
            unit: "m",
            values: r
                .per_gcp
                .iter()
                .map(|g| GcpDzReport {
                    id: g.id.clone(),
                    surface_z: g.surface_z,
                    dz: g.dz,
                })
                .collect(),
        },
    })
}
