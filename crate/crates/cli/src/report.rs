//! The JSON run report.
//!
//! Every metric carries its unit. Timestamps and wall times live only in
//! `timing`, so two runs on the same inputs differ nowhere else.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::failure::{Failure, FailureKind};

pub const SCHEMA_VERSION: &str = "1.0.0";

/// Label of the georectification metric in every rectify report.
pub const RMSE_ROOTED: &str = "RMSE (rooted)";

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Measure {
    pub value: f64,
    pub unit: &'static str,
}

pub fn m(value: f64) -> Measure {
    Measure { value, unit: "m" }
}

pub fn px(value: f64) -> Measure {
    Measure { value, unit: "px" }
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasureList<T> {
    pub unit: &'static str,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureReport {
    /// The stage that failed, or `config` for validation before any stage ran.
    pub stage: String,
    pub kind: FailureKind,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub started_utc: String,
    pub finished_utc: String,
    pub total_seconds: f64,
    pub stage_seconds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    /// Center of the upper-left cell.
    pub origin_x: Measure,
    pub origin_y: Measure,
    pub cell_size: Measure,
    pub n_cols: usize,
    pub n_rows: usize,
}

impl From<&coastcam::geometry::GridGeometry> for GridReport {
    fn from(g: &coastcam::geometry::GridGeometry) -> Self {
        Self {
            origin_x: m(g.origin_x),
            origin_y: m(g.origin_y),
            cell_size: m(g.cell_size),
            n_cols: g.n_cols,
            n_rows: g.n_rows,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IntrinsicsReport {
    pub fx: Measure,
    pub fy: Measure,
    pub cx: Measure,
    pub cy: Measure,
    /// `[k1, k2, k3, p1, p2]`, dimensionless.
    pub distortion: MeasureList<f64>,
    pub width: u32,
    pub height: u32,
}

impl From<&coastcam::camera::CameraIntrinsics> for IntrinsicsReport {
    fn from(c: &coastcam::camera::CameraIntrinsics) -> Self {
        Self {
            fx: px(c.fx),
            fy: px(c.fy),
            cx: px(c.cx),
            cy: px(c.cy),
            distortion: MeasureList {
                unit: "1",
                values: c.distortion().to_vec(),
            },
            width: c.width,
            height: c.height,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EyeReport {
    pub corners: String,
    pub output: String,
    pub views: usize,
    pub mean_reprojection_error: Measure,
    pub per_view_errors: MeasureList<f64>,
    pub intrinsics: IntrinsicsReport,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrateReport {
    pub eyes: Vec<EyeReport>,
    /// Mean over every corner of every eye.
    pub pooled_mean_reprojection_error: Measure,
    pub baseline: Measure,
}

#[derive(Debug, Clone, Serialize)]
pub struct GcpResidual {
    pub id: String,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RectifyReport {
    pub image: String,
    pub gcps: String,
    pub output: String,
    pub world_file: String,
    pub undistorted: bool,
    /// Whether the GCP pixel coordinates were measured on the raw or the
    /// undistorted photo.
    pub gcp_pixels: &'static str,
    pub gcps_used: usize,
    /// Names the metric: root of the mean squared residual per axis.
    pub rmse_definition: &'static str,
    pub rmse_x: Measure,
    pub rmse_y: Measure,
    pub per_gcp_residuals: MeasureList<GcpResidual>,
    pub homography: [[f64; 3]; 3],
    pub grid: GridReport,
    pub nodata_cells: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DepthReport {
    pub left: String,
    pub right: String,
    pub output: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disparity_output: Option<String>,
    pub d_min: Measure,
    pub d_max: Measure,
    pub window: usize,
    pub z_max: Measure,
    pub valid_disparities: usize,
    pub valid_fraction: Measure,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairResidual {
    pub id: String,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransformReport {
    pub scale: Measure,
    pub rotation: MeasureList<[f64; 3]>,
    pub translation: MeasureList<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegisterReport {
    pub cloud: String,
    pub pairs: String,
    pub output: String,
    pub with_scale: bool,
    pub rms: Measure,
    pub per_pair_residuals: MeasureList<PairResidual>,
    pub transform: TransformReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct DsmReport {
    pub cloud: String,
    pub output: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip: Option<String>,
    pub kill: Measure,
    pub grid: GridReport,
    pub valid_cells: usize,
    pub nodata_cells: usize,
    pub tin_vertices: usize,
    pub tin_triangles: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GcpDzReport {
    pub id: String,
    pub surface_z: Option<f64>,
    pub dz: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub cloud: String,
    pub gcps: String,
    pub inside: usize,
    pub outside: usize,
    pub mean_dz: Option<Measure>,
    pub rmse_dz: Option<Measure>,
    pub max_abs_dz: Option<Measure>,
    pub per_gcp: MeasureList<GcpDzReport>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Stages {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<DepthReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub register: Option<RegisterReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dsm: Option<DsmReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rectify: Option<RectifyReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: &'static str,
    pub tool: Tool,
    pub command: String,
    pub status: Status,
    pub exit_code: i32,
    pub config: BTreeMap<String, String>,
    pub completed_stages: Vec<String>,
    pub failure: Option<FailureReport>,
    pub stages: Stages,
    pub timing: Timing,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: Tool {
                name: "coastcam",
                version: env!("CARGO_PKG_VERSION"),
            },
            command: command.to_string(),
            status: Status::Ok,
            exit_code: 0,
            config: BTreeMap::new(),
            completed_stages: Vec::new(),
            failure: None,
            stages: Stages::default(),
            timing: Timing {
                started_utc: String::new(),
                finished_utc: String::new(),
                total_seconds: 0.0,
                stage_seconds: BTreeMap::new(),
            },
        }
    }

    pub fn fail(&mut self, stage: &str, f: &Failure) {
        self.status = Status::Failed;
        self.exit_code = f.exit_code();
        self.failure = Some(FailureReport {
            stage: stage.to_string(),
            kind: f.kind,
            exit_code: f.exit_code(),
            message: f.message.clone(),
        });
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
