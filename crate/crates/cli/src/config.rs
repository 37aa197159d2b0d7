//! Pipeline settings: `key = value` lines with `stage.` prefixes.
//!
//! Precedence, lowest first: built-in defaults, the config file, subcommand
//! flags, `--set` overrides. Relative paths in a config file are resolved
//! against the file's directory; those given on the command line against the
//! working directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use coastcam::camera::StereoRig;
use coastcam::geometry::Point2;
use coastcam::georectify::DEFAULT_RECTIFY_CELL;
use coastcam::stereo::DEFAULT_Z_MAX;
use coastcam::surface::{DEFAULT_DSM_CELL, DEFAULT_KILL};

use crate::failure::Failure;

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Path,
    PathList,
    Output,
    Positive,
    Count,
    Bool,
    Window,
    Board,
    Extent,
    GcpPixels,
}

const KEYS: &[(&str, Kind)] = &[
    ("calibration", Kind::Path),
    ("calibrate.corners", Kind::PathList),
    ("calibrate.board", Kind::Board),
    ("calibrate.square", Kind::Positive),
    ("calibrate.width", Kind::Count),
    ("calibrate.height", Kind::Count),
    ("calibrate.baseline", Kind::Positive),
    ("calibrate.output", Kind::Output),
    ("rectify.image", Kind::Path),
    ("rectify.gcps", Kind::Path),
    ("rectify.cell", Kind::Positive),
    ("rectify.extent", Kind::Extent),
    ("rectify.undistort", Kind::Bool),
    ("rectify.gcp_pixels", Kind::GcpPixels),
    ("rectify.output", Kind::Output),
    ("depth.left", Kind::Path),
    ("depth.right", Kind::Path),
    ("depth.d_min", Kind::Count),
    ("depth.d_max", Kind::Count),
    ("depth.window", Kind::Window),
    ("depth.z_max", Kind::Positive),
    ("depth.output", Kind::Output),
    ("depth.disparity", Kind::Output),
    ("register.cloud", Kind::Path),
    ("register.pairs", Kind::Path),
    ("register.with_scale", Kind::Bool),
    ("register.output", Kind::Output),
    ("dsm.cloud", Kind::Path),
    ("dsm.cell", Kind::Positive),
    ("dsm.kill", Kind::Positive),
    ("dsm.clip", Kind::Path),
    ("dsm.extent", Kind::Extent),
    ("dsm.output", Kind::Output),
    ("check.cloud", Kind::Path),
    ("check.gcps", Kind::Path),
];

const DEFAULT_BASELINE: f64 = 0.12;
const DEFAULT_D_MAX: usize = 64;
const DEFAULT_WINDOW: usize = 5;

#[derive(Debug, Clone)]
struct Setting {
    value: String,
    /// Directory that relative paths in `value` are resolved against.
    base: PathBuf,
}

/// Raw settings after merging every source.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, Setting>,
}

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, kind)| *kind)
}

impl Settings {
    /// Parses a config file's text. `base` is the file's directory.
    pub fn parse_file(text: &str, base: &Path, source: &str) -> Result<Self, Failure> {
        let mut s = Settings::default();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Failure::input(format!("{source}: line {}: expected `key = value`", i + 1)));
            };
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Failure::input(format!("{source}: line {}: {k} is set twice", i + 1)));
            }
            s.set(k, v.trim(), base).map_err(|f| f.prefixed(&format!("{source}: line {}", i + 1)))?;
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), Failure> {
        if kind_of(key).is_none() {
            return Err(Failure::input(format!("unknown setting {key:?}")));
        }
        self.values.insert(
            key.to_string(),
            Setting {
                value: value.to_string(),
                base: base.to_path_buf(),
            },
        );
        Ok(())
    }

    /// Applies a `--set key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), Failure> {
        let Some((k, v)) = pair.split_once('=') else {
            return Err(Failure::input(format!("--set expects KEY=VALUE, got {pair:?}")));
        };
        self.set(k.trim(), v.trim(), Path::new(""))
    }

    pub fn merge(&mut self, other: Settings) {
        self.values.extend(other.values);
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// The merged values as given, for the report.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.values.iter().map(|(k, s)| (k.clone(), s.value.clone())).collect()
    }

    /// Checks every value against its key's type and range.
    pub fn validate(&self) -> Result<(), Failure> {
        for (key, s) in &self.values {
            let kind = kind_of(key).expect("keys are checked on insertion");
            let v = s.value.as_str();
            let bad = |what: &str| Failure::input(format!("{key} = {v:?}: {what}"));
            match kind {
                Kind::Path | Kind::Output if v.is_empty() => return Err(bad("empty path")),
                Kind::PathList if v.split(',').any(|p| p.trim().is_empty()) => {
                    return Err(bad("empty path in list"))
                }
                Kind::Positive => {
                    parse_positive(v).ok_or_else(|| bad("expected a positive number"))?;
                }
                Kind::Count => {
                    v.parse::<usize>().map_err(|_| bad("expected a non-negative integer"))?;
                }
                Kind::Bool => {
                    parse_bool(v).ok_or_else(|| bad("expected true or false"))?;
                }
                Kind::Window => {
                    if !matches!(v.parse::<usize>(), Ok(3 | 5 | 7 | 9)) {
                        return Err(bad("window must be 3, 5, 7 or 9"));
                    }
                }
                Kind::Board => {
                    parse_board(v).ok_or_else(|| bad("expected COLSxROWS interior corners"))?;
                }
                Kind::Extent => {
                    parse_extent(v).ok_or_else(|| bad("expected min_x,min_y,max_x,max_y with min < max"))?;
                }
                Kind::GcpPixels
                    if v != "distorted" && v != "undistorted" => {
                        return Err(bad("expected distorted or undistorted"));
                    }
                _ => {}
            }
        }
        if let (Some(lo), Some(hi)) = (self.count("depth.d_min"), self.count("depth.d_max")) {
            if lo >= hi {
                return Err(Failure::input(format!("depth.d_min ({lo}) must be below depth.d_max ({hi})")));
            }
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&Setting> {
        debug_assert!(kind_of(key).is_some(), "{key}");
        self.values.get(key)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|s| s.base.join(&s.value))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf, Failure> {
        self.path(key).ok_or_else(|| missing(key))
    }

    pub fn paths(&self, key: &str) -> Option<Vec<PathBuf>> {
        self.raw(key).map(|s| s.value.split(',').map(|p| s.base.join(p.trim())).collect())
    }

    /// Outputs are placed under `out_dir` unless absolute.
    pub fn output(&self, key: &str, default: &str, out_dir: &Path) -> PathBuf {
        let v = self.raw(key).map_or(default, |s| s.value.as_str());
        out_dir.join(v)
    }

    fn positive(&self, key: &str) -> Option<f64> {
        self.raw(key).and_then(|s| parse_positive(&s.value))
    }

    fn count(&self, key: &str) -> Option<usize> {
        self.raw(key).and_then(|s| s.value.parse().ok())
    }

    fn flag(&self, key: &str) -> Option<bool> {
        self.raw(key).and_then(|s| parse_bool(&s.value))
    }

    fn extent(&self, key: &str) -> Option<(Point2, Point2)> {
        self.raw(key).and_then(|s| parse_extent(&s.value))
    }

    fn require<T>(&self, key: &str, v: Option<T>) -> Result<T, Failure> {
        v.ok_or_else(|| missing(key))
    }
}

fn missing(key: &str) -> Failure {
    Failure::input(format!("missing setting {key}"))
}

fn parse_positive(v: &str) -> Option<f64> {
    v.parse::<f64>().ok().filter(|x| x.is_finite() && *x > 0.0)
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

fn parse_board(v: &str) -> Option<(usize, usize)> {
    let (c, r) = v.to_ascii_lowercase().split_once('x').map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))?;
    Some((c.parse().ok()?, r.parse().ok()?))
}

fn parse_extent(v: &str) -> Option<(Point2, Point2)> {
    let f: Vec<f64> = v.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().ok()?;
    match f[..] {
        [x0, y0, x1, y1] if f.iter().all(|x| x.is_finite()) && x0 < x1 && y0 < y1 => {
            Some((Point2::new(x0, y0), Point2::new(x1, y1)))
        }
        _ => None,
    }
}

pub struct CalibrateConfig {
    pub corners: Vec<PathBuf>,
    pub board: (usize, usize),
    pub square: f64,
    pub width: u32,
    pub height: u32,
    pub baseline: f64,
    pub output: PathBuf,
}

impl CalibrateConfig {
    pub fn from_settings(s: &Settings, out_dir: &Path) -> Result<Self, Failure> {
        let dim = |key: &str| -> Result<u32, Failure> {
            let n = s.require(key, s.count(key))?;
            u32::try_from(n).ok().filter(|&n| n > 0).ok_or_else(|| Failure::input(format!("{key} = {n} is out of range")))
        };
        Ok(Self {
            corners: s.require("calibrate.corners", s.paths("calibrate.corners"))?,
            board: s.require("calibrate.board", s.raw("calibrate.board").and_then(|v| parse_board(&v.value)))?,
            square: s.require("calibrate.square", s.positive("calibrate.square"))?,
            width: dim("calibrate.width")?,
            height: dim("calibrate.height")?,
            baseline: s.positive("calibrate.baseline").unwrap_or(DEFAULT_BASELINE),
            output: s.output("calibrate.output", "calibration.txt", out_dir),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GcpPixels {
    Distorted,
    Undistorted,
}

impl GcpPixels {
    pub fn as_str(self) -> &'static str {
        match self {
            GcpPixels::Distorted => "distorted",
            GcpPixels::Undistorted => "undistorted",
        }
    }
}

pub struct RectifyConfig {
    pub image: PathBuf,
    pub gcps: PathBuf,
    pub calibration: Option<PathBuf>,
    pub cell: f64,
    pub extent: Option<(Point2, Point2)>,
    pub undistort: bool,
    pub gcp_pixels: GcpPixels,
    pub output: PathBuf,
}

impl RectifyConfig {
    pub fn from_settings(s: &Settings, calibration: Option<PathBuf>, out_dir: &Path) -> Result<Self, Failure> {
        let undistort = s.flag("rectify.undistort").unwrap_or(calibration.is_some());
        if undistort && calibration.is_none() {
            return Err(Failure::input("rectify.undistort needs a calibration file"));
        }
        let gcp_pixels = match s.raw("rectify.gcp_pixels").map(|v| v.value.as_str()) {
            Some("undistorted") => GcpPixels::Undistorted,
            _ => GcpPixels::Distorted,
        };
        if gcp_pixels == GcpPixels::Undistorted && !undistort {
            return Err(Failure::input(
                "rectify.gcp_pixels = undistorted requires rectify.undistort, otherwise the GCP pixels and the image disagree",
            ));
        }
        Ok(Self {
            image: s.require_path("rectify.image")?,
            gcps: s.require_path("rectify.gcps")?,
            calibration,
            cell: s.positive("rectify.cell").unwrap_or(DEFAULT_RECTIFY_CELL),
            extent: s.extent("rectify.extent"),
            undistort,
            gcp_pixels,
            output: s.output("rectify.output", "rectified.ppm", out_dir),
        })
    }
}

pub struct DepthConfig {
    pub left: PathBuf,
    pub right: PathBuf,
    pub calibration: PathBuf,
    pub d_min: usize,
    pub d_max: usize,
    pub window: usize,
    pub z_max: f64,
    pub output: PathBuf,
    pub disparity: Option<PathBuf>,
}

impl DepthConfig {
    pub fn from_settings(s: &Settings, calibration: Option<PathBuf>, out_dir: &Path) -> Result<Self, Failure> {
        Ok(Self {
            left: s.require_path("depth.left")?,
            right: s.require_path("depth.right")?,
            calibration: calibration.ok_or_else(|| missing("calibration"))?,
            d_min: s.count("depth.d_min").unwrap_or(0),
            d_max: s.count("depth.d_max").unwrap_or(DEFAULT_D_MAX),
            window: s.count("depth.window").unwrap_or(DEFAULT_WINDOW),
            z_max: s.positive("depth.z_max").unwrap_or(DEFAULT_Z_MAX),
            output: s.output("depth.output", "cloud.las", out_dir),
            disparity: s.is_set("depth.disparity").then(|| s.output("depth.disparity", "", out_dir)),
        })
    }
}

pub struct RegisterConfig {
    pub cloud: PathBuf,
    pub pairs: PathBuf,
    pub with_scale: bool,
    pub output: PathBuf,
}

impl RegisterConfig {
    pub fn from_settings(s: &Settings, cloud: Option<PathBuf>, out_dir: &Path) -> Result<Self, Failure> {
        Ok(Self {
            cloud: cloud.or_else(|| s.path("register.cloud")).ok_or_else(|| missing("register.cloud"))?,
            pairs: s.require_path("register.pairs")?,
            with_scale: s.flag("register.with_scale").unwrap_or(false),
            output: s.output("register.output", "registered.las", out_dir),
        })
    }
}

pub struct DsmConfig {
    pub cloud: PathBuf,
    pub cell: f64,
    pub kill: f64,
    pub clip: Option<PathBuf>,
    pub extent: Option<(Point2, Point2)>,
    pub output: PathBuf,
}

impl DsmConfig {
    pub fn from_settings(s: &Settings, cloud: Option<PathBuf>, out_dir: &Path) -> Result<Self, Failure> {
        Ok(Self {
            cloud: cloud.or_else(|| s.path("dsm.cloud")).ok_or_else(|| missing("dsm.cloud"))?,
            cell: s.positive("dsm.cell").unwrap_or(DEFAULT_DSM_CELL),
            kill: s.positive("dsm.kill").unwrap_or(DEFAULT_KILL),
            clip: s.path("dsm.clip"),
            extent: s.extent("dsm.extent"),
            output: s.output("dsm.output", "dsm.asc", out_dir),
        })
    }
}

pub struct CheckConfig {
    pub cloud: PathBuf,
    pub gcps: PathBuf,
}

impl CheckConfig {
    pub fn from_settings(s: &Settings, cloud: Option<PathBuf>) -> Result<Self, Failure> {
        Ok(Self {
            cloud: cloud.or_else(|| s.path("check.cloud")).ok_or_else(|| missing("check.cloud"))?,
            gcps: s.require_path("check.gcps")?,
        })
    }
}

/// Loads the stereo rig from a calibration file.
pub fn load_rig(path: &Path) -> Result<StereoRig, Failure> {
    let text = crate::failure::read_text(path)?;
    coastcam::io::read_calibration(&text).map_err(|e| Failure::from_error(e, path))
}
