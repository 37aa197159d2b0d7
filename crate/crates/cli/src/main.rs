//! `coastcam`: stereo-camera coastal photogrammetry from the command line.
//!
//! Exit status: 0 on success, 2 for invalid or missing input, 3 when a
//! numerical stage has no usable solution. A JSON report is written in every
//! case, including the stages that completed before a failure.

mod config;
mod failure;
mod report;
mod stages;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};

use config::{CalibrateConfig, CheckConfig, DepthConfig, DsmConfig, RectifyConfig, RegisterConfig, Settings};
use failure::{read_text, write_file, Failure};
use report::RunReport;
use stages::TinCache;

#[derive(Parser)]
#[command(name = "coastcam", version, about = "Stereo-camera coastal photogrammetry pipeline")]
struct Cli {
    /// Settings file of `key = value` lines (`stage.key` for stage settings).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for outputs and the default report location.
    #[arg(long, global = true, env = "COASTCAM_OUT_DIR", value_name = "DIR", default_value = "coastcam-out")]
    out_dir: PathBuf,

    /// Report path [default: <out-dir>/report.json].
    #[arg(long, global = true, value_name = "FILE")]
    report: Option<PathBuf>,

    /// Overrides any setting, e.g. `--set dsm.kill=0.5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Intrinsic calibration from checkerboard corner files.
    Calibrate(CalibrateArgs),
    /// Projective georectification of a photo onto a world grid.
    Rectify(RectifyArgs),
    /// Stereo matching into a colored point cloud.
    Depth(DepthArgs),
    /// Control-point alignment of a point cloud.
    Register(RegisterArgs),
    /// DSM rasterization of a point cloud.
    Dsm(DsmArgs),
    /// Vertical check of a point cloud surface against GCPs.
    Check(CheckArgs),
    /// Depth, register, dsm, check and rectify in one run (calibrate too when configured).
    Run,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Corner CSV per camera; the first camera's result goes to --output.
    #[arg(long, num_args = 1.., value_name = "CSV")]
    corners: Vec<String>,
    /// Interior corners as COLSxROWS.
    #[arg(long)]
    board: Option<String>,
    /// Square edge in meters.
    #[arg(long)]
    square: Option<String>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    height: Option<String>,
    /// Stereo baseline in meters written into the calibration file.
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    output: Option<String>,
}

#[derive(Args)]
struct RectifyArgs {
    #[arg(long)]
    image: Option<String>,
    #[arg(long)]
    gcps: Option<String>,
    #[arg(long)]
    calibration: Option<String>,
    /// Output cell size in meters.
    #[arg(long, allow_hyphen_values = true)]
    cell: Option<String>,
    /// min_x,min_y,max_x,max_y in world meters.
    #[arg(long, allow_hyphen_values = true)]
    extent: Option<String>,
    /// Undistort the photo first (default: on when a calibration is given).
    #[arg(long, value_name = "BOOL")]
    undistort: Option<String>,
    /// Whether GCP pixels were measured on the distorted or undistorted photo.
    #[arg(long, value_name = "distorted|undistorted")]
    gcp_pixels: Option<String>,
    #[arg(long)]
    output: Option<String>,
}

#[derive(Args)]
struct DepthArgs {
    #[arg(long)]
    left: Option<String>,
    #[arg(long)]
    right: Option<String>,
    #[arg(long)]
    calibration: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    d_min: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    d_max: Option<String>,
    #[arg(long)]
    window: Option<String>,
    /// Points deeper than this many meters are dropped.
    #[arg(long, allow_hyphen_values = true)]
    z_max: Option<String>,
    #[arg(long)]
    output: Option<String>,
    /// Also write the disparity map as an ASCII grid.
    #[arg(long)]
    disparity: Option<String>,
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    cloud: Option<String>,
    #[arg(long)]
    pairs: Option<String>,
    /// Estimate a uniform scale as well as rotation and translation.
    #[arg(long)]
    with_scale: bool,
    #[arg(long)]
    output: Option<String>,
}

#[derive(Args)]
struct DsmArgs {
    #[arg(long)]
    cloud: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    cell: Option<String>,
    /// Longest triangle edge, in meters, that is still interpolated.
    #[arg(long, allow_hyphen_values = true)]
    kill: Option<String>,
    /// WKT polygon outside which cells become NODATA.
    #[arg(long)]
    clip: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    extent: Option<String>,
    #[arg(long)]
    output: Option<String>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    cloud: Option<String>,
    #[arg(long)]
    gcps: Option<String>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Calibrate(_) => "calibrate",
            Command::Rectify(_) => "rectify",
            Command::Depth(_) => "depth",
            Command::Register(_) => "register",
            Command::Dsm(_) => "dsm",
            Command::Check(_) => "check",
            Command::Run => "run",
        }
    }

    /// Flag values as settings keys.
    fn settings(&self) -> Vec<(&'static str, Option<String>)> {
        match self {
            Command::Calibrate(a) => vec![
                ("calibrate.corners", (!a.corners.is_empty()).then(|| a.corners.join(","))),
                ("calibrate.board", a.board.clone()),
                ("calibrate.square", a.square.clone()),
                ("calibrate.width", a.width.clone()),
                ("calibrate.height", a.height.clone()),
                ("calibrate.baseline", a.baseline.clone()),
                ("calibrate.output", a.output.clone()),
            ],
            Command::Rectify(a) => vec![
                ("rectify.image", a.image.clone()),
                ("rectify.gcps", a.gcps.clone()),
                ("calibration", a.calibration.clone()),
                ("rectify.cell", a.cell.clone()),
                ("rectify.extent", a.extent.clone()),
                ("rectify.undistort", a.undistort.clone()),
                ("rectify.gcp_pixels", a.gcp_pixels.clone()),
                ("rectify.output", a.output.clone()),
            ],
            Command::Depth(a) => vec![
                ("depth.left", a.left.clone()),
                ("depth.right", a.right.clone()),
                ("calibration", a.calibration.clone()),
                ("depth.d_min", a.d_min.clone()),
                ("depth.d_max", a.d_max.clone()),
                ("depth.window", a.window.clone()),
                ("depth.z_max", a.z_max.clone()),
                ("depth.output", a.output.clone()),
                ("depth.disparity", a.disparity.clone()),
            ],
            Command::Register(a) => vec![
                ("register.cloud", a.cloud.clone()),
                ("register.pairs", a.pairs.clone()),
                ("register.with_scale", a.with_scale.then(|| "true".to_string())),
                ("register.output", a.output.clone()),
            ],
            Command::Dsm(a) => vec![
                ("dsm.cloud", a.cloud.clone()),
                ("dsm.cell", a.cell.clone()),
                ("dsm.kill", a.kill.clone()),
                ("dsm.clip", a.clip.clone()),
                ("dsm.extent", a.extent.clone()),
                ("dsm.output", a.output.clone()),
            ],
            Command::Check(a) => vec![("check.cloud", a.cloud.clone()), ("check.gcps", a.gcps.clone())],
            Command::Run => vec![],
        }
    }
}

enum Step {
    Calibrate(CalibrateConfig),
    Depth(DepthConfig),
    Register(RegisterConfig),
    Dsm(DsmConfig),
    Check(CheckConfig),
    Rectify(RectifyConfig),
}

impl Step {
    fn name(&self) -> &'static str {
        match self {
            Step::Calibrate(_) => "calibrate",
            Step::Depth(_) => "depth",
            Step::Register(_) => "register",
            Step::Dsm(_) => "dsm",
            Step::Check(_) => "check",
            Step::Rectify(_) => "rectify",
        }
    }

    fn inputs(&self) -> Vec<&Path> {
        match self {
            Step::Calibrate(c) => c.corners.iter().map(PathBuf::as_path).collect(),
            Step::Depth(c) => vec![&c.left, &c.right, &c.calibration],
            Step::Register(c) => vec![&c.cloud, &c.pairs],
            Step::Dsm(c) => std::iter::once(c.cloud.as_path()).chain(c.clip.as_deref()).collect(),
            Step::Check(c) => vec![&c.cloud, &c.gcps],
            Step::Rectify(c) => [Some(c.image.as_path()), Some(c.gcps.as_path()), c.calibration.as_deref()]
                .into_iter()
                .flatten()
                .collect(),
        }
    }

    fn outputs(&self) -> Vec<&Path> {
        match self {
            Step::Calibrate(c) => vec![&c.output],
            Step::Depth(c) => vec![&c.output],
            Step::Register(c) => vec![&c.output],
            Step::Dsm(c) => vec![&c.output],
            Step::Check(_) => vec![],
            Step::Rectify(c) => vec![&c.output],
        }
    }
}

/// Settings that `run` derives from an earlier stage and therefore rejects.
const CHAINED: [(&str, &str); 3] = [
    ("register.cloud", "depth"),
    ("dsm.cloud", "register"),
    ("check.cloud", "register"),
];

fn plan(command: &Command, s: &Settings, out_dir: &Path) -> Result<Vec<Step>, Failure> {
    let calibration = s.path("calibration");
    Ok(match command {
        Command::Calibrate(_) => vec![Step::Calibrate(CalibrateConfig::from_settings(s, out_dir)?)],
        Command::Rectify(_) => vec![Step::Rectify(RectifyConfig::from_settings(s, calibration, out_dir)?)],
        Command::Depth(_) => vec![Step::Depth(DepthConfig::from_settings(s, calibration, out_dir)?)],
        Command::Register(_) => vec![Step::Register(RegisterConfig::from_settings(s, None, out_dir)?)],
        Command::Dsm(_) => vec![Step::Dsm(DsmConfig::from_settings(s, None, out_dir)?)],
        Command::Check(_) => vec![Step::Check(CheckConfig::from_settings(s, None)?)],
        Command::Run => {
            for (key, stage) in CHAINED {
                if s.is_set(key) {
                    return Err(Failure::input(format!("{key} cannot be set for run: the {stage} stage produces it")));
                }
            }
            let mut steps = Vec::new();
            let mut calibration = calibration;
            if s.is_set("calibrate.corners") {
                if calibration.is_some() {
                    return Err(Failure::input(
                        "calibration cannot be set for run when calibrate.corners is: the calibrate stage produces it",
                    ));
                }
                let c = CalibrateConfig::from_settings(s, out_dir)?;
                calibration = Some(c.output.clone());
                steps.push(Step::Calibrate(c));
            }
            let depth = DepthConfig::from_settings(s, calibration.clone(), out_dir)?;
            let register = RegisterConfig::from_settings(s, Some(depth.output.clone()), out_dir)?;
            let cloud = register.output.clone();
            steps.push(Step::Depth(depth));
            steps.push(Step::Register(register));
            steps.push(Step::Dsm(DsmConfig::from_settings(s, Some(cloud.clone()), out_dir)?));
            steps.push(Step::Check(CheckConfig::from_settings(s, Some(cloud))?));
            steps.push(Step::Rectify(RectifyConfig::from_settings(s, calibration, out_dir)?));
            steps
        }
    })
}

/// Every input that no earlier step produces must already exist.
fn check_inputs(steps: &[Step]) -> Result<(), Failure> {
    let mut produced: HashSet<&Path> = HashSet::new();
    for step in steps {
        for input in step.inputs() {
            if !produced.contains(input) && !input.is_file() {
                return Err(Failure::input(format!(
                    "{}: input file not found ({} stage)",
                    input.display(),
                    step.name()
                )));
            }
        }
        produced.extend(step.outputs());
    }
    Ok(())
}

fn load_settings(cli: &Cli) -> Result<Settings, Failure> {
    let mut settings = Settings::default();
    if let Some(path) = &cli.config {
        let text = read_text(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        settings = Settings::parse_file(&text, base, &path.display().to_string())?;
    }
    let mut flags = Settings::default();
    for (key, value) in cli.command.settings() {
        if let Some(v) = value {
            flags.set(key, &v, Path::new(""))?;
        }
    }
    settings.merge(flags);
    for pair in &cli.overrides {
        settings.set_pair(pair)?;
    }
    settings.validate()?;
    Ok(settings)
}

fn execute(cli: &Cli, report: &mut RunReport) -> Result<(), (String, Failure)> {
    let config_failure = |f| ("config".to_string(), f);
    let settings = load_settings(cli).map_err(config_failure)?;
    report.config = settings.echo();
    report.config.insert("out_dir".into(), cli.out_dir.display().to_string());
    let steps = plan(&cli.command, &settings, &cli.out_dir).map_err(config_failure)?;
    check_inputs(&steps).map_err(config_failure)?;

    let mut tins = TinCache::default();
    for step in &steps {
        let t = Instant::now();
        let stages = &mut report.stages;
        let outcome = match step {
            Step::Calibrate(c) => stages::run_calibrate(c).map(|r| stages.calibrate = Some(r)),
            Step::Depth(c) => stages::run_depth(c).map(|r| stages.depth = Some(r)),
            Step::Register(c) => stages::run_register(c).map(|r| stages.register = Some(r)),
            Step::Dsm(c) => stages::run_dsm(c, &mut tins).map(|r| stages.dsm = Some(r)),
            Step::Check(c) => stages::run_check(c, &mut tins).map(|r| stages.check = Some(r)),
            Step::Rectify(c) => stages::run_rectify(c).map(|r| stages.rectify = Some(r)),
        };
        report.timing.stage_seconds.insert(step.name().into(), t.elapsed().as_secs_f64());
        outcome.map_err(|f| (step.name().to_string(), f))?;
        report.completed_stages.push(step.name().into());
    }
    Ok(())
}

fn now_utc() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let mut report = RunReport::new(cli.command.name());
    report.timing.started_utc = now_utc();

    if let Err((stage, f)) = execute(&cli, &mut report) {
        eprintln!("coastcam {}: {stage} failed: {f}", cli.command.name());
        report.fail(&stage, &f);
    }

    report.timing.finished_utc = now_utc();
    report.timing.total_seconds = started.elapsed().as_secs_f64();
    let report_path = cli.report.clone().unwrap_or_else(|| cli.out_dir.join("report.json"));
    if let Err(f) = write_file(&report_path, report.to_json()) {
        eprintln!("coastcam: {f}");
        if report.exit_code == 0 {
            return ExitCode::from(2);
        }
    }
    ExitCode::from(report.exit_code as u8)
}
