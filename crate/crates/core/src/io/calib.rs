//! Calibration file: one `key = value` per line.
//!
//! Keys are `fx fy cx cy k1 k2 k3 p1 p2 width height baseline_m`; all are
//! required and nothing else is accepted. Floats are written with 17
//! significant digits so a round trip is exact.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{content_lines, parse_f64};
use crate::camera::{CameraIntrinsics, StereoRig};
use crate::error::{Error, Result};

const KEYS: [&str; 12] = [
    "fx", "fy", "cx", "cy", "k1", "k2", "k3", "p1", "p2", "width", "height", "baseline_m",
];

pub fn write_calibration(rig: &StereoRig) -> String {
    let c = &rig.intrinsics;
    let mut out = String::new();
    for (k, v) in [
        ("fx", c.fx),
        ("fy", c.fy),
        ("cx", c.cx),
        ("cy", c.cy),
        ("k1", c.k1),
        ("k2", c.k2),
        ("k3", c.k3),
        ("p1", c.p1),
        ("p2", c.p2),
    ] {
        let _ = writeln!(out, "{k} = {v:.16e}");
    }
    let _ = writeln!(out, "width = {}", c.width);
    let _ = writeln!(out, "height = {}", c.height);
    let _ = writeln!(out, "baseline_m = {:.16e}", rig.baseline);
    out
}

pub fn read_calibration(text: &str) -> Result<StereoRig> {
    let mut vals: HashMap<&str, (usize, &str)> = HashMap::new();
    for (ln, l) in content_lines(text) {
        let Some((k, v)) = l.split_once('=') else {
            return Err(Error::MalformedRow {
                line: ln,
                reason: "expected `key = value`".into(),
            });
        };
        let k = k.trim();
        let Some(&key) = KEYS.iter().find(|&&known| known == k) else {
            return Err(Error::UnknownKey(k.to_string()));
        };
        if vals.insert(key, (ln, v.trim())).is_some() {
            return Err(Error::MalformedRow {
                line: ln,
                reason: format!("duplicate key {key}"),
            });
        }
    }
    if let Some(k) = KEYS.iter().find(|k| !vals.contains_key(*k)) {
        return Err(Error::MissingKey(k.to_string()));
    }
    let f = |k: &str| {
        let (ln, v) = vals[k];
        parse_f64(v, ln, k)
    };
    let u = |k: &str| {
        let (ln, v) = vals[k];
        v.parse::<u32>().map_err(|_| Error::MalformedRow {
            line: ln,
            reason: format!("{k}: {v:?} is not a pixel count"),
        })
    };
    let intr = CameraIntrinsics::with_distortion(
        f("fx")?,
        f("fy")?,
        f("cx")?,
        f("cy")?,
        [f("k1")?, f("k2")?, f("k3")?, f("p1")?, f("p2")?],
        u("width")?,
        u("height")?,
    )?;
    StereoRig::new(intr, f("baseline_m")?)
}
