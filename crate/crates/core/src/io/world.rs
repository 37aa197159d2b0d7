//! ESRI world file: the affine placement of an axis-aligned raster.

use super::{content_lines, parse_f64};
use crate::error::{Error, Result};
use crate::geometry::GridGeometry;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldFile {
    pub x_scale: f64,
    /// Negative for north-up rasters.
    pub y_scale: f64,
    /// Center of the upper-left cell.
    pub x_ul: f64,
    pub y_ul: f64,
}

impl WorldFile {
    pub fn from_geometry(g: &GridGeometry) -> Self {
        Self {
            x_scale: g.cell_size,
            y_scale: -g.cell_size,
            x_ul: g.origin_x,
            y_ul: g.origin_y,
        }
    }
}

pub fn write_world_file(g: &GridGeometry) -> String {
    let w = WorldFile::from_geometry(g);
    format!("{}\n0\n0\n{}\n{}\n{}\n", w.x_scale, w.y_scale, w.x_ul, w.y_ul)
}

pub fn read_world_file(text: &str) -> Result<WorldFile> {
    let mut v = Vec::with_capacity(6);
    for (ln, l) in content_lines(text) {
        if v.len() == 6 {
            return Err(Error::MalformedHeader(format!("line {ln}: more than six values")));
        }
        v.push(parse_f64(l, ln, "world file value")?);
    }
    if v.len() != 6 {
        return Err(Error::MalformedHeader(format!("{} values, expected six", v.len())));
    }
    if v[1] != 0.0 || v[2] != 0.0 {
        return Err(Error::MalformedHeader("rotation terms must be zero".into()));
    }
    if !(v[0] > 0.0 && v[3] < 0.0) {
        return Err(Error::MalformedHeader(format!("pixel sizes {} and {}", v[0], v[3])));
    }
    Ok(WorldFile {
        x_scale: v[0],
        y_scale: v[3],
        x_ul: v[4],
        y_ul: v[5],
    })
}
