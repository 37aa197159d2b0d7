//! Readers and writers for the interchange formats.
//!
//! Text formats are ASCII with `\n` line endings and `.` as the decimal
//! separator; readers also accept `\r\n`. Every reader returns a typed error
//! for malformed input and never panics.

pub mod asc;
pub mod calib;
pub mod csv;
pub mod las;
pub mod pnm;
pub mod wkt;
pub mod world;

pub use asc::{read_asc, write_asc};
pub use calib::{read_calibration, write_calibration};
pub use csv::{
    parse_corners_csv, parse_gcp_csv, parse_pairs_csv, write_corners_csv, write_gcp_csv, write_pairs_csv,
};
pub use las::{read_las, write_las, LasHeader};
pub use pnm::{read_image, read_pgm, read_ppm, write_pgm, write_ppm};
pub use wkt::{parse_wkt_polygon, write_wkt_polygon};
pub use world::{read_world_file, write_world_file, WorldFile};

use crate::error::{Error, Result};

/// Interprets raw bytes as text for the line-based readers.
pub fn decode_text(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|_| Error::NotText)
}

/// Parses a finite decimal number.
pub(crate) fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64> {
    match tok.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::MalformedRow {
            line,
            reason: format!("{what}: {:?} is not a finite number", tok.trim()),
        }),
    }
}

/// Lines with their 1-based numbers, `\r` stripped, blank lines and `#`
/// comments skipped.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
}
