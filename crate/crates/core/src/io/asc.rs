//! ESRI ASCII grid, cell-center (`xllcenter`/`yllcenter`) convention.

use std::fmt::Write as _;

use super::{content_lines, parse_f64};
use crate::error::{Error, Result};
use crate::geometry::GridGeometry;
use crate::surface::{DsmGrid, DSM_NODATA};

/// Header, then one line per row from north to south, values with 3 decimals.
pub fn write_asc(d: &DsmGrid) -> String {
    let g = &d.geometry;
    let ll = g.lower_left_center();
    let mut out = String::new();
    let _ = writeln!(out, "ncols {}", g.n_cols);
    let _ = writeln!(out, "nrows {}", g.n_rows);
    let _ = writeln!(out, "xllcenter {}", ll.x);
    let _ = writeln!(out, "yllcenter {}", ll.y);
    let _ = writeln!(out, "cellsize {}", g.cell_size);
    let _ = writeln!(out, "nodata_value {}", DSM_NODATA);
    for row in d.values().chunks(g.n_cols) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            if *v == DSM_NODATA {
                out.push_str("-9999");
            } else {
                let _ = write!(out, "{v:.3}");
            }
        }
        out.push('\n');
    }
    out
}

fn header_value(line: usize, text: &str) -> Result<(String, String)> {
    let mut it = text.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(k), Some(v), None) => Ok((k.to_ascii_lowercase(), v.to_string())),
        _ => Err(Error::MalformedHeader(format!("line {line}: expected `key value`, got {text:?}"))),
    }
}

pub fn read_asc(text: &str) -> Result<DsmGrid> {
    let mut lines = content_lines(text).peekable();
    let mut ncols = None;
    let mut nrows = None;
    let mut x = None;
    let mut y = None;
    let mut corner = false;
    let mut cell = None;
    let mut nodata = DSM_NODATA;
    while let Some(&(ln, l)) = lines.peek() {
        let first = l.trim_start().chars().next().unwrap_or('0');
        if first.is_ascii_digit() || first == '-' || first == '+' || first == '.' {
            break;
        }
        lines.next();
        let (k, v) = header_value(ln, l)?;
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::MalformedHeader(format!("line {ln}: {k} = {v:?}")))
        };
        let count = |v: &str| -> Result<usize> {
            v.parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::MalformedHeader(format!("line {ln}: {k} = {v:?}")))
        };
        match k.as_str() {
            "ncols" => ncols = Some(count(&v)?),
            "nrows" => nrows = Some(count(&v)?),
            "xllcenter" | "xllcorner" => {
                corner |= k == "xllcorner";
                x = Some(num(&v)?);
            }
            "yllcenter" | "yllcorner" => {
                corner |= k == "yllcorner";
                y = Some(num(&v)?);
            }
            "cellsize" => cell = Some(num(&v)?),
            "nodata_value" => nodata = num(&v)?,
            _ => return Err(Error::MalformedHeader(format!("line {ln}: unknown key {k:?}"))),
        }
    }
    let missing = |name: &str| Error::MalformedHeader(format!("missing {name}"));
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    let (mut x, mut y) = (x.ok_or_else(|| missing("xllcenter"))?, y.ok_or_else(|| missing("yllcenter"))?);
    let cell = cell.ok_or_else(|| missing("cellsize"))?;
    if !(cell > 0.0) {
        return Err(Error::MalformedHeader(format!("cellsize {cell}")));
    }
    if corner {
        x += cell / 2.0;
        y += cell / 2.0;
    }
    let geometry = GridGeometry::new(x, y + (nrows - 1) as f64 * cell, cell, ncols, nrows)?;

    let mut values = Vec::new();
    for (ln, l) in lines {
        let before = values.len();
        for tok in l.split_whitespace() {
            let v = parse_f64(tok, ln, "cell value")?;
            values.push(if v == nodata { DSM_NODATA } else { v });
            if values.len() > geometry.len() {
                return Err(Error::DimensionMismatch(format!(
                    "more than {} values for a {ncols}x{nrows} grid",
                    geometry.len()
                )));
            }
        }
        if values.len() - before != ncols {
            return Err(Error::DimensionMismatch(format!(
                "line {ln}: {} values, expected {ncols}",
                values.len() - before
            )));
        }
    }
    if values.len() != geometry.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {ncols}x{nrows} grid",
            values.len()
        )));
    }
    DsmGrid::new(geometry, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_cell() {
        let g = GridGeometry::new(10.0, 20.0, 0.1, 1, 1).unwrap();
        let text = write_asc(&DsmGrid::new(g, vec![5.0]).unwrap());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[..6], ["ncols 1", "nrows 1", "xllcenter 10", "yllcenter 20", "cellsize 0.1", "nodata_value -9999"]);
        assert_eq!(lines[6], "5.000");
    }

    #[test]
    fn nodata_token() {
        let g = GridGeometry::new(0.0, 0.0, 1.0, 2, 1).unwrap();
        let text = write_asc(&DsmGrid::new(g, vec![DSM_NODATA, 1.25]).unwrap());
        assert!(text.ends_with("-9999 1.250\n"), "{text}");
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = GridGeometry::new(680_000.05, 3_075_059.95, 0.1, 37, 23).unwrap();
        let vals: Vec<f64> = (0..g.len())
            .map(|_| if rng.random_bool(0.1) { DSM_NODATA } else { rng.random_range(-3.0..8.0) })
            .collect();
        let d = DsmGrid::new(g, vals).unwrap();
        let back = read_asc(&write_asc(&d)).unwrap();
        assert_eq!((back.geometry.n_cols, back.geometry.n_rows), (37, 23));
        assert!((back.geometry.origin_x - g.origin_x).abs() < 1e-6);
        assert!((back.geometry.origin_y - g.origin_y).abs() < 1e-6);
        for (a, b) in d.values().iter().zip(back.values()) {
            if *a == DSM_NODATA {
                assert_eq!(*b, DSM_NODATA);
            } else {
                assert!((a - b).abs() <= 5e-4, "{a} {b}");
            }
        }
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(read_asc("ncols 2\nnrows 1\n1 2\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(
            read_asc("ncols x\nnrows 1\nxllcenter 0\nyllcenter 0\ncellsize 1\n1\n"),
            Err(Error::MalformedHeader(_))
        ));
        let hdr = "ncols 2\nnrows 2\nxllcenter 0\nyllcenter 0\ncellsize 1\nnodata_value -9999\n";
        assert!(matches!(read_asc(&format!("{hdr}1 2\n3\n")), Err(Error::DimensionMismatch(_))));
        assert!(matches!(read_asc(&format!("{hdr}1 2\n")), Err(Error::DimensionMismatch(_))));
        assert!(matches!(read_asc(&format!("{hdr}1 2\n3 4\n5 6\n")), Err(Error::DimensionMismatch(_))));
        assert!(matches!(read_asc(&format!("{hdr}1 2\n3 x\n")), Err(Error::MalformedRow { line: 8, .. })));
    }

    #[test]
    fn corner_convention_and_custom_nodata() {
        let text = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 2\nnodata_value -1\n-1 4\n";
        let d = read_asc(text).unwrap();
        assert_eq!(d.geometry.origin_x, 1.0);
        assert_eq!(d.geometry.origin_y, 1.0);
        assert_eq!(d.values(), [DSM_NODATA, 4.0]);
    }
}
