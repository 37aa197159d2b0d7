//! Comma-separated point lists: GCPs, registration pairs and calibration corners.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use super::{content_lines, parse_f64};
use crate::calibration::CalibrationView;
use crate::error::{Error, Result};
use crate::geometry::{Point2, Point3};
use crate::georectify::Gcp;
use crate::registration::{PointPair, PointPairSet};

const GCP_HEADER: &str = "id,easting,northing,elevation";
const GCP_HEADER_PX: &str = "id,easting,northing,elevation,px,py";
const PAIRS_HEADER: &str = "id,sx,sy,sz,tx,ty,tz";
const CORNERS_HEADER: &str = "view_index,corner_index,px,py";

fn fields(l: &str) -> Vec<&str> {
    l.split(',').map(str::trim).collect()
}

/// Consumes the header line and checks it against the accepted spellings.
fn expect_header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    accepted: &[&str],
) -> Result<()> {
    let Some((ln, l)) = lines.next() else {
        return Err(Error::MalformedHeader("empty file".into()));
    };
    let got = fields(l).join(",").to_ascii_lowercase();
    if accepted.contains(&got.as_str()) {
        Ok(())
    } else {
        Err(Error::MalformedHeader(format!("line {ln}: expected {:?}, got {l:?}", accepted[0])))
    }
}

fn check_id(id: &str, line: usize) -> Result<()> {
    if id.is_empty() {
        return Err(Error::MalformedRow {
            line,
            reason: "empty id".into(),
        });
    }
    Ok(())
}

fn column_count(got: usize, expected: &[usize], line: usize) -> Result<()> {
    if expected.contains(&got) {
        Ok(())
    } else {
        Err(Error::MalformedRow {
            line,
            reason: format!("{got} columns, expected {expected:?}"),
        })
    }
}

/// `id,easting,northing,elevation[,px,py]`. Empty `px,py` means the point
/// was not observed in the image.
pub fn parse_gcp_csv(text: &str) -> Result<Vec<Gcp>> {
    let mut lines = content_lines(text);
    expect_header(&mut lines, &[GCP_HEADER_PX, GCP_HEADER])?;
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (ln, l) in lines {
        let f = fields(l);
        column_count(f.len(), &[4, 6], ln)?;
        check_id(f[0], ln)?;
        let world = Point3::new(
            parse_f64(f[1], ln, "easting")?,
            parse_f64(f[2], ln, "northing")?,
            parse_f64(f[3], ln, "elevation")?,
        );
        let image = match f.get(4..6) {
            None | Some(["", ""]) => None,
            Some([px, py]) if !px.is_empty() && !py.is_empty() => {
                Some(Point2::new(parse_f64(px, ln, "px")?, parse_f64(py, ln, "py")?))
            }
            Some(_) => {
                return Err(Error::MalformedRow {
                    line: ln,
                    reason: "px and py must both be present or both be empty".into(),
                })
            }
        };
        if !ids.insert(f[0].to_string()) {
            return Err(Error::DuplicateId(f[0].to_string()));
        }
        out.push(Gcp::new(f[0], world, image));
    }
    Ok(out)
}

pub fn write_gcp_csv(gcps: &[Gcp]) -> String {
    let mut out = format!("{GCP_HEADER_PX}\n");
    for g in gcps {
        let _ = write!(out, "{},{},{},{},", g.id, g.world.x, g.world.y, g.world.z);
        match g.image {
            Some(p) => {
                let _ = writeln!(out, "{},{}", p.x, p.y);
            }
            None => out.push_str(",\n"),
        }
    }
    out
}

/// `id,sx,sy,sz,tx,ty,tz`: source in the cloud frame, target in world meters.
pub fn parse_pairs_csv(text: &str) -> Result<PointPairSet> {
    let mut lines = content_lines(text);
    expect_header(&mut lines, &[PAIRS_HEADER])?;
    let mut pairs = Vec::new();
    for (ln, l) in lines {
        let f = fields(l);
        column_count(f.len(), &[7], ln)?;
        check_id(f[0], ln)?;
        let mut v = [0.0; 6];
        for (i, name) in ["sx", "sy", "sz", "tx", "ty", "tz"].iter().enumerate() {
            v[i] = parse_f64(f[i + 1], ln, name)?;
        }
        pairs.push(PointPair::new(
            f[0],
            Point3::new(v[0], v[1], v[2]),
            Point3::new(v[3], v[4], v[5]),
        ));
    }
    PointPairSet::new(pairs)
}

pub fn write_pairs_csv(set: &PointPairSet) -> String {
    let mut out = format!("{PAIRS_HEADER}\n");
    for p in set.pairs() {
        let (s, t) = (p.source, p.target);
        let _ = writeln!(out, "{},{},{},{},{},{},{}", p.id, s.x, s.y, s.z, t.x, t.y, t.z);
    }
    out
}

fn parse_index(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse().map_err(|_| Error::MalformedRow {
        line,
        reason: format!("{what}: {tok:?} is not a non-negative integer"),
    })
}

/// `view_index,corner_index,px,py`. Rows may come in any order, but views
/// must be numbered `0..V` and every view must list corners `0..N` with the
/// same `N`.
pub fn parse_corners_csv(text: &str) -> Result<Vec<CalibrationView>> {
    let mut lines = content_lines(text);
    expect_header(&mut lines, &[CORNERS_HEADER])?;
    let mut views: BTreeMap<usize, BTreeMap<usize, Point2>> = BTreeMap::new();
    let mut last_line = 1;
    for (ln, l) in lines {
        last_line = ln;
        let f = fields(l);
        column_count(f.len(), &[4], ln)?;
        let v = parse_index(f[0], ln, "view_index")?;
        let c = parse_index(f[1], ln, "corner_index")?;
        let p = Point2::new(parse_f64(f[2], ln, "px")?, parse_f64(f[3], ln, "py")?);
        if views.entry(v).or_default().insert(c, p).is_some() {
            return Err(Error::MalformedRow {
                line: ln,
                reason: format!("corner {c} of view {v} listed twice"),
            });
        }
    }
    let gap = |reason: String| Error::MalformedRow {
        line: last_line,
        reason,
    };
    let mut out = Vec::with_capacity(views.len());
    let mut per_view = None;
    for (expect, (v, corners)) in views.into_iter().enumerate() {
        if v != expect {
            return Err(gap(format!("view {expect} is missing")));
        }
        if let Some((i, _)) = corners.keys().enumerate().find(|(i, c)| *i != **c) {
            return Err(gap(format!("view {v} is missing corner {i}")));
        }
        match per_view {
            None => per_view = Some(corners.len()),
            Some(n) if n != corners.len() => {
                return Err(gap(format!("view {v} has {} corners, view 0 has {n}", corners.len())))
            }
            _ => {}
        }
        out.push(CalibrationView::new(corners.into_values().collect()));
    }
    Ok(out)
}

pub fn write_corners_csv(views: &[CalibrationView]) -> String {
    let mut out = format!("{CORNERS_HEADER}\n");
    for (v, view) in views.iter().enumerate() {
        for (c, p) in view.image_points.iter().enumerate() {
            let _ = writeln!(out, "{v},{c},{},{}", p.x, p.y);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gcp_row_with_observation() {
        let g = parse_gcp_csv("id,easting,northing,elevation,px,py\ng1,680000.10,3075000.20,1.50,812.3,455.7\n").unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].id, "g1");
        assert_eq!(g[0].world, Point3::new(680000.10, 3075000.20, 1.50));
        assert_eq!(g[0].image, Some(Point2::new(812.3, 455.7)));
    }

    #[test]
    fn gcp_rows_without_observation() {
        let text = "id,easting,northing,elevation,px,py\ng1,1,2,3,,\ng2,4,5,6\n";
        let g = parse_gcp_csv(text).unwrap();
        assert!(g.iter().all(|g| g.image.is_none()));
        assert_eq!(parse_gcp_csv("id,easting,northing,elevation\r\ng1,1,2,3\r\n").unwrap().len(), 1);
    }

    #[test]
    fn gcp_errors() {
        let h = "id,easting,northing,elevation,px,py\n";
        assert!(matches!(parse_gcp_csv(&format!("{h}g1,1,2,3\ng1,4,5,6\n")), Err(Error::DuplicateId(id)) if id == "g1"));
        assert!(matches!(parse_gcp_csv(&format!("{h}g1,1,2\n")), Err(Error::MalformedRow { line: 2, .. })));
        assert!(matches!(parse_gcp_csv(&format!("{h}g1,1,x,3\n")), Err(Error::MalformedRow { line: 2, .. })));
        assert!(matches!(parse_gcp_csv(&format!("{h}g1,1,2,3,4,\n")), Err(Error::MalformedRow { .. })));
        assert!(matches!(parse_gcp_csv(&format!("{h}g1,1,2,nan\n")), Err(Error::MalformedRow { .. })));
        assert!(matches!(parse_gcp_csv("a,b,c\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(parse_gcp_csv(""), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn gcp_round_trip() {
        let gcps = vec![
            Gcp::new("a", Point3::new(680000.123456789, 3075000.1, 1.0 / 3.0), Some(Point2::new(0.1, 1e-7))),
            Gcp::new("b", Point3::new(-1.0, 2.0, 3.0), None),
        ];
        assert_eq!(parse_gcp_csv(&write_gcp_csv(&gcps)).unwrap(), gcps);
    }

    #[test]
    fn pairs_round_trip_and_errors() {
        let set = PointPairSet::new(vec![
            PointPair::new("p1", Point3::new(0.1, 0.2, 0.3), Point3::new(680000.0, 3075000.0, 1.5)),
            PointPair::new("p2", Point3::new(1.0, 0.0, 0.0), Point3::new(680001.0, 3075000.0, 1.5)),
        ])
        .unwrap();
        assert_eq!(parse_pairs_csv(&write_pairs_csv(&set)).unwrap(), set);
        let h = "id,sx,sy,sz,tx,ty,tz\n";
        assert!(matches!(parse_pairs_csv(&format!("{h}a,1,2,3,4,5\n")), Err(Error::MalformedRow { .. })));
        assert!(matches!(
            parse_pairs_csv(&format!("{h}a,1,2,3,4,5,6\na,0,0,0,1,1,1\n")),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn corners_any_order() {
        let text = "view_index,corner_index,px,py\n1,1,4,4\n0,1,2,2\n1,0,3,3\n0,0,1,1\n";
        let views = parse_corners_csv(text).unwrap();
        assert_eq!(views.len(), 2);
        assert_eq!(views[0].image_points, [Point2::new(1.0, 1.0), Point2::new(2.0, 2.0)]);
        assert_eq!(views[1].image_points, [Point2::new(3.0, 3.0), Point2::new(4.0, 4.0)]);
        assert_eq!(parse_corners_csv(&write_corners_csv(&views)).unwrap(), views);
    }

    #[test]
    fn corners_must_be_dense() {
        let h = "view_index,corner_index,px,py\n";
        assert!(parse_corners_csv(&format!("{h}0,0,1,1\n0,2,1,1\n")).is_err());
        assert!(parse_corners_csv(&format!("{h}0,0,1,1\n2,0,1,1\n")).is_err());
        assert!(parse_corners_csv(&format!("{h}0,0,1,1\n0,1,1,1\n1,0,1,1\n")).is_err());
        assert!(parse_corners_csv(&format!("{h}0,0,1,1\n0,0,2,2\n")).is_err());
        assert!(parse_corners_csv(&format!("{h}-1,0,1,1\n")).is_err());
    }
}
