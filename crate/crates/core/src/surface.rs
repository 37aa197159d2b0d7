//! Delaunay TIN, DSM rasterization, polygon clipping and vertical checks.
//!
//! Triangulation is incremental Bowyer-Watson. The bootstrap triangle's
//! outer vertex sits at infinity ("ghost" triangles hang off every hull
//! edge), so the result is the exact Delaunay triangulation of the input with
//! a convex hull, and all orientation and in-circle decisions use adaptive
//! exact predicates.

use std::collections::HashMap;

use robust::{incircle, orient2d, Coord};
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{GridGeometry, Point2, Point3, DEFAULT_MAX_CELLS};
use crate::georectify::Gcp;

/// Elevation sentinel for cells without data.
pub const DSM_NODATA: f64 = -9999.0;

/// Default DSM cell size in meters.
pub const DEFAULT_DSM_CELL: f64 = 0.10;

/// Default maximum triangle edge length kept when rasterizing, in meters.
pub const DEFAULT_KILL: f64 = 1.0;

/// Points closer than this in xy are merged.
pub const DEDUP_TOLERANCE: f64 = 1e-9;

const GHOST: usize = usize::MAX;
const NONE: usize = usize::MAX;

fn coord(p: Point2) -> Coord<f64> {
    Coord { x: p.x, y: p.y }
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    orient2d(coord(a), coord(b), coord(c))
}

/// Triangulated irregular network over the xy-projection of a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct Tin {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    /// `neighbors[t][i]` is the triangle across the edge opposite vertex `i`.
    neighbors: Vec<[Option<usize>; 3]>,
    hull_size: usize,
}

impl Tin {
    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    /// Counterclockwise vertex-index triples.
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Number of edges on the convex hull.
    pub fn hull_size(&self) -> usize {
        self.hull_size
    }

    fn xy(&self, i: usize) -> Point2 {
        self.vertices[i].xy()
    }

    /// Longest xy edge of triangle `t`.
    pub fn max_edge(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.xy(a), self.xy(b), self.xy(c));
        pa.distance(&pb).max(pb.distance(&pc)).max(pc.distance(&pa))
    }

    /// Triangle containing `p` (boundary included), walking from `start`.
    pub fn locate(&self, p: Point2, start: Option<usize>) -> Option<usize> {
        if !p.is_finite() || self.triangles.is_empty() {
            return None;
        }
        let mut t = start.filter(|&s| s < self.triangles.len()).unwrap_or(0);
        let limit = self.triangles.len() + 8;
        'walk: for _ in 0..limit {
            let tri = self.triangles[t];
            for i in 0..3 {
                let (a, b) = (self.xy(tri[(i + 1) % 3]), self.xy(tri[(i + 2) % 3]));
                if orient(a, b, p) < 0.0 {
                    {
                        let n = self.neighbors[t][i]?;
                        t = n;
                        continue 'walk;
                    }
                }
            }
            return Some(t);
        }
        self.locate_by_scan(p)
    }

    fn locate_by_scan(&self, p: Point2) -> Option<usize> {
        (0..self.triangles.len()).find(|&t| {
            let tri = self.triangles[t];
            (0..3).all(|i| orient(self.xy(tri[(i + 1) % 3]), self.xy(tri[(i + 2) % 3]), p) >= 0.0)
        })
    }

    /// Linear interpolation inside triangle `t`.
    fn interpolate_in(&self, t: usize, p: Point2) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
        let l2 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) / det;
        let l3 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / det;
        a.z + l2 * (b.z - a.z) + l3 * (c.z - a.z)
    }

    /// Surface elevation at `p`, `None` outside the hull.
    pub fn interpolate_z(&self, p: Point2) -> Option<f64> {
        self.locate(p, None).map(|t| self.interpolate_in(t, p))
    }
}

/// Merges points within [`DEDUP_TOLERANCE`] in xy, keeping the higher z at
/// the position of the first occurrence.
fn dedup(points: &[Point3]) -> Vec<Point3> {
    let cell = DEDUP_TOLERANCE;
    let key = |p: &Point3| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut out: Vec<Point3> = Vec::with_capacity(points.len());
    for p in points {
        let (kx, ky) = key(p);
        let mut hit = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = buckets.get(&(kx + dx, ky + dy)) {
                    for &i in list {
                        if out[i].xy().distance(&p.xy()) <= DEDUP_TOLERANCE {
                            hit = Some(i);
                            break 'search;
                        }
                    }
                }
            }
        }
        match hit {
            Some(i) => out[i].z = out[i].z.max(p.z),
            None => {
                buckets.entry((kx, ky)).or_default().push(out.len());
                out.push(*p);
            }
        }
    }
    out
}

struct Builder {
    pts: Vec<Point2>,
    tris: Vec<[usize; 3]>,
    nbr: Vec<[usize; 3]>,
    alive: Vec<bool>,
    free: Vec<usize>,
    mark: Vec<u32>,
    stamp: u32,
    hint: usize,
}

impl Builder {
    fn is_ghost(&self, t: usize) -> bool {
        self.tris[t][2] == GHOST
    }

    fn in_conflict(&self, t: usize, p: Point2) -> bool {
        let [a, b, c] = self.tris[t];
        let (pa, pb) = (self.pts[a], self.pts[b]);
        if c == GHOST {
            let o = orient(pa, pb, p);
            if o != 0.0 {
                return o > 0.0;
            }
            let ab = (pb.x - pa.x, pb.y - pa.y);
            let along = (p.x - pa.x) * ab.0 + (p.y - pa.y) * ab.1;
            return along > 0.0 && along < ab.0 * ab.0 + ab.1 * ab.1;
        }
        incircle(coord(pa), coord(pb), coord(self.pts[c]), coord(p)) > 0.0
    }

    fn alloc(&mut self, tri: [usize; 3], nbr: [usize; 3]) -> usize {
        if let Some(t) = self.free.pop() {
            self.tris[t] = tri;
            self.nbr[t] = nbr;
            self.alive[t] = true;
            t
        } else {
            self.tris.push(tri);
            self.nbr.push(nbr);
            self.alive.push(true);
            self.mark.push(0);
            self.tris.len() - 1
        }
    }

    fn new(pts: Vec<Point2>, a: usize, b: usize, c: usize) -> Self {
        let (b, c) = if orient(pts[a], pts[b], pts[c]) > 0.0 { (b, c) } else { (c, b) };
        let mut s = Self {
            pts,
            tris: Vec::new(),
            nbr: Vec::new(),
            alive: Vec::new(),
            free: Vec::new(),
            mark: Vec::new(),
            stamp: 0,
            hint: 0,
        };
        // 0 = real, 1..=3 ghosts across (b,c), (c,a), (a,b)
        s.alloc([a, b, c], [1, 2, 3]);
        s.alloc([c, b, GHOST], [3, 2, 0]);
        s.alloc([a, c, GHOST], [1, 3, 0]);
        s.alloc([b, a, GHOST], [2, 1, 0]);
        s
    }

    fn locate_conflict(&self, p: Point2) -> usize {
        let mut t = self.hint;
        let limit = self.tris.len() + 8;
        'walk: for _ in 0..limit {
            if self.is_ghost(t) {
                if self.in_conflict(t, p) {
                    return t;
                }
                break;
            }
            let tri = self.tris[t];
            for i in 0..3 {
                if orient(self.pts[tri[(i + 1) % 3]], self.pts[tri[(i + 2) % 3]], p) < 0.0 {
                    t = self.nbr[t][i];
                    continue 'walk;
                }
            }
            return t;
        }
        (0..self.tris.len())
            .find(|&t| self.alive[t] && self.in_conflict(t, p))
            .expect("every point conflicts with some triangle")
    }

    fn insert(&mut self, pi: usize) {
        let p = self.pts[pi];
        let seed = self.locate_conflict(p);
        self.stamp += 1;
        let stamp = self.stamp;
        self.mark[seed] = stamp;
        let mut cavity = vec![seed];
        let mut k = 0;
        while k < cavity.len() {
            let t = cavity[k];
            k += 1;
            for i in 0..3 {
                let n = self.nbr[t][i];
                if self.mark[n] != stamp && self.in_conflict(n, p) {
                    self.mark[n] = stamp;
                    cavity.push(n);
                }
            }
        }

        // Boundary edges (u, v) in cavity-triangle order, with the outside triangle.
        let mut boundary = Vec::new();
        for &t in &cavity {
            let tri = self.tris[t];
            for i in 0..3 {
                let n = self.nbr[t][i];
                if self.mark[n] != stamp {
                    // Resolve the back-pointer now: cavity slots get reused below.
                    let j = (0..3).find(|&j| self.nbr[n][j] == t).expect("adjacency is symmetric");
                    boundary.push((tri[(i + 1) % 3], tri[(i + 2) % 3], n, j));
                }
            }
        }
        for &t in &cavity {
            self.alive[t] = false;
        }
        self.free.extend(cavity.iter().rev());

        let mut created = Vec::with_capacity(boundary.len());
        let mut by_u = HashMap::with_capacity(boundary.len());
        let mut by_v = HashMap::with_capacity(boundary.len());
        for &(u, v, outside, j) in &boundary {
            let t = self.alloc([u, v, pi], [NONE, NONE, outside]);
            self.nbr[outside][j] = t;
            by_u.insert(u, t);
            by_v.insert(v, t);
            created.push(t);
        }
        for &t in &created {
            let [u, v, _] = self.tris[t];
            self.nbr[t][0] = by_u[&v];
            self.nbr[t][1] = by_v[&u];
        }
        for &t in &created {
            let [u, v, w] = self.tris[t];
            let n = self.nbr[t];
            if u == GHOST {
                self.tris[t] = [v, w, u];
                self.nbr[t] = [n[1], n[2], n[0]];
            } else if v == GHOST {
                self.tris[t] = [w, u, v];
                self.nbr[t] = [n[2], n[0], n[1]];
            } else {
                self.hint = t;
            }
        }
    }

    fn finish(self, vertices: Vec<Point3>) -> Tin {
        let mut index = vec![NONE; self.tris.len()];
        let mut triangles = Vec::new();
        let mut hull_size = 0;
        for t in 0..self.tris.len() {
            if !self.alive[t] {
                continue;
            }
            if self.is_ghost(t) {
                hull_size += 1;
            } else {
                index[t] = triangles.len();
                triangles.push(self.tris[t]);
            }
        }
        let mut neighbors = Vec::with_capacity(triangles.len());
        for t in 0..self.tris.len() {
            if index[t] != NONE {
                neighbors.push(self.nbr[t].map(|n| (index[n] != NONE).then_some(index[n])));
            }
        }
        Tin {
            vertices,
            triangles,
            neighbors,
            hull_size,
        }
    }
}

/// Delaunay triangulation of arbitrary points (xy), inserted in input order
/// after deduplication.
pub fn build_tin_from_points(points: &[Point3]) -> Result<Tin> {
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite);
    }
    let vertices = dedup(points);
    if vertices.len() < 3 {
        return Err(Error::TooFewPoints(vertices.len()));
    }
    let pts: Vec<Point2> = vertices.iter().map(Point3::xy).collect();
    let third = (2..pts.len())
        .find(|&k| orient(pts[0], pts[1], pts[k]) != 0.0)
        .ok_or(Error::CollinearInput)?;
    let mut b = Builder::new(pts, 0, 1, third);
    for i in (2..vertices.len()).filter(|&i| i != third) {
        b.insert(i);
    }
    Ok(b.finish(vertices))
}

pub fn build_tin(cloud: &PointCloud) -> Result<Tin> {
    let pts: Vec<Point3> = cloud.positions().collect();
    build_tin_from_points(&pts)
}

/// Raster of elevations; [`DSM_NODATA`] marks empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DsmGrid {
    pub geometry: GridGeometry,
    values: Vec<f64>,
}

impl DsmGrid {
    pub fn new(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                geometry.n_cols,
                geometry.n_rows
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { geometry, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        let v = self.values[row * self.geometry.n_cols + col];
        (v != DSM_NODATA).then_some(v)
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != DSM_NODATA).count()
    }
}

/// Samples the TIN at every cell center. Cells outside the hull, or inside a
/// triangle with an edge longer than `kill`, are NODATA.
pub fn rasterize_tin(tin: &Tin, geom: &GridGeometry, kill: f64) -> Result<DsmGrid> {
    if !(kill > 0.0) {
        return Err(Error::InvalidKillDistance(kill));
    }
    let cells = (geom.n_cols as u64).saturating_mul(geom.n_rows as u64);
    if cells > DEFAULT_MAX_CELLS {
        return Err(Error::GridTooLarge {
            cells,
            cap: DEFAULT_MAX_CELLS,
        });
    }
    let killed: Vec<bool> = (0..tin.triangles.len()).map(|t| tin.max_edge(t) > kill).collect();
    let mut values = Vec::with_capacity(geom.len());
    let mut hint = None;
    for row in 0..geom.n_rows {
        for col in 0..geom.n_cols {
            let c = geom.cell_center(col, row);
            let v = match tin.locate(c, hint) {
                Some(t) => {
                    hint = Some(t);
                    if killed[t] {
                        DSM_NODATA
                    } else {
                        tin.interpolate_in(t, c)
                    }
                }
                None => DSM_NODATA,
            };
            values.push(v);
        }
    }
    DsmGrid::new(*geom, values)
}

/// Clip region: an outer ring with optional holes. Rings are stored closed,
/// the outer one counterclockwise and holes clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipPolygon {
    outer: Vec<Point2>,
    holes: Vec<Vec<Point2>>,
}

fn signed_area(ring: &[Point2]) -> f64 {
    ring.windows(2).map(|w| w[0].x * w[1].y - w[1].x * w[0].y).sum::<f64>() / 2.0
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_touch(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

fn ring_self_intersects(ring: &[Point2]) -> bool {
    let n = ring.len() - 1;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b, c, d) = (ring[i], ring[i + 1], ring[j], ring[j + 1]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Consecutive edges may only share their common vertex.
                let (shared, x, y) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                if orient(x, shared, y) == 0.0 && (x.x - shared.x) * (y.x - shared.x) + (x.y - shared.y) * (y.y - shared.y) > 0.0 {
                    return true;
                }
            } else if segments_touch(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

fn check_ring(ring: &[Point2], index: usize) -> Result<()> {
    if ring.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite);
    }
    if ring.len() < 2 || ring.first() != ring.last() {
        return Err(Error::OpenRing(index));
    }
    if ring.len() < 4 {
        return Err(Error::InvalidPolygon(format!("ring {index} has fewer than 3 vertices")));
    }
    if ring_self_intersects(ring) {
        return Err(Error::SelfIntersection(index));
    }
    if signed_area(ring) == 0.0 {
        return Err(Error::InvalidPolygon(format!("ring {index} has zero area")));
    }
    Ok(())
}

impl ClipPolygon {
    /// Validates and orients the rings. Ring 0 is the outer ring.
    pub fn new(outer: Vec<Point2>, holes: Vec<Vec<Point2>>) -> Result<Self> {
        check_ring(&outer, 0)?;
        for (i, h) in holes.iter().enumerate() {
            check_ring(h, i + 1)?;
        }
        let orient_ring = |mut r: Vec<Point2>, ccw: bool| {
            if (signed_area(&r) > 0.0) != ccw {
                r.reverse();
            }
            r
        };
        Ok(Self {
            outer: orient_ring(outer, true),
            holes: holes.into_iter().map(|h| orient_ring(h, false)).collect(),
        })
    }

    pub fn outer(&self) -> &[Point2] {
        &self.outer
    }

    pub fn holes(&self) -> &[Vec<Point2>] {
        &self.holes
    }

    /// Even-odd test over all rings.
    pub fn contains(&self, p: Point2) -> bool {
        let mut inside = false;
        for ring in std::iter::once(&self.outer).chain(&self.holes) {
            for w in ring.windows(2) {
                let (a, b) = (w[0], w[1]);
                if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

/// Sets every cell whose center lies outside the polygon to NODATA.
pub fn clip_dsm(d: &DsmGrid, poly: &ClipPolygon) -> DsmGrid {
    let g = &d.geometry;
    let mut values = d.values.clone();
    for row in 0..g.n_rows {
        for col in 0..g.n_cols {
            if !poly.contains(g.cell_center(col, row)) {
                values[row * g.n_cols + col] = DSM_NODATA;
            }
        }
    }
    DsmGrid {
        geometry: *g,
        values,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcpDz {
    pub id: String,
    /// `None` when the GCP lies outside the surface.
    pub surface_z: Option<f64>,
    /// `surface_z − gcp z`.
    pub dz: Option<f64>,
}

/// Surface-minus-survey elevation differences. Statistics cover only GCPs
/// inside the surface and are `None` when there are none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerticalCheckReport {
    pub per_gcp: Vec<GcpDz>,
    pub mean_dz: Option<f64>,
    pub rmse_dz: Option<f64>,
    pub max_abs_dz: Option<f64>,
    pub inside_count: usize,
    pub outside_count: usize,
}

pub fn vertical_check(tin: &Tin, gcps: &[Gcp]) -> Result<VerticalCheckReport> {
    if gcps.is_empty() {
        return Err(Error::EmptyGcpSet);
    }
    let per_gcp: Vec<GcpDz> = gcps
        .iter()
        .map(|g| {
            let surface_z = tin.interpolate_z(g.world.xy());
            GcpDz {
                id: g.id.clone(),
                surface_z,
                dz: surface_z.map(|z| z - g.world.z),
            }
        })
        .collect();
    let dz: Vec<f64> = per_gcp.iter().filter_map(|g| g.dz).collect();
    let n = dz.len();
    let (mean_dz, rmse_dz, max_abs_dz) = if n == 0 {
        (None, None, None)
    } else {
        let nf = n as f64;
        (
            Some(dz.iter().sum::<f64>() / nf),
            Some((dz.iter().map(|d| d * d).sum::<f64>() / nf).sqrt()),
            Some(dz.iter().fold(0.0f64, |m, d| m.max(d.abs()))),
        )
    };
    Ok(VerticalCheckReport {
        outside_count: per_gcp.len() - n,
        inside_count: n,
        per_gcp,
        mean_dz,
        rmse_dz,
        max_abs_dz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::CloudPoint;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64, z: impl Fn(f64, f64) -> f64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (x, y) = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
                Point3::new(x, y, z(x, y))
            })
            .collect()
    }

    /// Circumcircle test written from the circumcenter, independent of the
    /// predicates used by the triangulator.
    fn assert_delaunay(tin: &Tin) {
        let v = tin.vertices();
        for t in tin.triangles() {
            let [a, b, c] = t.map(|i| v[i].xy());
            let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
            assert!(d > 0.0, "triangle {t:?} is not counterclockwise");
            let (a2, b2, c2) = (a.x * a.x + a.y * a.y, b.x * b.x + b.y * b.y, c.x * c.x + c.y * c.y);
            let ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
            let uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
            let center = Point2::new(ux, uy);
            let r = center.distance(&a);
            for (k, q) in v.iter().enumerate() {
                if t.contains(&k) {
                    continue;
                }
                let dist = center.distance(&q.xy());
                assert!(dist >= r - 1e-9 * r.max(1.0), "vertex {k} inside circumcircle of {t:?}");
            }
        }
    }

    /// Andrew's monotone chain; counts strict hull vertices.
    fn hull_count(points: &[Point2]) -> usize {
        let mut p = points.to_vec();
        p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        let cross = |o: Point2, a: Point2, b: Point2| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
        let mut hull: Vec<Point2> = Vec::new();
        for pass in 0..2 {
            let start = hull.len();
            let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
            for &q in iter {
                while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                    hull.pop();
                }
                hull.push(q);
            }
            hull.pop();
        }
        hull.len()
    }

    #[test]
    fn single_triangle() {
        let tin = build_tin_from_points(&[
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(0.0, 1.0, 2.0),
            Point3::new(1.0, 0.0, 3.0),
        ])
        .unwrap();
        assert_eq!(tin.triangles().len(), 1);
        assert_eq!(tin.hull_size(), 3);
        assert_delaunay(&tin);
    }

    #[test]
    fn unit_square_gives_two_triangles() {
        let pts = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let tin = build_tin_from_points(&pts).unwrap();
        assert_eq!(tin.triangles().len(), 2);
        // Both diagonals are Delaunay for a square: the fourth vertex sits on
        // the circumcircle, never strictly inside it.
        assert_delaunay(&tin);
        // Slightly skewed square: only the short diagonal is legal.
        let skew = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.2, 1.0, 0.0),
            Point3::new(0.2, 1.0, 0.0),
        ];
        let tin = build_tin_from_points(&skew).unwrap();
        let diag_ok = tin.triangles().iter().all(|t| t.contains(&1) && t.contains(&3));
        assert!(diag_ok, "{:?}", tin.triangles());
    }

    #[test]
    fn random_clouds_are_delaunay_and_satisfy_euler() {
        for seed in 0..5 {
            let pts = random_cloud(1000, seed, |x, y| x + y);
            let tin = build_tin_from_points(&pts).unwrap();
            assert_delaunay(&tin);
            let n = tin.vertices().len();
            let xy: Vec<Point2> = tin.vertices().iter().map(Point3::xy).collect();
            let h = hull_count(&xy);
            assert_eq!(tin.hull_size(), h);
            assert_eq!(tin.triangles().len(), 2 * n - h - 2);
        }
    }

    #[test]
    fn lattice_with_collinear_and_cocircular_points() {
        let pts: Vec<Point3> = (0..15)
            .flat_map(|i| (0..12).map(move |j| Point3::new(i as f64 * 0.5, j as f64 * 0.5, 0.0)))
            .collect();
        let tin = build_tin_from_points(&pts).unwrap();
        assert_delaunay(&tin);
        // 15×12 lattice: every square cell split in two
        assert_eq!(tin.triangles().len(), 2 * 14 * 11);
        assert_eq!(tin.hull_size(), 2 * (14 + 11));
    }

    #[test]
    fn errors_on_degenerate_input() {
        assert_eq!(
            build_tin_from_points(&[Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 0.0)]),
            Err(Error::TooFewPoints(2))
        );
        let line: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert_eq!(build_tin_from_points(&line), Err(Error::CollinearInput));
        let dupes = [Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, 1.0), Point3::new(1e-10, 0.0, 2.0)];
        assert_eq!(build_tin_from_points(&dupes), Err(Error::TooFewPoints(1)));
    }

    #[test]
    fn duplicates_keep_the_higher_z() {
        let pts = [
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(4.0, 0.0, 1.0),
            Point3::new(0.0, 4.0, 1.0),
            Point3::new(1.0, 1.0, 1.0),
            Point3::new(1.0 + 5e-10, 1.0, 3.0),
        ];
        let tin = build_tin_from_points(&pts).unwrap();
        assert_eq!(tin.vertices().len(), 4);
        assert_eq!(tin.vertices()[3], Point3::new(1.0, 1.0, 3.0));
        assert_eq!(tin.interpolate_z(Point2::new(1.0, 1.0)), Some(3.0));
    }

    #[test]
    fn constant_field_is_exact() {
        let tin = build_tin_from_points(&random_cloud(300, 7, |_, _| 5.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let p = Point2::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
            if let Some(z) = tin.interpolate_z(p) {
                assert_eq!(z, 5.0);
            }
        }
    }

    #[test]
    fn planar_field_is_reproduced() {
        let plane = |x: f64, y: f64| 2.0 * x + 3.0 * y + 1.0;
        let tin = build_tin_from_points(&random_cloud(400, 9, plane)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut inside = 0;
        for _ in 0..1000 {
            let p = Point2::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
            if let Some(z) = tin.interpolate_z(p) {
                inside += 1;
                assert!((z - plane(p.x, p.y)).abs() < 1e-9);
            }
        }
        assert!(inside > 900);
    }

    #[test]
    fn outside_hull_is_none() {
        let tin = build_tin_from_points(&random_cloud(50, 11, |_, _| 0.0)).unwrap();
        assert_eq!(tin.interpolate_z(Point2::new(-1.0, 5.0)), None);
        assert_eq!(tin.interpolate_z(Point2::new(50.0, 50.0)), None);
        assert_eq!(tin.interpolate_z(Point2::new(f64::NAN, 0.0)), None);
    }

    fn dense_plane(z: f64, step: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> Vec<Point3> {
        let (nx, ny) = (((x1 - x0) / step).round() as usize, ((y1 - y0) / step).round() as usize);
        (0..=nx)
            .flat_map(|i| (0..=ny).map(move |j| Point3::new(x0 + i as f64 * step, y0 + j as f64 * step, z)))
            .collect()
    }

    #[test]
    fn planar_cloud_rasterizes_constant() {
        let tin = build_tin_from_points(&dense_plane(5.0, 0.25, 0.0, 10.0, 0.0, 10.0)).unwrap();
        let geom = GridGeometry::new(-0.95, 10.95, 0.1, 120, 120).unwrap();
        let dsm = rasterize_tin(&tin, &geom, f64::INFINITY).unwrap();
        let mut valid = 0;
        for row in 0..120 {
            for col in 0..120 {
                let c = geom.cell_center(col, row);
                let inside = (0.0..=10.0).contains(&c.x) && (0.0..=10.0).contains(&c.y);
                match dsm.get(col, row) {
                    Some(z) => {
                        assert!((z - 5.0).abs() <= 1e-9);
                        valid += 1;
                    }
                    None => assert!(!inside, "{c:?}"),
                }
            }
        }
        assert_eq!(valid, 100 * 100);
    }

    #[test]
    fn kill_distance_opens_a_gap() {
        let mut pts = dense_plane(1.0, 0.2, 0.0, 4.0, 0.0, 4.0);
        pts.extend(dense_plane(1.0, 0.2, 14.0, 18.0, 0.0, 4.0));
        let tin = build_tin_from_points(&pts).unwrap();
        let geom = GridGeometry::new(0.05, 3.95, 0.1, 180, 40).unwrap();
        let open = rasterize_tin(&tin, &geom, f64::INFINITY).unwrap();
        let killed = rasterize_tin(&tin, &geom, 1.0).unwrap();
        for row in 0..40 {
            for col in 0..180 {
                let x = geom.cell_center(col, row).x;
                if (4.5..13.5).contains(&x) {
                    assert_eq!(killed.get(col, row), None, "x = {x}");
                    assert!(open.get(col, row).is_some());
                }
                if !(3.9..=14.1).contains(&x) {
                    assert!(killed.get(col, row).is_some(), "x = {x}");
                }
            }
        }
        // Kill only ever substitutes NODATA.
        for (a, b) in open.values().iter().zip(killed.values()) {
            assert!(*b == DSM_NODATA || a == b);
        }
    }

    #[test]
    fn invalid_kill_is_rejected() {
        let tin = build_tin_from_points(&random_cloud(10, 1, |_, _| 0.0)).unwrap();
        let geom = GridGeometry::new(0.0, 0.0, 1.0, 2, 2).unwrap();
        for k in [0.0, -1.0, f64::NAN] {
            assert!(matches!(rasterize_tin(&tin, &geom, k), Err(Error::InvalidKillDistance(_))));
        }
    }

    fn square(x0: f64, y0: f64, s: f64) -> Vec<Point2> {
        vec![
            Point2::new(x0, y0),
            Point2::new(x0 + s, y0),
            Point2::new(x0 + s, y0 + s),
            Point2::new(x0, y0 + s),
            Point2::new(x0, y0),
        ]
    }

    fn ones(geom: GridGeometry) -> DsmGrid {
        DsmGrid::new(geom, (0..geom.len()).map(|i| i as f64 * 0.5).collect()).unwrap()
    }

    #[test]
    fn covering_polygon_changes_nothing() {
        let g = GridGeometry::new(0.125, 1.875, 0.25, 8, 8).unwrap();
        let d = ones(g);
        let poly = ClipPolygon::new(square(-1.0, -1.0, 5.0), vec![]).unwrap();
        assert_eq!(clip_dsm(&d, &poly), d);
    }

    #[test]
    fn unit_square_keeps_exactly_the_inner_cells() {
        let g = GridGeometry::new(0.125, 1.875, 0.25, 8, 8).unwrap();
        let d = ones(g);
        let clipped = clip_dsm(&d, &ClipPolygon::new(square(0.5, 0.5, 1.0), vec![]).unwrap());
        for row in 0..8 {
            for col in 0..8 {
                let c = g.cell_center(col, row);
                let inside = c.x > 0.5 && c.x < 1.5 && c.y > 0.5 && c.y < 1.5;
                assert_eq!(clipped.get(col, row).is_some(), inside);
                if inside {
                    assert_eq!(clipped.get(col, row), d.get(col, row));
                }
            }
        }
        assert_eq!(clipped.valid_count(), 16);
    }

    #[test]
    fn holes_are_removed_and_clipping_is_idempotent() {
        let g = GridGeometry::new(0.125, 1.875, 0.25, 8, 8).unwrap();
        let d = ones(g);
        let poly = ClipPolygon::new(square(0.0, 0.0, 2.0), vec![square(0.5, 0.5, 1.0)]).unwrap();
        let once = clip_dsm(&d, &poly);
        assert_eq!(once.valid_count(), 64 - 16);
        assert_eq!(clip_dsm(&once, &poly), once);
        assert!(signed_area(poly.outer()) > 0.0);
        assert!(signed_area(&poly.holes()[0]) < 0.0);
    }

    #[test]
    fn polygon_validation() {
        let mut open = square(0.0, 0.0, 1.0);
        open.pop();
        assert_eq!(ClipPolygon::new(open, vec![]), Err(Error::OpenRing(0)));
        let bowtie = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(0.0, 0.0),
        ];
        assert_eq!(ClipPolygon::new(bowtie, vec![]), Err(Error::SelfIntersection(0)));
        let mut bad_hole = square(0.2, 0.2, 0.1);
        bad_hole[4] = Point2::new(0.3, 0.3);
        assert_eq!(ClipPolygon::new(square(0.0, 0.0, 1.0), vec![bad_hole]), Err(Error::OpenRing(1)));
        // clockwise input is reoriented
        let mut cw = square(0.0, 0.0, 1.0);
        cw.reverse();
        assert!(signed_area(ClipPolygon::new(cw, vec![]).unwrap().outer()) > 0.0);
    }

    fn plane_tin(z: f64) -> Tin {
        build_tin_from_points(&dense_plane(z, 1.0, 0.0, 10.0, 0.0, 10.0)).unwrap()
    }

    #[test]
    fn vertical_check_on_a_plane() {
        let tin = plane_tin(2.0);
        let gcps = vec![
            Gcp::new("on", Point3::new(3.3, 4.4, 2.0), None),
            Gcp::new("below", Point3::new(5.5, 6.1, 1.6244), None),
            Gcp::new("out", Point3::new(20.0, 4.0, 2.0), None),
        ];
        let rep = vertical_check(&tin, &gcps).unwrap();
        assert_eq!(rep.per_gcp[0].dz, Some(0.0));
        assert!((rep.per_gcp[1].dz.unwrap() - 0.3756).abs() < 1e-12);
        assert_eq!(rep.per_gcp[2].surface_z, None);
        assert_eq!((rep.inside_count, rep.outside_count), (2, 1));
        assert!((rep.mean_dz.unwrap() - 0.1878).abs() < 1e-12);
        assert!((rep.max_abs_dz.unwrap() - 0.3756).abs() < 1e-12);
        assert!((rep.rmse_dz.unwrap() - (0.3756f64.powi(2) / 2.0).sqrt()).abs() < 1e-12);
        assert_eq!(vertical_check(&tin, &[]), Err(Error::EmptyGcpSet));
    }

    #[test]
    fn vertical_check_all_outside_has_no_stats() {
        let rep = vertical_check(&plane_tin(0.0), &[Gcp::new("x", Point3::new(-5.0, 0.0, 0.0), None)]).unwrap();
        assert_eq!(rep.mean_dz, None);
        assert_eq!(rep.outside_count, 1);
    }

    #[test]
    fn vertical_shift_moves_mean_by_the_shift() {
        let base = random_cloud(500, 12, |x, y| (x * 0.7).sin() + 0.1 * y);
        let gcps: Vec<Gcp> = (0..20)
            .map(|i| Gcp::new(format!("v{i}"), Point3::new(1.0 + 0.4 * i as f64, 2.0 + 0.3 * i as f64, 0.5), None))
            .collect();
        let cloud = PointCloud::new(base.iter().map(|&p| CloudPoint { position: p, color: [0; 4] }).collect()).unwrap();
        let delta = 0.3756;
        let shifted = cloud.transformed(&crate::geometry::SimilarityTransform::translation_only(nalgebra::Vector3::new(0.0, 0.0, delta)));
        let a = vertical_check(&build_tin(&cloud).unwrap(), &gcps).unwrap();
        let b = vertical_check(&build_tin(&shifted).unwrap(), &gcps).unwrap();
        assert_eq!(a.inside_count, b.inside_count);
        assert!((b.mean_dz.unwrap() - a.mean_dz.unwrap() - delta).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn affine_fields_are_reproduced(seed in 0u64..500, a in -5.0..5.0f64, b in -5.0..5.0f64, c in -100.0..100.0f64) {
            let tin = build_tin_from_points(&random_cloud(60, seed, |x, y| a * x + b * y + c)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            for _ in 0..50 {
                let p = Point2::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
                if let Some(z) = tin.interpolate_z(p) {
                    prop_assert!((z - (a * p.x + b * p.y + c)).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn small_clouds_are_delaunay(seed in 0u64..500, n in 3usize..40) {
            let pts = random_cloud(n, seed, |_, _| 0.0);
            if let Ok(tin) = build_tin_from_points(&pts) {
                assert_delaunay(&tin);
                let h = hull_count(&tin.vertices().iter().map(Point3::xy).collect::<Vec<_>>());
                prop_assert_eq!(tin.triangles().len(), 2 * tin.vertices().len() - h - 2);
            }
        }
    }
}
