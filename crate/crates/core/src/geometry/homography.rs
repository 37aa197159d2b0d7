use nalgebra::{DMatrix, Matrix3, Vector3};

use super::{cross, Point2, DEGENERACY_EPS};
use crate::error::{Error, Result};

/// A plane-to-plane projective map.
///
/// Stored normalized so that `h[2][2] == 1` whenever that entry is not
/// (numerically) zero; otherwise the matrix is kept as given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    /// Builds a homography, normalizing the scale and rejecting singular matrices.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let h33 = m[(2, 2)];
        let m = if h33.abs() > DEGENERACY_EPS { m / h33 } else { m };
        check_nonsingular(&m)?;
        Ok(Self { m })
    }

    /// Builds a homography from row-major entries.
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        let mut m = Matrix3::identity();
        m[(0, 2)] = tx;
        m[(1, 2)] = ty;
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.m;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    /// Maps a point, failing when it lands on the line at infinity.
    pub fn apply(&self, p: Point2) -> Result<Point2> {
        let m = &self.m;
        let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
        if w.abs() <= DEGENERACY_EPS {
            return Err(Error::DegenerateProjection(w.abs()));
        }
        let x = (m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)]) / w;
        let y = (m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]) / w;
        Ok(Point2::new(x, y))
    }

    pub fn inverse(&self) -> Result<Self> {
        let ratio = check_nonsingular(&self.m)?;
        let inv = self.m.try_inverse().ok_or(Error::SingularMatrix(ratio))?;
        Self::new(inv)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self> {
        Self::new(self.m * other.m)
    }
}

/// Rejects rank-deficient matrices. The test runs after translating the
/// output plane so the origin maps to the origin, which leaves the
/// determinant unchanged but removes the large offsets of projected
/// coordinates; the returned measure is `|det|` over the product of the row
/// norms of that reduced matrix.
fn check_nonsingular(m: &Matrix3<f64>) -> Result<f64> {
    let mut r = *m;
    let w = r[(2, 2)];
    if w.abs() > DEGENERACY_EPS {
        let (tx, ty) = (r[(0, 2)] / w, r[(1, 2)] / w);
        for c in 0..3 {
            r[(0, c)] -= tx * m[(2, c)];
            r[(1, c)] -= ty * m[(2, c)];
        }
    }
    let norms: f64 = r.row_iter().map(|row| row.norm()).product();
    let ratio = if norms > 0.0 { r.determinant().abs() / norms } else { 0.0 };
    if !(ratio > DEGENERACY_EPS) {
        return Err(Error::SingularMatrix(ratio));
    }
    Ok(ratio)
}

/// Similarity that moves the centroid to the origin and scales the mean
/// distance from it to √2.
fn normalizing_transform(points: &[Point2]) -> Result<Matrix3<f64>> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = points
        .iter()
        .map(|p| (p.x - cx).hypot(p.y - cy))
        .sum::<f64>()
        / n;
    let scale_floor = DEGENERACY_EPS * (1.0 + cx.abs().max(cy.abs()));
    if !mean_dist.is_finite() || mean_dist <= scale_floor {
        return Err(Error::DegenerateConfiguration(
            "point set has no spatial extent".into(),
        ));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn transform_all(t: &Matrix3<f64>, points: &[Point2]) -> Vec<Point2> {
    points
        .iter()
        .map(|p| {
            let v = t * Vector3::new(p.x, p.y, 1.0);
            Point2::new(v.x / v.z, v.y / v.z)
        })
        .collect()
}

/// Tolerance on doubled triangle area for points at unit (normalized) scale.
const COLLINEAR_EPS: f64 = 1e-9;

fn all_collinear(points: &[Point2]) -> bool {
    // Normalized points: mean distance √2 from the origin.
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        sxx += p.x * p.x;
        sxy += p.x * p.y;
        syy += p.y * p.y;
    }
    let n = points.len() as f64;
    let (sxx, sxy, syy) = (sxx / n, sxy / n, syy / n);
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let small = tr / 2.0 - disc;
    let large = tr / 2.0 + disc;
    small <= COLLINEAR_EPS * large
}

fn any_triple_collinear(points: &[Point2]) -> bool {
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if cross(points[i], points[j], points[k]).abs() <= COLLINEAR_EPS {
                    return true;
                }
            }
        }
    }
    false
}

/// Normalized DLT estimate of the homography mapping `src[i]` onto `dst[i]`.
///
/// Both point sets are conditioned (centroid at the origin, mean distance √2),
/// the stacked 2n×9 system is solved for its smallest right singular vector,
/// and the result is de-normalized. With more than four points this is the
/// algebraic least-squares solution over all of them.
pub fn fit_homography(src: &[Point2], dst: &[Point2]) -> Result<Homography> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} source points vs {} target points",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len();
    if n < 4 {
        return Err(Error::DegenerateConfiguration(format!(
            "{n} correspondences, at least 4 required"
        )));
    }
    if src.iter().chain(dst).any(|p| !p.is_finite()) {
        return Err(Error::NonFinite);
    }

    let t_src = normalizing_transform(src)?;
    let t_dst = normalizing_transform(dst)?;
    let s = transform_all(&t_src, src);
    let d = transform_all(&t_dst, dst);

    if all_collinear(&s) || all_collinear(&d) {
        return Err(Error::DegenerateConfiguration("points are collinear".into()));
    }
    if n == 4 && (any_triple_collinear(&s) || any_triple_collinear(&d)) {
        return Err(Error::DegenerateConfiguration(
            "three of the four points are collinear".into(),
        ));
    }

    // Pad to at least 9 rows so the SVD exposes the full right null space.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (p, q)) in s.iter().zip(&d).enumerate() {
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r = 2 * k;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::DegenerateConfiguration("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let smallest = order[0];
    let second = svd.singular_values[order[1]];
    let largest = svd.singular_values[order[order.len() - 1]];
    if second <= 1e-10 * largest {
        return Err(Error::DegenerateConfiguration(
            "design matrix is rank-deficient".into(),
        ));
    }

    let h = v_t.row(smallest);
    let hn = Matrix3::from_fn(|r, c| h[3 * r + c]);
    if hn.determinant().abs() <= 1e-10 {
        return Err(Error::DegenerateConfiguration(
            "estimated homography is singular".into(),
        ));
    }
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or_else(|| Error::DegenerateConfiguration("normalization not invertible".into()))?;
    Homography::new(t_dst_inv * hn * t_src)
        .map_err(|e| Error::DegenerateConfiguration(e.to_string()))
}
