use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Point3, SimilarityTransform};

/// One colored point. Color is `[r, g, b, a]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub position: Point3,
    pub color: [u8; 4],
}

/// An unordered set of colored 3D points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
}

impl PointCloud {
    pub fn new(points: Vec<CloudPoint>) -> Result<Self> {
        if points.iter().any(|p| !p.position.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = Point3> + '_ {
        self.points.iter().map(|p| p.position)
    }

    /// Axis-aligned bounds `(min, max)`, or `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = self.points.first()?.position;
        Some(self.positions().fold((first, first), |(lo, hi), p| {
            (
                Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
                Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
            )
        }))
    }

    pub fn xy_bounds(&self) -> Option<(Point2, Point2)> {
        self.bounds().map(|(lo, hi)| (lo.xy(), hi.xy()))
    }

    /// Maps every point through `t`; colors are untouched.
    pub fn transformed(&self, t: &SimilarityTransform) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| CloudPoint {
                    position: t.apply(p.position),
                    color: p.color,
                })
                .collect(),
        }
    }
}
