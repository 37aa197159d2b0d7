//! Closed-form absolute orientation between corresponding 3D point sets.

use std::collections::HashSet;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{Point3, SimilarityTransform};

/// A picked correspondence: `source` in the cloud frame, `target` in world meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPair {
    pub id: String,
    pub source: Point3,
    pub target: Point3,
}

impl PointPair {
    pub fn new(id: impl Into<String>, source: Point3, target: Point3) -> Self {
        Self {
            id: id.into(),
            source,
            target,
        }
    }
}

/// Correspondences with unique ids and distinct source points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPairSet {
    pairs: Vec<PointPair>,
}

impl PointPairSet {
    pub fn new(pairs: Vec<PointPair>) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut sources = HashSet::new();
        for p in &pairs {
            if !(p.source.is_finite() && p.target.is_finite()) {
                return Err(Error::NonFinite);
            }
            if !ids.insert(p.id.as_str()) {
                return Err(Error::DuplicateId(p.id.clone()));
            }
            let key = [p.source.x, p.source.y, p.source.z].map(|v| (v + 0.0).to_bits());
            if !sources.insert(key) {
                return Err(Error::DuplicateSource(p.id.clone()));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[PointPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResidual {
    pub id: String,
    /// `‖T(source) − target‖` in meters.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub transform: SimilarityTransform,
    pub rms: f64,
    pub per_pair_residuals: Vec<PairResidual>,
    pub with_scale: bool,
}

/// Residual norms of `t` on every pair.
pub fn pair_residuals(pairs: &PointPairSet, t: &SimilarityTransform) -> Vec<PairResidual> {
    pairs
        .pairs
        .iter()
        .map(|p| PairResidual {
            id: p.id.clone(),
            residual: t.apply(p.source).distance(&p.target),
        })
        .collect()
}

/// `√(mean of squared residual norms)`.
pub fn rms_of(residuals: &[PairResidual]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    (residuals.iter().map(|r| r.residual * r.residual).sum::<f64>() / residuals.len() as f64).sqrt()
}

/// Least-squares similarity (or rigid motion when `with_scale` is false)
/// taking the sources onto the targets.
///
/// Centroids are removed, the SVD of the cross-covariance gives the rotation
/// with its last axis flipped when needed so that `det R = +1`, and the
/// scale, if free, is the ratio of the matched variance to the source variance.
pub fn estimate_alignment(pairs: &PointPairSet, with_scale: bool) -> Result<RegistrationReport> {
    let n = pairs.len();
    if n < 3 {
        return Err(Error::InsufficientPairs(n));
    }
    let src: Vec<Vector3<f64>> = pairs.pairs.iter().map(|p| p.source.to_vector()).collect();
    let dst: Vec<Vector3<f64>> = pairs.pairs.iter().map(|p| p.target.to_vector()).collect();
    let nf = n as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / nf;
    let mu_t = dst.iter().sum::<Vector3<f64>>() / nf;

    let mut cov = Matrix3::zeros();
    let mut src_scatter = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, t) in src.iter().zip(&dst) {
        let (ds, dt) = (s - mu_s, t - mu_t);
        cov += dt * ds.transpose();
        src_scatter += ds * ds.transpose();
        var_s += ds.norm_squared();
    }
    cov /= nf;
    var_s /= nf;

    let sv = src_scatter.singular_values();
    let (hi, mid) = sorted_top_two(&sv);
    if !(hi > 0.0) || mid <= 1e-12 * hi {
        return Err(Error::CollinearPoints);
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));
    let d = u.determinant() * v_t.determinant();
    let mut s = Matrix3::identity();
    if d < 0.0 {
        // Flip the axis of the smallest singular value.
        let k = svd.singular_values.imin();
        s[(k, k)] = -1.0;
    }
    let rotation = u * s * v_t;
    let scale = if with_scale {
        let trace: f64 = (0..3).map(|i| svd.singular_values[i] * s[(i, i)]).sum();
        trace / var_s
    } else {
        1.0
    };
    if !(scale > 0.0) {
        return Err(Error::CollinearPoints);
    }
    let translation = mu_t - scale * (rotation * mu_s);
    let transform = SimilarityTransform::new(scale, rotation, translation)?;
    let per_pair_residuals = pair_residuals(pairs, &transform);
    Ok(RegistrationReport {
        transform,
        rms: rms_of(&per_pair_residuals),
        per_pair_residuals,
        with_scale,
    })
}

fn sorted_top_two(v: &Vector3<f64>) -> (f64, f64) {
    let mut s = [v[0], v[1], v[2]];
    s.sort_by(|a, b| b.total_cmp(a));
    (s[0], s[1])
}

/// Maps every point of the cloud; colors are unchanged.
pub fn apply_alignment(cloud: &PointCloud, t: &SimilarityTransform) -> PointCloud {
    cloud.transformed(t)
}
