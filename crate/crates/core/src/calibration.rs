//! Intrinsic calibration from views of a planar checkerboard.
//!
//! The pipeline is the classic planar one: a homography per view, a
//! closed-form estimate of the focal lengths and principal point from the
//! image of the absolute conic, a pose per view from each homography, and a
//! Levenberg-Marquardt refinement of every parameter (including the five
//! distortion coefficients) against the observed corners.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{distort, CameraIntrinsics};
use crate::error::{Error, Result};
use crate::geometry::{fit_homography, Homography, Point2, Point3};

/// Interior-corner layout of a checkerboard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoardSpec {
    pub cols: usize,
    pub rows: usize,
    /// Edge length of one square, in meters.
    pub square_size: f64,
}

impl BoardSpec {
    pub fn new(cols: usize, rows: usize, square_size: f64) -> Result<Self> {
        if cols < 3 || rows < 3 {
            return Err(Error::InvalidBoard(format!(
                "need at least 3x3 interior corners, got {cols}x{rows}"
            )));
        }
        if !(square_size.is_finite() && square_size > 0.0) {
            return Err(Error::InvalidBoard(format!(
                "square size must be positive, got {square_size}"
            )));
        }
        Ok(Self {
            cols,
            rows,
            square_size,
        })
    }

    pub fn corner_count(&self) -> usize {
        self.cols * self.rows
    }
}

/// Corner positions on the board plane (z = 0), row-major.
pub fn board_object_points(board: &BoardSpec) -> Vec<Point3> {
    (0..board.rows)
        .flat_map(|i| {
            (0..board.cols).map(move |j| {
                Point3::new(j as f64 * board.square_size, i as f64 * board.square_size, 0.0)
            })
        })
        .collect()
}

/// Detected corners of one image, in the same order as [`board_object_points`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationView {
    pub image_points: Vec<Point2>,
}

impl CalibrationView {
    pub fn new(image_points: Vec<Point2>) -> Self {
        Self { image_points }
    }

    fn validate(&self, index: usize, board: &BoardSpec, width: u32, height: u32) -> Result<()> {
        if self.image_points.len() != board.corner_count() {
            return Err(Error::InvalidView {
                view: index,
                reason: format!(
                    "{} corners, board has {}",
                    self.image_points.len(),
                    board.corner_count()
                ),
            });
        }
        let (w, h) = (width as f64, height as f64);
        if let Some(p) = self
            .image_points
            .iter()
            .find(|p| !(p.is_finite() && (0.0..w).contains(&p.x) && (0.0..h).contains(&p.y)))
        {
            return Err(Error::InvalidView {
                view: index,
                reason: format!("corner ({}, {}) outside the {width}x{height} image", p.x, p.y),
            });
        }
        Ok(())
    }
}

/// Board-to-camera rigid transform: `X_cam = R · X_board + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn transform(&self, p: &Point3) -> Vector3<f64> {
        self.rotation * p.to_vector() + self.translation
    }

    fn to_params(self) -> [f64; 6] {
        let w = Rotation3::from_matrix_unchecked(self.rotation).scaled_axis();
        let t = self.translation;
        [w.x, w.y, w.z, t.x, t.y, t.z]
    }

    fn from_params(p: &[f64]) -> Self {
        let rot = Rotation3::from_scaled_axis(Vector3::new(p[0], p[1], p[2]));
        Self {
            rotation: *rot.matrix(),
            translation: Vector3::new(p[3], p[4], p[5]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub intrinsics: CameraIntrinsics,
    pub per_view_poses: Vec<Pose>,
    /// Mean Euclidean corner residual over all views, in pixels.
    pub mean_reprojection_error: f64,
    /// Mean Euclidean corner residual of each view, in pixels.
    pub per_view_errors: Vec<f64>,
    /// Sum of squared residuals before and after refinement.
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
}

/// Homography mapping board-plane coordinates (meters) to pixels.
pub fn estimate_view_homography(object_points: &[Point3], view: &CalibrationView) -> Result<Homography> {
    if object_points.len() != view.image_points.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} board points vs {} image points",
            object_points.len(),
            view.image_points.len()
        )));
    }
    let src: Vec<Point2> = object_points.iter().map(Point3::xy).collect();
    fit_homography(&src, &view.image_points)
}

/// Constraint row `v_ij` on the zero-skew conic `[B11, B22, B13, B23, B33]`.
fn conic_row(h: &Matrix3<f64>, i: usize, j: usize) -> [f64; 5] {
    let (a, b) = (h.column(i), h.column(j));
    [
        a[0] * b[0],
        a[1] * b[1],
        a[2] * b[0] + a[0] * b[2],
        a[2] * b[1] + a[1] * b[2],
        a[2] * b[2],
    ]
}

/// Closed-form focal lengths and principal point from three or more views.
///
/// Skew is held at zero and the distortion coefficients start at zero.
/// `width`/`height` give the image size of the returned intrinsics; pixel
/// coordinates are conditioned around the image center internally.
pub fn zhang_init(homographies: &[Homography], width: u32, height: u32) -> Result<CameraIntrinsics> {
    if homographies.len() < 3 {
        return Err(Error::InsufficientViews(homographies.len()));
    }
    let s = 0.5 * (width as f64 + height as f64);
    let (ox, oy) = (0.5 * width as f64, 0.5 * height as f64);
    let cond = Matrix3::new(1.0 / s, 0.0, -ox / s, 0.0, 1.0 / s, -oy / s, 0.0, 0.0, 1.0);

    let mut v = DMatrix::<f64>::zeros(2 * homographies.len(), 5);
    for (k, h) in homographies.iter().enumerate() {
        let hn = cond * h.matrix();
        let hn = hn / hn.norm();
        let v12 = conic_row(&hn, 0, 1);
        let v11 = conic_row(&hn, 0, 0);
        let v22 = conic_row(&hn, 1, 1);
        for c in 0..5 {
            v[(2 * k, c)] = v12[c];
            v[(2 * k + 1, c)] = v11[c] - v22[c];
        }
    }
    let svd = v.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::UnstableSolution("SVD failed".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]));
    if sv[order[1]] <= 1e-9 * sv[order[order.len() - 1]] {
        return Err(Error::UnstableSolution(
            "views do not constrain the intrinsics (too little tilt variation)".into(),
        ));
    }
    let mut b: Vec<f64> = v_t.row(order[0]).iter().copied().collect();
    if b[0] < 0.0 {
        b.iter_mut().for_each(|x| *x = -*x);
    }
    let [b11, b22, b13, b23, b33] = [b[0], b[1], b[2], b[3], b[4]];
    if b11 <= 0.0 || b22 <= 0.0 {
        return Err(Error::UnstableSolution("conic is not positive definite".into()));
    }
    let cy = -b23 / b22;
    let cx = -b13 / b11;
    let lambda = b33 - b13 * b13 / b11 - b23 * b23 / b22;
    let fx2 = lambda / b11;
    let fy2 = lambda / b22;
    if !(fx2 > 0.0 && fy2 > 0.0) {
        return Err(Error::UnstableSolution(format!(
            "non-positive squared focal length (fx² = {fx2:e}, fy² = {fy2:e})"
        )));
    }
    // Undo the conditioning: K = N⁻¹ · K'.
    let fx = fx2.sqrt() * s;
    let fy = fy2.sqrt() * s;
    let cx = cx * s + ox;
    let cy = cy * s + oy;
    CameraIntrinsics::pinhole(fx, fy, cx, cy, width, height)
        .map_err(|e| Error::UnstableSolution(e.to_string()))
}

/// Nearest rotation (Frobenius norm) to an arbitrary 3×3 matrix.
fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        let col = -u.column(2);
        u.set_column(2, &col);
        r = u * v_t;
    }
    r
}

/// Board pose from a board-to-image homography and known intrinsics.
pub fn decompose_extrinsics(h: &Homography, intrinsics: &CameraIntrinsics) -> Result<Pose> {
    let k_inv = intrinsics
        .matrix()
        .try_inverse()
        .ok_or(Error::SingularIntrinsics)?;
    let m = k_inv * h.matrix();
    let (h1, h2, h3) = (m.column(0), m.column(1), m.column(2));
    let norm = h1.norm();
    if !(norm > 0.0) {
        return Err(Error::DegenerateConfiguration("homography has a null column".into()));
    }
    let mut lambda = 1.0 / norm;
    if lambda * h3[2] < 0.0 {
        lambda = -lambda;
    }
    let r1 = h1 * lambda;
    let r2 = h2 * lambda;
    let r3 = r1.cross(&r2);
    let t = h3 * lambda;
    let raw = Matrix3::from_columns(&[r1, r2, r3]);
    Ok(Pose {
        rotation: nearest_rotation(&raw),
        translation: t,
    })
}

/// Termination and damping settings for [`refine`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    pub max_iterations: usize,
    pub relative_cost_tol: f64,
    pub gradient_tol: f64,
    pub initial_damping: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            relative_cost_tol: 1e-12,
            gradient_tol: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

pub(crate) const N_INTRINSIC: usize = 9;
const N_POSE: usize = 6;
const MAX_DAMPING: f64 = 1e20;
const MAX_MONOTONE_REJECTIONS: usize = 10;

type Row2<const N: usize> = SMatrix<f64, 2, N>;

/// Projection of one board corner and its derivatives.
pub(crate) struct CornerJacobian {
    pub pixel: Point2,
    pub d_intrinsics: Row2<N_INTRINSIC>,
    pub d_pose: Row2<N_POSE>,
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Right Jacobian of the SO(3) exponential map.
fn right_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let k = skew(w);
    let (a, b) = if theta2 < 1e-16 {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        ((1.0 - theta.cos()) / theta2, (theta - theta.sin()) / (theta2 * theta))
    };
    Matrix3::identity() - k * a + k * k * b
}

/// Camera parameters in refinement order `[fx, fy, cx, cy, k1, k2, k3, p1, p2]`.
pub(crate) fn intrinsic_params(i: &CameraIntrinsics) -> [f64; N_INTRINSIC] {
    [i.fx, i.fy, i.cx, i.cy, i.k1, i.k2, i.k3, i.p1, i.p2]
}

fn intrinsics_from_params(p: &[f64], width: u32, height: u32) -> CameraIntrinsics {
    CameraIntrinsics {
        fx: p[0],
        fy: p[1],
        cx: p[2],
        cy: p[3],
        k1: p[4],
        k2: p[5],
        k3: p[6],
        p1: p[7],
        p2: p[8],
        width,
        height,
    }
}

/// Projects `object` with intrinsics `k` and pose `pose` (axis-angle + t),
/// returning `None` when the point falls behind the camera.
pub(crate) fn project_with_jacobian(
    k: &[f64; N_INTRINSIC],
    pose: &[f64; N_POSE],
    object: &Point3,
) -> Option<CornerJacobian> {
    let [fx, fy, _cx, _cy, k1, k2, k3, p1, p2] = *k;
    let w = Vector3::new(pose[0], pose[1], pose[2]);
    let rot = *Rotation3::from_scaled_axis(w).matrix();
    let xb = object.to_vector();
    let rx = rot * xb;
    let pc = rx + Vector3::new(pose[3], pose[4], pose[5]);
    if !(pc.z > 1e-9) {
        return None;
    }
    let iz = 1.0 / pc.z;
    let (x, y) = (pc.x * iz, pc.y * iz);
    let r2 = x * x + y * y;
    let r4 = r2 * r2;
    let r6 = r4 * r2;
    let radial = 1.0 + k1 * r2 + k2 * r4 + k3 * r6;
    let d_radial = k1 + 2.0 * k2 * r2 + 3.0 * k3 * r4;
    let xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
    let yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
    let pixel = Point2::new(fx * xd + k[2], fy * yd + k[3]);

    let mut d_intrinsics = Row2::<N_INTRINSIC>::zeros();
    d_intrinsics[(0, 0)] = xd;
    d_intrinsics[(0, 2)] = 1.0;
    d_intrinsics[(1, 1)] = yd;
    d_intrinsics[(1, 3)] = 1.0;
    // distortion coefficients, scaled by the focal lengths
    let dxd = [x * r2, x * r4, x * r6, 2.0 * x * y, r2 + 2.0 * x * x];
    let dyd = [y * r2, y * r4, y * r6, r2 + 2.0 * y * y, 2.0 * x * y];
    for c in 0..5 {
        d_intrinsics[(0, 4 + c)] = fx * dxd[c];
        d_intrinsics[(1, 4 + c)] = fy * dyd[c];
    }

    // d(xd, yd)/d(x, y)
    let dxd_dx = radial + 2.0 * x * x * d_radial + 2.0 * p1 * y + 6.0 * p2 * x;
    let dxd_dy = 2.0 * x * y * d_radial + 2.0 * p1 * x + 2.0 * p2 * y;
    let dyd_dx = 2.0 * x * y * d_radial + 2.0 * p1 * x + 2.0 * p2 * y;
    let dyd_dy = radial + 2.0 * y * y * d_radial + 6.0 * p1 * y + 2.0 * p2 * x;
    let d_pix_d_norm = SMatrix::<f64, 2, 2>::new(fx * dxd_dx, fx * dxd_dy, fy * dyd_dx, fy * dyd_dy);
    let d_norm_d_cam = SMatrix::<f64, 2, 3>::new(iz, 0.0, -x * iz, 0.0, iz, -y * iz);
    let d_pix_d_cam = d_pix_d_norm * d_norm_d_cam;

    let d_cam_d_w = -rot * skew(&xb) * right_jacobian(&w);
    let mut d_pose = Row2::<N_POSE>::zeros();
    d_pose.fixed_view_mut::<2, 3>(0, 0).copy_from(&(d_pix_d_cam * d_cam_d_w));
    d_pose.fixed_view_mut::<2, 3>(0, 3).copy_from(&d_pix_d_cam);
    Some(CornerJacobian {
        pixel,
        d_intrinsics,
        d_pose,
    })
}

struct Problem<'a> {
    object: &'a [Point3],
    views: &'a [CalibrationView],
}

impl Problem<'_> {
    fn n_params(&self) -> usize {
        N_INTRINSIC + N_POSE * self.views.len()
    }

    fn split<'p>(&self, params: &'p [f64]) -> ([f64; N_INTRINSIC], impl Iterator<Item = [f64; N_POSE]> + 'p) {
        let mut k = [0.0; N_INTRINSIC];
        k.copy_from_slice(&params[..N_INTRINSIC]);
        let poses = params[N_INTRINSIC..].chunks_exact(N_POSE).map(|c| {
            let mut p = [0.0; N_POSE];
            p.copy_from_slice(c);
            p
        });
        (k, poses)
    }

    /// Sum of squared residuals, or `None` if any corner is behind the camera.
    fn cost(&self, params: &[f64]) -> Option<f64> {
        let (k, poses) = self.split(params);
        let dist = [k[4], k[5], k[6], k[7], k[8]];
        let mut total = 0.0;
        for (view, pose) in self.views.iter().zip(poses) {
            let rot = *Rotation3::from_scaled_axis(Vector3::new(pose[0], pose[1], pose[2])).matrix();
            let t = Vector3::new(pose[3], pose[4], pose[5]);
            for (obj, obs) in self.object.iter().zip(&view.image_points) {
                let pc = rot * obj.to_vector() + t;
                if !(pc.z > 1e-9) {
                    return None;
                }
                let d = distort(&dist, Point2::new(pc.x / pc.z, pc.y / pc.z));
                let du = k[0] * d.x + k[2] - obs.x;
                let dv = k[1] * d.y + k[3] - obs.y;
                total += du * du + dv * dv;
            }
        }
        total.is_finite().then_some(total)
    }

    /// Normal equations `JᵀJ` and gradient `Jᵀr`, accumulated in view order.
    fn normal_equations(&self, params: &[f64]) -> Option<(DMatrix<f64>, DVector<f64>, f64)> {
        let n = self.n_params();
        let mut jtj = DMatrix::<f64>::zeros(n, n);
        let mut jtr = DVector::<f64>::zeros(n);
        let mut cost = 0.0;
        let (k, poses) = self.split(params);
        for (v, (view, pose)) in self.views.iter().zip(poses).enumerate() {
            let off = N_INTRINSIC + N_POSE * v;
            let mut uu = SMatrix::<f64, N_INTRINSIC, N_INTRINSIC>::zeros();
            let mut up = SMatrix::<f64, N_INTRINSIC, N_POSE>::zeros();
            let mut pp = SMatrix::<f64, N_POSE, N_POSE>::zeros();
            let mut gu = SMatrix::<f64, N_INTRINSIC, 1>::zeros();
            let mut gp = SMatrix::<f64, N_POSE, 1>::zeros();
            for (obj, obs) in self.object.iter().zip(&view.image_points) {
                let cj = project_with_jacobian(&k, &pose, obj)?;
                let r = nalgebra::Vector2::new(cj.pixel.x - obs.x, cj.pixel.y - obs.y);
                cost += r.norm_squared();
                uu += cj.d_intrinsics.transpose() * cj.d_intrinsics;
                up += cj.d_intrinsics.transpose() * cj.d_pose;
                pp += cj.d_pose.transpose() * cj.d_pose;
                gu += cj.d_intrinsics.transpose() * r;
                gp += cj.d_pose.transpose() * r;
            }
            let mut block = jtj.view_mut((0, 0), (N_INTRINSIC, N_INTRINSIC));
            block += uu;
            jtj.view_mut((0, off), (N_INTRINSIC, N_POSE)).copy_from(&up);
            jtj.view_mut((off, 0), (N_POSE, N_INTRINSIC)).copy_from(&up.transpose());
            jtj.view_mut((off, off), (N_POSE, N_POSE)).copy_from(&pp);
            let mut g = jtr.rows_mut(0, N_INTRINSIC);
            g += gu;
            jtr.rows_mut(off, N_POSE).copy_from(&gp);
        }
        cost.is_finite().then_some((jtj, jtr, cost))
    }
}

fn validate_views(board: &BoardSpec, views: &[CalibrationView], width: u32, height: u32) -> Result<()> {
    if views.len() < 3 {
        return Err(Error::InsufficientViews(views.len()));
    }
    for (i, v) in views.iter().enumerate() {
        v.validate(i, board, width, height)?;
    }
    Ok(())
}

/// Levenberg-Marquardt refinement of intrinsics, distortion and view poses.
///
/// Damping is multiplicative on the diagonal of `JᵀJ`, starting at
/// `initial_damping`, ×10 after a rejected step and ÷10 after an accepted one.
pub fn refine(
    board: &BoardSpec,
    views: &[CalibrationView],
    seed_intrinsics: &CameraIntrinsics,
    seed_poses: &[Pose],
    options: &RefineOptions,
) -> Result<CalibrationResult> {
    let (width, height) = (seed_intrinsics.width, seed_intrinsics.height);
    validate_views(board, views, width, height)?;
    seed_intrinsics.validate()?;
    if seed_poses.len() != views.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} seed poses for {} views",
            seed_poses.len(),
            views.len()
        )));
    }
    let object = board_object_points(board);
    let problem = Problem {
        object: &object,
        views,
    };

    let mut params: Vec<f64> = intrinsic_params(seed_intrinsics).to_vec();
    for pose in seed_poses {
        params.extend_from_slice(&pose.to_params());
    }
    let initial_cost = problem
        .cost(&params)
        .ok_or_else(|| Error::DivergedRefinement("seed places corners behind the camera".into()))?;

    let mut damping = options.initial_damping;
    let mut iterations = 0;
    let mut monotone_rejections = 0;
    let mut last_trial_cost = f64::INFINITY;
    let mut cost = initial_cost;
    let (mut jtj, mut jtr, _) = problem
        .normal_equations(&params)
        .ok_or_else(|| Error::DivergedRefinement("non-finite residuals at the seed".into()))?;

    while iterations < options.max_iterations {
        iterations += 1;
        if jtr.amax() < options.gradient_tol {
            break;
        }
        let mut a = jtj.clone();
        let diag_floor = 1e-12 * jtj.diagonal().amax().max(1.0);
        for i in 0..a.nrows() {
            a[(i, i)] += damping * jtj[(i, i)].max(diag_floor);
        }
        let step = a.cholesky().map(|c| c.solve(&(-&jtr)));
        let trial: Option<(Vec<f64>, f64)> = step.and_then(|s| {
            let candidate: Vec<f64> = params.iter().zip(s.iter()).map(|(p, d)| p + d).collect();
            problem.cost(&candidate).map(|c| (candidate, c))
        });

        match trial {
            Some((candidate, trial_cost)) if trial_cost < cost => {
                let relative = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                params = candidate;
                damping = (damping / 10.0).max(1e-15);
                monotone_rejections = 0;
                last_trial_cost = f64::INFINITY;
                let (j, g, _) = problem
                    .normal_equations(&params)
                    .ok_or_else(|| Error::DivergedRefinement("non-finite residuals".into()))?;
                jtj = j;
                jtr = g;
                cost = trial_cost;
                if relative < options.relative_cost_tol {
                    break;
                }
            }
            rejected => {
                let trial_cost = rejected.map_or(f64::INFINITY, |(_, c)| c);
                if trial_cost > last_trial_cost || trial_cost.is_infinite() {
                    monotone_rejections += 1;
                } else {
                    monotone_rejections = 0;
                }
                last_trial_cost = trial_cost;
                if monotone_rejections >= MAX_MONOTONE_REJECTIONS {
                    return Err(Error::DivergedRefinement(format!(
                        "cost kept increasing over {MAX_MONOTONE_REJECTIONS} damping escalations"
                    )));
                }
                damping *= 10.0;
                if damping > MAX_DAMPING {
                    break;
                }
            }
        }
    }

    let (k, poses) = problem.split(&params);
    let intrinsics = intrinsics_from_params(&k, width, height);
    let per_view_poses: Vec<Pose> = poses.map(|p| Pose::from_params(&p)).collect();
    let (mean, per_view) = reprojection_errors(board, views, &intrinsics, &per_view_poses)?;
    Ok(CalibrationResult {
        intrinsics,
        per_view_poses,
        mean_reprojection_error: mean,
        per_view_errors: per_view,
        initial_cost,
        final_cost: cost,
        iterations,
    })
}

/// Mean Euclidean corner residual overall and per view.
pub fn reprojection_errors(
    board: &BoardSpec,
    views: &[CalibrationView],
    intrinsics: &CameraIntrinsics,
    poses: &[Pose],
) -> Result<(f64, Vec<f64>)> {
    let object = board_object_points(board);
    let dist = intrinsics.distortion();
    let mut total = 0.0;
    let mut count = 0usize;
    let mut per_view = Vec::with_capacity(views.len());
    for (view, pose) in views.iter().zip(poses) {
        let mut sum = 0.0;
        for (obj, obs) in object.iter().zip(&view.image_points) {
            let pc = pose.transform(obj);
            if !(pc.z > 1e-9) {
                return Err(Error::BehindCamera(pc.z));
            }
            let d = distort(&dist, Point2::new(pc.x / pc.z, pc.y / pc.z));
            sum += intrinsics.normalized_to_pixel(d).distance(obs);
        }
        per_view.push(sum / view.image_points.len() as f64);
        total += sum;
        count += view.image_points.len();
    }
    if count == 0 {
        return Err(Error::InsufficientViews(0));
    }
    Ok((total / count as f64, per_view))
}

/// Full calibration: per-view homographies, closed-form seed, pose seeds, refinement.
pub fn calibrate(
    board: &BoardSpec,
    views: &[CalibrationView],
    width: u32,
    height: u32,
    options: &RefineOptions,
) -> Result<CalibrationResult> {
    validate_views(board, views, width, height)?;
    let object = board_object_points(board);
    let homographies = views
        .iter()
        .map(|v| estimate_view_homography(&object, v))
        .collect::<Result<Vec<_>>>()?;
    let seed = zhang_init(&homographies, width, height)?;
    let poses = homographies
        .iter()
        .map(|h| decompose_extrinsics(h, &seed))
        .collect::<Result<Vec<_>>>()?;
    refine(board, views, &seed, &poses, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn factory() -> CameraIntrinsics {
        CameraIntrinsics::pinhole(1060.70, 1060.70, 950.42, 572.89, 1920, 1080).unwrap()
    }

    fn board() -> BoardSpec {
        BoardSpec::new(9, 6, 0.025).unwrap()
    }

    /// Random board poses that keep every corner well inside the image.
    fn synthetic_views(cam: &CameraIntrinsics, board: &BoardSpec, n: usize, seed: u64) -> (Vec<Pose>, Vec<CalibrationView>) {
        let object = board_object_points(board);
        let center = Vector3::new(
            0.5 * (board.cols - 1) as f64 * board.square_size,
            0.5 * (board.rows - 1) as f64 * board.square_size,
            0.0,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut poses = Vec::new();
        let mut views = Vec::new();
        while views.len() < n {
            let w = Vector3::new(
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.4..0.4),
            );
            let rot = *Rotation3::from_scaled_axis(w).matrix();
            let target = Vector3::new(
                rng.random_range(-0.15..0.15),
                rng.random_range(-0.08..0.08),
                rng.random_range(0.35..0.6),
            );
            let pose = Pose {
                rotation: rot,
                translation: target - rot * center,
            };
            let pts: Option<Vec<Point2>> = object
                .iter()
                .map(|o| {
                    let p = Point3::from_vector(&pose.transform(o));
                    let px = cam.project(p).ok()?;
                    let inside = px.x > 20.0 && px.y > 20.0 && px.x < 1900.0 && px.y < 1060.0;
                    inside.then_some(px)
                })
                .collect();
            if let Some(pts) = pts {
                poses.push(pose);
                views.push(CalibrationView::new(pts));
            }
        }
        (poses, views)
    }

    #[test]
    fn board_points_layout() {
        let pts = board_object_points(&BoardSpec::new(3, 3, 0.025).unwrap());
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[0], Point3::new(0.0, 0.0, 0.0));
        assert_eq!(pts[8], Point3::new(0.05, 0.05, 0.0));
        let big = board_object_points(&board());
        assert_eq!(big.len(), 54);
        assert!(big.iter().all(|p| p.z == 0.0));
        assert!(BoardSpec::new(2, 5, 0.02).is_err());
        assert!(BoardSpec::new(3, 5, 0.0).is_err());
    }

    #[test]
    fn view_homography_matches_projection() {
        let cam = factory();
        let (poses, views) = synthetic_views(&cam, &board(), 3, 1);
        let object = board_object_points(&board());
        for (pose, view) in poses.iter().zip(&views) {
            let h = estimate_view_homography(&object, view).unwrap();
            let truth_m = cam.matrix()
                * Matrix3::from_columns(&[pose.rotation.column(0).into(), pose.rotation.column(1).into(), pose.translation]);
            let truth = Homography::new(truth_m).unwrap();
            let (a, b) = (h.rows(), truth.rows());
            let scale = b.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            for r in 0..3 {
                for c in 0..3 {
                    assert!((a[r][c] - b[r][c]).abs() <= 1e-8 * scale, "({r},{c}) {} vs {}", a[r][c], b[r][c]);
                }
            }
        }
    }

    #[test]
    fn closed_form_recovers_pinhole() {
        let cam = factory();
        let (_, views) = synthetic_views(&cam, &board(), 10, 2);
        let object = board_object_points(&board());
        let hs: Vec<_> = views.iter().map(|v| estimate_view_homography(&object, v).unwrap()).collect();
        let est = zhang_init(&hs, 1920, 1080).unwrap();
        for (e, t) in [(est.fx, cam.fx), (est.fy, cam.fy), (est.cx, cam.cx), (est.cy, cam.cy)] {
            assert!(((e - t) / t).abs() < 1e-3, "{e} vs {t}");
        }
        assert_eq!(est.distortion(), [0.0; 5]);
    }

    #[test]
    fn closed_form_needs_three_views() {
        let cam = factory();
        let (_, views) = synthetic_views(&cam, &board(), 2, 3);
        let object = board_object_points(&board());
        let hs: Vec<_> = views.iter().map(|v| estimate_view_homography(&object, v).unwrap()).collect();
        assert!(matches!(zhang_init(&hs, 1920, 1080), Err(Error::InsufficientViews(2))));
    }

    #[test]
    fn fronto_parallel_views_are_flagged() {
        let cam = factory();
        let object = board_object_points(&board());
        let hs: Vec<Homography> = [(0.0, 0.0, 0.4), (0.05, -0.02, 0.5), (-0.08, 0.03, 0.45), (0.02, 0.04, 0.55)]
            .iter()
            .map(|&(x, y, z)| {
                let pose = Pose {
                    rotation: Matrix3::identity(),
                    translation: Vector3::new(x - 0.1, y - 0.0625, z),
                };
                let img: Vec<Point2> = object
                    .iter()
                    .map(|o| cam.project(Point3::from_vector(&pose.transform(o))).unwrap())
                    .collect();
                estimate_view_homography(&object, &CalibrationView::new(img)).unwrap()
            })
            .collect();
        match zhang_init(&hs, 1920, 1080) {
            Err(Error::UnstableSolution(_)) => {}
            Ok(est) => assert!(
                ((est.fx - cam.fx) / cam.fx).abs() > 0.1,
                "fronto-parallel views should not pin down fx: {}",
                est.fx
            ),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn pose_from_homography() {
        let cam = factory();
        let rot = *Rotation3::from_euler_angles(0.3, -0.2, 0.1).matrix();
        let t = Vector3::new(-0.05, 0.02, 0.7);
        let h = Homography::new(cam.matrix() * Matrix3::from_columns(&[rot.column(0).into(), rot.column(1).into(), t])).unwrap();
        for sign in [1.0, -1.0] {
            let flipped = Homography::new(h.matrix() * sign).unwrap();
            let pose = decompose_extrinsics(&flipped, &cam).unwrap();
            assert!((pose.rotation - rot).abs().max() < 1e-6);
            assert!((pose.translation - t).abs().max() < 1e-6);
        }
        // fronto-parallel board one meter away
        let h = Homography::new(cam.matrix() * Matrix3::new(1.0, 0.0, 0.1, 0.0, 1.0, -0.05, 0.0, 0.0, 1.0)).unwrap();
        let pose = decompose_extrinsics(&h, &cam).unwrap();
        assert!((pose.rotation - Matrix3::identity()).abs().max() < 1e-6);
        assert!((pose.translation.z - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pose_sign_gives_positive_depth() {
        // The homography of a board mirrored behind the camera differs only by
        // sign; decomposition must pick the solution in front.
        let cam = factory();
        let rot = *Rotation3::from_euler_angles(-0.1, 0.25, 0.0).matrix();
        let t = Vector3::new(0.01, 0.0, 0.5);
        let behind = -(cam.matrix() * Matrix3::from_columns(&[rot.column(0).into(), rot.column(1).into(), t]));
        let pose = decompose_extrinsics(&Homography::new(behind).unwrap(), &cam).unwrap();
        assert!(pose.translation.z > 0.0);
        assert!((pose.translation - t).abs().max() < 1e-6);
    }

    #[test]
    fn analytic_jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let k = [
                rng.random_range(800.0..1200.0),
                rng.random_range(800.0..1200.0),
                rng.random_range(900.0..1000.0),
                rng.random_range(500.0..600.0),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.01..0.01),
                rng.random_range(-0.01..0.01),
            ];
            let pose = [
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(0.4..0.8),
            ];
            let obj = Point3::new(rng.random_range(0.0..0.2), rng.random_range(0.0..0.125), 0.0);
            let cj = project_with_jacobian(&k, &pose, &obj).unwrap();
            for i in 0..N_INTRINSIC + N_POSE {
                let h = if i < 4 { 1e-6 * k[i].abs() } else { 1e-6 };
                let eval = |delta: f64| {
                    let (mut kk, mut pp) = (k, pose);
                    if i < N_INTRINSIC {
                        kk[i] += delta;
                    } else {
                        pp[i - N_INTRINSIC] += delta;
                    }
                    project_with_jacobian(&kk, &pp, &obj).unwrap().pixel
                };
                let (a, b) = (eval(h), eval(-h));
                let numeric = [(a.x - b.x) / (2.0 * h), (a.y - b.y) / (2.0 * h)];
                for row in 0..2 {
                    let analytic = if i < N_INTRINSIC {
                        cj.d_intrinsics[(row, i)]
                    } else {
                        cj.d_pose[(row, i - N_INTRINSIC)]
                    };
                    let scale = analytic.abs().max(numeric[row].abs()).max(1.0);
                    assert!(
                        (analytic - numeric[row]).abs() <= 1e-5 * scale,
                        "param {i} row {row}: analytic {analytic} numeric {}",
                        numeric[row]
                    );
                }
            }
        }
    }

    #[test]
    fn refine_from_truth_is_a_fixed_point() {
        let cam = CameraIntrinsics::with_distortion(
            1060.70,
            1060.70,
            950.42,
            572.89,
            [0.0046, -0.0715, 0.1904, -0.0003, -0.0019],
            1920,
            1080,
        )
        .unwrap();
        let (poses, views) = synthetic_views(&cam, &board(), 8, 7);
        let res = refine(&board(), &views, &cam, &poses, &RefineOptions::default()).unwrap();
        let (a, b) = (intrinsic_params(&res.intrinsics), intrinsic_params(&cam));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0), "{x} vs {y}");
        }
        assert!(res.final_cost <= res.initial_cost);
    }

    #[test]
    fn refine_rejects_mismatched_corner_count() {
        let cam = factory();
        let (poses, mut views) = synthetic_views(&cam, &board(), 3, 9);
        views[1].image_points.pop();
        assert!(matches!(
            refine(&board(), &views, &cam, &poses, &RefineOptions::default()),
            Err(Error::InvalidView { view: 1, .. })
        ));
    }
}
