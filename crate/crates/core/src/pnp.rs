//! Pose from 2D-3D correspondences.
//!
//! The pipeline is: keep correspondences whose confidence clears a decaying
//! threshold, initialize with a linear solve (DLT for general 3D landmarks, a
//! plane homography for coplanar ones), then polish with Levenberg-Marquardt
//! on the confidence-weighted reprojection error.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::geometry::{exp_so3, CameraIntrinsics, LandmarkSet, Pose, Vec2, Vec3};
use crate::landmark_oracle::Correspondence;

/// Minimum correspondences for the general (non-coplanar) linear solve.
pub const MIN_DLT_POINTS: usize = 6;
/// Minimum correspondences for the coplanar linear solve.
pub const MIN_PLANAR_POINTS: usize = 4;

/// Relative singular-value level below which a direction counts as collapsed.
const RANK_TOL: f64 = 1e-9;
/// Smallest residual weight, so zero-confidence points cannot zero out the normal equations.
const MIN_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterPolicy {
    pub initial_threshold: f64,
    pub min_count: usize,
    /// Multiplicative threshold decay per round.
    pub decay: f64,
    /// Once the threshold falls to this value, everything is kept.
    pub floor: f64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            initial_threshold: 0.95,
            min_count: 15,
            decay: 0.8,
            floor: 0.0,
        }
    }
}

impl FilterPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::Parameter(format!("decay {} must lie in (0, 1)", self.decay)));
        }
        if self.min_count < MIN_PLANAR_POINTS {
            return Err(Error::Parameter(format!(
                "min_count {} must be at least {MIN_PLANAR_POINTS}",
                self.min_count
            )));
        }
        if !self.initial_threshold.is_finite() || !self.floor.is_finite() {
            return Err(Error::Parameter("thresholds must be finite".into()));
        }
        Ok(())
    }

    /// Threshold of round `k`: `initial * decay^k`.
    pub fn threshold(&self, k: u32) -> f64 {
        self.initial_threshold * self.decay.powi(k as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<Correspondence>,
    /// Positions of `kept` in the input.
    pub indices: Vec<usize>,
    /// Final threshold.
    pub threshold: f64,
    /// Every threshold tried, in order.
    pub thresholds: Vec<f64>,
    /// The threshold decayed to the floor and all input was returned.
    pub floor_reached: bool,
}

/// Keeps correspondences with confidence strictly above a threshold that
/// starts at `initial_threshold` and decays until `min_count` survive.
pub fn filter_correspondences(corrs: &[Correspondence], policy: &FilterPolicy) -> Result<FilterOutcome> {
    policy.validate()?;
    if corrs.is_empty() {
        return Err(Error::Parameter("no correspondences to filter".into()));
    }
    let mut thresholds = Vec::new();
    for k in 0.. {
        let theta = policy.threshold(k);
        thresholds.push(theta);
        if theta <= policy.floor {
            return Ok(FilterOutcome {
                kept: corrs.to_vec(),
                indices: (0..corrs.len()).collect(),
                threshold: theta,
                thresholds,
                floor_reached: true,
            });
        }
        let indices: Vec<usize> = (0..corrs.len()).filter(|&i| corrs[i].confidence > theta).collect();
        if indices.len() >= policy.min_count {
            return Ok(FilterOutcome {
                kept: indices.iter().map(|&i| corrs[i]).collect(),
                indices,
                threshold: theta,
                thresholds,
                floor_reached: false,
            });
        }
    }
    unreachable!("threshold underflows to zero")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearMethod {
    /// Planar path when the landmarks are coplanar, DLT otherwise.
    #[default]
    Auto,
    Dlt,
    Planar,
}

fn gather(corrs: &[Correspondence], landmarks: &LandmarkSet) -> Result<Vec<Vec3>> {
    corrs
        .iter()
        .map(|c| {
            landmarks.get(c.landmark_index).copied().ok_or_else(|| {
                Error::Validation(format!(
                    "correspondence references landmark {} of {}",
                    c.landmark_index,
                    landmarks.len()
                ))
            })
        })
        .collect()
}

/// Singular values (descending) and right singular vectors of the centred point cloud.
fn principal_axes(points: &[Vec3]) -> (Vec3, [f64; 3], Matrix3<f64>) {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::zeros(), |a, p| a + p) / n;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        scatter += d * d.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let sv = order.map(|i| eig.eigenvalues[i].max(0.0).sqrt());
    let axes = Matrix3::from_columns(&order.map(|i| eig.eigenvectors.column(i).into_owned()));
    (centroid, sv, axes)
}

/// Linear pose initialization.
pub fn solve_pnp_linear(corrs: &[Correspondence], landmarks: &LandmarkSet, k: &CameraIntrinsics) -> Result<Pose> {
    solve_pnp_linear_with(corrs, landmarks, k, LinearMethod::Auto)
}

pub fn solve_pnp_linear_with(
    corrs: &[Correspondence],
    landmarks: &LandmarkSet,
    k: &CameraIntrinsics,
    method: LinearMethod,
) -> Result<Pose> {
    let min = if method == LinearMethod::Dlt {
        MIN_DLT_POINTS
    } else {
        MIN_PLANAR_POINTS
    };
    if corrs.len() < min {
        return Err(Error::Parameter(format!(
            "linear PnP needs at least {min} correspondences, got {}",
            corrs.len()
        )));
    }
    let world = gather(corrs, landmarks)?;
    let image: Vec<Vec2> = corrs.iter().map(|c| k.normalize(&c.uv)).collect();
    let (centroid, sv, axes) = principal_axes(&world);
    if sv[0] == 0.0 || sv[1] / sv[0] < RANK_TOL {
        return Err(Error::Degenerate("landmarks are collinear or coincident".into()));
    }
    let planar = sv[2] / sv[0] < RANK_TOL;
    let pose = match (method, planar) {
        (LinearMethod::Planar, _) | (LinearMethod::Auto, true) => {
            if !planar {
                return Err(Error::Degenerate(
                    "planar solve requested for non-coplanar landmarks".into(),
                ));
            }
            solve_planar(&world, &image, centroid, &axes)?
        }
        _ => {
            if corrs.len() < MIN_DLT_POINTS {
                return Err(Error::Parameter(format!(
                    "DLT needs at least {MIN_DLT_POINTS} correspondences, got {}",
                    corrs.len()
                )));
            }
            solve_dlt(&world, &image, centroid)?
        }
    };
    check_cheirality(&pose, &world)?;
    Ok(pose)
}

fn check_cheirality(pose: &Pose, world: &[Vec3]) -> Result<()> {
    for (index, p) in world.iter().enumerate() {
        let depth = pose.transform_point(p).z;
        if depth.is_nan() || depth <= 0.0 {
            return Err(Error::Cheirality { index, depth });
        }
    }
    Ok(())
}

/// Null vector of `a` and its second-smallest singular value relative to the largest.
fn null_vector(a: DMatrix<f64>) -> Result<(DVector<f64>, f64)> {
    let cols = a.ncols();
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not produce right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    if order.len() < cols {
        return Err(Error::Degenerate("underdetermined linear system".into()));
    }
    let largest = svd.singular_values[order[0]];
    let second_smallest = svd.singular_values[order[cols - 2]];
    let v = v_t.row(order[cols - 1]).transpose();
    Ok((v, if largest > 0.0 { second_smallest / largest } else { 0.0 }))
}

/// Nearest rotation to `m` and the mean singular value (the scale of `m`).
fn procrustes(m: &Matrix3<f64>) -> (Matrix3<f64>, f64) {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut fix = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    (u * fix * v_t, svd.singular_values.sum() / 3.0)
}

fn solve_dlt(world: &[Vec3], image: &[Vec2], centroid: Vec3) -> Result<Pose> {
    let n = world.len();
    let mean_dist = world.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n as f64;
    let s = 3f64.sqrt() / mean_dist;
    let mut a = DMatrix::<f64>::zeros(2 * n, 12);
    for (i, (p, uv)) in world.iter().zip(image).enumerate() {
        let q = (p - centroid) * s;
        let h = [q.x, q.y, q.z, 1.0];
        for j in 0..4 {
            a[(2 * i, j)] = h[j];
            a[(2 * i, 8 + j)] = -uv.x * h[j];
            a[(2 * i + 1, 4 + j)] = h[j];
            a[(2 * i + 1, 8 + j)] = -uv.y * h[j];
        }
    }
    let (v, gap) = null_vector(a)?;
    if gap < RANK_TOL {
        return Err(Error::Degenerate(
            "DLT system has a multi-dimensional null space".into(),
        ));
    }
    // Undo the point normalization: P = P' * [s I, -s c; 0, 1].
    let mut m = Matrix3::from_fn(|r, c| v[4 * r + c] * s);
    let mut p4 = Vec3::from_fn(|r, _| v[4 * r + 3]) - m * centroid;
    // Fix the sign of the null vector so the landmarks have positive depth.
    let positive = world.iter().filter(|p| (m.row(2) * *p)[0] + p4.z > 0.0).count();
    if 2 * positive < n {
        m = -m;
        p4 = -p4;
    }
    if m.determinant() <= 0.0 {
        return Err(Error::Degenerate("DLT solution is a reflection".into()));
    }
    let (r, scale) = procrustes(&m);
    Ok(Pose::from_rotation_matrix(&r, p4 / scale))
}

fn solve_planar(world: &[Vec3], image: &[Vec2], centroid: Vec3, axes: &Matrix3<f64>) -> Result<Pose> {
    let e1 = axes.column(0).into_owned();
    let e2 = axes.column(1).into_owned();
    let basis = Matrix3::from_columns(&[e1, e2, e1.cross(&e2)]);
    let local: Vec<Vec2> = world
        .iter()
        .map(|p| {
            let d = p - centroid;
            Vec2::new(d.dot(&e1), d.dot(&e2))
        })
        .collect();
    let n = world.len();
    let s = 2f64.sqrt() / (local.iter().map(|q| q.norm()).sum::<f64>() / n as f64);
    let mut a = DMatrix::<f64>::zeros(2 * n, 9);
    for (i, (q, uv)) in local.iter().zip(image).enumerate() {
        let h = [q.x * s, q.y * s, 1.0];
        for j in 0..3 {
            a[(2 * i, j)] = h[j];
            a[(2 * i, 6 + j)] = -uv.x * h[j];
            a[(2 * i + 1, 3 + j)] = h[j];
            a[(2 * i + 1, 6 + j)] = -uv.y * h[j];
        }
    }
    let (v, gap) = null_vector(a)?;
    if gap < RANK_TOL {
        return Err(Error::Degenerate(
            "homography system has a multi-dimensional null space".into(),
        ));
    }
    // Columns: h1 = lambda R e1, h2 = lambda R e2, h3 = lambda (R c + t).
    let h = Matrix3::from_fn(|r, c| v[3 * r + c]);
    let mut h1 = h.column(0) * s;
    let mut h2 = h.column(1) * s;
    let mut h3 = h.column(2).into_owned();
    if h3.z < 0.0 {
        h1 = -h1;
        h2 = -h2;
        h3 = -h3;
    }
    let lambda = 0.5 * (h1.norm() + h2.norm());
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::Degenerate("homography has zero scale".into()));
    }
    let (r1, r2) = (h1 / lambda, h2 / lambda);
    let (q, _) = procrustes(&Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]));
    let r = q * basis.transpose();
    let t = h3 / lambda - r * centroid;
    Ok(Pose::from_rotation_matrix(&r, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Residuals weighted by correspondence confidence.
    #[default]
    Confidence,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    pub max_iters: usize,
    /// Stop once an accepted step lowers the cost by less than this.
    pub tol: f64,
    pub weighting: Weighting,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            max_iters: 100,
            tol: 1e-10,
            weighting: Weighting::Confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnPResult {
    pub pose: Pose,
    pub inlier_indices: Vec<usize>,
    /// Unweighted RMS reprojection error, pixels.
    pub reprojection_rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Weighted cost after the initial pose and after every accepted step.
    pub cost_history: Vec<f64>,
}

/// Applies a local increment `[omega; dt]`: rotation `exp(omega) * R`, translation `t + dt`.
pub fn retract(pose: &Pose, delta: &Vector6<f64>) -> Pose {
    let omega = Vec3::new(delta[0], delta[1], delta[2]);
    Pose::new(
        exp_so3(&omega) * pose.rotation,
        pose.translation + Vec3::new(delta[3], delta[4], delta[5]),
    )
}

/// Reprojection problem for one frame.
pub struct ReprojectionProblem<'a> {
    pub world: Vec<Vec3>,
    pub observed: Vec<Vec2>,
    pub sqrt_weights: Vec<f64>,
    pub k: &'a CameraIntrinsics,
}

impl<'a> ReprojectionProblem<'a> {
    pub fn new(
        corrs: &[Correspondence],
        landmarks: &LandmarkSet,
        k: &'a CameraIntrinsics,
        weighting: Weighting,
    ) -> Result<Self> {
        Ok(ReprojectionProblem {
            world: gather(corrs, landmarks)?,
            observed: corrs.iter().map(|c| c.uv).collect(),
            sqrt_weights: corrs
                .iter()
                .map(|c| match weighting {
                    Weighting::Confidence => c.confidence.max(MIN_WEIGHT).sqrt(),
                    Weighting::Uniform => 1.0,
                })
                .collect(),
            k,
        })
    }

    /// Weighted residuals `sqrt(w_i) * (project(X_i) - u_i)`, stacked `[du, dv]`.
    pub fn residuals(&self, pose: &Pose) -> DVector<f64> {
        let mut r = DVector::zeros(2 * self.world.len());
        for (i, (p, uv)) in self.world.iter().zip(&self.observed).enumerate() {
            let proj = self.k.project_camera_point(&pose.transform_point(p));
            r[2 * i] = self.sqrt_weights[i] * (proj.x - uv.x);
            r[2 * i + 1] = self.sqrt_weights[i] * (proj.y - uv.y);
        }
        r
    }

    /// Analytic Jacobian of [`Self::residuals`] with respect to the
    /// [`retract`] increment at zero.
    pub fn jacobian(&self, pose: &Pose) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(2 * self.world.len(), 6);
        for (i, p) in self.world.iter().enumerate() {
            let rp = pose.rotation * p;
            let c = rp + pose.translation;
            let (iz, w) = (1.0 / c.z, self.sqrt_weights[i]);
            let du = Vec3::new(self.k.fx * iz, 0.0, -self.k.fx * c.x * iz * iz) * w;
            let dv = Vec3::new(0.0, self.k.fy * iz, -self.k.fy * c.y * iz * iz) * w;
            // d(c)/d(omega) = -[R X]_x, so the row is (d . (-[rp]_x)) = rp x d.
            let du_w = rp.cross(&du);
            let dv_w = rp.cross(&dv);
            for a in 0..3 {
                j[(2 * i, a)] = du_w[a];
                j[(2 * i + 1, a)] = dv_w[a];
                j[(2 * i, 3 + a)] = du[a];
                j[(2 * i + 1, 3 + a)] = dv[a];
            }
        }
        j
    }

    pub fn cost(&self, pose: &Pose) -> f64 {
        self.residuals(pose).norm_squared()
    }

    fn all_in_front(&self, pose: &Pose) -> bool {
        self.world.iter().all(|p| pose.transform_point(p).z > 0.0)
    }

    /// Unweighted RMS pixel error.
    pub fn rmse(&self, pose: &Pose) -> f64 {
        let sum: f64 = self
            .world
            .iter()
            .zip(&self.observed)
            .map(|(p, uv)| (self.k.project_camera_point(&pose.transform_point(p)) - uv).norm_squared())
            .sum();
        (sum / self.world.len() as f64).sqrt()
    }
}

/// Levenberg-Marquardt refinement of `initial`.
pub fn refine_pose(
    initial: &Pose,
    corrs: &[Correspondence],
    landmarks: &LandmarkSet,
    k: &CameraIntrinsics,
    opts: &RefineOptions,
) -> Result<PnPResult> {
    if corrs.is_empty() {
        return Err(Error::Parameter("refinement needs correspondences".into()));
    }
    let problem = ReprojectionProblem::new(corrs, landmarks, k, opts.weighting)?;
    let world = &problem.world;
    check_cheirality(initial, world)?;

    let mut pose = *initial;
    let mut cost = problem.cost(&pose);
    if !cost.is_finite() {
        return Err(Error::Numerical(format!("initial cost is {cost}")));
    }
    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        iterations += 1;
        let j = problem.jacobian(&pose);
        let r = problem.residuals(&pose);
        let jtj: Matrix6<f64> = (j.transpose() * &j).fixed_view::<6, 6>(0, 0).into_owned();
        let g: Vector6<f64> = (j.transpose() * r).fixed_view::<6, 1>(0, 0).into_owned();

        let mut damped = jtj;
        for d in 0..6 {
            damped[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
            continue;
        };
        let delta = -chol.solve(&g);
        if !delta.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("non-finite refinement step".into()));
        }
        let scale = pose.translation.norm() + 1.0;
        if delta.norm() < 1e-15 * scale {
            converged = true;
            break;
        }
        let candidate = retract(&pose, &delta);
        let new_cost = if problem.all_in_front(&candidate) {
            problem.cost(&candidate)
        } else {
            f64::INFINITY
        };
        if new_cost.is_nan() {
            return Err(Error::Numerical("refinement cost became NaN".into()));
        }
        if new_cost < cost {
            let decrease = cost - new_cost;
            pose = candidate;
            cost = new_cost;
            history.push(cost);
            lambda = (lambda * 0.1).max(1e-15);
            if decrease < opts.tol {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                // No descent direction left at any damping: a local minimum.
                converged = true;
                break;
            }
        }
    }

    Ok(PnPResult {
        pose,
        inlier_indices: (0..corrs.len()).collect(),
        reprojection_rmse: problem.rmse(&pose),
        iterations,
        converged,
        cost_history: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PnpConfig {
    pub policy: FilterPolicy,
    pub method: LinearMethod,
    pub refine: RefineOptions,
}

/// Filter, linear initialization, then refinement.
pub fn estimate_pose(
    corrs: &[Correspondence],
    landmarks: &LandmarkSet,
    k: &CameraIntrinsics,
    policy: &FilterPolicy,
) -> Result<PnPResult> {
    estimate_pose_with(
        corrs,
        landmarks,
        k,
        &PnpConfig {
            policy: *policy,
            ..PnpConfig::default()
        },
    )
}

pub fn estimate_pose_with(
    corrs: &[Correspondence],
    landmarks: &LandmarkSet,
    k: &CameraIntrinsics,
    cfg: &PnpConfig,
) -> Result<PnPResult> {
    let filtered = filter_correspondences(corrs, &cfg.policy)?;
    let min = if cfg.method == LinearMethod::Planar {
        MIN_PLANAR_POINTS
    } else {
        MIN_DLT_POINTS
    };
    if filtered.kept.len() < min {
        return Err(Error::Degenerate(format!(
            "only {} correspondences after filtering, need {min}",
            filtered.kept.len()
        )));
    }
    let initial = solve_pnp_linear_with(&filtered.kept, landmarks, k, cfg.method)?;
    let mut result = refine_pose(&initial, &filtered.kept, landmarks, k, &cfg.refine)?;
    result.inlier_indices = filtered.indices;
    Ok(result)
}
