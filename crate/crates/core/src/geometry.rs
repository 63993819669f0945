//! Pinhole camera, rigid poses, projection and bounding boxes.
//!
//! A [`Pose`] maps points from the object (or world) frame into the camera
//! frame: `X_cam = R * X + t`. Quaternions are Hamilton, exposed w-first.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !cx.is_finite() || !cy.is_finite() {
            return Err(Error::Parameter(format!(
                "intrinsics need positive focal lengths and a finite principal point, got fx={fx} fy={fy} cx={cx} cy={cy}"
            )));
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Projects a camera-frame point, ignoring cheirality.
    #[inline]
    pub fn project_camera_point(&self, p: &Vec3) -> Vec2 {
        Vec2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Pixel to normalized image coordinates.
    #[inline]
    pub fn normalize(&self, uv: &Vec2) -> Vec2 {
        Vec2::new((uv.x - self.cx) / self.fx, (uv.y - self.cy) / self.fy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Pose { rotation, translation }
    }

    /// Builds a pose from a w-first quaternion, which must be unit within 1e-9.
    pub fn from_wxyz(q: [f64; 4], translation: Vec3) -> Result<Self> {
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("quaternion norm {norm} is not 1")));
        }
        Ok(Pose {
            rotation: UnitQuaternion::new_normalize(quat),
            translation,
        })
    }

    pub fn from_rotation_matrix(r: &Matrix3<f64>, translation: Vec3) -> Self {
        let rot = Rotation3::from_matrix_unchecked(*r);
        Pose {
            rotation: UnitQuaternion::from_rotation_matrix(&rot),
            translation,
        }
    }

    /// Camera pose for a camera at `eye` whose optical (z) axis points at
    /// `target`. Camera x is right and y is down; `up` fixes the roll.
    pub fn look_at(eye: &Vec3, target: &Vec3, up: &Vec3) -> Result<Self> {
        let forward = target - eye;
        let dist = forward.norm();
        if dist <= 0.0 || !dist.is_finite() {
            return Err(Error::Parameter("look-at eye coincides with target".into()));
        }
        let z = forward / dist;
        let mut x = z.cross(up);
        if x.norm() < 1e-9 {
            // Looking along `up`; pick any perpendicular.
            let alt = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            x = z.cross(&alt);
        }
        let x = x.normalize();
        let y = z.cross(&x);
        // Rows are the camera axes expressed in the world frame.
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let pose = Pose::from_rotation_matrix(&r, Vec3::zeros());
        Ok(Pose {
            translation: -(pose.rotation * eye),
            ..pose
        })
    }

    /// `[w, x, y, z]`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    #[inline]
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let r_inv = self.rotation.inverse();
        Pose {
            rotation: r_inv,
            translation: -(r_inv * self.translation),
        }
    }

    /// Position of the camera centre in the object/world frame.
    pub fn camera_center(&self) -> Vec3 {
        -(self.rotation.inverse() * self.translation)
    }
}

/// Projects object-frame points into pixels.
pub fn project(k: &CameraIntrinsics, pose: &Pose, points: &[Vec3]) -> Result<Vec<Vec2>> {
    points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let pc = pose.transform_point(p);
            if pc.z.is_nan() || pc.z <= 0.0 {
                return Err(Error::Cheirality { index, depth: pc.z });
            }
            Ok(k.project_camera_point(&pc))
        })
        .collect()
}

/// `a⁻¹ ∘ b`: the motion from `a` to `b` expressed in `a`'s frame.
pub fn relative_pose(a: &Pose, b: &Pose) -> Pose {
    let ra_inv = a.rotation.inverse();
    Pose {
        rotation: ra_inv * b.rotation,
        translation: ra_inv * (b.translation - a.translation),
    }
}

/// Geodesic angle between two rotations in degrees, insensitive to quaternion sign.
///
/// Equals `2 acos(|<q1, q2>|)`. It is evaluated as `2 atan2(|vec(q1* q2)|, |<q1, q2>|)`
/// because `acos` cannot resolve angles below ~1e-6 degrees near 1.
pub fn quaternion_angle(q1: &UnitQuaternion<f64>, q2: &UnitQuaternion<f64>) -> f64 {
    let dot = q1.coords.dot(&q2.coords).abs().clamp(-1.0, 1.0);
    // Vector part of q1* q2, written out so identical inputs cancel exactly.
    let (v1, v2) = (q1.vector(), q2.vector());
    let vec = v2 * q1.w - v1 * q2.w - v1.cross(&v2);
    (2.0 * vec.norm().atan2(dot)).to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::Parameter(format!(
                "bounding box ({x_min}, {y_min})-({x_max}, {y_max}) has zero or negative extent"
            )));
        }
        Ok(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

/// Tightest box around `points`, grown per axis by `clearance_fraction` about its centre.
pub fn bbox_from_landmarks(points: &[Vec2], clearance_fraction: f64) -> Result<BoundingBox> {
    if points.is_empty() {
        return Err(Error::Parameter("bounding box needs at least one point".into()));
    }
    if clearance_fraction.is_nan() || clearance_fraction < 0.0 {
        return Err(Error::Parameter(format!(
            "clearance fraction must be non-negative, got {clearance_fraction}"
        )));
    }
    let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
    let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let scale = 1.0 + clearance_fraction;
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    let (hw, hh) = (0.5 * (x1 - x0) * scale, 0.5 * (y1 - y0) * scale);
    BoundingBox::new(cx - hw, cy - hh, cx + hw, cy + hh)
}

/// Ordered 3D landmarks in the object frame, optionally named, plus an
/// optional dense model cloud.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LandmarkSet {
    pub points: Vec<Vec3>,
    pub labels: Option<Vec<String>>,
    pub cloud: Option<Vec<Vec3>>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Vec3>) -> Self {
        LandmarkSet {
            points,
            labels: None,
            cloud: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Vec3> {
        self.points.get(index)
    }
}

/// Rotation vector exponential.
pub fn exp_so3(omega: &Vec3) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*omega)
}
