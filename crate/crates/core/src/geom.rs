//! Rigid-transform algebra, the screw exponential, and pinhole projection.
//!
//! Conventions: a [`RigidTransform`] used as a camera pose maps world points
//! into the camera frame. The camera looks down +z, image x grows to the
//! right and image y grows downwards, pixel (0, 0) is the top-left corner.

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::ad::{Real, M3, V3};
use crate::error::{Error, Result};

/// Points closer than this to the image plane are never visible.
pub const Z_NEAR: f64 = 1e-4;

/// Axes shorter than this are treated as the zero axis (pure translation).
pub const AXIS_SNAP: f64 = 1e-9;

const ORTHO_TOL: f64 = 1e-9;

/// Element of SE(3): `x -> rotation * x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Checked constructor; rejects rotations that are not in SO(3) within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = RigidTransform {
            rotation,
            translation,
        };
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        let err = t.orthogonality_error();
        if !(err <= ORTHO_TOL) {
            return Err(Error::InvalidTransform(format!(
                "rotation is not orthonormal (error {err:.3e})"
            )));
        }
        Ok(t)
    }

    /// Builds a transform and projects the rotation onto SO(3) when it has
    /// drifted by more than 1e-9.
    pub fn new_orthonormalized(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
        .orthonormalized()
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn from_rotation(r: Rotation3<f64>) -> Self {
        RigidTransform {
            rotation: *r.matrix(),
            translation: Vector3::zeros(),
        }
    }

    /// From a unit quaternion and translation.
    pub fn from_quaternion(q: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: *q.to_rotation_matrix().matrix(),
            translation,
        }
        .orthonormalized()
    }

    pub(crate) fn from_arrays(r: &[[f64; 3]; 3], t: &[f64; 3]) -> Self {
        RigidTransform {
            rotation: Matrix3::from_fn(|i, j| r[i][j]),
            translation: Vector3::new(t[0], t[1], t[2]),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_array(&self) -> [[f64; 3]; 3] {
        let r = &self.rotation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ]
    }

    pub fn translation_array(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    /// 4x4 homogeneous matrix.
    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self * other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Optical center in world coordinates when `self` is a world-to-camera pose.
    pub fn camera_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Max elementwise deviation of `RᵀR` from identity, combined with `|det R - 1|`.
    pub fn orthogonality_error(&self) -> f64 {
        let r = &self.rotation;
        let e = (r.transpose() * r - Matrix3::identity()).abs().max();
        e.max((r.determinant() - 1.0).abs())
    }

    pub fn is_valid(&self) -> bool {
        self.orthogonality_error() <= ORTHO_TOL
            && self.translation.iter().all(|x| x.is_finite())
    }

    /// Nearest-orthogonal projection of the rotation (via SVD) when it has
    /// drifted past tolerance; untouched otherwise.
    pub fn orthonormalized(mut self) -> Self {
        if self.orthogonality_error() > ORTHO_TOL * 0.5 {
            self.rotation = nearest_rotation(&self.rotation);
        }
        self
    }

    /// Rotation angle of `self.rotation` in radians, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    /// Frobenius distance between homogeneous matrices.
    pub fn distance(&self, other: &RigidTransform) -> f64 {
        (self.matrix() - other.matrix()).norm()
    }
}

pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        r = u2 * vt;
    }
    r
}

/// Geodesic angle of a rotation matrix.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    // atan2 form stays accurate near 0 and pi, unlike acos of the trace
    let c = (r.trace() - 1.0) * 0.5;
    let s = 0.5
        * Vector3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        )
        .norm();
    s.atan2(c)
}

/// Magnitude of the screw that generates `t`: the rotation angle when the
/// motion rotates, the translation length for a pure translation.
pub fn screw_magnitude(t: &RigidTransform) -> f64 {
    let angle = t.rotation_angle();
    if angle > 1e-12 {
        angle
    } else {
        t.translation().norm()
    }
}

/// Screw parameters `(theta, w, v)` of `exp([S] theta)`.
///
/// `w` is either a unit vector or exactly zero (pure translation).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScrewParams {
    theta: f64,
    w: [f64; 3],
    v: [f64; 3],
}

impl ScrewParams {
    /// Normalizes `w` (or snaps it to zero below 1e-9).
    pub fn new(theta: f64, w: [f64; 3], v: [f64; 3]) -> Self {
        ScrewParams {
            theta,
            w: normalize_axis(&w),
            v,
        }
    }

    pub fn identity() -> Self {
        ScrewParams {
            theta: 0.0,
            w: [0.0; 3],
            v: [0.0; 3],
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn w(&self) -> [f64; 3] {
        self.w
    }

    pub fn v(&self) -> [f64; 3] {
        self.v
    }

    pub fn exp(&self) -> RigidTransform {
        exp_screw(self)
    }

    /// Euclidean norm of `(theta*w, theta*v)`, a scale for "how far from identity".
    pub fn norm(&self) -> f64 {
        let s = self.theta;
        let w2: f64 = self.w.iter().map(|x| (x * s).powi(2)).sum();
        let v2: f64 = self.v.iter().map(|x| (x * s).powi(2)).sum();
        (w2 + v2).sqrt()
    }
}

/// Unit-normalizes an axis; axes shorter than [`AXIS_SNAP`] become zero.
pub fn normalize_axis<S: Real>(w: &V3<S>) -> V3<S> {
    let n2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    let n2v = n2.value();
    if n2v < AXIS_SNAP * AXIS_SNAP {
        let z = w[0].constant(0.0);
        return [z, z, z];
    }
    if (n2v.sqrt() - 1.0).abs() <= AXIS_SNAP {
        return *w;
    }
    let n = n2.sqrt();
    [w[0] / n, w[1] / n, w[2] / n]
}

/// Cross-product matrix: `skew(w) * x == w × x`.
pub fn skew<S: Real>(w: &V3<S>) -> M3<S> {
    let z = w[0].constant(0.0);
    [[z, -w[2], w[1]], [w[2], z, -w[0]], [-w[1], w[0], z]]
}

pub fn skew_na(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Closed-form screw exponential for a unit (or zero) axis `w`:
/// rotation `I + sinθ[w] + (1-cosθ)[w]²`,
/// translation `(Iθ + (1-cosθ)[w] + (θ-sinθ)[w]²) v`.
pub fn exp_screw_generic<S: Real>(theta: S, w: &V3<S>, v: &V3<S>) -> (M3<S>, V3<S>) {
    let k = skew(w);
    let k2 = crate::ad::mat_mul(&k, &k);
    let (s, c) = (theta.sin(), theta.cos());
    let one_c = -c + 1.0;
    let t_s = theta - s;
    let mut rot = k;
    let mut g = k;
    for i in 0..3 {
        for j in 0..3 {
            let eye = if i == j { 1.0 } else { 0.0 };
            rot[i][j] = k[i][j] * s + k2[i][j] * one_c + eye;
            let gij = k[i][j] * one_c + k2[i][j] * t_s;
            g[i][j] = if i == j { gij + theta } else { gij };
        }
    }
    let t = crate::ad::mat_vec(&g, v);
    (rot, t)
}

/// Matrix exponential of the twist `θ·(w, v)` for an axis of any length.
///
/// With `φ = |w|` the rotation angle is `θφ`; for `|w| = 1` this equals
/// [`exp_screw_generic`]. Coefficients switch to their Taylor series when
/// `(θφ)² < 1e-4` so the map stays smooth through `w = 0`.
pub fn exp_twist_generic<S: Real>(theta: S, w: &V3<S>, v: &V3<S>) -> (M3<S>, V3<S>) {
    let n2 = crate::ad::dot(w, w);
    let x = theta * theta * n2;
    let xv = x.value();
    // a = sin(r)/r, b = (1-cos r)/r², c = (r - sin r)/r³ with r² = x
    let (a, b, c) = if xv < 1e-4 {
        let x2 = x * x;
        let x3 = x2 * x;
        (
            x * (-1.0 / 6.0) + x2 * (1.0 / 120.0) - x3 * (1.0 / 5040.0) + 1.0,
            x * (-1.0 / 24.0) + x2 * (1.0 / 720.0) - x3 * (1.0 / 40320.0) + 0.5,
            x * (-1.0 / 120.0) + x2 * (1.0 / 5040.0) - x3 * (1.0 / 362880.0) + 1.0 / 6.0,
        )
    } else {
        let r = x.sqrt();
        let (s, co) = (r.sin(), r.cos());
        (s / r, (-co + 1.0) / x, (r - s) / (x * r))
    };
    let k = skew(w);
    let k2 = crate::ad::mat_mul(&k, &k);
    let th2 = theta * theta;
    let ra = theta * a;
    let rb = th2 * b;
    let gc = th2 * theta * c;
    let mut rot = k;
    let mut g = k;
    for i in 0..3 {
        for j in 0..3 {
            let r_ij = k[i][j] * ra + k2[i][j] * rb;
            let g_ij = k[i][j] * rb + k2[i][j] * gc;
            if i == j {
                rot[i][j] = r_ij + 1.0;
                g[i][j] = g_ij + theta;
            } else {
                rot[i][j] = r_ij;
                g[i][j] = g_ij;
            }
        }
    }
    let t = crate::ad::mat_vec(&g, v);
    (rot, t)
}

pub fn exp_screw(p: &ScrewParams) -> RigidTransform {
    let (r, t) = exp_screw_generic(p.theta, &p.w, &p.v);
    RigidTransform::from_arrays(&r, &t).orthonormalized()
}

/// [`exp_twist_generic`] on plain floats.
pub fn exp_twist(theta: f64, w: &[f64; 3], v: &[f64; 3]) -> RigidTransform {
    let (r, t) = exp_twist_generic(theta, w, v);
    RigidTransform::from_arrays(&r, &t).orthonormalized()
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn inverse(a: &RigidTransform) -> RigidTransform {
    a.inverse()
}

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square image with the principal point at the center.
    pub fn centered(size: u32, focal: f64) -> Self {
        Intrinsics {
            fx: focal,
            fy: focal,
            cx: size as f64 / 2.0,
            cy: size as f64 / 2.0,
            width: size,
            height: size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width < 1 || self.height < 1 {
            return Err(Error::InvalidIntrinsics(format!(
                "image size must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Squared image diagonal in pixels².
    pub fn diagonal_sq(&self) -> f64 {
        let (w, h) = (self.width as f64, self.height as f64);
        w * w + h * h
    }

    pub fn contains(&self, px: &[f64; 2]) -> bool {
        px[0] >= 0.0 && px[0] <= self.width as f64 && px[1] >= 0.0 && px[1] <= self.height as f64
    }

    /// Pixel of a camera-frame point, valid for `q.z > Z_NEAR`.
    pub fn project_camera<S: Real>(&self, q: &V3<S>) -> [S; 2] {
        let iz = q[2].constant(1.0) / q[2];
        [q[0] * iz * self.fx + self.cx, q[1] * iz * self.fy + self.cy]
    }
}

/// Projected pixel plus visibility.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub pixel: [f64; 2],
    pub visible: bool,
}

/// Projects a world point through a world-to-camera pose.
///
/// Points at depth `<= Z_NEAR` are reported invisible with a finite pixel
/// computed at the clamped depth.
pub fn project(point: &Vector3<f64>, pose: &RigidTransform, k: &Intrinsics) -> Projection {
    let q = pose.apply(point);
    project_camera_point(&[q.x, q.y, q.z], k)
}

pub fn project_camera_point(q: &[f64; 3], k: &Intrinsics) -> Projection {
    const CLAMP: f64 = 1e9;
    if q[2] > Z_NEAR {
        let pixel = k.project_camera(q);
        Projection {
            pixel,
            visible: k.contains(&pixel),
        }
    } else {
        let z = Z_NEAR;
        let pixel = [
            (k.fx * q[0] / z + k.cx).clamp(-CLAMP, CLAMP),
            (k.fy * q[1] / z + k.cy).clamp(-CLAMP, CLAMP),
        ];
        Projection {
            pixel,
            visible: false,
        }
    }
}

/// World-to-camera pose of a camera at `eye` looking at `target`, with
/// `up` mapped to image-up.
pub fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>, up: &Vector3<f64>) -> RigidTransform {
    let f = (target - eye).normalize();
    let r = f.cross(up).normalize();
    let d = f.cross(&r);
    let rot = Matrix3::from_rows(&[r.transpose(), d.transpose(), f.transpose()]);
    let rot = nearest_rotation(&rot);
    RigidTransform {
        rotation: rot,
        translation: -(rot * eye),
    }
}
