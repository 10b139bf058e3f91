use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ad::{add3, mat_mul_const, mat_vec_const, Real, M3, V3};
use crate::error::{Error, Result};
use crate::geom::{exp_screw_generic, exp_twist_generic, normalize_axis, RigidTransform, ScrewParams};

use super::mlp::Mlp;

/// Twist exponential used for every relative transform of the model.
///
/// The default reads `(theta, w, v)` as the twist `theta * (w, v)` for an
/// axis of any length, so the rotation per step is `theta * |w|`. With
/// `renormalize` the axis is first projected to the unit sphere.
pub(crate) fn relative_transform<S: Real>(theta: S, w: &V3<S>, v: &V3<S>, renormalize: bool) -> (M3<S>, V3<S>) {
    if renormalize {
        exp_screw_generic(theta, &normalize_axis(w), v)
    } else {
        exp_twist_generic(theta, w, v)
    }
}

/// Unit-axis screw with the same exponential as the twist `theta * (w, v)`.
pub fn twist_to_screw(theta: f64, w: [f64; 3], v: [f64; 3]) -> ScrewParams {
    let n = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    if n < 1e-300 {
        return ScrewParams::new(theta, [0.0; 3], v);
    }
    ScrewParams::new(theta * n, w.map(|x| x / n), v.map(|x| x / n))
}

/// `(R_a, t_a) * (R_b, t_b)` with the right factor constant.
pub(crate) fn compose_const<S: Real>(r: &M3<S>, t: &V3<S>, b: &RigidTransform) -> (M3<S>, V3<S>) {
    let rb = b.rotation_array();
    let tb = b.translation_array();
    (mat_mul_const(r, &rb), add3(&mat_vec_const(r, &tb), t))
}

/// Sequential camera model: `c_t = A_t c_{t-1}` with
/// `A_t = exp(theta, w1 + f_w(s), v1 + f_v(s))` and `s = (t-1)/(T-1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryModel {
    pub theta: f64,
    pub w1: [f64; 3],
    pub v1: [f64; 3],
    pub mlp_w: Mlp,
    pub mlp_v: Mlp,
    pub frame_count: usize,
    pub renormalize_axis: bool,
}

/// Parameter layout: `[theta, w1, v1, mlp_w..., mlp_v...]`.
pub(crate) const THETA: usize = 0;
pub(crate) const W1: usize = 1;
pub(crate) const V1: usize = 4;
pub(crate) const MLP_START: usize = 7;

impl TrajectoryModel {
    /// Zero-output MLPs seeded from `seed`.
    pub fn new(
        theta: f64,
        w1: [f64; 3],
        v1: [f64; 3],
        frame_count: usize,
        hidden: &[usize],
        encoding: bool,
        seed: u64,
    ) -> Result<TrajectoryModel> {
        if frame_count < 1 {
            return Err(Error::InvalidConfig("trajectory needs at least one frame".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mlp_w = Mlp::new(hidden, 3, encoding, &mut rng);
        rng.set_stream(2);
        let mlp_v = Mlp::new(hidden, 3, encoding, &mut rng);
        Ok(TrajectoryModel {
            theta,
            w1,
            v1,
            mlp_w,
            mlp_v,
            frame_count,
            renormalize_axis: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.mlp_w.validate()?;
        self.mlp_v.validate()?;
        if self.mlp_w.outputs() != 3 || self.mlp_v.outputs() != 3 {
            return Err(Error::InvalidConfig("trajectory MLPs must have 3 outputs".into()));
        }
        let finite = self.theta.is_finite() && self.w1.iter().chain(&self.v1).all(|x| x.is_finite());
        if !finite || self.frame_count < 1 {
            return Err(Error::InvalidConfig("invalid trajectory model".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        MLP_START + self.mlp_w.param_count() + self.mlp_v.param_count()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.push(self.theta);
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.v1);
        p.extend_from_slice(self.mlp_w.params());
        p.extend_from_slice(self.mlp_v.params());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        self.theta = p[THETA];
        self.w1.copy_from_slice(&p[W1..W1 + 3]);
        self.v1.copy_from_slice(&p[V1..V1 + 3]);
        let nw = self.mlp_w.param_count();
        self.mlp_w.params_mut().copy_from_slice(&p[MLP_START..MLP_START + nw]);
        self.mlp_v.params_mut().copy_from_slice(&p[MLP_START + nw..]);
    }

    /// Range of the MLP parameters in the flat layout.
    pub(crate) fn mlp_range(&self) -> std::ops::Range<usize> {
        MLP_START..self.param_count()
    }

    /// `(t - 1) / (T - 1)`, or 0 for a single-frame model.
    pub fn t_norm(&self, t: usize) -> f64 {
        if self.frame_count <= 1 {
            0.0
        } else {
            (t as f64 - 1.0) / (self.frame_count as f64 - 1.0)
        }
    }

    /// `(theta, w_t, v_t)` at normalized time `s`, from parameters `p`.
    pub(crate) fn twist_at<S: Real>(&self, p: &[S], s: f64) -> (S, V3<S>, V3<S>) {
        let nw = self.mlp_w.param_count();
        let fw = self.mlp_w.forward(&p[MLP_START..MLP_START + nw], s);
        let fv = self.mlp_v.forward(&p[MLP_START + nw..], s);
        let w = [p[W1] + fw[0], p[W1 + 1] + fw[1], p[W1 + 2] + fw[2]];
        let v = [p[V1] + fv[0], p[V1 + 1] + fv[1], p[V1 + 2] + fv[2]];
        (p[THETA], w, v)
    }

    pub(crate) fn relative_at<S: Real>(&self, p: &[S], s: f64) -> (M3<S>, V3<S>) {
        let (theta, w, v) = self.twist_at(p, s);
        relative_transform(theta, &w, &v, self.renormalize_axis)
    }

    /// `(theta, w_t, v_t)` at normalized time `s`.
    pub fn twist_at_norm(&self, s: f64) -> (f64, [f64; 3], [f64; 3]) {
        self.twist_at(&self.params(), s)
    }

    /// Relative transform at any normalized time in `[0, 1]`.
    pub fn transform_at_norm(&self, s: f64) -> RigidTransform {
        let (r, t) = self.relative_at(&self.params(), s);
        RigidTransform::from_arrays(&r, &t).orthonormalized()
    }
}

/// `A_t` for `2 <= t <= T`.
pub fn traj_transform_at(model: &TrajectoryModel, t: usize) -> Result<RigidTransform> {
    if t < 2 || t > model.frame_count {
        return Err(Error::FrameOutOfRange {
            frame: t,
            frame_count: model.frame_count,
        });
    }
    Ok(model.transform_at_norm(model.t_norm(t)))
}

/// `c_1 = c1`, `c_t = A_t c_{t-1}`.
pub fn unroll_trajectory(model: &TrajectoryModel, c1: &RigidTransform) -> Vec<RigidTransform> {
    let mut out = Vec::with_capacity(model.frame_count);
    out.push(*c1);
    for t in 2..=model.frame_count {
        let a = traj_transform_at(model, t).expect("t in range");
        let next = a.compose(out.last().unwrap()).orthonormalized();
        out.push(next);
    }
    out
}
