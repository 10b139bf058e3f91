use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{project_camera_point, Intrinsics, Projection, RigidTransform};
use crate::render::{soft_vjp, ColorMaskImage, PoseGradient, SoftRenderConfig, WHITE};
use crate::scene::{FrameOfReference, Scene};

/// Target data for one frame: color-coded mask and 2D joints.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// 1-based frame index.
    pub frame: usize,
    pub target_mask: ColorMaskImage,
    pub target_joints: Vec<Vec<Projection>>,
}

impl Observation {
    /// No character pixel and no visible joint: the frame carries no signal.
    pub fn is_empty(&self) -> bool {
        self.target_mask.pixels().iter().all(|p| *p == WHITE)
            && !self.target_joints.iter().flatten().any(|j| j.visible)
    }

    pub fn check_size(&self, k: &Intrinsics) -> Result<()> {
        if self.target_mask.width() != k.width || self.target_mask.height() != k.height {
            return Err(Error::ImageSizeMismatch {
                a_width: self.target_mask.width(),
                a_height: self.target_mask.height(),
                b_width: k.width,
                b_height: k.height,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_c: f64,
    pub lambda_j: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_c: 1.0,
            lambda_j: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x >= 0.0 && x.is_finite();
        if !ok(self.lambda_c) || !ok(self.lambda_j) || self.lambda_c + self.lambda_j == 0.0 {
            return Err(Error::InvalidConfig(format!(
                "loss weights must be non-negative and not both zero, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Mean over pixels of the squared RGB difference, in `[0, 3]`.
pub fn composition_loss(rendered: &ColorMaskImage, target: &ColorMaskImage) -> Result<f64> {
    rendered.same_size(target)?;
    let n = rendered.pixels().len() as f64;
    Ok(rendered
        .pixels()
        .iter()
        .zip(target.pixels())
        .map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointLoss {
    pub value: f64,
    /// Set when no joint pair is visible on both sides.
    pub no_signal: bool,
}

fn check_structure(a: &[Vec<Projection>], b: &[Vec<Projection>]) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(Error::JointStructure(format!(
            "{:?} vs {:?} joints per character",
            a.iter().map(Vec::len).collect::<Vec<_>>(),
            b.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    Ok(())
}

/// Mean squared pixel distance over jointly visible pairs, divided by the
/// squared image diagonal.
pub fn joint_loss(projected: &[Vec<Projection>], target: &[Vec<Projection>], k: &Intrinsics) -> Result<JointLoss> {
    check_structure(projected, target)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, q) in projected.iter().flatten().zip(target.iter().flatten()) {
        if p.visible && q.visible {
            sum += (p.pixel[0] - q.pixel[0]).powi(2) + (p.pixel[1] - q.pixel[1]).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Ok(JointLoss {
            value: 0.0,
            no_signal: true,
        });
    }
    Ok(JointLoss {
        value: sum / (n as f64 * k.diagonal_sq()),
        no_signal: false,
    })
}

/// Loss value at one pose with its gradient with respect to the pose entries.
#[derive(Clone, Copy, Debug)]
pub struct LossEval {
    pub value: f64,
    pub composition: f64,
    pub joint: f64,
    pub no_joint_signal: bool,
    pub pose_grad: PoseGradient,
}

/// `lambda_c * L_c + lambda_j * L_j` for `obs` seen through `pose`, and its
/// gradient with respect to the 12 pose entries.
pub fn total_loss(
    scene: &Scene,
    pose: &RigidTransform,
    k: &Intrinsics,
    cfg: &SoftRenderConfig,
    obs: &Observation,
    weights: &LossWeights,
) -> Result<LossEval> {
    if scene.frame_of_reference() != FrameOfReference::World {
        return Err(Error::InvalidScene("loss expects a world-frame scene".into()));
    }
    obs.check_size(k)?;
    let joints = scene.joints_at(obs.frame)?;
    let shape: Vec<Vec<Projection>> = joints
        .iter()
        .map(|j| vec![Projection { pixel: [0.0; 2], visible: false }; j.len()])
        .collect();
    check_structure(&shape, &obs.target_joints)?;

    let mut grad = PoseGradient::default();
    let mut composition = 0.0;
    if weights.lambda_c != 0.0 {
        let caps = scene.capsules_at(obs.frame)?;
        let target = obs.target_mask.pixels();
        let scale = 1.0 / k.pixel_count() as f64;
        let (v, g) = soft_vjp(&caps, scene.character_count(), pose, k, cfg, |i, p| {
            let t = &target[i];
            let r = [p[0] - t[0], p[1] - t[1], p[2] - t[2]];
            (
                (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]) * scale,
                [2.0 * r[0] * scale, 2.0 * r[1] * scale, 2.0 * r[2] * scale],
            )
        });
        composition = v;
        grad.add(&g.scaled(weights.lambda_c));
    }

    // joints: u = (fx x/z + cx, fy y/z + cy) for jointly visible pairs
    let mut sum = 0.0;
    let mut pairs: Vec<([f64; 3], [f64; 3], [f64; 2])> = Vec::new();
    for (js, ts) in joints.iter().zip(&obs.target_joints) {
        for (p, tgt) in js.iter().zip(ts) {
            let q = pose.apply(&Vector3::from(*p));
            let q = [q.x, q.y, q.z];
            let proj = project_camera_point(&q, k);
            if proj.visible && tgt.visible {
                let d = [proj.pixel[0] - tgt.pixel[0], proj.pixel[1] - tgt.pixel[1]];
                sum += d[0] * d[0] + d[1] * d[1];
                pairs.push((*p, q, d));
            }
        }
    }
    let no_joint_signal = pairs.is_empty();
    let joint = if no_joint_signal {
        0.0
    } else {
        let norm = 1.0 / (pairs.len() as f64 * k.diagonal_sq());
        if weights.lambda_j != 0.0 {
            let s = 2.0 * norm * weights.lambda_j;
            for (p, q, d) in &pairs {
                let iz = 1.0 / q[2];
                let (ux, uy) = (s * d[0], s * d[1]);
                let dq = [
                    ux * k.fx * iz,
                    uy * k.fy * iz,
                    -iz * iz * (ux * k.fx * q[0] + uy * k.fy * q[1]),
                ];
                grad.accumulate_point(p, &dq);
            }
        }
        sum * norm
    };
    Ok(LossEval {
        value: weights.lambda_c * composition + weights.lambda_j * joint,
        composition,
        joint,
        no_joint_signal,
        pose_grad: grad,
    })
}
