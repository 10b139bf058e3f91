//! Frame-composition metrics and the three-way method comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{rotation_angle, Intrinsics, Projection, RigidTransform};
use crate::render::{project_joints, render_hard_mask, ColorMaskImage};
use crate::scene::Scene;
use crate::synth::{perceived_tracks, SyntheticShot, TARGET_SUPERSAMPLE};
use crate::trajopt::{optimize_single_pose, optimize_trajectory, LossWeights, Observation, OptimizerConfig, TrajectoryResult};

/// Label of every pixel: 0 for white, `i + 1` for character `i`. Each pixel
/// takes the nearest palette color in max-norm; ties go to the lowest
/// character index, white last.
pub fn quantize_labels(img: &ColorMaskImage, palette: &[[f64; 3]]) -> Vec<u8> {
    img.pixels()
        .iter()
        .map(|p| {
            let dist = |c: &[f64; 3]| (0..3).map(|i| (p[i] - c[i]).abs()).fold(0.0, f64::max);
            let mut best = (dist(&[1.0; 3]), 0u8);
            for (i, c) in palette.iter().enumerate().rev() {
                let d = dist(c);
                if d <= best.0 {
                    best = (d, i as u8 + 1);
                }
            }
            best.1
        })
        .collect()
}

/// Percentage of pixels whose quantized labels agree.
pub fn pixel_accuracy(pred: &ColorMaskImage, gt: &ColorMaskImage, palette: &[[f64; 3]]) -> Result<f64> {
    pred.same_size(gt)?;
    let (a, b) = (quantize_labels(pred, palette), quantize_labels(gt, palette));
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    Ok(100.0 * same as f64 / a.len() as f64)
}

/// Per-character intersection over union, averaged over characters present
/// in either image. Two images without any character score 1.
pub fn iou(pred: &ColorMaskImage, gt: &ColorMaskImage, palette: &[[f64; 3]]) -> Result<f64> {
    pred.same_size(gt)?;
    let (a, b) = (quantize_labels(pred, palette), quantize_labels(gt, palette));
    let mut sum = 0.0;
    let mut present = 0usize;
    for label in 1..=palette.len() as u8 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (x, y) in a.iter().zip(&b) {
            let (p, q) = (*x == label, *y == label);
            inter += (p && q) as usize;
            union += (p || q) as usize;
        }
        if union > 0 {
            sum += inter as f64 / union as f64;
            present += 1;
        }
    }
    Ok(if present == 0 { 1.0 } else { sum / present as f64 })
}

/// Mean pixel distance over jointly visible pairs; `None` when no pair is
/// visible on both sides.
pub fn mpjpe(pred: &[Vec<Projection>], gt: &[Vec<Projection>]) -> Result<Option<f64>> {
    if pred.len() != gt.len() || pred.iter().zip(gt).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::JointStructure("joint lists differ in shape".into()));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, q) in pred.iter().flatten().zip(gt.iter().flatten()) {
        if p.visible && q.visible {
            sum += ((p.pixel[0] - q.pixel[0]).powi(2) + (p.pixel[1] - q.pixel[1]).powi(2)).sqrt();
            n += 1;
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// `target` with the outline of every character region of `estimate`
/// drawn in black.
pub fn contour_overlay(target: &ColorMaskImage, estimate: &ColorMaskImage, palette: &[[f64; 3]]) -> Result<ColorMaskImage> {
    target.same_size(estimate)?;
    let (w, h) = (estimate.width() as i64, estimate.height() as i64);
    let labels = quantize_labels(estimate, palette);
    let at = |x: i64, y: i64| -> u8 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0
        } else {
            labels[(y * w + x) as usize]
        }
    };
    let mut px = target.pixels().to_vec();
    for y in 0..h {
        for x in 0..w {
            let l = at(x, y);
            if l != 0 && [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| at(x + dx, y + dy) != l) {
                px[(y * w + x) as usize] = [0.0; 3];
            }
        }
    }
    ColorMaskImage::from_pixels(target.width(), target.height(), px)
}

/// Camera-center RMSE and geodesic rotation RMSE in degrees.
pub fn trajectory_error(pred: &[RigidTransform], gt: &[RigidTransform]) -> Result<(f64, f64)> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            trajectory: pred.len(),
            frames: gt.len(),
        });
    }
    if pred.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = pred.len() as f64;
    let (mut st, mut sr) = (0.0, 0.0);
    for (a, b) in pred.iter().zip(gt) {
        st += (a.camera_center() - b.camera_center()).norm_squared();
        let rel = a.rotation() * b.rotation().transpose();
        sr += rotation_angle(&rel).to_degrees().powi(2);
    }
    Ok(((st / n).sqrt(), (sr / n).sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub pa: f64,
    pub iou: f64,
    pub mpjpe: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub frames: Vec<FrameMetrics>,
    /// Percent.
    pub pa: f64,
    /// Ratio in `[0, 1]`.
    pub iou: f64,
    /// Pixels, over frames with a joint signal; `None` if there is none.
    pub mpjpe: Option<f64>,
    pub translation_rmse: Option<f64>,
    pub rotation_rmse_deg: Option<f64>,
}

/// Re-renders hard masks and joints along `trajectory` and scores them
/// against the observations. `gt_trajectory` adds the 3D errors.
pub fn evaluate_trajectory(
    method: &str,
    scene_world: &Scene,
    observations: &[Observation],
    trajectory: &[RigidTransform],
    k: &Intrinsics,
    gt_trajectory: Option<&[RigidTransform]>,
) -> Result<MetricsReport> {
    if trajectory.len() != observations.len() {
        return Err(Error::LengthMismatch {
            trajectory: trajectory.len(),
            frames: observations.len(),
        });
    }
    let palette = scene_world.colors();
    let mut frames = Vec::with_capacity(observations.len());
    for (obs, pose) in observations.iter().zip(trajectory) {
        let t = obs.frame;
        let img = render_hard_mask(scene_world, t, pose, k, TARGET_SUPERSAMPLE)
            .map_err(|e| e.at_frame(t))?
            .quantized_rgb8();
        let joints = project_joints(scene_world, t, pose, k).map_err(|e| e.at_frame(t))?;
        frames.push(FrameMetrics {
            frame: t,
            pa: pixel_accuracy(&img, &obs.target_mask, &palette).map_err(|e| e.at_frame(t))?,
            iou: iou(&img, &obs.target_mask, &palette).map_err(|e| e.at_frame(t))?,
            mpjpe: mpjpe(&joints, &obs.target_joints).map_err(|e| e.at_frame(t))?,
        });
    }
    let n = frames.len().max(1) as f64;
    let with_joints: Vec<f64> = frames.iter().filter_map(|f| f.mpjpe).collect();
    let (translation_rmse, rotation_rmse_deg) = match gt_trajectory {
        Some(gt) => {
            let (a, b) = trajectory_error(trajectory, gt)?;
            (Some(a), Some(b))
        }
        None => (None, None),
    };
    Ok(MetricsReport {
        method: method.to_string(),
        pa: frames.iter().map(|f| f.pa).sum::<f64>() / n,
        iou: frames.iter().map(|f| f.iou).sum::<f64>() / n,
        mpjpe: (!with_joints.is_empty()).then(|| with_joints.iter().sum::<f64>() / with_joints.len() as f64),
        frames,
        translation_rmse,
        rotation_rmse_deg,
    })
}

pub const METHOD_INIT: &str = "raw-init";
pub const METHOD_PER_FRAME: &str = "per-frame";
pub const METHOD_OURS: &str = "sequential";

/// Settings of the method comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub optimizer: OptimizerConfig,
    pub weights: LossWeights,
    /// Weights of the per-frame baseline. It fits the rendered masks only,
    /// like a photometric single-image pose refiner.
    pub per_frame_weights: LossWeights,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            optimizer: OptimizerConfig::default(),
            weights: LossWeights::default(),
            per_frame_weights: LossWeights {
                lambda_c: 1.0,
                lambda_j: 0.0,
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct BaselineRun {
    /// Raw init, per-frame, sequential, in that order.
    pub reports: Vec<MetricsReport>,
    pub trajectories: Vec<Vec<RigidTransform>>,
    pub sequential: TrajectoryResult,
}

/// Each frame fitted on its own from the starting pose.
pub fn per_frame_trajectory(
    scene_world: &Scene,
    observations: &[Observation],
    init: &[RigidTransform],
    k: &Intrinsics,
    weights: &LossWeights,
    cfg: &OptimizerConfig,
) -> Result<Vec<RigidTransform>> {
    observations
        .iter()
        .zip(init)
        .map(|(obs, c)| {
            if obs.is_empty() {
                return Ok(*c);
            }
            optimize_single_pose(c, obs, scene_world, k, weights, cfg)
                .map(|r| r.pose)
                .map_err(|e| e.at_frame(obs.frame))
        })
        .collect()
}

/// Scores the starting trajectory, the per-frame baseline and the
/// sequential model on a synthetic shot.
pub fn run_baselines(shot: &SyntheticShot, init: &[RigidTransform], cfg: &BaselineConfig) -> Result<BaselineRun> {
    let k = &shot.intrinsics;
    let obs = &shot.observations;
    let gt = Some(shot.gt_trajectory.as_slice());
    let scene_cam = perceived_tracks(&shot.scene_world, init)?;
    let scene_world = crate::scene::lift_tracks_to_world(&scene_cam, init)?;

    let per_frame = per_frame_trajectory(&scene_world, obs, init, k, &cfg.per_frame_weights, &cfg.optimizer)?;
    let seq = optimize_trajectory(obs, &scene_cam, init, k, &cfg.weights, &cfg.optimizer)?;

    let mut reports = Vec::new();
    let trajectories = vec![init.to_vec(), per_frame, seq.trajectory.clone()];
    for (name, traj) in [METHOD_INIT, METHOD_PER_FRAME, METHOD_OURS].iter().zip(&trajectories) {
        reports.push(evaluate_trajectory(name, &shot.scene_world, obs, traj, k, gt)?);
    }
    Ok(BaselineRun {
        reports,
        trajectories,
        sequential: seq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::WHITE;

    const RED: [f64; 3] = [1.0, 0.0, 0.0];
    const BLUE: [f64; 3] = [0.0, 0.0, 1.0];

    fn img(w: u32, h: u32, px: &[[f64; 3]]) -> ColorMaskImage {
        ColorMaskImage::from_pixels(w, h, px.to_vec()).unwrap()
    }

    fn jp(x: f64, y: f64) -> Projection {
        Projection {
            pixel: [x, y],
            visible: true,
        }
    }

    #[test]
    fn pa_examples() {
        let pal = [RED, BLUE];
        let a = img(2, 2, &[RED, WHITE, BLUE, RED]);
        assert_eq!(pixel_accuracy(&a, &a, &pal).unwrap(), 100.0);
        let b = img(2, 2, &[RED, WHITE, BLUE, WHITE]);
        assert_eq!(pixel_accuracy(&a, &b, &pal).unwrap(), 75.0);
        let c = img(1, 2, &[RED, WHITE]);
        let d = img(1, 2, &[WHITE, RED]);
        assert_eq!(pixel_accuracy(&c, &d, &pal).unwrap(), 0.0);
        assert!(pixel_accuracy(&a, &c, &pal).is_err());
    }

    #[test]
    fn quantization_nearest_in_max_norm_with_ties_to_lowest_index() {
        let pal = [RED, BLUE];
        let p = img(3, 1, &[[0.9, 0.2, 0.1], [0.5, 0.5, 0.5], [1.0, 0.6, 0.6]]);
        // [0.5,0.5,0.5]: 0.5 from red, blue and white; red wins
        assert_eq!(quantize_labels(&p, &pal), vec![1, 1, 0]);
    }

    #[test]
    fn iou_examples() {
        let pal = [RED];
        let a = img(3, 1, &[RED, RED, WHITE]);
        assert_eq!(iou(&a, &a, &pal).unwrap(), 1.0);
        let b = img(3, 1, &[WHITE, RED, RED]);
        assert_eq!(iou(&a, &b, &pal).unwrap(), 1.0 / 3.0);
        let c = img(4, 1, &[RED, RED, WHITE, WHITE]);
        let d = img(4, 1, &[WHITE, WHITE, RED, RED]);
        assert_eq!(iou(&c, &d, &pal).unwrap(), 0.0);
        // absent character contributes nothing
        let pal2 = [RED, BLUE];
        assert_eq!(iou(&a, &b, &pal2).unwrap(), 1.0 / 3.0);
        assert_eq!(iou(&b, &a, &pal2).unwrap(), iou(&a, &b, &pal2).unwrap());
    }

    #[test]
    fn mpjpe_examples() {
        let a = vec![vec![jp(10.0, 10.0), jp(0.0, 0.0)]];
        assert_eq!(mpjpe(&a, &a).unwrap(), Some(0.0));
        let one = vec![vec![jp(13.0, 14.0)]];
        assert_eq!(mpjpe(&one, &[vec![jp(10.0, 10.0)]]).unwrap(), Some(5.0));
        let b = vec![vec![jp(13.0, 14.0), jp(0.0, 0.0)]];
        assert_eq!(mpjpe(&b, &a).unwrap(), Some(2.5));
        let hidden = vec![vec![Projection {
            pixel: [0.0, 0.0],
            visible: false,
        }]];
        assert_eq!(mpjpe(&hidden, &one).unwrap(), None);
        assert!(mpjpe(&a, &one).is_err());
    }

    #[test]
    fn mpjpe_translation_equivariant() {
        let a = vec![vec![jp(1.0, 2.0), jp(5.0, -3.0)]];
        let b = vec![vec![jp(4.0, 6.0), jp(2.0, 1.0)]];
        let shift = |v: &Vec<Vec<Projection>>| -> Vec<Vec<Projection>> {
            v.iter()
                .map(|c| c.iter().map(|p| jp(p.pixel[0] + 7.5, p.pixel[1] - 2.25)).collect())
                .collect()
        };
        let d0 = mpjpe(&a, &b).unwrap().unwrap();
        let d1 = mpjpe(&shift(&a), &shift(&b)).unwrap().unwrap();
        assert!((d0 - d1).abs() < 1e-12);
    }

    #[test]
    fn trajectory_error_examples() {
        use crate::geom::{exp_screw, ScrewParams};
        use nalgebra::{Rotation3, Vector3};
        let traj: Vec<_> = (0..5)
            .map(|i| exp_screw(&ScrewParams::new(0.1 * i as f64, [0.0, 1.0, 0.0], [1.0, 0.0, 0.0])))
            .collect();
        assert_eq!(trajectory_error(&traj, &traj).unwrap(), (0.0, 0.0));
        // shifting every camera center by 0.1
        let moved: Vec<_> = traj
            .iter()
            .map(|c| {
                let center = c.camera_center() + Vector3::new(0.0, 0.1, 0.0);
                RigidTransform::new(*c.rotation(), -(c.rotation() * center)).unwrap()
            })
            .collect();
        let (t, r) = trajectory_error(&moved, &traj).unwrap();
        assert!((t - 0.1).abs() < 1e-12 && r.abs() < 1e-6);
        let rotated: Vec<_> = traj
            .iter()
            .map(|c| {
                let rot = Rotation3::from_axis_angle(&Vector3::x_axis(), 10f64.to_radians());
                let center = c.camera_center();
                let r = rot.matrix() * c.rotation();
                RigidTransform::new(r, -(r * center)).unwrap()
            })
            .collect();
        let (t, r) = trajectory_error(&rotated, &traj).unwrap();
        assert!(t < 1e-12 && (r - 10.0).abs() < 1e-9);
        assert!(trajectory_error(&traj[..2], &traj).is_err());
    }

    #[test]
    fn contour_marks_region_boundary_only() {
        let pal = [RED];
        let target = ColorMaskImage::white(5, 5);
        let mut px = vec![WHITE; 25];
        for y in 1..4 {
            for x in 1..4 {
                px[y * 5 + x] = RED;
            }
        }
        let est = img(5, 5, &px);
        let o = contour_overlay(&target, &est, &pal).unwrap();
        assert_eq!(o.pixel(2, 2), WHITE);
        assert_eq!(o.pixel(1, 1), [0.0; 3]);
        assert_eq!(o.pixel(3, 2), [0.0; 3]);
        assert_eq!(o.pixel(0, 0), WHITE);
        let black = o.pixels().iter().filter(|p| **p == [0.0; 3]).count();
        assert_eq!(black, 8);
    }
}
