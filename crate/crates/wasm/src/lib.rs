//! Browser bindings: generate a synthetic shot, disturb its camera path,
//! and recover it, with masks and camera paths handed back as plain arrays.

use refilm_core::eval::{contour_overlay, run_baselines, BaselineConfig, BaselineRun};
use refilm_core::render::render_hard_mask;
use refilm_core::synth::{make_shot, perturb_trajectory, PerturbMode, ShotSpec, ShotType, SyntheticShot, TARGET_SUPERSAMPLE};
use refilm_core::{ColorMaskImage, RigidTransform};
use wasm_bindgen::prelude::*;

fn js(e: refilm_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn rgba(img: &ColorMaskImage) -> Vec<u8> {
    img.to_rgb8().chunks(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

#[wasm_bindgen]
pub struct Demo {
    shot: SyntheticShot,
    init: Vec<RigidTransform>,
    run: Option<BaselineRun>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(shot_type: &str, frames: usize, characters: usize, size: u32, seed: u32) -> Result<Demo, JsError> {
        let ty: ShotType = shot_type.parse().map_err(js)?;
        let mut spec = ShotSpec::new(ty, frames, characters, seed as u64);
        spec.focal *= size as f64 / spec.image_size as f64;
        spec.image_size = size;
        let shot = make_shot(&spec).map_err(js)?;
        let init = shot.gt_trajectory.clone();
        Ok(Demo { shot, init, run: None })
    }

    pub fn frames(&self) -> usize {
        self.shot.gt_trajectory.len()
    }

    pub fn size(&self) -> u32 {
        self.shot.spec.image_size
    }

    /// Target mask of frame `frame` (1-based) as RGBA bytes.
    pub fn target(&self, frame: usize) -> Result<Vec<u8>, JsError> {
        Ok(rgba(self.obs_mask(frame)?))
    }

    /// Replaces the starting path with a drifting copy of the true one.
    pub fn perturb(&mut self, rot_deg: f64, trans: f64, seed: u32) -> Result<(), JsError> {
        self.init = perturb_trajectory(&self.shot.gt_trajectory, rot_deg, trans, PerturbMode::Drift, seed as u64).map_err(js)?;
        self.run = None;
        Ok(())
    }

    /// Runs the raw start, per-frame and sequential methods. Returns
    /// `[pa, iou, mpjpe]` per method in that order.
    pub fn solve(&mut self, iterations: usize) -> Result<Vec<f64>, JsError> {
        let mut cfg = BaselineConfig::default();
        cfg.optimizer.first_frame_iterations = iterations;
        cfg.optimizer.sequence_iterations = iterations;
        let run = run_baselines(&self.shot, &self.init, &cfg).map_err(js)?;
        let out = run.reports.iter().flat_map(|r| [r.pa, r.iou, r.mpjpe.unwrap_or(f64::NAN)]).collect();
        self.run = Some(run);
        Ok(out)
    }

    /// Target mask with the silhouette outline of `method` drawn over it.
    /// Methods: 0 start, 1 per-frame, 2 sequential. Before a solve only the
    /// start is available.
    pub fn overlay(&self, method: usize, frame: usize) -> Result<Vec<u8>, JsError> {
        let target = self.obs_mask(frame)?;
        let pose = &self.path(method)?[frame - 1];
        let s = &self.shot;
        let est = render_hard_mask(&s.scene_world, frame, pose, &s.intrinsics, TARGET_SUPERSAMPLE).map_err(js)?.quantized_rgb8();
        let img = contour_overlay(target, &est, &s.palette()).map_err(js)?;
        Ok(rgba(&img))
    }

    /// Camera centers `x, y, z` of every frame; method 3 is ground truth.
    pub fn centers(&self, method: usize) -> Result<Vec<f64>, JsError> {
        Ok(self.path(method)?.iter().flat_map(|c| <[f64; 3]>::from(c.camera_center())).collect())
    }

    /// Character root positions `x, y` at frame `frame`.
    pub fn subjects(&self, frame: usize) -> Result<Vec<f64>, JsError> {
        let pts = self.shot.scene_world.joints_at(frame).map_err(js)?;
        Ok(pts.iter().flat_map(|j| [j[0][0], j[0][1]]).collect())
    }
}

impl Demo {
    fn obs_mask(&self, frame: usize) -> Result<&ColorMaskImage, JsError> {
        self.shot
            .observations
            .get(frame.wrapping_sub(1))
            .map(|o| &o.target_mask)
            .ok_or_else(|| JsError::new(&format!("frame {frame} out of range")))
    }

    fn path(&self, method: usize) -> Result<&[RigidTransform], JsError> {
        match (method, &self.run) {
            (0, _) => Ok(&self.init),
            (3, _) => Ok(&self.shot.gt_trajectory),
            (1 | 2, Some(run)) => Ok(&run.trajectories[method]),
            (1 | 2, None) => Err(JsError::new("solve first")),
            _ => Err(JsError::new("unknown method")),
        }
    }
}
