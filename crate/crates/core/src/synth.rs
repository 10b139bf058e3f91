//! Synthetic shots with known camera paths.
//!
//! Characters are capsule skeletons animated by a procedural walk cycle on
//! the `z = 0` ground plane (world z is up). The camera sits at height 1.6
//! and initially looks at the subject centroid; each shot type then moves it
//! along a simple parametric path.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{look_at, Intrinsics, RigidTransform};
use crate::render::{project_joints, render_hard_mask, WHITE};
use crate::scene::{canonical_bones, canonical_joint_names, joint, tracks_to_camera, CharacterTrack, FrameOfReference, Scene};
use crate::trajopt::Observation;

pub const CAMERA_HEIGHT: f64 = 1.6;
/// Height of the point the camera aims at.
pub const AIM_HEIGHT: f64 = 0.9;
pub const WALK_HZ: f64 = 1.0;
pub const FPS: f64 = 30.0;
/// Supersampling of the target masks.
pub const TARGET_SUPERSAMPLE: u32 = 2;
/// A shot is rejected when the subject is fully out of frame in more than
/// this fraction of frames.
pub const MAX_OUT_OF_FRAME: f64 = 0.2;

pub const PALETTE: [[f64; 3]; 4] = [
    [0.90, 0.10, 0.10],
    [0.10, 0.30, 0.90],
    [0.10, 0.75, 0.20],
    [0.85, 0.60, 0.05],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShotType {
    PushIn,
    PullOut,
    Pan,
    Track,
    Follow,
    Arc,
}

impl ShotType {
    pub const ALL: [ShotType; 6] = [
        ShotType::PushIn,
        ShotType::PullOut,
        ShotType::Pan,
        ShotType::Track,
        ShotType::Follow,
        ShotType::Arc,
    ];

    /// Default amplitude: scene units for translating shots, radians for
    /// rotating ones.
    pub fn default_amplitude(self) -> f64 {
        match self {
            ShotType::PushIn | ShotType::PullOut => 1.5,
            ShotType::Pan => 0.35,
            ShotType::Track => 1.6,
            ShotType::Follow => 1.5,
            ShotType::Arc => PI / 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShotType::PushIn => "push-in",
            ShotType::PullOut => "pull-out",
            ShotType::Pan => "pan",
            ShotType::Track => "track",
            ShotType::Follow => "follow",
            ShotType::Arc => "arc",
        }
    }
}

impl fmt::Display for ShotType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShotType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match norm.as_str() {
            "pushin" => ShotType::PushIn,
            "pullout" => ShotType::PullOut,
            "pan" => ShotType::Pan,
            "track" => ShotType::Track,
            "follow" => ShotType::Follow,
            "arc" => ShotType::Arc,
            _ => {
                return Err(Error::InvalidShot(format!(
                    "unknown shot type {s:?} (expected push-in, pull-out, pan, track, follow or arc)"
                )))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotSpec {
    pub shot_type: ShotType,
    pub frame_count: usize,
    pub character_count: usize,
    pub amplitude: f64,
    /// Horizontal distance from the first camera center to the subject.
    pub subject_distance: f64,
    pub image_size: u32,
    pub focal: f64,
    pub seed: u64,
}

impl ShotSpec {
    pub fn new(shot_type: ShotType, frame_count: usize, character_count: usize, seed: u64) -> ShotSpec {
        ShotSpec {
            shot_type,
            frame_count,
            character_count,
            amplitude: shot_type.default_amplitude(),
            subject_distance: 4.0,
            image_size: 128,
            focal: 110.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_count < 2 {
            return Err(Error::InvalidShot(format!(
                "a shot needs at least 2 frames, got {}",
                self.frame_count
            )));
        }
        if self.character_count < 1 || self.character_count > PALETTE.len() {
            return Err(Error::InvalidShot(format!(
                "character count must be in 1..={}, got {}",
                PALETTE.len(),
                self.character_count
            )));
        }
        if !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(Error::InvalidShot("amplitude must be finite and >= 0".into()));
        }
        if !(self.subject_distance > 0.5 && self.subject_distance.is_finite()) {
            return Err(Error::InvalidShot("subject distance must exceed 0.5".into()));
        }
        if self.image_size < 8 || !(self.focal > 0.0) {
            return Err(Error::InvalidShot("image size must be >= 8 and focal > 0".into()));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::centered(self.image_size, self.focal)
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticShot {
    pub spec: ShotSpec,
    pub scene_world: Scene,
    pub gt_trajectory: Vec<RigidTransform>,
    /// Tracks in each frame's ground-truth camera frame.
    pub scene_cam: Scene,
    pub observations: Vec<Observation>,
    pub intrinsics: Intrinsics,
}

impl SyntheticShot {
    pub fn palette(&self) -> Vec<[f64; 3]> {
        self.scene_world.colors()
    }
}

/// Joint positions of one walking character.
fn walk_pose(root: Vector3<f64>, heading: f64, phase: f64) -> Vec<[f64; 3]> {
    let up = Vector3::z();
    let fwd = Vector3::new(heading.cos(), heading.sin(), 0.0);
    let left = up.cross(&fwd);
    let mut j = vec![[0.0; 3]; 16];
    let set = |j: &mut Vec<[f64; 3]>, i: usize, p: Vector3<f64>| j[i] = [p.x, p.y, p.z];
    let limb = |angle: f64, len: f64| (-up * angle.cos() + fwd * angle.sin()) * len;

    let pelvis = root + up * (0.95 + 0.02 * (2.0 * phase).cos());
    let neck = pelvis + up * 0.55;
    set(&mut j, joint::PELVIS, pelvis);
    set(&mut j, joint::SPINE, pelvis + up * 0.27);
    set(&mut j, joint::NECK, neck);
    set(&mut j, joint::HEAD, neck + up * 0.2);

    let arm = 0.4 * phase.sin();
    for (side, sh, el, wr, swing) in [
        (1.0, joint::L_SHOULDER, joint::L_ELBOW, joint::L_WRIST, arm),
        (-1.0, joint::R_SHOULDER, joint::R_ELBOW, joint::R_WRIST, -arm),
    ] {
        let s = neck - up * 0.05 + left * (0.2 * side);
        let e = s + limb(swing, 0.28);
        set(&mut j, sh, s);
        set(&mut j, el, e);
        set(&mut j, wr, e + limb(swing + 0.25, 0.25));
    }

    let leg = 0.45 * phase.sin();
    for (side, hp, kn, an, swing, ph) in [
        (1.0, joint::L_HIP, joint::L_KNEE, joint::L_ANKLE, -leg, phase),
        (-1.0, joint::R_HIP, joint::R_KNEE, joint::R_ANKLE, leg, phase + PI),
    ] {
        let h = pelvis - up * 0.05 + left * (0.1 * side);
        let k = h + limb(swing, 0.45);
        let bend = 0.35 * ph.cos().max(0.0);
        set(&mut j, hp, h);
        set(&mut j, kn, k);
        set(&mut j, an, k + limb(swing - bend, 0.42));
    }
    j
}

struct Layout {
    roots: Vec<Vector3<f64>>,
    headings: Vec<f64>,
    phases: Vec<f64>,
}

fn layout(n: usize, rng: &mut ChaCha8Rng) -> Layout {
    // characters spread inside the 4x4 stage, at least 0.9 apart
    let mut roots: Vec<Vector3<f64>> = Vec::new();
    while roots.len() < n {
        let spread = 0.35 * n as f64;
        let p = Vector3::new(
            rng.random_range(-spread..spread).clamp(-2.0, 2.0),
            rng.random_range(-spread..spread).clamp(-2.0, 2.0),
            0.0,
        );
        if n == 1 {
            roots.push(Vector3::zeros());
        } else if roots.iter().all(|r| (r - p).norm() >= 0.9) {
            roots.push(p);
        }
    }
    let headings = (0..n).map(|_| rng.random_range(-PI..PI)).collect();
    let phases = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    Layout {
        roots,
        headings,
        phases,
    }
}

/// Ground-truth world-to-camera poses.
fn camera_path(spec: &ShotSpec, centroid: &Vector3<f64>, azimuth: f64) -> (Vec<RigidTransform>, Vector3<f64>) {
    let n = spec.frame_count;
    let amp = spec.amplitude;
    let aim = Vector3::new(centroid.x, centroid.y, AIM_HEIGHT);
    let eye0 = Vector3::new(
        centroid.x + spec.subject_distance * azimuth.cos(),
        centroid.y + spec.subject_distance * azimuth.sin(),
        CAMERA_HEIGHT,
    );
    let up = Vector3::z();
    let c1 = look_at(&eye0, &aim, &up);
    let fwd = (aim - eye0).normalize();
    let right = Vector3::new(-azimuth.sin(), azimuth.cos(), 0.0);
    let s = |t: usize| t as f64 / (n - 1) as f64;
    // walking direction for shots that move the subject
    let walk_dir = (right - Vector3::new(fwd.x, fwd.y, 0.0) * 0.5).normalize();
    let mut walk = Vector3::zeros();
    let poses = (0..n)
        .map(|t| {
            let st = s(t);
            match spec.shot_type {
                ShotType::PushIn => at_center(&c1, &(eye0 + fwd * (st * amp))),
                ShotType::PullOut => at_center(&c1, &(eye0 - fwd * (st * amp))),
                ShotType::Pan => {
                    // rotation about the camera's own vertical (image y) axis
                    let yaw = Rotation3::from_axis_angle(&Vector3::y_axis(), amp * (st - 0.5));
                    let r = yaw.matrix() * c1.rotation();
                    RigidTransform::new_orthonormalized(r, -(r * eye0))
                }
                ShotType::Track => at_center(&c1, &(eye0 + right * (amp * (st - 0.5)))),
                ShotType::Follow => {
                    walk = walk_dir * amp;
                    at_center(&c1, &(eye0 + walk_dir * (amp * st)))
                }
                ShotType::Arc => {
                    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(up), amp * st);
                    let eye = aim + rot * (eye0 - aim);
                    look_at(&eye, &aim, &up)
                }
            }
        })
        .collect();
    if spec.shot_type == ShotType::Track {
        // subject drifts sideways at half the camera's speed
        walk = right * (amp * 0.5);
    }
    (poses, walk)
}

fn at_center(orientation: &RigidTransform, eye: &Vector3<f64>) -> RigidTransform {
    let r: Matrix3<f64> = *orientation.rotation();
    RigidTransform::new_orthonormalized(r, -(r * eye))
}

/// Builds a shot, its ground-truth trajectory and rendered observations.
pub fn make_shot(spec: &ShotSpec) -> Result<SyntheticShot> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lay = layout(spec.character_count, &mut rng);
    let azimuth = rng.random_range(-PI..PI);
    let centroid = lay.roots.iter().sum::<Vector3<f64>>() / lay.roots.len() as f64;
    let (gt, walk) = camera_path(spec, &centroid, azimuth);
    let n = spec.frame_count;
    let s = |t: usize| t as f64 / (n - 1) as f64;
    let walk_heading = walk.y.atan2(walk.x);

    let characters = (0..spec.character_count)
        .map(|c| {
            let heading = if walk.norm() > 0.0 { walk_heading } else { lay.headings[c] };
            let frames = (0..n)
                .map(|t| {
                    let root = lay.roots[c] + walk * s(t);
                    let phase = 2.0 * PI * WALK_HZ * t as f64 / FPS + lay.phases[c];
                    walk_pose(root, heading, phase)
                })
                .collect();
            CharacterTrack {
                character_id: format!("char{}", c + 1),
                color: PALETTE[c],
                joint_names: canonical_joint_names(),
                bones: canonical_bones(),
                frames,
            }
        })
        .collect();
    let scene_world = Scene::new(characters, n, FrameOfReference::World)?;
    let k = spec.intrinsics();

    let mut observations = Vec::with_capacity(n);
    let mut out_of_frame = Vec::new();
    for (i, pose) in gt.iter().enumerate() {
        let t = i + 1;
        let target_mask = render_hard_mask(&scene_world, t, pose, &k, TARGET_SUPERSAMPLE)?.quantized_rgb8();
        let target_joints = project_joints(&scene_world, t, pose, &k)?;
        if target_mask.pixels().iter().all(|p| *p == WHITE) {
            out_of_frame.push(t);
        }
        observations.push(Observation {
            frame: t,
            target_mask,
            target_joints,
        });
    }
    if out_of_frame.len() as f64 > MAX_OUT_OF_FRAME * n as f64 {
        return Err(Error::InvalidShot(format!(
            "subject fully out of frame in {} of {n} frames, first at frame {}",
            out_of_frame.len(),
            out_of_frame[0]
        )));
    }
    let scene_cam = tracks_to_camera(&scene_world, &gt)?;
    Ok(SyntheticShot {
        spec: spec.clone(),
        scene_world,
        gt_trajectory: gt,
        scene_cam,
        observations,
        intrinsics: k,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    PerFrameIid,
    Drift,
}

impl FromStr for PerturbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "per_frame_iid" | "iid" => Ok(PerturbMode::PerFrameIid),
            "drift" => Ok(PerturbMode::Drift),
            _ => Err(Error::InvalidConfig(format!(
                "unknown perturbation mode {s:?} (expected per_frame_iid or drift)"
            ))),
        }
    }
}

fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Rigid motion rotating by exactly `rot_deg` about a random axis and
/// translating by exactly `trans` in a random direction.
pub fn random_offset(rot_deg: f64, trans: f64, rng: &mut impl Rng) -> RigidTransform {
    let axis = Unit::new_normalize(random_unit(rng));
    let r = Rotation3::from_axis_angle(&axis, rot_deg.to_radians());
    let t = random_unit(rng) * trans;
    RigidTransform::new_orthonormalized(*r.matrix(), t)
}

/// Perturbs a trajectory in the camera frame.
///
/// `PerFrameIid` composes every pose with its own random offset;
/// `Drift` accumulates one random step per frame. Every offset or step
/// rotates by `rot_deg` and translates by `trans`.
pub fn perturb_trajectory(
    gt: &[RigidTransform],
    rot_deg: f64,
    trans: f64,
    mode: PerturbMode,
    seed: u64,
) -> Result<Vec<RigidTransform>> {
    if !(rot_deg >= 0.0 && trans >= 0.0 && rot_deg.is_finite() && trans.is_finite()) {
        return Err(Error::InvalidConfig("perturbation magnitudes must be finite and >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = RigidTransform::identity();
    Ok(gt
        .iter()
        .map(|c| {
            let step = random_offset(rot_deg, trans, &mut rng);
            let off = match mode {
                PerturbMode::PerFrameIid => step,
                PerturbMode::Drift => {
                    acc = step.compose(&acc).orthonormalized();
                    acc
                }
            };
            if rot_deg == 0.0 && trans == 0.0 {
                *c
            } else {
                off.compose(c).orthonormalized()
            }
        })
        .collect())
}

/// Tracks as perceived in the starting trajectory's camera frames, so that
/// lifting them with that trajectory recovers the true world tracks.
pub fn perceived_tracks(scene_world: &Scene, c_hat: &[RigidTransform]) -> Result<Scene> {
    tracks_to_camera(scene_world, c_hat)
}

/// Fraction of the image covered by the bounding box of all character pixels.
pub fn bbox_fraction(mask: &crate::render::ColorMaskImage) -> f64 {
    let (w, h) = (mask.width(), mask.height());
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if mask.pixel(x, y) != WHITE {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    if x0 > x1 {
        return 0.0;
    }
    ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64 / (w * h) as f64
}
