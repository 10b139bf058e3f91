//! Articulated character tracks and their lifting between camera and world frames.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::RigidTransform;

/// Minimum max-norm separation between a character color and white or
/// another character's color.
pub const MIN_COLOR_SEPARATION: f64 = 0.25;

pub const JOINT_NAMES: [&str; 16] = [
    "pelvis",
    "spine",
    "neck",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_hip",
    "right_knee",
    "right_ankle",
];

/// Joint indices of the canonical skeleton.
pub mod joint {
    pub const PELVIS: usize = 0;
    pub const SPINE: usize = 1;
    pub const NECK: usize = 2;
    pub const HEAD: usize = 3;
    pub const L_SHOULDER: usize = 4;
    pub const L_ELBOW: usize = 5;
    pub const L_WRIST: usize = 6;
    pub const R_SHOULDER: usize = 7;
    pub const R_ELBOW: usize = 8;
    pub const R_WRIST: usize = 9;
    pub const L_HIP: usize = 10;
    pub const L_KNEE: usize = 11;
    pub const L_ANKLE: usize = 12;
    pub const R_HIP: usize = 13;
    pub const R_KNEE: usize = 14;
    pub const R_ANKLE: usize = 15;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapsuleBone {
    pub joint_a: usize,
    pub joint_b: usize,
    pub radius: f64,
}

/// Bones of the canonical skeleton with body-proportioned radii.
pub fn canonical_bones() -> Vec<CapsuleBone> {
    use joint::*;
    let b = |joint_a, joint_b, radius| CapsuleBone {
        joint_a,
        joint_b,
        radius,
    };
    vec![
        b(PELVIS, SPINE, 0.15),
        b(SPINE, NECK, 0.15),
        b(NECK, HEAD, 0.11),
        b(NECK, L_SHOULDER, 0.07),
        b(L_SHOULDER, L_ELBOW, 0.055),
        b(L_ELBOW, L_WRIST, 0.045),
        b(NECK, R_SHOULDER, 0.07),
        b(R_SHOULDER, R_ELBOW, 0.055),
        b(R_ELBOW, R_WRIST, 0.045),
        b(PELVIS, L_HIP, 0.09),
        b(L_HIP, L_KNEE, 0.075),
        b(L_KNEE, L_ANKLE, 0.06),
        b(PELVIS, R_HIP, 0.09),
        b(R_HIP, R_KNEE, 0.075),
        b(R_KNEE, R_ANKLE, 0.06),
    ]
}

pub fn canonical_joint_names() -> Vec<String> {
    JOINT_NAMES.iter().map(|s| s.to_string()).collect()
}

/// One character: skeleton topology, display color, and per-frame joints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterTrack {
    pub character_id: String,
    pub color: [f64; 3],
    pub joint_names: Vec<String>,
    pub bones: Vec<CapsuleBone>,
    pub frames: Vec<Vec<[f64; 3]>>,
}

impl CharacterTrack {
    pub fn validate(&self) -> Result<()> {
        let nj = self.joint_names.len();
        let id = &self.character_id;
        if !self.color.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::InvalidScene(format!("{id}: color outside [0,1]")));
        }
        if max_norm(&self.color, &[1.0; 3]) < MIN_COLOR_SEPARATION {
            return Err(Error::InvalidScene(format!("{id}: color too close to white")));
        }
        for bone in &self.bones {
            if bone.joint_a == bone.joint_b || bone.joint_a >= nj || bone.joint_b >= nj {
                return Err(Error::InvalidScene(format!(
                    "{id}: bone ({}, {}) invalid for {nj} joints",
                    bone.joint_a, bone.joint_b
                )));
            }
            if !(bone.radius > 0.0 && bone.radius.is_finite()) {
                return Err(Error::InvalidScene(format!("{id}: bone radius must be > 0")));
            }
        }
        for (t, f) in self.frames.iter().enumerate() {
            if f.len() != nj {
                return Err(Error::InvalidScene(format!(
                    "{id}: frame {} has {} joints, expected {nj}",
                    t + 1,
                    f.len()
                )));
            }
            if !f.iter().flatten().all(|x| x.is_finite()) {
                return Err(Error::InvalidScene(format!(
                    "{id}: frame {} has non-finite joints",
                    t + 1
                )));
            }
        }
        Ok(())
    }
}

fn max_norm(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameOfReference {
    Camera,
    World,
}

/// Characters sharing a frame count and a frame of reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    frame_count: usize,
    frame_of_reference: FrameOfReference,
    characters: Vec<CharacterTrack>,
}

/// One renderable capsule at a given frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub radius: f64,
    pub color: [f64; 3],
    /// Index of the owning character in the scene.
    pub character: usize,
}

impl Scene {
    pub fn new(
        characters: Vec<CharacterTrack>,
        frame_count: usize,
        frame_of_reference: FrameOfReference,
    ) -> Result<Self> {
        let scene = Scene {
            frame_count,
            frame_of_reference,
            characters,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// A scene without characters; renders as a blank frame.
    pub fn empty(frame_count: usize, frame_of_reference: FrameOfReference) -> Self {
        Scene {
            frame_count,
            frame_of_reference,
            characters: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_count < 1 {
            return Err(Error::InvalidScene("frame_count must be >= 1".into()));
        }
        if self.characters.is_empty() {
            return Err(Error::InvalidScene("scene needs at least one character".into()));
        }
        for (i, c) in self.characters.iter().enumerate() {
            c.validate()?;
            if c.frames.len() != self.frame_count {
                return Err(Error::InvalidScene(format!(
                    "{} has {} frames, scene has {}",
                    c.character_id,
                    c.frames.len(),
                    self.frame_count
                )));
            }
            for other in &self.characters[..i] {
                if max_norm(&c.color, &other.color) < MIN_COLOR_SEPARATION {
                    return Err(Error::InvalidScene(format!(
                        "colors of {} and {} are too similar",
                        other.character_id, c.character_id
                    )));
                }
                if other.character_id == c.character_id {
                    return Err(Error::InvalidScene(format!(
                        "duplicate character id {}",
                        c.character_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn frame_of_reference(&self) -> FrameOfReference {
        self.frame_of_reference
    }

    pub fn characters(&self) -> &[CharacterTrack] {
        &self.characters
    }

    pub fn character_count(&self) -> usize {
        self.characters.len()
    }

    pub fn colors(&self) -> Vec<[f64; 3]> {
        self.characters.iter().map(|c| c.color).collect()
    }

    fn check_frame(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.frame_count {
            return Err(Error::FrameOutOfRange {
                frame: t,
                frame_count: self.frame_count,
            });
        }
        Ok(t - 1)
    }

    /// Joint positions of every character at frame `t` (1-based).
    pub fn joints_at(&self, t: usize) -> Result<Vec<&[[f64; 3]]>> {
        let i = self.check_frame(t)?;
        Ok(self
            .characters
            .iter()
            .map(|c| c.frames[i].as_slice())
            .collect())
    }

    /// One capsule per bone per character at frame `t` (1-based), in
    /// character order then bone order.
    pub fn capsules_at(&self, t: usize) -> Result<Vec<Capsule>> {
        let i = self.check_frame(t)?;
        let mut out = Vec::new();
        for (ci, c) in self.characters.iter().enumerate() {
            let joints = &c.frames[i];
            for bone in &c.bones {
                out.push(Capsule {
                    a: joints[bone.joint_a],
                    b: joints[bone.joint_b],
                    radius: bone.radius,
                    color: c.color,
                    character: ci,
                });
            }
        }
        Ok(out)
    }

    /// Applies `poses[t]` to every joint of frame `t`, tagging the result
    /// with `target`.
    pub fn transformed(&self, poses: &[RigidTransform], target: FrameOfReference) -> Result<Scene> {
        if poses.len() != self.frame_count {
            return Err(Error::LengthMismatch {
                trajectory: poses.len(),
                frames: self.frame_count,
            });
        }
        let characters = self
            .characters
            .iter()
            .map(|c| CharacterTrack {
                frames: c
                    .frames
                    .iter()
                    .zip(poses)
                    .map(|(joints, pose)| {
                        joints
                            .iter()
                            .map(|p| {
                                let q = pose.apply(&Vector3::new(p[0], p[1], p[2]));
                                [q.x, q.y, q.z]
                            })
                            .collect()
                    })
                    .collect(),
                ..c.clone()
            })
            .collect();
        Ok(Scene {
            frame_count: self.frame_count,
            frame_of_reference: target,
            characters,
        })
    }
}

/// Rigid lift of camera-frame tracks into world coordinates:
/// `p_world = inverse(c_t) * p_cam` for every frame.
pub fn lift_tracks_to_world(scene_cam: &Scene, trajectory: &[RigidTransform]) -> Result<Scene> {
    if scene_cam.frame_of_reference != FrameOfReference::Camera {
        return Err(Error::InvalidScene(
            "lift_tracks_to_world expects a camera-frame scene".into(),
        ));
    }
    let inv: Vec<_> = trajectory.iter().map(RigidTransform::inverse).collect();
    scene_cam.transformed(&inv, FrameOfReference::World)
}

/// Inverse of [`lift_tracks_to_world`]: `p_cam = c_t * p_world`.
pub fn tracks_to_camera(scene_world: &Scene, trajectory: &[RigidTransform]) -> Result<Scene> {
    if scene_world.frame_of_reference != FrameOfReference::World {
        return Err(Error::InvalidScene(
            "tracks_to_camera expects a world-frame scene".into(),
        ));
    }
    scene_world.transformed(trajectory, FrameOfReference::Camera)
}

/// Largest joint displacement between two scenes with identical structure.
pub fn max_joint_displacement(a: &Scene, b: &Scene) -> Result<f64> {
    if a.frame_count != b.frame_count || a.characters.len() != b.characters.len() {
        return Err(Error::InvalidScene("scenes differ in structure".into()));
    }
    let mut worst: f64 = 0.0;
    for (ca, cb) in a.characters.iter().zip(&b.characters) {
        for (fa, fb) in ca.frames.iter().zip(&cb.frames) {
            if fa.len() != fb.len() {
                return Err(Error::InvalidScene("scenes differ in joint count".into()));
            }
            for (pa, pb) in fa.iter().zip(fb) {
                let d = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2) + (pa[2] - pb[2]).powi(2))
                    .sqrt();
                worst = worst.max(d);
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geom::{exp_screw, ScrewParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_scene(
        rng: &mut impl Rng,
        frames: usize,
        chars: usize,
        frame: FrameOfReference,
    ) -> Scene {
        let palette = [[0.9, 0.1, 0.1], [0.1, 0.3, 0.9], [0.1, 0.7, 0.2]];
        let characters = (0..chars)
            .map(|c| CharacterTrack {
                character_id: format!("c{c}"),
                color: palette[c % 3],
                joint_names: canonical_joint_names(),
                bones: canonical_bones(),
                frames: (0..frames)
                    .map(|_| {
                        (0..JOINT_NAMES.len())
                            .map(|_| {
                                [
                                    rng.random_range(-2.0..2.0),
                                    rng.random_range(-2.0..2.0),
                                    rng.random_range(-2.0..2.0),
                                ]
                            })
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        Scene::new(characters, frames, frame).unwrap()
    }

    pub(crate) fn random_pose(rng: &mut impl Rng) -> RigidTransform {
        exp_screw(&ScrewParams::new(
            rng.random_range(-3.0..3.0),
            [rng.random(), rng.random(), rng.random::<f64>() - 0.5],
            [
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            ],
        ))
    }

    #[test]
    fn identity_lift_keeps_coordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = random_scene(&mut rng, 3, 2, FrameOfReference::Camera);
        let w = lift_tracks_to_world(&s, &[RigidTransform::identity(); 3]).unwrap();
        assert_eq!(w.frame_of_reference(), FrameOfReference::World);
        assert_eq!(w.characters()[1].frames, s.characters()[1].frames);
        assert_eq!(w.characters()[0].color, s.characters()[0].color);
    }

    #[test]
    fn lift_inverts_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = random_scene(&mut rng, 1, 1, FrameOfReference::Camera);
        s.characters[0].frames[0][0] = [0.0, 0.0, 5.0];
        let c = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 5.0));
        let w = lift_tracks_to_world(&s, &[c]).unwrap();
        assert_eq!(w.characters()[0].frames[0][0], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn lift_round_trip_and_length_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_scene(&mut rng, 5, 2, FrameOfReference::Camera);
        let traj: Vec<_> = (0..5).map(|_| random_pose(&mut rng)).collect();
        let w = lift_tracks_to_world(&s, &traj).unwrap();
        let back = tracks_to_camera(&w, &traj).unwrap();
        assert!(max_joint_displacement(&s, &back).unwrap() <= 1e-9);
        let err = lift_tracks_to_world(&s, &traj[..4]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('4') && msg.contains('5'), "{msg}");
    }

    #[test]
    fn lift_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_scene(&mut rng, 4, 1, FrameOfReference::Camera);
        let traj: Vec<_> = (0..4).map(|_| random_pose(&mut rng)).collect();
        let g = random_pose(&mut rng);
        let w = lift_tracks_to_world(&s, &traj).unwrap();
        let traj_g: Vec<_> = traj.iter().map(|c| c.compose(&g)).collect();
        let wg = lift_tracks_to_world(&s, &traj_g).unwrap();
        let mapped = w
            .transformed(&vec![g.inverse(); 4], FrameOfReference::World)
            .unwrap();
        assert!(max_joint_displacement(&wg, &mapped).unwrap() < 1e-9);
    }

    #[test]
    fn joints_and_capsules_at() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_scene(&mut rng, 3, 2, FrameOfReference::World);
        assert_eq!(s.joints_at(1).unwrap()[0], s.characters()[0].frames[0].as_slice());
        assert_eq!(s.joints_at(3).unwrap()[1], s.characters()[1].frames[2].as_slice());
        assert!(matches!(
            s.joints_at(4),
            Err(Error::FrameOutOfRange { frame: 4, frame_count: 3 })
        ));
        assert!(s.joints_at(0).is_err());
        let caps = s.capsules_at(2).unwrap();
        assert_eq!(caps.len(), 2 * canonical_bones().len());
        let joints = s.joints_at(2).unwrap();
        for (k, cap) in caps.iter().enumerate() {
            let bone = canonical_bones()[k % canonical_bones().len()];
            assert_eq!(cap.a, joints[cap.character][bone.joint_a]);
            assert_eq!(cap.b, joints[cap.character][bone.joint_b]);
        }
    }

    #[test]
    fn single_bone_character_gives_one_capsule() {
        let c = CharacterTrack {
            character_id: "a".into(),
            color: [0.2, 0.2, 0.8],
            joint_names: vec!["p".into(), "q".into()],
            bones: vec![CapsuleBone {
                joint_a: 0,
                joint_b: 1,
                radius: 0.1,
            }],
            frames: vec![vec![[0.0; 3], [0.0, 1.0, 0.0]]],
        };
        let s = Scene::new(vec![c], 1, FrameOfReference::World).unwrap();
        assert_eq!(s.capsules_at(1).unwrap().len(), 1);
    }

    #[test]
    fn validation_rejects_bad_tracks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_scene(&mut rng, 2, 2, FrameOfReference::World);
        let mut bad = s.characters().to_vec();
        bad[1].color = bad[0].color;
        assert!(Scene::new(bad, 2, FrameOfReference::World).is_err());
        let mut bad = s.characters().to_vec();
        bad[0].color = [0.9, 0.9, 0.95];
        assert!(Scene::new(bad, 2, FrameOfReference::World).is_err());
        let mut bad = s.characters().to_vec();
        bad[0].frames[1].pop();
        assert!(Scene::new(bad, 2, FrameOfReference::World).is_err());
        let mut bad = s.characters().to_vec();
        bad[0].bones[0].joint_b = bad[0].bones[0].joint_a;
        assert!(Scene::new(bad, 2, FrameOfReference::World).is_err());
        let mut bad = s.characters().to_vec();
        bad[0].frames[0][3][1] = f64::NAN;
        assert!(Scene::new(bad, 2, FrameOfReference::World).is_err());
        assert!(Scene::new(vec![], 2, FrameOfReference::World).is_err());
    }
}
