//! Camera trajectory recovery from character silhouettes and 2D joints.
//!
//! Given per-frame 3D joint tracks of one or more characters and a target
//! color-coded silhouette plus 2D joints for every frame, the solver finds
//! the world-to-camera pose of each frame. Poses are parameterized as
//! screw motions; a small MLP per screw component drives a sequential
//! model so that the recovered trajectory stays smooth.

pub mod ad;
pub mod error;
pub mod eval;
pub mod geom;
#[cfg(feature = "io")]
pub mod io;
pub mod render;
pub mod scene;
pub mod synth;
pub mod trajopt;

pub use error::{Error, Result};
pub use geom::{Intrinsics, RigidTransform, ScrewParams};
pub use render::{ColorMaskImage, SoftRenderConfig};
pub use scene::{CharacterTrack, FrameOfReference, Scene};
