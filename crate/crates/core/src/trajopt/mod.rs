//! Losses, single-pose screw optimization and the sequential trajectory model.

mod adam;
mod loss;
mod mlp;
mod model;
mod solve;

pub use loss::{composition_loss, joint_loss, total_loss, JointLoss, LossEval, LossWeights, Observation};
pub use mlp::{Mlp, ENCODING_OCTAVES};
pub use model::{traj_transform_at, twist_to_screw, unroll_trajectory, TrajectoryModel};
pub use solve::{
    optimize_single_pose, optimize_trajectory, sequence_loss, single_pose_loss, FrameReport, LossTrace, OptimizerConfig, SinglePoseResult,
    TrajectoryReport, TrajectoryResult,
};
