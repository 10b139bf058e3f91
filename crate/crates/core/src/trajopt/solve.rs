use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ad::{add3, mat_mul, mat_vec, values3, values33, Tape, Var, M3, V3};
use crate::error::{Error, Result};
use crate::geom::{Intrinsics, RigidTransform, ScrewParams};
use crate::render::{PoseGradient, SoftRenderConfig};
use crate::scene::{lift_tracks_to_world, FrameOfReference, Scene};

use super::adam::{lr_factor, Adam};
use super::loss::{total_loss, LossEval, LossWeights, Observation};
use super::model::{compose_const, relative_transform, twist_to_screw, TrajectoryModel, THETA};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Learning rate of `theta`, `w`, `v`.
    pub lr_screw: f64,
    pub lr_mlp: f64,
    pub first_frame_iterations: usize,
    pub sequence_iterations: usize,
    /// Iterations of the optional joint pass over all frames through the
    /// unrolled chain; 0 disables it.
    pub refine_iterations: usize,
    pub lr_refine_scale: f64,
    /// Adam moment decay rates.
    pub beta1: f64,
    pub beta2: f64,
    /// Stop once the best loss improved by less than this relative amount
    /// over `patience` iterations.
    pub tolerance: f64,
    pub patience: usize,
    /// Standard deviation of the screw parameter initialization.
    pub init_sigma: f64,
    /// Learning rates decay along a cosine to this fraction.
    pub lr_final_factor: f64,
    pub freeze_theta: bool,
    pub renormalize_axis: bool,
    pub hidden: Vec<usize>,
    pub encoding: bool,
    pub render: SoftRenderConfig,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr_screw: 2e-2,
            lr_mlp: 1e-3,
            first_frame_iterations: 300,
            sequence_iterations: 300,
            refine_iterations: 0,
            lr_refine_scale: 0.1,
            beta1: 0.9,
            beta2: 0.9,
            tolerance: 1e-6,
            patience: 50,
            init_sigma: 1e-6,
            lr_final_factor: 0.05,
            freeze_theta: false,
            renormalize_axis: false,
            hidden: vec![32, 32],
            encoding: false,
            render: SoftRenderConfig::default(),
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.lr_screw) || !pos(self.lr_mlp) || !pos(self.init_sigma) {
            return Err(Error::InvalidConfig(
                "learning rates and init sigma must be positive".into(),
            ));
        }
        if self.first_frame_iterations < 1 || self.sequence_iterations < 1 {
            return Err(Error::InvalidConfig("iteration budgets must be at least 1".into()));
        }
        if !(self.lr_final_factor > 0.0 && self.lr_final_factor <= 1.0) || !pos(self.lr_refine_scale) {
            return Err(Error::InvalidConfig("learning-rate factors must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("Adam decay rates must lie in [0, 1)".into()));
        }
        if !(self.tolerance >= 0.0) || self.hidden.contains(&0) {
            return Err(Error::InvalidConfig("bad tolerance or hidden layer size".into()));
        }
        self.render.validate()
    }
}

/// Loss per iteration and its running minimum.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub raw: Vec<f64>,
    pub best: Vec<f64>,
}

impl LossTrace {
    pub fn iterations(&self) -> usize {
        self.raw.len()
    }

    pub fn initial(&self) -> f64 {
        self.raw.first().copied().unwrap_or(0.0)
    }

    pub fn final_best(&self) -> f64 {
        self.best.last().copied().unwrap_or(0.0)
    }
}

/// Adam over `params`, keeping the best parameters seen. `eval` returns
/// the loss and its gradient.
fn minimize<F>(
    params: &mut Vec<f64>,
    lrs: &[f64],
    iterations: usize,
    cfg: &OptimizerConfig,
    mut eval: F,
) -> Result<LossTrace>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut adam = Adam::new(params.len(), cfg.beta1, cfg.beta2);
    let mut trace = LossTrace::default();
    let mut best = (f64::INFINITY, params.clone());
    for i in 0..iterations {
        let (loss, grad) = eval(params)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { iteration: i });
        }
        if loss < best.0 {
            best = (loss, params.clone());
        }
        trace.raw.push(loss);
        trace.best.push(best.0);
        if best.0 == 0.0 {
            break;
        }
        if i >= cfg.patience && cfg.patience > 0 {
            let old = trace.best[i - cfg.patience];
            if old - best.0 <= cfg.tolerance * old.abs() {
                break;
            }
        }
        adam.step(params, &grad, lrs, lr_factor(i, iterations, cfg.lr_final_factor));
    }
    *params = best.1;
    Ok(trace)
}

fn pose_seeds<'t>(r: &M3<Var<'t>>, t: &V3<Var<'t>>, g: &PoseGradient, out: &mut Vec<(Var<'t>, f64)>) {
    for i in 0..3 {
        for j in 0..3 {
            out.push((r[i][j], g.rotation[i][j]));
        }
        out.push((t[i], g.translation[i]));
    }
}

fn pose_of(r: &M3<Var<'_>>, t: &V3<Var<'_>>) -> RigidTransform {
    RigidTransform::from_arrays(&values33(r), &values3(t))
}

#[derive(Clone, Debug)]
pub struct SinglePoseResult {
    /// Raw twist `(theta, w, v)` of the correction, axis of any length.
    pub twist: (f64, [f64; 3], [f64; 3]),
    /// The same correction as a unit-axis screw.
    pub screw: ScrewParams,
    /// `exp(twist) * c_init`.
    pub pose: RigidTransform,
    pub trace: LossTrace,
    pub final_loss: LossEval,
}

fn init_twist(cfg: &OptimizerConfig, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let n = Normal::new(0.0, cfg.init_sigma).expect("sigma validated");
    (0..7).map(|_| n.sample(&mut rng)).collect()
}

fn single_pose_eval(
    p: &[f64],
    c_init: &RigidTransform,
    obs: &Observation,
    scene: &Scene,
    k: &Intrinsics,
    weights: &LossWeights,
    cfg: &OptimizerConfig,
) -> Result<(LossEval, Vec<f64>)> {
    let tape = Tape::with_capacity(512);
    let v = tape.vars(p);
    let (r, t) = relative_transform(v[0], &[v[1], v[2], v[3]], &[v[4], v[5], v[6]], cfg.renormalize_axis);
    let (r, t) = compose_const(&r, &t, c_init);
    let le = total_loss(scene, &pose_of(&r, &t), k, &cfg.render, obs, weights)?;
    let mut seeds = Vec::with_capacity(12);
    pose_seeds(&r, &t, &le.pose_grad, &mut seeds);
    let g = tape.backward(&seeds).wrt_all(&v);
    Ok((le, g))
}

/// Finds the correction `A = exp(theta, w, v)` minimizing the loss of
/// `A * c_init` against `obs`, starting from a tiny random twist.
pub fn optimize_single_pose(
    c_init: &RigidTransform,
    obs: &Observation,
    scene: &Scene,
    k: &Intrinsics,
    weights: &LossWeights,
    cfg: &OptimizerConfig,
) -> Result<SinglePoseResult> {
    optimize_single_pose_with(c_init, obs, scene, k, weights, cfg, cfg.first_frame_iterations)
}

fn optimize_single_pose_with(
    c_init: &RigidTransform,
    obs: &Observation,
    scene: &Scene,
    k: &Intrinsics,
    weights: &LossWeights,
    cfg: &OptimizerConfig,
    iterations: usize,
) -> Result<SinglePoseResult> {
    cfg.validate()?;
    weights.validate()?;
    let mut p = init_twist(cfg, obs.frame as u64);
    let lrs = [cfg.lr_screw; 7];
    let trace = minimize(&mut p, &lrs, iterations, cfg, |p| {
        let (le, g) = single_pose_eval(p, c_init, obs, scene, k, weights, cfg)?;
        Ok((le.value, g))
    })?;
    let (final_loss, _) = single_pose_eval(&p, c_init, obs, scene, k, weights, cfg)?;
    let twist = (p[0], [p[1], p[2], p[3]], [p[4], p[5], p[6]]);
    let (r, t) = relative_transform(p[0], &twist.1, &twist.2, cfg.renormalize_axis);
    let pose = RigidTransform::from_arrays(&r, &t).compose(c_init).orthonormalized();
    let screw = if cfg.renormalize_axis {
        ScrewParams::new(twist.0, twist.1, twist.2)
    } else {
        twist_to_screw(twist.0, twist.1, twist.2)
    };
    Ok(SinglePoseResult {
        twist,
        screw,
        pose,
        trace,
        final_loss,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame: usize,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub composition: f64,
    pub joint: f64,
    pub no_joint_signal: bool,
    /// The observation had no character pixel and no visible joint.
    pub empty: bool,
    pub trace: LossTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub frames: Vec<FrameReport>,
    pub refine: Option<LossTrace>,
    /// Seconds, when a clock is available.
    pub wall_time_s: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrajectoryResult {
    pub model: TrajectoryModel,
    pub trajectory: Vec<RigidTransform>,
    pub scene_world: Scene,
    pub report: TrajectoryReport,
}

/// Loss of frame `obs.frame` for `c_t = A_t(p) * prev`.
fn sequence_eval(
    model: &TrajectoryModel,
    p: &[f64],
    prev: &RigidTransform,
    obs: &Observation,
    scene: &Scene,
    k: &Intrinsics,
    weights: &LossWeights,
    cfg: &SoftRenderConfig,
) -> Result<(LossEval, Vec<f64>)> {
    let tape = Tape::with_capacity(16 * p.len());
    let v = tape.vars(p);
    let (r, t) = model.relative_at(&v, model.t_norm(obs.frame));
    let (r, t) = compose_const(&r, &t, prev);
    let le = total_loss(scene, &pose_of(&r, &t), k, cfg, obs, weights)?;
    let mut seeds = Vec::with_capacity(12);
    pose_seeds(&r, &t, &le.pose_grad, &mut seeds);
    Ok((le, tape.backward(&seeds).wrt_all(&v)))
}

/// Loss of frame `obs.frame` for `c_t = A_t * prev`, with its gradient
/// with respect to every model parameter in [`TrajectoryModel::params`]
/// order.
pub fn sequence_loss(
    model: &TrajectoryModel,
    prev: &RigidTransform,
    obs: &Observation,
    scene_world: &Scene,
    k: &Intrinsics,
    weights: &LossWeights,
    cfg: &SoftRenderConfig,
) -> Result<(LossEval, Vec<f64>)> {
    sequence_eval(model, &model.params(), prev, obs, scene_world, k, weights, cfg)
}

/// Loss of `exp(twist) * c_init` with its gradient with respect to the
/// twist `(theta, w, v)`.
pub fn single_pose_loss(
    twist: &[f64; 7],
    c_init: &RigidTransform,
    obs: &Observation,
    scene_world: &Scene,
    k: &Intrinsics,
    weights: &LossWeights,
    cfg: &OptimizerConfig,
) -> Result<(LossEval, Vec<f64>)> {
    single_pose_eval(twist, c_init, obs, scene_world, k, weights, cfg)
}

/// Mean loss over all frames through the chain `c_t = A_t c_{t-1}` from a
/// fixed `c1`.
fn chain_eval(
    model: &TrajectoryModel,
    p: &[f64],
    c1: &RigidTransform,
    observations: &[Observation],
    scene: &Scene,
    k: &Intrinsics,
    weights: &LossWeights,
    cfg: &SoftRenderConfig,
) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::with_capacity(16 * p.len() * observations.len());
    let v = tape.vars(p);
    let scale = 1.0 / observations.len() as f64;
    let mut seeds = Vec::new();
    let mut total = 0.0;
    let le = total_loss(scene, c1, k, cfg, &observations[0], weights)?;
    total += le.value * scale;
    let mut prev: Option<(M3<Var<'_>>, V3<Var<'_>>)> = None;
    for obs in &observations[1..] {
        let (ra, ta) = model.relative_at(&v, model.t_norm(obs.frame));
        let (r, t) = match &prev {
            None => compose_const(&ra, &ta, c1),
            Some((rp, tp)) => (mat_mul(&ra, rp), add3(&mat_vec(&ra, tp), &ta)),
        };
        if !obs.is_empty() {
            let le = total_loss(scene, &pose_of(&r, &t), k, cfg, obs, weights)?;
            total += le.value * scale;
            pose_seeds(&r, &t, &le.pose_grad.scaled(scale), &mut seeds);
        }
        prev = Some((r, t));
    }
    Ok((total, tape.backward(&seeds).wrt_all(&v)))
}

fn check_inputs(
    observations: &[Observation],
    scene_cam: &Scene,
    c_hat: &[RigidTransform],
    k: &Intrinsics,
) -> Result<()> {
    if scene_cam.frame_of_reference() != FrameOfReference::Camera {
        return Err(Error::InvalidScene("expected camera-frame tracks".into()));
    }
    let t = scene_cam.frame_count();
    if observations.len() != t {
        return Err(Error::LengthMismatch {
            trajectory: observations.len(),
            frames: t,
        });
    }
    if c_hat.len() != t {
        return Err(Error::LengthMismatch {
            trajectory: c_hat.len(),
            frames: t,
        });
    }
    for (i, o) in observations.iter().enumerate() {
        if o.frame != i + 1 {
            return Err(Error::InvalidConfig(format!(
                "observation {} carries frame index {}",
                i + 1,
                o.frame
            )));
        }
        o.check_size(k).map_err(|e| e.at_frame(i + 1))?;
    }
    Ok(())
}

struct Clock(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Clock {
    fn start() -> Clock {
        Clock(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn seconds(&self) -> Option<f64> {
        #[cfg(not(target_arch = "wasm32"))]
        return Some(self.0.elapsed().as_secs_f64());
        #[cfg(target_arch = "wasm32")]
        None
    }
}

fn frame_report(frame: usize, obs: &Observation, trace: LossTrace, last: &LossEval) -> FrameReport {
    FrameReport {
        frame,
        iterations: trace.iterations(),
        initial_loss: trace.initial(),
        final_loss: last.value,
        composition: last.composition,
        joint: last.joint,
        no_joint_signal: last.no_joint_signal,
        empty: obs.is_empty(),
        trace,
    }
}

/// Full pipeline: lift the tracks with the starting trajectory, fit the
/// first pose, extend the chain frame by frame, optionally refine all
/// frames jointly, and lift the tracks again with the result.
pub fn optimize_trajectory(
    observations: &[Observation],
    scene_cam: &Scene,
    c_hat: &[RigidTransform],
    k: &Intrinsics,
    weights: &LossWeights,
    cfg: &OptimizerConfig,
) -> Result<TrajectoryResult> {
    cfg.validate()?;
    weights.validate()?;
    check_inputs(observations, scene_cam, c_hat, k)?;
    let clock = Clock::start();
    let n = observations.len();

    let scene = lift_tracks_to_world(scene_cam, c_hat)?;

    let first = optimize_single_pose(&c_hat[0], &observations[0], &scene, k, weights, cfg)
        .map_err(|e| e.at_frame(1))?;
    let (theta, w1, v1) = first.twist;
    let mut model = TrajectoryModel::new(theta, w1, v1, n, &cfg.hidden, cfg.encoding, cfg.seed)?;
    model.renormalize_axis = cfg.renormalize_axis;
    let mut frames = vec![frame_report(1, &observations[0], first.trace, &first.final_loss)];

    let mut lrs = vec![0.0; model.param_count()];
    for i in model.mlp_range() {
        lrs[i] = cfg.lr_mlp;
    }
    if !cfg.freeze_theta {
        lrs[THETA] = cfg.lr_screw;
    }

    let mut trajectory = vec![first.pose];
    let mut p = model.params();
    for obs in &observations[1..] {
        let t = obs.frame;
        let prev = *trajectory.last().unwrap();
        let trace = if obs.is_empty() {
            LossTrace::default()
        } else {
            minimize(&mut p, &lrs, cfg.sequence_iterations, cfg, |p| {
                let (le, g) = sequence_eval(&model, p, &prev, obs, &scene, k, weights, &cfg.render)?;
                Ok((le.value, g))
            })
            .map_err(|e| e.at_frame(t))?
        };
        let (last, _) = sequence_eval(&model, &p, &prev, obs, &scene, k, weights, &cfg.render)
            .map_err(|e| e.at_frame(t))?;
        model.set_params(&p);
        let a = model.transform_at_norm(model.t_norm(t));
        trajectory.push(a.compose(&prev).orthonormalized());
        frames.push(frame_report(t, obs, trace, &last));
    }

    let mut refine = None;
    if cfg.refine_iterations > 0 && n > 1 {
        let c1 = trajectory[0];
        let rl: Vec<f64> = lrs.iter().map(|x| x * cfg.lr_refine_scale).collect();
        let trace = minimize(&mut p, &rl, cfg.refine_iterations, cfg, |p| {
            chain_eval(&model, p, &c1, observations, &scene, k, weights, &cfg.render)
        })?;
        model.set_params(&p);
        trajectory = super::model::unroll_trajectory(&model, &c1);
        refine = Some(trace);
    }

    let scene_world = lift_tracks_to_world(scene_cam, &trajectory)?;
    Ok(TrajectoryResult {
        model,
        trajectory,
        scene_world,
        report: TrajectoryReport {
            frames,
            refine,
            wall_time_s: clock.seconds(),
        },
    })
}
