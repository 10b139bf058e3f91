use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand};
use refilm_core::eval::{contour_overlay, evaluate_trajectory, run_baselines, BaselineConfig, MetricsReport, METHOD_INIT, METHOD_OURS};
use refilm_core::io;
use refilm_core::render::render_hard_mask;
use refilm_core::synth::{make_shot, perceived_tracks, perturb_trajectory, PerturbMode, ShotSpec, ShotType, SyntheticShot, TARGET_SUPERSAMPLE};
use refilm_core::trajopt::{optimize_trajectory, LossWeights, OptimizerConfig, TrajectoryReport};
use refilm_core::{Error, RigidTransform};

/// Recover camera trajectories from character silhouettes and 2D joints.
#[derive(Parser)]
#[command(name = "refilm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic shot bundle.
    Gen(GenArgs),
    /// Optimize a camera trajectory for a bundle.
    Solve(SolveArgs),
    /// Score trajectories against a bundle.
    Eval(EvalArgs),
    /// Re-render masks along a trajectory.
    Render(RenderArgs),
    /// Print a bundle manifest.
    Info(InfoArgs),
}

#[derive(Args)]
struct GenArgs {
    /// push-in, pull-out, pan, track, follow or arc.
    #[arg(long = "type")]
    shot_type: ShotType,
    #[arg(long, default_value_t = 30)]
    frames: usize,
    #[arg(long, default_value_t = 1)]
    chars: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Movement amplitude; defaults per shot type.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Distance from the first camera to the subject.
    #[arg(long)]
    distance: Option<f64>,
    /// Image width and height in pixels.
    #[arg(long, default_value_t = 128)]
    size: u32,
    /// Focal length in pixels; scales with --size by default.
    #[arg(long)]
    focal: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    bundle: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Starting trajectory file. Without it, the ground truth is perturbed.
    #[arg(long)]
    init: Option<PathBuf>,
    /// drift or iid.
    #[arg(long, default_value = "drift")]
    perturb: PerturbMode,
    #[arg(long, default_value_t = 1.0)]
    rot_deg: f64,
    #[arg(long, default_value_t = 0.02)]
    trans: f64,
    #[arg(long, default_value_t = 1)]
    perturb_seed: u64,
    /// Also run the per-frame baseline.
    #[arg(long)]
    baselines: bool,
    #[arg(long)]
    no_overlays: bool,
    #[command(flatten)]
    opt: OptArgs,
}

#[derive(Args)]
struct OptArgs {
    #[arg(long)]
    lr_screw: Option<f64>,
    #[arg(long)]
    lr_mlp: Option<f64>,
    #[arg(long)]
    first_iters: Option<usize>,
    #[arg(long)]
    seq_iters: Option<usize>,
    #[arg(long)]
    refine_iters: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Soft silhouette temperature in pixels.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    supersample: Option<u32>,
    #[arg(long)]
    lambda_c: Option<f64>,
    #[arg(long)]
    lambda_j: Option<f64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    encoding: bool,
    #[arg(long)]
    freeze_theta: bool,
    #[arg(long)]
    renormalize_axis: bool,
    #[arg(long)]
    opt_seed: Option<u64>,
}

impl OptArgs {
    fn config(&self) -> (OptimizerConfig, LossWeights) {
        let mut c = OptimizerConfig::default();
        let mut w = LossWeights::default();
        macro_rules! set {
            ($field:expr, $opt:expr) => {
                if let Some(v) = $opt.clone() {
                    $field = v;
                }
            };
        }
        set!(c.lr_screw, self.lr_screw);
        set!(c.lr_mlp, self.lr_mlp);
        set!(c.first_frame_iterations, self.first_iters);
        set!(c.sequence_iterations, self.seq_iters);
        set!(c.refine_iterations, self.refine_iters);
        set!(c.patience, self.patience);
        set!(c.render.tau, self.tau);
        set!(c.render.supersample, self.supersample);
        set!(c.hidden, self.hidden);
        set!(c.seed, self.opt_seed);
        set!(w.lambda_c, self.lambda_c);
        set!(w.lambda_j, self.lambda_j);
        c.encoding |= self.encoding;
        c.freeze_theta |= self.freeze_theta;
        c.renormalize_axis |= self.renormalize_axis;
        (c, w)
    }
}

#[derive(Args)]
struct EvalArgs {
    bundle: PathBuf,
    #[arg(required = true)]
    trajectories: Vec<PathBuf>,
    /// Row labels, one per trajectory; file stems by default.
    #[arg(long)]
    label: Vec<String>,
    /// Write the metrics CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    bundle: PathBuf,
    trajectory: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = TARGET_SUPERSAMPLE)]
    supersample: u32,
    /// Draw render contours over the bundle masks instead.
    #[arg(long)]
    overlay: bool,
}

#[derive(Args)]
struct InfoArgs {
    bundle: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
    usage: bool,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match root(&e) {
            Error::NonFiniteLoss { .. } | Error::Io { .. } | Error::Format(_) | Error::Parse { .. } | Error::FormatVersion { .. } => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
            usage: false,
        }
    }
}

fn root(e: &Error) -> &Error {
    match e {
        Error::AtFrame { source, .. } => root(source),
        e => e,
    }
}

fn usage_error(message: String) -> Failure {
    Failure {
        code: 2,
        message,
        usage: true,
    }
}

fn require(path: &Path, what: &str) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage_error(format!("{what} {} does not exist", path.display())))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let name = match &cli.command {
        Command::Gen(_) => "gen",
        Command::Solve(_) => "solve",
        Command::Eval(_) => "eval",
        Command::Render(_) => "render",
        Command::Info(_) => "info",
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a),
        Command::Eval(a) => eval(a),
        Command::Render(a) => render(a),
        Command::Info(a) => info(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            if f.usage {
                let mut cmd = Cli::command();
                cmd.build();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    eprintln!("\n{}", sub.render_usage());
                }
            }
            ExitCode::from(f.code)
        }
    }
}

fn gen(a: GenArgs) -> Result<(), Failure> {
    let mut spec = ShotSpec::new(a.shot_type, a.frames, a.chars, a.seed);
    if let Some(x) = a.amplitude {
        spec.amplitude = x;
    }
    if let Some(d) = a.distance {
        spec.subject_distance = d;
    }
    spec.focal = a.focal.unwrap_or(spec.focal * a.size as f64 / spec.image_size as f64);
    spec.image_size = a.size;
    spec.validate()?;
    let shot = make_shot(&spec)?;
    let m = io::write_bundle(&a.out, &shot)?;
    println!(
        "wrote {} ({} frames, {} characters, {} masks)",
        a.out.display(),
        m.frame_count,
        m.character_count,
        m.files.masks.len()
    );
    Ok(())
}

fn load_bundle(path: &Path) -> Result<SyntheticShot, Failure> {
    require(path, "bundle")?;
    require(&path.join(io::MANIFEST_FILE), "manifest")?;
    Ok(io::read_bundle(path)?)
}

fn solve(a: SolveArgs) -> Result<(), Failure> {
    let shot = load_bundle(&a.bundle)?;
    let init = match &a.init {
        Some(p) => {
            require(p, "trajectory")?;
            io::read_trajectory(p)?
        }
        None => perturb_trajectory(&shot.gt_trajectory, a.rot_deg, a.trans, a.perturb, a.perturb_seed)?,
    };
    if init.len() != shot.observations.len() {
        return Err(Error::LengthMismatch {
            trajectory: init.len(),
            frames: shot.observations.len(),
        }
        .into());
    }
    let (optimizer, weights) = a.opt.config();
    optimizer.validate()?;
    weights.validate()?;
    io::create_dir(&a.out)?;

    let start = Instant::now();
    let (reports, seq, per_frame) = if a.baselines {
        let cfg = BaselineConfig {
            optimizer,
            weights,
            ..BaselineConfig::default()
        };
        let run = run_baselines(&shot, &init, &cfg)?;
        let pf = run.trajectories[1].clone();
        (run.reports, run.sequential, Some(pf))
    } else {
        let scene_cam = perceived_tracks(&shot.scene_world, &init)?;
        let seq = optimize_trajectory(&shot.observations, &scene_cam, &init, &shot.intrinsics, &weights, &optimizer)?;
        let gt = Some(shot.gt_trajectory.as_slice());
        let mut reports = Vec::new();
        for (name, traj) in [(METHOD_INIT, &init), (METHOD_OURS, &seq.trajectory)] {
            reports.push(evaluate_trajectory(name, &shot.scene_world, &shot.observations, traj, &shot.intrinsics, gt)?);
        }
        (reports, seq, None)
    };
    let elapsed = start.elapsed().as_secs_f64();

    io::write_trajectory(&a.out.join("init_trajectory.txt"), &init)?;
    io::write_trajectory(&a.out.join("trajectory.txt"), &seq.trajectory)?;
    if let Some(pf) = &per_frame {
        io::write_trajectory(&a.out.join("per_frame_trajectory.txt"), pf)?;
    }
    io::write_model(&a.out.join("model.json"), &seq.model)?;
    let report = TrajectoryReport {
        wall_time_s: None,
        ..seq.report.clone()
    };
    io::write_solve_report(&a.out.join("report.json"), &report)?;
    io::write_loss_csv(&a.out.join("loss_curves.csv"), &io::loss_rows(&report))?;
    let shot_name = shot.spec.shot_type.to_string();
    let rows: Vec<io::MetricsRow> = reports.iter().flat_map(|r| io::metrics_rows(&shot_name, r)).collect();
    io::write_metrics_csv(&a.out.join("metrics.csv"), &rows)?;
    if !a.no_overlays {
        let overlays = overlays(&shot, &seq.trajectory)?;
        io::write_png_sequence(&a.out.join("overlays"), "overlay", &overlays)?;
    }

    print_table(&reports);
    eprintln!("solved {} frames in {elapsed:.1} s", shot.observations.len());
    Ok(())
}

fn overlays(shot: &SyntheticShot, traj: &[RigidTransform]) -> Result<Vec<refilm_core::ColorMaskImage>, Error> {
    let palette = shot.palette();
    shot.observations
        .iter()
        .zip(traj)
        .map(|(o, pose)| {
            let est = render_hard_mask(&shot.scene_world, o.frame, pose, &shot.intrinsics, TARGET_SUPERSAMPLE)?;
            contour_overlay(&o.target_mask, &est, &palette)
        })
        .collect()
}

fn print_table(reports: &[MetricsReport]) {
    let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let opt = |x: Option<f64>, p: usize| x.map_or("-".to_string(), |v| format!("{v:.p$}"));
    println!(
        "{:<width$}  {:>7}  {:>7}  {:>8}  {:>8}  {:>8}",
        "method", "PA", "IoU", "MPJPE", "t-RMSE", "r-RMSE"
    );
    for r in reports {
        println!(
            "{:<width$}  {:>7.2}  {:>7.2}  {:>8}  {:>8}  {:>8}",
            r.method,
            r.pa,
            100.0 * r.iou,
            opt(r.mpjpe, 3),
            opt(r.translation_rmse, 4),
            opt(r.rotation_rmse_deg, 3),
        );
    }
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    let shot = load_bundle(&a.bundle)?;
    if !a.label.is_empty() && a.label.len() != a.trajectories.len() {
        return Err(usage_error(format!(
            "{} labels for {} trajectories",
            a.label.len(),
            a.trajectories.len()
        )));
    }
    let mut reports = Vec::new();
    for (i, p) in a.trajectories.iter().enumerate() {
        require(p, "trajectory")?;
        let traj = io::read_trajectory(p)?;
        let label = a.label.get(i).cloned().unwrap_or_else(|| {
            p.file_stem().map_or_else(|| format!("trajectory{}", i + 1), |s| s.to_string_lossy().into_owned())
        });
        reports.push(evaluate_trajectory(
            &label,
            &shot.scene_world,
            &shot.observations,
            &traj,
            &shot.intrinsics,
            Some(&shot.gt_trajectory),
        )?);
    }
    if let Some(csv) = &a.csv {
        let shot_name = shot.spec.shot_type.to_string();
        let rows: Vec<io::MetricsRow> = reports.iter().flat_map(|r| io::metrics_rows(&shot_name, r)).collect();
        io::write_metrics_csv(csv, &rows)?;
    }
    print_table(&reports);
    Ok(())
}

fn render(a: RenderArgs) -> Result<(), Failure> {
    let shot = load_bundle(&a.bundle)?;
    require(&a.trajectory, "trajectory")?;
    let traj = io::read_trajectory(&a.trajectory)?;
    if traj.len() != shot.observations.len() {
        return Err(Error::LengthMismatch {
            trajectory: traj.len(),
            frames: shot.observations.len(),
        }
        .into());
    }
    let images = if a.overlay {
        overlays(&shot, &traj)?
    } else {
        shot.observations
            .iter()
            .zip(&traj)
            .map(|(o, pose)| render_hard_mask(&shot.scene_world, o.frame, pose, &shot.intrinsics, a.supersample))
            .collect::<Result<Vec<_>, _>>()?
    };
    let written = io::write_png_sequence(&a.out, if a.overlay { "overlay" } else { "render" }, &images)?;
    println!("wrote {} images to {}", written.len(), a.out.display());
    Ok(())
}

fn info(a: InfoArgs) -> Result<(), Failure> {
    require(&a.bundle, "bundle")?;
    let path = a.bundle.join(io::MANIFEST_FILE);
    require(&path, "manifest")?;
    let m = io::read_manifest(&path)?;
    println!("format_version  {}", io::FORMAT_VERSION);
    println!("shot            {}", m.spec.shot_type);
    println!("frames          {}", m.frame_count);
    println!("characters      {}", m.character_count);
    println!("seed            {}", m.seed);
    println!("amplitude       {}", m.spec.amplitude);
    println!("distance        {}", m.spec.subject_distance);
    println!(
        "image           {}x{} f={} c=({}, {})",
        m.intrinsics.width, m.intrinsics.height, m.intrinsics.fx, m.intrinsics.cx, m.intrinsics.cy
    );
    println!("masks           {}", m.files.masks.len());
    Ok(())
}
