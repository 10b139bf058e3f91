//! On-disk formats: trajectory text, versioned JSON documents, PNG masks
//! and CSV reports, plus the shot bundle that ties them together.
//!
//! Every writer has a reader, and write then read then write reproduces
//! the same bytes. Every file carries a format version; readers reject an
//! unknown major version.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::geom::{Intrinsics, Projection, RigidTransform};
use crate::render::ColorMaskImage;
use crate::scene::{tracks_to_camera, FrameOfReference, Scene};
use crate::synth::{ShotSpec, SyntheticShot};
use crate::trajopt::{Observation, TrajectoryModel, TrajectoryReport};

pub const FORMAT_VERSION: &str = "1.0";
pub const FORMAT_MAJOR: u32 = 1;
/// Allowed deviation of a stored quaternion from unit norm.
pub const QUATERNION_TOLERANCE: f64 = 1e-6;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENE_FILE: &str = "scene.json";
pub const GT_TRAJECTORY_FILE: &str = "gt_trajectory.txt";
pub const JOINTS_FILE: &str = "joints.json";
pub const MASK_DIR: &str = "masks";

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn check_version(file: &str, found: &str) -> Result<()> {
    let major = found.split('.').next().and_then(|m| m.parse::<u32>().ok());
    if major == Some(FORMAT_MAJOR) {
        Ok(())
    } else {
        Err(Error::FormatVersion {
            file: file.to_string(),
            found: found.to_string(),
            expected: FORMAT_MAJOR,
        })
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

// trajectory

/// One line of a trajectory file, kept exactly as stored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseRecord {
    pub frame: usize,
    pub translation: [f64; 3],
    /// `[x, y, z, w]`.
    pub quaternion: [f64; 4],
}

impl PoseRecord {
    /// Quaternion with `w >= 0`.
    pub fn from_pose(frame: usize, pose: &RigidTransform) -> PoseRecord {
        let q = pose.quaternion();
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        PoseRecord {
            frame,
            translation: pose.translation_array(),
            quaternion: [s * q.i, s * q.j, s * q.k, s * q.w],
        }
    }

    pub fn to_pose(&self) -> Result<RigidTransform> {
        let [x, y, z, w] = self.quaternion;
        let q = Quaternion::new(w, x, y, z);
        if (q.norm() - 1.0).abs() > QUATERNION_TOLERANCE {
            return Err(Error::InvalidTransform(format!(
                "frame {}: quaternion norm {} is not 1",
                self.frame,
                q.norm()
            )));
        }
        Ok(RigidTransform::from_quaternion(
            UnitQuaternion::from_quaternion(q),
            Vector3::from(self.translation),
        ))
    }
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn format_records(records: &[PoseRecord]) -> String {
    let mut s = format!("# refilm trajectory\n# format_version {FORMAT_VERSION}\n# frame tx ty tz qx qy qz qw\n");
    for r in records {
        let nums: Vec<String> = r.translation.iter().chain(&r.quaternion).map(|&x| sci(x)).collect();
        s.push_str(&format!("{} {}\n", r.frame, nums.join(" ")));
    }
    s
}

pub fn format_trajectory(poses: &[RigidTransform]) -> String {
    let records: Vec<PoseRecord> = poses.iter().enumerate().map(|(i, p)| PoseRecord::from_pose(i + 1, p)).collect();
    format_records(&records)
}

/// Parses trajectory text. Frames must run 1, 2, ... in order.
pub fn parse_records(text: &str, file: &str) -> Result<Vec<PoseRecord>> {
    let perr = |line: usize, message: String| Error::Parse {
        file: file.to_string(),
        line,
        message,
    };
    let mut version = None;
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            let mut it = comment.split_whitespace();
            if it.next() == Some("format_version") {
                let v = it.next().ok_or_else(|| perr(line_no, "format_version without a value".into()))?;
                check_version(file, v)?;
                version = Some(v.to_string());
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if version.is_none() {
            return Err(perr(line_no, "pose line before the format_version comment".into()));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(perr(line_no, format!("expected 8 fields, found {}", fields.len())));
        }
        let frame: usize = fields[0]
            .parse()
            .map_err(|_| perr(line_no, format!("bad frame index {:?}", fields[0])))?;
        if frame != records.len() + 1 {
            return Err(perr(line_no, format!("expected frame {}, found {frame}", records.len() + 1)));
        }
        let mut v = [0.0f64; 7];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| perr(line_no, format!("bad number {f:?}")))?;
            if !slot.is_finite() {
                return Err(perr(line_no, format!("non-finite number {f:?}")));
            }
        }
        let rec = PoseRecord {
            frame,
            translation: [v[0], v[1], v[2]],
            quaternion: [v[3], v[4], v[5], v[6]],
        };
        rec.to_pose().map_err(|e| perr(line_no, e.to_string()))?;
        records.push(rec);
    }
    if version.is_none() {
        return Err(perr(0, "missing format_version comment".into()));
    }
    Ok(records)
}

pub fn parse_trajectory(text: &str, file: &str) -> Result<Vec<RigidTransform>> {
    parse_records(text, file)?.iter().map(PoseRecord::to_pose).collect()
}

pub fn write_trajectory(path: &Path, poses: &[RigidTransform]) -> Result<()> {
    write_bytes(path, format_trajectory(poses).as_bytes())
}

pub fn read_trajectory(path: &Path) -> Result<Vec<RigidTransform>> {
    parse_trajectory(&read_text(path)?, &display(path))
}

// json

#[derive(Serialize)]
struct DocOut<'a, T> {
    format_version: &'a str,
    kind: &'a str,
    data: &'a T,
}

#[derive(Deserialize)]
struct Header {
    format_version: String,
    kind: String,
}

#[derive(Deserialize)]
struct DocIn<T> {
    data: T,
}

/// Pretty JSON wrapped in `{format_version, kind, data}`, newline-terminated.
pub fn to_json_doc<T: Serialize>(kind: &str, data: &T) -> Result<String> {
    let doc = DocOut {
        format_version: FORMAT_VERSION,
        kind,
        data,
    };
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json_doc<T: DeserializeOwned>(text: &str, kind: &str, file: &str) -> Result<T> {
    let jerr = |e: serde_json::Error| Error::Parse {
        file: file.to_string(),
        line: e.line(),
        message: e.to_string(),
    };
    let header: Header = serde_json::from_str(text).map_err(jerr)?;
    check_version(file, &header.format_version)?;
    if header.kind != kind {
        return Err(Error::Format(format!("{file}: expected a {kind} document, found {}", header.kind)));
    }
    let doc: DocIn<T> = serde_json::from_str(text).map_err(jerr)?;
    Ok(doc.data)
}

fn write_json<T: Serialize>(path: &Path, kind: &str, data: &T) -> Result<()> {
    write_bytes(path, to_json_doc(kind, data)?.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    from_json_doc(&read_text(path)?, kind, &display(path))
}

pub fn write_scene(path: &Path, scene: &Scene) -> Result<()> {
    write_json(path, "scene", scene)
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let scene: Scene = read_json(path, "scene")?;
    scene.validate()?;
    Ok(scene)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameJoints {
    pub frame: usize,
    /// Per character, per joint.
    pub characters: Vec<Vec<Projection>>,
}

pub fn write_joints(path: &Path, frames: &[FrameJoints]) -> Result<()> {
    write_json(path, "joints", &frames)
}

pub fn read_joints(path: &Path) -> Result<Vec<FrameJoints>> {
    read_json(path, "joints")
}

pub fn write_model(path: &Path, model: &TrajectoryModel) -> Result<()> {
    write_json(path, "trajectory-model", model)
}

pub fn read_model(path: &Path) -> Result<TrajectoryModel> {
    let m: TrajectoryModel = read_json(path, "trajectory-model")?;
    m.validate()?;
    Ok(m)
}

pub fn write_solve_report(path: &Path, report: &TrajectoryReport) -> Result<()> {
    write_json(path, "solve-report", report)
}

pub fn read_solve_report(path: &Path) -> Result<TrajectoryReport> {
    read_json(path, "solve-report")
}

// png

pub fn encode_png(img: &ColorMaskImage) -> Result<Vec<u8>> {
    let perr = |e: png::EncodingError| Error::Format(format!("png encoding: {e}"));
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width(), img.height());
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.add_text_chunk("format_version".into(), FORMAT_VERSION.into()).map_err(perr)?;
        let mut w = enc.write_header().map_err(perr)?;
        w.write_image_data(&img.to_rgb8()).map_err(perr)?;
        w.finish().map_err(perr)?;
    }
    Ok(out)
}

/// Decodes 8-bit RGB or RGBA; alpha is dropped. A `format_version` text
/// chunk, if present, must have the supported major version.
pub fn decode_png(bytes: &[u8], file: &str) -> Result<ColorMaskImage> {
    let perr = |e: png::DecodingError| Error::Format(format!("{file}: {e}"));
    let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(perr)?;
    for chunk in &reader.info().uncompressed_latin1_text {
        if chunk.keyword == "format_version" {
            check_version(file, &chunk.text)?;
        }
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format(format!("{file}: image too large")))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(perr)?;
    let buf = &buf[..info.buffer_size()];
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => buf.to_vec(),
        png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|c| [c[0], c[1], c[2]]).collect(),
        other => return Err(Error::Format(format!("{file}: unsupported color type {other:?}"))),
    };
    ColorMaskImage::from_rgb8(info.width, info.height, &rgb)
}

pub fn write_png(path: &Path, img: &ColorMaskImage) -> Result<()> {
    write_bytes(path, &encode_png(img)?)
}

pub fn read_png(path: &Path) -> Result<ColorMaskImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes, &display(path))
}

// csv

fn csv_err(file: &str) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse {
            file: file.to_string(),
            line,
            message: e.to_string(),
        }
    }
}

fn csv_to_string<R: Serialize>(rows: &[R], file: &str) -> Result<String> {
    let mut out = format!("# format_version {FORMAT_VERSION}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r).map_err(csv_err(file))?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))?;
    }
    String::from_utf8(out).map_err(|e| Error::Format(e.to_string()))
}

fn csv_from_str<R: DeserializeOwned>(text: &str, file: &str) -> Result<Vec<R>> {
    let first = text.lines().next().unwrap_or("");
    match first.strip_prefix("# format_version ") {
        Some(v) => check_version(file, v.trim())?,
        None => {
            return Err(Error::Parse {
                file: file.to_string(),
                line: 1,
                message: "missing format_version comment".into(),
            })
        }
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(csv_err(file))).collect()
}

/// One row of a metrics CSV. `frame` is a frame number or `all` for the
/// aggregate row; trajectory errors appear on aggregate rows only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub shot: String,
    pub method: String,
    pub frame: String,
    pub pa: f64,
    pub iou: f64,
    pub mpjpe: Option<f64>,
    pub translation_rmse: Option<f64>,
    pub rotation_rmse_deg: Option<f64>,
}

pub const AGGREGATE_FRAME: &str = "all";

pub fn metrics_rows(shot: &str, report: &MetricsReport) -> Vec<MetricsRow> {
    let mut rows: Vec<MetricsRow> = report
        .frames
        .iter()
        .map(|f| MetricsRow {
            shot: shot.to_string(),
            method: report.method.clone(),
            frame: f.frame.to_string(),
            pa: f.pa,
            iou: f.iou,
            mpjpe: f.mpjpe,
            translation_rmse: None,
            rotation_rmse_deg: None,
        })
        .collect();
    rows.push(MetricsRow {
        shot: shot.to_string(),
        method: report.method.clone(),
        frame: AGGREGATE_FRAME.to_string(),
        pa: report.pa,
        iou: report.iou,
        mpjpe: report.mpjpe,
        translation_rmse: report.translation_rmse,
        rotation_rmse_deg: report.rotation_rmse_deg,
    });
    rows
}

pub fn format_metrics_csv(rows: &[MetricsRow]) -> Result<String> {
    csv_to_string(rows, "metrics")
}

pub fn parse_metrics_csv(text: &str, file: &str) -> Result<Vec<MetricsRow>> {
    csv_from_str(text, file)
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_bytes(path, format_metrics_csv(rows)?.as_bytes())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    parse_metrics_csv(&read_text(path)?, &display(path))
}

/// One optimizer iteration. `stage` is `frame` for the per-frame fits and
/// `refine` for the joint refinement, which has `frame` 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub stage: String,
    pub frame: usize,
    pub iteration: usize,
    pub loss: f64,
    pub best: f64,
}

pub fn loss_rows(report: &TrajectoryReport) -> Vec<LossRow> {
    let mut rows = Vec::new();
    let mut push = |stage: &str, frame: usize, raw: &[f64], best: &[f64]| {
        for (i, (l, b)) in raw.iter().zip(best).enumerate() {
            rows.push(LossRow {
                stage: stage.to_string(),
                frame,
                iteration: i + 1,
                loss: *l,
                best: *b,
            });
        }
    };
    for f in &report.frames {
        push("frame", f.frame, &f.trace.raw, &f.trace.best);
    }
    if let Some(r) = &report.refine {
        push("refine", 0, &r.raw, &r.best);
    }
    rows
}

pub fn format_loss_csv(rows: &[LossRow]) -> Result<String> {
    csv_to_string(rows, "loss curves")
}

pub fn parse_loss_csv(text: &str, file: &str) -> Result<Vec<LossRow>> {
    csv_from_str(text, file)
}

pub fn write_loss_csv(path: &Path, rows: &[LossRow]) -> Result<()> {
    write_bytes(path, format_loss_csv(rows)?.as_bytes())
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<LossRow>> {
    parse_loss_csv(&read_text(path)?, &display(path))
}

// bundle

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleFiles {
    pub scene: String,
    pub gt_trajectory: String,
    pub joints: String,
    pub masks: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub seed: u64,
    pub spec: ShotSpec,
    pub intrinsics: Intrinsics,
    pub frame_count: usize,
    pub character_count: usize,
    pub files: BundleFiles,
}

pub fn mask_file_name(frame: usize) -> String {
    format!("{MASK_DIR}/mask_{frame:04}.png")
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    write_json(path, "manifest", m)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    read_json(path, "manifest")
}

/// Writes a shot bundle into `dir`, creating it if needed.
pub fn write_bundle(dir: &Path, shot: &SyntheticShot) -> Result<Manifest> {
    create_dir(&dir.join(MASK_DIR))?;
    let masks: Vec<String> = shot.observations.iter().map(|o| mask_file_name(o.frame)).collect();
    let manifest = Manifest {
        tool: "refilm".into(),
        seed: shot.spec.seed,
        spec: shot.spec.clone(),
        intrinsics: shot.intrinsics,
        frame_count: shot.scene_world.frame_count(),
        character_count: shot.scene_world.character_count(),
        files: BundleFiles {
            scene: SCENE_FILE.into(),
            gt_trajectory: GT_TRAJECTORY_FILE.into(),
            joints: JOINTS_FILE.into(),
            masks,
        },
    };
    write_scene(&dir.join(SCENE_FILE), &shot.scene_world)?;
    write_trajectory(&dir.join(GT_TRAJECTORY_FILE), &shot.gt_trajectory)?;
    let joints: Vec<FrameJoints> = shot
        .observations
        .iter()
        .map(|o| FrameJoints {
            frame: o.frame,
            characters: o.target_joints.clone(),
        })
        .collect();
    write_joints(&dir.join(JOINTS_FILE), &joints)?;
    for (o, name) in shot.observations.iter().zip(&manifest.files.masks) {
        write_png(&dir.join(name), &o.target_mask)?;
    }
    write_manifest(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Loads a bundle written by [`write_bundle`].
pub fn read_bundle(dir: &Path) -> Result<SyntheticShot> {
    let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
    let file = |name: &str| -> PathBuf { dir.join(name) };
    let k = manifest.intrinsics;
    k.validate()?;
    let scene_world = read_scene(&file(&manifest.files.scene))?;
    if scene_world.frame_of_reference() != FrameOfReference::World {
        return Err(Error::InvalidScene("bundle scene must be in world coordinates".into()));
    }
    let t = scene_world.frame_count();
    let gt = read_trajectory(&file(&manifest.files.gt_trajectory))?;
    let joints = read_joints(&file(&manifest.files.joints))?;
    if gt.len() != t || joints.len() != t || manifest.files.masks.len() != t || manifest.frame_count != t {
        return Err(Error::LengthMismatch {
            trajectory: gt.len(),
            frames: t,
        });
    }
    let mut observations = Vec::with_capacity(t);
    for (i, (fj, name)) in joints.into_iter().zip(&manifest.files.masks).enumerate() {
        if fj.frame != i + 1 {
            return Err(Error::Format(format!("joints: expected frame {}, found {}", i + 1, fj.frame)));
        }
        let obs = Observation {
            frame: fj.frame,
            target_mask: read_png(&file(name))?,
            target_joints: fj.characters,
        };
        obs.check_size(&k).map_err(|e| e.at_frame(obs.frame))?;
        observations.push(obs);
    }
    let scene_cam = tracks_to_camera(&scene_world, &gt)?;
    Ok(SyntheticShot {
        spec: manifest.spec,
        scene_world,
        gt_trajectory: gt,
        scene_cam,
        observations,
        intrinsics: k,
    })
}

/// Writes every frame of `images` as `prefix_0001.png` and so on.
pub fn write_png_sequence(dir: &Path, prefix: &str, images: &[ColorMaskImage]) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let p = dir.join(format!("{prefix}_{:04}.png", i + 1));
            write_png(&p, img)?;
            Ok(p)
        })
        .collect()
}
