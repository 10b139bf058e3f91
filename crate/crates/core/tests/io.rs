use std::fs;

use refilm_core::eval::{evaluate_trajectory, METHOD_INIT};
use refilm_core::geom::{exp_screw, ScrewParams};
use refilm_core::io::*;
use refilm_core::synth::{make_shot, ShotSpec, ShotType};
use refilm_core::trajopt::{LossTrace, TrajectoryModel, TrajectoryReport, FrameReport};
use refilm_core::{ColorMaskImage, Error, RigidTransform};

fn small_shot() -> refilm_core::synth::SyntheticShot {
    let mut spec = ShotSpec::new(ShotType::Arc, 4, 2, 3);
    spec.image_size = 48;
    spec.focal = 42.0;
    make_shot(&spec).unwrap()
}

fn poses() -> Vec<RigidTransform> {
    (0..5)
        .map(|i| {
            let f = i as f64;
            exp_screw(&ScrewParams::new(0.3 * f - 0.4, [0.2, 1.0, -0.3], [1.0 / 3.0, -f, 0.1]))
        })
        .collect()
}

#[test]
fn trajectory_records_round_trip_is_byte_identical() {
    let text = format_trajectory(&poses());
    let records = parse_records(&text, "t").unwrap();
    assert_eq!(format_records(&records), text);
    // poses survive to rounding; the quaternion to matrix step may move the last bit
    let back = parse_trajectory(&text, "t").unwrap();
    for (a, b) in back.iter().zip(&poses()) {
        assert!(a.distance(b) < 1e-14);
    }
    let again = format_trajectory(&back);
    for (x, y) in parse_records(&again, "t").unwrap().iter().zip(&records) {
        for (u, v) in x.quaternion.iter().chain(&x.translation).zip(y.quaternion.iter().chain(&y.translation)) {
            assert!((u - v).abs() < 1e-15);
        }
    }
    assert!(text.lines().nth(3).unwrap().starts_with("1 "));
}

#[test]
fn trajectory_parse_errors_name_the_line() {
    let text = format_trajectory(&poses());
    let mut lines: Vec<&str> = text.lines().collect();
    lines[5] = "3 0.0 0.0 nope 0 0 0 1";
    let bad = lines.join("\n");
    match parse_trajectory(&bad, "traj.txt") {
        Err(Error::Parse { line, file, .. }) => {
            assert_eq!(line, 6);
            assert_eq!(file, "traj.txt");
        }
        other => panic!("unexpected {other:?}"),
    }
    let err = parse_trajectory(&bad, "traj.txt").unwrap_err().to_string();
    assert!(err.contains("line 6"), "{err}");

    let not_unit = "# format_version 1.0\n1 0 0 0 0 0 0 1.1\n";
    assert!(matches!(parse_trajectory(not_unit, "x"), Err(Error::Parse { line: 2, .. })));
    let skipped = "# format_version 1.0\n2 0 0 0 0 0 0 1\n";
    assert!(parse_trajectory(skipped, "x").is_err());
    assert!(parse_trajectory("1 0 0 0 0 0 0 1\n", "x").is_err());
}

#[test]
fn quaternion_renormalized_within_tolerance() {
    let s = 1.0 + 5e-7;
    let text = format!("# format_version 1.0\n1 1 2 3 0 0 0 {s}\n");
    let p = parse_trajectory(&text, "x").unwrap();
    assert!(p[0].orthogonality_error() < 1e-12);
}

#[test]
fn unknown_major_version_rejected_everywhere() {
    let t = "# format_version 2.0\n1 0 0 0 0 0 0 1\n";
    assert!(matches!(parse_trajectory(t, "x"), Err(Error::FormatVersion { .. })));

    let doc = to_json_doc("scene", &5u32).unwrap().replace("\"1.0\"", "\"2.3\"");
    assert!(matches!(from_json_doc::<u32>(&doc, "scene", "x"), Err(Error::FormatVersion { .. })));
    let doc = to_json_doc("scene", &5u32).unwrap();
    assert_eq!(from_json_doc::<u32>(&doc, "scene", "x").unwrap(), 5);
    assert!(from_json_doc::<u32>(&doc, "joints", "x").is_err());

    let csv = format_metrics_csv(&[]).unwrap().replace("1.0", "9.0");
    assert!(matches!(parse_metrics_csv(&csv, "x"), Err(Error::FormatVersion { .. })));
}

#[test]
fn png_round_trip() {
    let shot = small_shot();
    let img = &shot.observations[0].target_mask;
    let bytes = encode_png(img).unwrap();
    let back = decode_png(&bytes, "m.png").unwrap();
    assert_eq!(&back, img);
    assert_eq!(encode_png(&back).unwrap(), bytes);
    assert!(decode_png(&bytes[..20], "m.png").is_err());
}

#[test]
fn bundle_round_trip_and_determinism() {
    let shot = small_shot();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let m = write_bundle(&a, &shot).unwrap();
    assert_eq!(m.files.masks.len(), 4);
    write_bundle(&b, &shot).unwrap();
    for name in [MANIFEST_FILE, SCENE_FILE, GT_TRAJECTORY_FILE, JOINTS_FILE, "masks/mask_0003.png"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }

    let loaded = read_bundle(&a).unwrap();
    assert_eq!(loaded.scene_world, shot.scene_world);
    assert_eq!(loaded.observations, shot.observations);
    assert_eq!(loaded.spec, shot.spec);

    let c = dir.path().join("c");
    write_bundle(&c, &loaded).unwrap();
    for name in [MANIFEST_FILE, SCENE_FILE, JOINTS_FILE, "masks/mask_0001.png"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(c.join(name)).unwrap(), "{name}");
    }
    let text = fs::read_to_string(a.join(GT_TRAJECTORY_FILE)).unwrap();
    assert_eq!(format_records(&parse_records(&text, "gt").unwrap()), text);

    // ground truth scores perfectly against its own bundle
    let r = evaluate_trajectory(
        METHOD_INIT,
        &loaded.scene_world,
        &loaded.observations,
        &loaded.gt_trajectory,
        &loaded.intrinsics,
        None,
    )
    .unwrap();
    assert_eq!(r.pa, 100.0);
    assert_eq!(r.iou, 1.0);
    assert!(r.mpjpe.unwrap() < 1e-9);
}

#[test]
fn missing_bundle_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_bundle(&dir.path().join("nope")), Err(Error::Io { .. })));
}

#[test]
fn model_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = TrajectoryModel::new(0.2, [0.0, 1.0, 0.0], [0.5, 0.0, 0.1], 6, &[8], true, 11).unwrap();
    let p = dir.path().join("model.json");
    write_model(&p, &m).unwrap();
    let back = read_model(&p).unwrap();
    assert_eq!(back, m);
    let q = dir.path().join("model2.json");
    write_model(&q, &back).unwrap();
    assert_eq!(fs::read(&p).unwrap(), fs::read(&q).unwrap());

    let report = TrajectoryReport {
        frames: vec![FrameReport {
            frame: 2,
            iterations: 2,
            initial_loss: 0.5,
            final_loss: 0.25,
            composition: 0.2,
            joint: 0.05,
            no_joint_signal: false,
            empty: false,
            trace: LossTrace {
                raw: vec![0.5, 0.25],
                best: vec![0.5, 0.25],
            },
        }],
        refine: Some(LossTrace {
            raw: vec![0.3],
            best: vec![0.3],
        }),
        wall_time_s: None,
    };
    let r = dir.path().join("report.json");
    write_solve_report(&r, &report).unwrap();
    assert_eq!(read_solve_report(&r).unwrap(), report);

    let rows = loss_rows(&report);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2].stage, "refine");
    let text = format_loss_csv(&rows).unwrap();
    let back = parse_loss_csv(&text, "l").unwrap();
    assert_eq!(back, rows);
    assert_eq!(format_loss_csv(&back).unwrap(), text);
}

#[test]
fn metrics_csv_round_trip() {
    let shot = small_shot();
    let r = evaluate_trajectory(
        "gt",
        &shot.scene_world,
        &shot.observations,
        &shot.gt_trajectory,
        &shot.intrinsics,
        Some(&shot.gt_trajectory),
    )
    .unwrap();
    let rows = metrics_rows("arc", &r);
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[4].frame, AGGREGATE_FRAME);
    assert_eq!(rows[4].translation_rmse, Some(0.0));
    assert_eq!(rows[0].translation_rmse, None);
    let text = format_metrics_csv(&rows).unwrap();
    assert!(text.starts_with("# format_version 1.0\nshot,method,frame,pa,iou,mpjpe,"));
    let back = parse_metrics_csv(&text, "m").unwrap();
    assert_eq!(back, rows);
    assert_eq!(format_metrics_csv(&back).unwrap(), text);
}

#[test]
fn scene_file_validated_on_read() {
    let shot = small_shot();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("scene.json");
    write_scene(&p, &shot.scene_world).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    let broken = text.replacen("\"radius\": ", "\"radius\": -", 1);
    fs::write(&p, broken).unwrap();
    assert!(matches!(read_scene(&p), Err(Error::InvalidScene(_))));
    let img = ColorMaskImage::white(2, 2);
    let q = dir.path().join("w.png");
    write_png(&q, &img).unwrap();
    assert_eq!(read_png(&q).unwrap(), img);
}
