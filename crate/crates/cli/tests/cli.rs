use std::path::Path;
use std::process::{Command, Output};

use viewforge::geometry::io::{load_ply, save_cameras};
use viewforge::harness::acquisition::roi_bounds;
use viewforge::harness::{build_scene, grid_plan, AcquisitionConfig, Metrics, SyntheticScene};
use viewforge::planner::{PlanFile, RoiFile};

fn viewforge(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viewforge"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) {
    let out = viewforge(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL_FOREST: &str = r#"{"trees":3,"max_depth":10,"min_leaf":20,"node_tests":50,"thresholds":10,"node_samples":300,"bag_fraction":0.632,"bins":9,"gamma_max_deg":45.0}"#;

#[test]
fn scene_writes_mesh_with_materials() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["scene", "--preset", "rock", "--seed", "7", "--out", "scene"],
        dir.path(),
    );
    let mesh = load_ply(&dir.path().join("scene/mesh.ply")).unwrap();
    let expected = build_scene("rock", 7).unwrap();
    assert_eq!(mesh.face_count(), expected.mesh.face_count());
    assert_eq!(mesh.materials, expected.mesh.materials);
    let loaded = SyntheticScene::load(&dir.path().join("scene")).unwrap();
    assert_eq!(loaded.roi, expected.roi);
    assert!(dir.path().join("scene/cameras.json").exists());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = viewforge(&["scene", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn runtime_errors_exit_one_with_a_single_prefixed_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = viewforge(&["scene", "--preset", "volcano", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(
        err.starts_with("viewforge error: unknown_preset: "),
        "{err}"
    );

    let out = viewforge(
        &["evaluate", "--log", "missing.jsonl", "--out", "ev"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("viewforge error: io: "));
}

#[test]
fn labels_forest_and_planned_simulation_chain_together() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("forest.json"), SMALL_FOREST).unwrap();
    ok(
        &["scene", "--preset", "rock", "--seed", "7", "--out", "scene"],
        d,
    );
    ok(
        &[
            "genlabels",
            "--cameras",
            "scene/cameras.json",
            "--mesh",
            "scene/mesh.ply",
            "--backend",
            "oracle",
            "--bins",
            "5",
            "--alpha0",
            "4",
            "--per-bin",
            "3",
            "--out",
            "labels",
        ],
        d,
    );
    assert!(d.join("labels/images").read_dir().unwrap().count() > 0);
    ok(
        &[
            "train",
            "--labels",
            "labels",
            "--config",
            "forest.json",
            "--samples",
            "2000",
            "--out",
            "forest.bin",
        ],
        d,
    );
    ok(
        &[
            "predict",
            "--forest",
            "forest.bin",
            "--images",
            "labels/images",
            "--step",
            "8",
            "--out",
            "conf",
        ],
        d,
    );
    assert!(d.join("conf").read_dir().unwrap().count() > 0);

    ok(
        &[
            "simulate",
            "--strategy",
            "F1x2",
            "--scene-seed",
            "1",
            "--forest",
            "forest.bin",
            "--out",
            "sim",
        ],
        d,
    );
    let log = std::fs::read_to_string(d.join("sim/log.jsonl")).unwrap();
    assert!(log
        .lines()
        .all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
    assert!(log.lines().next().unwrap().contains("\"event\":\"start\""));
    let metrics: Metrics =
        serde_json::from_str(&std::fs::read_to_string(d.join("sim/metrics.json")).unwrap())
            .unwrap();
    assert!(metrics.success_rate.is_some());
    let csv = std::fs::read_to_string(d.join("sim/histogram.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("bin_center,mass"));

    ok(&["evaluate", "--log", "sim/log.jsonl", "--out", "ev"], d);
    let again: Metrics =
        serde_json::from_str(&std::fs::read_to_string(d.join("ev/metrics.json")).unwrap()).unwrap();
    assert_eq!(again, metrics);
}

#[test]
fn plan_reads_snapshot_and_roi() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scene = build_scene("rock", 2).unwrap();
    scene.save(&d.join("scene")).unwrap();
    let acq = AcquisitionConfig::default();
    let grid = grid_plan(
        roi_bounds(&scene.mesh, &scene.roi),
        0.8,
        5.0,
        &scene.camera,
        0,
    )
    .unwrap();
    let cameras = grid.cameras();
    save_cameras(&cameras, &d.join("cams.json")).unwrap();
    std::fs::create_dir_all(d.join("images")).unwrap();
    for c in &cameras {
        scene
            .render_color(c)
            .save(&d.join(format!("images/image_{}.png", c.id)))
            .unwrap();
    }
    let snapshot = r#"{"mesh": "scene/mesh.ply", "cameras": "cams.json"}"#;
    std::fs::write(d.join("snap.json"), snapshot).unwrap();
    let middle = cameras[cameras.len() / 2].id.0;
    let roi = RoiFile {
        image_id: middle,
        polygon: vec![[40.0, 30.0], [120.0, 30.0], [120.0, 90.0], [40.0, 90.0]],
    };
    std::fs::write(d.join("roi.json"), serde_json::to_string(&roi).unwrap()).unwrap();
    std::fs::write(
        d.join("planner.json"),
        serde_json::to_string(&acq.planner).unwrap(),
    )
    .unwrap();
    std::fs::write(d.join("forest.json"), SMALL_FOREST).unwrap();

    let common = [
        "--snapshot",
        "snap.json",
        "--roi",
        "roi.json",
        "--config",
        "planner.json",
        "--k",
        "2",
    ];
    ok(&[&["plan"][..], &common, &["--out", "np.json"]].concat(), d);
    let plan = PlanFile::load(&d.join("np.json"))
        .unwrap()
        .to_plan()
        .unwrap();
    assert!(!plan.triplets.is_empty() && plan.triplets.len() <= 2);
    assert!(plan.views.len() >= 3 * plan.triplets.len());

    // A forest without confidence images or color images to predict them from.
    ok(
        &["scene", "--preset", "rock", "--seed", "7", "--out", "train"],
        d,
    );
    ok(
        &[
            "genlabels",
            "--cameras",
            "train/cameras.json",
            "--mesh",
            "train/mesh.ply",
            "--per-bin",
            "3",
            "--out",
            "labels",
        ],
        d,
    );
    ok(
        &[
            "train",
            "--labels",
            "labels",
            "--config",
            "forest.json",
            "--samples",
            "2000",
            "--out",
            "forest.bin",
        ],
        d,
    );
    let out = viewforge(
        &[
            &["plan"][..],
            &common,
            &["--forest", "forest.bin", "--out", "f.json"],
        ]
        .concat(),
        d,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("viewforge error: config: "));

    ok(
        &[
            &["plan"][..],
            &common,
            &[
                "--forest",
                "forest.bin",
                "--images",
                "images",
                "--out",
                "f.json",
            ],
        ]
        .concat(),
        d,
    );
    let plan = PlanFile::load(&d.join("f.json"))
        .unwrap()
        .to_plan()
        .unwrap();
    assert!(!plan.triplets.is_empty());
}
