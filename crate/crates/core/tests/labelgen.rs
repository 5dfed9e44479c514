mod common;

use std::collections::HashMap;

use viewforge::geometry::{is_valid_depth, render_depth, shrink_expand_mesh, Camera, CameraId};
use viewforge::harness::{
    build_scene, oracle_mvs, training_cameras, OracleBackend, OracleModel, TrainingConfig,
};
use viewforge::labelgen::{
    cast_votes, compute_support, detect_missing, generate_labels, sample_triplets, AugmentConfig,
    Cluster, LabelConfig, SamplingConfig, SupportConfig, VoteConfig,
};

fn setup() -> (viewforge::harness::SyntheticScene, Vec<Camera>, LabelConfig) {
    let scene = build_scene("rock", 5).unwrap();
    let cfg = TrainingConfig {
        stations: 6,
        ..Default::default()
    };
    let cameras = training_cameras(&scene, &cfg, 3).unwrap();
    let labels = LabelConfig {
        sampling: SamplingConfig {
            per_bin: 4,
            seed: 11,
            ..Default::default()
        },
        ..Default::default()
    };
    (scene, cameras, labels)
}

fn clusters(n: usize) -> Vec<Cluster> {
    let (scene, cameras, cfg) = setup();
    let by_id: HashMap<CameraId, Camera> = cameras.iter().map(|c| (c.id, *c)).collect();
    sample_triplets(&cameras, &scene.mesh, &cfg.sampling)
        .iter()
        .take(n)
        .enumerate()
        .map(|(i, t)| {
            let cams = t.cameras.map(|c| by_id[&c]);
            Cluster::new(
                &cams,
                oracle_mvs(&cams, &scene, &OracleModel::default(), i as u64),
                1.0,
            )
        })
        .collect()
}

#[test]
fn labels_are_byte_identical_across_runs() {
    let (scene, cameras, cfg) = setup();
    let backend = OracleBackend {
        scene: &scene,
        model: OracleModel::default(),
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let out =
            generate_labels(&cameras, &scene.mesh, &backend, &cfg, Some(&scene.mesh)).unwrap();
        assert!(out.report.positive > 0 && out.report.negative > 0);
        for img in &out.images {
            img.save(d.path()).unwrap();
        }
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let a = std::fs::read(dirs[0].path().join(&name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&name)).unwrap();
        assert!(a == b, "{name:?} differs");
    }
}

#[test]
fn appending_a_reference_never_lowers_support() {
    let all = clusters(16);
    let cfg = SupportConfig::default();
    let votes = VoteConfig::default();
    let mut grew = 0;
    for (qi, q) in all.iter().enumerate().take(6) {
        let refs: Vec<&Cluster> = all
            .iter()
            .enumerate()
            .filter(|&(i, c)| i != qi && !c.shares_camera(q))
            .map(|(_, c)| c)
            .collect();
        let mut prev = compute_support(q, &[], &cfg, &votes);
        for k in 1..=refs.len() {
            let next = compute_support(q, &refs[..k], &cfg, &votes);
            for (a, b) in prev.iter().flatten().zip(next.iter().flatten()) {
                assert!(b >= a);
                grew += (b > a) as usize;
            }
            prev = next;
        }
    }
    assert!(grew > 0);
}

#[test]
fn one_reference_never_votes_both_ways_on_a_pixel() {
    let mut all = clusters(12);
    let cfg = SupportConfig::default();
    let votes = VoteConfig::default();
    let supports: Vec<_> = (0..all.len())
        .map(|i| {
            let refs: Vec<&Cluster> = all.iter().filter(|c| !c.shares_camera(&all[i])).collect();
            compute_support(&all[i], &refs, &cfg, &votes)
        })
        .collect();
    for (c, s) in all.iter_mut().zip(supports) {
        for (g, s) in c.grids.iter_mut().zip(s) {
            g.support = s;
        }
    }
    let (mut pos, mut neg) = (0, 0);
    for q in &all {
        for r in all.iter().filter(|r| !r.shares_camera(q)) {
            for image in 0..3 {
                let tally = cast_votes(q, image, &[r], &votes);
                for (p, n) in tally.positive.iter().zip(&tally.negative) {
                    assert!(*p == 0.0 || *n == 0.0);
                    pos += (*p > 0.0) as usize;
                    neg += (*n > 0.0) as usize;
                }
            }
        }
    }
    assert!(pos > 0 && neg > 0, "{pos} {neg}");
}

#[test]
fn missing_pixels_only_where_both_meshes_show_geometry() {
    let (scene, cameras, _) = setup();
    let (shrunk, expanded) = shrink_expand_mesh(&scene.mesh);
    let model = OracleModel {
        outlier_rate: 0.0,
        ..Default::default()
    };
    let mut flagged = 0;
    for trip in cameras.chunks_exact(3).take(6) {
        let cams = [trip[0], trip[1], trip[2]];
        let depths = oracle_mvs(&cams, &scene, &model, 1);
        for (cam, depth) in cams.iter().zip(&depths) {
            let sigma = vec![0.01; depth.depths.len()];
            let missing = detect_missing(
                depth,
                &sigma,
                cam,
                &shrunk,
                &expanded,
                &AugmentConfig::default(),
            );
            let s = render_depth(cam, &shrunk, depth.downscale);
            let e = render_depth(cam, &expanded, depth.downscale);
            for (i, &m) in missing.iter().enumerate() {
                if m {
                    assert!(is_valid_depth(s.depth.depths[i]) && is_valid_depth(e.depth.depths[i]));
                    assert!(!is_valid_depth(depth.depths[i]));
                    flagged += 1;
                }
            }
        }
    }
    assert!(flagged > 0);
}
