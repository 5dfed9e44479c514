//! `viewforge`: scenes, label generation, forest training, confidence prediction, view
//! planning and simulated acquisition from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::de::DeserializeOwned;

use viewforge::confidence::{
    extract_samples, predict_grid, train_forest, ConfidenceForest, ConfidenceImage, ForestConfig,
    RgbImage,
};
use viewforge::geometry::io::{load_cameras, load_ply, save_cameras};
use viewforge::geometry::{Camera, CameraId, TriangleMesh};
use viewforge::harness::{
    build_scene, evaluate_metrics, run_acquisition, train_scene_forest, training_cameras,
    AcquisitionConfig, AcquisitionLog, EvaluationConfig, OracleBackend, OracleModel, Strategy,
    SyntheticScene, Texture, TrainingConfig,
};
use viewforge::labelgen::{generate_labels, LabelConfig, LabelImage, MvsBackend, RecordedBackend};
use viewforge::planner::{
    optimize_path, plan_views, PathConfig, PlanFile, PlannerConfig, RoiFile, Snapshot, SnapshotFile,
};
use viewforge::{Error, Result};

#[derive(Parser)]
#[command(
    name = "viewforge",
    version,
    about = "Confidence-aware view planning for MVS acquisition"
)]
struct Cli {
    /// Log progress to stderr (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    /// Synthetic MVS on the mesh; needs per-face materials.
    Oracle,
    /// Depthmaps stored under `--recorded`.
    Recorded,
}

#[derive(Subcommand)]
enum Command {
    /// Build a synthetic scene preset; writes mesh.ply, scene.json and cameras.json
    /// holding seeded training views.
    Scene {
        #[arg(long, default_value = "rock")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate training labels from camera triplets.
    Genlabels {
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, value_enum, default_value = "oracle")]
        backend: Backend,
        /// Root of stored depthmaps for the recorded backend.
        #[arg(long)]
        recorded: Option<PathBuf>,
        /// Number of doubling angle bins.
        #[arg(long, default_value_t = 5)]
        bins: usize,
        /// Lower edge of the first angle bin, degrees.
        #[arg(long, default_value_t = 4.0)]
        alpha0: f64,
        /// Triplets drawn per angle bin.
        #[arg(long)]
        per_bin: Option<usize>,
        /// Label generation settings (JSON); flags above override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Oracle settings (JSON).
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a confidence forest on labels and color images.
    Train {
        #[arg(long)]
        labels: PathBuf,
        /// Directory of `image_<id>.png`; defaults to `<labels>/images`.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Forest settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training samples per class.
        #[arg(long, default_value_t = 12000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict per-bin confidence grids for color images.
    Predict {
        #[arg(long)]
        forest: PathBuf,
        /// Directory of `image_<id>.png`.
        #[arg(long)]
        images: PathBuf,
        #[arg(long, default_value_t = 8)]
        step: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan camera triplets for a snapshot and region of interest.
    Plan {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        roi: PathBuf,
        /// Without a forest the planner ignores MVS confidence.
        #[arg(long)]
        forest: Option<PathBuf>,
        /// Color images to predict confidence from when the snapshot has none.
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        step: u32,
        /// Triplets to plan.
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Planner settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fly one strategy on a synthetic scene and evaluate it.
    Simulate {
        /// `grid`, `F5x4`, `F1x20`, `NP5x4`, `grid+F5x4`, ...
        #[arg(long)]
        strategy: String,
        #[arg(long, default_value = "rock")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        scene_seed: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trained forest; confidence strategies train one on the fly without it.
        #[arg(long)]
        forest: Option<PathBuf>,
        /// Settings for on-the-fly training (JSON).
        #[arg(long)]
        training_config: Option<PathBuf>,
        /// Scene preset and seed for on-the-fly training.
        #[arg(long, default_value_t = 7)]
        training_scene_seed: u64,
        /// Acquisition settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Evaluation settings (JSON).
        #[arg(long)]
        evaluation_config: Option<PathBuf>,
        /// Writes log.jsonl, metrics.json and histogram.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate a logged acquisition and evaluate it.
    Evaluate {
        #[arg(long)]
        log: PathBuf,
        /// Evaluation settings (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Writes metrics.json and histogram.csv.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("viewforge error: {}: {msg}", e.kind());
            ExitCode::from(1)
        }
    }
}

fn read_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn image_path(dir: &Path, id: CameraId) -> PathBuf {
    dir.join(format!("image_{id}.png"))
}

/// `image_<id>.png` files in `dir`, sorted by id.
fn list_images(dir: &Path) -> Result<Vec<(CameraId, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let id = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("image_")?.strip_suffix(".png")?.parse().ok());
        if let Some(id) = id {
            out.push((CameraId(id), path));
        }
    }
    out.sort();
    Ok(out)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Scene { preset, seed, out } => {
            let scene = build_scene(&preset, seed)?;
            scene.save(&out)?;
            let views = training_cameras(&scene, &TrainingConfig::default(), seed)?;
            save_cameras(&views, &out.join("cameras.json"))?;
            info!(
                "{preset} scene: {} faces, {} in the region",
                scene.mesh.face_count(),
                scene.roi.len()
            );
            Ok(())
        }
        Command::Genlabels {
            cameras,
            mesh,
            backend,
            recorded,
            bins,
            alpha0,
            per_bin,
            config,
            oracle,
            seed,
            out,
        } => {
            let cameras = load_cameras(&cameras)?;
            let mesh = load_ply(&mesh)?;
            let mut cfg: LabelConfig = read_json(config.as_deref())?;
            cfg.sampling.bins.count = bins;
            cfg.sampling.bins.alpha0_deg = alpha0;
            if let Some(n) = per_bin {
                cfg.sampling.per_bin = n;
            }
            cfg.sampling.seed = seed;
            let output = match backend {
                Backend::Oracle => {
                    let scene = mesh_scene(mesh, &cameras, seed)?;
                    let model: OracleModel = read_json(oracle.as_deref())?;
                    model.validate()?;
                    let backend = OracleBackend {
                        scene: &scene,
                        model,
                    };
                    let output =
                        label_with(&cameras, &scene.mesh, &backend, &cfg, Some(&scene.mesh))?;
                    let images = out.join("images");
                    std::fs::create_dir_all(&images)?;
                    for l in &output {
                        let cam = cameras
                            .iter()
                            .find(|c| c.id == l.image)
                            .expect("labeled camera");
                        scene
                            .render_color(cam)
                            .save(&image_path(&images, l.image))?;
                    }
                    output
                }
                Backend::Recorded => {
                    let root = recorded.ok_or_else(|| {
                        Error::Config("--backend recorded needs --recorded DIR".into())
                    })?;
                    label_with(&cameras, &mesh, &RecordedBackend::new(root), &cfg, None)?
                }
            };
            for l in &output {
                l.save(&out)?;
            }
            Ok(())
        }
        Command::Train {
            labels,
            images,
            config,
            samples,
            seed,
            out,
        } => {
            let cfg: ForestConfig = read_json(config.as_deref())?;
            let label_images = LabelImage::load_dir(&labels)?;
            let dir = images.unwrap_or_else(|| labels.join("images"));
            let colors = label_images
                .iter()
                .map(|l| Ok(RgbImage::load(&image_path(&dir, l.image))?.to_lab()))
                .collect::<Result<Vec<_>>>()?;
            let samples = extract_samples(&colors, &label_images, samples, seed)?;
            info!(
                "training on {} samples from {} images",
                samples.len(),
                colors.len()
            );
            let forest = train_forest(&colors, &samples, &cfg, seed)?;
            forest.save(&out)
        }
        Command::Predict {
            forest,
            images,
            step,
            out,
        } => {
            let forest = ConfidenceForest::load(&forest)?;
            for c in predict_dir(&forest, &images, step)? {
                c.save(&out)?;
            }
            Ok(())
        }
        Command::Plan {
            snapshot,
            roi,
            forest,
            images,
            step,
            k,
            config,
            seed,
            out,
        } => {
            let loaded = SnapshotFile::load(&snapshot)?;
            let roi = RoiFile::load(&roi)?.faces(&loaded.mesh, &loaded.cameras)?;
            let mut cfg: PlannerConfig = read_json(config.as_deref())?;
            cfg.triplets_per_call = k;
            cfg.use_confidence = forest.is_some();
            let mut confidences = loaded.confidences;
            if let Some(path) = &forest {
                if confidences.is_empty() {
                    let dir = images.ok_or_else(|| {
                        Error::Config(
                            "the snapshot has no confidence images; pass --images to predict them"
                                .into(),
                        )
                    })?;
                    confidences = predict_dir(&ConfidenceForest::load(path)?, &dir, step)?;
                }
            }
            let snap = Snapshot {
                cameras: &loaded.cameras,
                mesh: &loaded.mesh,
                roi: &roi,
                confidences: &confidences,
            };
            let outcome = plan_views(&snap, &cfg, seed)?;
            let path_cfg = PathConfig {
                min_overlap: cfg.min_overlap,
                max_insertions: cfg.max_insertions,
                safety_distance: cfg.safety_distance,
            };
            let plan = optimize_path(
                &outcome.triplets,
                &loaded.cameras,
                &outcome.mesh,
                Some(&outcome.field),
                &path_cfg,
            )?;
            info!(
                "planned {} triplets, {} views, {:.1} m path",
                plan.triplets.len(),
                plan.views.len(),
                plan.total_path_m
            );
            PlanFile::new(&plan, &cfg, seed).save(&out)
        }
        Command::Simulate {
            strategy,
            preset,
            scene_seed,
            seed,
            forest,
            training_config,
            training_scene_seed,
            config,
            evaluation_config,
            out,
        } => {
            let strategy: Strategy = strategy.parse()?;
            let cfg: AcquisitionConfig = read_json(config.as_deref())?;
            let eval: EvaluationConfig = read_json(evaluation_config.as_deref())?;
            let scene = build_scene(&preset, scene_seed)?;
            std::fs::create_dir_all(&out)?;
            let wants_forest = strategy.planned.is_some_and(|p| p.confidence);
            let forest = match (forest, wants_forest) {
                (Some(path), _) => Some(ConfidenceForest::load(&path)?),
                (None, true) => {
                    let tcfg: TrainingConfig = read_json(training_config.as_deref())?;
                    let training_scene = build_scene(&preset, training_scene_seed)?;
                    info!("training a forest on {preset} seed {training_scene_seed}");
                    let run = train_scene_forest(&training_scene, &tcfg, seed)?;
                    run.forest.save(&out.join("forest.bin"))?;
                    Some(run.forest)
                }
                (None, false) => None,
            };
            let log = run_acquisition(&strategy, &scene, forest.as_ref(), &cfg, seed)?;
            log.save(&out.join("log.jsonl"))?;
            let metrics = evaluate_metrics(&log, &scene, &eval)?;
            metrics.save_json(&out.join("metrics.json"))?;
            metrics.histogram.save_csv(&out.join("histogram.csv"))
        }
        Command::Evaluate { log, config, out } => {
            let eval: EvaluationConfig = read_json(config.as_deref())?;
            let mut log = AcquisitionLog::load(&log)?;
            let scene = build_scene(&log.preset, log.scene_seed)?;
            log.replay(&scene)?;
            let metrics = evaluate_metrics(&log, &scene, &eval)?;
            std::fs::create_dir_all(&out)?;
            metrics.save_json(&out.join("metrics.json"))?;
            metrics.histogram.save_csv(&out.join("histogram.csv"))
        }
    }
}

/// Wraps a loaded mesh as a scene for the oracle: every face is in the region.
fn mesh_scene(mesh: TriangleMesh, cameras: &[Camera], seed: u64) -> Result<SyntheticScene> {
    if mesh.materials.is_none() {
        return Err(Error::InvalidMesh(
            "the oracle backend needs per-face materials".into(),
        ));
    }
    let camera = cameras
        .first()
        .ok_or_else(|| Error::Config("no cameras".into()))?
        .intrinsics;
    Ok(SyntheticScene {
        preset: "mesh".into(),
        seed,
        roi: (0..mesh.face_count() as u32).collect(),
        mesh,
        texture: Texture { seed },
        camera,
    })
}

fn label_with(
    cameras: &[Camera],
    mesh: &TriangleMesh,
    backend: &dyn MvsBackend,
    cfg: &LabelConfig,
    truth: Option<&TriangleMesh>,
) -> Result<Vec<LabelImage>> {
    let output = generate_labels(cameras, mesh, backend, cfg, truth)?;
    let r = &output.report;
    info!(
        "{} of {} triplets used; {} positive, {} negative labels; density {:.3}",
        r.triplets_used, r.triplets_sampled, r.positive, r.negative, r.density
    );
    if let Some(a) = r.accuracy {
        info!("label accuracy against the mesh {a:.3}");
    }
    Ok(output.images)
}

fn predict_dir(forest: &ConfidenceForest, dir: &Path, step: u32) -> Result<Vec<ConfidenceImage>> {
    list_images(dir)?
        .into_iter()
        .map(|(id, path)| {
            Ok(predict_grid(
                forest,
                &RgbImage::load(&path)?.to_lab(),
                id,
                step,
            ))
        })
        .collect()
}
