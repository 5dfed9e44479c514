//! The closed acquisition loop: plan, fly, run the oracle, refresh, repeat.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::grid::grid_plan;
use super::oracle::{any_output, oracle_mvs, OracleModel};
use super::scene::SyntheticScene;
use crate::confidence::{predict_grid, ConfidenceForest, ConfidenceImage};
use crate::geometry::io::CameraRecord;
use crate::geometry::{Camera, CameraId, DepthMap, FaceId, TriangleMesh};
use crate::planner::{
    optimize_path, plan_views, PathConfig, PlannerConfig, Snapshot, ViewPlan, ViewRole,
};
use crate::{Error, Result};

/// Planner-driven part of a strategy: `iterations` planning calls of `per_call` triplets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedRuns {
    pub iterations: usize,
    pub per_call: usize,
    /// Use predicted MVS confidence; off gives the confidence-free planner.
    pub confidence: bool,
}

/// Acquisition strategy, written as `F5x4` (5 iterations of 4 triplets), `F1x20` (all at
/// once, no refresh), `NP5x4` (no confidence), `grid`, or `grid+F5x4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub grid: bool,
    pub planned: Option<PlannedRuns>,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown strategy {s:?}"));
        let (grid, rest) = match s.to_ascii_lowercase().as_str() {
            "grid" | "g" => {
                return Ok(Strategy {
                    grid: true,
                    planned: None,
                })
            }
            lower => match lower.split_once('+') {
                Some(("grid" | "g", _)) => (true, &s[s.find('+').unwrap() + 1..]),
                Some(_) => return Err(bad()),
                None => (false, s),
            },
        };
        let upper = rest.to_ascii_uppercase();
        let (confidence, counts) = if let Some(c) = upper.strip_prefix("NP") {
            (false, c)
        } else if let Some(c) = upper.strip_prefix('F') {
            (true, c)
        } else {
            return Err(bad());
        };
        let (a, b) = counts.split_once('X').ok_or_else(bad)?;
        let iterations: usize = a.parse().map_err(|_| bad())?;
        let per_call: usize = b.parse().map_err(|_| bad())?;
        if iterations == 0 || per_call == 0 {
            return Err(bad());
        }
        Ok(Strategy {
            grid,
            planned: Some(PlannedRuns {
                iterations,
                per_call,
                confidence,
            }),
        })
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.grid, self.planned) {
            (true, None) => write!(f, "grid"),
            (false, None) => write!(f, "init"),
            (grid, Some(p)) => {
                if grid {
                    write!(f, "grid+")?;
                }
                let tag = if p.confidence { "F" } else { "NP" };
                write!(f, "{tag}{}x{}", p.iterations, p.per_call)
            }
        }
    }
}

/// Nadir grid parameters: height above the region's lowest point and image overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub height: f64,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    pub planner: PlannerConfig,
    pub oracle: OracleModel,
    /// High initialization grid flown by every strategy.
    pub init: GridSpec,
    /// Dense grid of the grid baseline.
    pub baseline: GridSpec,
    /// Grid step of predicted confidence images, px.
    pub confidence_step: u32,
}

impl Default for AcquisitionConfig {
    /// Desk-scale setup for the synthetic presets (scene about 4 m across, 160x120 images).
    fn default() -> Self {
        let camera = crate::geometry::CameraIntrinsics::from_horizontal_fov(60.0, 160, 120)
            .expect("valid camera");
        Self {
            planner: PlannerConfig {
                desired_resolution: 1.0 / (0.01 * 0.01),
                desired_accuracy: 0.01,
                fulfillment_samples: 600,
                surrogate_samples: 1500,
                target_samples: 100,
                safety_distance: 0.25,
                voxel_resolution: 0.05,
                camera,
                horizontal_margin: 1.0,
                vertical_margin: 2.0,
                ..PlannerConfig::default()
            },
            oracle: OracleModel::default(),
            init: GridSpec {
                height: 5.0,
                overlap: 0.8,
            },
            baseline: GridSpec {
                height: 2.5,
                overlap: 0.8,
            },
            confidence_step: 8,
        }
    }
}

/// One oracle run on a captured triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureRecord {
    pub iteration: usize,
    /// Member ids in capture order.
    pub cameras: [u32; 3],
    /// Planned by the view planner, as opposed to a survey triplet.
    pub planned: bool,
    /// Any 3D output produced.
    pub success: bool,
    pub valid_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 0 is the initialization flight, then the grid (when flown), then planning calls.
    pub iteration: usize,
    pub label: String,
    pub views: Vec<CameraRecord>,
    pub roles: Vec<ViewRole>,
    pub triplets: Vec<[u32; 3]>,
    pub path_m: f64,
    pub seconds: f64,
    /// Planned triplets left out because no registration chain reached them.
    #[serde(default)]
    pub dropped: usize,
}

/// Everything an acquisition run did, in order. Oracle outputs are kept in memory and can
/// be regenerated from the cameras and seed with [`AcquisitionLog::replay`].
#[derive(Debug, Clone)]
pub struct AcquisitionLog {
    pub strategy: String,
    pub preset: String,
    pub scene_seed: u64,
    pub seed: u64,
    pub oracle: OracleModel,
    /// Captured cameras in flight order.
    pub cameras: Vec<Camera>,
    pub iterations: Vec<IterationRecord>,
    pub captures: Vec<CaptureRecord>,
    /// Oracle depthmaps, parallel to `captures`.
    pub outputs: Vec<[DepthMap; 3]>,
    pub seconds: f64,
}

/// One line of the JSON-lines log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Start {
        strategy: String,
        preset: String,
        scene_seed: u64,
        seed: u64,
        oracle: OracleModel,
    },
    Iteration(IterationRecord),
    Capture(CaptureRecord),
    End {
        images: usize,
        triplets: usize,
        success_rate: Option<f64>,
        seconds: f64,
    },
}

impl AcquisitionLog {
    fn new(strategy: &Strategy, scene: &SyntheticScene, oracle: &OracleModel, seed: u64) -> Self {
        Self {
            strategy: strategy.to_string(),
            preset: scene.preset.clone(),
            scene_seed: scene.seed,
            seed,
            oracle: oracle.clone(),
            cameras: Vec::new(),
            iterations: Vec::new(),
            captures: Vec::new(),
            outputs: Vec::new(),
            seconds: 0.0,
        }
    }

    /// Share of planned triplets that produced any output.
    pub fn success_rate(&self) -> Option<f64> {
        let planned: Vec<&CaptureRecord> = self.captures.iter().filter(|c| c.planned).collect();
        (!planned.is_empty())
            .then(|| planned.iter().filter(|c| c.success).count() as f64 / planned.len() as f64)
    }

    /// The log as events. Without timings, two runs with the same seed give equal events.
    pub fn events(&self, with_timings: bool) -> Vec<LogEvent> {
        let mut events = vec![LogEvent::Start {
            strategy: self.strategy.clone(),
            preset: self.preset.clone(),
            scene_seed: self.scene_seed,
            seed: self.seed,
            oracle: self.oracle.clone(),
        }];
        for it in &self.iterations {
            let mut it = it.clone();
            if !with_timings {
                it.seconds = 0.0;
            }
            let index = it.iteration;
            events.push(LogEvent::Iteration(it));
            events.extend(
                self.captures
                    .iter()
                    .filter(|c| c.iteration == index)
                    .cloned()
                    .map(LogEvent::Capture),
            );
        }
        events.push(LogEvent::End {
            images: self.cameras.len(),
            triplets: self.captures.len(),
            success_rate: self.success_rate(),
            seconds: if with_timings { self.seconds } else { 0.0 },
        });
        events
    }

    pub fn write_jsonl(&self, out: &mut impl Write) -> Result<()> {
        for e in self.events(true) {
            serde_json::to_writer(&mut *out, &e)?;
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut f)?;
        f.flush()?;
        Ok(())
    }

    /// Reads a JSON-lines log. Oracle outputs are not stored; call [`Self::replay`].
    pub fn read_jsonl(input: impl BufRead) -> Result<Self> {
        let mut log: Option<Self> = None;
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event: LogEvent = serde_json::from_str(&line)
                .map_err(|e| Error::parse("acquisition log", format!("line {}: {e}", n + 1)))?;
            match (event, log.as_mut()) {
                (
                    LogEvent::Start {
                        strategy,
                        preset,
                        scene_seed,
                        seed,
                        oracle,
                    },
                    None,
                ) => {
                    log = Some(Self {
                        strategy,
                        preset,
                        scene_seed,
                        seed,
                        oracle,
                        cameras: Vec::new(),
                        iterations: Vec::new(),
                        captures: Vec::new(),
                        outputs: Vec::new(),
                        seconds: 0.0,
                    })
                }
                (LogEvent::Iteration(it), Some(l)) => {
                    for v in &it.views {
                        l.cameras.push(Camera::try_from(v)?);
                    }
                    l.iterations.push(it);
                }
                (LogEvent::Capture(c), Some(l)) => l.captures.push(c),
                (LogEvent::End { seconds, .. }, Some(l)) => l.seconds = seconds,
                _ => {
                    return Err(Error::parse(
                        "acquisition log",
                        format!("line {}: unexpected event", n + 1),
                    ))
                }
            }
        }
        log.ok_or_else(|| Error::parse("acquisition log", "no start event"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Regenerates the oracle outputs; the oracle is a pure function of cameras and seed.
    pub fn replay(&mut self, scene: &SyntheticScene) -> Result<()> {
        let by_id: BTreeMap<u32, Camera> = self.cameras.iter().map(|c| (c.id.0, *c)).collect();
        self.outputs = self
            .captures
            .iter()
            .map(|c| {
                let cams = c.cameras.map(|id| {
                    by_id
                        .get(&id)
                        .copied()
                        .ok_or(Error::InvalidCamera(format!("camera {id} not logged")))
                });
                let [a, b, d] = cams;
                Ok(oracle_mvs(&[a?, b?, d?], scene, &self.oracle, self.seed))
            })
            .collect::<Result<_>>()?;
        Ok(())
    }
}

/// Running state of one acquisition.
struct Flight<'a> {
    scene: &'a SyntheticScene,
    cfg: &'a AcquisitionConfig,
    forest: Option<&'a ConfidenceForest>,
    log: AcquisitionLog,
    confidences: Vec<ConfidenceImage>,
}

impl Flight<'_> {
    fn next_id(&self) -> u32 {
        self.log
            .cameras
            .iter()
            .map(|c| c.id.0 + 1)
            .max()
            .unwrap_or(0)
    }

    /// Appends the plan's cameras, predicts their confidence and runs the oracle on its
    /// triplets.
    fn execute(&mut self, label: &str, plan: &ViewPlan, planned: bool, seconds: f64) {
        let iteration = self.log.iterations.len();
        for v in &plan.views {
            self.log.cameras.push(v.camera);
            if let Some(forest) = self.forest {
                let lab = self.scene.render_color(&v.camera).to_lab();
                self.confidences.push(predict_grid(
                    forest,
                    &lab,
                    v.camera.id,
                    self.cfg.confidence_step,
                ));
            }
        }
        let by_id: BTreeMap<CameraId, Camera> =
            plan.views.iter().map(|v| (v.camera.id, v.camera)).collect();
        for t in &plan.triplets {
            let cams = t.map(|id| by_id[&id]);
            let out = oracle_mvs(&cams, self.scene, &self.cfg.oracle, self.log.seed);
            let valid_pixels = out.iter().map(|d| d.valid_count()).sum();
            self.log.captures.push(CaptureRecord {
                iteration,
                cameras: t.map(|c| c.0),
                planned,
                success: any_output(&out),
                valid_pixels,
            });
            self.log.outputs.push(out);
        }
        self.log.iterations.push(IterationRecord {
            iteration,
            label: label.to_string(),
            views: plan
                .views
                .iter()
                .map(|v| CameraRecord::from(&v.camera))
                .collect(),
            roles: plan.views.iter().map(|v| v.role).collect(),
            triplets: plan.triplets.iter().map(|t| t.map(|c| c.0)).collect(),
            path_m: plan.total_path_m,
            seconds,
            dropped: 0,
        });
    }
}

/// Bounding box of the region faces.
pub fn roi_bounds(mesh: &TriangleMesh, roi: &[FaceId]) -> (Point3<f64>, Point3<f64>) {
    let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &f in roi {
        for v in mesh.face_vertices(f) {
            lo = lo.inf(&v);
            hi = hi.sup(&v);
        }
    }
    (lo, hi)
}

/// Runs one strategy on a scene. Every strategy starts with the initialization grid; the
/// grid baseline adds the dense grid; planned strategies then alternate planning calls
/// and captures, refreshing cameras and confidence images between calls.
pub fn run_acquisition(
    strategy: &Strategy,
    scene: &SyntheticScene,
    forest: Option<&ConfidenceForest>,
    cfg: &AcquisitionConfig,
    seed: u64,
) -> Result<AcquisitionLog> {
    cfg.oracle.validate()?;
    let start = Instant::now();
    let wants_forest = strategy.planned.is_some_and(|p| p.confidence);
    if wants_forest && forest.is_none() {
        return Err(Error::Config(format!(
            "strategy {strategy} needs a trained forest"
        )));
    }
    let mut flight = Flight {
        scene,
        cfg,
        forest: if wants_forest { forest } else { None },
        log: AcquisitionLog::new(strategy, scene, &cfg.oracle, seed),
        confidences: Vec::new(),
    };
    let bounds = roi_bounds(&scene.mesh, &scene.roi);
    let camera = cfg.planner.camera;

    let init = grid_plan(bounds, cfg.init.overlap, cfg.init.height, &camera, 0)?;
    flight.execute("init", &init, false, 0.0);
    if strategy.grid {
        let grid = grid_plan(
            bounds,
            cfg.baseline.overlap,
            cfg.baseline.height,
            &camera,
            flight.next_id(),
        )?;
        flight.execute("grid", &grid, false, 0.0);
    }

    if let Some(runs) = strategy.planned {
        let mut pcfg = cfg.planner.clone();
        pcfg.triplets_per_call = runs.per_call;
        pcfg.use_confidence = runs.confidence;
        let path_cfg = PathConfig {
            min_overlap: pcfg.min_overlap,
            max_insertions: pcfg.max_insertions,
            safety_distance: pcfg.safety_distance,
        };
        for it in 0..runs.iterations {
            let t0 = Instant::now();
            let snapshot = Snapshot {
                cameras: &flight.log.cameras,
                mesh: &scene.mesh,
                roi: &scene.roi,
                confidences: &flight.confidences,
            };
            let call_seed = seed.wrapping_mul(1_000_003).wrapping_add(it as u64);
            let outcome = plan_views(&snapshot, &pcfg, call_seed)?;
            if outcome.triplets.is_empty() {
                info!("{strategy}: nothing left to plan after {it} calls");
                break;
            }
            // Triplets whose cameras cannot be chained to the flown ones are not flown.
            let mut triplets = outcome.triplets;
            let mut dropped = 0;
            let plan = loop {
                match optimize_path(
                    &triplets,
                    &flight.log.cameras,
                    &outcome.mesh,
                    Some(&outcome.field),
                    &path_cfg,
                ) {
                    Ok(plan) => break Some(plan),
                    Err(Error::ChainImpossible(id)) => {
                        warn!("{strategy}: call {it} drops a triplet, camera {id} cannot be registered");
                        triplets.retain(|t| t.cameras.iter().all(|c| c.id != id));
                        dropped += 1;
                        if triplets.is_empty() {
                            break None;
                        }
                    }
                    Err(e) => return Err(e),
                }
            };
            let Some(plan) = plan else { continue };
            let seconds = t0.elapsed().as_secs_f64();
            info!(
                "{strategy}: call {it} planned {} triplets ({} views) in {seconds:.2}s",
                plan.triplets.len(),
                plan.views.len()
            );
            flight.execute(&format!("plan {it}"), &plan, true, seconds);
            if let Some(last) = flight.log.iterations.last_mut() {
                last.dropped = dropped;
            }
        }
    }
    flight.log.seconds = start.elapsed().as_secs_f64();
    Ok(flight.log)
}
