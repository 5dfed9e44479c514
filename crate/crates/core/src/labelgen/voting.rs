use serde::{Deserialize, Serialize};

use super::support::{relate, Cluster, MeasurementGrid, Relation, VoteConfig};
use crate::geometry::Camera;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    Unlabeled = 0,
    Negative = 1,
    Positive = 2,
}

impl Label {
    pub fn from_code(code: u8) -> Option<Label> {
        match code {
            0 => Some(Label::Unlabeled),
            1 => Some(Label::Negative),
            2 => Some(Label::Positive),
            _ => None,
        }
    }
}

/// Accumulated vote weights of one query image.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTally {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl VoteTally {
    pub fn new(len: usize) -> Self {
        Self {
            positive: vec![0.0; len],
            negative: vec![0.0; len],
        }
    }
}

fn weight(grid: &MeasurementGrid, index: usize) -> f64 {
    grid.support[index] as f64 / grid.uncertainty[index].sqrt()
}

/// Nearest supported reference measurement per query pixel, projected into the query view.
struct Reprojection {
    depth: Vec<f64>,
    u: Vec<f64>,
    weight: Vec<f64>,
}

fn reproject(query: &Camera, qgrid: &MeasurementGrid, grid: &MeasurementGrid) -> Reprojection {
    let n = qgrid.points.len();
    let mut out = Reprojection {
        depth: vec![f64::INFINITY; n],
        u: vec![0.0; n],
        weight: vec![0.0; n],
    };
    for (i, p) in grid.points.iter().enumerate() {
        let Some(p) = p else { continue };
        if grid.support[i] == 0 {
            continue;
        }
        let Some(proj) = query.project_point(p) else {
            continue;
        };
        let Some(q) = qgrid.index_at(&proj.pixel) else {
            continue;
        };
        if proj.depth < out.depth[q] {
            out.depth[q] = proj.depth;
            out.u[q] = grid.uncertainty[i];
            out.weight[q] = weight(grid, i);
        }
    }
    out
}

/// Consistency votes for grid `image` of `query` from supported reference measurements.
///
/// Per reference cluster and pixel at most one vote is cast; agreement wins over
/// contradiction. A contradiction is a reference point in front of the query point on the
/// query ray, or the query point in front of a reference point on the reference ray.
pub fn cast_votes(
    query: &Cluster,
    image: usize,
    references: &[&Cluster],
    cfg: &VoteConfig,
) -> VoteTally {
    let qgrid = &query.grids[image];
    let cam = &qgrid.camera;
    let mut tally = VoteTally::new(qgrid.points.len());
    for r in references {
        let reprojections: Vec<Reprojection> =
            r.grids.iter().map(|g| reproject(cam, qgrid, g)).collect();
        for (idx, p) in qgrid.points.iter().enumerate() {
            let Some(p) = p else { continue };
            let d = qgrid.depth.depths[idx];
            let u = qgrid.uncertainty[idx];
            let mut pos: f64 = 0.0;
            let mut neg: f64 = 0.0;
            for g in &r.grids {
                match relate(cam, p, d, u, g, cfg) {
                    Relation::Agrees { index } if g.support[index] > 0 => {
                        pos = pos.max(weight(g, index))
                    }
                    Relation::QueryBlocks { index } if g.support[index] > 0 => {
                        neg = neg.max(weight(g, index))
                    }
                    _ => {}
                }
            }
            if pos == 0.0 {
                for rp in &reprojections {
                    let zr = rp.depth[idx];
                    if zr.is_finite() && zr < d - cfg.block_sigma * (u + rp.u[idx]).sqrt() {
                        neg = neg.max(rp.weight[idx]);
                    }
                }
            }
            if pos > 0.0 {
                tally.positive[idx] += pos;
            } else if neg > 0.0 {
                tally.negative[idx] += neg;
            }
        }
    }
    tally
}

/// Majority of vote weight; ties and empty tallies stay unlabeled.
pub fn label_from_votes(tally: &VoteTally) -> Vec<Label> {
    tally
        .positive
        .iter()
        .zip(&tally.negative)
        .map(|(&p, &n)| {
            if p > n {
                Label::Positive
            } else if n > p {
                Label::Negative
            } else {
                Label::Unlabeled
            }
        })
        .collect()
}
