//! Random branching vessel trees rasterised as tubes.

use std::collections::VecDeque;
use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VesselKind {
    Artery,
    Vein,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CenterPoint {
    pub row: f64,
    pub col: f64,
    pub radius: f64,
    /// Distance along the tree from the root, in pixels.
    pub path_length: f64,
}

#[derive(Clone, Debug)]
pub struct VesselTree {
    pub kind: VesselKind,
    pub root: (usize, usize),
    pub centerline: Vec<CenterPoint>,
    pub n_segments: usize,
    pub mask: Array2<bool>,
    /// Radius of the closest centreline point; 0 outside the tree.
    pub radius: Array2<f32>,
    /// Path length of the closest centreline point; +inf outside the tree.
    pub path_length: Array2<f32>,
}

struct Segment {
    row: f64,
    col: f64,
    heading: f64,
    length: f64,
    radius: f64,
    path_length: f64,
}

const STEP: f64 = 0.5;
const MIN_RADIUS: f64 = 0.9;

/// Grow and rasterise one tree. Arteries enter from the bottom edge and
/// grow upwards; veins drain towards the top edge and are grown downwards
/// from there, reaching further into the arterial territory as
/// `overlap_fraction` grows.
pub fn generate_tree(kind: VesselKind, cfg: &SynthConfig, seed: u64) -> VesselTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = cfg.size;
    let (hf, wf) = (h as f64, w as f64);
    let margin = 2.0;
    let scale = hf.min(wf) / 128.0;
    let (n_branches, root_row, heading, trunk, radius) = match kind {
        VesselKind::Artery => (
            cfg.n_artery_branches,
            hf - 1.0 - margin,
            -PI / 2.0,
            hf * rng.random_range(0.30..0.40),
            2.0 * scale.sqrt(),
        ),
        VesselKind::Vein => (
            cfg.n_vein_branches,
            margin,
            PI / 2.0,
            hf * (0.22 + 0.3 * cfg.overlap_fraction) * rng.random_range(0.9..1.1),
            2.8 * scale.sqrt(),
        ),
    };
    let root_col = (wf * rng.random_range(0.3..0.7)).round();
    let root_row = root_row.round();
    let heading = heading + rng.random_range(-0.25..0.25);

    let inside = |r: f64, c: f64| r >= margin && c >= margin && r <= hf - 1.0 - margin && c <= wf - 1.0 - margin;

    let mut centerline = Vec::new();
    let mut queue = VecDeque::new();
    queue.push_back(Segment {
        row: root_row,
        col: root_col,
        heading,
        length: trunk,
        radius,
        path_length: 0.0,
    });
    let mut n_segments = 0;
    while let Some(seg) = queue.pop_front() {
        if n_segments >= n_branches.max(1) {
            break;
        }
        n_segments += 1;
        let (mut r, mut c, mut theta, mut pl) = (seg.row, seg.col, seg.heading, seg.path_length);
        let drift = rng.random_range(-0.02..0.02);
        let n_steps = (seg.length / STEP).ceil() as usize;
        let mut completed = true;
        for i in 0..=n_steps {
            if !inside(r, c) {
                completed = false;
                break;
            }
            centerline.push(CenterPoint {
                row: r,
                col: c,
                radius: seg.radius,
                path_length: pl,
            });
            if i < n_steps {
                theta += drift + rng.random_range(-0.04..0.04);
                r += STEP * theta.sin();
                c += STEP * theta.cos();
                pl += STEP;
            }
        }
        if !completed {
            continue;
        }
        for side in [-1.0, 1.0] {
            let spread = rng.random_range(0.35..0.75);
            queue.push_back(Segment {
                row: r,
                col: c,
                heading: theta + side * spread,
                length: seg.length * rng.random_range(0.65..0.85),
                radius: (seg.radius * 0.8).max(MIN_RADIUS),
                path_length: pl,
            });
        }
    }

    let mut mask = Array2::from_elem((h, w), false);
    let mut radius_map = Array2::<f32>::zeros((h, w));
    let mut path_map = Array2::from_elem((h, w), f32::INFINITY);
    let mut best_dist = Array2::from_elem((h, w), f64::INFINITY);
    for p in &centerline {
        let reach = p.radius.ceil() as isize;
        let (pr, pc) = (p.row.round() as isize, p.col.round() as isize);
        for i in (pr - reach).max(0)..=(pr + reach).min(h as isize - 1) {
            for j in (pc - reach).max(0)..=(pc + reach).min(w as isize - 1) {
                let d = ((i as f64 - p.row).powi(2) + (j as f64 - p.col).powi(2)).sqrt();
                if d > p.radius {
                    continue;
                }
                let idx = [i as usize, j as usize];
                mask[idx] = true;
                // closest centreline point wins; ties keep the earlier (shorter path) one
                if d < best_dist[idx] {
                    best_dist[idx] = d;
                    radius_map[idx] = p.radius as f32;
                    path_map[idx] = p.path_length as f32;
                }
            }
        }
    }

    VesselTree {
        kind,
        root: (root_row as usize, root_col as usize),
        centerline,
        n_segments,
        mask,
        radius: radius_map,
        path_length: path_map,
    }
}
