//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the code under test beyond its
//! plain data types.
#![allow(dead_code)]

use std::collections::HashMap;

use mos3d::grid::{CameraPose, GridCell, ObjectId};
use mos3d::octree::{LabeledVoxel, VoxelLabel};
use mos3d::planner::{Generative, Outcome};
use rand::Rng;

pub fn cell_index(m: u32, c: &GridCell) -> usize {
    let m = m as usize;
    c.x as usize + m * (c.y as usize + m * c.z as usize)
}

pub fn all_cells(m: u32) -> Vec<GridCell> {
    let m = m as i32;
    let mut out = Vec::new();
    for z in 0..m {
        for y in 0..m {
            for x in 0..m {
                out.push(GridCell::new(x, y, z));
            }
        }
    }
    out
}

/// Dense histogram Bayes filter over all `m^3` cells.
#[derive(Clone, Debug)]
pub struct DenseBelief {
    pub m: u32,
    pub probs: Vec<f64>,
}

impl DenseBelief {
    pub fn uniform(m: u32) -> Self {
        let k = (m as usize).pow(3);
        Self {
            m,
            probs: vec![1.0 / k as f64; k],
        }
    }

    /// Multiplies each observed cell by its likelihood and renormalizes.
    pub fn update(&mut self, voxels: &[LabeledVoxel], alpha: f64, beta: f64, object: ObjectId) {
        for v in voxels {
            let w = match v.label {
                VoxelLabel::Unknown => continue,
                VoxelLabel::Object(id) if id == object => alpha,
                _ => beta,
            };
            self.probs[cell_index(self.m, &v.cell)] *= w;
        }
        let total: f64 = self.probs.iter().sum();
        for p in &mut self.probs {
            *p /= total;
        }
    }

    pub fn prob(&self, c: &GridCell) -> f64 {
        self.probs[cell_index(self.m, c)]
    }
}

/// Whether the segment from the camera cell center to `point` passes through
/// the unit cube of any occupied cell other than the camera's and `target`.
fn segment_clear(pose: &CameraPose, target: &GridCell, point: [f64; 3], occupied: &HashMap<GridCell, ()>) -> bool {
    let o = pose.position.as_array().map(|v| v as f64);
    let dir = [point[0] - o[0], point[1] - o[1], point[2] - o[2]];
    occupied.keys().all(|c| {
        if c == target || *c == pose.position {
            return true;
        }
        let lo = c.as_array().map(|v| v as f64 - 0.5);
        let hi = c.as_array().map(|v| v as f64 + 0.5);
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for i in 0..3 {
            if dir[i].abs() < 1e-12 {
                if o[i] <= lo[i] || o[i] >= hi[i] {
                    return true;
                }
            } else {
                let a = (lo[i] - o[i]) / dir[i];
                let b = (hi[i] - o[i]) / dir[i];
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        // Grazing contact along an edge or corner does not block.
        t1 - t0 <= 1e-9
    })
}

/// Visibility by casting nine rays from the camera cell center to the
/// target's center and to eight points halfway towards its corners; the cell
/// is visible when most rays are unobstructed.
pub fn ray_visible(pose: &CameraPose, target: &GridCell, occupied: &HashMap<GridCell, ()>) -> bool {
    let t = target.as_array().map(|v| v as f64);
    let mut points = vec![t];
    for dx in [-0.25, 0.25] {
        for dy in [-0.25, 0.25] {
            for dz in [-0.25, 0.25] {
                points.push([t[0] + dx, t[1] + dy, t[2] + dz]);
            }
        }
    }
    let clear = points.into_iter().filter(|p| segment_clear(pose, target, *p, occupied)).count();
    clear >= 5
}

/// A two-cell search problem. The object is in cell 0 or 1; the agent can
/// listen (noisy report of the cell) or commit to a cell, which ends the
/// episode.
#[derive(Clone, Copy, Debug)]
pub struct TwoCell {
    pub prior0: f64,
    pub accuracy: f64,
    pub listen_cost: f64,
    pub hit: f64,
    pub miss: f64,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TwoCellAction {
    Listen,
    Commit(u8),
}

impl Generative for TwoCell {
    type State = u8;
    type Action = TwoCellAction;
    type Obs = u8;

    fn actions(&self, _: &u8) -> Vec<TwoCellAction> {
        vec![TwoCellAction::Commit(0), TwoCellAction::Commit(1), TwoCellAction::Listen]
    }

    fn step<R: Rng + ?Sized>(&self, s: &u8, a: &TwoCellAction, rng: &mut R) -> Outcome<u8, u8> {
        match a {
            TwoCellAction::Listen => {
                let correct = rng.gen::<f64>() < self.accuracy;
                Outcome {
                    state: *s,
                    obs: if correct { *s } else { 1 - *s },
                    reward: -self.listen_cost,
                    steps: 1,
                    terminal: false,
                }
            }
            TwoCellAction::Commit(c) => Outcome {
                state: *s,
                obs: 2,
                reward: if c == s { self.hit } else { self.miss },
                steps: 1,
                terminal: true,
            },
        }
    }

    fn is_terminal(&self, _: &u8) -> bool {
        false
    }
}

impl TwoCell {
    /// Exact optimal value of belief `p0` with `horizon` actions left.
    pub fn value(&self, p0: f64, horizon: usize) -> f64 {
        if horizon == 0 {
            return 0.0;
        }
        self.q_values(p0, horizon).into_iter().map(|(_, q)| q).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn q_values(&self, p0: f64, horizon: usize) -> Vec<(TwoCellAction, f64)> {
        let commit = |c: u8| {
            let p = if c == 0 { p0 } else { 1.0 - p0 };
            p * self.hit + (1.0 - p) * self.miss
        };
        let a = self.accuracy;
        let p_obs0 = p0 * a + (1.0 - p0) * (1.0 - a);
        let post0 = p0 * a / p_obs0;
        let post1 = p0 * (1.0 - a) / (1.0 - p_obs0);
        let listen = -self.listen_cost
            + self.gamma * (p_obs0 * self.value(post0, horizon - 1) + (1.0 - p_obs0) * self.value(post1, horizon - 1));
        vec![
            (TwoCellAction::Commit(0), commit(0)),
            (TwoCellAction::Commit(1), commit(1)),
            (TwoCellAction::Listen, listen),
        ]
    }

    pub fn optimal_action(&self, horizon: usize) -> TwoCellAction {
        let q = self.q_values(self.prior0, horizon);
        q.iter()
            .copied()
            .fold(q[0], |best, x| if x.1 > best.1 { x } else { best })
            .0
    }
}

/// Half-width of a percentile-bootstrap 95% interval for the mean.
pub fn bootstrap_ci95<R: Rng>(values: &[f64], resamples: usize, rng: &mut R) -> f64 {
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let lo = means[(0.025 * resamples as f64) as usize];
    let hi = means[(0.975 * resamples as f64) as usize];
    (hi - lo) / 2.0
}

/// Total variation distance between two distributions on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0
}
