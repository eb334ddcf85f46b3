//! Per-object belief over the object's cell, stored as a lazily materialized
//! octree of unnormalized values plus a global normalizer.
//!
//! A node at level `l` stores the sum of the values of the ground cells it
//! covers. Subtrees that were never touched by an observation are not stored;
//! an absent level-`l` node has the default value `8^l * default_ground_value`.
//! The probability of a cell at any level is its value divided by the
//! normalizer, and sampling descends from the root choosing one of eight
//! children proportionally to their values.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellAtLevel, GridCell, ObjectId};

/// Normalizer bounds outside which all values are rescaled.
const RESCALE_ABOVE: f64 = 1e100;
const RESCALE_BELOW: f64 = 1e-100;

/// Label assigned to an observed voxel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VoxelLabel {
    Object(ObjectId),
    Free,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledVoxel {
    pub cell: GridCell,
    pub label: VoxelLabel,
}

impl LabeledVoxel {
    pub fn new(cell: GridCell, label: VoxelLabel) -> Self {
        Self { cell, label }
    }
}

const NONE: u32 = 0;

#[derive(Clone, Debug)]
struct Node {
    value: f64,
    /// Arena indices; `NONE` marks an absent (default-valued) child. The root
    /// lives at index 0 so it can never be anybody's child.
    children: [u32; 8],
}

#[derive(Clone, Debug)]
pub struct OctreeBelief {
    m: u32,
    max_level: u8,
    nodes: Vec<Node>,
    normalizer: f64,
    default_ground_value: f64,
}

impl OctreeBelief {
    /// Uniform belief over an `m^3` grid.
    pub fn new_uniform(m: u32) -> Result<Self> {
        if m < 2 || !m.is_power_of_two() {
            return Err(Error::InvalidGridSize(m));
        }
        let max_level = m.trailing_zeros() as u8;
        let total = (m as f64).powi(3);
        Ok(Self {
            m,
            max_level,
            nodes: vec![Node {
                value: total,
                children: [NONE; 8],
            }],
            normalizer: total,
            default_ground_value: 1.0,
        })
    }

    /// Belief whose listed ground cells start with the given unnormalized
    /// values; unlisted cells keep the default value 1.
    pub fn with_prior(m: u32, prior: &[(GridCell, f64)]) -> Result<Self> {
        let mut b = Self::new_uniform(m)?;
        for &(cell, value) in prior {
            if !cell.in_bounds(m) {
                return Err(Error::OutOfBounds(cell, m));
            }
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::InvalidConfig(format!("prior value {value} at {cell}")));
            }
            b.set_ground_value(cell, value);
        }
        if b.normalizer <= 0.0 {
            return Err(Error::BeliefCollapsed);
        }
        b.maybe_rescale();
        Ok(b)
    }

    pub fn grid_size(&self) -> u32 {
        self.m
    }

    pub fn max_level(&self) -> u8 {
        self.max_level
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn default_ground_value(&self) -> f64 {
        self.default_ground_value
    }

    /// Number of stored nodes, including the root.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn default_value(&self, level: u8) -> f64 {
        self.default_ground_value * (1u64 << (3 * level as u32)) as f64
    }

    fn check_cell(&self, cell: &CellAtLevel) -> Result<()> {
        if cell.level > self.max_level {
            return Err(Error::LevelTooDeep(cell.level, self.max_level));
        }
        if !cell.in_bounds(self.m) {
            return Err(Error::LevelOutOfBounds(*cell));
        }
        Ok(())
    }

    /// Which of the 8 children of a level-`node_level` node contains `cell`.
    fn child_slot(cell: &CellAtLevel, node_level: u8) -> usize {
        let shift = node_level - 1 - cell.level;
        (((cell.x >> shift) & 1) | (((cell.y >> shift) & 1) << 1) | (((cell.z >> shift) & 1) << 2)) as usize
    }

    /// Stored value of `cell`, falling back to defaults below the deepest
    /// stored ancestor. Never allocates.
    pub fn value_at(&self, cell: &CellAtLevel) -> Result<f64> {
        self.check_cell(cell)?;
        let mut idx = 0usize;
        let mut level = self.max_level;
        while level > cell.level {
            let child = self.nodes[idx].children[Self::child_slot(cell, level)];
            if child == NONE {
                return Ok(self.default_value(cell.level));
            }
            idx = child as usize;
            level -= 1;
        }
        Ok(self.nodes[idx].value)
    }

    pub fn prob_at(&self, cell: &CellAtLevel) -> Result<f64> {
        Ok(self.value_at(cell)? / self.normalizer)
    }

    pub fn prob_at_ground(&self, cell: &GridCell) -> Result<f64> {
        self.prob_at(&CellAtLevel::ground(*cell))
    }

    /// Sets a ground value, materializing the path to it and re-aggregating
    /// ancestors. Returns the previous value.
    fn set_ground_value(&mut self, cell: GridCell, new_value: f64) -> f64 {
        let target = CellAtLevel::ground(cell);
        let mut path = Vec::with_capacity(self.max_level as usize + 1);
        let mut idx = 0usize;
        let mut level = self.max_level;
        path.push(idx);
        while level > 0 {
            let slot = Self::child_slot(&target, level);
            let mut child = self.nodes[idx].children[slot];
            if child == NONE {
                child = self.nodes.len() as u32;
                self.nodes.push(Node {
                    value: self.default_value(level - 1),
                    children: [NONE; 8],
                });
                self.nodes[idx].children[slot] = child;
            }
            idx = child as usize;
            level -= 1;
            path.push(idx);
        }
        let old = self.nodes[idx].value;
        self.nodes[idx].value = new_value;
        // Ancestors are recomputed from their children rather than adjusted by
        // the delta, so each stored value is exactly the sum of its children.
        for (depth, &node) in path.iter().enumerate().rev().skip(1) {
            let node_level = self.max_level - depth as u8;
            let child_default = self.default_value(node_level - 1);
            let sum: f64 = self.nodes[node]
                .children
                .iter()
                .map(|&c| if c == NONE { child_default } else { self.nodes[c as usize].value })
                .sum();
            self.nodes[node].value = sum;
        }
        self.normalizer += new_value - old;
        old
    }

    /// Per-voxel Bayes update for `object`. Voxels labeled with the object
    /// are scaled by `alpha`, voxels labeled `Free` or with another object by
    /// `beta`; `Unknown` voxels carry no information and are skipped.
    pub fn update(&mut self, obs: &[LabeledVoxel], alpha: f64, beta: f64, object: ObjectId) -> Result<()> {
        if !(alpha > 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidSensor { alpha, beta });
        }
        if let Some(v) = obs.iter().find(|v| !v.cell.in_bounds(self.m)) {
            return Err(Error::OutOfBounds(v.cell, self.m));
        }
        for v in obs {
            let factor = match v.label {
                VoxelLabel::Unknown => continue,
                VoxelLabel::Object(id) if id == object => alpha,
                VoxelLabel::Object(_) | VoxelLabel::Free => beta,
            };
            let old = self.value_at(&CellAtLevel::ground(v.cell))?;
            self.set_ground_value(v.cell, factor * old);
        }
        if self.normalizer <= 0.0 || !self.normalizer.is_finite() {
            return Err(Error::BeliefCollapsed);
        }
        self.maybe_rescale();
        Ok(())
    }

    fn maybe_rescale(&mut self) {
        if self.normalizer > RESCALE_ABOVE || self.normalizer < RESCALE_BELOW {
            self.renormalize_in_place();
        }
    }

    /// Divides every stored value, the normalizer and the default ground value
    /// by `normalizer / m^3`. Probabilities are unchanged.
    pub fn renormalize_in_place(&mut self) {
        let factor = self.normalizer / (self.m as f64).powi(3);
        if factor > 0.0 && factor.is_finite() && factor != 1.0 {
            self.rescale(1.0 / factor);
        }
    }

    /// Multiplies every value and the normalizer by `c > 0`.
    pub fn rescale(&mut self, c: f64) {
        assert!(c > 0.0 && c.is_finite(), "rescale factor must be positive");
        for n in &mut self.nodes {
            n.value *= c;
        }
        self.normalizer *= c;
        self.default_ground_value *= c;
    }

    /// Samples a level-`level` cell exactly according to the belief.
    pub fn sample<R: Rng + ?Sized>(&self, level: u8, rng: &mut R) -> CellAtLevel {
        self.sample_counted(level, rng).0
    }

    /// Like [`sample`](Self::sample), also returning the number of nodes
    /// descended through.
    pub fn sample_counted<R: Rng + ?Sized>(&self, level: u8, rng: &mut R) -> (CellAtLevel, usize) {
        let root = CellAtLevel::new(self.max_level, 0, 0, 0);
        let level = level.min(self.max_level);
        self.descend(root, Some(0), level, rng)
            .expect("root of a valid belief has positive mass")
    }

    /// Samples a level-`level` cell inside `within` with probability
    /// proportional to its value. `None` when `within` carries no mass.
    pub fn sample_within<R: Rng + ?Sized>(&self, within: CellAtLevel, level: u8, rng: &mut R) -> Option<CellAtLevel> {
        if level > within.level || self.check_cell(&within).is_err() {
            return None;
        }
        // Locate the stored node for `within`, if any.
        let mut idx = Some(0usize);
        let mut l = self.max_level;
        while l > within.level {
            let i = idx?;
            let child = self.nodes[i].children[Self::child_slot(&within, l)];
            idx = (child != NONE).then_some(child as usize);
            if idx.is_none() {
                break;
            }
            l -= 1;
        }
        let idx = if l == within.level { idx } else { None };
        if let Some(i) = idx {
            if self.nodes[i].value <= 0.0 {
                return None;
            }
        }
        self.descend(within, idx, level, rng).map(|(c, _)| c)
    }

    fn descend<R: Rng + ?Sized>(
        &self,
        mut cell: CellAtLevel,
        mut idx: Option<usize>,
        level: u8,
        rng: &mut R,
    ) -> Option<(CellAtLevel, usize)> {
        let mut visits = 0;
        while cell.level > level {
            visits += 1;
            let children = cell.children();
            match idx {
                Some(i) => {
                    let node = &self.nodes[i];
                    let default = self.default_value(cell.level - 1);
                    let weights: [f64; 8] = node
                        .children
                        .map(|c| if c == NONE { default } else { self.nodes[c as usize].value });
                    let total: f64 = weights.iter().sum();
                    if total <= 0.0 {
                        return None;
                    }
                    let mut u = rng.gen::<f64>() * total;
                    let mut pick = 7;
                    for (k, w) in weights.iter().enumerate() {
                        if *w > 0.0 {
                            pick = k;
                            if u < *w {
                                break;
                            }
                            u -= w;
                        }
                    }
                    // Children are laid out in the same order as their slots.
                    let slot = Self::child_slot(&children[pick], cell.level);
                    debug_assert_eq!(slot, pick);
                    let c = node.children[pick];
                    idx = (c != NONE).then_some(c as usize);
                    cell = children[pick];
                }
                None => {
                    cell = children[rng.gen_range(0..8)];
                }
            }
        }
        Some((cell, visits))
    }

    /// Effective value of every ground cell, x-fastest. Does not allocate
    /// nodes; intended for checks on small grids.
    pub fn dense_ground_values(&self) -> Vec<f64> {
        let m = self.m as i32;
        let mut out = Vec::with_capacity((m * m * m) as usize);
        for z in 0..m {
            for y in 0..m {
                for x in 0..m {
                    out.push(
                        self.value_at(&CellAtLevel::new(0, x, y, z))
                            .expect("in-bounds cell"),
                    );
                }
            }
        }
        out
    }

    /// Every stored node with its value, root first.
    pub fn snapshot(&self) -> BeliefSnapshot {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(0usize, CellAtLevel::new(self.max_level, 0, 0, 0))];
        while let Some((idx, cell)) = stack.pop() {
            let node = &self.nodes[idx];
            nodes.push(NodeRecord {
                level: cell.level,
                x: cell.x,
                y: cell.y,
                z: cell.z,
                value: node.value,
            });
            if cell.level > 0 {
                for (k, child_cell) in cell.children().iter().enumerate().rev() {
                    if node.children[k] != NONE {
                        stack.push((node.children[k] as usize, *child_cell));
                    }
                }
            }
        }
        BeliefSnapshot {
            m: self.m,
            normalizer: self.normalizer,
            default_ground_value: self.default_ground_value,
            nodes,
        }
    }

    /// Rebuilds a belief from the ground-level records of a snapshot.
    pub fn from_snapshot(snap: &BeliefSnapshot) -> Result<Self> {
        let mut b = Self::new_uniform(snap.m)?;
        b.rescale(snap.default_ground_value);
        for n in snap.nodes.iter().filter(|n| n.level == 0) {
            let cell = GridCell::new(n.x, n.y, n.z);
            if !cell.in_bounds(snap.m) {
                return Err(Error::OutOfBounds(cell, snap.m));
            }
            b.set_ground_value(cell, n.value);
        }
        if b.normalizer <= 0.0 {
            return Err(Error::BeliefCollapsed);
        }
        Ok(b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub level: u8,
    pub x: i32,
    pub y: i32,
    pub z: i32,
    pub value: f64,
}

/// Debug/visualization dump of an octree belief.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot {
    pub m: u32,
    pub normalizer: f64,
    pub default_ground_value: f64,
    pub nodes: Vec<NodeRecord>,
}

impl BeliefSnapshot {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
