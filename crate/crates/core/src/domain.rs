//! The ground multi-object search model: factored state, the 13 primitive
//! actions, the per-voxel observation model, transitions and rewards.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    compute_visibility, CameraPose, CellAtLevel, Direction, Frustum, FrustumParams, GridCell, ObjectId, Occupant,
    VisibilityResult,
};
use crate::octree::{LabeledVoxel, OctreeBelief, VoxelLabel};

/// Set of found objects, as a bitmask over object indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FoundSet(u64);

impl FoundSet {
    pub const MAX_OBJECTS: usize = 64;

    pub fn contains(self, id: ObjectId) -> bool {
        self.0 >> id.index() & 1 == 1
    }

    pub fn insert(&mut self, id: ObjectId) -> bool {
        let fresh = !self.contains(id);
        self.0 |= 1 << id.index();
        fresh
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_complete(self, n: usize) -> bool {
        self.len() == n
    }

    pub fn ids(self) -> impl Iterator<Item = ObjectId> {
        (0..Self::MAX_OBJECTS)
            .filter(move |i| self.0 >> i & 1 == 1)
            .map(ObjectId::from_index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RobotState {
    pub pose: CameraPose,
    pub found: FoundSet,
}

impl RobotState {
    pub fn new(pose: CameraPose) -> Self {
        Self {
            pose,
            found: FoundSet::default(),
        }
    }
}

/// Full ground state; `objects[k]` is the cell of object `k + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MosState {
    pub robot: RobotState,
    pub objects: Vec<GridCell>,
}

impl MosState {
    pub fn n(&self) -> usize {
        self.objects.len()
    }

    pub fn all_found(&self) -> bool {
        self.robot.found.is_complete(self.n())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MosAction {
    Move(Direction),
    Look(Direction),
    Find,
    /// Macro move towards a cell of a coarser grid; only abstract planners
    /// produce it.
    MoveOp(CellAtLevel),
}

impl MosAction {
    pub fn is_primitive(&self) -> bool {
        !matches!(self, MosAction::MoveOp(_))
    }
}

impl fmt::Display for MosAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MosAction::Move(d) => write!(f, "move{d}"),
            MosAction::Look(d) => write!(f, "look{d}"),
            MosAction::Find => f.write_str("find"),
            MosAction::MoveOp(c) => write!(f, "moveop{c}"),
        }
    }
}

pub const PRIMITIVE_ACTIONS: [MosAction; 13] = [
    MosAction::Move(Direction::PosX),
    MosAction::Move(Direction::NegX),
    MosAction::Move(Direction::PosY),
    MosAction::Move(Direction::NegY),
    MosAction::Move(Direction::PosZ),
    MosAction::Move(Direction::NegZ),
    MosAction::Look(Direction::PosX),
    MosAction::Look(Direction::NegX),
    MosAction::Look(Direction::PosY),
    MosAction::Look(Direction::NegY),
    MosAction::Look(Direction::PosZ),
    MosAction::Look(Direction::NegZ),
    MosAction::Find,
];

#[derive(Clone, Debug)]
pub struct SensorModel {
    pub alpha: f64,
    pub beta: f64,
    pub frustum: Frustum,
}

impl SensorModel {
    pub fn new(alpha: f64, beta: f64, params: FrustumParams) -> Result<Self> {
        if !(alpha > 1.0 && alpha.is_finite() && (0.0..1.0).contains(&beta)) {
            return Err(Error::InvalidSensor { alpha, beta });
        }
        Ok(Self {
            alpha,
            beta,
            frustum: Frustum::new(params)?,
        })
    }

    /// Probability that a visible object cell is labeled with its object when
    /// observations are simulated.
    pub fn detection_prob(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// One simulated detection draw; always consumes exactly one random number.
    pub fn fires<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.gen::<f64>() < self.detection_prob()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub r_max: f64,
    pub r_min: f64,
    pub r_step: f64,
    pub gamma: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            r_max: 1000.0,
            r_min: -1000.0,
            r_step: -1.0,
            gamma: 0.99,
        }
    }
}

/// Optional stochasticity of primitive moves.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum MotionNoise {
    #[default]
    None,
    /// The move fails and the robot stays put with this probability.
    Slip(f64),
}

/// Static occupancy of a world: which object or obstacle fills each cell.
#[derive(Clone, Debug)]
pub struct Scene {
    pub m: u32,
    pub occupancy: HashMap<GridCell, Occupant>,
    /// Cells of object `k + 1`.
    pub object_cells: Vec<Vec<GridCell>>,
}

impl Scene {
    pub fn new(m: u32, object_cells: Vec<Vec<GridCell>>, obstacles: &[GridCell]) -> Self {
        let mut occupancy = HashMap::new();
        for o in obstacles {
            occupancy.insert(*o, Occupant::Obstacle);
        }
        for (k, cells) in object_cells.iter().enumerate() {
            for c in cells {
                occupancy.insert(*c, Occupant::Object(ObjectId::from_index(k)));
            }
        }
        Self {
            m,
            occupancy,
            object_cells,
        }
    }

    /// Single-cell objects at the state's cells.
    pub fn from_state(m: u32, s: &MosState, obstacles: &[GridCell]) -> Self {
        Self::new(m, s.objects.iter().map(|c| vec![*c]).collect(), obstacles)
    }

    pub fn is_free(&self, c: &GridCell) -> bool {
        c.in_bounds(self.m) && !self.occupancy.contains_key(c)
    }

    pub fn visibility(&self, pose: &CameraPose, frustum: &Frustum) -> VisibilityResult {
        compute_visibility(pose, frustum, self.m, &self.occupancy)
    }
}

/// Moves one cell, staying put at the grid boundary or when the target is
/// blocked.
pub fn apply_move(pose: CameraPose, dir: Direction, m: u32, blocked: impl Fn(&GridCell) -> bool) -> CameraPose {
    let next = pose.position.offset(dir.vector());
    if next.in_bounds(m) && !blocked(&next) {
        CameraPose::new(next, pose.direction)
    } else {
        pose
    }
}

/// Objects with at least one cell visible at `pose`, in id order.
pub fn visible_objects(vis: &VisibilityResult) -> Vec<ObjectId> {
    let mut ids: Vec<ObjectId> = vis
        .visible_object
        .values()
        .filter_map(|o| match o {
            Occupant::Object(id) => Some(*id),
            Occupant::Obstacle => None,
        })
        .collect();
    ids.sort();
    ids.dedup();
    ids
}

/// Deterministic ground transition. Objects never move; `Find` marks every
/// not-yet-found object with a visible cell as found.
pub fn transition(scene: &Scene, s: &MosState, a: &MosAction, frustum: &Frustum) -> MosState {
    let mut next = s.clone();
    match a {
        MosAction::Move(d) => {
            next.robot.pose = apply_move(s.robot.pose, *d, scene.m, |c| !scene.is_free(c));
        }
        MosAction::Look(d) => next.robot.pose.direction = *d,
        MosAction::Find => {
            let vis = scene.visibility(&s.robot.pose, frustum);
            for id in visible_objects(&vis) {
                next.robot.found.insert(id);
            }
        }
        MosAction::MoveOp(_) => panic!("transition takes primitive actions; expand MoveOp first"),
    }
    next
}

/// A volumetric observation: the label of every in-frustum voxel, plus its
/// per-object factorization.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FactoredObservation {
    /// Label of every in-frustum voxel, `Unknown` for occluded ones.
    pub labels: BTreeMap<GridCell, VoxelLabel>,
    /// Voxels of `V_i` for object `k + 1`, labeled with the object or `Free`.
    pub per_object: Vec<Vec<LabeledVoxel>>,
    pub visibility: Option<VisibilityResult>,
}

impl FactoredObservation {
    pub fn empty(n: usize) -> Self {
        Self {
            labels: BTreeMap::new(),
            per_object: vec![Vec::new(); n],
            visibility: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(object, cell)` pairs for every voxel labeled with an object.
    pub fn detections(&self) -> Vec<(ObjectId, GridCell)> {
        let mut out: Vec<_> = self
            .labels
            .iter()
            .filter_map(|(c, l)| match l {
                VoxelLabel::Object(id) => Some((*id, *c)),
                _ => None,
            })
            .collect();
        out.sort();
        out
    }

    pub fn count(&self, want: fn(&VoxelLabel) -> bool) -> usize {
        self.labels.values().filter(|l| want(l)).count()
    }

    fn factor(labels: BTreeMap<GridCell, VoxelLabel>, n: usize, visibility: VisibilityResult) -> Self {
        let per_object = (0..n)
            .map(|k| {
                let id = ObjectId::from_index(k);
                labels
                    .iter()
                    .filter_map(|(c, l)| match l {
                        VoxelLabel::Unknown => None,
                        VoxelLabel::Object(j) if *j == id => Some(LabeledVoxel::new(*c, *l)),
                        _ => Some(LabeledVoxel::new(*c, VoxelLabel::Free)),
                    })
                    .collect()
            })
            .collect();
        Self {
            labels,
            per_object,
            visibility: Some(visibility),
        }
    }
}

/// Simulated sensing after the robot reached `s_next` by `a`. Only `Look`
/// senses. Each visible object cell is labeled with its object with
/// probability `alpha / (alpha + beta)`, else `Free`; random draws happen in
/// (object id, cell) order.
pub fn sample_observation<R: Rng + ?Sized>(
    scene: &Scene,
    s_next: &MosState,
    a: &MosAction,
    sensor: &SensorModel,
    rng: &mut R,
) -> FactoredObservation {
    let n = scene.object_cells.len();
    if !matches!(a, MosAction::Look(_)) {
        return FactoredObservation::empty(n);
    }
    let vis = scene.visibility(&s_next.robot.pose, &sensor.frustum);
    let mut labels = BTreeMap::new();
    for c in &vis.visible_free {
        labels.insert(*c, VoxelLabel::Free);
    }
    for c in &vis.occluded {
        labels.insert(*c, VoxelLabel::Unknown);
    }
    let mut object_cells: Vec<(ObjectId, GridCell)> = Vec::new();
    for (c, occ) in &vis.visible_object {
        match occ {
            Occupant::Obstacle => {
                labels.insert(*c, VoxelLabel::Free);
            }
            Occupant::Object(id) => object_cells.push((*id, *c)),
        }
    }
    object_cells.sort();
    for (id, c) in object_cells {
        let label = if sensor.fires(rng) { VoxelLabel::Object(id) } else { VoxelLabel::Free };
        labels.insert(c, label);
    }
    FactoredObservation::factor(labels, n, vis)
}

pub fn reward(s: &MosState, a: &MosAction, s_next: &MosState, spec: &RewardSpec) -> f64 {
    match a {
        MosAction::Find => {
            if s_next.robot.found.len() > s.robot.found.len() {
                spec.r_max
            } else {
                spec.r_min
            }
        }
        _ => spec.r_step,
    }
}

/// Static description of the ground problem: everything except the state.
#[derive(Clone, Debug)]
pub struct MosDomain {
    pub m: u32,
    pub sensor: SensorModel,
    pub reward: RewardSpec,
    pub obstacles: Vec<GridCell>,
    pub motion: MotionNoise,
}

impl MosDomain {
    /// One draw from the generative model on `scene`. Random numbers are
    /// consumed by motion noise (if any) and then by the observation.
    pub fn step_in<R: Rng + ?Sized>(
        &self,
        scene: &Scene,
        s: &MosState,
        a: &MosAction,
        rng: &mut R,
    ) -> (MosState, FactoredObservation, f64) {
        let a_eff = match (a, self.motion) {
            (MosAction::Move(_), MotionNoise::Slip(p)) if rng.gen::<f64>() < p => None,
            _ => Some(*a),
        };
        let s_next = match a_eff {
            Some(a) => transition(scene, s, &a, &self.sensor.frustum),
            None => s.clone(),
        };
        let o = sample_observation(scene, &s_next, a, &self.sensor, rng);
        let r = reward(s, a, &s_next, &self.reward);
        (s_next, o, r)
    }

    /// Generative function with single-cell objects at the state's cells.
    pub fn generative<R: Rng + ?Sized>(
        &self,
        s: &MosState,
        a: &MosAction,
        rng: &mut R,
    ) -> (MosState, FactoredObservation, f64) {
        let scene = Scene::from_state(self.m, s, &self.obstacles);
        self.step_in(&scene, s, a, rng)
    }
}

/// Updates the belief of every not-yet-found object from its factor of the
/// observation.
pub fn belief_update_all(
    beliefs: &mut [OctreeBelief],
    found: FoundSet,
    obs: &FactoredObservation,
    sensor: &SensorModel,
) -> Result<()> {
    for (k, (belief, voxels)) in beliefs.iter_mut().zip(&obs.per_object).enumerate() {
        let id = ObjectId::from_index(k);
        if found.contains(id) || voxels.is_empty() {
            continue;
        }
        belief.update(voxels, sensor.alpha, sensor.beta, id)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub id: u16,
    pub cells: Vec<GridCell>,
}

/// On-disk world description.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldFile {
    pub m: u32,
    pub objects: Vec<ObjectEntry>,
    #[serde(default)]
    pub obstacles: Vec<GridCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot_start: Option<CameraPose>,
}

impl WorldFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Center-of-mass cell of an object: the covered cell nearest the mean of its
/// cells.
pub fn center_of_mass(cells: &[GridCell]) -> GridCell {
    let n = cells.len().max(1) as f64;
    let mean = cells.iter().fold([0.0; 3], |acc, c| {
        [acc[0] + c.x as f64 / n, acc[1] + c.y as f64 / n, acc[2] + c.z as f64 / n]
    });
    *cells
        .iter()
        .min_by(|a, b| {
            let d = |c: &GridCell| {
                (c.x as f64 - mean[0]).powi(2) + (c.y as f64 - mean[1]).powi(2) + (c.z as f64 - mean[2]).powi(2)
            };
            d(a).total_cmp(&d(b)).then(a.cmp(b))
        })
        .expect("object has cells")
}
