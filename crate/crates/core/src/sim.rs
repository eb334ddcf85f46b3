//! Worlds, episodes and the non-planning baseline policies.

use std::collections::{HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domain::{
    center_of_mass, FactoredObservation, MosAction, MosDomain, MosState, ObjectEntry, RobotState, Scene, WorldFile,
    PRIMITIVE_ACTIONS,
};
use crate::error::{Error, Result};
use crate::grid::{CameraPose, Direction, GridCell, ObjectId};
use crate::planner::PlanDiagnostics;

const PLACEMENT_ATTEMPTS: usize = 1000;

/// A concrete world: object cells, obstacles and where the robot starts.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub m: u32,
    /// Cells of object `k + 1`.
    pub objects: Vec<Vec<GridCell>>,
    pub obstacles: Vec<GridCell>,
    pub robot_start: CameraPose,
}

impl World {
    pub fn n(&self) -> usize {
        self.objects.len()
    }

    pub fn scene(&self) -> Scene {
        Scene::new(self.m, self.objects.clone(), &self.obstacles)
    }

    pub fn initial_state(&self) -> MosState {
        MosState {
            robot: RobotState::new(self.robot_start),
            objects: self.objects.iter().map(|c| center_of_mass(c)).collect(),
        }
    }

    pub fn to_file(&self) -> WorldFile {
        WorldFile {
            m: self.m,
            objects: self
                .objects
                .iter()
                .enumerate()
                .map(|(k, cells)| ObjectEntry {
                    id: ObjectId::from_index(k).0,
                    cells: cells.clone(),
                })
                .collect(),
            obstacles: self.obstacles.clone(),
            robot_start: Some(self.robot_start),
        }
    }

    /// Validates a world file. A missing robot start is drawn from `seed`.
    pub fn from_file(file: &WorldFile, seed: u64) -> Result<Self> {
        let m = file.m;
        if m < 2 || !m.is_power_of_two() {
            return Err(Error::InvalidGridSize(m));
        }
        let mut entries = file.objects.clone();
        entries.sort_by_key(|e| e.id);
        if entries.len() > crate::domain::FoundSet::MAX_OBJECTS {
            return Err(Error::InvalidWorld(format!("at most {} objects", crate::domain::FoundSet::MAX_OBJECTS)));
        }
        let mut taken = HashSet::new();
        for o in &file.obstacles {
            if !o.in_bounds(m) {
                return Err(Error::OutOfBounds(*o, m));
            }
            taken.insert(*o);
        }
        for (k, e) in entries.iter().enumerate() {
            if e.id as usize != k + 1 {
                return Err(Error::InvalidWorld(format!("object ids must be 1..=n, got {}", e.id)));
            }
            if e.cells.is_empty() {
                return Err(Error::InvalidWorld(format!("object {} has no cells", e.id)));
            }
            for c in &e.cells {
                if !c.in_bounds(m) {
                    return Err(Error::OutOfBounds(*c, m));
                }
                if !taken.insert(*c) {
                    return Err(Error::InvalidWorld(format!("cell {c} is occupied twice")));
                }
            }
        }
        let robot_start = match file.robot_start {
            Some(p) => {
                if !p.position.in_bounds(m) {
                    return Err(Error::OutOfBounds(p.position, m));
                }
                if taken.contains(&p.position) {
                    return Err(Error::InvalidWorld("robot starts inside an occupied cell".into()));
                }
                p
            }
            None => random_start(m, &taken, &mut ChaCha8Rng::seed_from_u64(seed))?,
        };
        Ok(Self {
            m,
            objects: entries.into_iter().map(|e| e.cells).collect(),
            obstacles: file.obstacles.clone(),
            robot_start,
        })
    }
}

fn random_start<R: Rng>(m: u32, taken: &HashSet<GridCell>, rng: &mut R) -> Result<CameraPose> {
    let total = (m as usize).pow(3);
    if taken.len() >= total {
        return Err(Error::InvalidWorld("no free cell for the robot".into()));
    }
    loop {
        let c = random_cell(m, rng);
        if !taken.contains(&c) {
            let dir = Direction::ALL[rng.gen_range(0..6)];
            return Ok(CameraPose::new(c, dir));
        }
    }
}

fn random_cell<R: Rng>(m: u32, rng: &mut R) -> GridCell {
    let m = m as i32;
    GridCell::new(rng.gen_range(0..m), rng.gen_range(0..m), rng.gen_range(0..m))
}

/// Random world with `n` box-shaped objects whose sides are drawn from
/// `1..=max(1, m/8)`, no obstacles, and a random free robot start.
pub fn generate_world(m: u32, n: usize, seed: u64) -> Result<World> {
    if m < 2 || !m.is_power_of_two() {
        return Err(Error::InvalidGridSize(m));
    }
    if n > crate::domain::FoundSet::MAX_OBJECTS {
        return Err(Error::WorldTooCrowded(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_side = (m / 8).max(1) as i32;
    let mut taken = HashSet::new();
    let mut objects = Vec::with_capacity(n);
    for _ in 0..n {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let dims = [0; 3].map(|_| rng.gen_range(1..=max_side));
            let corner = dims.map(|s| rng.gen_range(0..=(m as i32 - s)));
            let mut cells = Vec::new();
            for dz in 0..dims[2] {
                for dy in 0..dims[1] {
                    for dx in 0..dims[0] {
                        cells.push(GridCell::new(corner[0] + dx, corner[1] + dy, corner[2] + dz));
                    }
                }
            }
            if cells.iter().all(|c| !taken.contains(c)) {
                placed = Some(cells);
                break;
            }
        }
        let cells = placed.ok_or(Error::WorldTooCrowded(n))?;
        taken.extend(cells.iter().copied());
        objects.push(cells);
    }
    let robot_start = random_start(m, &taken, &mut rng).map_err(|_| Error::WorldTooCrowded(n))?;
    Ok(World {
        m,
        objects,
        obstacles: Vec::new(),
        robot_start,
    })
}

/// One line of the episode log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub action: String,
    pub reward: f64,
    pub position: GridCell,
    pub direction: Direction,
    pub found: usize,
    pub detections: Vec<(u16, GridCell)>,
    pub free: usize,
    pub unknown: usize,
    /// Planning time charged before this step, in seconds.
    pub planning_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanDiagnostics>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeLimits {
    pub max_steps: usize,
    /// Total time budget in seconds, planning and belief updates included.
    pub total_time: f64,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        Self {
            max_steps: 500,
            total_time: f64::INFINITY,
        }
    }
}

/// A running episode on a fixed world.
#[derive(Clone, Debug)]
pub struct Episode {
    pub scene: Scene,
    pub state: MosState,
    pub limits: EpisodeLimits,
    /// Primitive steps taken.
    pub t: usize,
    /// Discounted cumulative reward.
    pub reward: f64,
    pub finds: usize,
    pub time_used: f64,
    pub log: Vec<StepRecord>,
    pending_time: f64,
    pending_plan: Option<PlanDiagnostics>,
    gamma: f64,
}

impl Episode {
    pub fn new(world: &World, limits: EpisodeLimits, gamma: f64) -> Self {
        Self {
            scene: world.scene(),
            state: world.initial_state(),
            limits,
            t: 0,
            reward: 0.0,
            finds: 0,
            time_used: 0.0,
            log: Vec::new(),
            pending_time: 0.0,
            pending_plan: None,
            gamma,
        }
    }

    pub fn found(&self) -> usize {
        self.state.robot.found.len()
    }

    pub fn is_done(&self) -> bool {
        self.state.all_found()
            || self.finds >= self.state.n()
            || self.t >= self.limits.max_steps
            || self.time_used >= self.limits.total_time
    }

    /// Charges planning or belief-update time against the budget.
    pub fn charge_time(&mut self, secs: f64) {
        self.time_used += secs;
        self.pending_time += secs;
    }

    /// Attaches planner diagnostics to the next logged step.
    pub fn attach_plan(&mut self, plan: PlanDiagnostics) {
        self.pending_plan = Some(plan);
    }

    /// Executes one primitive action in the world.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        domain: &MosDomain,
        a: &MosAction,
        rng: &mut R,
    ) -> Result<(FactoredObservation, f64)> {
        if self.is_done() {
            return Err(Error::EpisodeDone);
        }
        if !a.is_primitive() {
            return Err(Error::InvalidConfig(format!("{a} is not a primitive action")));
        }
        let (next, obs, r) = domain.step_in(&self.scene, &self.state, a, rng);
        self.reward += self.gamma.powi(self.t as i32) * r;
        if *a == MosAction::Find {
            self.finds += 1;
        }
        self.state = next;
        self.log.push(StepRecord {
            t: self.t,
            action: a.to_string(),
            reward: r,
            position: self.state.robot.pose.position,
            direction: self.state.robot.pose.direction,
            found: self.state.robot.found.len(),
            detections: obs.detections().into_iter().map(|(id, c)| (id.0, c)).collect(),
            free: obs.count(|l| *l == crate::octree::VoxelLabel::Free),
            unknown: obs.count(|l| *l == crate::octree::VoxelLabel::Unknown),
            planning_time: std::mem::take(&mut self.pending_time),
            plan: self.pending_plan.take(),
        });
        self.t += 1;
        Ok((obs, r))
    }
}

/// Snake-order sweep of every cell with six Looks at each, calling `Find`
/// right after a Look reveals an object that has not been found yet.
#[derive(Clone, Debug)]
pub struct ExhaustivePolicy {
    m: u32,
    order: Vec<GridCell>,
    next: usize,
    looks_done: usize,
    blocked: HashSet<GridCell>,
    last_move: Option<(GridCell, GridCell)>,
}

impl ExhaustivePolicy {
    pub fn new(m: u32, obstacles: &[GridCell]) -> Self {
        Self {
            m,
            order: snake_order(m),
            next: 0,
            looks_done: 0,
            blocked: obstacles.iter().copied().collect(),
            last_move: None,
        }
    }

    /// Next action given the robot state and the last observation.
    pub fn next_action(&mut self, robot: &RobotState, last_obs: Option<&FactoredObservation>) -> MosAction {
        if let Some(obs) = last_obs {
            if obs.detections().iter().any(|(id, _)| !robot.found.contains(*id)) {
                return MosAction::Find;
            }
        }
        let here = robot.pose.position;
        if let Some((from, to)) = self.last_move.take() {
            if from == here {
                self.blocked.insert(to);
            }
        }
        let mut skipped = 0;
        loop {
            if skipped > self.order.len() {
                // Nothing reachable to visit; keep looking around.
                return MosAction::Look(Direction::ALL[self.looks_done % 6]);
            }
            let target = self.order[self.next];
            if target == here {
                if self.looks_done < 6 {
                    let d = Direction::ALL[self.looks_done];
                    self.looks_done += 1;
                    return MosAction::Look(d);
                }
            } else if !self.blocked.contains(&target) {
                if let Some(dir) = self.first_step(here, target) {
                    let to = here.offset(dir.vector());
                    self.last_move = Some((here, to));
                    return MosAction::Move(dir);
                }
            }
            self.looks_done = 0;
            self.next = (self.next + 1) % self.order.len();
            skipped += 1;
        }
    }

    /// First move of a shortest path around known-blocked cells.
    fn first_step(&self, from: GridCell, to: GridCell) -> Option<Direction> {
        let mut seen = HashSet::from([from]);
        let mut queue = VecDeque::new();
        for d in Direction::ALL {
            let c = from.offset(d.vector());
            if c.in_bounds(self.m) && !self.blocked.contains(&c) && seen.insert(c) {
                if c == to {
                    return Some(d);
                }
                queue.push_back((c, d));
            }
        }
        while let Some((c, first)) = queue.pop_front() {
            for d in Direction::ALL {
                let n = c.offset(d.vector());
                if n.in_bounds(self.m) && !self.blocked.contains(&n) && seen.insert(n) {
                    if n == to {
                        return Some(first);
                    }
                    queue.push_back((n, first));
                }
            }
        }
        None
    }
}

/// Boustrophedon order over the grid: x sweeps back and forth within a row,
/// rows alternate along y within a layer.
pub fn snake_order(m: u32) -> Vec<GridCell> {
    let m = m as i32;
    let mut out = Vec::with_capacity((m * m * m) as usize);
    for z in 0..m {
        for j in 0..m {
            let y = if z % 2 == 0 { j } else { m - 1 - j };
            let row = z * m + j;
            for i in 0..m {
                let x = if row % 2 == 0 { i } else { m - 1 - i };
                out.push(GridCell::new(x, y, z));
            }
        }
    }
    out
}

/// Uniformly random primitive action.
pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> MosAction {
    PRIMITIVE_ACTIONS[rng.gen_range(0..PRIMITIVE_ACTIONS.len())]
}
