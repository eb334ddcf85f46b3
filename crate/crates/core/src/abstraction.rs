//! Abstract instances of the search problem: object locations at a coarser
//! octree level, macro moves between coarse cells, and observations sampled
//! from the ground belief inside a coarse cell.

use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng;

use crate::domain::{apply_move, MosAction, MosState, RewardSpec, RobotState, SensorModel, PRIMITIVE_ACTIONS};
use crate::error::{Error, Result};
use crate::grid::{level_ancestor, CameraPose, CellAtLevel, Direction, GridCell, ObjectId};
use crate::octree::OctreeBelief;
use crate::planner::{Generative, Outcome};

/// Robot state plus the level-`l` cell of every object.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AbstractState {
    pub robot: RobotState,
    pub objects: Vec<CellAtLevel>,
}

impl AbstractState {
    pub fn all_found(&self) -> bool {
        self.robot.found.is_complete(self.objects.len())
    }
}

/// Maps a ground state to level `level`.
pub fn abstract_state(s: &MosState, level: u8) -> AbstractState {
    AbstractState {
        robot: s.robot,
        objects: s.objects.iter().map(|c| level_ancestor(*c, level)).collect(),
    }
}

/// Objects detected by an abstract `Look`: `(object index, cell)` pairs in
/// index order.
pub type AbstractObs = Vec<(u16, CellAtLevel)>;

/// Most macro-move goals offered at one position.
pub const MAX_MOVEOP_GOALS: usize = 26;

/// Doubled per-axis distance from ground coordinate `p` to the center of
/// level-`level` cell index `c`.
fn doubled_offset(level: u8, c: i32, p: i32) -> i64 {
    let side = 1i64 << level;
    (c as i64 * 2 * side + side - 1 - 2 * p as i64).abs()
}

/// Macro-move goals at `position`: level-`level` cells whose centers lie
/// within Chebyshev distance `2^(level+1)` of it, nearest first (Chebyshev,
/// then Euclidean, then coordinates), at most 26. The cell holding
/// `position` is left out since moving there is a no-op.
pub fn moveop_goals(m: u32, level: u8, position: GridCell) -> Vec<CellAtLevel> {
    let here = level_ancestor(position, level);
    let reach = 4i64 << level;
    let mut cands = Vec::new();
    for x in here.x - 3..=here.x + 3 {
        for y in here.y - 3..=here.y + 3 {
            for z in here.z - 3..=here.z + 3 {
                let c = CellAtLevel::new(level, x, y, z);
                if c == here || !c.in_bounds(m) {
                    continue;
                }
                let d = [
                    doubled_offset(level, x, position.x),
                    doubled_offset(level, y, position.y),
                    doubled_offset(level, z, position.z),
                ];
                let cheb = d.into_iter().max().unwrap_or(0);
                if cheb <= reach {
                    cands.push(((cheb, d.iter().map(|v| v * v).sum::<i64>(), x, y, z), c));
                }
            }
        }
    }
    cands.sort_unstable_by_key(|(k, _)| *k);
    cands.truncate(MAX_MOVEOP_GOALS);
    cands.into_iter().map(|(_, c)| c).collect()
}

/// [`moveop_goals`] for every ground position, indexed `(x * m + y) * m + z`.
fn goal_table(m: u32, level: u8) -> Vec<Vec<CellAtLevel>> {
    let m = m as i32;
    let mut out = Vec::with_capacity((m * m * m) as usize);
    for x in 0..m {
        for y in 0..m {
            for z in 0..m {
                out.push(moveop_goals(m as u32, level, GridCell::new(x, y, z)));
            }
        }
    }
    out
}

/// Primitive moves that carry the robot from `position` to the center cell of
/// `goal`, along x, then y, then z. Empty when `goal` already holds the robot.
pub fn expand_moveop(position: GridCell, goal: CellAtLevel) -> Vec<Direction> {
    if goal.contains(&position) {
        return Vec::new();
    }
    let target = goal.center_ground_cell();
    let mut moves = Vec::new();
    let axes = [
        (target.x - position.x, Direction::PosX, Direction::NegX),
        (target.y - position.y, Direction::PosY, Direction::NegY),
        (target.z - position.z, Direction::PosZ, Direction::NegZ),
    ];
    for (delta, pos, neg) in axes {
        let dir = if delta > 0 { pos } else { neg };
        moves.extend(std::iter::repeat_n(dir, delta.unsigned_abs() as usize));
    }
    moves
}

/// Discounted cost of `len` consecutive primitive steps.
pub fn moveop_cost(len: usize, reward: &RewardSpec) -> f64 {
    (0..len).map(|j| reward.gamma.powi(j as i32) * reward.r_step).sum()
}

const NON_MOVE_ACTIONS: [MosAction; 7] = [
    MosAction::Look(Direction::PosX),
    MosAction::Look(Direction::NegX),
    MosAction::Look(Direction::PosY),
    MosAction::Look(Direction::NegY),
    MosAction::Look(Direction::PosZ),
    MosAction::Look(Direction::NegZ),
    MosAction::Find,
];

/// Static description of one abstract problem.
#[derive(Clone, Debug)]
pub struct AbstractInstance {
    /// Octree level object locations are tracked at.
    pub state_level: u8,
    /// Level of the macro-move goals; `0` means primitive moves.
    pub option_level: u8,
    /// Ground samples drawn per object for an abstract observation or `Find`.
    pub k_samples: usize,
    pub m: u32,
    pub sensor: SensorModel,
    pub reward: RewardSpec,
    obstacles: Vec<GridCell>,
    obstacle_set: HashSet<GridCell>,
    goals: Arc<Vec<Vec<CellAtLevel>>>,
}

impl AbstractInstance {
    pub fn new(
        state_level: u8,
        option_level: u8,
        m: u32,
        sensor: SensorModel,
        reward: RewardSpec,
        obstacles: &[GridCell],
        k_samples: usize,
    ) -> Result<Self> {
        let max_level = m.checked_ilog2().ok_or(Error::InvalidGridSize(m))? as u8;
        if !m.is_power_of_two() {
            return Err(Error::InvalidGridSize(m));
        }
        for l in [state_level, option_level] {
            if l > max_level {
                return Err(Error::LevelTooDeep(l, max_level));
            }
        }
        if k_samples == 0 {
            return Err(Error::InvalidConfig("k_samples must be positive".into()));
        }
        Ok(Self {
            state_level,
            option_level,
            k_samples,
            m,
            sensor,
            reward,
            obstacles: obstacles.to_vec(),
            obstacle_set: obstacles.iter().copied().collect(),
            goals: Arc::new(if option_level > 0 { goal_table(m, option_level) } else { Vec::new() }),
        })
    }

    pub fn obstacles(&self) -> &[GridCell] {
        &self.obstacles
    }

    pub fn actions_at(&self, position: GridCell) -> Vec<MosAction> {
        if self.option_level == 0 {
            return PRIMITIVE_ACTIONS.to_vec();
        }
        let mut out: Vec<MosAction> = self.goals_at(position).iter().copied().map(MosAction::MoveOp).collect();
        out.extend(NON_MOVE_ACTIONS);
        out
    }

    /// Uniform draw from [`actions_at`](Self::actions_at); same result and
    /// random draws as indexing the full list.
    pub fn random_action<R: Rng + ?Sized>(&self, position: GridCell, rng: &mut R) -> MosAction {
        if self.option_level == 0 {
            return PRIMITIVE_ACTIONS[rng.gen_range(0..PRIMITIVE_ACTIONS.len())];
        }
        let goals = self.goals_at(position);
        let i = rng.gen_range(0..goals.len() + NON_MOVE_ACTIONS.len());
        match i.checked_sub(goals.len()) {
            Some(j) => NON_MOVE_ACTIONS[j],
            None => MosAction::MoveOp(goals[i]),
        }
    }

    fn goals_at(&self, p: GridCell) -> &[CellAtLevel] {
        let m = self.m as usize;
        &self.goals[(p.x as usize * m + p.y as usize) * m + p.z as usize]
    }

    /// Draws a root state: robot as given, objects sampled from their beliefs
    /// at the instance's level.
    pub fn sample_state<R: Rng + ?Sized>(&self, robot: RobotState, beliefs: &[OctreeBelief], rng: &mut R) -> AbstractState {
        AbstractState {
            robot,
            objects: beliefs.iter().map(|b| b.sample(self.state_level, rng)).collect(),
        }
    }

    fn blocked(&self, c: &GridCell, s: &AbstractState) -> bool {
        self.obstacle_set.contains(c)
            || (self.state_level == 0 && s.objects.iter().any(|o| o.x == c.x && o.y == c.y && o.z == c.z))
    }

    fn ground_visible(&self, pose: &CameraPose, cell: GridCell, s: &AbstractState, skip: usize) -> bool {
        let others = s
            .objects
            .iter()
            .enumerate()
            .filter(move |(j, _)| self.state_level == 0 && *j != skip)
            .map(|(_, c)| c.min_corner());
        self.sensor
            .frustum
            .is_visible(pose, &cell, self.obstacles.iter().copied().chain(others))
    }

    /// Whether object `k` counts as in view for `Find`. At level 0 this is the
    /// ground visibility test; above, one ground cell is drawn from the
    /// object's belief inside its abstract cell.
    fn find_hits<R: Rng + ?Sized>(&self, k: usize, s: &AbstractState, belief: Option<&OctreeBelief>, rng: &mut R) -> bool {
        let pose = s.robot.pose;
        let cell = s.objects[k];
        if self.state_level == 0 {
            return self.ground_visible(&pose, cell.min_corner(), s, k);
        }
        let Some(g) = belief.and_then(|b| b.sample_within(cell, 0, rng)) else {
            return false;
        };
        self.ground_visible(&pose, g.min_corner(), s, k)
    }

    /// Whether object `k` is reported by a `Look`. At level 0 a visible cell
    /// is detected with the sensor's detection probability; above, `k_samples`
    /// ground cells are drawn inside the abstract cell and a strict majority
    /// of detections is needed.
    fn look_detects<R: Rng + ?Sized>(
        &self,
        k: usize,
        s: &AbstractState,
        belief: Option<&OctreeBelief>,
        rng: &mut R,
    ) -> bool {
        let pose = s.robot.pose;
        let cell = s.objects[k];
        if self.state_level == 0 {
            return self.ground_visible(&pose, cell.min_corner(), s, k) && self.sensor.fires(rng);
        }
        let Some(belief) = belief else {
            return false;
        };
        if !self.sensor.frustum.may_see_block(&pose, cell.min_corner(), cell.span()) {
            return false;
        }
        let need = self.k_samples / 2 + 1;
        let mut hits = 0;
        for drawn in 0..self.k_samples {
            if hits >= need {
                break;
            }
            if hits + (self.k_samples - drawn) < need {
                return false;
            }
            let Some(g) = belief.sample_within(cell, 0, rng) else {
                return false;
            };
            if self.ground_visible(&pose, g.min_corner(), s, k) && self.sensor.fires(rng) {
                hits += 1;
            }
        }
        hits >= need
    }

    /// One draw of the abstract generative model.
    pub fn step<R: Rng + ?Sized>(
        &self,
        s: &AbstractState,
        a: &MosAction,
        beliefs: &[OctreeBelief],
        rng: &mut R,
    ) -> Outcome<AbstractState, AbstractObs> {
        let mut next = s.clone();
        let mut obs = Vec::new();
        let mut reward = self.reward.r_step;
        let mut steps = 1;
        match a {
            MosAction::Move(d) => {
                next.robot.pose = apply_move(s.robot.pose, *d, self.m, |c| self.blocked(c, s));
            }
            MosAction::Look(d) => {
                next.robot.pose.direction = *d;
                for k in 0..s.objects.len() {
                    if self.look_detects(k, &next, beliefs.get(k), rng) {
                        obs.push((k as u16, s.objects[k]));
                    }
                }
            }
            MosAction::Find => {
                let mut any = false;
                for k in 0..s.objects.len() {
                    let id = ObjectId::from_index(k);
                    if !s.robot.found.contains(id) && self.find_hits(k, s, beliefs.get(k), rng) {
                        next.robot.found.insert(id);
                        any = true;
                    }
                }
                reward = if any { self.reward.r_max } else { self.reward.r_min };
            }
            MosAction::MoveOp(goal) => {
                let moves = expand_moveop(s.robot.pose.position, *goal);
                for d in &moves {
                    next.robot.pose = apply_move(next.robot.pose, *d, self.m, |c| self.blocked(c, s));
                }
                reward = moveop_cost(moves.len(), &self.reward);
                steps = moves.len().max(1) as u32;
            }
        }
        let terminal = next.all_found();
        Outcome {
            state: next,
            obs,
            reward,
            steps,
            terminal,
        }
    }
}

/// An instance bound to the current beliefs, ready for planning.
pub struct AbstractModel<'a> {
    pub instance: &'a AbstractInstance,
    pub beliefs: &'a [OctreeBelief],
}

impl Generative for AbstractModel<'_> {
    type State = AbstractState;
    type Action = MosAction;
    type Obs = AbstractObs;

    fn actions(&self, state: &AbstractState) -> Vec<MosAction> {
        self.instance.actions_at(state.robot.pose.position)
    }

    fn step<R: Rng + ?Sized>(&self, state: &AbstractState, action: &MosAction, rng: &mut R) -> Outcome<AbstractState, AbstractObs> {
        self.instance.step(state, action, self.beliefs, rng)
    }

    fn is_terminal(&self, state: &AbstractState) -> bool {
        state.all_found()
    }

    fn rollout_action<R: Rng + ?Sized>(&self, state: &AbstractState, rng: &mut R) -> MosAction {
        self.instance.random_action(state.robot.pose.position, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{MosDomain, MotionNoise};
    use crate::grid::FrustumParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(level: u8, m: u32, d: f64) -> AbstractInstance {
        let sensor = SensorModel::new(1e5, 0.0, FrustumParams::with_range(d)).unwrap();
        AbstractInstance::new(level, level, m, sensor, RewardSpec::default(), &[], 10).unwrap()
    }

    #[test]
    fn moveop_one_cell_along_x() {
        let moves = expand_moveop(GridCell::new(0, 0, 0), CellAtLevel::new(1, 1, 0, 0));
        assert_eq!(moves, vec![Direction::PosX, Direction::PosX]);
        let r = RewardSpec::default();
        assert!((moveop_cost(2, &r) - (-1.0 - 0.99)).abs() < 1e-12);
        assert!((moveop_cost(3, &r) - (-2.9701)).abs() < 1e-12);
    }

    #[test]
    fn random_action_indexes_the_action_list() {
        for level in [0, 1, 2] {
            let inst = AbstractInstance::new(0, level, 16, SensorModel::new(1e5, 0.0, FrustumParams::with_range(10.0)).unwrap(), RewardSpec::default(), &[], 10).unwrap();
            for pos in [GridCell::new(0, 0, 0), GridCell::new(7, 8, 15), GridCell::new(5, 5, 5)] {
                let actions = inst.actions_at(pos);
                let mut a = ChaCha8Rng::seed_from_u64(level as u64);
                let mut b = a.clone();
                for _ in 0..200 {
                    let fast = inst.random_action(pos, &mut a);
                    let slow = actions[b.gen_range(0..actions.len())];
                    assert_eq!(fast, slow);
                }
            }
        }
    }

    #[test]
    fn abstract_look_is_a_majority_vote() {
        // Half of the level-1 cell's mass sits on cells in view.
        let inst = instance(1, 8, 6.0);
        let robot = RobotState::new(CameraPose::new(GridCell::new(0, 4, 4), Direction::PosX));
        let cell = CellAtLevel::new(1, 1, 2, 2);
        let ground = crate::grid::ground_cells_of(cell);
        let frustum = &inst.sensor.frustum;
        let seen: Vec<_> = ground.iter().filter(|c| frustum.contains(&robot.pose, c)).copied().collect();
        assert!(!seen.is_empty() && seen.len() < ground.len());
        let p_seen: f64 = seen.len() as f64 / ground.len() as f64;
        let belief = OctreeBelief::new_uniform(8).unwrap();
        let s = AbstractState {
            robot,
            objects: vec![cell],
        };
        let k = inst.k_samples;
        let binom = |j: usize| {
            let c = (0..j).fold(1.0f64, |acc, i| acc * (k - i) as f64 / (i + 1) as f64);
            c * p_seen.powi(j as i32) * (1.0 - p_seen).powi((k - j) as i32)
        };
        let expected: f64 = (k / 2 + 1..=k).map(binom).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let trials = 40_000;
        let hits = (0..trials)
            .filter(|_| !inst.step(&s, &MosAction::Look(Direction::PosX), &[belief.clone()], &mut rng).obs.is_empty())
            .count();
        let rate = hits as f64 / trials as f64;
        assert!((rate - expected).abs() < 0.01, "{rate} vs {expected}");
    }

    #[test]
    fn moveop_into_own_cell_is_empty() {
        let moves = expand_moveop(GridCell::new(3, 2, 2), CellAtLevel::new(2, 0, 0, 0));
        assert!(moves.is_empty());
        assert_eq!(moveop_cost(0, &RewardSpec::default()), 0.0);
    }

    #[test]
    fn moveop_length_is_manhattan() {
        for (p, g) in [
            (GridCell::new(0, 7, 3), CellAtLevel::new(2, 1, 0, 1)),
            (GridCell::new(5, 5, 5), CellAtLevel::new(1, 0, 3, 1)),
        ] {
            let moves = expand_moveop(p, g);
            assert_eq!(moves.len() as u32, p.manhattan(&g.center_ground_cell()));
            let mut q = p;
            for d in moves {
                q = q.offset(d.vector());
            }
            assert!(g.contains(&q));
        }
    }

    #[test]
    fn interior_goals_are_the_neighbor_cells() {
        let p = GridCell::new(6, 6, 6);
        let goals = moveop_goals(16, 1, p);
        let here = level_ancestor(p, 1);
        let mut expected = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if (dx, dy, dz) != (0, 0, 0) {
                        expected.push(CellAtLevel::new(1, here.x + dx, here.y + dy, here.z + dz));
                    }
                }
            }
        }
        let mut got = goals.clone();
        got.sort_by_key(|c| (c.x, c.y, c.z));
        assert_eq!(got, expected);
    }

    #[test]
    fn goals_near_a_wall_reach_further() {
        assert_eq!(moveop_goals(16, 1, GridCell::new(0, 0, 0)).len(), 7);
        let goals = moveop_goals(16, 1, GridCell::new(1, 1, 1));
        assert_eq!(goals.len(), 26);
        assert!(goals.contains(&CellAtLevel::new(1, 2, 0, 0)));
        assert!(!goals.contains(&CellAtLevel::new(1, 0, 0, 0)));
    }

    #[test]
    fn goals_are_the_nearest_cells_in_reach() {
        for level in 1..=2u8 {
            let m = 16;
            let span = (m >> level) as i32;
            let reach = 2f64.powi(level as i32 + 1);
            let side = 2f64.powi(level as i32);
            for p in (0..m as i32).flat_map(|x| (0..m as i32).map(move |y| GridCell::new(x, y, (x * 7 + y) % m as i32))) {
                let dist = |c: &CellAtLevel| {
                    let center = |i: i32, q: i32| ((i as f64 + 0.5) * side - 0.5 - q as f64).abs();
                    center(c.x, p.x).max(center(c.y, p.y)).max(center(c.z, p.z))
                };
                let here = level_ancestor(p, level);
                let in_reach: Vec<CellAtLevel> = (0..span)
                    .flat_map(|x| (0..span).flat_map(move |y| (0..span).map(move |z| CellAtLevel::new(level, x, y, z))))
                    .filter(|c| *c != here && dist(c) <= reach)
                    .collect();
                let goals = moveop_goals(m, level, p);
                assert_eq!(goals.len(), in_reach.len().min(MAX_MOVEOP_GOALS));
                let farthest = goals.iter().map(dist).fold(0.0, f64::max);
                for c in &in_reach {
                    if !goals.contains(c) {
                        assert!(dist(c) >= farthest, "{c:?} skipped at {p:?}");
                    }
                }
                for w in goals.windows(2) {
                    assert!(dist(&w[0]) <= dist(&w[1]));
                }
            }
        }
    }

    #[test]
    fn abstract_state_maps_cells() {
        let s = MosState {
            robot: RobotState::new(CameraPose::new(GridCell::new(0, 0, 0), Direction::PosX)),
            objects: vec![GridCell::new(5, 2, 7)],
        };
        assert_eq!(abstract_state(&s, 2).objects, vec![CellAtLevel::new(2, 1, 0, 1)]);
    }

    #[test]
    fn abstract_look_without_mass_reports_nothing() {
        let inst = instance(1, 8, 6.0);
        let mut belief = OctreeBelief::new_uniform(8).unwrap();
        let free: Vec<_> = crate::grid::ground_cells_of(CellAtLevel::new(1, 1, 0, 0))
            .into_iter()
            .map(|c| crate::octree::LabeledVoxel::new(c, crate::octree::VoxelLabel::Free))
            .collect();
        belief.update(&free, 1e5, 0.0, ObjectId(1)).unwrap();
        let s = AbstractState {
            robot: RobotState::new(CameraPose::new(GridCell::new(0, 1, 1), Direction::PosX)),
            objects: vec![CellAtLevel::new(1, 1, 0, 0)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = inst.step(&s, &MosAction::Look(Direction::PosX), &[belief], &mut rng);
        assert!(out.obs.is_empty());
    }

    #[test]
    fn abstract_look_detects_visible_cell() {
        let inst = instance(1, 8, 6.0);
        let belief = OctreeBelief::with_prior(8, &[(GridCell::new(3, 1, 1), 1e12)]).unwrap();
        let s = AbstractState {
            robot: RobotState::new(CameraPose::new(GridCell::new(0, 1, 1), Direction::NegX)),
            objects: vec![CellAtLevel::new(1, 1, 0, 0)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = inst.step(&s, &MosAction::Look(Direction::PosX), &[belief.clone()], &mut rng);
        assert_eq!(out.obs, vec![(0, CellAtLevel::new(1, 1, 0, 0))]);
        let out = inst.step(&out.state, &MosAction::Find, &[belief], &mut rng);
        assert_eq!(out.reward, 1000.0);
        assert!(out.terminal);
    }

    #[test]
    fn moveop_step_cost_and_duration() {
        let inst = instance(1, 8, 6.0);
        let belief = OctreeBelief::new_uniform(8).unwrap();
        let s = AbstractState {
            robot: RobotState::new(CameraPose::new(GridCell::new(0, 0, 0), Direction::PosX)),
            objects: vec![CellAtLevel::new(1, 3, 3, 3)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = inst.step(&s, &MosAction::MoveOp(CellAtLevel::new(1, 1, 0, 0)), &[belief], &mut rng);
        assert_eq!(out.steps, 2);
        assert_eq!(out.state.robot.pose.position, GridCell::new(2, 0, 0));
        assert!((out.reward + 1.99).abs() < 1e-12);
    }

    #[test]
    fn level_zero_matches_ground_model() {
        let m = 8;
        let sensor = SensorModel::new(4.0, 0.5, FrustumParams::with_range(6.0)).unwrap();
        let obstacles = vec![GridCell::new(3, 3, 3), GridCell::new(5, 2, 4)];
        let dom = MosDomain {
            m,
            sensor: sensor.clone(),
            reward: RewardSpec::default(),
            obstacles: obstacles.clone(),
            motion: MotionNoise::None,
        };
        let inst = AbstractInstance::new(0, 0, m, sensor, RewardSpec::default(), &obstacles, 10).unwrap();
        let mut ground = MosState {
            robot: RobotState::new(CameraPose::new(GridCell::new(1, 1, 1), Direction::PosX)),
            objects: vec![GridCell::new(4, 1, 1), GridCell::new(6, 6, 2), GridCell::new(2, 5, 5)],
        };
        let mut abs = abstract_state(&ground, 0);
        let mut pick = ChaCha8Rng::seed_from_u64(5);
        let mut rg = ChaCha8Rng::seed_from_u64(6);
        let mut ra = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..300 {
            let a = PRIMITIVE_ACTIONS[pick.gen_range(0..13)];
            let (gs, go, gr) = dom.generative(&ground, &a, &mut rg);
            let out = inst.step(&abs, &a, &[], &mut ra);
            assert_eq!(abstract_state(&gs, 0), out.state);
            assert_eq!(gr, out.reward);
            let dets: AbstractObs = go
                .detections()
                .into_iter()
                .map(|(id, c)| (id.index() as u16, CellAtLevel::ground(c)))
                .collect();
            assert_eq!(dets, out.obs);
            ground = gs;
            abs = out.state;
        }
    }
}
