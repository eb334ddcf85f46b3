//! Partially observable UCT over a black-box generative model.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Result of one call to a generative model.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome<S, O> {
    pub state: S,
    pub obs: O,
    pub reward: f64,
    /// Number of primitive time steps the action took; the return after it is
    /// discounted by `gamma^steps`.
    pub steps: u32,
    pub terminal: bool,
}

/// A simulator `(s', o, r) ~ G(s, a)` that POUCT can plan with.
pub trait Generative: Sync {
    type State: Clone + Send;
    type Action: Clone + PartialEq + fmt::Debug + Send + Sync;
    type Obs: Clone + Eq + Hash + Send;

    fn actions(&self, state: &Self::State) -> Vec<Self::Action>;

    fn step<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        action: &Self::Action,
        rng: &mut R,
    ) -> Outcome<Self::State, Self::Obs>;

    fn is_terminal(&self, state: &Self::State) -> bool;

    /// Rollout policy: uniform over the legal actions.
    fn rollout_action<R: Rng + ?Sized>(&self, state: &Self::State, rng: &mut R) -> Self::Action {
        let mut actions = self.actions(state);
        let i = rng.gen_range(0..actions.len());
        actions.swap_remove(i)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Wall-clock planning budget per step, in seconds.
    pub time_per_step: f64,
    /// When set, planning stops after this many simulations instead of on the
    /// clock, making it reproducible.
    pub simulations_per_step: Option<usize>,
    pub max_depth: usize,
    pub ucb_c: f64,
    pub gamma: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            time_per_step: 3.0,
            simulations_per_step: None,
            max_depth: 10,
            ucb_c: 1000.0,
            gamma: 0.99,
        }
    }
}

impl PlannerConfig {
    pub fn budget(&self) -> SearchBudget {
        match self.simulations_per_step {
            Some(n) => SearchBudget::simulations(n),
            None => SearchBudget::time(Duration::from_secs_f64(self.time_per_step)),
        }
    }
}

/// When a search stops.
#[derive(Clone, Copy, Debug)]
pub struct SearchBudget {
    pub deadline: Option<Instant>,
    pub max_simulations: Option<usize>,
}

impl SearchBudget {
    pub fn time(d: Duration) -> Self {
        Self {
            deadline: Some(Instant::now() + d),
            max_simulations: None,
        }
    }

    pub fn simulations(n: usize) -> Self {
        Self {
            deadline: None,
            max_simulations: Some(n),
        }
    }

    pub fn exhausted(&self, done: usize) -> bool {
        self.max_simulations.is_some_and(|n| done >= n) || self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ActionStats {
    pub visits: u32,
    pub value: f64,
}

struct VNode<G: Generative> {
    visits: u32,
    actions: Vec<G::Action>,
    stats: Vec<ActionStats>,
    children: Vec<HashMap<G::Obs, usize>>,
}

/// An incrementally grown POUCT search tree.
pub struct Searcher<'m, G: Generative> {
    model: &'m G,
    config: PlannerConfig,
    nodes: Vec<VNode<G>>,
    simulations: usize,
}

impl<'m, G: Generative> Searcher<'m, G> {
    pub fn new(model: &'m G, config: PlannerConfig) -> Self {
        Self {
            model,
            config,
            nodes: Vec::new(),
            simulations: 0,
        }
    }

    pub fn simulations(&self) -> usize {
        self.simulations
    }

    fn new_node(&mut self, state: &G::State) -> usize {
        let actions = self.model.actions(state);
        let k = actions.len();
        self.nodes.push(VNode {
            visits: 0,
            actions,
            stats: vec![ActionStats::default(); k],
            children: vec![HashMap::new(); k],
        });
        self.nodes.len() - 1
    }

    /// Runs one simulation from a root state drawn from the belief.
    pub fn simulate_from<R: Rng + ?Sized>(&mut self, root_state: G::State, rng: &mut R) {
        if self.nodes.is_empty() {
            self.new_node(&root_state);
        }
        self.simulate(root_state, 0, 0, rng);
        self.simulations += 1;
    }

    fn select(&self, node: usize) -> usize {
        let n = &self.nodes[node];
        if let Some(i) = n.stats.iter().position(|s| s.visits == 0) {
            return i;
        }
        let ln_n = (n.visits.max(1) as f64).ln();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, s) in n.stats.iter().enumerate() {
            let score = s.value + self.config.ucb_c * (ln_n / s.visits as f64).sqrt();
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        best
    }

    fn simulate<R: Rng + ?Sized>(&mut self, state: G::State, node: usize, depth: usize, rng: &mut R) -> f64 {
        if depth >= self.config.max_depth || self.model.is_terminal(&state) {
            return 0.0;
        }
        let a = self.select(node);
        let action = self.nodes[node].actions[a].clone();
        let out = self.model.step(&state, &action, rng);
        let discount = self.config.gamma.powi(out.steps as i32);
        let future = if out.terminal {
            0.0
        } else {
            match self.nodes[node].children[a].get(&out.obs).copied() {
                Some(child) => self.simulate(out.state, child, depth + 1, rng),
                None => {
                    let child = self.new_node(&out.state);
                    self.nodes[node].children[a].insert(out.obs, child);
                    self.rollout(out.state, depth + 1, rng)
                }
            }
        };
        let ret = out.reward + discount * future;
        let n = &mut self.nodes[node];
        n.visits += 1;
        let s = &mut n.stats[a];
        s.visits += 1;
        s.value += (ret - s.value) / s.visits as f64;
        ret
    }

    fn rollout<R: Rng + ?Sized>(&self, mut state: G::State, mut depth: usize, rng: &mut R) -> f64 {
        let mut total = 0.0;
        let mut discount = 1.0;
        while depth < self.config.max_depth && !self.model.is_terminal(&state) {
            let a = self.model.rollout_action(&state, rng);
            let out = self.model.step(&state, &a, rng);
            total += discount * out.reward;
            discount *= self.config.gamma.powi(out.steps as i32);
            if out.terminal {
                break;
            }
            state = out.state;
            depth += 1;
        }
        total
    }

    /// Root action statistics in action order; empty before any simulation.
    pub fn root_table(&self) -> Vec<(G::Action, ActionStats)> {
        self.nodes
            .first()
            .map(|n| n.actions.iter().cloned().zip(n.stats.iter().copied()).collect())
            .unwrap_or_default()
    }

    pub fn root_visits(&self) -> u32 {
        self.nodes.first().map_or(0, |n| n.visits)
    }

    pub fn into_result(self) -> Option<PlanResult<G::Action>> {
        let q_table = self.root_table();
        let best = best_entry(&q_table)?;
        Some(PlanResult {
            action: q_table[best].0.clone(),
            value: q_table[best].1.value,
            q_table,
            simulations: self.simulations,
            fallback: false,
        })
    }
}

/// Index of the visited action with the highest value; ties keep the first.
fn best_entry<A>(table: &[(A, ActionStats)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (_, s)) in table.iter().enumerate() {
        if s.visits == 0 {
            continue;
        }
        if best.is_none_or(|b| s.value > table[b].1.value) {
            best = Some(i);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult<A> {
    pub action: A,
    /// Root value of `action`.
    pub value: f64,
    pub q_table: Vec<(A, ActionStats)>,
    pub simulations: usize,
    /// No simulation finished and the action was drawn at random.
    pub fallback: bool,
}

/// Plans one action with POUCT, drawing a root state from `sample_root` at
/// the start of every simulation.
pub fn pouct_plan<G, F, R>(
    model: &G,
    mut sample_root: F,
    config: &PlannerConfig,
    budget: SearchBudget,
    rng: &mut R,
) -> PlanResult<G::Action>
where
    G: Generative,
    F: FnMut(&mut R) -> G::State,
    R: Rng,
{
    let mut searcher = Searcher::new(model, *config);
    while !budget.exhausted(searcher.simulations()) {
        let s = sample_root(rng);
        searcher.simulate_from(s, rng);
    }
    searcher.into_result().unwrap_or_else(|| {
        let s = sample_root(rng);
        random_fallback(model, &s, rng)
    })
}

pub(crate) fn random_fallback<G: Generative, R: Rng + ?Sized>(
    model: &G,
    state: &G::State,
    rng: &mut R,
) -> PlanResult<G::Action> {
    let actions = model.actions(state);
    let action = actions[rng.gen_range(0..actions.len())].clone();
    PlanResult {
        action,
        value: f64::NAN,
        q_table: Vec::new(),
        simulations: 0,
        fallback: true,
    }
}
