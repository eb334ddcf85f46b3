//! Experiment runner: batches of seeded trials, per-trial diagnostics,
//! aggregation and file outputs.

mod output;
mod stats;

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{MosDomain, MotionNoise, RewardSpec, SensorModel, WorldFile};
use crate::error::{Error, Result};
use crate::grid::FrustumParams;
use crate::octree::BeliefSnapshot;
use crate::par::{self, Execution};
use crate::planner::{default_levels, execute_step, Agent, AgentSettings, PlannerConfig, PlannerKind};
use crate::sim::{generate_world, Episode, EpisodeLimits, StepRecord, World};

pub use output::{bar_chart, read_results, write_outputs, write_results, OutputFiles, RESULT_COLUMNS};
pub use stats::{aggregate, mean_ci95, SummaryRow};

/// Simulations per planning step when a reproducible run is requested
/// without an explicit count.
pub const DEFAULT_SERIAL_SIMULATIONS: usize = 1000;

/// Default total time budget in seconds for an `m^3` grid.
pub fn default_total_time(m: u32) -> f64 {
    let steps = m.max(4).ilog2().saturating_sub(1);
    20.0 * steps as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub m: u32,
    pub n: usize,
    /// Sensor range: the far-plane distance of the frustum.
    pub d: f64,
    pub alpha: f64,
    pub beta: f64,
    pub planner: PlannerKind,
    /// Resolution levels for the multi-resolution planner.
    pub levels: Option<Vec<u8>>,
    pub k_samples: usize,
    pub particles: usize,
    pub time_per_step: f64,
    /// Total time budget per trial; `None` uses [`default_total_time`].
    pub total_time: Option<f64>,
    pub max_steps: usize,
    /// Fixed simulation count per planning step. When set, time is charged
    /// on a virtual clock (`time_per_step` per decision) and trials are
    /// reproducible.
    pub sims_per_step: Option<usize>,
    pub max_depth: usize,
    pub ucb_c: f64,
    pub reward: RewardSpec,
    pub trials: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Execution,
    #[serde(skip)]
    pub world: Option<WorldFile>,
    /// Keep per-step planner diagnostics and final belief snapshots.
    pub record_details: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 8,
            n: 2,
            d: 6.0,
            alpha: 1e5,
            beta: 0.0,
            planner: PlannerKind::MrPouct,
            levels: None,
            k_samples: 10,
            particles: 1000,
            time_per_step: 0.5,
            total_time: None,
            max_steps: 500,
            sims_per_step: None,
            max_depth: 10,
            ucb_c: 1000.0,
            reward: RewardSpec::default(),
            trials: 1,
            seed: 0,
            exec: Execution::default(),
            world: None,
            record_details: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let m = self.world.as_ref().map_or(self.m, |w| w.m);
        if m < 2 || !m.is_power_of_two() {
            return Err(Error::InvalidGridSize(m));
        }
        FrustumParams::with_range(self.d).validate()?;
        if !(self.alpha > 1.0 && self.alpha.is_finite() && (0.0..1.0).contains(&self.beta)) {
            return Err(Error::InvalidSensor {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if !(self.time_per_step > 0.0 && self.time_per_step.is_finite()) {
            return bad(format!("time per step must be positive, got {}", self.time_per_step));
        }
        if let Some(t) = self.total_time {
            if !(t > 0.0) {
                return bad(format!("total time must be positive, got {t}"));
            }
        }
        if self.max_steps == 0 || self.max_depth == 0 || self.k_samples == 0 || self.particles == 0 {
            return bad("step, depth, sample and particle counts must be positive".into());
        }
        let max_level = m.ilog2() as u8;
        if let Some(levels) = &self.levels {
            if levels.is_empty() {
                return bad("at least one level is required".into());
            }
            if let Some(l) = levels.iter().find(|l| **l > max_level) {
                return Err(Error::LevelTooDeep(*l, max_level));
            }
        }
        if self.world.is_none() && self.n > crate::domain::FoundSet::MAX_OBJECTS {
            return Err(Error::WorldTooCrowded(self.n));
        }
        Ok(())
    }

    pub fn virtual_clock(&self) -> bool {
        self.sims_per_step.is_some()
    }

    pub fn total_time(&self, m: u32) -> f64 {
        self.total_time.unwrap_or_else(|| default_total_time(m))
    }

    pub fn agent_settings(&self, m: u32) -> AgentSettings {
        AgentSettings {
            kind: self.planner,
            planner: PlannerConfig {
                time_per_step: self.time_per_step,
                simulations_per_step: self.sims_per_step,
                max_depth: self.max_depth,
                ucb_c: self.ucb_c,
                gamma: self.reward.gamma,
            },
            levels: self.levels.clone().unwrap_or_else(|| default_levels(m)),
            k_samples: self.k_samples,
            particles: self.particles,
            exec: self.exec,
        }
    }

    pub fn domain(&self, world: &World) -> Result<MosDomain> {
        Ok(MosDomain {
            m: world.m,
            sensor: SensorModel::new(self.alpha, self.beta, FrustumParams::with_range(self.d))?,
            reward: self.reward,
            obstacles: world.obstacles.clone(),
            motion: MotionNoise::None,
        })
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    pub fn world_for(&self, trial: usize) -> Result<World> {
        let seed = self.trial_seed(trial);
        match &self.world {
            Some(f) => World::from_file(f, seed),
            None => generate_world(self.m, self.n, seed),
        }
    }
}

/// One row of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub planner: String,
    pub m: u32,
    pub n: usize,
    pub d: f64,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub steps: usize,
    pub reward: f64,
    pub found: usize,
    /// Seconds of the trial's time budget used; virtual time on a virtual
    /// clock.
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialDiagnostics {
    pub trial: usize,
    pub seed: u64,
    pub status: String,
    pub decisions: usize,
    pub simulations: usize,
    pub fallbacks: usize,
    pub planning_time: f64,
    pub belief_time: f64,
    pub finds: usize,
    pub looks: usize,
    /// Looks taken before the first `Find` that found something.
    pub looks_before_first_find: Option<usize>,
    pub first_find_step: Option<usize>,
    pub deprived_at: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct TrialRecord {
    pub result: Option<TrialResult>,
    pub diagnostics: TrialDiagnostics,
    pub world: Option<WorldFile>,
    pub log: Vec<StepRecord>,
    pub beliefs: Vec<BeliefSnapshot>,
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialRecord>,
}

impl Batch {
    /// Results of the trials that completed, in trial order.
    pub fn results(&self) -> Vec<TrialResult> {
        self.trials.iter().filter_map(|t| t.result.clone()).collect()
    }

    pub fn failures(&self) -> usize {
        self.trials.iter().filter(|t| t.result.is_none()).count()
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        aggregate(&self.results())
    }
}

/// Runs one seeded trial to completion.
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<TrialRecord> {
    let seed = config.trial_seed(trial);
    let world = config.world_for(trial)?;
    let domain = config.domain(&world)?;
    let settings = config.agent_settings(world.m);
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    env_rng.set_stream(1);
    let mut agent_rng = ChaCha8Rng::seed_from_u64(seed);
    agent_rng.set_stream(2);
    let mut agent = Agent::new(&settings, &domain, world.n(), world.initial_state().robot, &mut agent_rng)?;
    let limits = EpisodeLimits {
        max_steps: config.max_steps,
        total_time: config.total_time(world.m),
    };
    let mut ep = Episode::new(&world, limits, config.reward.gamma);
    let virtual_clock = config.virtual_clock();
    let started = Instant::now();
    let mut diag = TrialDiagnostics {
        trial,
        seed,
        status: "ok".into(),
        decisions: 0,
        simulations: 0,
        fallbacks: 0,
        planning_time: 0.0,
        belief_time: 0.0,
        finds: 0,
        looks: 0,
        looks_before_first_find: None,
        first_find_step: None,
        deprived_at: None,
    };

    while !ep.is_done() {
        let t0 = Instant::now();
        let decision = agent.decide(&ep.state.robot, &settings, &mut agent_rng);
        let planning = match (virtual_clock, config.planner.plans()) {
            (true, true) => config.time_per_step,
            (true, false) => 0.0,
            (false, _) => t0.elapsed().as_secs_f64(),
        };
        ep.charge_time(planning);
        diag.decisions += 1;
        diag.simulations += decision.simulations;
        diag.fallbacks += decision.fallback as usize;
        diag.planning_time += planning;
        if config.record_details {
            if let Some(p) = decision.diagnostics.clone() {
                ep.attach_plan(p);
            }
        }
        if ep.is_done() {
            break;
        }
        let out = execute_step(&mut ep, &domain, &mut agent, &decision, !virtual_clock, &mut env_rng, &mut agent_rng)?;
        diag.belief_time += out.belief_time;
    }

    let mut looks = 0;
    for r in &ep.log {
        if r.action.starts_with("look") {
            looks += 1;
        }
        if r.action == "find" && r.reward > 0.0 && diag.first_find_step.is_none() {
            diag.first_find_step = Some(r.t);
            diag.looks_before_first_find = Some(looks);
        }
    }
    diag.looks = looks;
    diag.finds = ep.finds;
    diag.deprived_at = agent.deprived_at();
    let wall_time = if virtual_clock {
        ep.time_used
    } else {
        started.elapsed().as_secs_f64()
    };
    let result = TrialResult {
        trial,
        planner: config.planner.name().to_string(),
        m: world.m,
        n: world.n(),
        d: config.d,
        alpha: config.alpha,
        beta: config.beta,
        seed,
        steps: ep.t,
        reward: ep.reward,
        found: ep.found(),
        wall_time,
    };
    let beliefs = match (config.record_details, agent.beliefs()) {
        (true, Some(bs)) => bs.iter().map(|b| b.snapshot()).collect(),
        _ => Vec::new(),
    };
    Ok(TrialRecord {
        result: Some(result),
        diagnostics: diag,
        world: Some(world.to_file()),
        log: std::mem::take(&mut ep.log),
        beliefs,
    })
}

fn failed(config: &ExperimentConfig, trial: usize, status: String) -> TrialRecord {
    log::warn!("trial {trial} failed: {status}");
    TrialRecord {
        result: None,
        diagnostics: TrialDiagnostics {
            trial,
            seed: config.trial_seed(trial),
            status: format!("failed: {status}"),
            decisions: 0,
            simulations: 0,
            fallbacks: 0,
            planning_time: 0.0,
            belief_time: 0.0,
            finds: 0,
            looks: 0,
            looks_before_first_find: None,
            first_find_step: None,
            deprived_at: None,
        },
        world: None,
        log: Vec::new(),
        beliefs: Vec::new(),
    }
}

/// Runs `config.trials` trials with seeds `seed, seed + 1, ...`. A failing
/// trial is recorded and the batch carries on. Trials run in parallel unless
/// the configuration asks for serial execution.
pub fn run_batch(config: &ExperimentConfig) -> Result<Batch> {
    config.validate()?;
    let ids: Vec<usize> = (0..config.trials).collect();
    let trials = par::map(config.exec, &ids, |&t| {
        match panic::catch_unwind(AssertUnwindSafe(|| run_trial(config, t))) {
            Ok(Ok(r)) => {
                if let Some(res) = &r.result {
                    log::info!(
                        "trial {t} {}: reward {:.1} found {}/{} in {} steps",
                        res.planner,
                        res.reward,
                        res.found,
                        res.n,
                        res.steps
                    );
                }
                r
            }
            Ok(Err(e)) => failed(config, t, e.to_string()),
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                failed(config, t, msg)
            }
        }
    });
    Ok(Batch {
        config: config.clone(),
        trials,
    })
}
