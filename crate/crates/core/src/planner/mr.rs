//! Multi-resolution planning: one POUCT search per abstract instance, the
//! action with the highest root value across instances wins.

use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::abstraction::{AbstractInstance, AbstractModel};
use crate::domain::{MosAction, RobotState, PRIMITIVE_ACTIONS};
use crate::octree::OctreeBelief;
use crate::par::{self, Execution};

use super::pouct::{pouct_plan, PlanResult, PlannerConfig, SearchBudget, Searcher};

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceReport {
    pub state_level: u8,
    pub option_level: u8,
    pub result: PlanResult<MosAction>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MrPlan {
    pub action: MosAction,
    /// Index of the instance whose action was chosen.
    pub chosen: Option<usize>,
    pub reports: Vec<InstanceReport>,
    /// Every instance failed to finish a simulation.
    pub fallback: bool,
}

/// Compact, serializable account of one planning call.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlanDiagnostics {
    pub action: String,
    pub chosen_level: Option<u8>,
    pub fallback: bool,
    pub instances: Vec<InstanceDiagnostics>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceDiagnostics {
    pub state_level: u8,
    pub option_level: u8,
    pub simulations: usize,
    pub action: String,
    pub value: f64,
    /// `(action, visits, value)` for every visited root action.
    pub q: Vec<(String, u32, f64)>,
}

impl MrPlan {
    pub fn diagnostics(&self) -> PlanDiagnostics {
        PlanDiagnostics {
            action: self.action.to_string(),
            chosen_level: self.chosen.map(|i| self.reports[i].state_level),
            fallback: self.fallback,
            instances: self
                .reports
                .iter()
                .map(|r| InstanceDiagnostics {
                    state_level: r.state_level,
                    option_level: r.option_level,
                    simulations: r.result.simulations,
                    action: r.result.action.to_string(),
                    value: r.result.value,
                    q: r
                        .result
                        .q_table
                        .iter()
                        .filter(|(_, s)| s.visits > 0)
                        .map(|(a, s)| (a.to_string(), s.visits, s.value))
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Plans one step with every instance and returns the best root action.
///
/// With a simulation budget the instances run independently (in parallel
/// when allowed) and the result depends only on `rng`. With a time budget
/// they share one deadline: each runs on its own thread when parallel
/// execution is enabled, otherwise they are interleaved one simulation at a
/// time.
pub fn mr_pouct_plan<R: Rng>(
    instances: &[AbstractInstance],
    beliefs: &[OctreeBelief],
    robot: RobotState,
    config: &PlannerConfig,
    exec: Execution,
    rng: &mut R,
) -> MrPlan {
    let seeds: Vec<u64> = instances.iter().map(|_| rng.gen()).collect();
    let models: Vec<AbstractModel<'_>> = instances
        .iter()
        .map(|instance| AbstractModel { instance, beliefs })
        .collect();
    let sample = |i: usize| move |r: &mut ChaCha8Rng| instances[i].sample_state(robot, beliefs, r);
    let idx: Vec<usize> = (0..instances.len()).collect();

    let results: Vec<PlanResult<MosAction>> = match config.simulations_per_step {
        Some(n) => par::map(exec, &idx, |&i| {
            let mut r = ChaCha8Rng::seed_from_u64(seeds[i]);
            pouct_plan(&models[i], sample(i), config, SearchBudget::simulations(n), &mut r)
        }),
        None => {
            let budget = config.budget();
            if exec.is_parallel() && instances.len() > 1 {
                thread::scope(|scope| {
                    let handles: Vec<_> = idx
                        .iter()
                        .map(|&i| {
                            let model = &models[i];
                            let seed = seeds[i];
                            scope.spawn(move || {
                                let mut r = ChaCha8Rng::seed_from_u64(seed);
                                pouct_plan(model, sample(i), config, budget, &mut r)
                            })
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("planner thread panicked"))
                        .collect()
                })
            } else {
                interleaved(&models, instances, beliefs, robot, config, budget, &seeds)
            }
        }
    };
    select(instances, results, rng)
}

fn interleaved(
    models: &[AbstractModel<'_>],
    instances: &[AbstractInstance],
    beliefs: &[OctreeBelief],
    robot: RobotState,
    config: &PlannerConfig,
    budget: SearchBudget,
    seeds: &[u64],
) -> Vec<PlanResult<MosAction>> {
    let mut searchers: Vec<_> = models.iter().map(|m| Searcher::new(m, *config)).collect();
    let mut rngs: Vec<ChaCha8Rng> = seeds.iter().map(|s| ChaCha8Rng::seed_from_u64(*s)).collect();
    let mut total = 0;
    'outer: loop {
        for (i, searcher) in searchers.iter_mut().enumerate() {
            if budget.exhausted(total) {
                break 'outer;
            }
            let s = instances[i].sample_state(robot, beliefs, &mut rngs[i]);
            searcher.simulate_from(s, &mut rngs[i]);
            total += 1;
        }
    }
    searchers
        .into_iter()
        .zip(rngs.iter_mut())
        .enumerate()
        .map(|(i, (searcher, r))| {
            searcher.into_result().unwrap_or_else(|| {
                let s = instances[i].sample_state(robot, beliefs, r);
                super::pouct::random_fallback(&models[i], &s, r)
            })
        })
        .collect()
}

fn select<R: Rng>(instances: &[AbstractInstance], results: Vec<PlanResult<MosAction>>, rng: &mut R) -> MrPlan {
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.sort_by_key(|&i| (instances[i].state_level, instances[i].option_level));
    let mut chosen: Option<usize> = None;
    for &i in &order {
        if results[i].fallback {
            continue;
        }
        if chosen.is_none_or(|c| results[i].value > results[c].value) {
            chosen = Some(i);
        }
    }
    let reports: Vec<InstanceReport> = instances
        .iter()
        .zip(results)
        .map(|(inst, result)| InstanceReport {
            state_level: inst.state_level,
            option_level: inst.option_level,
            result,
        })
        .collect();
    match chosen {
        Some(i) => MrPlan {
            action: reports[i].result.action,
            chosen,
            reports,
            fallback: false,
        },
        None => MrPlan {
            action: PRIMITIVE_ACTIONS[rng.gen_range(0..PRIMITIVE_ACTIONS.len())],
            chosen: None,
            reports,
            fallback: true,
        },
    }
}
