//! Agents: a planner or baseline policy together with the belief it keeps.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::abstraction::{expand_moveop, AbstractInstance, AbstractObs};
use crate::domain::{belief_update_all, FactoredObservation, MosAction, MosDomain, RobotState};
use crate::error::{Error, Result};
use crate::grid::CellAtLevel;
use crate::octree::OctreeBelief;
use crate::par::Execution;
use crate::sim::{random_action, Episode, ExhaustivePolicy};

use super::mr::{mr_pouct_plan, InstanceDiagnostics, PlanDiagnostics};
use super::pomcp::{pomcp_plan, ParticleBelief};
use super::pouct::PlannerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    MrPouct,
    Pouct,
    OptionsPouct,
    Pomcp,
    Exhaustive,
    Random,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 6] = [
        PlannerKind::MrPouct,
        PlannerKind::Pouct,
        PlannerKind::OptionsPouct,
        PlannerKind::Pomcp,
        PlannerKind::Exhaustive,
        PlannerKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::MrPouct => "mr-pouct",
            PlannerKind::Pouct => "pouct",
            PlannerKind::OptionsPouct => "options-pouct",
            PlannerKind::Pomcp => "pomcp",
            PlannerKind::Exhaustive => "exhaustive",
            PlannerKind::Random => "random",
        }
    }

    /// Whether the agent searches, and so is charged planning time.
    pub fn plans(self) -> bool {
        !matches!(self, PlannerKind::Exhaustive | PlannerKind::Random)
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown planner {s:?}")))
    }
}

/// Default resolution levels: `{0, 1}` up to `m = 8`, `{0, 1, 2}` above.
pub fn default_levels(m: u32) -> Vec<u8> {
    if m <= 8 {
        vec![0, 1]
    } else {
        vec![0, 1, 2]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentSettings {
    pub kind: PlannerKind,
    pub planner: PlannerConfig,
    pub levels: Vec<u8>,
    pub k_samples: usize,
    pub particles: usize,
    pub exec: Execution,
}

impl AgentSettings {
    pub fn new(kind: PlannerKind, m: u32) -> Self {
        Self {
            kind,
            planner: PlannerConfig::default(),
            levels: default_levels(m),
            k_samples: 10,
            particles: 1000,
            exec: Execution::default(),
        }
    }
}

/// What an agent decided to do next.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub action: MosAction,
    /// Primitive actions to execute; a macro move expands to several.
    pub primitives: Vec<MosAction>,
    pub diagnostics: Option<PlanDiagnostics>,
    pub simulations: usize,
    pub fallback: bool,
}

impl Decision {
    fn primitive(action: MosAction) -> Self {
        Self {
            action,
            primitives: vec![action],
            diagnostics: None,
            simulations: 0,
            fallback: false,
        }
    }
}

pub enum Agent {
    Octree {
        instances: Vec<AbstractInstance>,
        beliefs: Vec<OctreeBelief>,
    },
    Pomcp {
        instance: AbstractInstance,
        particles: ParticleBelief,
        deprived_at: Option<usize>,
    },
    Exhaustive {
        policy: ExhaustivePolicy,
        last_obs: Option<FactoredObservation>,
    },
    Random,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        settings: &AgentSettings,
        domain: &MosDomain,
        n: usize,
        robot: RobotState,
        rng: &mut R,
    ) -> Result<Self> {
        let m = domain.m;
        let instance = |s: u8, o: u8| {
            AbstractInstance::new(
                s,
                o,
                m,
                domain.sensor.clone(),
                domain.reward,
                &domain.obstacles,
                settings.k_samples,
            )
        };
        let uniform = || -> Result<Vec<OctreeBelief>> { (0..n).map(|_| OctreeBelief::new_uniform(m)).collect() };
        Ok(match settings.kind {
            PlannerKind::MrPouct => {
                if settings.levels.is_empty() {
                    return Err(Error::InvalidConfig("at least one level is required".into()));
                }
                let instances = settings
                    .levels
                    .iter()
                    .map(|&l| instance(l, l))
                    .collect::<Result<Vec<_>>>()?;
                Agent::Octree {
                    instances,
                    beliefs: uniform()?,
                }
            }
            PlannerKind::Pouct => Agent::Octree {
                instances: vec![instance(0, 0)?],
                beliefs: uniform()?,
            },
            PlannerKind::OptionsPouct => {
                let level = settings.levels.iter().copied().filter(|&l| l > 0).min().unwrap_or(1);
                Agent::Octree {
                    instances: vec![instance(0, level)?],
                    beliefs: uniform()?,
                }
            }
            PlannerKind::Pomcp => {
                if settings.particles == 0 {
                    return Err(Error::InvalidConfig("particle count must be positive".into()));
                }
                Agent::Pomcp {
                    instance: instance(0, 0)?,
                    particles: ParticleBelief::uniform(robot, n, m, settings.particles, rng),
                    deprived_at: None,
                }
            }
            PlannerKind::Exhaustive => Agent::Exhaustive {
                policy: ExhaustivePolicy::new(m, &domain.obstacles),
                last_obs: None,
            },
            PlannerKind::Random => Agent::Random,
        })
    }

    pub fn beliefs(&self) -> Option<&[OctreeBelief]> {
        match self {
            Agent::Octree { beliefs, .. } => Some(beliefs),
            _ => None,
        }
    }

    /// Step at which the particle set first ran empty.
    pub fn deprived_at(&self) -> Option<usize> {
        match self {
            Agent::Pomcp { deprived_at, .. } => *deprived_at,
            _ => None,
        }
    }

    pub fn decide<R: Rng>(&mut self, robot: &RobotState, settings: &AgentSettings, rng: &mut R) -> Decision {
        match self {
            Agent::Octree { instances, beliefs } => {
                let plan = mr_pouct_plan(instances, beliefs, *robot, &settings.planner, settings.exec, rng);
                let mut primitives = match plan.action {
                    MosAction::MoveOp(goal) => moves_to(robot, goal),
                    a => vec![a],
                };
                if primitives.is_empty() {
                    primitives.push(random_action(rng));
                }
                Decision {
                    action: plan.action,
                    primitives,
                    simulations: plan.reports.iter().map(|r| r.result.simulations).sum(),
                    fallback: plan.fallback,
                    diagnostics: Some(plan.diagnostics()),
                }
            }
            Agent::Pomcp {
                instance, particles, ..
            } => {
                let budget = settings.planner.budget();
                match pomcp_plan(particles, *robot, instance, &settings.planner, budget, rng) {
                    Ok(res) => {
                        let diagnostics = PlanDiagnostics {
                            action: res.action.to_string(),
                            chosen_level: Some(0),
                            fallback: res.fallback,
                            instances: vec![InstanceDiagnostics {
                                state_level: 0,
                                option_level: 0,
                                simulations: res.simulations,
                                action: res.action.to_string(),
                                value: res.value,
                                q: res
                                    .q_table
                                    .iter()
                                    .filter(|(_, s)| s.visits > 0)
                                    .map(|(a, s)| (a.to_string(), s.visits, s.value))
                                    .collect(),
                            }],
                        };
                        Decision {
                            action: res.action,
                            primitives: vec![res.action],
                            diagnostics: Some(diagnostics),
                            simulations: res.simulations,
                            fallback: res.fallback,
                        }
                    }
                    Err(_) => Decision {
                        fallback: true,
                        ..Decision::primitive(random_action(rng))
                    },
                }
            }
            Agent::Exhaustive { policy, last_obs } => Decision::primitive(policy.next_action(robot, last_obs.as_ref())),
            Agent::Random => Decision::primitive(random_action(rng)),
        }
    }

    /// Folds the result of one executed primitive action into the belief.
    pub fn observe<R: Rng + ?Sized>(
        &mut self,
        action: &MosAction,
        obs: &FactoredObservation,
        robot_after: &RobotState,
        domain: &MosDomain,
        step: usize,
        rng: &mut R,
    ) -> Result<()> {
        match self {
            Agent::Octree { beliefs, .. } => {
                if matches!(action, MosAction::Look(_)) {
                    belief_update_all(beliefs, robot_after.found, obs, &domain.sensor)?;
                }
            }
            Agent::Pomcp {
                instance,
                particles,
                deprived_at,
            } => {
                if !particles.is_empty() {
                    let key: AbstractObs = obs
                        .detections()
                        .into_iter()
                        .map(|(id, c)| (id.index() as u16, CellAtLevel::ground(c)))
                        .collect();
                    particles.update(instance, action, robot_after, &key, rng);
                    if particles.is_empty() {
                        log::debug!("particle deprivation at step {step}");
                        *deprived_at = Some(step);
                    }
                }
            }
            Agent::Exhaustive { last_obs, .. } => {
                *last_obs = matches!(action, MosAction::Look(_)).then(|| obs.clone());
            }
            Agent::Random => {}
        }
        Ok(())
    }
}

fn moves_to(robot: &RobotState, goal: CellAtLevel) -> Vec<MosAction> {
    expand_moveop(robot.pose.position, goal)
        .into_iter()
        .map(MosAction::Move)
        .collect()
}

/// Outcome of executing one decision.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    /// Discounted reward collected, at the episode's discount index.
    pub reward: f64,
    pub steps: usize,
    pub last_obs: Option<FactoredObservation>,
    /// Wall-clock seconds spent updating beliefs.
    pub belief_time: f64,
}

/// Executes `decision` in the episode, expanding macro moves, and updates the
/// agent's belief after every primitive step. Stops early when the episode
/// ends. Belief-update time is charged to the episode when `charge_belief` is
/// set.
pub fn execute_step<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    episode: &mut Episode,
    domain: &MosDomain,
    agent: &mut Agent,
    decision: &Decision,
    charge_belief: bool,
    env_rng: &mut R1,
    agent_rng: &mut R2,
) -> Result<StepOutcome> {
    let before = episode.reward;
    let mut out = StepOutcome {
        reward: 0.0,
        steps: 0,
        last_obs: None,
        belief_time: 0.0,
    };
    for a in &decision.primitives {
        if episode.is_done() {
            break;
        }
        let (obs, _) = episode.step(domain, a, env_rng)?;
        let t0 = Instant::now();
        agent.observe(a, &obs, &episode.state.robot, domain, episode.t - 1, agent_rng)?;
        let dt = t0.elapsed().as_secs_f64();
        out.belief_time += dt;
        if charge_belief {
            episode.charge_time(dt);
        }
        out.steps += 1;
        out.last_obs = Some(obs);
    }
    out.reward = episode.reward - before;
    Ok(out)
}
