//! Online planners: POUCT, its multi-resolution extension, the particle
//! baseline, and the agents that wrap them.

mod agent;
mod mr;
mod pomcp;
mod pouct;

pub use agent::{default_levels, execute_step, Agent, AgentSettings, Decision, PlannerKind, StepOutcome};
pub use mr::{mr_pouct_plan, InstanceDiagnostics, InstanceReport, MrPlan, PlanDiagnostics};
pub use pomcp::{pomcp_plan, ParticleBelief};
pub use pouct::{pouct_plan, ActionStats, Generative, Outcome, PlanResult, PlannerConfig, SearchBudget, Searcher};
