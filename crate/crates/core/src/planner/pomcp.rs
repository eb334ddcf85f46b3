//! Particle-belief baseline: POUCT over the ground model with root states
//! drawn from a particle set, filtered by exact observation match.

use rand::Rng;

use crate::abstraction::{AbstractInstance, AbstractModel, AbstractObs, AbstractState};
use crate::domain::{MosAction, RobotState};
use crate::error::{Error, Result};
use crate::grid::{CellAtLevel, GridCell};

use super::pouct::{pouct_plan, PlanResult, PlannerConfig, SearchBudget};

#[derive(Clone, Debug)]
pub struct ParticleBelief {
    particles: Vec<AbstractState>,
    capacity: usize,
}

impl ParticleBelief {
    /// `capacity` particles with every object placed uniformly at random.
    pub fn uniform<R: Rng + ?Sized>(robot: RobotState, n: usize, m: u32, capacity: usize, rng: &mut R) -> Self {
        let m = m as i32;
        let particles = (0..capacity)
            .map(|_| AbstractState {
                robot,
                objects: (0..n)
                    .map(|_| {
                        CellAtLevel::ground(GridCell::new(rng.gen_range(0..m), rng.gen_range(0..m), rng.gen_range(0..m)))
                    })
                    .collect(),
            })
            .collect();
        Self { particles, capacity }
    }

    pub fn from_particles(particles: Vec<AbstractState>, capacity: usize) -> Self {
        Self { particles, capacity }
    }

    pub fn particles(&self) -> &[AbstractState] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Propagates every particle through the model and keeps those that
    /// reproduce the real robot state and observation exactly, then resamples
    /// back to capacity. No new particles are invented, so the set can run
    /// empty.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        instance: &AbstractInstance,
        action: &MosAction,
        robot_after: &RobotState,
        obs: &AbstractObs,
        rng: &mut R,
    ) {
        let survivors: Vec<AbstractState> = self
            .particles
            .iter()
            .filter_map(|p| {
                let out = instance.step(p, action, &[], rng);
                (out.state.robot == *robot_after && out.obs == *obs).then_some(out.state)
            })
            .collect();
        self.particles = if survivors.is_empty() || survivors.len() == self.capacity {
            survivors
        } else {
            (0..self.capacity)
                .map(|_| survivors[rng.gen_range(0..survivors.len())].clone())
                .collect()
        };
    }
}

/// Plans with root states drawn uniformly from the particles.
pub fn pomcp_plan<R: Rng>(
    belief: &ParticleBelief,
    robot: RobotState,
    instance: &AbstractInstance,
    config: &PlannerConfig,
    budget: SearchBudget,
    rng: &mut R,
) -> Result<PlanResult<MosAction>> {
    if belief.is_empty() {
        return Err(Error::EmptyParticles);
    }
    let model = AbstractModel {
        instance,
        beliefs: &[],
    };
    let particles = belief.particles();
    Ok(pouct_plan(
        &model,
        |r: &mut R| {
            let mut s = particles[r.gen_range(0..particles.len())].clone();
            s.robot = robot;
            s
        },
        config,
        budget,
        rng,
    ))
}
