//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test -p mos3d-cli --test acceptance -- 1 4 9`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use common::{all_cells, cell_index, total_variation, DenseBelief, TwoCell};
use mos3d::abstraction::{abstract_state, AbstractInstance, AbstractObs};
use mos3d::bench::{mean_ci95, run_batch, Batch, ExperimentConfig};
use mos3d::domain::{
    sample_observation, MosAction, MosDomain, MosState, MotionNoise, RewardSpec, RobotState, Scene, SensorModel,
    PRIMITIVE_ACTIONS,
};
use mos3d::grid::{max_coverage_fraction, CameraPose, CellAtLevel, Direction, FrustumParams, GridCell, ObjectId};
use mos3d::octree::{LabeledVoxel, OctreeBelief, VoxelLabel};
use mos3d::par::Execution;
use mos3d::planner::{pouct_plan, PlannerConfig, PlannerKind, SearchBudget};
use mos3d::sim::generate_world;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BELIEF_ABS_TOL: f64 = 1e-9;
const NORMALIZER_REL_TOL: f64 = 1e-9;
const BELIEF_TIME_LIMIT: f64 = 5.0;
const SAMPLES: usize = 100_000;
const SAMPLE_TV_LIMIT: f64 = 0.01;
const SAMPLE_TIME_LIMIT: f64 = 2.0;
const COVERAGE_TOL: f64 = 0.02;
const PARITY_MARGIN: f64 = 0.3;
const DEPRIVATION_SHARE: f64 = 0.8;
const DESK_TIME_PER_STEP: f64 = 0.5;
const DESK_TRIALS: usize = 20;
const DESK_TIME_LIMIT: f64 = 3600.0;
const TRACE_STEPS: usize = 1000;
const TWO_CELL_RUNS: u64 = 100;
const TWO_CELL_REQUIRED: usize = 95;

struct Check {
    pass: bool,
    detail: String,
}

impl Check {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn random_cell<R: Rng>(m: u32, rng: &mut R) -> GridCell {
    let m = m as i32;
    GridCell::new(rng.gen_range(0..m), rng.gen_range(0..m), rng.gen_range(0..m))
}

/// Octree and dense filters fed the same random Looks. Returns the largest
/// probability error and the largest relative normalizer error seen after
/// any update.
fn belief_errors(m: u32, alpha: f64, beta: f64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sensor = SensorModel::new(alpha, beta, FrustumParams::with_range(m as f64)).unwrap();
    let target = random_cell(m, &mut rng);
    let scene = Scene::new(m, vec![vec![target]], &[]);
    let mut octree = OctreeBelief::new_uniform(m).unwrap();
    let mut dense = DenseBelief::uniform(m);
    let (mut prob_err, mut norm_err) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let dir = Direction::ALL[rng.gen_range(0..6)];
        let state = MosState {
            robot: RobotState::new(CameraPose::new(random_cell(m, &mut rng), dir)),
            objects: vec![target],
        };
        let obs = sample_observation(&scene, &state, &MosAction::Look(dir), &sensor, &mut rng);
        octree.update(&obs.per_object[0], alpha, beta, ObjectId(1)).unwrap();
        dense.update(&obs.per_object[0], alpha, beta, ObjectId(1));
        let total: f64 = octree.dense_ground_values().iter().sum();
        norm_err = norm_err.max((octree.normalizer() - total).abs() / total);
        for c in all_cells(m) {
            prob_err = prob_err.max((octree.prob_at_ground(&c).unwrap() - dense.prob(&c)).abs());
        }
    }
    (prob_err, norm_err)
}

fn belief_sweep() -> (f64, f64, f64) {
    let start = Instant::now();
    let (mut p, mut n) = (0.0f64, 0.0f64);
    for m in [2, 4, 8] {
        for (alpha, beta) in [(1e5, 0.0), (100.0, 0.3)] {
            for seed in 0..5 {
                let (pe, ne) = belief_errors(m, alpha, beta, seed);
                p = p.max(pe);
                n = n.max(ne);
            }
        }
    }
    (p, n, start.elapsed().as_secs_f64())
}

fn criterion_1() -> Check {
    let (p, _, secs) = belief_sweep();
    Check::new(
        p <= BELIEF_ABS_TOL && secs < BELIEF_TIME_LIMIT,
        format!("max |octree - dense| = {p:.2e} (limit {BELIEF_ABS_TOL:.0e}), {secs:.3}s (limit {BELIEF_TIME_LIMIT}s)"),
    )
}

fn criterion_2() -> Check {
    let (_, n, _) = belief_sweep();
    Check::new(
        n <= NORMALIZER_REL_TOL,
        format!("max relative normalizer error {n:.2e} (limit {NORMALIZER_REL_TOL:.0e})"),
    )
}

/// Mass cleared from half the grid and gathered into two small clusters.
fn searched_belief() -> OctreeBelief {
    let mut b = OctreeBelief::new_uniform(8).unwrap();
    let cleared: Vec<_> = all_cells(8)
        .into_iter()
        .filter(|c| c.z < 4)
        .map(|c| LabeledVoxel::new(c, VoxelLabel::Free))
        .collect();
    b.update(&cleared, 100.0, 0.05, ObjectId(1)).unwrap();
    let cluster = |x0: i32, y0: i32, z0: i32, side: i32| -> Vec<LabeledVoxel> {
        all_cells(8)
            .into_iter()
            .filter(|c| (x0..x0 + side).contains(&c.x) && (y0..y0 + side).contains(&c.y) && (z0..z0 + side).contains(&c.z))
            .map(|c| LabeledVoxel::new(c, VoxelLabel::Object(ObjectId(1))))
            .collect()
    };
    for _ in 0..2 {
        b.update(&cluster(5, 5, 5, 2), 100.0, 0.05, ObjectId(1)).unwrap();
    }
    b.update(&cluster(1, 2, 4, 3), 100.0, 0.05, ObjectId(1)).unwrap();
    b
}

fn criterion_3() -> Check {
    let b = searched_belief();
    let cells = all_cells(8);
    let expected: Vec<f64> = cells.iter().map(|c| b.prob_at_ground(c).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = vec![0.0; cells.len()];
    let mut max_visits = 0;
    let start = Instant::now();
    for _ in 0..SAMPLES {
        let (c, visits) = b.sample_counted(0, &mut rng);
        max_visits = max_visits.max(visits);
        counts[cell_index(8, &c.min_corner())] += 1.0;
    }
    let secs = start.elapsed().as_secs_f64();
    let empirical: Vec<f64> = counts.iter().map(|k| k / SAMPLES as f64).collect();
    let tv = total_variation(&empirical, &expected);
    let l_max = b.max_level() as usize;
    Check::new(
        tv < SAMPLE_TV_LIMIT && secs < SAMPLE_TIME_LIMIT && max_visits <= l_max,
        format!(
            "TV {tv:.4} (limit {SAMPLE_TV_LIMIT}), {secs:.3}s (limit {SAMPLE_TIME_LIMIT}s), \
             max node visits {max_visits} (limit {l_max})"
        ),
    )
}

fn criterion_4() -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    for (m, d, expected) in [(4, 4.0, 0.172), (8, 6.0, 0.088), (16, 10.0, 0.047), (32, 16.0, 0.026)] {
        let f = max_coverage_fraction(m, &FrustumParams::with_range(d), Execution::default()).unwrap();
        pass &= (f - expected).abs() <= COVERAGE_TOL;
        parts.push(format!("m={m},d={d}: {:.2}% (target {:.1}%)", 100.0 * f, 100.0 * expected));
    }
    Check::new(pass, format!("{} (tolerance +/-{:.0}pp)", parts.join("; "), 100.0 * COVERAGE_TOL))
}

fn desk_batch(m: u32, d: f64, planner: PlannerKind) -> Batch {
    let config = ExperimentConfig {
        m,
        n: 2,
        d,
        alpha: 1e5,
        beta: 0.0,
        planner,
        time_per_step: DESK_TIME_PER_STEP,
        trials: DESK_TRIALS,
        seed: 1000,
        exec: Execution::Serial,
        ..Default::default()
    };
    run_batch(&config).unwrap()
}

fn means(batch: &Batch) -> (f64, f64) {
    let row = &batch.summary()[0];
    (row.reward_mean, row.found_mean)
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let ex4 = desk_batch(4, 4.0, PlannerKind::Exhaustive);
    let mr4 = desk_batch(4, 4.0, PlannerKind::MrPouct);
    let mr16 = desk_batch(16, 10.0, PlannerKind::MrPouct);
    let pouct16 = desk_batch(16, 10.0, PlannerKind::Pouct);
    let pomcp16 = desk_batch(16, 10.0, PlannerKind::Pomcp);
    let secs = start.elapsed().as_secs_f64();

    let (_, ex4_found) = means(&ex4);
    let (_, mr4_found) = means(&mr4);
    let (mr16_reward, mr16_found) = means(&mr16);
    let (_, pouct16_found) = means(&pouct16);
    let (pomcp16_reward, _) = means(&pomcp16);
    let deprived = pomcp16.trials.iter().filter(|t| t.diagnostics.deprived_at.is_some()).count();
    let deprived_early = pomcp16
        .trials
        .iter()
        .filter(|t| t.diagnostics.deprived_at.is_some_and(|s| s <= 10))
        .count();
    let share = deprived as f64 / pomcp16.trials.len() as f64;

    let a = ex4_found >= mr4_found - PARITY_MARGIN;
    let b = mr16_reward > pomcp16_reward && share >= DEPRIVATION_SHARE;
    let c = mr16_found >= pouct16_found - PARITY_MARGIN;
    let t = secs <= DESK_TIME_LIMIT;
    let flag = |ok: bool| if ok { "ok" } else { "FAILED" };
    Check::new(
        a && b && c && t,
        format!(
            "(a) {} exhaustive found {ex4_found:.2} vs mr-pouct {mr4_found:.2}; \
             (b) {} mr-pouct reward {mr16_reward:.1} vs pomcp {pomcp16_reward:.1}, pomcp deprived in {deprived}/{} \
             ({deprived_early} within 10 steps); \
             (c) {} mr-pouct found {mr16_found:.2} vs pouct {pouct16_found:.2}; \
             runtime {} {:.1} min",
            flag(a),
            flag(b),
            pomcp16.trials.len(),
            flag(c),
            flag(t),
            secs / 60.0
        ),
    )
}

fn noise_batch(alpha: f64, beta: f64) -> Batch {
    let config = ExperimentConfig {
        m: 8,
        n: 2,
        d: 6.0,
        alpha,
        beta,
        planner: PlannerKind::MrPouct,
        sims_per_step: Some(2000),
        trials: 20,
        seed: 2000,
        exec: Execution::Serial,
        ..Default::default()
    };
    run_batch(&config).unwrap()
}

fn mean_looks_before_find(batch: &Batch) -> (f64, usize) {
    let looks: Vec<f64> = batch
        .trials
        .iter()
        .filter_map(|t| t.diagnostics.looks_before_first_find.map(|l| l as f64))
        .collect();
    (mean_ci95(&looks).0, looks.len())
}

fn criterion_6() -> Check {
    let (noisy, noisy_n) = mean_looks_before_find(&noise_batch(10.0, 0.0));
    let (clean, clean_n) = mean_looks_before_find(&noise_batch(1e5, 0.0));
    let low = noise_batch(100.0, 0.3).results();
    let high = noise_batch(100.0, 0.8).results();
    let (low_mean, low_ci) = mean_ci95(&low.iter().map(|r| r.reward).collect::<Vec<_>>());
    let (high_mean, high_ci) = mean_ci95(&high.iter().map(|r| r.reward).collect::<Vec<_>>());
    // Full width of the narrower of the two intervals.
    let width = 2.0 * low_ci.unwrap_or(0.0).min(high_ci.unwrap_or(0.0));
    let diff = (low_mean - high_mean).abs();
    let looks_ok = noisy > clean;
    let beta_ok = diff < width;
    Check::new(
        looks_ok && beta_ok,
        format!(
            "looks before first find: alpha=10 {noisy:.2} ({noisy_n} trials) vs alpha=1e5 {clean:.2} ({clean_n} trials); \
             reward beta=0.3 {low_mean:.1} vs beta=0.8 {high_mean:.1}, |diff| {diff:.1} vs CI width {width:.1}"
        ),
    )
}

fn criterion_7() -> Check {
    let world = generate_world(8, 3, 77).unwrap();
    let sensor = SensorModel::new(50.0, 0.3, FrustumParams::with_range(6.0)).unwrap();
    let obstacles: Vec<GridCell> = [GridCell::new(2, 2, 2), GridCell::new(6, 1, 3), GridCell::new(4, 5, 6)]
        .into_iter()
        .filter(|c| !world.objects.iter().flatten().any(|o| o == c) && *c != world.robot_start.position)
        .collect();
    let domain = MosDomain {
        m: 8,
        sensor: sensor.clone(),
        reward: RewardSpec::default(),
        obstacles: obstacles.clone(),
        motion: MotionNoise::None,
    };
    let instance = AbstractInstance::new(0, 0, 8, sensor, RewardSpec::default(), &obstacles, 10).unwrap();
    let mut ground = world.initial_state();
    let mut abs = abstract_state(&ground, 0);
    let mut actions = ChaCha8Rng::seed_from_u64(1);
    let mut rg = ChaCha8Rng::seed_from_u64(2);
    let mut ra = ChaCha8Rng::seed_from_u64(2);
    let mut detections = 0;
    for t in 0..TRACE_STEPS {
        let a = PRIMITIVE_ACTIONS[actions.gen_range(0..13)];
        let (gs, go, gr) = domain.generative(&ground, &a, &mut rg);
        let out = instance.step(&abs, &a, &[], &mut ra);
        let expected: AbstractObs = go
            .detections()
            .into_iter()
            .map(|(id, c)| (id.index() as u16, CellAtLevel::ground(c)))
            .collect();
        detections += expected.len();
        if out.state != abstract_state(&gs, 0) || out.obs != expected || out.reward != gr {
            return Check::new(false, format!("traces diverge at step {t}"));
        }
        ground = gs;
        abs = out.state;
    }
    Check::new(
        rg.gen::<u64>() == ra.gen::<u64>(),
        format!("{TRACE_STEPS} steps identical ({detections} detections)"),
    )
}

fn criterion_8() -> Check {
    let problem = TwoCell {
        prior0: 0.6,
        accuracy: 0.85,
        listen_cost: 1.0,
        hit: 10.0,
        miss: -30.0,
        gamma: 0.95,
    };
    let depth = 6;
    let best = problem.optimal_action(depth);
    let config = PlannerConfig {
        max_depth: depth,
        ucb_c: 40.0,
        gamma: problem.gamma,
        ..Default::default()
    };
    let hits = (0..TWO_CELL_RUNS)
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let plan = pouct_plan(
                &problem,
                |r: &mut ChaCha8Rng| if r.gen::<f64>() < problem.prior0 { 0 } else { 1 },
                &config,
                SearchBudget::simulations(4000),
                &mut rng,
            );
            plan.action == best
        })
        .count();
    Check::new(
        hits >= TWO_CELL_REQUIRED,
        format!("optimal action {best:?} chosen in {hits}/{TWO_CELL_RUNS} runs (need {TWO_CELL_REQUIRED})"),
    )
}

fn run_cli(out: &Path, planner: &str) -> std::io::Result<std::process::ExitStatus> {
    Command::new(env!("CARGO_BIN_EXE_mos3d"))
        .args(["--size", "4", "--num-objects", "2", "--trials", "5", "--seed", "7", "--serial"])
        .args(["--planner", planner, "--max-steps", "60"])
        .arg("--out")
        .arg(out)
        .stdout(Stdio::null())
        .status()
}

fn criterion_9() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for planner in ["mr-pouct", "pomcp"] {
        let (a, b) = (dir.path().join(format!("{planner}-a")), dir.path().join(format!("{planner}-b")));
        let ok = run_cli(&a, planner).is_ok_and(|s| s.success()) && run_cli(&b, planner).is_ok_and(|s| s.success());
        let same = ok
            && std::fs::read(a.join("results.csv"))
                .ok()
                .zip(std::fs::read(b.join("results.csv")).ok())
                .is_some_and(|(x, y)| x == y);
        pass &= same;
        parts.push(format!("{planner}: {}", if same { "identical" } else { "differ" }));
    }
    Check::new(pass, parts.join(", "))
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Check); 9] = [
        (1, "octree belief matches dense Bayes filter", criterion_1),
        (2, "incremental normalizer equals ground sum", criterion_2),
        (3, "octree sampling fidelity", criterion_3),
        (4, "frustum coverage fractions", criterion_4),
        (5, "desk-scale planner trends", criterion_5),
        (6, "sensor noise behavior", criterion_6),
        (7, "level-0 abstraction replays ground trace", criterion_7),
        (8, "POUCT picks the two-cell optimum", criterion_8),
        (9, "serial batches are byte-identical", criterion_9),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {id} {}: {name}: {} [{:.1}s]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
