//! The simplification loop and episode-based training.
//!
//! Every trajectory starts from its two endpoints. Each iteration samples a
//! start cube at level `S` by query count, lets Agent-Cube walk down towards
//! level `E`, and lets Agent-Point pick one of the top-`K` candidates of the
//! chosen cube. Training runs the same loop under epsilon-greedy exploration
//! and scores every window of `delta` insertions by the drop in range-query
//! difference.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    build_point_state, compute_reward, cube_observation, select_action, DqnAgent, DqnConfig, Policies, PointState,
    Transition, STOP_ACTION,
};
use crate::error::{Error, Result};
use crate::model::{SimplifiedDatabase, TrajectoryDatabase};
use crate::octree::{InsertionTracker, NodeId, Octree};
use crate::query::{workload_diff, QueryWorkload, RangeAccuracyTracker};
use crate::workload::{generate, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverConfig {
    /// Level of the sampled start cube (root is level 1).
    pub start_level: usize,
    /// Deepest level Agent-Cube may reach.
    pub end_level: usize,
    /// Point slots offered to Agent-Point.
    pub k: usize,
    /// Insertions per reward window.
    pub delta: usize,
    /// Range queries in the reward workload.
    pub reward_queries: usize,
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig {
            start_level: 9,
            end_level: 12,
            k: 2,
            delta: 50,
            reward_queries: 100,
        }
    }
}

impl DriverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.start_level && self.start_level <= self.end_level) {
            return Err(Error::Config(format!(
                "need 1 <= S <= E, got S = {}, E = {}",
                self.start_level, self.end_level
            )));
        }
        if self.end_level < 2 {
            return Err(Error::Config("E must be at least 2".into()));
        }
        if self.k == 0 || self.delta == 0 {
            return Err(Error::Config("K and delta must be positive".into()));
        }
        Ok(())
    }
}

/// Walks down from `start`, asking `choose` for an action at every cube.
///
/// Returns at stop, at level `end_level`, or at a leaf. `on_step` sees each
/// decision as `(state, action, next)`, where `next` is `None` when the walk
/// ends with that decision.
pub fn agent_cube_traverse(
    octree: &Octree,
    tracker: &InsertionTracker,
    start: NodeId,
    end_level: usize,
    mut choose: impl FnMut(&[f64], &[bool]) -> Result<usize>,
    mut on_step: impl FnMut(Vec<f64>, usize, Option<(Vec<f64>, Vec<bool>)>),
) -> Result<NodeId> {
    let at_bottom = |id: NodeId| octree.node(id).level >= end_level || octree.node(id).is_leaf();
    let remaining = |id: NodeId| tracker.remaining(id);
    let mut cur = start;
    if at_bottom(cur) {
        return Ok(cur);
    }
    let (mut state, mut mask) = cube_observation(octree, cur, remaining);
    loop {
        let action = choose(&state, &mask)?;
        if action == STOP_ACTION {
            on_step(state, action, None);
            return Ok(cur);
        }
        let child = octree.node(cur).children[action]
            .filter(|&c| tracker.remaining(c) > 0)
            .ok_or(Error::NoValidAction)?;
        cur = child;
        if at_bottom(cur) {
            on_step(state, action, None);
            return Ok(cur);
        }
        let (next_state, next_mask) = cube_observation(octree, cur, remaining);
        on_step(state, action, Some((next_state.clone(), next_mask.clone())));
        state = next_state;
        mask = next_mask;
    }
}

/// Builds the point state of `node`, asks `choose` for a slot and inserts the
/// chosen point. Returns the state, the slot and the inserted point.
#[allow(clippy::too_many_arguments)]
pub fn agent_point_insert(
    octree: &Octree,
    node: NodeId,
    db: &TrajectoryDatabase,
    view: &mut SimplifiedDatabase,
    tracker: &mut InsertionTracker,
    k: usize,
    choose: impl FnOnce(&[f64], &[bool]) -> Result<usize>,
) -> Result<(PointState, usize, (usize, usize))> {
    let state = build_point_state(octree, node, db, view, k)?;
    let slot = choose(&state.values, &state.mask())?;
    let (traj, idx) = state.candidates.get(slot).copied().flatten().ok_or(Error::NoValidAction)?;
    let fresh = view.insert(traj, idx);
    debug_assert!(fresh);
    tracker.mark_inserted(octree, traj, idx);
    Ok((state, slot, (traj, idx)))
}

fn check_budget(db: &TrajectoryDatabase, budget: usize) -> Result<usize> {
    let min = 2 * db.num_trajectories();
    if budget < min {
        return Err(Error::BudgetTooSmall { budget, min });
    }
    Ok(budget.min(db.num_points()))
}

/// Greedy simplification with trained policies over a prebuilt octree.
///
/// `seed` drives start-cube sampling only.
pub fn simplify_with_octree(
    db: &TrajectoryDatabase,
    octree: &Octree,
    budget: usize,
    policies: &Policies,
    cfg: &DriverConfig,
    seed: u64,
) -> Result<SimplifiedDatabase> {
    cfg.validate()?;
    let target = check_budget(db, budget)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut view = SimplifiedDatabase::endpoints_only(db, budget);
    let mut tracker = InsertionTracker::new(octree, &view, cfg.start_level);
    while view.len() < target {
        let start = tracker.sample_start_cube(&mut rng)?;
        let cube = agent_cube_traverse(
            octree,
            &tracker,
            start,
            cfg.end_level,
            |s, m| select_action(&policies.cube, s, m, 0.0, &mut rng),
            |_, _, _| {},
        )?;
        agent_point_insert(octree, cube, db, &mut view, &mut tracker, cfg.k, |s, m| {
            select_action(&policies.point, s, m, 0.0, &mut rng)
        })?;
    }
    Ok(view)
}

/// Greedy simplification; the octree is built with `workload` as the query
/// distribution.
pub fn rl4qdts_simplify(
    db: &TrajectoryDatabase,
    budget: usize,
    workload: &QueryWorkload,
    policies: &Policies,
    cfg: &DriverConfig,
    seed: u64,
) -> Result<SimplifiedDatabase> {
    if policies.k() != cfg.k {
        return Err(Error::Config(format!("policy has K = {}, config has K = {}", policies.k(), cfg.k)));
    }
    let octree = Octree::build(db, workload, cfg.end_level);
    simplify_with_octree(db, &octree, budget, policies, cfg, seed)
}

/// Endpoints plus uniformly random interior points up to the budget.
pub fn random_insertion(db: &TrajectoryDatabase, budget: usize, seed: u64) -> Result<SimplifiedDatabase> {
    let target = check_budget(db, budget)?;
    let mut view = SimplifiedDatabase::endpoints_only(db, budget);
    let interior: Vec<(usize, usize)> = db
        .trajectories()
        .iter()
        .enumerate()
        .flat_map(|(t, tr)| (1..tr.last_index()).map(move |i| (t, i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extra = target - view.len();
    for i in index::sample(&mut rng, interior.len(), extra) {
        let (t, p) = interior[i];
        view.insert(t, p);
    }
    Ok(view)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub driver: DriverConfig,
    pub dqn: DqnConfig,
    pub workload: WorkloadSpec,
    pub episodes_per_db: usize,
    /// Training budget as a fraction of each database's size.
    pub budget_ratio: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        let driver = DriverConfig::default();
        TrainConfig {
            workload: WorkloadSpec {
                count: driver.reward_queries,
                ..WorkloadSpec::data(seed)
            },
            driver,
            dqn: DqnConfig::default(),
            episodes_per_db: 5,
            budget_ratio: 0.01,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.driver.validate()?;
        self.dqn.validate()?;
        self.workload.validate()?;
        if !(self.budget_ratio > 0.0 && self.budget_ratio <= 1.0) {
            return Err(Error::Config(format!("budget ratio {} outside (0, 1]", self.budget_ratio)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub database: usize,
    pub episode: usize,
    pub epsilon: f64,
    pub insertions: usize,
    /// One shared reward per window, in order.
    pub rewards: Vec<f64>,
    pub diff_initial: f64,
    pub diff_final: f64,
    /// Mean range F1 of the greedy policy after the episode on the episode's
    /// database and workload.
    pub greedy_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policies: Policies,
    pub reports: Vec<EpisodeReport>,
    /// Index into `reports` of the selected checkpoint, if any episode ran.
    pub best_episode: Option<usize>,
}

/// Budget used when training on `db`.
pub fn training_budget(db: &TrajectoryDatabase, ratio: f64) -> usize {
    ((ratio * db.num_points() as f64).floor() as usize).max(2 * db.num_trajectories())
}

/// Point transition waiting for its reward or its successor state.
struct PendingPoint {
    state: Vec<f64>,
    action: usize,
    reward: Option<f64>,
    next: Option<Option<(Vec<f64>, Vec<bool>)>>,
}

impl PendingPoint {
    fn ready(&self) -> bool {
        self.reward.is_some() && self.next.is_some()
    }

    fn into_transition(self) -> Transition {
        Transition {
            state: self.state,
            action: self.action,
            reward: self.reward.unwrap_or(0.0),
            next: self.next.flatten(),
        }
    }
}

/// Runs one training episode and updates both agents in place.
#[allow(clippy::too_many_arguments)]
pub fn train_episode(
    db: &TrajectoryDatabase,
    workload: &QueryWorkload,
    budget: usize,
    cfg: &DriverConfig,
    cube_agent: &mut DqnAgent,
    point_agent: &mut DqnAgent,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, f64, f64, usize)> {
    cfg.validate()?;
    let target = check_budget(db, budget)?;
    let octree = Octree::build(db, workload, cfg.end_level);
    let mut view = SimplifiedDatabase::endpoints_only(db, budget);
    let mut tracker = InsertionTracker::new(&octree, &view, cfg.start_level);
    let mut accuracy = RangeAccuracyTracker::new(db, &view, workload)?;
    let diff_initial = accuracy.diff();
    let mut diff_prev = diff_initial;

    let mut rewards = Vec::new();
    let mut cube_window: Vec<(Vec<f64>, usize, Option<(Vec<f64>, Vec<bool>)>)> = Vec::new();
    let mut points: Vec<PendingPoint> = Vec::new();
    let mut insertions = 0;

    while view.len() < target {
        let start = tracker.sample_start_cube(rng)?;
        let cube_net = &cube_agent.online;
        let cube = agent_cube_traverse(
            &octree,
            &tracker,
            start,
            cfg.end_level,
            |s, m| select_action(cube_net, s, m, epsilon, rng),
            |s, a, next| cube_window.push((s, a, next)),
        )?;
        let point_net = &point_agent.online;
        let (state, slot, (traj, idx)) =
            agent_point_insert(&octree, cube, db, &mut view, &mut tracker, cfg.k, |s, m| {
                select_action(point_net, s, m, epsilon, rng)
            })?;
        accuracy.insert(traj, &db.get(traj)[idx]);
        insertions += 1;

        if let Some(prev) = points.last_mut() {
            prev.next = Some(Some((state.values.clone(), state.mask())));
        }
        points.push(PendingPoint {
            state: state.values,
            action: slot,
            reward: None,
            next: None,
        });

        let done = view.len() >= target;
        if insertions % cfg.delta == 0 || done {
            let diff = accuracy.diff();
            let r = compute_reward(diff_prev, diff);
            diff_prev = diff;
            rewards.push(r);
            for (s, a, next) in cube_window.drain(..) {
                cube_agent.remember(Transition {
                    state: s,
                    action: a,
                    reward: r,
                    next,
                });
            }
            for p in points.iter_mut().filter(|p| p.reward.is_none()) {
                p.reward = Some(r);
            }
        }
        if done {
            if let Some(last) = points.last_mut() {
                last.next.get_or_insert(None);
            }
        }
        let (ready, waiting): (Vec<_>, Vec<_>) = points.drain(..).partition(PendingPoint::ready);
        for p in ready {
            point_agent.remember(p.into_transition());
        }
        points = waiting;

        cube_agent.update(rng)?;
        point_agent.update(rng)?;
    }
    Ok((rewards, diff_initial, diff_prev, insertions))
}

/// Trains both agents over `databases`, `episodes_per_db` episodes each, and
/// keeps the policies with the best greedy training F1.
pub fn train(databases: &[TrajectoryDatabase], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Policies::init(cfg.driver.k, rng.random());
    let mut cube_agent = DqnAgent::new(init.cube.clone(), cfg.dqn);
    let mut point_agent = DqnAgent::new(init.point.clone(), cfg.dqn);
    let mut best: Option<(f64, usize, Policies)> = None;
    let mut reports = Vec::new();
    let mut episode_index = 0;

    for (d, db) in databases.iter().enumerate() {
        if db.is_empty() {
            return Err(Error::Config(format!("training database {d} is empty")));
        }
        let budget = training_budget(db, cfg.budget_ratio);
        for e in 0..cfg.episodes_per_db {
            let workload = generate(db, &cfg.workload.with_seed(rng.random()))?;
            let epsilon = cfg.dqn.epsilon_at(episode_index);
            let (rewards, diff_initial, diff_final, insertions) = train_episode(
                db,
                &workload,
                budget,
                &cfg.driver,
                &mut cube_agent,
                &mut point_agent,
                epsilon,
                &mut rng,
            )?;
            let current = Policies {
                cube: cube_agent.online.clone(),
                point: point_agent.online.clone(),
            };
            let view = rl4qdts_simplify(db, budget, &workload, &current, &cfg.driver, rng.random())?;
            let greedy_f1 = 1.0 - workload_diff(db, &view, &workload)?;
            if best.as_ref().is_none_or(|(f, _, _)| greedy_f1 > *f) {
                best = Some((greedy_f1, reports.len(), current));
            }
            reports.push(EpisodeReport {
                database: d,
                episode: e,
                epsilon,
                insertions,
                rewards,
                diff_initial,
                diff_final,
                greedy_f1,
            });
            episode_index += 1;
        }
    }
    Ok(match best {
        Some((_, i, policies)) => TrainOutcome {
            policies,
            reports,
            best_episode: Some(i),
        },
        None => TrainOutcome {
            policies: init,
            reports,
            best_episode: None,
        },
    })
}
