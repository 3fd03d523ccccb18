//! Error-driven Top-Down and Bottom-Up simplifiers.
//!
//! Both run on a set of trajectories through a single priority queue, so the
//! per-trajectory algorithms, the E adaptation (each trajectory on its own
//! share of the budget) and the W adaptation (one queue for the whole
//! database) share the same code path.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{indexed_point_error, segment_error, ErrorMeasure};
use crate::model::{SimplifiedDatabase, Trajectory, TrajectoryDatabase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    TopDown,
    BottomUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Adaptation {
    /// Each trajectory simplified alone with a proportional budget.
    E,
    /// The database simplified as a whole.
    W,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub algorithm: Algorithm,
    pub measure: ErrorMeasure,
    pub adaptation: Adaptation,
}

impl BaselineSpec {
    pub fn new(algorithm: Algorithm, measure: ErrorMeasure, adaptation: Adaptation) -> Self {
        BaselineSpec {
            algorithm,
            measure,
            adaptation,
        }
    }

    /// All 16 combinations.
    pub fn all() -> Vec<BaselineSpec> {
        let mut out = Vec::with_capacity(16);
        for algorithm in [Algorithm::TopDown, Algorithm::BottomUp] {
            for adaptation in [Adaptation::E, Adaptation::W] {
                for measure in ErrorMeasure::ALL {
                    out.push(BaselineSpec::new(algorithm, measure, adaptation));
                }
            }
        }
        out
    }

    /// Algorithm-adaptation label such as `topdown-e`.
    pub fn algo_label(&self) -> &'static str {
        match (self.algorithm, self.adaptation) {
            (Algorithm::TopDown, Adaptation::E) => "topdown-e",
            (Algorithm::TopDown, Adaptation::W) => "topdown-w",
            (Algorithm::BottomUp, Adaptation::E) => "bottomup-e",
            (Algorithm::BottomUp, Adaptation::W) => "bottomup-w",
        }
    }

    pub fn run(&self, db: &TrajectoryDatabase, budget: usize) -> Result<SimplifiedDatabase> {
        match self.adaptation {
            Adaptation::E => adapt_e(db, budget, self.algorithm, self.measure),
            Adaptation::W => adapt_w(db, budget, self.algorithm, self.measure),
        }
    }
}

impl fmt::Display for BaselineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.algo_label(), self.measure)
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "topdown" => Ok(Algorithm::TopDown),
            "bottomup" => Ok(Algorithm::BottomUp),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

impl FromStr for Adaptation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e" => Ok(Adaptation::E),
            "w" => Ok(Adaptation::W),
            other => Err(Error::Config(format!("unknown adaptation {other:?}"))),
        }
    }
}

impl BaselineSpec {
    /// Parses an `algo-adaptation` label (`topdown-e`) plus a measure.
    pub fn parse(label: &str, measure: ErrorMeasure) -> Result<Self> {
        let (algo, adapt) = label
            .rsplit_once('-')
            .ok_or_else(|| Error::Config(format!("expected <algorithm>-<e|w>, got {label:?}")))?;
        Ok(BaselineSpec::new(algo.parse()?, measure, adapt.parse()?))
    }
}

/// Float key with a total order.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Largest-error interior point of `start -> end`, smallest index on ties.
fn worst_point(measure: ErrorMeasure, traj: &Trajectory, start: usize, end: usize) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for i in start + 1..end {
        let e = indexed_point_error(measure, traj, start, end, i);
        if best.is_none_or(|(b, _)| e > b) {
            best = Some((e, i));
        }
    }
    best
}

/// Top-Down over `trajs`, inserting `extra` points beyond the endpoints.
/// Returns sorted kept sets.
fn top_down(trajs: &[&Trajectory], extra: usize, measure: ErrorMeasure) -> Vec<Vec<usize>> {
    // max-heap on error, then smallest (traj, idx)
    type Entry = (Key, Reverse<usize>, Reverse<usize>, usize, usize);
    let mut heap: BinaryHeap<Entry> = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Entry>, k: usize, s: usize, e: usize| {
        if let Some((err, i)) = worst_point(measure, trajs[k], s, e) {
            heap.push((Key(err), Reverse(k), Reverse(i), s, e));
        }
    };
    let mut kept: Vec<Vec<usize>> = trajs.iter().map(|t| vec![0, t.last_index()]).collect();
    for (k, t) in trajs.iter().enumerate() {
        push(&mut heap, k, 0, t.last_index());
    }
    for _ in 0..extra {
        let Some((_, Reverse(k), Reverse(i), s, e)) = heap.pop() else {
            break;
        };
        kept[k].push(i);
        push(&mut heap, k, s, i);
        push(&mut heap, k, i, e);
    }
    for k in &mut kept {
        k.sort_unstable();
    }
    kept
}

/// Bottom-Up over `trajs`, dropping `drops` interior points.
///
/// The cost of dropping a point is the segment error of the merged segment
/// joining its kept neighbours.
fn bottom_up(trajs: &[&Trajectory], drops: usize, measure: ErrorMeasure) -> Vec<Vec<usize>> {
    // min-heap on cost, then smallest (traj, idx); last field is the version
    type Entry = Reverse<(Key, usize, usize, u32)>;
    let mut prev: Vec<Vec<usize>> = trajs.iter().map(|t| (0..t.len()).map(|i| i.saturating_sub(1)).collect()).collect();
    let mut next: Vec<Vec<usize>> = trajs.iter().map(|t| (0..t.len()).map(|i| (i + 1).min(t.last_index())).collect()).collect();
    let mut alive: Vec<Vec<bool>> = trajs.iter().map(|t| vec![true; t.len()]).collect();
    let mut version: Vec<Vec<u32>> = trajs.iter().map(|t| vec![0; t.len()]).collect();
    let mut heap: BinaryHeap<Entry> = BinaryHeap::new();

    for (k, t) in trajs.iter().enumerate() {
        for i in 1..t.last_index() {
            heap.push(Reverse((Key(segment_error(measure, t, i - 1, i + 1)), k, i, 0)));
        }
    }
    let mut dropped = 0;
    while dropped < drops {
        let Some(Reverse((_, k, i, v))) = heap.pop() else {
            break;
        };
        if !alive[k][i] || version[k][i] != v {
            continue;
        }
        alive[k][i] = false;
        dropped += 1;
        let (p, n) = (prev[k][i], next[k][i]);
        next[k][p] = n;
        prev[k][n] = p;
        let t = trajs[k];
        for j in [p, n] {
            if j == 0 || j == t.last_index() {
                continue;
            }
            version[k][j] += 1;
            let cost = segment_error(measure, t, prev[k][j], next[k][j]);
            heap.push(Reverse((Key(cost), k, j, version[k][j])));
        }
    }
    alive
        .into_iter()
        .map(|a| a.into_iter().enumerate().filter_map(|(i, keep)| keep.then_some(i)).collect())
        .collect()
}

fn run_group(trajs: &[&Trajectory], budget: usize, algorithm: Algorithm, measure: ErrorMeasure) -> Vec<Vec<usize>> {
    let n: usize = trajs.iter().map(|t| t.len()).sum();
    let floor = 2 * trajs.len();
    let budget = budget.clamp(floor, n);
    match algorithm {
        Algorithm::TopDown => top_down(trajs, budget - floor, measure),
        Algorithm::BottomUp => bottom_up(trajs, n - budget, measure),
    }
}

/// Top-Down on one trajectory; keeps `min(budget, n)` indices.
pub fn top_down_trajectory(traj: &Trajectory, budget: usize, measure: ErrorMeasure) -> Vec<usize> {
    run_group(&[traj], budget, Algorithm::TopDown, measure).pop().unwrap_or_default()
}

/// Bottom-Up on one trajectory; keeps `min(max(budget, 2), n)` indices.
pub fn bottom_up_trajectory(traj: &Trajectory, budget: usize, measure: ErrorMeasure) -> Vec<usize> {
    run_group(&[traj], budget, Algorithm::BottomUp, measure).pop().unwrap_or_default()
}

fn check_budget(db: &TrajectoryDatabase, budget: usize) -> Result<()> {
    let min = 2 * db.num_trajectories();
    if budget < min {
        return Err(Error::BudgetTooSmall { budget, min });
    }
    Ok(())
}

/// Per-trajectory budgets `max(2, floor(r * |T|))` with `r = W / N`.
///
/// Raising short trajectories to 2 can push the sum past `W`; the excess is
/// then taken one point at a time from the largest budget (lowest index on
/// ties) so the total never exceeds `W`.
pub fn e_budgets(db: &TrajectoryDatabase, budget: usize) -> Result<Vec<usize>> {
    check_budget(db, budget)?;
    let n = db.num_points();
    let mut out: Vec<usize> = db
        .trajectories()
        .iter()
        .map(|t| {
            // exact floor(W * |T| / N) in integers
            let share = (budget as u128 * t.len() as u128 / n as u128) as usize;
            share.clamp(2, t.len())
        })
        .collect();
    let total: usize = out.iter().sum();
    if total > budget {
        let mut heap: BinaryHeap<(usize, Reverse<usize>)> =
            out.iter().enumerate().filter(|(_, &b)| b > 2).map(|(i, &b)| (b, Reverse(i))).collect();
        for _ in 0..total - budget {
            let (b, Reverse(i)) = heap.pop().expect("budget >= 2M leaves room to shrink");
            out[i] = b - 1;
            if b - 1 > 2 {
                heap.push((b - 1, Reverse(i)));
            }
        }
    }
    Ok(out)
}

/// Simplifies every trajectory independently on its share of `budget`.
pub fn adapt_e(
    db: &TrajectoryDatabase,
    budget: usize,
    algorithm: Algorithm,
    measure: ErrorMeasure,
) -> Result<SimplifiedDatabase> {
    let budgets = e_budgets(db, budget)?;
    let kept = db
        .trajectories()
        .iter()
        .zip(&budgets)
        .map(|(t, &b)| run_group(&[t], b, algorithm, measure).pop().unwrap_or_default())
        .collect();
    SimplifiedDatabase::from_kept(db, kept, budget)
}

/// Simplifies the database as a whole to exactly `min(budget, N)` points.
pub fn adapt_w(
    db: &TrajectoryDatabase,
    budget: usize,
    algorithm: Algorithm,
    measure: ErrorMeasure,
) -> Result<SimplifiedDatabase> {
    check_budget(db, budget)?;
    let trajs: Vec<&Trajectory> = db.trajectories().iter().collect();
    let kept = run_group(&trajs, budget, algorithm, measure);
    SimplifiedDatabase::from_kept(db, kept, budget)
}
