//! Straightforward reference implementations and fixture generators shared by
//! the integration suites.
#![allow(dead_code)]

use std::f64::consts::PI;

use qdts::measure::ErrorMeasure;
use qdts::model::{Point, Trajectory, TrajectoryDatabase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random walk with strictly increasing timestamps. Some steps repeat the
/// previous location so degenerate segments show up.
pub fn random_trajectory(rng: &mut impl Rng, id: &str, n: usize) -> Trajectory {
    let mut x = rng.random_range(-1000.0..1000.0);
    let mut y = rng.random_range(-1000.0..1000.0);
    let mut t = rng.random_range(0.0..100.0);
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        pts.push(Point::new(x, y, t));
        if rng.random_bool(0.9) {
            x += rng.random_range(-50.0..50.0);
            y += rng.random_range(-50.0..50.0);
        }
        t += rng.random_range(0.5..20.0);
    }
    Trajectory::new(id, pts).unwrap()
}

pub fn random_db(rng: &mut impl Rng, m: usize, min_n: usize, max_n: usize) -> TrajectoryDatabase {
    let trajs = (0..m)
        .map(|i| {
            let n = rng.random_range(min_n..=max_n);
            random_trajectory(rng, &format!("t{i:04}"), n)
        })
        .collect();
    TrajectoryDatabase::new(trajs).unwrap()
}

fn dist(a: &Point, b: &Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Per-point error written out from the definitions.
pub fn naive_point_error(m: ErrorMeasure, ps: &Point, pe: &Point, p: &Point, next: Option<&Point>) -> f64 {
    match m {
        ErrorMeasure::Sed => {
            let dt = pe.t - ps.t;
            if dt == 0.0 {
                return dist(p, ps);
            }
            let r = (p.t - ps.t) / dt;
            let sx = ps.x + r * (pe.x - ps.x);
            let sy = ps.y + r * (pe.y - ps.y);
            (p.x - sx).hypot(p.y - sy)
        }
        ErrorMeasure::Ped => {
            let (dx, dy) = (pe.x - ps.x, pe.y - ps.y);
            let len = dx.hypot(dy);
            if len == 0.0 {
                return dist(p, ps);
            }
            ((p.x - ps.x) * dy - (p.y - ps.y) * dx).abs() / len
        }
        ErrorMeasure::Dad => {
            let Some(n) = next else { return 0.0 };
            let (ax, ay) = (pe.x - ps.x, pe.y - ps.y);
            let (bx, by) = (n.x - p.x, n.y - p.y);
            if (ax == 0.0 && ay == 0.0) || (bx == 0.0 && by == 0.0) {
                return 0.0;
            }
            (ax * by - ay * bx).abs().atan2(ax * bx + ay * by).clamp(0.0, PI)
        }
        ErrorMeasure::Sad => {
            let Some(n) = next else { return 0.0 };
            let speed = |a: &Point, b: &Point| if b.t - a.t <= 0.0 { 0.0 } else { dist(a, b) / (b.t - a.t) };
            (speed(p, n) - speed(ps, pe)).abs()
        }
    }
}

pub fn naive_segment_error(m: ErrorMeasure, traj: &Trajectory, s: usize, e: usize) -> f64 {
    let pts = traj.points();
    let mut worst = 0.0f64;
    for i in s..e {
        worst = worst.max(naive_point_error(m, &pts[s], &pts[e], &pts[i], pts.get(i + 1)));
    }
    worst
}

/// Double loop: every original point against every kept pair, keeping the
/// pair that brackets it.
pub fn naive_trajectory_error(m: ErrorMeasure, traj: &Trajectory, kept: &[usize]) -> f64 {
    let pts = traj.points();
    let mut worst = 0.0f64;
    for i in 0..traj.last_index() {
        for w in 0..kept.len() - 1 {
            let (s, e) = (kept[w], kept[w + 1]);
            if s <= i && i < e {
                worst = worst.max(naive_point_error(m, &pts[s], &pts[e], &pts[i], pts.get(i + 1)));
            }
        }
    }
    worst
}

/// EDR by plain exponential recursion.
pub fn edr_recursive(a: &[Point], b: &[Point], eps: f64) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let matches = (a[0].x - b[0].x).abs() <= eps && (a[0].y - b[0].y).abs() <= eps;
    let sub = usize::from(!matches);
    (edr_recursive(&a[1..], &b[1..], eps) + sub)
        .min(edr_recursive(&a[1..], b, eps) + 1)
        .min(edr_recursive(a, &b[1..], eps) + 1)
}

fn bracket(kept: &[usize], i: usize) -> (usize, usize) {
    let mut s = kept[0];
    let mut e = kept[kept.len() - 1];
    for &k in kept {
        if k <= i {
            s = k;
        }
        if k > i && k < e {
            e = k;
        }
    }
    (s, e)
}

/// Budgeted Douglas-Peucker over several trajectories by full rescans: each
/// step inserts the uninserted interior point with the largest error against
/// its current segment (ties: lowest trajectory, then lowest index).
pub fn top_down_rescan(trajs: &[&Trajectory], budget: usize, m: ErrorMeasure) -> Vec<Vec<usize>> {
    let mut kept: Vec<Vec<usize>> = trajs.iter().map(|t| vec![0, t.last_index()]).collect();
    let total: usize = trajs.iter().map(|t| t.len()).sum();
    let mut size = 2 * trajs.len();
    while size < budget.min(total) {
        let mut best: Option<(f64, usize, usize)> = None;
        for (k, t) in trajs.iter().enumerate() {
            let pts = t.points();
            for i in 1..t.last_index() {
                if kept[k].contains(&i) {
                    continue;
                }
                let (s, e) = bracket(&kept[k], i);
                let err = naive_point_error(m, &pts[s], &pts[e], &pts[i], pts.get(i + 1));
                if best.is_none_or(|(b, _, _)| err > b) {
                    best = Some((err, k, i));
                }
            }
        }
        let (_, k, i) = best.expect("an uninserted point remains");
        kept[k].push(i);
        kept[k].sort_unstable();
        size += 1;
    }
    kept
}

/// Bottom-up merging by full rescans: each step drops the interior kept point
/// whose removal yields the smallest merged-segment error (ties: lowest
/// trajectory, then lowest index).
pub fn bottom_up_rescan(trajs: &[&Trajectory], budget: usize, m: ErrorMeasure) -> Vec<Vec<usize>> {
    let mut kept: Vec<Vec<usize>> = trajs.iter().map(|t| (0..t.len()).collect()).collect();
    let mut size: usize = kept.iter().map(Vec::len).sum();
    let floor = budget.max(2 * trajs.len());
    while size > floor {
        let mut best: Option<(f64, usize, usize)> = None;
        for (k, t) in trajs.iter().enumerate() {
            for w in 1..kept[k].len() - 1 {
                let cost = naive_segment_error(m, t, kept[k][w - 1], kept[k][w + 1]);
                if best.is_none_or(|(b, _, _)| cost < b) {
                    best = Some((cost, k, w));
                }
            }
        }
        let (_, k, w) = best.expect("an interior point remains");
        kept[k].remove(w);
        size -= 1;
    }
    kept
}
