//! Range, kNN and similarity queries over an original or simplified
//! database, plus the F1 quality measures that compare the two.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{BoundingBox, Point, SimplifiedDatabase, Trajectory, TrajectoryDatabase};

/// Default EDR matching threshold (2 km).
pub const DEFAULT_EDR_EPS: f64 = 2_000.0;
/// Default similarity-query distance threshold (5 km).
pub const DEFAULT_SIMILARITY_DELTA: f64 = 5_000.0;
/// Default kNN result size.
pub const DEFAULT_K: usize = 3;
/// Default kNN / similarity window length (7 days).
pub const DEFAULT_WINDOW_S: f64 = 7.0 * 24.0 * 3600.0;

/// Closed box over `(x, y, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeQuery {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl RangeQuery {
    pub fn new(x: (f64, f64), y: (f64, f64), t: (f64, f64)) -> Result<Self> {
        let q = RangeQuery {
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
            t_min: t.0,
            t_max: t.1,
        };
        if !(q.x_min <= q.x_max && q.y_min <= q.y_max && q.t_min <= q.t_max) {
            return Err(Error::Config(format!("range query with min > max: {q:?}")));
        }
        Ok(q)
    }

    /// Box of the given extents centered at `center`.
    pub fn centered(center: [f64; 3], spatial_extent: f64, temporal_extent: f64) -> Self {
        let hs = 0.5 * spatial_extent;
        let ht = 0.5 * temporal_extent;
        RangeQuery {
            x_min: center[0] - hs,
            x_max: center[0] + hs,
            y_min: center[1] - hs,
            y_max: center[1] + hs,
            t_min: center[2] - ht,
            t_max: center[2] + ht,
        }
    }

    #[inline]
    pub fn contains(&self, p: &Point) -> bool {
        self.x_min <= p.x
            && p.x <= self.x_max
            && self.y_min <= p.y
            && p.y <= self.y_max
            && self.t_min <= p.t
            && p.t <= self.t_max
    }

    pub fn as_box(&self) -> BoundingBox {
        BoundingBox {
            min: [self.x_min, self.y_min, self.t_min],
            max: [self.x_max, self.y_max, self.t_max],
        }
    }
}

/// Ordered list of range queries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryWorkload {
    queries: Vec<RangeQuery>,
}

impl QueryWorkload {
    pub fn new(queries: Vec<RangeQuery>) -> Self {
        QueryWorkload { queries }
    }

    pub fn queries(&self) -> &[RangeQuery] {
        &self.queries
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Writes `x_min,x_max,y_min,y_max,t_min,t_max` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x_min", "x_max", "y_min", "y_max", "t_min", "t_max"])?;
        for q in &self.queries {
            w.write_record(
                [q.x_min, q.x_max, q.y_min, q.y_max, q.t_min, q.t_max].map(|v| v.to_string()),
            )?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut queries = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::MalformedRow {
                row,
                reason: e.to_string(),
            })?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::MalformedRow {
                    row,
                    reason: "non-numeric field".into(),
                })?;
            if vals.len() != 6 {
                return Err(Error::MalformedRow {
                    row,
                    reason: format!("expected 6 fields, got {}", vals.len()),
                });
            }
            let q = RangeQuery::new((vals[0], vals[1]), (vals[2], vals[3]), (vals[4], vals[5])).map_err(|_| {
                Error::MalformedRow {
                    row,
                    reason: "min exceeds max".into(),
                }
            })?;
            queries.push(q);
        }
        Ok(QueryWorkload { queries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Set of trajectory positions in the database.
pub type QueryResult = BTreeSet<usize>;

/// Something queries can run against: the original database, or a simplified
/// view over it where only kept points exist.
#[derive(Debug, Clone, Copy)]
pub enum View<'a> {
    Original(&'a TrajectoryDatabase),
    Simplified(&'a TrajectoryDatabase, &'a SimplifiedDatabase),
}

impl<'a> View<'a> {
    pub fn database(&self) -> &'a TrajectoryDatabase {
        match *self {
            View::Original(db) | View::Simplified(db, _) => db,
        }
    }

    pub fn num_trajectories(&self) -> usize {
        self.database().num_trajectories()
    }

    /// Visible points of one trajectory in time order.
    pub fn points(&self, traj: usize) -> ViewPoints<'a> {
        match *self {
            View::Original(db) => ViewPoints::All(db.get(traj).points().iter()),
            View::Simplified(db, view) => ViewPoints::Kept {
                points: db.get(traj).points(),
                kept: view.kept(traj).iter(),
            },
        }
    }

    pub fn collect_points(&self, traj: usize) -> Vec<Point> {
        self.points(traj).copied().collect()
    }
}

pub enum ViewPoints<'a> {
    All(std::slice::Iter<'a, Point>),
    Kept {
        points: &'a [Point],
        kept: std::slice::Iter<'a, usize>,
    },
}

impl<'a> Iterator for ViewPoints<'a> {
    type Item = &'a Point;

    #[inline]
    fn next(&mut self) -> Option<&'a Point> {
        match self {
            ViewPoints::All(it) => it.next(),
            ViewPoints::Kept { points, kept } => kept.next().map(|&k| &points[k]),
        }
    }
}

/// Trajectories with at least one visible point inside the closed box.
pub fn range_query(view: View<'_>, q: &RangeQuery) -> QueryResult {
    (0..view.num_trajectories())
        .filter(|&i| view.points(i).any(|p| q.contains(p)))
        .collect()
}

/// Edit distance on real sequences with per-axis matching threshold `eps`.
pub fn edr(a: &[Point], b: &[Point], eps: f64) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, pa) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, pb) in b.iter().enumerate() {
            let subcost = if (pa.x - pb.x).abs() <= eps && (pa.y - pb.y).abs() <= eps {
                0
            } else {
                1
            };
            cur[j + 1] = (prev[j] + subcost).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn in_window(p: &Point, window: (f64, f64)) -> bool {
    window.0 <= p.t && p.t <= window.1
}

/// kNN query parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnParams {
    pub k: usize,
    pub eps: f64,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams {
            k: DEFAULT_K,
            eps: DEFAULT_EDR_EPS,
        }
    }
}

/// The `k` trajectories nearest to `query` under EDR within `window`.
///
/// Candidates are trajectories with at least one *original* point in the
/// window, so the candidate set is identical on the original database and on
/// any simplified view; on a view, a candidate whose kept points all fall
/// outside the window is compared as an empty sequence. Ties go to the
/// smaller trajectory id.
pub fn knn_query(view: View<'_>, query: &Trajectory, window: (f64, f64), params: KnnParams) -> Result<QueryResult> {
    let db = view.database();
    let q: Vec<Point> = query.points().iter().filter(|p| in_window(p, window)).copied().collect();
    let candidates: Vec<usize> = (0..db.num_trajectories())
        .filter(|&i| db.get(i).points().iter().any(|p| in_window(p, window)))
        .collect();
    if params.k > candidates.len() {
        return Err(Error::InsufficientCandidates {
            k: params.k,
            available: candidates.len(),
        });
    }
    let mut scored: Vec<(usize, &str, usize)> = candidates
        .into_iter()
        .map(|i| {
            let seq: Vec<Point> = view.points(i).filter(|p| in_window(p, window)).copied().collect();
            (edr(&q, &seq, params.eps), db.get(i).id(), i)
        })
        .collect();
    scored.sort_unstable_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    Ok(scored.into_iter().take(params.k).map(|(_, _, i)| i).collect())
}

/// Linearly interpolated position of a visible point sequence at time `t`,
/// or `None` when `t` is outside its time span.
pub fn position_at(points: &[Point], t: f64) -> Option<(f64, f64)> {
    let first = points.first()?;
    let last = points.last()?;
    if t < first.t || t > last.t {
        return None;
    }
    let j = points.partition_point(|p| p.t <= t);
    if j == 0 {
        return Some((first.x, first.y));
    }
    if j >= points.len() {
        return Some((last.x, last.y));
    }
    Some(points[j - 1].interpolate(&points[j], t))
}

/// Trajectories staying within `delta` of `query` at every timestamp of
/// `query`'s points inside `window`. Positions are interpolated over the
/// visible points; trajectories not spanning every sampled timestamp are
/// excluded. An empty sample set yields an empty result.
pub fn similarity_query(view: View<'_>, query: &Trajectory, window: (f64, f64), delta: f64) -> QueryResult {
    let samples: Vec<&Point> = query.points().iter().filter(|p| in_window(p, window)).collect();
    if samples.is_empty() {
        return QueryResult::new();
    }
    (0..view.num_trajectories())
        .filter(|&i| {
            let pts = view.collect_points(i);
            samples.iter().all(|s| match position_at(&pts, s.t) {
                Some((x, y)) => (x - s.x).hypot(y - s.y) <= delta,
                None => false,
            })
        })
        .collect()
}

/// Precision, recall and F1 of a simplified-database result against the original one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// F1 from set sizes: `|R_o|`, `|R_s|` and `|R_o ∩ R_s|`.
///
/// Both empty scores a perfect 1; an empty side facing a non-empty one scores 0.
#[inline]
pub fn f1_from_counts(original: usize, simplified: usize, common: usize) -> F1Score {
    if original == 0 && simplified == 0 {
        return F1Score {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let precision = if simplified == 0 { 0.0 } else { common as f64 / simplified as f64 };
    let recall = if original == 0 { 0.0 } else { common as f64 / original as f64 };
    // 2PR/(P+R) reduced to counts; equals P exactly when |R_o| = |R_s|
    let f1 = 2.0 * common as f64 / (original + simplified) as f64;
    F1Score { precision, recall, f1 }
}

pub fn f1(original: &QueryResult, simplified: &QueryResult) -> F1Score {
    let common = original.intersection(simplified).count();
    f1_from_counts(original.len(), simplified.len(), common)
}

/// `1 - mean F1` of the workload's range queries, original versus view.
pub fn workload_diff(db: &TrajectoryDatabase, view: &SimplifiedDatabase, workload: &QueryWorkload) -> Result<f64> {
    if workload.is_empty() {
        return Err(Error::EmptyWorkload);
    }
    let scores: Vec<f64> = workload
        .queries()
        .par_iter()
        .map(|q| {
            let ro = range_query(View::Original(db), q);
            let rs = range_query(View::Simplified(db, view), q);
            f1(&ro, &rs).f1
        })
        .collect();
    Ok(1.0 - mean(&scores))
}

/// Mean in index order, so sequential and incremental callers agree bit-for-bit.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Range-query accuracy of a growing simplified view, maintained per inserted point.
///
/// Kept points only ever get added, so a trajectory that enters a query's
/// result never leaves it; each insertion touches only the queries whose box
/// contains the point.
#[derive(Debug, Clone)]
pub struct RangeAccuracyTracker {
    queries: Vec<RangeQuery>,
    original: Vec<QueryResult>,
    hits: Vec<Vec<bool>>,
    hit_counts: Vec<usize>,
    common_counts: Vec<usize>,
}

impl RangeAccuracyTracker {
    pub fn new(db: &TrajectoryDatabase, view: &SimplifiedDatabase, workload: &QueryWorkload) -> Result<Self> {
        if workload.is_empty() {
            return Err(Error::EmptyWorkload);
        }
        let queries = workload.queries().to_vec();
        let original: Vec<QueryResult> = queries.par_iter().map(|q| range_query(View::Original(db), q)).collect();
        let m = db.num_trajectories();
        let mut tracker = RangeAccuracyTracker {
            hits: vec![vec![false; m]; queries.len()],
            hit_counts: vec![0; queries.len()],
            common_counts: vec![0; queries.len()],
            queries,
            original,
        };
        for (traj, set) in view.kept_sets().iter().enumerate() {
            let t = db.get(traj);
            for &k in set {
                tracker.insert(traj, &t[k]);
            }
        }
        Ok(tracker)
    }

    /// Registers a newly kept point of trajectory `traj`.
    pub fn insert(&mut self, traj: usize, p: &Point) {
        for (qi, q) in self.queries.iter().enumerate() {
            if !self.hits[qi][traj] && q.contains(p) {
                self.hits[qi][traj] = true;
                self.hit_counts[qi] += 1;
                if self.original[qi].contains(&traj) {
                    self.common_counts[qi] += 1;
                }
            }
        }
    }

    pub fn f1_scores(&self) -> Vec<f64> {
        (0..self.queries.len())
            .map(|qi| f1_from_counts(self.original[qi].len(), self.hit_counts[qi], self.common_counts[qi]).f1)
            .collect()
    }

    pub fn mean_f1(&self) -> f64 {
        mean(&self.f1_scores())
    }

    pub fn diff(&self) -> f64 {
        1.0 - self.mean_f1()
    }
}
