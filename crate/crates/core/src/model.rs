//! Trajectory data model: points, trajectories, the database, and the
//! simplified view that records which point indices survive.
//!
//! Point indices are 0-based throughout. A simplified trajectory always keeps
//! index `0` and index `len - 1`.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Mean Earth radius used by the equirectangular projection, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, t: f64) -> Self {
        Point { x, y, t }
    }

    #[inline]
    pub fn spatial_distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Linearly interpolated position between `self` and `next` at time `t`.
    #[inline]
    pub fn interpolate(&self, next: &Point, t: f64) -> (f64, f64) {
        let dt = next.t - self.t;
        if dt <= 0.0 {
            return (self.x, self.y);
        }
        let ratio = (t - self.t) / dt;
        (
            self.x + ratio * (next.x - self.x),
            self.y + ratio * (next.y - self.y),
        )
    }
}

/// Closed axis-aligned box over `(x, y, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BoundingBox {
    pub fn empty() -> Self {
        BoundingBox {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    pub fn extend(&mut self, p: &Point) {
        let c = [p.x, p.y, p.t];
        for d in 0..3 {
            self.min[d] = self.min[d].min(c[d]);
            self.max[d] = self.max[d].max(c[d]);
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        let c = [p.x, p.y, p.t];
        (0..3).all(|d| self.min[d] <= c[d] && c[d] <= self.max[d])
    }

    pub fn intersects(&self, other: &BoundingBox) -> bool {
        (0..3).all(|d| self.min[d] <= other.max[d] && other.min[d] <= self.max[d])
    }

    pub fn extent(&self, dim: usize) -> f64 {
        self.max[dim] - self.min[dim]
    }

    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: String,
    points: Vec<Point>,
}

impl Trajectory {
    /// Validates length and strictly increasing timestamps.
    pub fn new(id: impl Into<String>, points: Vec<Point>) -> Result<Self> {
        let id = id.into();
        if points.len() < 2 {
            return Err(Error::TrajectoryTooShort {
                id,
                len: points.len(),
            });
        }
        for w in points.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::NonIncreasingTimestamp {
                    id,
                    prev: w[0].t,
                    t: w[1].t,
                });
            }
        }
        if let Some(p) = points
            .iter()
            .find(|p| !(p.x.is_finite() && p.y.is_finite() && p.t.is_finite()))
        {
            return Err(Error::MalformedRow {
                row: 0,
                reason: format!("non-finite point {p:?} in trajectory {id}"),
            });
        }
        Ok(Trajectory { id, points })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.points[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.points[self.points.len() - 1].t
    }

    pub fn last_index(&self) -> usize {
        self.points.len() - 1
    }
}

impl std::ops::Index<usize> for Trajectory {
    type Output = Point;

    fn index(&self, i: usize) -> &Point {
        &self.points[i]
    }
}

/// Immutable collection of trajectories with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDatabase {
    trajectories: Vec<Trajectory>,
    total_points: usize,
}

impl TrajectoryDatabase {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(trajectories.len());
        for t in &trajectories {
            if !seen.insert(t.id()) {
                return Err(Error::DuplicateId(t.id().to_owned()));
            }
        }
        let total_points = trajectories.iter().map(Trajectory::len).sum();
        Ok(TrajectoryDatabase {
            trajectories,
            total_points,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn get(&self, i: usize) -> &Trajectory {
        &self.trajectories[i]
    }

    /// Trajectory count (M).
    pub fn num_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    /// Total point count (N).
    pub fn num_points(&self) -> usize {
        self.total_points
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let mut b = BoundingBox::empty();
        for t in &self.trajectories {
            for p in t.points() {
                b.extend(p);
            }
        }
        b
    }

    /// Position of the trajectory with the given id.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.trajectories.iter().position(|t| t.id() == id)
    }

    /// A database holding a subset of this one's trajectories, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        TrajectoryDatabase::new(indices.iter().map(|&i| self.trajectories[i].clone()).collect())
    }
}

/// Equirectangular projection about a reference coordinate, in meters.
pub fn project_latlon(lat: f64, lon: f64, ref_lat: f64, ref_lon: f64) -> Result<(f64, f64)> {
    for (a, o) in [(lat, lon), (ref_lat, ref_lon)] {
        if !(a.abs() <= 90.0 && o.abs() <= 180.0) {
            return Err(Error::OutOfRangeCoordinate { lat: a, lon: o });
        }
    }
    let x = EARTH_RADIUS_M * (lon - ref_lon) * ref_lat.to_radians().cos() * std::f64::consts::PI / 180.0;
    let y = EARTH_RADIUS_M * (lat - ref_lat) * std::f64::consts::PI / 180.0;
    Ok((x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvFormat {
    Csv,
}

enum Columns {
    Planar { id: usize, t: usize, x: usize, y: usize },
    Geographic { id: usize, t: usize, lat: usize, lon: usize },
}

impl Columns {
    fn detect(headers: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
        let id = find("traj_id");
        let t = find("t");
        match (id, t, find("x"), find("y"), find("lat"), find("lon")) {
            (Some(id), Some(t), Some(x), Some(y), _, _) => Ok(Columns::Planar { id, t, x, y }),
            (Some(id), Some(t), _, _, Some(lat), Some(lon)) => {
                Ok(Columns::Geographic { id, t, lat, lon })
            }
            _ => Err(Error::MalformedRow {
                row: 0,
                reason: format!(
                    "header must be traj_id,t,x,y or traj_id,t,lat,lon; got {:?}",
                    headers.iter().collect::<Vec<_>>()
                ),
            }),
        }
    }
}

fn parse_field(record: &csv::StringRecord, col: usize, row: usize) -> Result<f64> {
    let raw = record.get(col).ok_or_else(|| Error::MalformedRow {
        row,
        reason: format!("missing column {col}"),
    })?;
    let v: f64 = raw.trim().parse().map_err(|_| Error::MalformedRow {
        row,
        reason: format!("cannot parse {raw:?} as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::MalformedRow {
            row,
            reason: format!("non-finite value {raw:?}"),
        });
    }
    Ok(v)
}

/// Reads a trajectory CSV from any reader. Trajectories come out ordered by id.
pub fn read_trajectories<R: Read>(reader: R) -> Result<TrajectoryDatabase> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let columns = Columns::detect(rdr.headers()?)?;

    // (id, t, a, b) with a/b planar x/y or lat/lon
    let mut rows: Vec<(String, f64, f64, f64)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2; // 1-based, header is row 1
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        let (id_col, t_col, a_col, b_col) = match columns {
            Columns::Planar { id, t, x, y } => (id, t, x, y),
            Columns::Geographic { id, t, lat, lon } => (id, t, lat, lon),
        };
        let id = rec
            .get(id_col)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::MalformedRow {
                row,
                reason: "missing traj_id".into(),
            })?
            .to_owned();
        rows.push((
            id,
            parse_field(&rec, t_col, row)?,
            parse_field(&rec, a_col, row)?,
            parse_field(&rec, b_col, row)?,
        ));
    }

    let project: Option<(f64, f64)> = match columns {
        Columns::Planar { .. } => None,
        Columns::Geographic { .. } => {
            let (mut lat_lo, mut lat_hi) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut lon_lo, mut lon_hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &(_, _, lat, lon) in &rows {
                if !(lat.abs() <= 90.0 && lon.abs() <= 180.0) {
                    return Err(Error::OutOfRangeCoordinate { lat, lon });
                }
                lat_lo = lat_lo.min(lat);
                lat_hi = lat_hi.max(lat);
                lon_lo = lon_lo.min(lon);
                lon_hi = lon_hi.max(lon);
            }
            Some((0.5 * (lat_lo + lat_hi), 0.5 * (lon_lo + lon_hi)))
        }
    };

    let mut grouped: BTreeMap<String, Vec<Point>> = BTreeMap::new();
    for (id, t, a, b) in rows {
        let (x, y) = match project {
            None => (a, b),
            Some((ref_lat, ref_lon)) => project_latlon(a, b, ref_lat, ref_lon)?,
        };
        grouped.entry(id).or_default().push(Point::new(x, y, t));
    }
    let trajectories = grouped
        .into_iter()
        .map(|(id, pts)| Trajectory::new(id, pts))
        .collect::<Result<Vec<_>>>()?;
    TrajectoryDatabase::new(trajectories)
}

pub fn load_trajectories(path: impl AsRef<Path>, format: CsvFormat) -> Result<TrajectoryDatabase> {
    let path = path.as_ref();
    match format {
        CsvFormat::Csv => {
            let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
            read_trajectories(std::io::BufReader::new(file))
        }
    }
}

/// Writes the database as `traj_id,t,x,y`; floats use shortest round-trip formatting.
pub fn write_trajectories<W: Write>(db: &TrajectoryDatabase, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["traj_id", "t", "x", "y"])?;
    for traj in db.trajectories() {
        for p in traj.points() {
            w.write_record([
                traj.id().to_owned(),
                p.t.to_string(),
                p.x.to_string(),
                p.y.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_trajectories(db: &TrajectoryDatabase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trajectories(db, std::io::BufWriter::new(file))
}

/// Returns the consecutive kept indices `(s_j, s_{j+1})` with `s_j <= i < s_{j+1}`.
/// For the last point the final segment is returned.
///
/// `kept` must be sorted, contain `0` and the last index, and have at least two entries.
#[inline]
pub fn anchor_segment(kept: &[usize], i: usize) -> (usize, usize) {
    debug_assert!(kept.len() >= 2);
    let m = kept.len();
    let j = kept.partition_point(|&k| k <= i);
    if j >= m {
        (kept[m - 2], kept[m - 1])
    } else {
        (kept[j - 1], kept[j])
    }
}

/// Per-trajectory kept-index sets over a [`TrajectoryDatabase`], with a global budget.
///
/// Holds no point data; every accessor that needs coordinates takes the database.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimplifiedDatabase {
    kept: Vec<Vec<usize>>,
    flags: Vec<Vec<bool>>,
    total: usize,
    budget: usize,
}

impl SimplifiedDatabase {
    /// Only the first and last point of every trajectory.
    pub fn endpoints_only(db: &TrajectoryDatabase, budget: usize) -> Self {
        let kept: Vec<Vec<usize>> = db
            .trajectories()
            .iter()
            .map(|t| vec![0, t.last_index()])
            .collect();
        Self::from_kept_unchecked(db, kept, budget)
    }

    /// Every point kept.
    pub fn full(db: &TrajectoryDatabase) -> Self {
        let kept: Vec<Vec<usize>> = db.trajectories().iter().map(|t| (0..t.len()).collect()).collect();
        Self::from_kept_unchecked(db, kept, db.num_points())
    }

    /// Builds a view from explicit kept sets, validating every invariant.
    pub fn from_kept(db: &TrajectoryDatabase, mut kept: Vec<Vec<usize>>, budget: usize) -> Result<Self> {
        if kept.len() != db.num_trajectories() {
            return Err(Error::Config(format!(
                "{} kept sets for {} trajectories",
                kept.len(),
                db.num_trajectories()
            )));
        }
        for (i, set) in kept.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            let n = db.get(i).len();
            if set.first() != Some(&0) || set.last() != Some(&(n - 1)) {
                return Err(Error::Config(format!(
                    "trajectory {} must keep its endpoints",
                    db.get(i).id()
                )));
            }
        }
        let view = Self::from_kept_unchecked(db, kept, budget);
        if view.total > budget {
            return Err(Error::Config(format!(
                "{} kept points exceed the budget of {budget}",
                view.total
            )));
        }
        Ok(view)
    }

    fn from_kept_unchecked(db: &TrajectoryDatabase, kept: Vec<Vec<usize>>, budget: usize) -> Self {
        let flags = kept
            .iter()
            .zip(db.trajectories())
            .map(|(set, t)| {
                let mut f = vec![false; t.len()];
                for &k in set {
                    f[k] = true;
                }
                f
            })
            .collect();
        let total = kept.iter().map(Vec::len).sum();
        SimplifiedDatabase {
            kept,
            flags,
            total,
            budget,
        }
    }

    pub fn kept(&self, traj: usize) -> &[usize] {
        &self.kept[traj]
    }

    pub fn kept_sets(&self) -> &[Vec<usize>] {
        &self.kept
    }

    #[inline]
    pub fn is_kept(&self, traj: usize, idx: usize) -> bool {
        self.flags[traj][idx]
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn num_trajectories(&self) -> usize {
        self.kept.len()
    }

    pub fn anchor_segment(&self, traj: usize, i: usize) -> (usize, usize) {
        anchor_segment(&self.kept[traj], i)
    }

    /// Adds a point. Returns `false` if it was already kept.
    pub fn insert(&mut self, traj: usize, idx: usize) -> bool {
        if self.flags[traj][idx] {
            return false;
        }
        let set = &mut self.kept[traj];
        let pos = set.partition_point(|&k| k < idx);
        set.insert(pos, idx);
        self.flags[traj][idx] = true;
        self.total += 1;
        debug_assert!(set[0] == 0 && *set.last().unwrap() == self.flags[traj].len() - 1);
        true
    }

    /// Drops an interior point. Endpoints are never removed; returns `false` for them
    /// and for points that are not kept.
    pub fn remove(&mut self, traj: usize, idx: usize) -> bool {
        let n = self.flags[traj].len();
        if idx == 0 || idx + 1 == n || !self.flags[traj][idx] {
            return false;
        }
        let set = &mut self.kept[traj];
        let pos = set.partition_point(|&k| k < idx);
        set.remove(pos);
        self.flags[traj][idx] = false;
        self.total -= 1;
        true
    }

    /// Kept points of one trajectory, in time order.
    pub fn points<'a>(&'a self, db: &'a TrajectoryDatabase, traj: usize) -> impl Iterator<Item = &'a Point> + 'a {
        let t = db.get(traj);
        self.kept[traj].iter().map(move |&k| &t[k])
    }

    /// Checks endpoints, ordering, counters and the budget.
    pub fn check_invariants(&self, db: &TrajectoryDatabase) -> Result<()> {
        let mut total = 0;
        for (i, set) in self.kept.iter().enumerate() {
            let n = db.get(i).len();
            if set.first() != Some(&0) || set.last() != Some(&(n - 1)) {
                return Err(Error::Config(format!("trajectory {i} lost an endpoint")));
            }
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("kept set of trajectory {i} not strictly sorted")));
            }
            if set.iter().any(|&k| !self.flags[i][k]) || self.flags[i].iter().filter(|&&f| f).count() != set.len() {
                return Err(Error::Config(format!("flags of trajectory {i} out of sync")));
            }
            total += set.len();
        }
        if total != self.total {
            return Err(Error::Config("kept counter out of sync".into()));
        }
        if total > self.budget {
            return Err(Error::Config(format!("{total} kept points exceed budget {}", self.budget)));
        }
        Ok(())
    }

    /// Writes `traj_id,kept_index` rows (0-based indices).
    pub fn write_csv<W: Write>(&self, db: &TrajectoryDatabase, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["traj_id", "kept_index"])?;
        for (i, set) in self.kept.iter().enumerate() {
            let id = db.get(i).id();
            for k in set {
                w.write_record([id, &k.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, db: &TrajectoryDatabase, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(db, std::io::BufWriter::new(file))
    }

    /// Reads a `traj_id,kept_index` CSV. Endpoints missing from the file are added.
    pub fn read_csv<R: Read>(db: &TrajectoryDatabase, reader: R, budget: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut kept: Vec<Vec<usize>> = db.trajectories().iter().map(|t| vec![0, t.last_index()]).collect();
        let ids: std::collections::HashMap<&str, usize> = db
            .trajectories()
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id(), i))
            .collect();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::MalformedRow {
                row,
                reason: e.to_string(),
            })?;
            let (Some(id), Some(idx)) = (rec.get(0), rec.get(1)) else {
                return Err(Error::MalformedRow {
                    row,
                    reason: "expected traj_id,kept_index".into(),
                });
            };
            let &traj = ids.get(id).ok_or_else(|| Error::MalformedRow {
                row,
                reason: format!("unknown trajectory {id}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::MalformedRow {
                row,
                reason: format!("bad index {idx:?}"),
            })?;
            if idx >= db.get(traj).len() {
                return Err(Error::MalformedRow {
                    row,
                    reason: format!("index {idx} out of range for {id}"),
                });
            }
            kept[traj].push(idx);
        }
        let total_upper: usize = kept.iter().map(Vec::len).sum();
        Self::from_kept(db, kept, budget.unwrap_or(total_upper))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(id: &str, pts: &[(f64, f64, f64)]) -> Trajectory {
        Trajectory::new(id, pts.iter().map(|&(x, y, t)| Point::new(x, y, t)).collect()).unwrap()
    }

    #[test]
    fn csv_counts() {
        let csv = "traj_id,t,x,y\na,0,0,0\na,1,1,0\na,2,2,0\nb,0,5,5\nb,1,6,5\nb,2,7,5\n";
        let db = read_trajectories(csv.as_bytes()).unwrap();
        assert_eq!(db.num_trajectories(), 2);
        assert_eq!(db.num_points(), 6);
    }

    #[test]
    fn csv_decreasing_time_rejected() {
        let csv = "traj_id,t,x,y\na,0,0,0\na,2,1,0\na,1,2,0\n";
        assert!(matches!(
            read_trajectories(csv.as_bytes()),
            Err(Error::NonIncreasingTimestamp { .. })
        ));
    }

    #[test]
    fn csv_single_point_rejected() {
        let csv = "traj_id,t,x,y\na,0,0,0\nb,0,1,1\nb,1,2,2\n";
        assert!(matches!(
            read_trajectories(csv.as_bytes()),
            Err(Error::TrajectoryTooShort { len: 1, .. })
        ));
    }

    #[test]
    fn csv_malformed_number() {
        let csv = "traj_id,t,x,y\na,0,zero,0\na,1,2,0\n";
        assert!(matches!(
            read_trajectories(csv.as_bytes()),
            Err(Error::MalformedRow { row: 2, .. })
        ));
    }

    #[test]
    fn csv_latlon_projected() {
        let csv = "traj_id,t,lat,lon\na,0,40.0,116.0\na,10,40.01,116.0\n";
        let db = read_trajectories(csv.as_bytes()).unwrap();
        let t = db.get(0);
        // reference is the box center, so the two points sit symmetrically about y = 0
        assert!((t[0].y + t[1].y).abs() < 1e-6);
        assert!((t[1].y - t[0].y - 1111.949).abs() < 1e-2);
        assert_eq!(t[0].x, 0.0);
    }

    #[test]
    fn csv_latlon_out_of_range() {
        let csv = "traj_id,t,lat,lon\na,0,100.0,116.0\na,10,40.01,116.0\n";
        assert!(matches!(
            read_trajectories(csv.as_bytes()),
            Err(Error::OutOfRangeCoordinate { .. })
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = traj("a", &[(0.0, 0.0, 0.0), (1.0, 0.0, 1.0)]);
        assert!(matches!(
            TrajectoryDatabase::new(vec![a.clone(), a]),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn projection_identity_and_one_degree() {
        assert_eq!(project_latlon(39.9, 116.4, 39.9, 116.4).unwrap(), (0.0, 0.0));
        for ref_lat in [-60.0, 0.0, 39.9, 80.0] {
            let (x, y) = project_latlon(ref_lat + 1.0, 10.0, ref_lat, 10.0).unwrap();
            assert_eq!(x, 0.0);
            // R * pi / 180
            assert!((y - 111_194.926_644_558_73).abs() < 1e-6, "{y}");
        }
        assert!(matches!(
            project_latlon(100.0, 0.0, 0.0, 0.0),
            Err(Error::OutOfRangeCoordinate { .. })
        ));
        assert!(project_latlon(0.0, 181.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn anchor_segment_examples() {
        let n = 6;
        for i in 0..n - 1 {
            assert_eq!(anchor_segment(&[0, n - 1], i), (0, n - 1));
        }
        // {1,3,5} in 1-based terms is {0,2,4} here
        let kept = [0, 2, 4];
        assert_eq!(anchor_segment(&kept, 3), (2, 4));
        assert_eq!(anchor_segment(&kept, 2), (2, 4));
        assert_eq!(anchor_segment(&kept, 0), (0, 2));
        assert_eq!(anchor_segment(&kept, 1), (0, 2));
        assert_eq!(anchor_segment(&kept, 4), (2, 4));
    }

    #[test]
    fn anchor_segment_matches_enumeration() {
        // brute force: the pair (a, b) of consecutive kept indices with a <= i < b
        let kept = [0, 1, 4, 5, 9, 12];
        for i in 0..12 {
            let expected = kept
                .windows(2)
                .find(|w| w[0] <= i && i < w[1])
                .map(|w| (w[0], w[1]))
                .unwrap();
            assert_eq!(anchor_segment(&kept, i), expected);
        }
    }

    #[test]
    fn simplified_insert_remove_keeps_endpoints() {
        let db = TrajectoryDatabase::new(vec![traj(
            "a",
            &[(0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (2.0, 0.0, 2.0), (3.0, 1.0, 3.0)],
        )])
        .unwrap();
        let mut view = SimplifiedDatabase::endpoints_only(&db, 4);
        assert_eq!(view.len(), 2);
        assert!(view.insert(0, 2));
        assert!(!view.insert(0, 2));
        assert!(view.insert(0, 1));
        assert_eq!(view.kept(0), &[0, 1, 2, 3]);
        view.check_invariants(&db).unwrap();
        assert!(!view.remove(0, 0));
        assert!(!view.remove(0, 3));
        assert!(view.remove(0, 1));
        assert_eq!(view.kept(0), &[0, 2, 3]);
        view.check_invariants(&db).unwrap();
    }

    #[test]
    fn kept_csv_round_trip() {
        let db = TrajectoryDatabase::new(vec![
            traj("a", &[(0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (2.0, 0.0, 2.0)]),
            traj("b", &[(0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (2.0, 0.0, 2.0)]),
        ])
        .unwrap();
        let mut view = SimplifiedDatabase::endpoints_only(&db, 5);
        view.insert(1, 1);
        let mut buf = Vec::new();
        view.write_csv(&db, &mut buf).unwrap();
        let back = SimplifiedDatabase::read_csv(&db, buf.as_slice(), Some(5)).unwrap();
        assert_eq!(back, view);
    }
}
