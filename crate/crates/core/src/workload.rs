//! Synthetic range-query workloads.
//!
//! Query centers follow the data, a clamped Gaussian over the normalized
//! bounding box, a Zipf law over a ranked spatial grid, or a user-supplied
//! set of "real" centers. Every query is a box of fixed spatial side and
//! temporal duration.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};

use crate::error::{Error, Result};
use crate::model::TrajectoryDatabase;
use crate::octree::padded_bounds;
use crate::query::{QueryWorkload, RangeQuery};

/// Default spatial side of a query box (2 km).
pub const DEFAULT_SPATIAL_EXTENT: f64 = 2_000.0;
/// Default temporal extent of a query box (7 days).
pub const DEFAULT_TEMPORAL_EXTENT: f64 = 7.0 * 24.0 * 3600.0;
/// Side of the Zipf ranking grid.
pub const ZIPF_GRID: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum CenterDistribution {
    /// Centers at uniformly sampled database points.
    Data,
    /// Per-axis `N(mu, sigma)` on the normalized box, clamped to `[0, 1]`.
    Gaussian { mu: f64, sigma: f64 },
    /// Cell ranks of a 64x64 spatial grid drawn from Zipf(a).
    Zipf { a: f64 },
    /// Uniform choice among given `(x, y, t)` centers.
    Real { centers: Vec<[f64; 3]> },
}

impl CenterDistribution {
    pub fn gaussian_default() -> Self {
        CenterDistribution::Gaussian { mu: 0.5, sigma: 0.25 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CenterDistribution::Data => "data",
            CenterDistribution::Gaussian { .. } => "gaussian",
            CenterDistribution::Zipf { .. } => "zipf",
            CenterDistribution::Real { .. } => "real",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub count: usize,
    pub distribution: CenterDistribution,
    pub spatial_extent: f64,
    pub temporal_extent: f64,
    pub seed: u64,
}

impl WorkloadSpec {
    /// 100 data-distributed 2 km x 2 km x 7 day queries.
    pub fn data(seed: u64) -> Self {
        WorkloadSpec {
            count: 100,
            distribution: CenterDistribution::Data,
            spatial_extent: DEFAULT_SPATIAL_EXTENT,
            temporal_extent: DEFAULT_TEMPORAL_EXTENT,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        WorkloadSpec { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spatial_extent > 0.0 && self.temporal_extent > 0.0) {
            return Err(Error::Config("query extents must be positive".into()));
        }
        match &self.distribution {
            CenterDistribution::Gaussian { sigma, .. } if !(*sigma > 0.0) => {
                Err(Error::Config("gaussian sigma must be positive".into()))
            }
            CenterDistribution::Zipf { a } if !(*a > 1.0) => Err(Error::Config("zipf exponent must exceed 1".into())),
            CenterDistribution::Real { centers } if centers.is_empty() => {
                Err(Error::Config("real distribution needs at least one center".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Reads an `x,y,t` centers CSV.
pub fn read_centers<R: Read>(reader: R) -> Result<Vec<[f64; 3]>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        let vals: Vec<f64> = rec
            .iter()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::MalformedRow {
                row,
                reason: "non-numeric field".into(),
            })?;
        if vals.len() != 3 {
            return Err(Error::MalformedRow {
                row,
                reason: format!("expected x,y,t, got {} fields", vals.len()),
            });
        }
        out.push([vals[0], vals[1], vals[2]]);
    }
    Ok(out)
}

pub fn load_centers(path: impl AsRef<Path>) -> Result<Vec<[f64; 3]>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_centers(std::io::BufReader::new(f))
}

/// Grid cells `(col, row)` ordered from the densest, ties in row-major order.
fn ranked_cells(db: &TrajectoryDatabase, bounds: &crate::model::BoundingBox) -> Vec<(usize, usize)> {
    let mut counts = vec![0usize; ZIPF_GRID * ZIPF_GRID];
    let cell = |v: f64, d: usize| {
        let r = (v - bounds.min[d]) / bounds.extent(d);
        ((r * ZIPF_GRID as f64) as usize).min(ZIPF_GRID - 1)
    };
    for t in db.trajectories() {
        for p in t.points() {
            counts[cell(p.y, 1) * ZIPF_GRID + cell(p.x, 0)] += 1;
        }
    }
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order.into_iter().map(|i| (i % ZIPF_GRID, i / ZIPF_GRID)).collect()
}

/// Generates a workload; identical specs give identical workloads.
pub fn generate(db: &TrajectoryDatabase, spec: &WorkloadSpec) -> Result<QueryWorkload> {
    spec.validate()?;
    if db.is_empty() {
        return Err(Error::Config("cannot generate a workload for an empty database".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bounds = padded_bounds(db);
    let denorm = |u: f64, d: usize| bounds.min[d] + u * bounds.extent(d);

    let centers: Vec<[f64; 3]> = match &spec.distribution {
        CenterDistribution::Data => {
            let offsets: Vec<usize> = db
                .trajectories()
                .iter()
                .scan(0usize, |acc, t| {
                    *acc += t.len();
                    Some(*acc)
                })
                .collect();
            (0..spec.count)
                .map(|_| {
                    let g = rng.random_range(0..db.num_points());
                    let ti = offsets.partition_point(|&o| o <= g);
                    let base = if ti == 0 { 0 } else { offsets[ti - 1] };
                    let p = db.get(ti)[g - base];
                    [p.x, p.y, p.t]
                })
                .collect()
        }
        CenterDistribution::Gaussian { mu, sigma } => {
            let normal = Normal::new(*mu, *sigma).map_err(|e| Error::Config(e.to_string()))?;
            (0..spec.count)
                .map(|_| {
                    let mut c = [0.0; 3];
                    for (d, v) in c.iter_mut().enumerate() {
                        *v = denorm(normal.sample(&mut rng).clamp(0.0, 1.0), d);
                    }
                    c
                })
                .collect()
        }
        CenterDistribution::Zipf { a } => {
            let cells = ranked_cells(db, &bounds);
            let zipf = Zipf::new(cells.len() as f64, *a).map_err(|e| Error::Config(e.to_string()))?;
            (0..spec.count)
                .map(|_| {
                    let rank = (zipf.sample(&mut rng) as usize).clamp(1, cells.len()) - 1;
                    let (col, row) = cells[rank];
                    let g = ZIPF_GRID as f64;
                    [
                        denorm((col as f64 + 0.5) / g, 0),
                        denorm((row as f64 + 0.5) / g, 1),
                        denorm(0.5, 2),
                    ]
                })
                .collect()
        }
        CenterDistribution::Real { centers } => (0..spec.count)
            .map(|_| centers[rng.random_range(0..centers.len())])
            .collect(),
    };

    Ok(QueryWorkload::new(
        centers
            .into_iter()
            .map(|c| RangeQuery::centered(c, spec.spatial_extent, spec.temporal_extent))
            .collect(),
    ))
}
