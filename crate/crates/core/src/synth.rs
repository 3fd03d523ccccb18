//! Synthetic city-scale trajectory databases.
//!
//! Objects travel between destinations drawn around a few weighted hotspots,
//! with a noisy heading and speed, sampled every few seconds.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{Point, Trajectory, TrajectoryDatabase};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub trajectories: usize,
    /// Inclusive range of points per trajectory.
    pub min_points: usize,
    pub max_points: usize,
    /// Side of the square city (meters).
    pub city_size: f64,
    pub hotspots: usize,
    /// Standard deviation of destinations around a hotspot (meters).
    pub hotspot_spread: f64,
    /// Mean speed (m/s).
    pub speed: f64,
    /// Range of sampling intervals (seconds).
    pub min_interval: f64,
    pub max_interval: f64,
    /// Trajectory start times are spread over `[0, start_span)` seconds.
    pub start_span: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// About 300 trajectories and 100k points over a 20 km city and two days.
    fn default() -> Self {
        SynthSpec {
            trajectories: 300,
            min_points: 167,
            max_points: 500,
            city_size: 20_000.0,
            hotspots: 8,
            hotspot_spread: 1_500.0,
            speed: 10.0,
            min_interval: 5.0,
            max_interval: 10.0,
            start_span: 2.0 * 86_400.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        SynthSpec { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_points < 2 || self.min_points > self.max_points {
            return Err(Error::Config("need 2 <= min_points <= max_points".into()));
        }
        if self.hotspots == 0 || self.trajectories == 0 {
            return Err(Error::Config("need at least one hotspot and one trajectory".into()));
        }
        if !(self.city_size > 0.0 && self.speed > 0.0 && self.hotspot_spread > 0.0 && self.start_span >= 0.0) {
            return Err(Error::Config("sizes, speed and spread must be positive".into()));
        }
        if !(self.min_interval > 0.0 && self.min_interval <= self.max_interval) {
            return Err(Error::Config("need 0 < min_interval <= max_interval".into()));
        }
        Ok(())
    }
}

pub fn generate_database(spec: &SynthSpec) -> Result<TrajectoryDatabase> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let size = spec.city_size;
    let margin = 0.1 * size;
    let centers: Vec<(f64, f64)> = (0..spec.hotspots)
        .map(|_| (rng.random_range(margin..size - margin), rng.random_range(margin..size - margin)))
        .collect();
    // a few popular hotspots dominate
    let weights: Vec<f64> = (0..spec.hotspots).map(|i| 1.0 / (i + 1) as f64).collect();
    let pick = WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;
    let spread = Normal::new(0.0, spec.hotspot_spread).map_err(|e| Error::Config(e.to_string()))?;
    let heading_noise = Normal::new(0.0, 0.35).map_err(|e| Error::Config(e.to_string()))?;
    let speed_noise = Normal::new(1.0f64, 0.2).map_err(|e| Error::Config(e.to_string()))?;

    let destination = |rng: &mut ChaCha8Rng| {
        let (cx, cy) = centers[pick.sample(rng)];
        (
            (cx + spread.sample(rng)).clamp(0.0, size),
            (cy + spread.sample(rng)).clamp(0.0, size),
        )
    };

    let mut out = Vec::with_capacity(spec.trajectories);
    for i in 0..spec.trajectories {
        let n = rng.random_range(spec.min_points..=spec.max_points);
        let (mut x, mut y) = destination(&mut rng);
        let mut dest = destination(&mut rng);
        let mut t = if spec.start_span > 0.0 {
            rng.random_range(0.0..spec.start_span)
        } else {
            0.0
        };
        let mut pts = Vec::with_capacity(n);
        for _ in 0..n {
            pts.push(Point::new(x, y, t));
            let dt = rng.random_range(spec.min_interval..=spec.max_interval);
            let (dx, dy) = (dest.0 - x, dest.1 - y);
            if dx.hypot(dy) < 200.0 {
                dest = destination(&mut rng);
            }
            let heading = (dest.1 - y).atan2(dest.0 - x) + heading_noise.sample(&mut rng);
            let v = spec.speed * speed_noise.sample(&mut rng).max(0.1);
            x = (x + v * dt * heading.cos()).clamp(0.0, size);
            y = (y + v * dt * heading.sin()).clamp(0.0, size);
            t += dt;
        }
        out.push(Trajectory::new(format!("s{i}"), pts)?);
    }
    TrajectoryDatabase::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_size_and_determinism() {
        let spec = SynthSpec::default().with_seed(4);
        let db = generate_database(&spec).unwrap();
        assert_eq!(db.num_trajectories(), 300);
        let n = db.num_points();
        assert!((90_000..=110_000).contains(&n), "{n}");
        let b = db.bounding_box();
        assert!(b.min[0] >= 0.0 && b.max[0] <= 20_000.0);
        assert_eq!(generate_database(&spec).unwrap(), db);
        assert_ne!(generate_database(&spec.with_seed(5)).unwrap(), db);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = SynthSpec {
            min_points: 1,
            ..SynthSpec::default()
        };
        assert!(generate_database(&bad).is_err());
    }
}
