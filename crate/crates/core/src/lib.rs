//! Query-accuracy-driven simplification of trajectory databases.
//!
//! A database of trajectories is reduced to a global point budget so that
//! range, kNN and similarity queries on the reduced database answer as they
//! would on the original. Two cooperating deep-Q agents pick where to spend
//! each point: one walks a spatio-temporal octree to choose a cube, the other
//! chooses a point inside it. Error-driven Top-Down and Bottom-Up
//! simplifiers are included for comparison, together with a benchmark
//! harness.

pub mod agents;
pub mod baseline;
pub mod bench;
pub mod driver;
pub mod error;
pub mod measure;
pub mod model;
pub mod octree;
pub mod query;
pub mod synth;
pub mod workload;

pub use error::{Error, Result};
