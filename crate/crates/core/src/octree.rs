//! Spatio-temporal octree over `(x, y, t)` with per-cube trajectory, point
//! and query statistics.
//!
//! Every level halves each dimension. Children are materialized only when
//! they contain at least one point, down to the configured maximum depth.
//! Points on a split plane go to the lower half.
//!
//! Octants are numbered `0..8` as `x_bit | y_bit << 1 | t_bit << 2`, where a
//! bit is set for the upper half along that axis.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{BoundingBox, SimplifiedDatabase, TrajectoryDatabase};
use crate::query::{QueryWorkload, RangeQuery};

/// Arena index of a materialized node.
pub type NodeId = usize;

/// Level (root = 1) and octant path from the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CubeId {
    pub level: usize,
    pub path: Vec<u8>,
}

impl CubeId {
    pub fn root() -> Self {
        CubeId { level: 1, path: Vec::new() }
    }

    pub fn child(&self, octant: u8) -> Self {
        let mut path = self.path.clone();
        path.push(octant);
        CubeId { level: self.level + 1, path }
    }
}

#[derive(Debug, Clone)]
pub struct OctreeNode {
    pub bounds: BoundingBox,
    pub level: usize,
    pub parent: Option<NodeId>,
    pub octant: u8,
    pub children: [Option<NodeId>; 8],
    /// Range into the octree's point order.
    pub start: usize,
    pub end: usize,
    /// Distinct trajectories with a point inside (M_B).
    pub num_trajectories: usize,
    /// Workload queries intersecting the cube (Q_B).
    pub num_queries: usize,
    /// Queries intersecting each child box, materialized or not.
    pub child_queries: [usize; 8],
}

impl OctreeNode {
    /// Points inside (N_B).
    pub fn num_points(&self) -> usize {
        self.end - self.start
    }

    pub fn is_leaf(&self) -> bool {
        self.children.iter().all(Option::is_none)
    }
}

/// Location of one database point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PointRef {
    pub traj: u32,
    pub idx: u32,
}

#[derive(Debug, Clone)]
pub struct Octree {
    nodes: Vec<OctreeNode>,
    /// Points ordered so that every node owns a contiguous range, and within
    /// a node points stay sorted by `(traj, idx)`.
    order: Vec<PointRef>,
    /// Leaf node of each point, per trajectory.
    leaf_of: Vec<Vec<NodeId>>,
    /// Nodes per level; `levels[0]` is the root level.
    levels: Vec<Vec<NodeId>>,
    max_depth: usize,
    bounds: BoundingBox,
}

fn child_bounds(b: &BoundingBox, octant: u8) -> BoundingBox {
    let mut out = *b;
    for d in 0..3 {
        let mid = 0.5 * (b.min[d] + b.max[d]);
        if octant & (1 << d) != 0 {
            out.min[d] = mid;
        } else {
            out.max[d] = mid;
        }
    }
    out
}

#[inline]
fn octant_of(b: &BoundingBox, c: [f64; 3]) -> u8 {
    let mut o = 0u8;
    for d in 0..3 {
        let mid = 0.5 * (b.min[d] + b.max[d]);
        if c[d] > mid {
            o |= 1 << d;
        }
    }
    o
}

/// Tight box around every point, padded by a 1e-9 relative margin per axis.
pub fn padded_bounds(db: &TrajectoryDatabase) -> BoundingBox {
    let mut b = db.bounding_box();
    for d in 0..3 {
        let scale = b.extent(d).max(b.min[d].abs()).max(b.max[d].abs()).max(1.0);
        let pad = 1e-9 * scale;
        b.min[d] -= pad;
        b.max[d] += pad;
    }
    b
}

/// Closed-box overlap test between a query and a cube.
#[inline]
pub fn query_cube_intersects(q: &RangeQuery, bounds: &BoundingBox) -> bool {
    q.x_min <= bounds.max[0]
        && bounds.min[0] <= q.x_max
        && q.y_min <= bounds.max[1]
        && bounds.min[1] <= q.y_max
        && q.t_min <= bounds.max[2]
        && bounds.min[2] <= q.t_max
}

impl Octree {
    /// Builds the tree down to level `max_depth` over the padded database box.
    pub fn build(db: &TrajectoryDatabase, workload: &QueryWorkload, max_depth: usize) -> Self {
        Self::build_with_bounds(db, workload, max_depth, padded_bounds(db))
    }

    /// Builds the tree over caller-supplied root bounds, which must contain every point.
    pub fn build_with_bounds(
        db: &TrajectoryDatabase,
        workload: &QueryWorkload,
        max_depth: usize,
        bounds: BoundingBox,
    ) -> Self {
        assert!(max_depth >= 1, "octree depth must be at least 1");
        let mut order: Vec<PointRef> = Vec::with_capacity(db.num_points());
        let mut coords: Vec<[f64; 3]> = Vec::with_capacity(db.num_points());
        for (ti, t) in db.trajectories().iter().enumerate() {
            for (pi, p) in t.points().iter().enumerate() {
                debug_assert!(bounds.contains(p), "point outside octree bounds");
                order.push(PointRef {
                    traj: ti as u32,
                    idx: pi as u32,
                });
                coords.push([p.x, p.y, p.t]);
            }
        }

        let mut tree = Octree {
            nodes: Vec::new(),
            order,
            leaf_of: db.trajectories().iter().map(|t| vec![0; t.len()]).collect(),
            levels: vec![Vec::new(); max_depth],
            max_depth,
            bounds,
        };
        let n = tree.order.len();
        tree.push_node(bounds, 1, None, 0, 0, n);

        // breadth-first split; `coords` is permuted alongside `order`
        let mut scratch_order = tree.order.clone();
        let mut scratch_coords = coords.clone();
        let mut frontier = vec![0usize];
        for level in 1..max_depth {
            let mut next = Vec::new();
            for &id in &frontier {
                let (start, end, b) = {
                    let node = &tree.nodes[id];
                    (node.start, node.end, node.bounds)
                };
                // stable counting sort by octant keeps (traj, idx) order inside every child
                let mut counts = [0usize; 8];
                let octs: Vec<u8> = coords[start..end].iter().map(|&c| octant_of(&b, c)).collect();
                for &o in &octs {
                    counts[o as usize] += 1;
                }
                let mut offsets = [0usize; 8];
                let mut acc = start;
                for o in 0..8 {
                    offsets[o] = acc;
                    acc += counts[o];
                }
                let mut cursor = offsets;
                for (k, &o) in octs.iter().enumerate() {
                    let dst = cursor[o as usize];
                    scratch_order[dst] = tree.order[start + k];
                    scratch_coords[dst] = coords[start + k];
                    cursor[o as usize] += 1;
                }
                tree.order[start..end].copy_from_slice(&scratch_order[start..end]);
                coords[start..end].copy_from_slice(&scratch_coords[start..end]);
                for o in 0..8u8 {
                    if counts[o as usize] == 0 {
                        continue;
                    }
                    let s = offsets[o as usize];
                    let child = tree.push_node(child_bounds(&b, o), level + 1, Some(id), o, s, s + counts[o as usize]);
                    tree.nodes[id].children[o as usize] = Some(child);
                    next.push(child);
                }
            }
            frontier = next;
        }

        for id in 0..tree.nodes.len() {
            if tree.nodes[id].is_leaf() {
                let (s, e) = (tree.nodes[id].start, tree.nodes[id].end);
                for r in &tree.order[s..e] {
                    tree.leaf_of[r.traj as usize][r.idx as usize] = id;
                }
            }
        }
        tree.count_queries(workload);
        tree
    }

    fn push_node(
        &mut self,
        bounds: BoundingBox,
        level: usize,
        parent: Option<NodeId>,
        octant: u8,
        start: usize,
        end: usize,
    ) -> NodeId {
        let mut m = 0;
        let mut last = u32::MAX;
        for r in &self.order[start..end] {
            if r.traj != last {
                m += 1;
                last = r.traj;
            }
        }
        let id = self.nodes.len();
        self.nodes.push(OctreeNode {
            bounds,
            level,
            parent,
            octant,
            children: [None; 8],
            start,
            end,
            num_trajectories: m,
            num_queries: 0,
            child_queries: [0; 8],
        });
        self.levels[level - 1].push(id);
        id
    }

    /// Counts each query fully in every cube it touches.
    fn count_queries(&mut self, workload: &QueryWorkload) {
        for q in workload.queries() {
            if !query_cube_intersects(q, &self.nodes[0].bounds) {
                continue;
            }
            let mut stack = vec![0usize];
            while let Some(id) = stack.pop() {
                self.nodes[id].num_queries += 1;
                if self.nodes[id].level >= self.max_depth {
                    continue;
                }
                let b = self.nodes[id].bounds;
                for o in 0..8u8 {
                    if query_cube_intersects(q, &child_bounds(&b, o)) {
                        self.nodes[id].child_queries[o as usize] += 1;
                        if let Some(c) = self.nodes[id].children[o as usize] {
                            stack.push(c);
                        }
                    }
                }
            }
        }
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node(&self, id: NodeId) -> &OctreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[OctreeNode] {
        &self.nodes
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn bounds(&self) -> &BoundingBox {
        &self.bounds
    }

    /// Materialized nodes at `level` (root = 1).
    pub fn level_nodes(&self, level: usize) -> &[NodeId] {
        &self.levels[level - 1]
    }

    /// Points of a node, sorted by `(traj, idx)`.
    pub fn points_in(&self, id: NodeId) -> &[PointRef] {
        let n = &self.nodes[id];
        &self.order[n.start..n.end]
    }

    pub fn leaf_of(&self, traj: usize, idx: usize) -> NodeId {
        self.leaf_of[traj][idx]
    }

    /// Node containing the point at `level`, walking up from its leaf.
    pub fn locate(&self, traj: usize, idx: usize, level: usize) -> NodeId {
        let mut id = self.leaf_of[traj][idx];
        while self.nodes[id].level > level {
            id = self.nodes[id].parent.expect("non-root node has a parent");
        }
        id
    }

    pub fn cube_id(&self, id: NodeId) -> CubeId {
        let mut path = Vec::new();
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(self.nodes[cur].octant);
            cur = p;
        }
        path.reverse();
        CubeId {
            level: self.nodes[id].level,
            path,
        }
    }

    pub fn find(&self, cube: &CubeId) -> Option<NodeId> {
        let mut id = 0;
        for &o in &cube.path {
            id = (*self.nodes[id].children.get(o as usize)?)?;
        }
        Some(id)
    }

    /// Trajectory and query ratios of the eight children, in octant order.
    /// Unmaterialized children contribute `(0, q)`; `0/0` is `0`.
    pub fn cube_state(&self, id: NodeId) -> [f64; 16] {
        let node = &self.nodes[id];
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let mut s = [0.0; 16];
        for o in 0..8 {
            let m = node.children[o].map_or(0, |c| self.nodes[c].num_trajectories);
            s[2 * o] = ratio(m, node.num_trajectories);
            s[2 * o + 1] = ratio(node.child_queries[o], node.num_queries);
        }
        s
    }
}

/// Fenwick tree over non-negative integer weights.
#[derive(Debug, Clone)]
struct Fenwick {
    tree: Vec<u64>,
    weights: Vec<u64>,
    total: u64,
}

impl Fenwick {
    fn new(weights: &[u64]) -> Self {
        let mut f = Fenwick {
            tree: vec![0; weights.len() + 1],
            weights: vec![0; weights.len()],
            total: 0,
        };
        for (i, &w) in weights.iter().enumerate() {
            f.set(i, w);
        }
        f
    }

    fn set(&mut self, i: usize, w: u64) {
        let old = self.weights[i];
        self.weights[i] = w;
        self.total = self.total - old + w;
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] = self.tree[k] - old + w;
            k += k & k.wrapping_neg();
        }
    }

    /// Smallest index whose prefix sum exceeds `target` (`target < total`).
    fn find(&self, mut target: u64) -> usize {
        let mut pos = 0;
        let mut step = (self.tree.len() - 1).next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

/// Per-run record of which points are still uninserted, with start-cube sampling.
///
/// The octree itself stays immutable; each simplification run owns one tracker.
#[derive(Debug, Clone)]
pub struct InsertionTracker {
    remaining: Vec<usize>,
    start_level: usize,
    slot_of: Vec<Option<usize>>,
    start_nodes: Vec<NodeId>,
    by_queries: Fenwick,
    by_points: Fenwick,
}

impl InsertionTracker {
    /// Counts every point not kept in `view` as a candidate.
    pub fn new(octree: &Octree, view: &SimplifiedDatabase, start_level: usize) -> Self {
        assert!(
            (1..=octree.max_depth()).contains(&start_level),
            "start level {start_level} outside 1..={}",
            octree.max_depth()
        );
        let remaining: Vec<usize> = (0..octree.nodes().len())
            .map(|id| {
                octree
                    .points_in(id)
                    .iter()
                    .filter(|r| !view.is_kept(r.traj as usize, r.idx as usize))
                    .count()
            })
            .collect();
        let start_nodes = octree.level_nodes(start_level).to_vec();
        let mut slot_of = vec![None; octree.nodes().len()];
        for (slot, &id) in start_nodes.iter().enumerate() {
            slot_of[id] = Some(slot);
        }
        let live = |id: NodeId| remaining[id] > 0;
        let qw: Vec<u64> = start_nodes
            .iter()
            .map(|&id| if live(id) { octree.node(id).num_queries as u64 } else { 0 })
            .collect();
        let nw: Vec<u64> = start_nodes
            .iter()
            .map(|&id| if live(id) { octree.node(id).num_points() as u64 } else { 0 })
            .collect();
        InsertionTracker {
            remaining,
            start_level,
            slot_of,
            start_nodes,
            by_queries: Fenwick::new(&qw),
            by_points: Fenwick::new(&nw),
        }
    }

    pub fn start_level(&self) -> usize {
        self.start_level
    }

    /// Uninserted points in a node.
    pub fn remaining(&self, id: NodeId) -> usize {
        self.remaining[id]
    }

    pub fn total_remaining(&self) -> usize {
        self.remaining[0]
    }

    /// Records an insertion along the point's root-to-leaf path.
    pub fn mark_inserted(&mut self, octree: &Octree, traj: usize, idx: usize) {
        let mut cur = Some(octree.leaf_of(traj, idx));
        while let Some(id) = cur {
            debug_assert!(self.remaining[id] > 0);
            self.remaining[id] -= 1;
            if self.remaining[id] == 0 {
                if let Some(slot) = self.slot_of[id] {
                    self.by_queries.set(slot, 0);
                    self.by_points.set(slot, 0);
                }
            }
            cur = octree.node(id).parent;
        }
    }

    /// Samples a start-level cube with uninserted points, proportionally to its
    /// query count, or to its point count when no such cube has a query.
    pub fn sample_start_cube<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<NodeId> {
        let tree = if self.by_queries.total > 0 {
            &self.by_queries
        } else if self.by_points.total > 0 {
            &self.by_points
        } else {
            return Err(Error::Exhausted {
                level: self.start_level,
            });
        };
        let target = rng.random_range(0..tree.total);
        Ok(self.start_nodes[tree.find(target)])
    }
}
