//! Observations, value networks and DQN machinery for the two agents.

use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::sed;
use crate::model::{anchor_segment, BoundingBox, SimplifiedDatabase, Trajectory, TrajectoryDatabase};
use crate::octree::{NodeId, Octree};

/// Agent-Cube actions: eight children plus stop.
pub const CUBE_ACTIONS: usize = 9;
pub const STOP_ACTION: usize = 8;
pub const CUBE_STATE_DIM: usize = 16;
pub const HIDDEN: usize = 25;

/// `(v_s, v_t)` of point `i` against its anchor segment in `kept`.
///
/// `v_s` is the synchronized distance; `v_t` is the gap between `p.t` and the
/// time of the spatially closest point on the anchor.
pub fn point_value(traj: &Trajectory, kept: &[usize], i: usize) -> (f64, f64) {
    let (s, e) = anchor_segment(kept, i);
    let pts = traj.points();
    let (ps, pe, p) = (&pts[s], &pts[e], &pts[i]);
    let v_s = sed(ps, pe, p);
    let (dx, dy) = (pe.x - ps.x, pe.y - ps.y);
    let len2 = dx * dx + dy * dy;
    let u = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - ps.x) * dx + (p.y - ps.y) * dy) / len2).clamp(0.0, 1.0)
    };
    let t_star = ps.t + u * (pe.t - ps.t);
    (v_s, (p.t - t_star).abs())
}

/// Value pairs of the candidates of `traj` inside `bounds`, plus the argmax
/// over `v_s` (smallest index on ties).
///
/// Candidates are uninserted interior points.
pub fn point_values(
    traj: &Trajectory,
    kept: &[usize],
    bounds: &BoundingBox,
) -> Result<(Vec<(usize, f64, f64)>, usize)> {
    let mut out = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    for i in 1..traj.last_index() {
        if kept.binary_search(&i).is_ok() || !bounds.contains(&traj[i]) {
            continue;
        }
        let (vs, vt) = point_value(traj, kept, i);
        if best.is_none_or(|(b, _)| vs > b) {
            best = Some((vs, i));
        }
        out.push((i, vs, vt));
    }
    let (_, arg) = best.ok_or(Error::NoCandidates)?;
    Ok((out, arg))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointState {
    /// `2K` values, `(v_s, v_t)` per slot.
    pub values: Vec<f64>,
    /// `(trajectory, point index)` behind each slot.
    pub candidates: Vec<Option<(usize, usize)>>,
}

impl PointState {
    pub fn k(&self) -> usize {
        self.candidates.len()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.candidates.iter().map(Option::is_some).collect()
    }
}

/// Top-`k` per-trajectory argmax candidates of a cube, descending in `v_s`
/// (lower trajectory index on ties), zero-padded to `k` slots.
pub fn build_point_state(
    octree: &Octree,
    node: NodeId,
    db: &TrajectoryDatabase,
    view: &SimplifiedDatabase,
    k: usize,
) -> Result<PointState> {
    // points_in is sorted by (traj, idx), so each trajectory is one run
    let mut best: Vec<(f64, f64, usize, usize)> = Vec::new();
    for r in octree.points_in(node) {
        let (t, i) = (r.traj as usize, r.idx as usize);
        if view.is_kept(t, i) {
            continue;
        }
        let (vs, vt) = point_value(db.get(t), view.kept(t), i);
        match best.last_mut() {
            Some(b) if b.2 == t => {
                if vs > b.0 {
                    *b = (vs, vt, t, i);
                }
            }
            _ => best.push((vs, vt, t, i)),
        }
    }
    if best.is_empty() {
        return Err(Error::CubeExhausted);
    }
    best.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)));
    let mut values = vec![0.0; 2 * k];
    let mut candidates = vec![None; k];
    for (slot, &(vs, vt, t, i)) in best.iter().take(k).enumerate() {
        values[2 * slot] = vs;
        values[2 * slot + 1] = vt;
        candidates[slot] = Some((t, i));
    }
    Ok(PointState { values, candidates })
}

/// Agent-Cube observation and valid actions at a node.
///
/// Valid children are materialized and still hold an uninserted point; stop
/// is always valid.
pub fn cube_observation(octree: &Octree, node: NodeId, remaining: impl Fn(NodeId) -> usize) -> (Vec<f64>, Vec<bool>) {
    let state = octree.cube_state(node).to_vec();
    let mut mask = vec![false; CUBE_ACTIONS];
    for (o, child) in octree.node(node).children.iter().enumerate() {
        mask[o] = child.is_some_and(|c| remaining(c) > 0);
    }
    mask[STOP_ACTION] = true;
    (state, mask)
}

/// Two-layer perceptron: `W2 * tanh(W1 * s + b1) + b2`.
///
/// Parameters live in one flat vector: `W1` (row-major `hidden x input`),
/// `b1`, `W2` (row-major `output x hidden`), `b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    input: usize,
    hidden: usize,
    output: usize,
    params: Vec<f64>,
}

impl QNetwork {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let mut net = QNetwork::zeros(input, hidden, output);
        let a1 = (6.0 / (input + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + output) as f64).sqrt();
        let (w1, _, w2, _) = net.offsets();
        for p in &mut net.params[w1..w1 + hidden * input] {
            *p = rng.random_range(-a1..a1);
        }
        for p in &mut net.params[w2..w2 + output * hidden] {
            *p = rng.random_range(-a2..a2);
        }
        net
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        QNetwork {
            input,
            hidden,
            output,
            params: vec![0.0; hidden * input + hidden + output * hidden + output],
        }
    }

    pub fn from_params(input: usize, hidden: usize, output: usize, params: Vec<f64>) -> Result<Self> {
        let net = QNetwork::zeros(input, hidden, output);
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(QNetwork { params, ..net })
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn output_dim(&self) -> usize {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output * self.hidden;
        (w1, b1, w2, b2)
    }

    fn check(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.input {
            return Err(Error::ShapeMismatch {
                expected: self.input,
                got: state.len(),
            });
        }
        Ok(())
    }

    fn hidden_layer(&self, state: &[f64]) -> Vec<f64> {
        let (w1, b1, _, _) = self.offsets();
        (0..self.hidden)
            .map(|h| {
                let row = &self.params[w1 + h * self.input..w1 + (h + 1) * self.input];
                let z = row.iter().zip(state).map(|(w, s)| w * s).sum::<f64>() + self.params[b1 + h];
                z.tanh()
            })
            .collect()
    }

    fn output_layer(&self, hidden: &[f64]) -> Vec<f64> {
        let (_, _, w2, b2) = self.offsets();
        (0..self.output)
            .map(|o| {
                let row = &self.params[w2 + o * self.hidden..w2 + (o + 1) * self.hidden];
                row.iter().zip(hidden).map(|(w, a)| w * a).sum::<f64>() + self.params[b2 + o]
            })
            .collect()
    }

    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check(state)?;
        Ok(self.output_layer(&self.hidden_layer(state)))
    }

    /// Squared TD loss `(Q(s)[a] - y)^2`.
    pub fn loss(&self, state: &[f64], action: usize, target: f64) -> Result<f64> {
        let q = self.forward(state)?;
        Ok((q[action] - target).powi(2))
    }

    /// Adds `scale * d loss / d params` into `grad` and returns the loss.
    pub fn accumulate_grad(&self, state: &[f64], action: usize, target: f64, scale: f64, grad: &mut [f64]) -> Result<f64> {
        self.check(state)?;
        if grad.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let (w1, b1, w2, b2) = self.offsets();
        let hidden = self.hidden_layer(state);
        let q = self.output_layer(&hidden);
        let err = q[action] - target;
        let dq = 2.0 * err * scale;
        grad[b2 + action] += dq;
        let row = w2 + action * self.hidden;
        for h in 0..self.hidden {
            grad[row + h] += dq * hidden[h];
            let dz = dq * self.params[row + h] * (1.0 - hidden[h] * hidden[h]);
            grad[b1 + h] += dz;
            let wrow = w1 + h * self.input;
            for (g, s) in grad[wrow..wrow + self.input].iter_mut().zip(state) {
                *g += dz * s;
            }
        }
        Ok(err * err)
    }

    pub fn grad(&self, state: &[f64], action: usize, target: f64) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.params.len()];
        self.accumulate_grad(state, action, target, 1.0, &mut g)?;
        Ok(g)
    }
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    /// Next state and its valid actions; `None` for terminal transitions.
    pub next: Option<(Vec<f64>, Vec<bool>)>,
}

/// Fixed-capacity FIFO transition store.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        ReplayMemory {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

/// Argmax over valid entries, smallest index on ties.
pub fn masked_argmax(values: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if mask[i] && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Epsilon-greedy choice among valid actions.
pub fn select_action<R: Rng + ?Sized>(
    net: &QNetwork,
    state: &[f64],
    mask: &[bool],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if mask.len() != net.output_dim() {
        return Err(Error::ShapeMismatch {
            expected: net.output_dim(),
            got: mask.len(),
        });
    }
    let valid: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if valid.is_empty() {
        return Err(Error::NoValidAction);
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(valid[rng.random_range(0..valid.len())]);
    }
    let q = net.forward(state)?;
    Ok(masked_argmax(&q, mask).expect("at least one valid action"))
}

/// Shared reward of a window: the drop in query-result difference.
pub fn compute_reward(diff_before: f64, diff_after: f64) -> f64 {
    diff_before - diff_after
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    pub epsilon_decay: f64,
    pub batch_size: usize,
    pub memory_capacity: usize,
    pub target_sync: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            gamma: 0.99,
            learning_rate: 0.01,
            epsilon_start: 1.0,
            epsilon_min: 0.1,
            epsilon_decay: 0.99,
            batch_size: 32,
            memory_capacity: 2000,
            target_sync: 100,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.epsilon_min > 0.0 && self.epsilon_min <= 1.0) {
            return Err(Error::Config(format!("epsilon_min {} outside (0, 1]", self.epsilon_min)));
        }
        if self.batch_size == 0 || self.memory_capacity == 0 || self.target_sync == 0 {
            return Err(Error::Config("batch size, memory capacity and target sync must be positive".into()));
        }
        Ok(())
    }

    /// Epsilon after `episode` decays.
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        let mut e = self.epsilon_start;
        for _ in 0..episode {
            e = (e * self.epsilon_decay).max(self.epsilon_min);
        }
        e
    }
}

/// Online and target networks, optimizer and replay memory of one agent.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub online: QNetwork,
    pub target: QNetwork,
    adam: Adam,
    memory: ReplayMemory,
    updates: usize,
    cfg: DqnConfig,
}

impl DqnAgent {
    pub fn new(online: QNetwork, cfg: DqnConfig) -> Self {
        DqnAgent {
            target: online.clone(),
            adam: Adam::new(online.params().len(), cfg.learning_rate),
            memory: ReplayMemory::new(cfg.memory_capacity),
            online,
            updates: 0,
            cfg,
        }
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn remember(&mut self, t: Transition) {
        self.memory.push(t);
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// TD target of one transition under the target network.
    pub fn td_target(&self, t: &Transition) -> Result<f64> {
        match &t.next {
            None => Ok(t.reward),
            Some((s, mask)) => {
                let q = self.target.forward(s)?;
                let best = masked_argmax(&q, mask).map_or(0.0, |a| q[a]);
                Ok(t.reward + self.cfg.gamma * best)
            }
        }
    }

    /// One Adam step on the mean loss of `batch`; returns that loss.
    pub fn train_on(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let mut grad = vec![0.0; self.online.params().len()];
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for t in batch {
            let y = self.td_target(t)?;
            loss += self.online.accumulate_grad(&t.state, t.action, y, scale, &mut grad)? * scale;
        }
        self.adam.update(self.online.params_mut(), &grad);
        self.updates += 1;
        if self.updates % self.cfg.target_sync == 0 {
            self.target = self.online.clone();
        }
        Ok(loss)
    }

    /// Samples a batch and updates once memory holds at least a batch.
    pub fn update<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        if self.memory.len() < self.cfg.batch_size {
            return Ok(None);
        }
        let batch: Vec<Transition> = self.memory.sample(self.cfg.batch_size, rng).into_iter().cloned().collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        self.train_on(&refs).map(Some)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerShape {
    input: usize,
    hidden: usize,
    output: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetRecord {
    shape: LayerShape,
    params: Vec<f64>,
}

impl NetRecord {
    fn of(net: &QNetwork) -> Self {
        NetRecord {
            shape: LayerShape {
                input: net.input_dim(),
                hidden: net.hidden_dim(),
                output: net.output_dim(),
            },
            params: net.params().to_vec(),
        }
    }

    fn into_net(self) -> Result<QNetwork> {
        QNetwork::from_params(self.shape.input, self.shape.hidden, self.shape.output, self.params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    k: usize,
    cube: NetRecord,
    point: NetRecord,
}

/// Trained pair of policies.
#[derive(Debug, Clone, PartialEq)]
pub struct Policies {
    pub cube: QNetwork,
    pub point: QNetwork,
}

impl Policies {
    /// Freshly initialized networks for `k` point slots.
    pub fn init(k: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Policies {
            cube: QNetwork::new(CUBE_STATE_DIM, HIDDEN, CUBE_ACTIONS, &mut rng),
            point: QNetwork::new(2 * k, HIDDEN, k, &mut rng),
        }
    }

    pub fn k(&self) -> usize {
        self.point.output_dim()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION,
            k: self.k(),
            cube: NetRecord::of(&self.cube),
            point: NetRecord::of(&self.point),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(s)?;
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", file.version)));
        }
        let cube = file.cube.into_net()?;
        let point = file.point.into_net()?;
        if cube.input_dim() != CUBE_STATE_DIM || cube.output_dim() != CUBE_ACTIONS {
            return Err(Error::Checkpoint(format!(
                "cube network must be {CUBE_STATE_DIM} -> {CUBE_ACTIONS}, found {} -> {}",
                cube.input_dim(),
                cube.output_dim()
            )));
        }
        if point.input_dim() != 2 * file.k || point.output_dim() != file.k {
            return Err(Error::Checkpoint(format!(
                "point network must be {} -> {}, found {} -> {}",
                2 * file.k,
                file.k,
                point.input_dim(),
                point.output_dim()
            )));
        }
        Ok(Policies { cube, point })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
