//! Experiment harness: simplify with several algorithms and budgets, score
//! range, kNN and similarity queries against the original database, and
//! report mean and standard deviation of F1 over repetitions.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::Policies;
use crate::baseline::BaselineSpec;
use crate::driver::{random_insertion, rl4qdts_simplify, train, DriverConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::measure::ErrorMeasure;
use crate::model::{SimplifiedDatabase, TrajectoryDatabase};
use crate::query::{
    f1, knn_query, mean, similarity_query, workload_diff, KnnParams, QueryResult, QueryWorkload, View,
    DEFAULT_SIMILARITY_DELTA, DEFAULT_WINDOW_S,
};
use crate::workload::{generate, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Range,
    Knn,
    Similarity,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Range, Task::Knn, Task::Similarity];

    pub fn name(self) -> &'static str {
        match self {
            Task::Range => "range",
            Task::Knn => "knn",
            Task::Similarity => "similarity",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "range" => Ok(Task::Range),
            "knn" => Ok(Task::Knn),
            "similarity" => Ok(Task::Similarity),
            other => Err(Error::Config(format!("unknown query task {other:?}"))),
        }
    }
}

/// An algorithm slot of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Rl4qdts,
    /// Uniformly random interior points on top of the endpoints.
    Random,
    Baseline(BaselineSpec),
}

impl Method {
    /// `(algorithm, measure, adaptation)` columns; `-` where not applicable.
    pub fn columns(&self) -> (String, String, String) {
        match self {
            Method::Rl4qdts => ("rl4qdts".into(), "-".into(), "-".into()),
            Method::Random => ("random".into(), "-".into(), "-".into()),
            Method::Baseline(b) => {
                let algo = match b.algorithm {
                    crate::baseline::Algorithm::TopDown => "topdown",
                    crate::baseline::Algorithm::BottomUp => "bottomup",
                };
                let adapt = match b.adaptation {
                    crate::baseline::Adaptation::E => "e",
                    crate::baseline::Adaptation::W => "w",
                };
                (algo.into(), b.measure.to_string(), adapt.into())
            }
        }
    }

    fn is_deterministic(&self) -> bool {
        matches!(self, Method::Baseline(_))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Rl4qdts => f.write_str("rl4qdts"),
            Method::Random => f.write_str("random"),
            Method::Baseline(b) => write!(f, "{b}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// `rl4qdts`, `random`, or `<topdown|bottomup>-<e|w>-<measure>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "rl4qdts" => return Ok(Method::Rl4qdts),
            "random" => return Ok(Method::Random),
            _ => {}
        }
        let (label, measure) = s
            .rsplit_once('-')
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))?;
        Ok(Method::Baseline(BaselineSpec::parse(label, measure.parse::<ErrorMeasure>()?)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub algorithms: Vec<Method>,
    /// Budgets as fractions of `N`.
    pub budgets: Vec<f64>,
    pub tasks: Vec<Task>,
    /// Range workload, also the query distribution handed to RL4QDTS.
    pub workload: WorkloadSpec,
    pub repetitions: usize,
    pub seed: u64,
    pub driver: DriverConfig,
    pub knn: KnnParams,
    /// Query trajectories per repetition for kNN and similarity tasks.
    pub trajectory_queries: usize,
    pub similarity_delta: f64,
    /// Time window of kNN and similarity queries, from the query's start.
    pub window: f64,
}

impl ExperimentSpec {
    pub fn new(algorithms: Vec<Method>, budgets: Vec<f64>, tasks: Vec<Task>) -> Self {
        ExperimentSpec {
            algorithms,
            budgets,
            tasks,
            workload: WorkloadSpec::data(0),
            repetitions: 5,
            seed: 0,
            driver: DriverConfig::default(),
            knn: KnnParams::default(),
            trajectory_queries: 20,
            similarity_delta: DEFAULT_SIMILARITY_DELTA,
            window: DEFAULT_WINDOW_S,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() || self.budgets.is_empty() || self.tasks.is_empty() {
            return Err(Error::Config("algorithms, budgets and tasks must be non-empty".into()));
        }
        if let Some(r) = self.budgets.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::Config(format!("budget ratio {r} outside (0, 1]")));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        self.workload.validate()?;
        self.driver.validate()
    }
}

/// One row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algorithm: String,
    pub measure: String,
    pub adaptation: String,
    pub budget_ratio: f64,
    pub task: String,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub wallclock_s: f64,
}

/// Mixes a root seed with a path of indices.
pub fn derive_seed(root: u64, parts: &[u64]) -> u64 {
    let mut z = root;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Budget in points for a ratio: `floor(r * N)`. Algorithms reject budgets
/// below `2M`.
pub fn budget_for(db: &TrajectoryDatabase, ratio: f64) -> usize {
    (ratio * db.num_points() as f64).floor() as usize
}

/// Queries and original answers shared by every algorithm in one repetition.
struct RepetitionQueries {
    range: QueryWorkload,
    /// `(query trajectory, window, original kNN result, original similarity result)`
    trajectory: Vec<(usize, (f64, f64), Option<QueryResult>, Option<QueryResult>)>,
}

fn repetition_queries(db: &TrajectoryDatabase, spec: &ExperimentSpec, rep: usize) -> Result<RepetitionQueries> {
    let range = generate(db, &spec.workload.with_seed(derive_seed(spec.seed, &[0, rep as u64])))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[1, rep as u64]));
    let count = spec.trajectory_queries.min(db.num_trajectories());
    let wants_knn = spec.tasks.contains(&Task::Knn);
    let wants_sim = spec.tasks.contains(&Task::Similarity);
    // query trajectories in random order; those with fewer than k kNN
    // candidates in their window are skipped
    let order: Vec<usize> = index::sample(&mut rng, db.num_trajectories(), db.num_trajectories()).into_vec();
    let mut trajectory = Vec::with_capacity(count);
    for chunk in order.chunks(count.max(1)) {
        if trajectory.len() >= count {
            break;
        }
        let answers: Vec<_> = chunk
            .par_iter()
            .map(|&q| {
                let tq = db.get(q);
                let window = (tq.start_time(), tq.start_time() + spec.window);
                let knn = if wants_knn {
                    match knn_query(View::Original(db), tq, window, spec.knn) {
                        Ok(r) => Some(r),
                        Err(Error::InsufficientCandidates { .. }) => return Ok(None),
                        Err(e) => return Err(e),
                    }
                } else {
                    None
                };
                let sim = wants_sim.then(|| similarity_query(View::Original(db), tq, window, spec.similarity_delta));
                Ok(Some((q, window, knn, sim)))
            })
            .collect::<Result<_>>()?;
        trajectory.extend(answers.into_iter().flatten().take(count - trajectory.len()));
    }
    if wants_knn && trajectory.is_empty() && count > 0 {
        return Err(Error::InsufficientCandidates {
            k: spec.knn.k,
            available: 0,
        });
    }
    Ok(RepetitionQueries { range, trajectory })
}

/// Mean F1 of one task on a simplified view.
fn score(
    db: &TrajectoryDatabase,
    view: &SimplifiedDatabase,
    queries: &RepetitionQueries,
    task: Task,
    spec: &ExperimentSpec,
) -> Result<f64> {
    match task {
        Task::Range => Ok(1.0 - workload_diff(db, view, &queries.range)?),
        Task::Knn => {
            let scores = queries
                .trajectory
                .iter()
                .map(|(q, window, orig, _)| {
                    let rs = knn_query(View::Simplified(db, view), db.get(*q), *window, spec.knn)?;
                    let s = f1(orig.as_ref().expect("kNN answers computed"), &rs);
                    assert!(
                        s.precision == s.recall && s.recall == s.f1,
                        "kNN precision, recall and F1 must agree"
                    );
                    Ok(s.f1)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(mean(&scores))
        }
        Task::Similarity => {
            let scores: Vec<f64> = queries
                .trajectory
                .iter()
                .map(|(q, window, _, orig)| {
                    let rs = similarity_query(View::Simplified(db, view), db.get(*q), *window, spec.similarity_delta);
                    f1(orig.as_ref().expect("similarity answers computed"), &rs).f1
                })
                .collect();
            Ok(mean(&scores))
        }
    }
}

fn simplify(
    db: &TrajectoryDatabase,
    method: &Method,
    budget: usize,
    spec: &ExperimentSpec,
    policies: Option<&Policies>,
    seed: u64,
) -> Result<SimplifiedDatabase> {
    match method {
        Method::Rl4qdts => {
            let policies = policies.ok_or_else(|| Error::Config("rl4qdts needs a policy checkpoint".into()))?;
            let workload = generate(db, &spec.workload.with_seed(derive_seed(seed, &[0])))?;
            rl4qdts_simplify(db, budget, &workload, policies, &spec.driver, derive_seed(seed, &[1]))
        }
        Method::Random => random_insertion(db, budget, seed),
        Method::Baseline(b) => b.run(db, budget),
    }
}

/// Runs every (algorithm, budget, task) cell; rows come out in that nesting
/// order.
pub fn run_experiment(db: &TrajectoryDatabase, spec: &ExperimentSpec, policies: Option<&Policies>) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    if spec.algorithms.contains(&Method::Rl4qdts) && policies.is_none() {
        return Err(Error::Config("rl4qdts needs a policy checkpoint".into()));
    }
    let reps: Vec<RepetitionQueries> = (0..spec.repetitions)
        .map(|r| repetition_queries(db, spec, r))
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..spec.algorithms.len())
        .flat_map(|a| (0..spec.budgets.len()).map(move |b| (a, b)))
        .collect();
    let results: Vec<Vec<ResultRow>> = cells
        .par_iter()
        .map(|&(a, b)| {
            let method = &spec.algorithms[a];
            let ratio = spec.budgets[b];
            let budget = budget_for(db, ratio);
            let mut per_task: Vec<Vec<f64>> = vec![Vec::new(); spec.tasks.len()];
            let mut seconds = Vec::with_capacity(spec.repetitions);
            let mut cached: Option<(SimplifiedDatabase, f64)> = None;
            for (r, queries) in reps.iter().enumerate() {
                let (view, secs) = match &cached {
                    Some((v, s)) => (v.clone(), *s),
                    None => {
                        let seed = derive_seed(spec.seed, &[2, a as u64, b as u64, r as u64]);
                        let start = Instant::now();
                        let v = simplify(db, method, budget, spec, policies, seed)?;
                        let s = start.elapsed().as_secs_f64();
                        if method.is_deterministic() {
                            cached = Some((v.clone(), s));
                        }
                        (v, s)
                    }
                };
                seconds.push(secs);
                for (t, task) in spec.tasks.iter().enumerate() {
                    per_task[t].push(score(db, &view, queries, *task, spec)?);
                }
            }
            let (algorithm, measure, adaptation) = method.columns();
            Ok(spec
                .tasks
                .iter()
                .zip(per_task)
                .map(|(task, f)| ResultRow {
                    algorithm: algorithm.clone(),
                    measure: measure.clone(),
                    adaptation: adaptation.clone(),
                    budget_ratio: ratio,
                    task: task.to_string(),
                    f1_mean: mean(&f),
                    f1_std: std_dev(&f),
                    wallclock_s: mean(&seconds),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().flatten().collect())
}

pub fn write_results<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record([
            "algorithm",
            "measure",
            "adaptation",
            "budget_ratio",
            "task",
            "f1_mean",
            "f1_std",
            "wallclock_s",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<results>", e))
}

pub fn read_results<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()
        .map_err(|e| Error::MalformedResults(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    StartLevel,
    EndLevel,
    K,
    TrainSize,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::StartLevel => "S",
            SweepParam::EndLevel => "E",
            SweepParam::K => "K",
            SweepParam::TrainSize => "train_size",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s" | "start" | "start_level" => Ok(SweepParam::StartLevel),
            "e" | "end" | "end_level" => Ok(SweepParam::EndLevel),
            "k" => Ok(SweepParam::K),
            "train_size" | "train-size" | "trainsize" => Ok(SweepParam::TrainSize),
            other => Err(Error::Config(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

/// One (value, repetition) measurement of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub rep: usize,
    pub f1: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<usize>,
    pub train: TrainConfig,
    pub budget_ratio: f64,
    pub repetitions: usize,
}

/// Trains one policy per parameter value and measures range F1 and
/// simplification time on `eval`.
pub fn run_sweep(training: &[TrajectoryDatabase], eval: &TrajectoryDatabase, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.values.is_empty() || spec.repetitions == 0 {
        return Err(Error::Config("sweep needs values and at least one repetition".into()));
    }
    let mut rows = Vec::new();
    for &value in &spec.values {
        let mut cfg = spec.train.clone();
        let mut dbs = training;
        match spec.param {
            SweepParam::StartLevel => cfg.driver.start_level = value,
            SweepParam::EndLevel => cfg.driver.end_level = value,
            SweepParam::K => cfg.driver.k = value,
            SweepParam::TrainSize => dbs = &training[..value.min(training.len())],
        }
        cfg.validate()?;
        let policies = train(dbs, &cfg)?.policies;
        let budget = budget_for(eval, spec.budget_ratio);
        for rep in 0..spec.repetitions {
            let seed = derive_seed(cfg.seed, &[3, value as u64, rep as u64]);
            let eval_w = generate(eval, &cfg.workload.with_seed(derive_seed(seed, &[0])))?;
            let state_w = generate(eval, &cfg.workload.with_seed(derive_seed(seed, &[1])))?;
            let start = Instant::now();
            let view = rl4qdts_simplify(eval, budget, &state_w, &policies, &cfg.driver, seed)?;
            let time_s = start.elapsed().as_secs_f64();
            rows.push(SweepRow {
                param: spec.param.name().into(),
                value: value as f64,
                rep,
                f1: 1.0 - workload_diff(eval, &view, &eval_w)?,
                time_s,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<sweep>", e))
}

pub fn read_sweep<R: Read>(reader: R) -> Result<Vec<SweepRow>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .collect::<std::result::Result<Vec<SweepRow>, _>>()
        .map_err(|e| Error::MalformedResults(e.to_string()))
}

/// Aggregated sweep line.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub param: String,
    pub value: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub time_mean: f64,
    pub best: bool,
}

/// Mean and standard deviation per parameter value; the highest mean F1 is
/// flagged (first value on ties).
pub fn sweep_report(rows: &[SweepRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::MalformedResults("no rows".into()));
    }
    let mut groups: BTreeMap<(String, u64), (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        if !(r.f1.is_finite() && r.time_s.is_finite() && r.value.is_finite()) {
            return Err(Error::MalformedResults(format!("non-finite entry for {} = {}", r.param, r.value)));
        }
        // order by value, keeping the exact bits as the key
        let key = (r.param.clone(), order_key(r.value));
        let g = groups.entry(key).or_insert((r.value, Vec::new(), Vec::new()));
        g.1.push(r.f1);
        g.2.push(r.time_s);
    }
    let mut out: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((param, _), (value, f, t))| SummaryRow {
            param,
            value,
            f1_mean: mean(&f),
            f1_std: std_dev(&f),
            time_mean: mean(&t),
            best: false,
        })
        .collect();
    let mut best = 0;
    for (i, r) in out.iter().enumerate() {
        if r.f1_mean > out[best].f1_mean {
            best = i;
        }
    }
    out[best].best = true;
    Ok(out)
}

fn order_key(v: f64) -> u64 {
    // monotone map from finite f64 to u64
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Table with columns `param, f1, time`; the best row is starred.
pub fn format_report(rows: &[SummaryRow]) -> String {
    let mut s = String::from("param\tvalue\tf1\ttime_s\n");
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{:.3}±{:.3}{}\t{:.3}\n",
            r.param,
            r.value,
            r.f1_mean,
            r.f1_std,
            if r.best { " *" } else { "" },
            r.time_mean
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_labels_round_trip() {
        for m in ["rl4qdts", "random", "topdown-e-sed", "bottomup-w-dad"] {
            assert_eq!(m.parse::<Method>().unwrap().to_string(), m);
        }
        assert!("topdown-x-sed".parse::<Method>().is_err());
        assert!("magic".parse::<Method>().is_err());
        let (a, m, d) = "bottomup-w-ped".parse::<Method>().unwrap().columns();
        assert_eq!((a.as_str(), m.as_str(), d.as_str()), ("bottomup", "ped", "w"));
    }

    #[test]
    fn seeds_differ_by_path() {
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(5, &[2, 3]), derive_seed(5, &[2, 3]));
    }

    #[test]
    fn report_flags_argmax() {
        let row = |v: f64, rep, f1| SweepRow {
            param: "K".into(),
            value: v,
            rep,
            f1,
            time_s: v,
        };
        let single = sweep_report(&[row(2.0, 0, 0.5)]).unwrap();
        assert_eq!(single.len(), 1);
        assert!(single[0].best);

        let rows = vec![row(1.0, 0, 0.4), row(1.0, 1, 0.6), row(2.0, 0, 0.7), row(2.0, 1, 0.7), row(3.0, 0, 0.1)];
        let rep = sweep_report(&rows).unwrap();
        assert_eq!(rep.iter().map(|r| r.value).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert_eq!(rep.iter().filter(|r| r.best).count(), 1);
        assert!(rep[1].best);
        assert!((rep[0].f1_mean - 0.5).abs() < 1e-12 && (rep[0].f1_std - 0.1).abs() < 1e-12);
        assert!(format_report(&rep).contains("0.700±0.000 *"));
        assert!(matches!(sweep_report(&[]), Err(Error::MalformedResults(_))));
    }

    #[test]
    fn results_csv_round_trip() {
        let rows = vec![ResultRow {
            algorithm: "topdown".into(),
            measure: "sed".into(),
            adaptation: "e".into(),
            budget_ratio: 0.01,
            task: "range".into(),
            f1_mean: 0.5,
            f1_std: 0.1,
            wallclock_s: 0.25,
        }];
        let mut buf = Vec::new();
        write_results(&rows, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf)
            .starts_with("algorithm,measure,adaptation,budget_ratio,task,f1_mean,f1_std,wallclock_s"));
        assert_eq!(read_results(buf.as_slice()).unwrap(), rows);
        assert!(matches!(read_results("a,b\n1,2\n".as_bytes()), Err(Error::MalformedResults(_))));
    }
}
