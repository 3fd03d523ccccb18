use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qdts::agents::Policies;
use qdts::bench::{
    budget_for, format_report, read_sweep, run_experiment, run_sweep, sweep_report, write_results, write_sweep,
    ExperimentSpec, Method, SweepParam, SweepSpec, Task,
};
use qdts::driver::{random_insertion, rl4qdts_simplify, train, DriverConfig, TrainConfig};
use qdts::model::{load_trajectories, save_trajectories, CsvFormat, SimplifiedDatabase, TrajectoryDatabase};
use qdts::query::{
    f1, knn_query, similarity_query, workload_diff, KnnParams, View, DEFAULT_EDR_EPS, DEFAULT_K,
    DEFAULT_SIMILARITY_DELTA, DEFAULT_WINDOW_S,
};
use qdts::synth::{generate_database, SynthSpec};
use qdts::workload::{generate, load_centers, CenterDistribution, WorkloadSpec};
use qdts::Error;

/// Query-driven trajectory database simplification.
#[derive(Debug, Parser)]
#[command(name = "qdts", version, args_override_self = true)]
struct Cli {
    /// Optional `key=value` file; each key is a long flag of the subcommand.
    /// Flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate and normalize a trajectory CSV to planar `traj_id,t,x,y`.
    Ingest(IngestArgs),
    /// Train Agent-Cube and Agent-Point policies and write a checkpoint.
    Train(TrainArgs),
    /// Simplify a database and write the kept-index CSV.
    Simplify(SimplifyArgs),
    /// Compare query results on the original and a simplified database.
    Query(QueryArgs),
    /// Run an experiment grid and write a results CSV.
    Bench(BenchArgs),
    /// Parameter study over S, E, K or training-set size.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Input CSV with `traj_id,t,x,y` or `traj_id,t,lat,lon`.
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Generate a synthetic city database with this seed instead.
    #[arg(long)]
    synthetic: Option<u64>,
    /// Trajectories of the synthetic database.
    #[arg(long, default_value_t = 300)]
    trajectories: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct WorkloadArgs {
    /// Center distribution: data, gaussian, zipf or real.
    #[arg(long, default_value = "data")]
    distribution: String,
    /// Range queries per workload.
    #[arg(long, default_value_t = 100)]
    queries: usize,
    /// Query side length (meters).
    #[arg(long, default_value_t = 2000.0)]
    spatial_extent: f64,
    /// Query duration (seconds).
    #[arg(long, default_value_t = 7.0 * 86_400.0)]
    temporal_extent: f64,
    /// `x,y,t` centers for the real distribution.
    #[arg(long)]
    centers: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    gaussian_mu: f64,
    #[arg(long, default_value_t = 0.25)]
    gaussian_sigma: f64,
    #[arg(long, default_value_t = 2.0)]
    zipf_a: f64,
}

impl WorkloadArgs {
    fn spec(&self, seed: u64) -> Result<WorkloadSpec, Error> {
        let distribution = match self.distribution.to_ascii_lowercase().as_str() {
            "data" => CenterDistribution::Data,
            "gaussian" => CenterDistribution::Gaussian {
                mu: self.gaussian_mu,
                sigma: self.gaussian_sigma,
            },
            "zipf" => CenterDistribution::Zipf { a: self.zipf_a },
            "real" => {
                let path = self
                    .centers
                    .as_ref()
                    .ok_or_else(|| Error::Config("--distribution real needs --centers".into()))?;
                CenterDistribution::Real {
                    centers: load_centers(path)?,
                }
            }
            other => return Err(Error::Config(format!("unknown distribution {other:?}"))),
        };
        let spec = WorkloadSpec {
            count: self.queries,
            distribution,
            spatial_extent: self.spatial_extent,
            temporal_extent: self.temporal_extent,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Args)]
struct DriverArgs {
    /// Start level S.
    #[arg(long, default_value_t = 9)]
    start_level: usize,
    /// End level E.
    #[arg(long, default_value_t = 12)]
    end_level: usize,
    /// Point slots K.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Insertions per reward window.
    #[arg(long, default_value_t = 50)]
    delta: usize,
}

impl DriverArgs {
    fn config(&self, reward_queries: usize) -> Result<DriverConfig, Error> {
        let cfg = DriverConfig {
            start_level: self.start_level,
            end_level: self.end_level,
            k: self.k,
            delta: self.delta,
            reward_queries,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training databases.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    data: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 5)]
    episodes: usize,
    /// Training budget as a fraction of N.
    #[arg(long, default_value_t = 0.01)]
    budget: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    driver: DriverArgs,
    #[command(flatten)]
    workload: WorkloadArgs,
}

#[derive(Debug, Args)]
struct SimplifyArgs {
    #[arg(long)]
    data: PathBuf,
    /// rl4qdts, random, or topdown-e / topdown-w / bottomup-e / bottomup-w.
    #[arg(long)]
    algo: String,
    /// Error measure for the baselines: sed, ped, dad or sad.
    #[arg(long, default_value = "sed")]
    measure: String,
    /// Budget as a fraction of N.
    #[arg(long)]
    budget: f64,
    #[arg(long)]
    output: PathBuf,
    /// Policy checkpoint for rl4qdts.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    driver: DriverArgs,
    #[command(flatten)]
    workload: WorkloadArgs,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    data: PathBuf,
    /// Kept-index CSV from `simplify`.
    #[arg(long)]
    kept: PathBuf,
    /// range, knn or similarity.
    #[arg(long)]
    task: String,
    /// Query trajectory id for knn and similarity; the first trajectory by default.
    #[arg(long)]
    trajectory: Option<String>,
    /// Window length from the query's start (seconds).
    #[arg(long, default_value_t = DEFAULT_WINDOW_S)]
    window: f64,
    #[arg(long = "knn-k", default_value_t = DEFAULT_K)]
    knn_k: usize,
    #[arg(long, default_value_t = DEFAULT_EDR_EPS)]
    edr_eps: f64,
    #[arg(long, default_value_t = DEFAULT_SIMILARITY_DELTA)]
    delta_m: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    workload: WorkloadArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated algorithms, e.g. rl4qdts,random,topdown-e-sed.
    #[arg(long, value_delimiter = ',', default_value = "random,topdown-e-sed,bottomup-e-sed")]
    algos: Vec<String>,
    /// Comma-separated budget ratios.
    #[arg(long, value_delimiter = ',', default_value = "0.0025,0.005,0.01,0.015,0.02")]
    budgets: Vec<f64>,
    /// Comma-separated tasks: range, knn, similarity.
    #[arg(long, value_delimiter = ',', default_value = "range,knn,similarity")]
    tasks: Vec<String>,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Query trajectories per repetition for knn and similarity.
    #[arg(long, default_value_t = 20)]
    trajectory_queries: usize,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    driver: DriverArgs,
    #[command(flatten)]
    workload: WorkloadArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Summarize an existing sweep CSV instead of running one.
    #[arg(long, conflicts_with_all = ["train_data", "eval_data", "param"])]
    report: Option<PathBuf>,
    /// Training databases.
    #[arg(long, value_delimiter = ',')]
    train_data: Vec<PathBuf>,
    #[arg(long)]
    eval_data: Option<PathBuf>,
    /// S, E, K or train_size.
    #[arg(long)]
    param: Option<String>,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',')]
    values: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    episodes: usize,
    #[arg(long, default_value_t = 0.01)]
    budget: f64,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    driver: DriverArgs,
    #[command(flatten)]
    workload: WorkloadArgs,
}

fn load_db(path: &Path) -> Result<TrajectoryDatabase, Error> {
    load_trajectories(path, CsvFormat::Csv)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

fn open(path: &Path) -> Result<BufReader<File>, Error> {
    File::open(path).map(BufReader::new).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

fn ingest(a: IngestArgs) -> Result<(), Error> {
    let db = match (&a.input, a.synthetic) {
        (Some(p), _) => load_db(p)?,
        (None, Some(seed)) => generate_database(&SynthSpec {
            trajectories: a.trajectories,
            ..SynthSpec::default().with_seed(seed)
        })?,
        (None, None) => return Err(Error::Config("ingest needs --input or --synthetic".into())),
    };
    save_trajectories(&db, &a.output)?;
    println!("trajectories={} points={}", db.num_trajectories(), db.num_points());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<(), Error> {
    let dbs = a.data.iter().map(|p| load_db(p)).collect::<Result<Vec<_>, _>>()?;
    let mut cfg = TrainConfig::new(a.seed);
    cfg.driver = a.driver.config(a.workload.queries)?;
    cfg.workload = a.workload.spec(a.seed)?;
    cfg.episodes_per_db = a.episodes;
    cfg.budget_ratio = a.budget;
    let outcome = train(&dbs, &cfg)?;
    for r in &outcome.reports {
        println!(
            "db={} episode={} epsilon={:.3} insertions={} diff={:.4}->{:.4} greedy_f1={:.4}",
            r.database, r.episode, r.epsilon, r.insertions, r.diff_initial, r.diff_final, r.greedy_f1
        );
    }
    if let Some(best) = outcome.best_episode {
        println!("kept episode {best}");
    }
    outcome.policies.save(&a.output)
}

fn method_for(algo: &str, measure: &str) -> Result<Method, Error> {
    let algo = algo.trim().to_ascii_lowercase();
    if algo == "rl4qdts" || algo == "random" || algo.matches('-').count() == 2 {
        algo.parse()
    } else {
        format!("{algo}-{measure}").parse()
    }
}

fn simplify_cmd(a: SimplifyArgs) -> Result<(), Error> {
    if !(a.budget > 0.0 && a.budget <= 1.0) {
        return Err(Error::Config(format!("budget ratio {} outside (0, 1]", a.budget)));
    }
    let method = method_for(&a.algo, &a.measure)?;
    let policies = a.checkpoint.as_ref().map(Policies::load).transpose()?;
    let db = load_db(&a.data)?;
    let budget = budget_for(&db, a.budget);
    let view = match method {
        Method::Rl4qdts => {
            let policies = policies.ok_or_else(|| Error::Config("rl4qdts needs --checkpoint".into()))?;
            let workload = generate(&db, &a.workload.spec(a.seed)?)?;
            rl4qdts_simplify(&db, budget, &workload, &policies, &a.driver.config(a.workload.queries)?, a.seed)?
        }
        Method::Random => random_insertion(&db, budget, a.seed)?,
        Method::Baseline(b) => b.run(&db, budget)?,
    };
    view.save_csv(&db, &a.output)?;
    println!("budget={} kept={} points={}", budget, view.len(), db.num_points());
    Ok(())
}

fn query_cmd(a: QueryArgs) -> Result<(), Error> {
    let task: Task = a.task.parse()?;
    let db = load_db(&a.data)?;
    let view = SimplifiedDatabase::read_csv(&db, open(&a.kept)?, None)?;
    let pick = || -> Result<usize, Error> {
        match &a.trajectory {
            Some(id) => db
                .position(id)
                .ok_or_else(|| Error::Config(format!("no trajectory with id {id:?}"))),
            None => Ok(0),
        }
    };
    match task {
        Task::Range => {
            let workload = generate(&db, &a.workload.spec(a.seed)?)?;
            let f = 1.0 - workload_diff(&db, &view, &workload)?;
            println!("task=range queries={} f1={f:.6}", workload.len());
        }
        Task::Knn => {
            let tq = db.get(pick()?);
            let window = (tq.start_time(), tq.start_time() + a.window);
            let params = KnnParams {
                k: a.knn_k,
                eps: a.edr_eps,
            };
            let orig = knn_query(View::Original(&db), tq, window, params)?;
            let simp = knn_query(View::Simplified(&db, &view), tq, window, params)?;
            let s = f1(&orig, &simp);
            assert!(
                s.precision == s.recall && s.recall == s.f1,
                "kNN precision, recall and F1 must agree"
            );
            println!(
                "task=knn query={} precision={:.6} recall={:.6} f1={:.6}",
                tq.id(),
                s.precision,
                s.recall,
                s.f1
            );
        }
        Task::Similarity => {
            let tq = db.get(pick()?);
            let window = (tq.start_time(), tq.start_time() + a.window);
            let orig = similarity_query(View::Original(&db), tq, window, a.delta_m);
            let simp = similarity_query(View::Simplified(&db, &view), tq, window, a.delta_m);
            let s = f1(&orig, &simp);
            println!(
                "task=similarity query={} precision={:.6} recall={:.6} f1={:.6}",
                tq.id(),
                s.precision,
                s.recall,
                s.f1
            );
        }
    }
    Ok(())
}

fn bench_cmd(a: BenchArgs) -> Result<(), Error> {
    let algorithms = a.algos.iter().map(|s| s.parse()).collect::<Result<Vec<Method>, _>>()?;
    let tasks = a.tasks.iter().map(|s| s.parse()).collect::<Result<Vec<Task>, _>>()?;
    let mut spec = ExperimentSpec::new(algorithms, a.budgets.clone(), tasks);
    spec.workload = a.workload.spec(a.seed)?;
    spec.repetitions = a.repetitions;
    spec.seed = a.seed;
    spec.driver = a.driver.config(a.workload.queries)?;
    spec.trajectory_queries = a.trajectory_queries;
    spec.validate()?;
    let policies = a.checkpoint.as_ref().map(Policies::load).transpose()?;
    let db = load_db(&a.data)?;
    let rows = run_experiment(&db, &spec, policies.as_ref())?;
    write_results(&rows, create(&a.output)?)?;
    for r in &rows {
        println!(
            "{}\t{}\t{}\t{}\t{}\t{:.4}±{:.4}\t{:.3}s",
            r.algorithm, r.measure, r.adaptation, r.budget_ratio, r.task, r.f1_mean, r.f1_std, r.wallclock_s
        );
    }
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<(), Error> {
    if let Some(path) = &a.report {
        let rows = read_sweep(open(path)?)?;
        print!("{}", format_report(&sweep_report(&rows)?));
        return Ok(());
    }
    let param: SweepParam = a
        .param
        .as_deref()
        .ok_or_else(|| Error::Config("sweep needs --param or --report".into()))?
        .parse()?;
    let eval_path = a.eval_data.as_ref().ok_or_else(|| Error::Config("sweep needs --eval-data".into()))?;
    let output = a.output.as_ref().ok_or_else(|| Error::Config("sweep needs --output".into()))?;
    if a.train_data.is_empty() {
        return Err(Error::Config("sweep needs --train-data".into()));
    }
    let training = a.train_data.iter().map(|p| load_db(p)).collect::<Result<Vec<_>, _>>()?;
    let eval = load_db(eval_path)?;
    let mut cfg = TrainConfig::new(a.seed);
    cfg.driver = a.driver.config(a.workload.queries)?;
    cfg.workload = a.workload.spec(a.seed)?;
    cfg.episodes_per_db = a.episodes;
    cfg.budget_ratio = a.budget;
    let spec = SweepSpec {
        param,
        values: a.values.clone(),
        train: cfg,
        budget_ratio: a.budget,
        repetitions: a.repetitions,
    };
    let rows = run_sweep(&training, &eval, &spec)?;
    write_sweep(&rows, create(output)?)?;
    print!("{}", format_report(&sweep_report(&rows)?));
    Ok(())
}

/// Turns `key=value` lines into `--key value` arguments.
fn config_args(path: &Path) -> Result<Vec<String>, Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected key=value", path.display(), n + 1)))?;
        out.push(format!("--{}", k.trim().replace('_', "-")));
        out.push(v.trim().to_string());
    }
    Ok(out)
}

/// Splices config-file flags right after the subcommand so command-line
/// flags override them.
fn expand_args(args: Vec<String>) -> Result<Vec<String>, Error> {
    let mut config = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = it.next();
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(config) = config else { return Ok(rest) };
    let extra = config_args(Path::new(&config))?;
    let sub = rest.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 2);
    match sub {
        Some(at) => {
            rest.splice(at..at, extra);
            Ok(rest)
        }
        None => Err(Error::Config("--config needs a subcommand".into())),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train_cmd(a),
        Command::Simplify(a) => simplify_cmd(a),
        Command::Query(a) => query_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
    }
}

fn main() -> ExitCode {
    let args = match expand_args(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
