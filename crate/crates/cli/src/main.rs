use std::fmt::Display;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use dpsim::classify::{fit_classifier, ClassifierConfig};
use dpsim::highdim::{build_l1, build_l2};
use dpsim::kde::{build_kde, KdeConfig};
use dpsim::l2sq::build_l2sq;
use dpsim::oracle::{error_report, exact_distance_sum, exact_kde, DistanceFn};
use dpsim::smooth::{build_smooth_kde, SmoothConfig};
use dpsim::{Dataset, DomainPromise, FunctionId, Noise, PrivacyBudget, ProjectionKind, RngStream, Sketch};

/// Differentially private distance and similarity sketches.
#[derive(Parser)]
#[command(name = "dpsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a sketch from a CSV dataset and write it to a file.
    Build(BuildArgs),
    /// Answer a batch of queries from a sketch file.
    Query(QueryArgs),
    /// Compare private answers to exact ones over an epsilon sweep.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Project {
    None,
    Dense,
    Fast,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args, Clone)]
struct SketchParams {
    /// Function to sketch: l1, l2, l2sq, lpp, gauss-kde, exp-kde,
    /// laplace-kde, inv1p-l2, inv1p-l2sq, inv1p-l1 or classifier.
    #[arg(long = "fn", value_name = "FN")]
    function: String,
    /// Dataset CSV, one point per row (classifier: last column is the label).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Exponent for lpp (defaults to 2).
    #[arg(long)]
    p: Option<f64>,
    /// Domain size: box side for l1/lpp/l2sq, ball diameter for l2,
    /// default clip for the classifier.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Dimensionality reduction before sketching (KDE functions and l2).
    #[arg(long, value_enum)]
    project: Option<Project>,
    /// Overrides the projection or embedding dimension.
    #[arg(long)]
    projection_dim: Option<usize>,
    /// Overrides the random feature count of KDE sketches.
    #[arg(long)]
    features: Option<usize>,
    /// Classifier clip threshold (defaults to the radius).
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Build without privacy noise. The result is NOT private.
    #[arg(long)]
    no_noise: bool,
    /// Input CSV files start with a header row.
    #[arg(long)]
    header: bool,
}

#[derive(clap::Args)]
struct BuildArgs {
    #[command(flatten)]
    params: SketchParams,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct QueryArgs {
    #[arg(long)]
    sketch: PathBuf,
    /// Query CSV, one point per row.
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    header: bool,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[command(flatten)]
    params: SketchParams,
    /// Query CSV (classifier: labelled like the input).
    #[arg(long)]
    queries: PathBuf,
    /// Comma-separated privacy budgets.
    #[arg(long, value_delimiter = ',', required = true)]
    epsilons: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Minimum number of timed repetitions per epsilon.
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

/// A failure with its exit code: 1 for I/O, 2 for bad parameters or input.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(message: impl Display) -> Self {
        Self { code: 1, message: message.to_string() }
    }

    fn param(message: impl Display) -> Self {
        Self { code: 2, message: message.to_string() }
    }
}

impl From<dpsim::Error> for Failure {
    fn from(e: dpsim::Error) -> Self {
        match e {
            dpsim::Error::Io(_) | dpsim::Error::Format(_) => Failure::io(e),
            _ => Failure::param(e),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::io(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("DPSIM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    let result = match cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Query(args) => cmd_query(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("dpsim: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Reads a headerless (or `header`) CSV of reals.
fn read_rows(path: &Path, header: bool) -> CliResult<Vec<Vec<f64>>> {
    let file = File::open(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(header).trim(csv::Trim::All).from_reader(file);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Failure::io(format!("{}: {e}", path.display())),
            _ => Failure::param(format!("{}: {e}", path.display())),
        })?;
        let row = record
            .iter()
            .map(|field| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Failure::param(format!("{}: row {}: `{field}` is not a finite number", path.display(), i + 1))),
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn to_dataset(rows: &[Vec<f64>]) -> CliResult<Dataset<f64>> {
    if rows.is_empty() {
        return Err(Failure::param("the dataset is empty"));
    }
    Ok(Dataset::from_rows(rows)?)
}

/// Splits off the last column as integer labels.
fn split_labels(rows: &[Vec<f64>]) -> CliResult<(Vec<Vec<f64>>, Vec<i64>)> {
    let mut points = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for row in rows {
        let (last, rest) = row.split_last().ok_or_else(|| Failure::param("empty row"))?;
        if rest.is_empty() {
            return Err(Failure::param("labelled rows need at least one feature before the label"));
        }
        if last.fract() != 0.0 {
            return Err(Failure::param(format!("label {last} is not an integer")));
        }
        points.push(rest.to_vec());
        labels.push(*last as i64);
    }
    Ok((points, labels))
}

fn projection_kind(p: Project) -> Option<ProjectionKind> {
    match p {
        Project::None => None,
        Project::Dense => Some(ProjectionKind::GaussianJl),
        Project::Fast => Some(ProjectionKind::FastJl),
    }
}

/// Training data for one function: plain points, or points plus labels.
struct Training {
    data: Dataset<f64>,
    labels: Vec<i64>,
}

fn load_training(params: &SketchParams, function: FunctionId) -> CliResult<Training> {
    let rows = read_rows(&params.input, params.header)?;
    if function == FunctionId::Classifier {
        let (points, labels) = split_labels(&rows)?;
        Ok(Training { data: to_dataset(&points)?, labels })
    } else {
        Ok(Training { data: to_dataset(&rows)?, labels: Vec::new() })
    }
}

fn build_sketch(
    function: FunctionId,
    params: &SketchParams,
    training: &Training,
    epsilon: f64,
    stream: RngStream,
) -> CliResult<Sketch<f64>> {
    let ds = &training.data;
    let d = ds.dim();
    let noise = if params.no_noise { Noise::Off } else { Noise::On };
    let budget = PrivacyBudget::new(epsilon, params.delta)?;
    let alpha = params.alpha;
    let pure_only = |name: &str| -> CliResult<()> {
        if params.delta > 0.0 {
            Err(Failure::param(format!("{name} sketches are pure DP; --delta must be 0")))
        } else {
            Ok(())
        }
    };
    Ok(match function {
        FunctionId::L1 | FunctionId::Lpp => {
            let p = match function {
                FunctionId::L1 => 1.0,
                _ => params.p.unwrap_or(2.0),
            };
            if function == FunctionId::Lpp && p == 1.0 {
                return Err(Failure::param("lpp with p = 1 is the l1 function; use --fn l1"));
            }
            let promise = DomainPromise::boxed(params.radius, d)?;
            Sketch::Distance(build_l1(ds, budget, alpha, &promise, p, stream, noise)?)
        }
        FunctionId::L2 => {
            let promise = DomainPromise::l2_ball(params.radius, d)?;
            Sketch::L2(build_l2(ds, budget, alpha, &promise, stream, noise, params.projection_dim)?)
        }
        FunctionId::L2Sq => {
            let promise = DomainPromise::boxed(params.radius, d)?;
            Sketch::L2Sq(build_l2sq(ds, budget, &promise, stream, noise)?)
        }
        FunctionId::Classifier => {
            let mut cfg = ClassifierConfig::new(params.clip.unwrap_or(params.radius)).with_noise(noise);
            cfg.projection_dim = params.projection_dim;
            Sketch::Classifier(fit_classifier(ds, &training.labels, budget, &cfg, stream)?)
        }
        f => {
            let kernel = f.kernel().expect("remaining functions are kernels");
            pure_only(f.name())?;
            if kernel.is_smooth() {
                let mut cfg = SmoothConfig::new(alpha).with_noise(noise);
                if let Some(p) = params.project {
                    cfg = cfg.with_projection(projection_kind(p));
                }
                cfg.projection_dim = params.projection_dim;
                cfg.features = params.features;
                Sketch::Smooth(build_smooth_kde(ds, kernel, epsilon, &cfg, stream)?)
            } else {
                let mut cfg = KdeConfig::new(alpha).with_noise(noise);
                cfg.projection = params.project.and_then(projection_kind);
                cfg.projection_dim = params.projection_dim;
                cfg.features = params.features;
                Sketch::Kde(build_kde(ds, kernel, epsilon, &cfg, stream)?)
            }
        }
    })
}

/// Clip counts and internal dimensions for the build report.
fn describe(sketch: &Sketch<f64>) -> Value {
    match sketch {
        Sketch::Distance(s) => json!({
            "trees": s.dim(),
            "per_tree_epsilon": s.per_tree_epsilon(),
            "p": s.p(),
            "clipped_coordinates": s.header().clipped,
        }),
        Sketch::L2(s) => json!({
            "embedding_dim": s.header().spec.out_dim,
            "per_tree_epsilon": s.inner().per_tree_epsilon(),
            "clip": s.header().clip,
            "clipped_points": s.header().clipped_points,
            "clipped_coordinates": s.header().clipped_coords,
        }),
        Sketch::L2Sq(m) => json!({
            "payload_floats": m.dim() + 1,
            "mean_mechanism": m.header().mechanism,
            "clipped_coordinates": m.header().clipped,
        }),
        Sketch::Kde(k) => json!({
            "features": k.header().feature_map.features,
            "internal_dim": k.internal_dim(),
            "projection": k.header().projection,
        }),
        Sketch::Smooth(s) => json!({
            "terms": s.approx().len(),
            "features": s.sub_sketches().first().map(|k| k.header().feature_map.features),
            "internal_dim": s.sub_sketches().first().map(|k| k.internal_dim()),
            "projection": s.header().projection,
        }),
        Sketch::Classifier(c) => json!({
            "classes": c.labels().len(),
            "internal_dim": c.classes().first().map(|m| m.dim()),
            "clip": c.header().clip,
            "clipped_coordinates": c.classes().iter().map(|m| m.header().clipped).sum::<usize>(),
        }),
    }
}

fn warn_if_noiseless(no_noise: bool) {
    if no_noise {
        eprintln!("WARNING: --no-noise produces a NON-PRIVATE sketch; never release it.");
    }
}

fn cmd_build(args: BuildArgs) -> CliResult<()> {
    let params = &args.params;
    let function = FunctionId::from_name(&params.function)?;
    warn_if_noiseless(params.no_noise);
    let training = load_training(params, function)?;
    let start = Instant::now();
    let sketch = build_sketch(function, params, &training, args.epsilon, RngStream::new(params.seed, 0))?;
    let build_seconds = start.elapsed().as_secs_f64();
    let bytes = sketch.to_bytes()?;
    std::fs::write(&args.out, &bytes).map_err(|e| Failure::io(format!("{}: {e}", args.out.display())))?;
    let report = json!({
        "function": function.name(),
        "n": training.data.len(),
        "dim": training.data.dim(),
        "epsilon": args.epsilon,
        "delta": params.delta,
        "noise_off": params.no_noise,
        "build_seconds": build_seconds,
        "bytes": bytes.len(),
        "details": describe(&sketch),
    });
    println!("{report}");
    Ok(())
}

fn cmd_query(args: QueryArgs) -> CliResult<()> {
    let bytes = std::fs::read(&args.sketch).map_err(|e| Failure::io(format!("{}: {e}", args.sketch.display())))?;
    let sketch = Sketch::<f64>::from_bytes(&bytes)?;
    if sketch.is_noise_off() {
        eprintln!("WARNING: this sketch was built with --no-noise and is NOT private.");
    }
    let rows = read_rows(&args.queries, args.header)?;
    let dim = sketch.input_dim();
    let answers = rows
        .iter()
        .enumerate()
        .map(|(i, q)| {
            if q.len() != dim {
                return Err(Failure::param(format!("query row {} has {} values, the sketch expects {dim}", i + 1, q.len())));
            }
            Ok(sketch.evaluate(q)?)
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let mut out = BufWriter::new(io::stdout().lock());
    match args.format {
        Format::Csv => {
            for a in &answers {
                writeln!(out, "{a}")?;
            }
        }
        Format::Json => writeln!(out, "{}", json!(answers))?,
    }
    out.flush()?;
    Ok(())
}

/// Exact answers (or, for the classifier, the true labels).
fn exact_answers(function: FunctionId, params: &SketchParams, data: &Dataset<f64>, queries: &[Vec<f64>]) -> CliResult<Vec<f64>> {
    let distance = match function {
        FunctionId::L1 => Some(DistanceFn::L1),
        FunctionId::L2 => Some(DistanceFn::L2),
        FunctionId::L2Sq => Some(DistanceFn::L2Sq),
        FunctionId::Lpp => Some(DistanceFn::Lpp(params.p.unwrap_or(2.0))),
        _ => None,
    };
    queries
        .par_iter()
        .map(|q| {
            Ok(match (distance, function.kernel()) {
                (Some(f), _) => exact_distance_sum(data, q, f)?,
                (None, Some(k)) => exact_kde(data, q, k)?,
                _ => unreachable!("classifier answers come from labels"),
            })
        })
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

struct Trial {
    estimates: Vec<f64>,
    build_seconds: f64,
    query_seconds: f64,
}

fn run_trial(
    function: FunctionId,
    params: &SketchParams,
    training: &Training,
    queries: &[Vec<f64>],
    epsilon: f64,
    stream: RngStream,
) -> CliResult<Trial> {
    let t0 = Instant::now();
    let sketch = build_sketch(function, params, training, epsilon, stream)?;
    let build_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let estimates = queries.iter().map(|q| sketch.evaluate(q)).collect::<Result<Vec<_>, _>>()?;
    Ok(Trial { estimates, build_seconds, query_seconds: t1.elapsed().as_secs_f64() })
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let params = &args.params;
    let function = FunctionId::from_name(&params.function)?;
    warn_if_noiseless(params.no_noise);
    if args.trials == 0 {
        return Err(Failure::param("--trials must be at least 1"));
    }
    let training = load_training(params, function)?;
    let rows = read_rows(&args.queries, params.header)?;
    let (queries, truths) = if function == FunctionId::Classifier {
        let (q, labels) = split_labels(&rows)?;
        (q, labels.into_iter().map(|l| l as f64).collect())
    } else {
        let truths = exact_answers(function, params, &training.data, &rows)?;
        (rows, truths)
    };
    if queries.is_empty() {
        return Err(Failure::param("the query file is empty"));
    }
    if let Some(q) = queries.iter().find(|q| q.len() != training.data.dim()) {
        return Err(Failure::param(format!("queries have {} values, the dataset has {}", q.len(), training.data.dim())));
    }

    let mut table = Vec::new();
    for (ei, &epsilon) in args.epsilons.iter().enumerate() {
        let runs = args.trials.max(args.reps);
        let trials = (0..runs)
            .into_par_iter()
            .map(|t| run_trial(function, params, &training, &queries, epsilon, RngStream::new(params.seed, (ei * runs + t) as u64)))
            .collect::<CliResult<Vec<Trial>>>()?;
        let mut rel = 0.0;
        let mut abs = 0.0;
        let mut mult = 0.0;
        let mut add = 0.0;
        for trial in &trials[..args.trials] {
            if function == FunctionId::Classifier {
                let wrong = trial.estimates.iter().zip(&truths).filter(|(a, b)| a != b).count() as f64 / truths.len() as f64;
                rel += wrong;
                abs += wrong;
                add += wrong;
                mult += 1.0;
            } else {
                let report = error_report(&trial.estimates, &truths)?;
                rel += report.relative_error;
                abs += report.mean_abs_error;
                mult += report.multiplicative;
                add += report.additive;
            }
        }
        let k = args.trials as f64;
        let mut builds: Vec<f64> = trials.iter().map(|t| t.build_seconds).collect();
        let mut query_times: Vec<f64> = trials.iter().map(|t| t.query_seconds).collect();
        table.push(Row {
            function: function.name().to_string(),
            epsilon: Some(epsilon),
            trials: args.trials,
            relative_error: rel / k,
            mean_abs_error: abs / k,
            fitted_m: mult / k,
            fitted_a: add / k,
            build_ms: Some(median(&mut builds) * 1e3),
            query_ms: Some(median(&mut query_times) * 1e3),
        });
    }
    if matches!(function, FunctionId::L1 | FunctionId::L2 | FunctionId::L2Sq | FunctionId::Lpp) {
        // An estimator that always answers 0 has relative error exactly 1.
        let zeros = vec![0.0; truths.len()];
        let report = error_report(&zeros, &truths)?;
        table.push(Row {
            function: "zero-baseline".into(),
            epsilon: None,
            trials: 1,
            relative_error: report.relative_error,
            mean_abs_error: report.mean_abs_error,
            fitted_m: report.multiplicative,
            fitted_a: report.additive,
            build_ms: None,
            query_ms: None,
        });
    }
    print_table(&table, args.format)
}

struct Row {
    function: String,
    epsilon: Option<f64>,
    trials: usize,
    relative_error: f64,
    mean_abs_error: f64,
    fitted_m: f64,
    fitted_a: f64,
    build_ms: Option<f64>,
    query_ms: Option<f64>,
}

fn print_table(rows: &[Row], format: Format) -> CliResult<()> {
    let mut out = BufWriter::new(io::stdout().lock());
    match format {
        Format::Json => {
            let v: Vec<Value> = rows
                .iter()
                .map(|r| {
                    json!({
                        "fn": r.function,
                        "epsilon": r.epsilon,
                        "trials": r.trials,
                        "relative_error": r.relative_error,
                        "mean_abs_error": r.mean_abs_error,
                        "fitted_m": r.fitted_m,
                        "fitted_a": r.fitted_a,
                        "build_ms_median": r.build_ms,
                        "query_ms_median": r.query_ms,
                    })
                })
                .collect();
            writeln!(out, "{}", Value::Array(v))?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                "fn",
                "epsilon",
                "trials",
                "relative_error",
                "mean_abs_error",
                "fitted_m",
                "fitted_a",
                "build_ms_median",
                "query_ms_median",
            ])
            .map_err(Failure::io)?;
            for r in rows {
                w.write_record([
                    r.function.clone(),
                    opt(r.epsilon),
                    r.trials.to_string(),
                    r.relative_error.to_string(),
                    r.mean_abs_error.to_string(),
                    r.fitted_m.to_string(),
                    r.fitted_a.to_string(),
                    opt(r.build_ms),
                    opt(r.query_ms),
                ])
                .map_err(Failure::io)?;
            }
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(())
}
