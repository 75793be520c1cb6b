use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ran_core::baselines::{
    euclidean_rank, manifold_rank, median_pairwise_distance, KernelGraphConfig,
};
use ran_core::dataset::{self, DataMatrix, LabeledDataset, NormalizeMode};
use ran_core::eval::{
    evaluate_method, sweep_k, write_sweep_csv, EuclideanMethod, EvalReport, ExternalScores,
    ManifoldRankingMethod, RanMethod, RankingMethod,
};
use ran_core::ranking::{ran_solve, QueryVector, RankConfig};

#[derive(Debug, Parser)]
#[command(name = "ran", version, about = "Ranking with adaptive neighbors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset as CSV (label in the last column).
    Synth(SynthArgs),
    /// Score every point against a set of query points.
    Rank(RankArgs),
    /// Leave-one-out precision/recall@k, each point used once as the query.
    Eval(EvalArgs),
    /// Leave-one-out evaluation of adaptive-neighbor ranking over several k.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum SynthKind {
    TwoMoons,
    ThreeRings,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(value_enum)]
    kind: SynthKind,
    /// Points per moon or ring.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Standard deviation of the Gaussian noise on each coordinate.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ring radii, inner to outer (three_rings only).
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [1.0, 2.0, 3.0])]
    radii: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

/// Where class labels live in the input CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
enum LabelColumn {
    Last,
    None,
    Index(usize),
}

impl FromStr for LabelColumn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "last" => Ok(Self::Last),
            "none" => Ok(Self::None),
            _ => s
                .parse()
                .map(Self::Index)
                .map_err(|_| format!("expected `last`, `none` or a column index, got `{s}`")),
        }
    }
}

impl Serialize for LabelColumn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Last => s.serialize_str("last"),
            Self::None => s.serialize_str("none"),
            Self::Index(i) => s.serialize_u64(*i as u64),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum Normalize {
    None,
    ZscorePerPoint,
    ZscorePerFeature,
}

#[derive(Debug, Args, Serialize)]
struct DataArgs {
    /// Headerless numeric CSV, one point per row.
    #[arg(long)]
    data: PathBuf,
    /// `last`, `none`, or a 0-based column index holding integer labels.
    #[arg(long, default_value = "last")]
    label_column: LabelColumn,
    #[arg(long, value_enum, default_value_t = Normalize::None)]
    normalize: Normalize,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Method {
    Ran,
    Euclidean,
    Mr,
    /// Precomputed scores read from `--scores-dir` (eval only).
    External,
}

#[derive(Debug, Args, Serialize)]
struct SolverArgs {
    /// Stop once the relative change in scores drops below this.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    /// Fidelity weight on query points.
    #[arg(long, default_value_t = 1e8)]
    query_weight: f64,
    /// Freeze every gamma_i to this value instead of choosing it per point.
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct KernelArgs {
    /// Gaussian bandwidth for `mr`; defaults to the median pairwise distance.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0.99)]
    alpha: f64,
    /// Keep each point's k strongest kernel edges (`mr`).
    #[arg(long)]
    k_sparsify: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct MethodArgs {
    #[arg(long, value_enum, default_value_t = Method::Ran)]
    method: Method,
    /// Neighbors per point.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    kernel: KernelArgs,
}

#[derive(Debug, Args, Serialize)]
struct RankArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated 0-based query indices.
    #[arg(long, value_delimiter = ',', required = true)]
    query: Vec<usize>,
    #[command(flatten)]
    method: MethodArgs,
    /// JSON output; a sibling `.csv` gets `index,x...,score` rows. Prints the
    /// JSON to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    method: MethodArgs,
    /// Directory of `<query>.csv` files with `index,score` rows.
    #[arg(long)]
    scores_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    at_k: usize,
    /// Report JSON; a sibling `.summary.csv` gets the one-line summary.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated neighbor counts, evaluated in order.
    #[arg(long = "k", value_delimiter = ',', required = true)]
    k_values: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 50)]
    at_k: usize,
    /// `k,precision,recall` CSV; a sibling `.json` gets the full reports.
    #[arg(long)]
    out: PathBuf,
}

/// Everything a run resolved, written next to its outputs.
#[derive(Serialize)]
struct RunConfig<'a, A: Serialize> {
    command: &'static str,
    version: &'static str,
    args: &'a A,
    #[serde(skip_serializing_if = "Option::is_none")]
    rank: Option<RankConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel_graph: Option<KernelGraphConfig>,
}

#[derive(Serialize)]
struct RankOutput {
    method: Method,
    queries: Vec<usize>,
    scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective_trace: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_mean: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("ran: {e:#}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ran: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for bad input, 1 for everything that went wrong while computing.
fn exit_code(e: &anyhow::Error) -> u8 {
    let validation = e.chain().any(|cause| {
        if let Some(err) = cause.downcast_ref::<ran_core::Error>() {
            err.is_validation()
        } else if let Some(err) = cause.downcast_ref::<std::io::Error>() {
            err.kind() == std::io::ErrorKind::NotFound
        } else {
            cause.downcast_ref::<UsageError>().is_some()
        }
    });
    if validation {
        2
    } else {
        1
    }
}

/// A flag combination that clap cannot rule out on its own.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Applies `RAN_THREADS` to the global pool; 0 or unset keeps the default.
fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("RAN_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("RAN_THREADS must be a nonnegative integer, got `{raw}`"))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    let ds = match a.kind {
        SynthKind::TwoMoons => dataset::gen_two_moons(a.n, a.noise, a.seed)?,
        SynthKind::ThreeRings => {
            let radii: [f64; 3] = a
                .radii
                .as_slice()
                .try_into()
                .map_err(|_| usage("--radii takes exactly 3 values"))?;
            dataset::gen_three_rings(a.n, radii, a.noise, a.seed)?
        }
    };
    write_with(&a.out, |w| Ok(dataset::write_csv(&ds, w)?))?;
    write_config(
        &a.out,
        &RunConfig {
            command: "synth",
            version: env!("CARGO_PKG_VERSION"),
            args: a,
            rank: None,
            kernel_graph: None,
        },
    )
}

fn load(a: &DataArgs) -> anyhow::Result<LabeledDataset> {
    let ds = match a.label_column {
        LabelColumn::None => dataset::load_csv(&a.data, None),
        LabelColumn::Index(i) => dataset::load_csv(&a.data, Some(i)),
        LabelColumn::Last => {
            let width = first_row_width(&a.data)?;
            if width < 2 {
                return Err(usage(format!(
                    "{}: need at least one feature column besides the label",
                    a.data.display()
                )));
            }
            dataset::load_csv(&a.data, Some(width - 1))
        }
    }
    .with_context(|| format!("loading {}", a.data.display()))?;

    let mode = match a.normalize {
        Normalize::None => return Ok(ds),
        Normalize::ZscorePerPoint => NormalizeMode::ZscorePerPoint,
        Normalize::ZscorePerFeature => NormalizeMode::ZscorePerFeature,
    };
    let normalized = dataset::normalize(&ds.data, mode);
    if normalized.has_warning() {
        eprintln!(
            "ran: warning: {} zero-variance {} were centered but not scaled",
            normalized.zero_variance.len(),
            if mode == NormalizeMode::ZscorePerPoint {
                "rows"
            } else {
                "columns"
            }
        );
    }
    Ok(LabeledDataset::new(normalized.data, ds.labels)?)
}

/// Number of fields on the first non-empty line.
fn first_row_width(path: &Path) -> anyhow::Result<usize> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .find(|l| !l.trim().is_empty())
        .map_or(0, |l| l.split(',').count()))
}

fn rank_config(m: &MethodArgs) -> RankConfig {
    RankConfig {
        k: m.k,
        lambda: m.lambda,
        query_weight: m.solver.query_weight,
        max_iters: m.solver.max_iters,
        tol: m.solver.tol,
        gamma_override: m.solver.gamma,
    }
}

/// Kernel settings with the bandwidth filled in, so the saved config is
/// enough to reproduce the graph.
fn kernel_config(m: &MethodArgs, data: &DataMatrix) -> KernelGraphConfig {
    let sigma = m.kernel.sigma.unwrap_or_else(|| {
        let s = median_pairwise_distance(data);
        if s > 0.0 {
            s
        } else {
            1.0
        }
    });
    KernelGraphConfig {
        sigma: Some(sigma),
        k_sparsify: m.kernel.k_sparsify,
        alpha: m.kernel.alpha,
    }
}

fn cmd_rank(a: &RankArgs) -> anyhow::Result<()> {
    let ds = load(&a.data)?;
    let y = QueryVector::from_indices(ds.len(), &a.query)?;
    let m = &a.method;
    let (out, rank, kernel_graph) = match m.method {
        Method::Ran => {
            let cfg = rank_config(m);
            let r = ran_solve(&ds.data, &y, &cfg)?;
            let s = r.summary();
            let out = RankOutput {
                method: m.method,
                queries: y.queries().to_vec(),
                scores: s.scores,
                iterations: Some(s.iterations),
                converged: Some(s.converged),
                objective_trace: Some(s.objective_trace),
                gamma_mean: Some(s.gamma_mean),
            };
            (out, Some(cfg), None)
        }
        Method::Euclidean => (
            plain_output(m.method, &y, euclidean_rank(&ds.data, &y)?),
            None,
            None,
        ),
        Method::Mr => {
            let cfg = kernel_config(m, &ds.data);
            (
                plain_output(m.method, &y, manifold_rank(&ds.data, &y, &cfg)?),
                None,
                Some(cfg),
            )
        }
        Method::External => return Err(usage("--method external is only available for eval")),
    };
    let json = serde_json::to_string_pretty(&out)?;

    let Some(path) = &a.out else {
        println!("{json}");
        return Ok(());
    };
    let csv_path = path.with_extension("csv");
    if &csv_path == path {
        return Err(usage(
            "--out must not end in .csv; the score table is written next to it",
        ));
    }
    write_with(path, |w| Ok(writeln!(w, "{json}")?))?;
    write_with(&csv_path, |w| write_score_table(w, &ds.data, &out.scores))?;
    write_config(
        path,
        &RunConfig {
            command: "rank",
            version: env!("CARGO_PKG_VERSION"),
            args: a,
            rank,
            kernel_graph,
        },
    )
}

fn plain_output(method: Method, y: &QueryVector, scores: Vec<f64>) -> RankOutput {
    RankOutput {
        method,
        queries: y.queries().to_vec(),
        scores,
        iterations: None,
        converged: None,
        objective_trace: None,
        gamma_mean: None,
    }
}

fn write_score_table(w: &mut dyn Write, data: &DataMatrix, scores: &[f64]) -> anyhow::Result<()> {
    let coords: Vec<String> = (0..data.d()).map(|j| format!("x{j}")).collect();
    writeln!(w, "index,{},score", coords.join(","))?;
    for (i, (row, s)) in data.rows().zip(scores).enumerate() {
        let row: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(w, "{i},{},{s}", row.join(","))?;
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> anyhow::Result<()> {
    let ds = load(&a.data)?;
    let m = &a.method;
    if a.scores_dir.is_some() != (m.method == Method::External) {
        return Err(usage(
            "--scores-dir is required with, and only valid for, --method external",
        ));
    }
    let mut rank = None;
    let mut kernel_graph = None;
    let method: Box<dyn RankingMethod + '_> = match m.method {
        Method::Ran => {
            let cfg = rank_config(m);
            rank = Some(cfg.clone());
            Box::new(RanMethod::new(&ds.data, cfg)?)
        }
        Method::Euclidean => Box::new(EuclideanMethod { data: &ds.data }),
        Method::Mr => {
            let cfg = kernel_config(m, &ds.data);
            cfg.validate(ds.len())?;
            kernel_graph = Some(cfg.clone());
            Box::new(ManifoldRankingMethod {
                data: &ds.data,
                cfg,
            })
        }
        Method::External => {
            let dir = a.scores_dir.as_ref().expect("checked above");
            Box::new(
                ExternalScores::load_dir("external", dir, ds.len())
                    .with_context(|| format!("reading scores from {}", dir.display()))?,
            )
        }
    };
    let report = evaluate_method(&ds, method.as_ref(), a.at_k)?;

    write_with(&a.out, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        Ok(writeln!(w)?)
    })?;
    write_with(&sibling(&a.out, "summary.csv"), |w| {
        Ok(report.write_summary_csv(w)?)
    })?;
    eprintln!("{}\n{}", EvalReport::CSV_HEADER, report.csv_row());
    write_config(
        &a.out,
        &RunConfig {
            command: "eval",
            version: env!("CARGO_PKG_VERSION"),
            args: a,
            rank,
            kernel_graph,
        },
    )
}

fn cmd_sweep(a: &SweepArgs) -> anyhow::Result<()> {
    if a.k_values.is_empty() {
        return Err(usage("--k needs at least one value"));
    }
    let ds = load(&a.data)?;
    let template = RankConfig {
        k: a.k_values[0],
        lambda: a.lambda,
        query_weight: a.solver.query_weight,
        max_iters: a.solver.max_iters,
        tol: a.solver.tol,
        gamma_override: a.solver.gamma,
    };
    let points = sweep_k(&ds, &a.k_values, &template, a.at_k)?;

    write_with(&a.out, |w| Ok(write_sweep_csv(&points, w)?))?;
    let json_path = a.out.with_extension("json");
    if json_path == a.out {
        return Err(usage(
            "--out must not end in .json; the full reports are written next to it",
        ));
    }
    write_with(&json_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &points)?;
        Ok(writeln!(w)?)
    })?;
    write_config(
        &a.out,
        &RunConfig {
            command: "sweep",
            version: env!("CARGO_PKG_VERSION"),
            args: a,
            rank: Some(template),
            kernel_graph: None,
        },
    )
}

/// `dir/stem.<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn write_config<A: Serialize>(out: &Path, cfg: &RunConfig<'_, A>) -> anyhow::Result<()> {
    write_with(&sibling(out, "config.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, cfg)?;
        Ok(writeln!(w)?)
    })
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
