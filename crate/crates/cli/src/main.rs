//! `rid`: command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 resource limit
//! (Rashomon set larger than `--max-models`).

mod config;
mod output;

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rid_core::dataset::{binarize, load_csv, Dataset, FeatureKind};
use rid_core::dgp::{generate, DgpId, DgpSpec};
use rid_core::linear::{ols_fit, CdfMethod};
use rid_core::rashomon::enumerate_rset;
use rid_core::rid::{estimate_rid, required_bootstraps, RidReport, RunConfig};
use rid_core::stability::{coverage_of, dgp_test_reliances, stability_experiment};
use rid_core::tree::Tree;
use rid_core::{split_rng, RidError, Seed};
use serde::Serialize;

use config::ConfigArgs;
use output::{cdf_svg, emit_json, plot_name, summary_csv, write_atomic};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Resource(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Resource(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Resource(m) => f.write_str(m),
        }
    }
}

impl From<RidError> for CliError {
    fn from(e: RidError) -> Self {
        if e.is_resource() {
            CliError::Resource(e.to_string())
        } else if matches!(e, RidError::InvalidArgument(_)) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "rid", version, about = "Rashomon importance distributions for sparse decision trees")]
struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset from a synthetic process.
    Gen(GenArgs),
    /// Estimate importance distributions over bootstrap Rashomon sets.
    Rid(RidArgs),
    /// Enumerate the Rashomon set of one dataset.
    Rset(RsetArgs),
    /// Summary statistics of one variable from a `rid` result.
    Stats(StatsArgs),
    /// Bootstrap count for a CDF within `t` of its limit with probability `1 - delta`.
    Bootstraps(BootstrapsArgs),
    /// Rashomon set of least-squares linear models.
    Linear(LinearArgs),
    /// Interval stability of RID, MCR and VIC across independent datasets.
    Stability(StabilityArgs),
    /// Fraction of test-set process reliances inside the RID box-and-whisker ranges.
    Coverage(CoverageArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    dgp: DgpId,
    /// Rows (defaults to the process's standard size).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Label flip probability (defaults to the process's standard noise).
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Label column (defaults to the last column).
    #[arg(long)]
    label: Option<String>,
    /// Columns to treat as categorical.
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    /// Columns to treat as numeric.
    #[arg(long, value_delimiter = ',')]
    numeric: Vec<String>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset, CliError> {
        let d = load_csv(&self.data, self.label.as_deref())?;
        if self.categorical.is_empty() && self.numeric.is_empty() {
            return Ok(d);
        }
        let mut kinds = d.feature_kinds().to_vec();
        for (names, kind) in [(&self.categorical, FeatureKind::Categorical), (&self.numeric, FeatureKind::Numeric)] {
            for name in names {
                let j = d
                    .feature_index(name)
                    .ok_or_else(|| CliError::Usage(format!("no feature column {name:?}")))?;
                kinds[j] = kind;
            }
        }
        Ok(d.with_kinds(kinds)?)
    }
}

#[derive(Args)]
struct RidArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Result JSON (standard output without it).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-variable summary CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Directory for per-variable CDF plots.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct RsetArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Result JSON written by `rid`.
    #[arg(long)]
    rid: PathBuf,
    /// Variable name (all variables without it).
    #[arg(long)]
    var: Option<String>,
    /// Also report the CDF at this value.
    #[arg(long, allow_hyphen_values = true)]
    k: Option<f64>,
}

#[derive(Args)]
struct BootstrapsArgs {
    #[arg(long)]
    t: f64,
    #[arg(long)]
    delta: f64,
}

#[derive(Args)]
struct LinearArgs {
    /// Design matrix CSV with a header row.
    #[arg(long)]
    design: PathBuf,
    /// Response CSV: header row and one column.
    #[arg(long)]
    y: PathBuf,
    /// Allowed excess sum of squared errors.
    #[arg(long)]
    epsilon: f64,
    /// Coefficient (column name or 0-based index) for the CDF; all without it.
    #[arg(long, requires = "k")]
    var: Option<String>,
    /// Evaluate the coefficient CDF at this value.
    #[arg(long, allow_hyphen_values = true)]
    k: Option<f64>,
    /// Also estimate the CDF from this many uniform samples.
    #[arg(long, requires = "k")]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StabilityArgs {
    #[arg(long)]
    dgp: DgpId,
    #[arg(long, default_value_t = 10)]
    datasets: usize,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CoverageArgs {
    #[arg(long)]
    dgp: DgpId,
    #[arg(long, default_value_t = 100)]
    n_test: usize,
    /// Training CSV; without it one is sampled from the process.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Label column of `--data`.
    #[arg(long, requires = "data")]
    label: Option<String>,
    /// Rows of the sampled training set.
    #[arg(long, conflicts_with = "data")]
    n: Option<usize>,
    /// Report a single variable (name or 0-based index).
    #[arg(long)]
    var: Option<String>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Stream for sampling the coverage training set, apart from the bootstrap
/// and test-set streams of the same seed.
const TRAIN_STREAM: u64 = 1 << 42;

fn main() {
    std::process::exit(run(std::env::args_os()));
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Rid(a) => rid(a),
        Command::Rset(a) => rset(a),
        Command::Stats(a) => stats(a),
        Command::Bootstraps(a) => {
            println!("{}", required_bootstraps(a.t, a.delta)?);
            Ok(())
        }
        Command::Linear(a) => linear(a),
        Command::Stability(a) => stability(a),
        Command::Coverage(a) => coverage(a),
    }
}

fn gen(a: GenArgs) -> Result<(), CliError> {
    let mut spec = DgpSpec::standard(a.dgp, Seed(a.seed));
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(noise) = a.noise {
        spec.noise = noise;
    }
    let d = generate(&spec)?;
    let mut bytes = Vec::new();
    d.write_csv(&mut bytes, "y")?;
    write_atomic(&a.out, &bytes)
}

fn rid(a: RidArgs) -> Result<(), CliError> {
    let cfg = a.config.resolve()?;
    let d = a.data.load()?;
    let result = estimate_rid(&d, &cfg)?;
    let report = result.report()?;
    if let Some(dir) = &a.svg {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
        for (j, (name, dist)) in result.names.iter().zip(&result.per_variable).enumerate() {
            write_atomic(&dir.join(plot_name(j, name)), cdf_svg(name, dist).as_bytes())?;
        }
    }
    if let Some(path) = &a.csv {
        write_atomic(path, summary_csv(&report.variables).as_bytes())?;
    }
    emit_json(&report, a.out.as_deref())
}

#[derive(Serialize)]
struct RsetFile {
    min_objective: f64,
    epsilon: f64,
    lambda: f64,
    depth: usize,
    size: usize,
    /// Binary split columns the trees' `feature` indices refer to.
    features: Vec<SplitColumn>,
    trees: Vec<RsetMember>,
}

#[derive(Serialize)]
struct SplitColumn {
    variable: String,
    rule: rid_core::dataset::SplitRule,
}

#[derive(Serialize)]
struct RsetMember {
    objective: f64,
    tree: Tree,
}

fn rset(a: RsetArgs) -> Result<(), CliError> {
    let cfg = a.config.resolve()?;
    let d = a.data.load()?;
    let bin = binarize(&d, cfg.max_thresholds)?;
    let r = enumerate_rset(&bin, cfg.epsilon, cfg.lambda, cfg.depth, cfg.max_models)?;
    let file = RsetFile {
        min_objective: r.min_objective,
        epsilon: r.epsilon,
        lambda: r.lambda,
        depth: r.depth_bound,
        size: r.len(),
        features: r
            .map
            .entries
            .iter()
            .map(|e| SplitColumn {
                variable: d.feature_names()[e.orig_var].clone(),
                rule: e.rule,
            })
            .collect(),
        trees: r
            .trees
            .into_iter()
            .zip(r.objectives)
            .map(|(tree, objective)| RsetMember { objective, tree })
            .collect(),
    };
    emit_json(&file, a.out.as_deref())
}

#[derive(Serialize)]
struct VariableStats {
    name: String,
    #[serde(flatten)]
    stats: rid_core::rid::DistStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    cdf_at_k: Option<[f64; 2]>,
}

fn stats(a: StatsArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.rid)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", a.rid.display())))?;
    let report: RidReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: not a rid result: {e}", a.rid.display())))?;
    let selected: Vec<_> = match &a.var {
        Some(name) => vec![report
            .variables
            .iter()
            .find(|v| &v.name == name)
            .ok_or_else(|| CliError::Data(format!("no variable {name:?} in {}", a.rid.display())))?],
        None => report.variables.iter().collect(),
    };
    let out = selected
        .into_iter()
        .map(|v| {
            let cdf_at_k = match a.k {
                Some(k) => Some([k, v.distribution()?.cdf(k)]),
                None => None,
            };
            Ok(VariableStats {
                name: v.name.clone(),
                stats: v.stats,
                cdf_at_k,
            })
        })
        .collect::<Result<Vec<_>, RidError>>()?;
    if a.var.is_some() {
        emit_json(&out[0], None)
    } else {
        emit_json(&out, None)
    }
}

/// Numeric CSV with a header row: `(names, rows)`.
fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let row = record
            .iter()
            .map(|cell| cell.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad(format!("row {} is not numeric", i + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(bad("no rows".into()));
    }
    Ok((names, rows))
}

fn column_index(names: &[String], key: &str) -> Result<usize, CliError> {
    names
        .iter()
        .position(|n| n == key)
        .or_else(|| key.parse::<usize>().ok().filter(|&j| j < names.len()))
        .ok_or_else(|| CliError::Usage(format!("no column {key:?}")))
}

#[derive(Serialize)]
struct LinearReport {
    names: Vec<String>,
    theta_star: Vec<f64>,
    c: f64,
    epsilon: f64,
    m_integral: f64,
    extrema: Vec<LinearExtrema>,
    cdf: Vec<LinearCdf>,
}

#[derive(Serialize)]
struct LinearExtrema {
    var: String,
    lo: f64,
    hi: f64,
}

#[derive(Serialize)]
struct LinearCdf {
    var: String,
    k: f64,
    analytic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<f64>,
}

fn linear(a: LinearArgs) -> Result<(), CliError> {
    let (names, rows) = read_numeric_csv(&a.design)?;
    let (_, ys) = read_numeric_csv(&a.y)?;
    if ys.iter().any(|r| r.len() != 1) {
        return Err(CliError::Data(format!("{}: expected one column", a.y.display())));
    }
    if ys.len() != rows.len() {
        return Err(CliError::Data(format!(
            "design has {} rows but response has {}",
            rows.len(),
            ys.len()
        )));
    }
    let p = names.len();
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let y = DVector::from_iterator(ys.len(), ys.iter().map(|r| r[0]));
    let e = ols_fit(&x, &y)?.with_epsilon(a.epsilon)?;
    let extrema = (0..p)
        .map(|j| {
            let ax = e.axis_extrema(j)?;
            Ok(LinearExtrema {
                var: names[j].clone(),
                lo: ax.lo,
                hi: ax.hi,
            })
        })
        .collect::<Result<_, RidError>>()?;
    let mut cdf = Vec::new();
    if let Some(k) = a.k {
        let vars = match &a.var {
            Some(key) => vec![column_index(&names, key)?],
            None => (0..p).collect(),
        };
        for j in vars {
            let monte_carlo = match a.samples {
                Some(samples) => Some(e.rid_cdf(
                    j,
                    k,
                    CdfMethod::MonteCarlo {
                        samples,
                        seed: split_rng(Seed(a.seed), j as u64),
                    },
                )?),
                None => None,
            };
            cdf.push(LinearCdf {
                var: names[j].clone(),
                k,
                analytic: e.rid_cdf(j, k, CdfMethod::Analytic)?,
                monte_carlo,
            });
        }
    }
    let report = LinearReport {
        theta_star: e.center().iter().copied().collect(),
        c: e.offset(),
        epsilon: a.epsilon,
        m_integral: e.m_integral()?,
        names,
        extrema,
        cdf,
    };
    emit_json(&report, a.out.as_deref())
}

fn stability(a: StabilityArgs) -> Result<(), CliError> {
    let cfg = a.config.resolve()?;
    let report = stability_experiment(a.dgp, a.datasets, &cfg)?;
    emit_json(&report, a.out.as_deref())
}

#[derive(Serialize)]
struct CoverageReport {
    dgp: DgpId,
    n_train: usize,
    n_test: usize,
    config: RunConfig,
    variables: Vec<VariableCoverage>,
}

#[derive(Serialize)]
struct VariableCoverage {
    name: String,
    bwr: [f64; 2],
    coverage: f64,
}

fn coverage(a: CoverageArgs) -> Result<(), CliError> {
    let cfg = a.config.resolve()?;
    if a.n_test == 0 {
        return Err(CliError::Usage("--n-test must be at least 1".into()));
    }
    let train = match &a.data {
        Some(path) => load_csv(path, a.label.as_deref())?,
        None => {
            let mut spec = DgpSpec::standard(a.dgp, split_rng(cfg.seed, TRAIN_STREAM));
            if let Some(n) = a.n {
                spec.n = n;
            }
            generate(&spec)?
        }
    };
    if train.p() != a.dgp.arity() {
        return Err(CliError::Data(format!(
            "{} expects {} features, training data has {}",
            a.dgp,
            a.dgp.arity(),
            train.p()
        )));
    }
    let selected = match &a.var {
        Some(key) => Some(column_index(train.feature_names(), key)?),
        None => None,
    };
    let result = estimate_rid(&train, &cfg)?;
    let bwr: Vec<_> = result.per_variable.iter().map(|v| v.bwr()).collect();
    let reliances = dgp_test_reliances(a.dgp, train.n(), a.n_test, &cfg)?;
    let cov = coverage_of(&bwr, &reliances);
    let variables = (0..train.p())
        .filter(|j| selected.is_none_or(|s| s == *j))
        .map(|j| VariableCoverage {
            name: train.feature_names()[j].clone(),
            bwr: [bwr[j].lo, bwr[j].hi],
            coverage: cov[j],
        })
        .collect();
    let report = CoverageReport {
        dgp: a.dgp,
        n_train: train.n(),
        n_test: a.n_test,
        config: cfg,
        variables,
    };
    emit_json(&report, a.out.as_deref())
}
