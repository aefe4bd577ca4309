//! Command-line front end. Every data file written with `--output` gets a
//! `<file>.manifest` sidecar listing the resolved parameters.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::losses::train::{
    train_least_quantile, Architecture, Dataset, Optimizer, Predictor, QuantileMode, TrainConfig,
    TrainingTrace,
};
use crate::losses::{soft_quantile_transport, QuantileSpec};
use crate::measures::{CostSpec, DiscreteMeasure, Squash, TargetDescriptor};
use crate::sinkhorn::{soft_rank_sort, SinkhornConfig, SinkhornMode, SoftResult, SoftSortConfig};
use crate::VERSION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "sinksort",
    version,
    about = "Soft ranks, sorts and quantiles via regularized optimal transport"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Soft ranks of a vector, one value per line.
    Rank(OperatorArgs),
    /// Soft sorted values of a vector onto `m` targets.
    Sort(OperatorArgs),
    /// Soft ranks and sorts over a grid of epsilon values.
    SweepEpsilon(SweepArgs),
    /// Soft quantile, optionally dumping the three-column transport plan.
    Quantile(QuantileArgs),
    /// Least-quantile regression, soft mode against the hard baseline.
    QuantileRegression(RegressionArgs),
    /// Write a synthetic linear dataset with outliers.
    MakeDataset(MakeDatasetArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-2)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub eta: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    /// Exponent `p` of the cost `|x - y|^p`.
    #[arg(long, default_value_t = 2.0)]
    pub cost_p: f64,
    /// `logistic` or `arctan`.
    #[arg(long, default_value = "logistic")]
    pub squash: Squash,
    /// `log` or `multiplicative`.
    #[arg(long, default_value = "log")]
    pub mode: SinkhornMode,
}

impl SolverArgs {
    fn config(&self, epsilon: f64) -> Result<SoftSortConfig> {
        let sinkhorn = SinkhornConfig {
            epsilon,
            eta: self.eta,
            max_iters: self.max_iters,
            mode: self.mode,
        };
        sinkhorn.validate()?;
        Ok(SoftSortConfig {
            sinkhorn,
            cost: CostSpec::abs_power(self.cost_p)?,
            squash: self.squash,
        })
    }

    fn record(&self, m: &mut RunManifest) {
        m.param("eta", self.eta);
        m.param("max_iters", self.max_iters);
        m.param("cost_p", self.cost_p);
        m.param("squash", self.squash.name());
        m.param("mode", self.mode.name());
    }
}

#[derive(Debug, Clone, Args)]
pub struct TargetArgs {
    /// Number of target points on the regular grid; defaults to the input length.
    #[arg(long)]
    pub m: Option<usize>,
    /// Comma-separated target weights; sets `m` to their count.
    #[arg(long, value_delimiter = ',')]
    pub quantile_weights: Option<Vec<f64>>,
}

impl TargetArgs {
    fn target(&self, n: usize) -> Result<TargetDescriptor> {
        match (&self.quantile_weights, self.m) {
            (Some(w), Some(m)) if w.len() != m => Err(Error::invalid(format!(
                "--m {m} disagrees with {} quantile weights",
                w.len()
            ))),
            (Some(w), _) => TargetDescriptor::grid_with_weights(w.clone()),
            (None, m) => TargetDescriptor::uniform_grid(m.unwrap_or(n)),
        }
    }

    fn record(&self, target: &TargetDescriptor, m: &mut RunManifest) {
        m.param("m", target.len());
        m.param("target_weights", join(target.weights(), ","));
    }
}

#[derive(Debug, Clone, Args)]
pub struct OperatorArgs {
    /// Input vector file, one real per line; `-` reads stdin.
    pub input: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub target: TargetArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    pub input: PathBuf,
    /// Comma-separated epsilon grid.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "1e-4,1e-3,1e-2,1e-1,1,10,100,1000"
    )]
    pub epsilons: Vec<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub target: TargetArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct QuantileArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Filler mass at the middle target; defaults to `1 / n`.
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long, default_value_t = 1e-2)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub eta: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Write the `n x 3` plan here.
    #[arg(long)]
    pub plan: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RegressionArgs {
    /// Rows of features followed by the response.
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Regularization of the soft run; the baseline always uses the hard quantile.
    #[arg(long, default_value_t = 1e-2)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 512)]
    pub batch_size: usize,
    /// `linear` or `mlp:<hidden>`.
    #[arg(long, default_value = "linear")]
    pub arch: Architecture,
    /// `adam` or `sgd`.
    #[arg(long, default_value = "adam")]
    pub optimizer: Optimizer,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MakeDatasetArgs {
    #[arg(long, default_value_t = 2048)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.1)]
    pub outliers: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Resolved parameters of one run, written as `key=value` lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    pub command: String,
    pub params: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self {
            command: command.to_owned(),
            params: Vec::new(),
        };
        m.param("version", VERSION);
        m
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.params.push((key.to_owned(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("command={}\n", self.command);
        for (k, v) in &self.params {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut command = None;
        let mut params = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected key=value".into(),
            })?;
            if k == "command" {
                command = Some(v.to_owned());
            } else {
                params.push((k.to_owned(), v.to_owned()));
            }
        }
        let command = command.ok_or_else(|| Error::invalid("manifest has no command"))?;
        Ok(Self { command, params })
    }

    pub fn path_for(output: &Path) -> PathBuf {
        let mut s = output.as_os_str().to_owned();
        s.push(".manifest");
        PathBuf::from(s)
    }
}

/// One real per line; blank lines and `#` comments are ignored.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("not a real number: {line:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("non-finite value {line:?}"),
            });
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::invalid("input contains no values"));
    }
    Ok(out)
}

fn read_input(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })
    }
}

fn join(values: &[f64], sep: &str) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

fn column(header: &str, values: &[f64]) -> String {
    let mut s = format!("# {header}\n");
    for v in values {
        let _ = writeln!(s, "{v}");
    }
    s
}

fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{what} contains non-finite values"
        )));
    }
    Ok(())
}

fn require_converged(r: &SoftResult) -> Result<()> {
    if r.converged {
        Ok(())
    } else {
        Err(Error::NotConverged {
            iterations: r.iterations_used,
            marginal_error: r.marginal_error,
        })
    }
}

/// Writes `body` to `output` with its manifest, or to `stdout`.
fn emit(
    body: &str,
    output: Option<&Path>,
    mut manifest: RunManifest,
    stdout: &mut dyn Write,
) -> Result<()> {
    match output {
        Some(path) => {
            manifest.param("output", path.display());
            std::fs::write(path, body)?;
            std::fs::write(RunManifest::path_for(path), manifest.to_text())?;
        }
        None => stdout.write_all(body.as_bytes())?,
    }
    Ok(())
}

fn cmd_operator(args: &OperatorArgs, ranks: bool, stdout: &mut dyn Write) -> Result<()> {
    let x = parse_vector(&read_input(&args.input)?)?;
    let target = args.target.target(x.len())?;
    let cfg = args.solver.config(args.solver.epsilon)?;
    let r = soft_rank_sort(&DiscreteMeasure::uniform(x)?, &target, &cfg)?;
    require_converged(&r)?;
    let (name, values) = if ranks {
        ("s_rank", &r.s_ranks)
    } else {
        ("s_sort", &r.s_sorts)
    };
    check_finite(name, values)?;

    let mut m = RunManifest::new(if ranks { "rank" } else { "sort" });
    m.param("input", args.input.display());
    m.param("epsilon", args.solver.epsilon);
    args.solver.record(&mut m);
    args.target.record(&target, &mut m);
    m.param("iterations_used", r.iterations_used);
    emit(&column(name, values), args.output.as_deref(), m, stdout)
}

fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<()> {
    let x = parse_vector(&read_input(&args.input)?)?;
    if args.epsilons.is_empty() {
        return Err(Error::invalid("empty epsilon grid"));
    }
    let target = args.target.target(x.len())?;
    let source = DiscreteMeasure::uniform(x)?;
    let mut body = String::from("# epsilon output values\n");
    for &eps in &args.epsilons {
        let r = soft_rank_sort(&source, &target, &args.solver.config(eps)?)?;
        require_converged(&r)?;
        check_finite("s_rank", &r.s_ranks)?;
        check_finite("s_sort", &r.s_sorts)?;
        let _ = writeln!(body, "{eps} rank {}", join(&r.s_ranks, " "));
        let _ = writeln!(body, "{eps} sort {}", join(&r.s_sorts, " "));
    }

    let mut m = RunManifest::new("sweep-epsilon");
    m.param("input", args.input.display());
    m.param("epsilons", join(&args.epsilons, ","));
    args.solver.record(&mut m);
    args.target.record(&target, &mut m);
    emit(&body, args.output.as_deref(), m, stdout)
}

fn cmd_quantile(args: &QuantileArgs, stdout: &mut dyn Write) -> Result<()> {
    let x = parse_vector(&read_input(&args.input)?)?;
    let t = args.t.unwrap_or(1.0 / x.len() as f64);
    let spec = QuantileSpec::new(args.tau, t, args.epsilon)?
        .with_eta(args.eta)
        .with_max_iters(args.max_iters);
    let tr = soft_quantile_transport(&x, &spec)?;
    if !tr.state.converged {
        return Err(Error::NotConverged {
            iterations: tr.state.iterations_used,
            marginal_error: tr.state.marginal_error,
        });
    }
    let b = spec.target_weights();
    let q = (0..x.len()).map(|i| tr.plan[(i, 1)] * x[i]).sum::<f64>() / b[1];
    check_finite("quantile", &[q])?;
    check_finite("plan", tr.plan.as_slice())?;
    let col_err: f64 = tr
        .plan
        .col_sums()
        .iter()
        .zip(&b)
        .map(|(s, w)| (s - w).abs())
        .sum();
    if col_err > args.eta {
        return Err(Error::NotConverged {
            iterations: tr.state.iterations_used,
            marginal_error: col_err,
        });
    }

    let mut m = RunManifest::new("quantile");
    m.param("input", args.input.display());
    m.param("tau", args.tau);
    m.param("t", t);
    m.param("epsilon", args.epsilon);
    m.param("eta", args.eta);
    m.param("max_iters", args.max_iters);
    m.param("iterations_used", tr.state.iterations_used);

    let mut plan = String::from("# x p_low p_mid p_high\n");
    for (i, xi) in x.iter().enumerate() {
        let _ = writeln!(plan, "{xi} {}", join(tr.plan.row(i), " "));
    }
    match (&args.output, &args.plan) {
        (None, None) => {
            stdout.write_all(column("soft_quantile", &[q]).as_bytes())?;
            stdout.write_all(plan.as_bytes())?;
        }
        (out, plan_path) => {
            emit(
                &column("soft_quantile", &[q]),
                out.as_deref(),
                m.clone(),
                stdout,
            )?;
            if let Some(p) = plan_path {
                let mut pm = m;
                pm.command = "quantile-plan".into();
                emit(&plan, Some(p), pm, stdout)?;
            }
        }
    }
    Ok(())
}

fn trace_lines(body: &mut String, mode: &str, trace: &TrainingTrace) {
    for r in &trace.rows {
        let _ = writeln!(
            body,
            "{mode} {} {} {} {}",
            r.epoch, r.train_quantile, r.test_quantile, r.mse
        );
    }
    if let Some(msg) = &trace.aborted {
        let _ = writeln!(body, "# {mode} aborted: {msg}");
    }
}

fn cmd_regression(args: &RegressionArgs, stdout: &mut dyn Write) -> Result<()> {
    let data = Dataset::parse(&read_input(&args.dataset)?)?;
    let (train, test) = data.split(args.test_fraction, args.seed)?;
    let soft_mode = QuantileMode::from_epsilon(args.epsilon)?;
    let base = TrainConfig {
        tau: args.tau,
        mode: QuantileMode::Hard,
        batch_size: args.batch_size,
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        optimizer: args.optimizer,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let init = Predictor::new(args.arch, data.dim(), args.seed)?;
    let baseline = train_least_quantile(&train, &test, init.clone(), &base)?;
    let soft = train_least_quantile(
        &train,
        &test,
        init,
        &TrainConfig {
            mode: soft_mode,
            ..base
        },
    )?;

    let mut body = String::from("# mode epoch train_quantile test_quantile mse\n");
    trace_lines(&mut body, "baseline", &baseline);
    trace_lines(&mut body, "soft", &soft);

    let mut m = RunManifest::new("quantile-regression");
    m.param("dataset", args.dataset.display());
    m.param("tau", args.tau);
    m.param("epsilon", args.epsilon);
    m.param("epochs", args.epochs);
    m.param("seed", args.seed);
    m.param("learning_rate", args.learning_rate);
    m.param("batch_size", args.batch_size);
    m.param(
        "arch",
        match args.arch {
            Architecture::Linear => "linear".to_string(),
            Architecture::Mlp { hidden } => format!("mlp:{hidden}"),
        },
    );
    m.param(
        "optimizer",
        match args.optimizer {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam { .. } => "adam",
        },
    );
    m.param("test_fraction", args.test_fraction);
    emit(&body, args.output.as_deref(), m, stdout)?;
    match baseline.aborted.or(soft.aborted) {
        Some(msg) => Err(Error::NonFinite(msg)),
        None => Ok(()),
    }
}

fn cmd_make_dataset(args: &MakeDatasetArgs, stdout: &mut dyn Write) -> Result<()> {
    let data = Dataset::synthetic_linear(args.n, args.dim, args.outliers, args.seed)?;
    let mut body = String::from("# features... response\n");
    body.push_str(&data.to_text());
    let mut m = RunManifest::new("make-dataset");
    m.param("n", args.n);
    m.param("dim", args.dim);
    m.param("outliers", args.outliers);
    m.param("seed", args.seed);
    emit(&body, args.output.as_deref(), m, stdout)
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Rank(a) => cmd_operator(a, true, stdout),
        Command::Sort(a) => cmd_operator(a, false, stdout),
        Command::SweepEpsilon(a) => cmd_sweep(a, stdout),
        Command::Quantile(a) => cmd_quantile(a, stdout),
        Command::QuantileRegression(a) => cmd_regression(a, stdout),
        Command::MakeDataset(a) => cmd_make_dataset(a, stdout),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            }
        }
    }
}
