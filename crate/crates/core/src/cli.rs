//! Command-line front end.
//!
//! Every subcommand writes a CSV table followed by comment trailers:
//! `# rows=N seed=S` and `# config=...` echoing the numeric inputs as
//! `key=value` pairs. Writing those pairs to a file and passing it back with
//! `--config` reproduces the output exactly.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};

use crate::conformal::{conformal_region, ConformalConfig, NormalPrior, ScoreKind};
use crate::error::FabError;
use crate::normal::{fab_interval_1d, fab_region_2d, EstVarParams, NormalFabConfig, PriorScale};
use crate::region::InversionOptions;
use crate::regression::{default_split_df, ridge_prior, RegressionFabConfig, ResidualBasis};
use crate::sim::{
    estimate_coverage, estimate_risk, figure_data, Cell, ConformalProcedure, EstVarProcedure, Figure, FigureOptions,
    NormalFabProcedure, RegressionKind, RegressionProcedure, SimReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
const EXIT_IO: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "fab", version, about = "Bayes-optimal prediction regions with exact frequentist coverage", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,

    /// Write the table here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// File of key=value lines, one per flag; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for Monte Carlo work.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// FAB interval for a scalar normal observation.
    NormalInterval(NormalArgs),
    /// Area of the FAB region for a bivariate normal observation.
    NormalRegion2d(Region2dArgs),
    /// FAB, Bayes or equivariant prediction interval in a linear model.
    RegressInterval(RegressArgs),
    /// Conformal region with the posterior predictive or |deviation| score.
    Conformal(ConformalArgs),
    /// Monte Carlo coverage of a procedure at a parameter value.
    Coverage(SimArgs),
    /// Monte Carlo expected region size at a parameter value.
    Risk(SimArgs),
    /// Tidy table behind one of the figures.
    Figure(FigureArgs),
}

fn parse_lambda(s: &str) -> Result<PriorScale, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "+inf" => Ok(PriorScale::Infinite),
        t => {
            let v: f64 = t.parse().map_err(|e| format!("{e}"))?;
            if v > 0.0 {
                Ok(PriorScale::from_f64(v))
            } else {
                Err(format!("lambda must be positive or inf, got {s}"))
            }
        }
    }
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha must lie in (0,1), got {s}"))
    }
}

/// Comma-separated reals.
#[derive(Debug, Clone, PartialEq)]
struct FloatList(Vec<f64>);

impl std::ops::Deref for FloatList {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

fn parse_list(s: &str) -> Result<FloatList, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(FloatList)
}

#[derive(Debug, Args)]
struct NormalArgs {
    #[arg(long, allow_hyphen_values = true)]
    x: f64,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    mu: f64,
    #[arg(long, value_parser = parse_lambda, default_value = "1")]
    lambda: PriorScale,
    #[arg(long, value_parser = parse_alpha, default_value = "0.1")]
    alpha: f64,
    #[arg(long, default_value_t = 2048)]
    resolution: usize,
}

#[derive(Debug, Args)]
struct Region2dArgs {
    /// Observation, `x1,x2`.
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    x: FloatList,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Prior mean, `m1,m2`.
    #[arg(long, value_parser = parse_list, default_value = "0,0", allow_hyphen_values = true)]
    mu: FloatList,
    #[arg(long, value_parser = parse_lambda, default_value = "1")]
    lambda: PriorScale,
    #[arg(long, value_parser = parse_alpha, default_value = "0.1")]
    alpha: f64,
    #[arg(long, default_value_t = 512)]
    grid_n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegressMethod {
    Fab,
    Bayes,
    Equivariant,
}

#[derive(Debug, Args)]
struct RegressArgs {
    /// CSV file with the n × p design, no header.
    #[arg(long)]
    design: PathBuf,
    /// Observed responses, `x1,...,xn`.
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    x: FloatList,
    /// Covariates of the predicted response, `v1,...,vp`.
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    v: FloatList,
    /// Known noise variance; omit to estimate it from the residuals.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Prior `β ~ N(0, σ²τ² I)`.
    #[arg(long, value_parser = parse_lambda, default_value = "1")]
    tau2: PriorScale,
    #[arg(long, value_enum, default_value_t = RegressMethod::Fab)]
    method: RegressMethod,
    /// Residual df given to the shift estimate when σ² is estimated.
    #[arg(long)]
    split_df: Option<usize>,
    #[arg(long, value_parser = parse_alpha, default_value = "0.1")]
    alpha: f64,
    #[arg(long, default_value_t = 2048)]
    resolution: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScoreArg {
    Postpred,
    NegAbsDev,
}

impl From<ScoreArg> for ScoreKind {
    fn from(s: ScoreArg) -> Self {
        match s {
            ScoreArg::Postpred => ScoreKind::PostPred,
            ScoreArg::NegAbsDev => ScoreKind::NegAbsDev,
        }
    }
}

#[derive(Debug, Args)]
struct ConformalArgs {
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    data: FloatList,
    /// `k` with `α = k/(n+1)`.
    #[arg(long, conflicts_with = "alpha")]
    k_level: Option<usize>,
    /// Must equal `k/(n+1)` for an integer `k`.
    #[arg(long, value_parser = parse_alpha)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    m: f64,
    #[arg(long, value_parser = parse_lambda, default_value = "1")]
    lambda: PriorScale,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, value_enum, default_value_t = ScoreArg::Postpred)]
    score: ScoreArg,
    #[arg(long, default_value_t = 2048)]
    resolution: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    /// Known-variance normal FAB, p = 1 or 2.
    Normal,
    /// Estimated-variance normal FAB, p = 1.
    NormalEstvar,
    Regression,
    Conformal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Fab,
    FabT,
    Bayes,
    Equivariant,
    EquivariantT,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Parameter value (θ, or β for regression), comma separated.
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    theta: FloatList,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Prior mean (normal models; broadcast if scalar) or `m` (conformal).
    #[arg(long, value_parser = parse_list, default_value = "0", allow_hyphen_values = true)]
    mu: FloatList,
    #[arg(long, value_parser = parse_lambda, default_value = "1")]
    lambda: PriorScale,
    #[arg(long, value_parser = parse_alpha, default_value = "0.1")]
    alpha: f64,
    /// Degrees of freedom of σ̂² (normal-estvar).
    #[arg(long, default_value_t = 10)]
    nu: u32,
    /// Degrees of freedom of σ̃² (normal-estvar).
    #[arg(long, default_value_t = 4)]
    nu_tilde: u32,
    /// Regression design CSV.
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    v: Option<FloatList>,
    #[arg(long, value_parser = parse_lambda, default_value = "1")]
    tau2: PriorScale,
    #[arg(long, value_enum, default_value_t = KindArg::Fab)]
    kind: KindArg,
    #[arg(long)]
    split_df: Option<usize>,
    /// Conformal sample size.
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    k_level: usize,
    #[arg(long, value_enum, default_value_t = ScoreArg::Postpred)]
    score: ScoreArg,
    #[arg(long, default_value_t = 2048)]
    resolution: usize,
    #[arg(long, default_value_t = 128)]
    grid_n: usize,
}

#[derive(Debug, Args)]
struct FigureArgs {
    #[arg(long, value_parser = ["fig1", "fig2", "fig3", "fig4"])]
    which: String,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    v_rows: Option<usize>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long, value_parser = parse_list)]
    tau2: Option<FloatList>,
    /// Larger Monte Carlo sizes for fig4 (all rows, 1000 reps).
    #[arg(long)]
    full_scale: bool,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Fab(FabError),
    Io(String),
}

impl From<FabError> for CliError {
    fn from(e: FabError) -> Self {
        CliError::Fab(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Output table plus the `key=value` pairs echoed in the trailer.
struct Output {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    config: Vec<(&'static str, String)>,
    extra: Vec<String>,
}

/// `%.9g`-style formatting.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // exponent after rounding to 9 significant digits
    let sci = format!("{x:.8e}");
    let (mant, e) = sci.split_once('e').expect("scientific format");
    let exp: i32 = e.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{}", trim_zeros(mant), exp)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Run the CLI on `argv` (program name first); returns the exit code.
pub fn run<S: AsRef<str>>(argv: &[S], stdout: &mut dyn Write) -> i32 {
    run_with_stderr(argv, stdout, &mut std::io::stderr())
}

pub fn run_with_stderr<S: AsRef<str>>(argv: &[S], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let argv: Vec<String> = argv.iter().map(|s| s.as_ref().to_string()).collect();
    let argv = match inject_config(argv) {
        Ok(a) => a,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match execute(&cli) {
        Ok(out) => match emit(&cli, &out, stdout) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let msg = match e {
                    CliError::Io(m) | CliError::Usage(m) => m,
                    CliError::Fab(f) => f.to_string(),
                };
                let dest = cli.out.as_ref().map_or("stdout".to_string(), |p| p.display().to_string());
                let _ = writeln!(stderr, "error: cannot write {dest}: {msg}");
                EXIT_IO
            }
        },
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Fab(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            }
        }
        Err(CliError::Io(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
    }
}

const SUBCOMMANDS: [&str; 7] = [
    "normal-interval",
    "normal-region2d",
    "regress-interval",
    "conformal",
    "coverage",
    "risk",
    "figure",
];

/// Splice `--key value` pairs from the `--config` file in right after the
/// subcommand, so explicit flags (parsed later) override them.
fn inject_config(mut argv: Vec<String>) -> Result<Vec<String>, String> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        if a == "--config" {
            path = argv.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let mut extra = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{path}:{}: expected key=value", ln + 1))?;
        let (k, v) = (k.trim(), v.trim());
        match v {
            "true" => extra.push(format!("--{k}")),
            "false" => {}
            _ => extra.push(format!("--{k}={v}")),
        }
    }
    let pos = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .ok_or("missing subcommand")?;
    argv.splice(pos + 1..pos + 1, extra);
    Ok(argv)
}

fn emit(cli: &Cli, out: &Output, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        w.write_record(&out.header)?;
        for r in &out.rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    let mut trailer = String::new();
    writeln!(trailer, "# rows={} seed={}", out.rows.len(), cli.seed).expect("write to String");
    for e in &out.extra {
        writeln!(trailer, "# {e}").expect("write to String");
    }
    let cfg: Vec<String> = out.config.iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(trailer, "# config={}", cfg.join(" ")).expect("write to String");
    buf.extend_from_slice(trailer.as_bytes());
    match &cli.out {
        Some(path) => std::fs::write(path, &buf)?,
        None => stdout.write_all(&buf)?,
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<Output, CliError> {
    let seed = cli.seed;
    match &cli.cmd {
        Command::NormalInterval(a) => normal_interval(a),
        Command::NormalRegion2d(a) => normal_region2d(a),
        Command::RegressInterval(a) => regress_interval(a),
        Command::Conformal(a) => conformal(a),
        Command::Coverage(a) => simulate(a, seed, true),
        Command::Risk(a) => simulate(a, seed, false),
        Command::Figure(a) => figure(a, seed),
    }
}

fn interval_rows(intervals: &[(f64, f64)]) -> Vec<Vec<String>> {
    intervals
        .iter()
        .map(|&(lo, hi)| vec![fmt_sig(lo), fmt_sig(hi), fmt_sig(hi - lo)])
        .collect()
}

fn normal_interval(a: &NormalArgs) -> Result<Output, CliError> {
    let cfg = NormalFabConfig::scalar(a.k, a.sigma2, a.mu, a.lambda, a.alpha)?;
    let r = if a.resolution == 2048 {
        fab_interval_1d(a.x, &cfg)?
    } else {
        crate::normal::fab_interval_1d_with(a.x, &cfg, &InversionOptions::with_resolution(a.resolution))?
    };
    Ok(Output {
        header: vec!["lo", "hi", "width"],
        rows: interval_rows(&r.intervals),
        config: vec![
            ("x", a.x.to_string()),
            ("k", a.k.to_string()),
            ("sigma2", a.sigma2.to_string()),
            ("mu", a.mu.to_string()),
            ("lambda", a.lambda.to_string()),
            ("alpha", a.alpha.to_string()),
            ("resolution", a.resolution.to_string()),
        ],
        extra: vec![],
    })
}

fn normal_region2d(a: &Region2dArgs) -> Result<Output, CliError> {
    if a.x.len() != 2 || a.mu.len() != 2 {
        return Err(CliError::Usage("--x and --mu need exactly two values".into()));
    }
    let cfg = NormalFabConfig::isotropic(2, a.k, a.sigma2, DVector::from_vec(a.mu.to_vec()), a.lambda, a.alpha)?;
    let r = fab_region_2d(&DVector::from_vec(a.x.to_vec()), &cfg, a.grid_n)?;
    Ok(Output {
        header: vec!["area", "err_bound", "n_cells"],
        rows: vec![vec![fmt_sig(r.area), fmt_sig(r.err_bound), r.n_cells.to_string()]],
        config: vec![
            ("x", list(&a.x)),
            ("k", a.k.to_string()),
            ("sigma2", a.sigma2.to_string()),
            ("mu", list(&a.mu)),
            ("lambda", a.lambda.to_string()),
            ("alpha", a.alpha.to_string()),
            ("grid-n", a.grid_n.to_string()),
        ],
        extra: vec![],
    })
}

fn read_design(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("cannot read design {}: {e}", path.display())))?;
    let mut data = Vec::new();
    let mut ncol = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Usage(format!("design {}: {e}", path.display())))?;
        let row: Vec<f64> = rec
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Usage(format!("design {}: {e}", path.display())))?;
        match ncol {
            None => ncol = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(CliError::Usage(format!("design {}: ragged rows", path.display())));
            }
            _ => {}
        }
        data.extend(row);
    }
    let p = ncol.ok_or_else(|| CliError::Usage(format!("design {} is empty", path.display())))?;
    Ok(DMatrix::from_row_slice(data.len() / p, p, &data))
}

fn psi_for(p: usize, tau2: PriorScale) -> DMatrix<f64> {
    match tau2 {
        PriorScale::Infinite => DMatrix::zeros(p, p),
        PriorScale::Finite(t) => ridge_prior(p, t),
    }
}

fn regress_interval(a: &RegressArgs) -> Result<Output, CliError> {
    let u = read_design(&a.design)?;
    let (n, p) = u.shape();
    if a.x.len() != n {
        return Err(FabError::DimensionMismatch { expected: n, got: a.x.len() }.into());
    }
    let x = DVector::from_vec(a.x.to_vec());
    let cfg = RegressionFabConfig::new(u.clone(), DVector::from_vec(a.v.to_vec()), a.sigma2, psi_for(p, a.tau2), a.alpha)?;
    let opts = InversionOptions::with_resolution(a.resolution);
    let mut config = vec![
        ("design", a.design.display().to_string()),
        ("x", list(&a.x)),
        ("v", list(&a.v)),
    ];
    if let Some(s) = a.sigma2 {
        config.push(("sigma2", s.to_string()));
    }
    config.push(("tau2", a.tau2.to_string()));
    config.push((
        "method",
        match a.method {
            RegressMethod::Fab => "fab",
            RegressMethod::Bayes => "bayes",
            RegressMethod::Equivariant => "equivariant",
        }
        .into(),
    ));
    config.push(("alpha", a.alpha.to_string()));
    config.push(("resolution", a.resolution.to_string()));

    let (intervals, source) = match (a.sigma2, a.method) {
        (Some(_), RegressMethod::Fab) => (cfg.interval(&x, &opts)?.intervals, "known"),
        (Some(_), RegressMethod::Bayes) => (vec![cfg.bayes_interval(&x)?], "known"),
        (Some(_), RegressMethod::Equivariant) => (vec![cfg.equivariant_interval(&x)?], "known"),
        (None, RegressMethod::Bayes) => {
            return Err(CliError::Usage("--method bayes needs a known --sigma2".into()));
        }
        (None, method) => {
            let basis = ResidualBasis::new(&u)?;
            if method == RegressMethod::Equivariant {
                let s2 = basis.coordinates(&x).norm_squared() / basis.df() as f64;
                (vec![cfg.equivariant_t_interval(&x, s2, basis.df() as u32)?], "estimated")
            } else {
                let split = a.split_df.unwrap_or_else(|| default_split_df(n, p));
                config.push(("split-df", split.to_string()));
                let est = basis.split(&x, split)?;
                (cfg.interval_t(&x, &est, &opts)?.intervals, "estimated")
            }
        }
    };
    let rows = interval_rows(&intervals)
        .into_iter()
        .map(|mut r| {
            r.push(source.to_string());
            r
        })
        .collect();
    Ok(Output {
        header: vec!["lo", "hi", "width", "sigma_source"],
        rows,
        config,
        extra: vec![],
    })
}

fn conformal(a: &ConformalArgs) -> Result<Output, CliError> {
    let prior = NormalPrior::new(a.m, a.lambda, a.sigma2)?;
    let cfg = match (a.k_level, a.alpha) {
        (Some(k), None) => ConformalConfig::new(a.data.to_vec(), prior, k)?,
        (None, Some(alpha)) => ConformalConfig::with_alpha(a.data.to_vec(), prior, alpha)?,
        _ => return Err(CliError::Usage("give exactly one of --k-level and --alpha".into())),
    };
    let r = if a.resolution == 2048 {
        conformal_region(&cfg, a.score.into())?
    } else {
        let score = cfg.score(a.score.into());
        crate::conformal::conformal_region_with(&cfg, score.as_ref(), &InversionOptions::with_resolution(a.resolution))?
    };
    let rows = r
        .intervals
        .iter()
        .enumerate()
        .map(|(i, &(lo, hi))| vec![i.to_string(), fmt_sig(lo), fmt_sig(hi)])
        .collect();
    let mut extra = vec![format!("alpha={}", fmt_sig(cfg.alpha()))];
    if cfg.has_ties() {
        extra.push("ties=true".into());
    }
    Ok(Output {
        header: vec!["seg_index", "lo", "hi"],
        rows,
        config: vec![
            ("data", list(&a.data)),
            ("k-level", cfg.k_level().to_string()),
            ("m", a.m.to_string()),
            ("lambda", a.lambda.to_string()),
            ("sigma2", a.sigma2.to_string()),
            ("score", format!("{:?}", a.score).to_lowercase().replace("negabsdev", "neg-abs-dev")),
            ("resolution", a.resolution.to_string()),
        ],
        extra,
    })
}

fn broadcast(v: &[f64], p: usize) -> Result<DVector<f64>, CliError> {
    match v.len() {
        1 => Ok(DVector::from_element(p, v[0])),
        l if l == p => Ok(DVector::from_vec(v.to_vec())),
        l => Err(FabError::DimensionMismatch { expected: p, got: l }.into()),
    }
}

fn simulate(a: &SimArgs, seed: u64, coverage: bool) -> Result<Output, CliError> {
    let run = |rep: Result<SimReport, FabError>| -> Result<SimReport, CliError> { Ok(rep?) };
    let inv = InversionOptions::with_resolution(a.resolution);
    let mut config = vec![
        ("model", format!("{:?}", a.model).to_lowercase().replace("normalestvar", "normal-estvar")),
        ("theta", list(&a.theta)),
        ("reps", a.reps.to_string()),
        ("alpha", a.alpha.to_string()),
        ("resolution", a.resolution.to_string()),
    ];
    let rep = match a.model {
        ModelArg::Normal => {
            let p = a.theta.len();
            let cfg = NormalFabConfig::isotropic(p, a.k, a.sigma2, broadcast(&a.mu, p)?, a.lambda, a.alpha)?;
            let mut pr = NormalFabProcedure::new(cfg);
            pr.opts = inv;
            pr.grid_n = a.grid_n;
            config.extend([
                ("k", a.k.to_string()),
                ("sigma2", a.sigma2.to_string()),
                ("mu", list(&a.mu)),
                ("lambda", a.lambda.to_string()),
                ("grid-n", a.grid_n.to_string()),
            ]);
            let th = DVector::from_vec(a.theta.to_vec());
            run(if coverage { estimate_coverage(&pr, &th, a.reps, seed) } else { estimate_risk(&pr, &th, a.reps, seed) })?
        }
        ModelArg::NormalEstvar => {
            if a.theta.len() != 1 {
                return Err(CliError::Usage("normal-estvar simulation supports p = 1 only".into()));
            }
            let pr = EstVarProcedure {
                params: EstVarParams {
                    k: a.k,
                    mu: broadcast(&a.mu, 1)?,
                    lambda: a.lambda,
                    alpha: a.alpha,
                },
                sigma2: a.sigma2,
                nu: a.nu,
                nu_tilde: a.nu_tilde,
                opts: inv,
            };
            config.extend([
                ("k", a.k.to_string()),
                ("sigma2", a.sigma2.to_string()),
                ("mu", list(&a.mu)),
                ("lambda", a.lambda.to_string()),
                ("nu", a.nu.to_string()),
                ("nu-tilde", a.nu_tilde.to_string()),
            ]);
            let th = a.theta[0];
            run(if coverage { estimate_coverage(&pr, &th, a.reps, seed) } else { estimate_risk(&pr, &th, a.reps, seed) })?
        }
        ModelArg::Regression => {
            let path = a.design.as_ref().ok_or_else(|| CliError::Usage("--design is required".into()))?;
            let v = a.v.as_ref().ok_or_else(|| CliError::Usage("--v is required".into()))?;
            let u = read_design(path)?;
            let (n, p) = u.shape();
            let kind = match a.kind {
                KindArg::Fab => RegressionKind::FabKnown,
                KindArg::FabT => RegressionKind::FabT {
                    split_df: a.split_df.unwrap_or_else(|| default_split_df(n, p)),
                },
                KindArg::Bayes => RegressionKind::Bayes,
                KindArg::Equivariant => RegressionKind::Equivariant,
                KindArg::EquivariantT => RegressionKind::EquivariantT,
            };
            let known = !matches!(kind, RegressionKind::FabT { .. } | RegressionKind::EquivariantT);
            let cfg = RegressionFabConfig::new(
                u,
                DVector::from_vec(v.to_vec()),
                known.then_some(a.sigma2),
                psi_for(p, a.tau2),
                a.alpha,
            )?;
            let mut pr = RegressionProcedure::new(cfg, a.sigma2, kind)?;
            pr.opts = inv;
            config.extend([
                ("design", path.display().to_string()),
                ("v", list(v)),
                ("sigma2", a.sigma2.to_string()),
                ("tau2", a.tau2.to_string()),
                ("kind", format!("{:?}", a.kind).to_lowercase().replace("fabt", "fab-t").replace("equivariantt", "equivariant-t")),
            ]);
            if let RegressionKind::FabT { split_df } = kind {
                config.push(("split-df", split_df.to_string()));
            }
            let th = broadcast(&a.theta, p)?;
            run(if coverage { estimate_coverage(&pr, &th, a.reps, seed) } else { estimate_risk(&pr, &th, a.reps, seed) })?
        }
        ModelArg::Conformal => {
            if a.theta.len() != 1 {
                return Err(CliError::Usage("conformal simulation takes a scalar --theta".into()));
            }
            let pr = ConformalProcedure {
                n: a.n,
                k_level: a.k_level,
                prior: NormalPrior::new(a.mu[0], a.lambda, a.sigma2)?,
                score: a.score.into(),
                sigma2_true: a.sigma2,
                opts: inv,
            };
            config.extend([
                ("n", a.n.to_string()),
                ("k-level", a.k_level.to_string()),
                ("mu", list(&a.mu[..1])),
                ("lambda", a.lambda.to_string()),
                ("sigma2", a.sigma2.to_string()),
                ("score", format!("{:?}", a.score).to_lowercase().replace("negabsdev", "neg-abs-dev")),
            ]);
            let th = a.theta[0];
            run(if coverage { estimate_coverage(&pr, &th, a.reps, seed) } else { estimate_risk(&pr, &th, a.reps, seed) })?
        }
    };
    Ok(Output {
        header: vec!["quantity", "estimate", "std_error", "n_reps", "seed"],
        rows: vec![vec![
            rep.quantity.to_string(),
            fmt_sig(rep.estimate),
            fmt_sig(rep.std_error),
            rep.n_reps.to_string(),
            rep.seed.to_string(),
        ]],
        config,
        extra: vec![format!("digest={}", rep.config_digest)],
    })
}

fn figure(a: &FigureArgs, seed: u64) -> Result<Output, CliError> {
    let which: Figure = a.which.parse()?;
    let opts = FigureOptions {
        reps: a.reps,
        grid_n: a.grid_n,
        v_rows: a.v_rows,
        resolution: a.resolution,
        tau2: a.tau2.as_ref().map(|t| t.to_vec()),
        full_scale: a.full_scale,
    };
    let table = figure_data(which, &opts, seed)?;
    let rows = table
        .rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|c| match c {
                    Cell::Num(x) => fmt_sig(*x),
                    Cell::Text(s) => s.clone(),
                })
                .collect()
        })
        .collect();
    let mut config = vec![("which", a.which.clone())];
    if let Some(r) = a.reps {
        config.push(("reps", r.to_string()));
    }
    if let Some(g) = a.grid_n {
        config.push(("grid-n", g.to_string()));
    }
    if let Some(v) = a.v_rows {
        config.push(("v-rows", v.to_string()));
    }
    if let Some(r) = a.resolution {
        config.push(("resolution", r.to_string()));
    }
    if let Some(t) = &a.tau2 {
        config.push(("tau2", list(t)));
    }
    if a.full_scale {
        config.push(("full-scale", "true".into()));
    }
    Ok(Output {
        header: table.columns,
        rows,
        config,
        extra: vec![],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut argv = vec!["fab"];
        argv.extend_from_slice(args);
        let code = run_with_stderr(&argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(fmt_sig(4.652348619), "4.65234862");
        assert_eq!(fmt_sig(-2.326174307), "-2.32617431");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1234567891234.0), "1.23456789e12");
        assert_eq!(fmt_sig(0.000001234), "1.234e-6");
        assert_eq!(fmt_sig(0.5), "0.5");
        assert_eq!(fmt_sig(f64::INFINITY), "inf");
        assert_eq!(fmt_sig(999999999.6), "1e9");
    }

    #[test]
    fn pivotal_example() {
        let (code, out, _) = call(&["normal-interval", "--x", "0", "--k", "1", "--sigma2", "1", "--mu", "0", "--lambda", "inf", "--alpha", "0.1"]);
        assert_eq!(code, 0);
        let row: Vec<f64> = out.lines().nth(1).unwrap().split(',').map(|t| t.parse().unwrap()).collect();
        assert!((row[0] + 2.32617).abs() < 1e-5 && (row[1] - 2.32617).abs() < 1e-5 && (row[2] - 4.65235).abs() < 1e-5);
        assert!(out.contains("# rows=1 seed=0"));
        assert!(out.contains("# config=x=0 k=1 sigma2=1 mu=0 lambda=inf alpha=0.1"));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(call(&["normal-interval", "--x", "0", "--bogus", "1"]).0, 2);
        assert_eq!(call(&["normal-interval", "--x", "0", "--alpha", "1.5"]).0, 2);
        assert_eq!(call(&["frobnicate"]).0, 2);
        let (code, _, err) = call(&["conformal", "--data", "1,2,0.5,1.5", "--alpha", "0.25"]);
        assert_eq!(code, 2);
        assert!(err.contains("0.2") && err.contains("0.4"), "{err}");
        assert_eq!(call(&["--help"]).0, 0);
    }

    #[test]
    fn unbounded_region_exits_3() {
        let (code, _, err) = call(&["conformal", "--data", "1,2,0.5,1.5", "--k-level", "0"]);
        assert_eq!(code, 3);
        assert!(err.contains("invert_membership"), "{err}");
    }

    #[test]
    fn conformal_example() {
        let (code, out, _) = call(&["conformal", "--data", "1.0,2.0,0.5,1.5", "--k-level", "1", "--m", "0", "--lambda", "1", "--sigma2", "1"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("seg_index,lo,hi\n0,"));
        assert!(out.contains("# alpha=0.2\n"));
    }
}
