//! Seeded Monte Carlo estimates of coverage and expected region size, and
//! the tables behind the figures.
//!
//! Replicate `i` draws from its own stream `(seed, i)`, and replicate values
//! are collected in index order before summation, so results do not depend
//! on the number of threads.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::conformal::{conformal_region_with, ConformalConfig, ConformityScore, NegAbsDeviation, NormalPrior, PosteriorPredictive, ScoreKind};
use crate::error::{FabError, Result};
use crate::normal::{fab_interval_1d_with, fab_region_2d, EstVarFab, EstVarParams, NormalFabConfig, PriorScale};
use crate::region::InversionOptions;
use crate::regression::{default_split_df, ridge_prior, RegressionFabConfig, ResidualBasis, VarianceEstimates};
use crate::rng::{derive_seed, replicate_rng, StreamRng};
use crate::specfun::{phi_inv, t_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Coverage,
    ExpectedMeasure,
}

impl std::fmt::Display for Quantity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Quantity::Coverage => "coverage",
            Quantity::ExpectedMeasure => "expected_measure",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub quantity: Quantity,
    pub estimate: f64,
    /// `√(s²/n_reps)` with `s²` the replicate variance.
    pub std_error: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub config_digest: String,
}

/// A region procedure together with the model generating its data.
pub trait Procedure: Sync {
    type Theta: Sync + ?Sized;
    type Draw;

    /// Draw `(X, Y)` at `theta`.
    fn sample(&self, theta: &Self::Theta, rng: &mut StreamRng) -> Self::Draw;
    /// Is `Y ∈ A_X`?
    fn covers(&self, draw: &Self::Draw) -> Result<bool>;
    /// `μ(A_X)`.
    fn measure(&self, draw: &Self::Draw) -> Result<f64>;
    /// Identifies the procedure and its parameters.
    fn digest(&self) -> String;
}

/// Kahan-Babuska-Neumaier sum.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean and standard error of the replicate values.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = compensated_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let s2 = compensated_sum(&dev) / (n - 1.0);
    (mean, (s2 / n).sqrt())
}

/// Evaluate `f` on replicates `0..n_reps`, each with its own stream.
pub fn replicate_values<F>(n_reps: usize, seed: u64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut StreamRng) -> Result<f64> + Sync,
{
    (0..n_reps as u64)
        .into_par_iter()
        .map(|i| f(&mut replicate_rng(seed, i)))
        .collect()
}

fn report(quantity: Quantity, values: &[f64], seed: u64, digest: String) -> SimReport {
    let (estimate, std_error) = mean_and_se(values);
    SimReport {
        quantity,
        estimate,
        std_error,
        n_reps: values.len(),
        seed,
        config_digest: digest,
    }
}

fn check_reps(n_reps: usize) -> Result<()> {
    if n_reps == 0 {
        Err(FabError::InvalidConfig("n_reps must be positive".into()))
    } else {
        Ok(())
    }
}

pub fn estimate_coverage<P: Procedure>(proc_: &P, theta: &P::Theta, n_reps: usize, seed: u64) -> Result<SimReport> {
    check_reps(n_reps)?;
    let values = replicate_values(n_reps, seed, |rng| {
        let d = proc_.sample(theta, rng);
        Ok(if proc_.covers(&d)? { 1.0 } else { 0.0 })
    })?;
    Ok(report(Quantity::Coverage, &values, seed, proc_.digest()))
}

pub fn estimate_risk<P: Procedure>(proc_: &P, theta: &P::Theta, n_reps: usize, seed: u64) -> Result<SimReport> {
    check_reps(n_reps)?;
    let values = replicate_values(n_reps, seed, |rng| proc_.measure(&proc_.sample(theta, rng)))?;
    Ok(report(Quantity::ExpectedMeasure, &values, seed, proc_.digest()))
}

/// Bayes risk: each replicate draws `θ` from `prior`, then `(X, Y)` at `θ`.
pub fn estimate_bayes_risk<P, G>(proc_: &P, prior: G, n_reps: usize, seed: u64) -> Result<SimReport>
where
    P: Procedure,
    P::Theta: Sized,
    G: Fn(&mut StreamRng) -> P::Theta + Sync,
{
    check_reps(n_reps)?;
    let values = replicate_values(n_reps, seed, |rng| {
        let theta = prior(rng);
        proc_.measure(&proc_.sample(&theta, rng))
    })?;
    Ok(report(Quantity::ExpectedMeasure, &values, seed, format!("{} prior-averaged", proc_.digest())))
}

fn std_normal_vec(rng: &mut StreamRng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(","))
}

// ---------------------------------------------------------------------------
// Procedures
// ---------------------------------------------------------------------------

/// Known-Σ FAB region for the normal model; `λ = ∞` gives the pivotal region.
#[derive(Debug, Clone)]
pub struct NormalFabProcedure {
    pub cfg: NormalFabConfig,
    /// Inversion settings for `p = 1`.
    pub opts: InversionOptions,
    /// Grid side for `p = 2` areas.
    pub grid_n: usize,
}

impl NormalFabProcedure {
    pub fn new(cfg: NormalFabConfig) -> Self {
        Self {
            cfg,
            opts: InversionOptions::default(),
            grid_n: 128,
        }
    }
}

impl Procedure for NormalFabProcedure {
    type Theta = DVector<f64>;
    type Draw = (DVector<f64>, DVector<f64>);

    fn sample(&self, theta: &DVector<f64>, rng: &mut StreamRng) -> Self::Draw {
        let p = self.cfg.p();
        let l = self.cfg.sigma_half();
        let x = theta + l * std_normal_vec(rng, p) * self.cfg.k().sqrt();
        let y = theta + l * std_normal_vec(rng, p);
        (x, y)
    }

    fn covers(&self, (x, y): &Self::Draw) -> Result<bool> {
        Ok(self.cfg.member_raw(x.as_slice(), y.as_slice()))
    }

    fn measure(&self, (x, _): &Self::Draw) -> Result<f64> {
        match self.cfg.p() {
            1 => Ok(fab_interval_1d_with(x[0], &self.cfg, &self.opts)?.total_measure),
            2 => Ok(fab_region_2d(x, &self.cfg, self.grid_n)?.area),
            p => Err(FabError::domain("estimate_risk", format!("region volume for p = {p} is not implemented"))),
        }
    }

    fn digest(&self) -> String {
        let c = &self.cfg;
        format!(
            "normal-fab p={} k={} sigma={} mu={} lambda={} alpha={}",
            c.p(),
            c.k(),
            fmt_vec(c.sigma().as_slice()),
            fmt_vec(c.mu().as_slice()),
            c.lambda(),
            c.alpha()
        )
    }
}

/// Estimated-variance FAB interval, `p = 1`. The model draws
/// `X ~ N(θ, kσ²)`, `νσ̂²/σ² ~ χ²_ν`, an independent `σ̃²` with `ν̃` df,
/// and `Y ~ N(θ, σ²)`.
#[derive(Debug, Clone)]
pub struct EstVarProcedure {
    pub params: EstVarParams,
    pub sigma2: f64,
    pub nu: u32,
    pub nu_tilde: u32,
    pub opts: InversionOptions,
}

impl EstVarProcedure {
    fn fab(&self, tilde2: f64) -> Result<EstVarFab> {
        EstVarFab::new(
            self.params.clone(),
            &DMatrix::from_element(1, 1, tilde2),
            self.nu,
            crate::specfun::MIN_SHIFTED_T_REPS,
            0,
        )
    }
}

impl Procedure for EstVarProcedure {
    type Theta = f64;
    /// `(x, σ̂², σ̃², y)`
    type Draw = (f64, f64, f64, f64);

    fn sample(&self, theta: &f64, rng: &mut StreamRng) -> Self::Draw {
        let s = self.sigma2.sqrt();
        let x = theta + s * self.params.k.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let chi = ChiSquared::new(self.nu as f64).expect("nu >= 1");
        let chi_t = ChiSquared::new(self.nu_tilde as f64).expect("nu_tilde >= 1");
        let hat2 = self.sigma2 * chi.sample(rng) / self.nu as f64;
        let tilde2 = self.sigma2 * chi_t.sample(rng) / self.nu_tilde as f64;
        let y = theta + s * rng.sample::<f64, _>(StandardNormal);
        (x, hat2, tilde2, y)
    }

    fn covers(&self, &(x, hat2, tilde2, y): &Self::Draw) -> Result<bool> {
        Ok(self.fab(tilde2)?.member_1d(x, hat2, y))
    }

    fn measure(&self, &(x, hat2, tilde2, _): &Self::Draw) -> Result<f64> {
        Ok(self.fab(tilde2)?.interval_1d(x, hat2, &self.opts)?.total_measure)
    }

    fn digest(&self) -> String {
        format!(
            "normal-estvar k={} sigma2={} mu={} lambda={} alpha={} nu={} nu_tilde={}",
            self.params.k,
            self.sigma2,
            fmt_vec(self.params.mu.as_slice()),
            self.params.lambda,
            self.params.alpha,
            self.nu,
            self.nu_tilde
        )
    }
}

/// Which regression interval to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressionKind {
    /// FAB with known σ.
    FabKnown,
    /// FAB with split residual variance estimates; `split_df` df go to `σ̃²`.
    FabT { split_df: usize },
    /// Posterior predictive interval with known σ.
    Bayes,
    /// `β̂ᵀv ± z σ√w₀`.
    Equivariant,
    /// `β̂ᵀv ± t_{n-p} σ̂√w₀` with the full residual variance.
    EquivariantT,
}

impl std::fmt::Display for RegressionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegressionKind::FabKnown => f.write_str("fab"),
            RegressionKind::FabT { split_df } => write!(f, "fab-t(split_df={split_df})"),
            RegressionKind::Bayes => f.write_str("bayes"),
            RegressionKind::Equivariant => f.write_str("equivariant"),
            RegressionKind::EquivariantT => f.write_str("equivariant-t"),
        }
    }
}

/// Regression intervals under `X ~ N(Uβ, σ²I)`, `Y ~ N(vᵀβ, σ²)`.
#[derive(Debug, Clone)]
pub struct RegressionProcedure {
    cfg: RegressionFabConfig,
    /// True noise variance used by the sampler.
    sigma2_true: f64,
    kind: RegressionKind,
    basis: Option<ResidualBasis>,
    pub opts: InversionOptions,
}

pub struct RegressionDraw {
    pub x: DVector<f64>,
    pub y: f64,
    pub est: Option<VarianceEstimates>,
}

impl RegressionProcedure {
    pub fn new(cfg: RegressionFabConfig, sigma2_true: f64, kind: RegressionKind) -> Result<Self> {
        let needs_basis = matches!(kind, RegressionKind::FabT { .. } | RegressionKind::EquivariantT);
        let needs_sigma = matches!(kind, RegressionKind::FabKnown | RegressionKind::Bayes | RegressionKind::Equivariant);
        if needs_sigma && cfg.sigma2().is_none() {
            return Err(FabError::InvalidConfig(format!("{kind} needs a known sigma2")));
        }
        let basis = if needs_basis { Some(ResidualBasis::new(cfg.u())?) } else { None };
        if let (RegressionKind::FabT { split_df }, Some(b)) = (kind, &basis) {
            if split_df < 1 || split_df + 1 > b.df() {
                return Err(FabError::InsufficientDf(format!("split_df = {split_df} with n - p = {}", b.df())));
            }
        }
        Ok(Self {
            cfg,
            sigma2_true,
            kind,
            basis,
            opts: InversionOptions::default(),
        })
    }

    pub fn config(&self) -> &RegressionFabConfig {
        &self.cfg
    }

    fn full_sigma_hat2(&self, x: &DVector<f64>) -> f64 {
        let b = self.basis.as_ref().expect("basis exists for t intervals");
        b.coordinates(x).norm_squared() / b.df() as f64
    }

    fn bounds(&self, d: &RegressionDraw) -> Result<(f64, f64)> {
        match self.kind {
            RegressionKind::Bayes => self.cfg.bayes_interval(&d.x),
            RegressionKind::Equivariant => self.cfg.equivariant_interval(&d.x),
            RegressionKind::EquivariantT => {
                let df = self.basis.as_ref().map(|b| b.df()).unwrap_or(0) as u32;
                self.cfg.equivariant_t_interval(&d.x, self.full_sigma_hat2(&d.x), df)
            }
            _ => unreachable!("FAB kinds are handled by membership"),
        }
    }
}

impl Procedure for RegressionProcedure {
    type Theta = DVector<f64>;
    type Draw = RegressionDraw;

    fn sample(&self, beta: &DVector<f64>, rng: &mut StreamRng) -> RegressionDraw {
        let s = self.sigma2_true.sqrt();
        let n = self.cfg.n();
        let x = self.cfg.u() * beta + std_normal_vec(rng, n) * s;
        let y = self.cfg.v().dot(beta) + s * rng.sample::<f64, _>(StandardNormal);
        let est = match (self.kind, &self.basis) {
            (RegressionKind::FabT { split_df }, Some(b)) => Some(b.split(&x, split_df).expect("split_df validated")),
            _ => None,
        };
        RegressionDraw { x, y, est }
    }

    fn covers(&self, d: &RegressionDraw) -> Result<bool> {
        match self.kind {
            RegressionKind::FabKnown => self.cfg.member(&d.x, d.y),
            RegressionKind::FabT { .. } => self.cfg.member_t(&d.x, d.y, d.est.as_ref().expect("estimates drawn")),
            _ => {
                let (lo, hi) = self.bounds(d)?;
                Ok(lo <= d.y && d.y <= hi)
            }
        }
    }

    fn measure(&self, d: &RegressionDraw) -> Result<f64> {
        match self.kind {
            RegressionKind::FabKnown => Ok(self.cfg.interval(&d.x, &self.opts)?.total_measure),
            RegressionKind::FabT { .. } => Ok(self
                .cfg
                .interval_t(&d.x, d.est.as_ref().expect("estimates drawn"), &self.opts)?
                .total_measure),
            _ => {
                let (lo, hi) = self.bounds(d)?;
                Ok(hi - lo)
            }
        }
    }

    fn digest(&self) -> String {
        format!(
            "regression kind={} n={} p={} v={} psi_diag={} sigma2={} alpha={}",
            self.kind,
            self.cfg.n(),
            self.cfg.p(),
            fmt_vec(self.cfg.v().as_slice()),
            fmt_vec(self.cfg.psi().diagonal().as_slice()),
            self.sigma2_true,
            self.cfg.alpha()
        )
    }
}

/// Conformal regions for `Y₁..Y_{n+1} ~ N(θ, σ²)` i.i.d.
#[derive(Debug, Clone)]
pub struct ConformalProcedure {
    pub n: usize,
    pub k_level: usize,
    pub prior: NormalPrior,
    pub score: ScoreKind,
    /// Sampling variance of the data.
    pub sigma2_true: f64,
    pub opts: InversionOptions,
}

impl ConformalProcedure {
    fn cfg(&self, data: &[f64]) -> Result<ConformalConfig> {
        ConformalConfig::new(data.to_vec(), self.prior, self.k_level)
    }

    fn scorer(&self) -> Box<dyn ConformityScore> {
        match self.score {
            ScoreKind::PostPred => Box::new(PosteriorPredictive(self.prior)),
            ScoreKind::NegAbsDev => Box::new(NegAbsDeviation),
        }
    }
}

impl Procedure for ConformalProcedure {
    type Theta = f64;
    /// `n` observations followed by the target.
    type Draw = Vec<f64>;

    fn sample(&self, theta: &f64, rng: &mut StreamRng) -> Vec<f64> {
        let s = self.sigma2_true.sqrt();
        (0..=self.n).map(|_| theta + s * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    fn covers(&self, d: &Vec<f64>) -> Result<bool> {
        Ok(self.cfg(&d[..self.n])?.member(self.scorer().as_ref(), d[self.n]))
    }

    fn measure(&self, d: &Vec<f64>) -> Result<f64> {
        Ok(conformal_region_with(&self.cfg(&d[..self.n])?, self.scorer().as_ref(), &self.opts)?.total_measure)
    }

    fn digest(&self) -> String {
        format!(
            "conformal score={:?} n={} k={} m={} lambda={} sigma2={} sigma2_true={}",
            self.score, self.n, self.k_level, self.prior.m, self.prior.lambda, self.prior.sigma2, self.sigma2_true
        )
    }
}

// ---------------------------------------------------------------------------
// Figure tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

/// Tidy table: one row per curve point.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

impl std::str::FromStr for Figure {
    type Err = FabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            _ => Err(FabError::InvalidConfig(format!("unknown figure {s:?}; expected fig1..fig4"))),
        }
    }
}

/// Overrides for the desk-scale defaults; `None` keeps the default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FigureOptions {
    /// Monte Carlo replicates per cell (fig3, fig4).
    pub reps: Option<usize>,
    /// Grid side for 2-D areas (fig2, fig3).
    pub grid_n: Option<usize>,
    /// Rows of U used as prediction points (fig4).
    pub v_rows: Option<usize>,
    /// Inversion grid points for 1-D intervals.
    pub resolution: Option<usize>,
    /// Prior variance grid (fig4).
    pub tau2: Option<Vec<f64>>,
    /// Larger defaults: all 100 rows and 1000 replicates for fig4.
    pub full_scale: bool,
}

pub const FIG_LAMBDAS: [f64; 5] = [0.1, 1.0, 10.0, 100.0, f64::INFINITY];
pub const FIG4_TAU2: [f64; 7] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];
/// Column correlation of the Figure 4 design.
pub const FIG4_RHO: f64 = 0.9;
pub const FIG4_CURVES: [&str; 3] = ["equivariant", "fab_tau", "fab_tau_quarter"];

pub fn figure_data(which: Figure, opts: &FigureOptions, seed: u64) -> Result<Table> {
    match which {
        Figure::Fig1 => fig1(opts),
        Figure::Fig2 => fig2(opts),
        Figure::Fig3 => fig3(opts, seed),
        Figure::Fig4 => fig4(opts, seed),
    }
}

fn alpha_fig() -> f64 {
    0.1
}

fn fig1(opts: &FigureOptions) -> Result<Table> {
    let inv = InversionOptions::with_resolution(opts.resolution.unwrap_or(2048));
    let mut rows = Vec::new();
    for &lambda in &FIG_LAMBDAS {
        let cfg = NormalFabConfig::scalar(1.0, 1.0, 0.0, PriorScale::from_f64(lambda), alpha_fig())?;
        for i in 0..=12 {
            let x = 0.5 * i as f64;
            let w = fab_interval_1d_with(x, &cfg, &inv)?.total_measure;
            rows.push(vec![Cell::Num(lambda), Cell::Num(x), Cell::Num(w)]);
        }
    }
    Ok(Table {
        columns: vec!["lambda", "x", "width"],
        rows,
    })
}

fn fig2(opts: &FigureOptions) -> Result<Table> {
    let grid_n = opts.grid_n.unwrap_or(256);
    let mut rows = Vec::new();
    for &lambda in &FIG_LAMBDAS {
        let cfg = NormalFabConfig::isotropic(2, 1.0, 1.0, DVector::zeros(2), PriorScale::from_f64(lambda), alpha_fig())?;
        for i in 0..=6 {
            let r = i as f64;
            let reg = fab_region_2d(&DVector::from_vec(vec![r, 0.0]), &cfg, grid_n)?;
            rows.push(vec![Cell::Num(lambda), Cell::Num(r), Cell::Num(reg.area), Cell::Num(reg.err_bound)]);
        }
    }
    Ok(Table {
        columns: vec!["lambda", "x_norm", "area", "err_bound"],
        rows,
    })
}

fn fig3(opts: &FigureOptions, seed: u64) -> Result<Table> {
    let mut rows = Vec::new();
    for p in [1usize, 2] {
        let reps = opts.reps.unwrap_or(if p == 1 { 400 } else { 40 });
        for (li, &lambda) in FIG_LAMBDAS.iter().enumerate() {
            let cfg = NormalFabConfig::isotropic(p, 1.0, 1.0, DVector::zeros(p), PriorScale::from_f64(lambda), alpha_fig())?;
            let mut pr = NormalFabProcedure::new(cfg);
            pr.opts = InversionOptions::with_resolution(opts.resolution.unwrap_or(512));
            pr.grid_n = opts.grid_n.unwrap_or(64);
            for t in 0..=6 {
                let mut theta = DVector::zeros(p);
                theta[0] = t as f64;
                let cell_seed = derive_seed(seed, (p * 1000 + li * 10 + t) as u64);
                let rep = estimate_risk(&pr, &theta, reps, cell_seed)?;
                rows.push(vec![
                    Cell::Num(p as f64),
                    Cell::Num(lambda),
                    Cell::Num(t as f64),
                    Cell::Num(rep.estimate),
                    Cell::Num(rep.std_error),
                ]);
            }
        }
    }
    Ok(Table {
        columns: vec!["p", "lambda", "theta", "expected_volume", "std_error"],
        rows,
    })
}

/// `n × p` design with exchangeable column correlation `rho`, each column
/// centred and scaled to unit sample variance.
pub fn correlated_design(n: usize, p: usize, rho: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = replicate_rng(seed, 0);
    let f: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut u = DMatrix::from_fn(n, p, |i, _| a * f[i] + b * rng.sample::<f64, _>(StandardNormal));
    for mut col in u.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n as f64 - 1.0)).sqrt();
        col /= sd;
    }
    u
}

/// Figure 4 design: 100 × 75, pairwise column correlation 0.9.
pub fn fig4_design(seed: u64) -> DMatrix<f64> {
    correlated_design(100, 75, FIG4_RHO, derive_seed(seed, 0xF164))
}

/// Average interval width per curve at one `τ²`, over `v_rows` prediction
/// rows and `reps` draws of `β ~ N(0, τ²I)`, `X = Uβ + ε`. All curves share
/// the draws. Returns `(mean, std_error)` per curve in [`FIG4_CURVES`] order.
pub fn fig4_point(
    u: &DMatrix<f64>,
    v_rows: usize,
    tau2: f64,
    reps: usize,
    seed: u64,
    inv: &InversionOptions,
) -> Result<[(f64, f64); 3]> {
    let (n, p) = u.shape();
    let basis = ResidualBasis::new(u)?;
    let split_df = default_split_df(n, p);
    let df_full = basis.df() as u32;
    let alpha = alpha_fig();
    let mk = |row: usize, prior_tau2: f64| {
        RegressionFabConfig::new(u.clone(), u.row(row).transpose(), None, ridge_prior(p, prior_tau2), alpha)
    };
    let rows: Vec<usize> = (0..v_rows).map(|i| i * n / v_rows).collect();
    let fab_tau: Vec<_> = rows.iter().map(|&r| mk(r, tau2)).collect::<Result<_>>()?;
    let fab_quarter: Vec<_> = rows.iter().map(|&r| mk(r, tau2 / 4.0)).collect::<Result<_>>()?;
    let t_full = t_quantile(1.0 - alpha / 2.0, df_full)?;

    let per_rep: Vec<[f64; 3]> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            let beta = std_normal_vec(&mut rng, p) * tau2.sqrt();
            let x = u * &beta + std_normal_vec(&mut rng, n);
            let est = basis.split(&x, split_df)?;
            let full2 = basis.coordinates(&x).norm_squared() / df_full as f64;
            let mut acc = [0.0; 3];
            for j in 0..rows.len() {
                acc[0] += 2.0 * t_full * (full2 * fab_tau[j].w0()).sqrt();
                acc[1] += fab_tau[j].interval_t(&x, &est, inv)?.total_measure;
                acc[2] += fab_quarter[j].interval_t(&x, &est, inv)?.total_measure;
            }
            Ok(acc.map(|a| a / rows.len() as f64))
        })
        .collect::<Result<_>>()?;
    let mut out = [(0.0, 0.0); 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let vals: Vec<f64> = per_rep.iter().map(|r| r[c]).collect();
        *slot = mean_and_se(&vals);
    }
    Ok(out)
}

fn fig4(opts: &FigureOptions, seed: u64) -> Result<Table> {
    let (def_rows, def_reps) = if opts.full_scale { (100, 1000) } else { (25, 200) };
    let v_rows = opts.v_rows.unwrap_or(def_rows).clamp(1, 100);
    let reps = opts.reps.unwrap_or(def_reps);
    let inv = InversionOptions::with_resolution(opts.resolution.unwrap_or(256));
    let u = fig4_design(seed);
    let grid = opts.tau2.clone().unwrap_or_else(|| FIG4_TAU2.to_vec());
    let mut rows = Vec::new();
    for (ti, &tau2) in grid.iter().enumerate() {
        let point = fig4_point(&u, v_rows, tau2, reps, derive_seed(seed, ti as u64 + 1), &inv)?;
        for (c, (m, se)) in point.iter().enumerate() {
            rows.push(vec![
                Cell::Num(tau2),
                Cell::Text(FIG4_CURVES[c].to_string()),
                Cell::Num(*m),
                Cell::Num(*se),
            ]);
        }
    }
    Ok(Table {
        columns: vec!["tau2", "curve", "avg_risk", "std_error"],
        rows,
    })
}

/// Two-sided normal quantile used by closed-form widths.
pub fn z_two_sided(alpha: f64) -> f64 {
    phi_inv(1.0 - alpha / 2.0)
}
