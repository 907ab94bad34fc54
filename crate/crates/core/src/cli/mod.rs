//! The `vw` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 failed `--check`.

pub mod config;
pub mod table1;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fredholm::bm_closed_form;
use crate::montecarlo::mc_integrated_laplace;
use crate::pricing::{
    bond_price, defaultable_bond_price, inverse_power_moment, power_swap_strike, variance_swap_strike, Backend,
    ShortRateSpec, SwapSpec, DEFAULT_QUAD_CELLS,
};
use config::{
    parse_terms, BackendKind, MatrixSpec, ModelSpec, RunConfig, DEFAULT_MC_STEPS, DEFAULT_PATHS, DEFAULT_SEED,
};
use table1::{compute_table1, fmt17, write_csv, McBudget, GRID_SIZES, HURST};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "vw",
    version,
    about = "Laplace transforms of integrated Volterra Wishart processes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Conditional Laplace transform E[exp(-∫_t^T tr(X^T w X) ds)].
    Laplace(LaplaceArgs),
    /// Convergence table of the discretized fBM transform, as CSV.
    Table1(Table1Args),
    /// Monte Carlo estimate of the integrated transform.
    Mc(McArgs),
    /// Bond and swap prices.
    Price {
        #[command(subcommand)]
        product: PriceCommand,
    },
}

#[derive(Subcommand, Debug)]
pub enum PriceCommand {
    /// Zero-coupon bond under r = ξ + tr(X^T Q X).
    Bond(BondArgs),
    /// Defaultable bond with intensity ξ̃ + tr(X^T Q̃ X).
    Dbond(BondArgs),
    /// Variance swap fair strike.
    Vswap(SwapArgs),
    /// q-power variance swap fair strike, 0 < q < 1.
    Pswap(SwapArgs),
    /// E[(∫ α^T X X^T α + ε)^{-q}].
    Invmoment(SwapArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovKind {
    Fbm,
    Bm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelKind {
    Rl,
    Constant,
    Zero,
    Expsum,
    Bridge,
}

/// Model, horizon and resolution flags shared by all commands.
#[derive(Args, Debug, Default, Clone)]
pub struct ModelArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Process given by its covariance.
    #[arg(long, value_enum, conflicts_with = "kernel")]
    pub cov: Option<CovKind>,
    /// Process given by its Volterra kernel.
    #[arg(long, value_enum)]
    pub kernel: Option<KernelKind>,
    #[arg(long)]
    pub hurst: Option<f64>,
    /// Constant kernel value (scalar or JSON rows).
    #[arg(long)]
    pub sigma: Option<String>,
    /// Exponential-sum terms "c@x,c@x,...".
    #[arg(long)]
    pub terms: Option<String>,
    /// Bridge end time.
    #[arg(long)]
    pub t1: Option<f64>,
    /// Dimension d for scalar-specified constant, zero and bm models.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Mean curve g0 (constant; scalar or JSON rows).
    #[arg(long)]
    pub g0: Option<String>,
    /// Number of columns m of the matrix process.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long = "t")]
    pub t: Option<f64>,
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Grid cells for the Fredholm backend.
    #[arg(long)]
    pub n: Option<usize>,
    /// Riccati resolution per unit time (lift) or time steps (mc).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Machine-readable output.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug, Clone)]
pub struct LaplaceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Weight matrix w (scalar means w I).
    #[arg(long)]
    pub w: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct Table1Args {
    /// Output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated Hurst indices.
    #[arg(long, value_delimiter = ',')]
    pub hurst: Vec<f64>,
    /// Comma-separated grid sizes.
    #[arg(long = "ns", value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// Replace the tabulated references by Monte Carlo estimates with this
    /// many paths (adds a stderr column).
    #[arg(long)]
    pub mc_paths: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MC_STEPS)]
    pub mc_steps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug, Clone)]
pub struct McArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub w: Option<String>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reference value, or "bm" for the Brownian closed form.
    #[arg(long)]
    pub reference: Option<String>,
    /// Exit with code 4 unless |mean - reference| <= 3 stderr.
    #[arg(long)]
    pub check: bool,
}

#[derive(Args, Debug, Clone)]
pub struct BondArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "Q")]
    pub q_matrix: Option<String>,
    /// Constant input curve ξ.
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long = "spread-Q")]
    pub spread_q: Option<String>,
    #[arg(long = "spread-xi")]
    pub spread_xi: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct SwapArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated basket weights (default all ones).
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Initial quadrature panels.
    #[arg(long)]
    pub cells: Option<usize>,
}

fn opt_matrix(text: &Option<String>) -> Result<Option<MatrixSpec>> {
    text.as_deref().map(MatrixSpec::parse).transpose()
}

impl ModelArgs {
    fn model_spec(&self) -> Result<Option<ModelSpec>> {
        let need_hurst = || self.hurst.ok_or_else(|| Error::Config("--hurst is required".into()));
        Ok(match (self.cov, self.kernel) {
            (Some(CovKind::Fbm), _) => Some(ModelSpec::Fbm { hurst: need_hurst()? }),
            (Some(CovKind::Bm), _) => Some(ModelSpec::Bm { dim: self.dim }),
            (None, Some(KernelKind::Rl)) => Some(ModelSpec::Rl { hurst: need_hurst()? }),
            (None, Some(KernelKind::Constant)) => Some(ModelSpec::Constant {
                sigma: opt_matrix(&self.sigma)?.unwrap_or(MatrixSpec::Scalar(1.0)),
                dim: self.dim,
            }),
            (None, Some(KernelKind::Zero)) => Some(ModelSpec::Zero { dim: self.dim }),
            (None, Some(KernelKind::Expsum)) => {
                let terms = self
                    .terms
                    .as_deref()
                    .ok_or_else(|| Error::Config("--terms is required for expsum".into()))?;
                Some(ModelSpec::Expsum {
                    terms: parse_terms(terms)?,
                })
            }
            (None, Some(KernelKind::Bridge)) => Some(ModelSpec::Bridge {
                t1: self
                    .t1
                    .ok_or_else(|| Error::Config("--t1 is required for bridge".into()))?,
            }),
            (None, None) => None,
        })
    }

    /// Config file (if any) overlaid with the flags.
    fn run_config(&self, extra: RunConfig) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let flags = RunConfig {
            model: self.model_spec()?,
            g0: opt_matrix(&self.g0)?,
            m: self.m,
            t: self.t,
            horizon: self.horizon,
            backend: self.backend,
            n: self.n,
            steps: self.steps,
            ..extra
        };
        let cfg = base.merge(flags);
        cfg.validate_times()?;
        Ok(cfg)
    }
}

/// Text or JSON key/value report.
struct Report {
    fields: Vec<(String, Value)>,
}

impl Report {
    fn new() -> Self {
        Report { fields: Vec::new() }
    }

    fn add(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.fields.push((key.to_string(), value.into()));
        self
    }

    fn print(&self, json_mode: bool, out: &mut impl Write) -> std::io::Result<()> {
        if json_mode {
            let map: serde_json::Map<String, Value> = self.fields.iter().cloned().collect();
            writeln!(out, "{}", Value::Object(map))
        } else {
            for (k, v) in &self.fields {
                let text = match v {
                    Value::Number(n) if n.is_f64() => fmt17(n.as_f64().unwrap_or(f64::NAN)),
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                writeln!(out, "{k}: {text}")?;
            }
            Ok(())
        }
    }
}

fn backend_fields(report: &mut Report, backend: Backend, horizon: f64) {
    report.add("backend", backend.name());
    match backend {
        Backend::Fredholm { n } => report.add("n", n),
        Backend::Lift { steps_per_unit } => {
            report.add("steps", ((steps_per_unit as f64 * horizon).ceil() as usize).max(1))
        }
    };
}

fn cmd_laplace(args: &LaplaceArgs, out: &mut impl Write) -> Result<i32> {
    let cfg = args.model.run_config(RunConfig {
        w: opt_matrix(&args.w)?,
        ..Default::default()
    })?;
    let model = cfg.build_model()?;
    let w = cfg.weight(cfg.w.as_ref(), "w", model.dim())?;
    let backend = cfg.backend(&model);
    let v = model.log_laplace(&w, cfg.t(), cfg.horizon(), backend)?;
    let mut r = Report::new();
    r.add("value", v.value())
        .add("log_value", v.log_value)
        .add("log_det_term", v.log_det_term)
        .add("quad_term", v.quad_term);
    backend_fields(&mut r, backend, cfg.horizon());
    r.print(args.model.json, out)?;
    Ok(EXIT_OK)
}

fn cmd_table1(args: &Table1Args, out: &mut impl Write) -> Result<i32> {
    let hursts = if args.hurst.is_empty() {
        HURST.to_vec()
    } else {
        args.hurst.clone()
    };
    let sizes = if args.sizes.is_empty() {
        GRID_SIZES.to_vec()
    } else {
        args.sizes.clone()
    };
    if hursts.iter().any(|h| !(*h > 0.0 && *h < 1.0)) || sizes.contains(&0) {
        return Err(Error::Config(
            "Hurst indices must lie in (0,1) and grid sizes be >= 1".into(),
        ));
    }
    let budget = args.mc_paths.map(|paths| McBudget {
        paths,
        steps: args.mc_steps,
        seed: args.seed,
    });
    let rows = compute_table1(&hursts, &sizes, budget)?;
    let mut buf = Vec::new();
    if args.json {
        writeln!(
            buf,
            "{}",
            serde_json::to_string(&rows).map_err(|e| Error::Config(e.to_string()))?
        )?;
    } else {
        write_csv(&rows, &mut buf)?;
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, &buf)?;
            writeln!(out, "wrote {} rows to {}", rows.len(), path.display())?;
        }
        None => out.write_all(&buf)?,
    }
    Ok(EXIT_OK)
}

fn cmd_mc(args: &McArgs, out: &mut impl Write) -> Result<i32> {
    let cfg = args.model.run_config(RunConfig {
        w: opt_matrix(&args.w)?,
        paths: args.paths,
        seed: args.seed,
        ..Default::default()
    })?;
    let model = cfg.build_model()?;
    let w = cfg.weight(cfg.w.as_ref(), "w", model.dim())?;
    let (t, horizon) = (cfg.t(), cfg.horizon());
    let steps = cfg.steps.unwrap_or(DEFAULT_MC_STEPS);
    let paths = cfg.paths.unwrap_or(DEFAULT_PATHS);
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    if steps == 0 || paths == 0 {
        return Err(Error::Config("steps and paths must be >= 1".into()));
    }
    let reference = match args.reference.as_deref() {
        Some("bm") => {
            if w.nrows() != 1 || t != 0.0 {
                return Err(Error::Config("the bm reference needs a scalar w and t = 0".into()));
            }
            Some(bm_closed_form(w[(0, 0)] * horizon * horizon)?)
        }
        Some(text) => Some(
            text.parse::<f64>()
                .map_err(|e| Error::Config(format!("bad reference {text:?}: {e}")))?,
        ),
        None => cfg.reference,
    };
    if args.check && reference.is_none() {
        return Err(Error::Config("--check needs --reference".into()));
    }
    let cov = model.conditional_covariance(t)?;
    let grid: Vec<f64> = (1..=steps)
        .map(|i| {
            if i == steps {
                horizon
            } else {
                t + (horizon - t) * i as f64 / steps as f64
            }
        })
        .collect();
    let est = mc_integrated_laplace(&cov, model.mean_curve(), &grid, &w, paths, seed)?;
    let mut r = Report::new();
    r.add("mean", est.mean)
        .add("stderr", est.stderr)
        .add("ci90_lo", est.ci90.0)
        .add("ci90_hi", est.ci90.1)
        .add("paths", est.paths)
        .add("steps", est.steps)
        .add("seed", est.seed);
    let mut code = EXIT_OK;
    if let Some(reference) = reference {
        let pass = est.contains(reference, 3.0);
        r.add("reference", reference)
            .add("verdict", if pass { "PASS" } else { "FAIL" });
        if args.check && !pass {
            code = EXIT_CHECK;
        }
    }
    r.print(args.model.json, out)?;
    Ok(code)
}

fn cmd_bond(args: &BondArgs, defaultable: bool, out: &mut impl Write) -> Result<i32> {
    let cfg = args.model.run_config(RunConfig {
        q_matrix: opt_matrix(&args.q_matrix)?,
        xi: args.xi,
        spread_q: opt_matrix(&args.spread_q)?,
        spread_xi: args.spread_xi,
        ..Default::default()
    })?;
    let model = cfg.build_model()?;
    let d = model.dim();
    let q = cfg.weight(cfg.q_matrix.as_ref(), "Q", d)?;
    let mut spec = ShortRateSpec::flat(q, cfg.xi.unwrap_or(0.0));
    if defaultable {
        let sq = cfg.weight(cfg.spread_q.as_ref().or(Some(&MatrixSpec::Scalar(0.0))), "spread-Q", d)?;
        let sxi = cfg.spread_xi.unwrap_or(0.0);
        if sxi < 0.0 {
            return Err(Error::Config("--spread-xi must be >= 0".into()));
        }
        spec = spec.with_spread(sq, move |_| sxi);
    }
    let backend = cfg.backend(&model);
    let (t, horizon) = (cfg.t(), cfg.horizon());
    let price = if defaultable {
        defaultable_bond_price(&spec, &model, t, horizon, backend)?
    } else {
        bond_price(&spec, &model, t, horizon, backend)?
    };
    let mut r = Report::new();
    r.add("value", price).add("t", t).add("T", horizon);
    backend_fields(&mut r, backend, horizon);
    r.print(args.model.json, out)?;
    Ok(EXIT_OK)
}

enum SwapKind {
    Variance,
    Power,
    InverseMoment,
}

fn cmd_swap(args: &SwapArgs, kind: SwapKind, out: &mut impl Write) -> Result<i32> {
    let cfg = args.model.run_config(RunConfig {
        alpha: (!args.alpha.is_empty()).then(|| args.alpha.clone()),
        q: args.q,
        eps: args.eps,
        cells: args.cells,
        ..Default::default()
    })?;
    let model = cfg.build_model()?;
    let alpha = cfg.alpha(model.dim())?;
    let horizon = cfg.horizon();
    if cfg.t() != 0.0 {
        return Err(Error::Config("swap strikes are computed at t = 0".into()));
    }
    let cells = cfg.cells.unwrap_or(DEFAULT_QUAD_CELLS);
    let backend = cfg.backend(&model);
    let config_err = |e: Error| Error::Config(e.to_string());
    let mut r = Report::new();
    match kind {
        SwapKind::Variance => {
            let spec = SwapSpec::new(alpha, 1.0, horizon).map_err(config_err)?;
            r.add("value", variance_swap_strike(&spec, &model)?);
        }
        SwapKind::Power => {
            let q = cfg.q.ok_or_else(|| Error::Config("--q is required".into()))?;
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::Config(format!("--q must lie in (0,1), got {q}")));
            }
            let spec = SwapSpec::new(alpha, q, horizon).map_err(config_err)?;
            let f1 = variance_swap_strike(&SwapSpec { q: 1.0, ..spec.clone() }, &model)?;
            r.add("value", power_swap_strike(&spec, &model, backend, cells)?)
                .add("q", q)
                .add("variance_strike", f1)
                .add("cells", cells);
            backend_fields(&mut r, backend, horizon);
        }
        SwapKind::InverseMoment => {
            let q = cfg.q.ok_or_else(|| Error::Config("--q is required".into()))?;
            let eps = cfg.eps.ok_or_else(|| Error::Config("--eps is required".into()))?;
            if !(q > 0.0 && eps > 0.0) {
                return Err(Error::Config("--q and --eps must be positive".into()));
            }
            let spec = SwapSpec::new(alpha, 1.0, horizon).map_err(config_err)?;
            r.add("value", inverse_power_moment(q, eps, &spec, &model, backend, cells)?)
                .add("q", q)
                .add("eps", eps)
                .add("cells", cells);
            backend_fields(&mut r, backend, horizon);
        }
    }
    r.add("T", horizon);
    r.print(args.model.json, out)?;
    Ok(EXIT_OK)
}

/// Runs a parsed command, writing results to `out`.
pub fn run(cli: &Cli, out: &mut impl Write) -> Result<i32> {
    match &cli.command {
        Command::Laplace(a) => cmd_laplace(a, out),
        Command::Table1(a) => cmd_table1(a, out),
        Command::Mc(a) => cmd_mc(a, out),
        Command::Price { product } => match product {
            PriceCommand::Bond(a) => cmd_bond(a, false, out),
            PriceCommand::Dbond(a) => cmd_bond(a, true, out),
            PriceCommand::Vswap(a) => cmd_swap(a, SwapKind::Variance, out),
            PriceCommand::Pswap(a) => cmd_swap(a, SwapKind::Power, out),
            PriceCommand::Invmoment(a) => cmd_swap(a, SwapKind::InverseMoment, out),
        },
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::Dimension(_) | Error::Io(_) => EXIT_CONFIG,
        Error::NotPsd(_)
        | Error::Quadrature { .. }
        | Error::Divergent(_)
        | Error::BlowUp { .. }
        | Error::Singular(_) => EXIT_NUMERIC,
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(text) = std::env::var("VW_THREADS") {
        let n: usize = text
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("VW_THREADS must be a positive integer, got {text:?}")))?;
        if n == 0 {
            return Err(Error::Config("VW_THREADS must be >= 1".into()));
        }
        // a second initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match configure_threads().and_then(|_| run(&cli, &mut out)) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}
