//! Command-line front end: solves the canonical obstacle problem, checks
//! the Laplace-domain identities against a solved boundary, reports the
//! asymptotic constants, and cross-checks the binomial tree. All output is
//! plain CSV/JSON meant for scripts; nothing is interactive.

mod files;
mod ops;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use ops::{Failure, FileConfig};

#[derive(Parser)]
#[command(
    name = "amput",
    version,
    about = "American-put free boundary in canonical heat coordinates"
)]
struct Cli {
    /// Flat JSON config file; explicit flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the obstacle problem; writes boundary.csv and run.json.
    Solve(SolveArgs),
    /// Residual table of the sweep identity for a solved boundary.
    Balayage(BalayageArgs),
    /// Tail fit and asymptotic constants for a solved boundary.
    Asymptotics(AsymptoticsArgs),
    /// Binomial-tree price and exercise boundary, with the canonical map.
    Lattice(LatticeArgs),
    /// Quadratic-onset check of the boundary level in theta.
    Perturb(PerturbArgs),
    /// Print the canonical-frame parameters for market inputs.
    Transform(TransformArgs),
    /// Plot-ready table: boundary, asymptote, and tail-law overlays.
    Plotdata(PlotdataArgs),
}

#[derive(Args, Default)]
struct SolveArgs {
    /// Drift parameter in (-1, 1) [default: 0].
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    /// Source strength, >= 0; 0 gives the flat zero boundary [default: 1].
    #[arg(long)]
    theta: Option<f64>,
    /// Space step [default: 5e-3].
    #[arg(long)]
    h: Option<f64>,
    /// Time step [default: 1e-3].
    #[arg(long)]
    dt: Option<f64>,
    /// Final time [default: 8].
    #[arg(long)]
    tmax: Option<f64>,
    /// Active-set threshold for boundary extraction [default: 1e-9].
    #[arg(long)]
    threshold: Option<f64>,
    /// LCP solver: projected-sweep or psor [default: projected-sweep].
    #[arg(long)]
    method: Option<String>,
    /// Output directory [default: .].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Fan out over rho values, e.g. --sweep rho=0,0.1,0.2; each run lands
    /// in OUT/rho_<value>/. AMPUT_THREADS caps the concurrency.
    #[arg(long, value_name = "rho=LIST")]
    sweep: Option<String>,
}

#[derive(Args, Default)]
struct BalayageArgs {
    /// Boundary CSV produced by solve.
    #[arg(long, value_name = "FILE")]
    boundary: Option<PathBuf>,
    /// Override rho (give with --theta; otherwise run.json is used).
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    /// Override theta (give with --rho; otherwise run.json is used).
    #[arg(long)]
    theta: Option<f64>,
    /// Laplace abscissas, e.g. --s 2,4,9,4+2i [default: 2,4,9,16,4+2i,4-2i].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    s: Vec<String>,
    /// Which identity to evaluate: sweep or derivative [default: sweep].
    #[arg(long)]
    identity: Option<String>,
    /// Output directory [default: .].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct AsymptoticsArgs {
    /// Boundary CSV produced by solve.
    #[arg(long, value_name = "FILE")]
    boundary: Option<PathBuf>,
    /// Override rho (give with --theta; otherwise run.json is used).
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    /// Override theta (give with --rho; otherwise run.json is used).
    #[arg(long)]
    theta: Option<f64>,
    /// Also write the report into DIR (stdout is always printed).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Report format: json or csv [default: json].
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Default)]
struct LatticeArgs {
    /// Tree depth [default: 4000].
    #[arg(long)]
    steps: Option<usize>,
    /// Maturity in time units [default: 3].
    #[arg(long)]
    maturity: Option<f64>,
    /// Interest rate [default: 1].
    #[arg(long)]
    r: Option<f64>,
    /// Volatility [default: sqrt 2, the zero-drift canonical case].
    #[arg(long)]
    sigma: Option<f64>,
    /// Boundary localization: zero-crossing or geometric-midpoint
    /// [default: zero-crossing].
    #[arg(long)]
    rule: Option<String>,
    /// Solved boundary CSV; adds comparison.csv against it.
    #[arg(long, value_name = "FILE")]
    boundary: Option<PathBuf>,
    /// Override rho of the comparison boundary (give with --theta).
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    /// Override theta of the comparison boundary (give with --rho).
    #[arg(long)]
    theta: Option<f64>,
    /// Output directory [default: .].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct PerturbArgs {
    /// Drift parameter [default: 0].
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    /// Perturbation size; solves run at theta = delta and delta/2
    /// [default: 0.05].
    #[arg(long)]
    delta: Option<f64>,
    /// Space step [default: 5e-3].
    #[arg(long)]
    h: Option<f64>,
    /// Time step [default: 1e-3].
    #[arg(long)]
    dt: Option<f64>,
    /// Final time [default: 2.5].
    #[arg(long)]
    tmax: Option<f64>,
    /// Comparison times [default: 0.5,1,2].
    #[arg(long, value_delimiter = ',')]
    t_samples: Vec<f64>,
    /// Also write the report into DIR (stdout is always printed).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Report format: json or csv [default: json].
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Default)]
struct TransformArgs {
    /// Interest rate.
    #[arg(long)]
    r: Option<f64>,
    /// Volatility.
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Args, Default)]
struct PlotdataArgs {
    /// Boundary CSV produced by solve.
    #[arg(long, value_name = "FILE")]
    boundary: Option<PathBuf>,
    /// Override rho (give with --theta; otherwise run.json is used).
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    /// Override theta (give with --rho; otherwise run.json is used).
    #[arg(long)]
    theta: Option<f64>,
    /// Output directory [default: .].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(f) = run(cli) {
        eprintln!("error: {}", f.message());
        std::process::exit(f.code());
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(path) => ops::load_config(path)?,
        None => FileConfig::default(),
    };
    let cmd = match cli.cmd {
        Some(cmd) => cmd,
        None => mode_command(&cfg)?,
    };
    match cmd {
        Cmd::Solve(a) => ops::solve(resolve_solve(a, &cfg)?),
        Cmd::Balayage(a) => ops::balayage(resolve_balayage(a, &cfg)?),
        Cmd::Asymptotics(a) => ops::asymptotics(resolve_asymptotics(a, &cfg)?),
        Cmd::Lattice(a) => ops::lattice(resolve_lattice(a, &cfg)?),
        Cmd::Perturb(a) => ops::perturb(resolve_perturb(a, &cfg)?),
        Cmd::Transform(a) => ops::transform(resolve_transform(a, &cfg)?),
        Cmd::Plotdata(a) => ops::plotdata(resolve_plotdata(a, &cfg)?),
    }
}

/// Dispatch from the config's mode field when no subcommand is given.
fn mode_command(cfg: &FileConfig) -> Result<Cmd, Failure> {
    match cfg.mode.as_deref() {
        Some("solve") => Ok(Cmd::Solve(SolveArgs::default())),
        Some("balayage") => Ok(Cmd::Balayage(BalayageArgs::default())),
        Some("asymptotics") => Ok(Cmd::Asymptotics(AsymptoticsArgs::default())),
        Some("lattice") => Ok(Cmd::Lattice(LatticeArgs::default())),
        Some("perturb") => Ok(Cmd::Perturb(PerturbArgs::default())),
        Some("transform") => Ok(Cmd::Transform(TransformArgs::default())),
        Some("plotdata") => Ok(Cmd::Plotdata(PlotdataArgs::default())),
        Some(other) => Err(Failure::Invalid(format!("unknown mode {other:?} in config"))),
        None => Err(Failure::Invalid(
            "no subcommand given and the config has no mode; see --help".into(),
        )),
    }
}

fn out_dir(flag: Option<PathBuf>, cfg: &FileConfig) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."))
}

fn resolve_solve(a: SolveArgs, cfg: &FileConfig) -> Result<ops::SolveCmd, Failure> {
    let sweep = match a.sweep.or_else(|| cfg.sweep.clone()) {
        Some(text) => Some(ops::parse_sweep(&text)?),
        None => None,
    };
    Ok(ops::SolveCmd {
        rho: a.rho.or(cfg.rho).unwrap_or(0.0),
        theta: a.theta.or(cfg.theta).unwrap_or(1.0),
        h: a.h.or(cfg.h).unwrap_or(5e-3),
        dt: a.dt.or(cfg.dt).unwrap_or(1e-3),
        tmax: a.tmax.or(cfg.tmax).unwrap_or(8.0),
        threshold: a
            .threshold
            .or(cfg.threshold)
            .unwrap_or(amput::obstacle::DEFAULT_ACTIVE_THRESHOLD),
        method: ops::parse_method(a.method.or_else(|| cfg.method.clone()))?,
        out: out_dir(a.out, cfg),
        sweep,
    })
}

fn resolve_balayage(a: BalayageArgs, cfg: &FileConfig) -> Result<ops::BalayageCmd, Failure> {
    let s_text = if a.s.is_empty() { cfg.s_values.clone() } else { Some(a.s) };
    Ok(ops::BalayageCmd {
        boundary: a
            .boundary
            .or_else(|| cfg.boundary.clone())
            .ok_or_else(|| Failure::Invalid("balayage needs --boundary".into()))?,
        rho: a.rho.or(cfg.rho),
        theta: a.theta.or(cfg.theta),
        s: ops::parse_s_values(s_text)?,
        identity: ops::parse_identity(a.identity.or_else(|| cfg.identity.clone()))?,
        out: out_dir(a.out, cfg),
    })
}

fn resolve_asymptotics(
    a: AsymptoticsArgs,
    cfg: &FileConfig,
) -> Result<ops::AsymptoticsCmd, Failure> {
    Ok(ops::AsymptoticsCmd {
        boundary: a
            .boundary
            .or_else(|| cfg.boundary.clone())
            .ok_or_else(|| Failure::Invalid("asymptotics needs --boundary".into()))?,
        rho: a.rho.or(cfg.rho),
        theta: a.theta.or(cfg.theta),
        out: a.out.or_else(|| cfg.output_dir.clone()),
        format: ops::parse_format(a.format.or_else(|| cfg.format.clone()))?,
    })
}

fn resolve_lattice(a: LatticeArgs, cfg: &FileConfig) -> Result<ops::LatticeCmd, Failure> {
    Ok(ops::LatticeCmd {
        steps: a.steps.or(cfg.steps).unwrap_or(4000),
        maturity: a.maturity.or(cfg.maturity).unwrap_or(3.0),
        r: a.r.or(cfg.r).unwrap_or(1.0),
        sigma: a.sigma.or(cfg.sigma).unwrap_or(std::f64::consts::SQRT_2),
        rule: ops::parse_rule(a.rule.or_else(|| cfg.rule.clone()))?,
        boundary: a.boundary.or_else(|| cfg.boundary.clone()),
        rho: a.rho.or(cfg.rho),
        theta: a.theta.or(cfg.theta),
        out: out_dir(a.out, cfg),
    })
}

fn resolve_perturb(a: PerturbArgs, cfg: &FileConfig) -> Result<ops::PerturbCmd, Failure> {
    let t_samples = if a.t_samples.is_empty() {
        cfg.t_samples.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0])
    } else {
        a.t_samples
    };
    Ok(ops::PerturbCmd {
        rho: a.rho.or(cfg.rho).unwrap_or(0.0),
        delta: a.delta.or(cfg.delta).unwrap_or(0.05),
        h: a.h.or(cfg.h).unwrap_or(5e-3),
        dt: a.dt.or(cfg.dt).unwrap_or(1e-3),
        tmax: a.tmax.or(cfg.tmax).unwrap_or(2.5),
        t_samples,
        out: a.out.or_else(|| cfg.output_dir.clone()),
        format: ops::parse_format(a.format.or_else(|| cfg.format.clone()))?,
    })
}

fn resolve_transform(a: TransformArgs, cfg: &FileConfig) -> Result<ops::TransformCmd, Failure> {
    Ok(ops::TransformCmd {
        r: a.r.or(cfg.r).ok_or_else(|| Failure::Invalid("transform needs --r".into()))?,
        sigma: a
            .sigma
            .or(cfg.sigma)
            .ok_or_else(|| Failure::Invalid("transform needs --sigma".into()))?,
    })
}

fn resolve_plotdata(a: PlotdataArgs, cfg: &FileConfig) -> Result<ops::PlotdataCmd, Failure> {
    Ok(ops::PlotdataCmd {
        boundary: a
            .boundary
            .or_else(|| cfg.boundary.clone())
            .ok_or_else(|| Failure::Invalid("plotdata needs --boundary".into()))?,
        rho: a.rho.or(cfg.rho),
        theta: a.theta.or(cfg.theta),
        out: out_dir(a.out, cfg),
    })
}
