//! Subcommand implementations and the failure-to-exit-code mapping.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use amput::asymptotics::{b1, beta1, first_theta_derivative_check, AsymptoticReport, Beta1Form};
use amput::balayage::{derivative_identity_residual, residual};
use amput::canonical::from_market;
use amput::lattice::{
    extract_lattice_boundary_with, lattice_boundary_to_canonical, CrossingRule, LatticeSpec,
};
use amput::obstacle::{extract_boundary, solve_with, GridSpec, LcpMethod};
use amput::quad::interp;
use amput::{CanonicalParams, MarketParams, TailModel};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Deserialize;

use crate::files::{self, GridMeta, LatticeMeta, RunMeta};

/// One variant per exit code class: 2 for bad parameters or config, 3 for
/// solver non-convergence, 4 for filesystem trouble.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    NoConvergence(String),
    Io(String),
}

impl Failure {
    pub fn io(path: &Path, e: std::io::Error) -> Failure {
        Failure::Io(format!("{}: {e}", path.display()))
    }

    pub fn code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::NoConvergence(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::NoConvergence(m) | Failure::Io(m) => m,
        }
    }
}

impl From<amput::Error> for Failure {
    fn from(e: amput::Error) -> Failure {
        match e {
            amput::Error::NoConvergence { .. } => Failure::NoConvergence(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

/// Flat JSON config; any field may be omitted and explicit flags win.
/// Unknown keys are rejected so a typo cannot silently fall back to a
/// default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<String>,
    pub rho: Option<f64>,
    pub theta: Option<f64>,
    pub r: Option<f64>,
    pub sigma: Option<f64>,
    pub h: Option<f64>,
    pub dt: Option<f64>,
    pub tmax: Option<f64>,
    pub threshold: Option<f64>,
    pub method: Option<String>,
    pub steps: Option<usize>,
    pub maturity: Option<f64>,
    pub rule: Option<String>,
    pub delta: Option<f64>,
    pub t_samples: Option<Vec<f64>>,
    pub s_values: Option<Vec<String>>,
    pub identity: Option<String>,
    pub boundary: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub format: Option<String>,
    pub sweep: Option<String>,
}

pub fn load_config(path: &Path) -> Result<FileConfig, Failure> {
    let body = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    serde_json::from_str(&body)
        .map_err(|e| Failure::Invalid(format!("config {}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy)]
pub enum Identity {
    Sweep,
    Derivative,
}

#[derive(Debug, Clone, Copy)]
pub enum Format {
    Json,
    Csv,
}

pub fn parse_method(name: Option<String>) -> Result<LcpMethod, Failure> {
    match name.as_deref() {
        None | Some("projected-sweep") | Some("projected_sweep") | Some("sweep") => {
            Ok(LcpMethod::ProjectedSweep)
        }
        Some("psor") => Ok(LcpMethod::Psor),
        Some(other) => Err(Failure::Invalid(format!(
            "unknown method {other:?}; use projected-sweep or psor"
        ))),
    }
}

pub fn parse_rule(name: Option<String>) -> Result<CrossingRule, Failure> {
    match name.as_deref() {
        None | Some("zero-crossing") | Some("zero_crossing") => Ok(CrossingRule::ZeroCrossing),
        Some("geometric-midpoint") | Some("geometric_midpoint") | Some("midpoint") => {
            Ok(CrossingRule::GeometricMidpoint)
        }
        Some(other) => Err(Failure::Invalid(format!(
            "unknown crossing rule {other:?}; use zero-crossing or geometric-midpoint"
        ))),
    }
}

pub fn parse_identity(name: Option<String>) -> Result<Identity, Failure> {
    match name.as_deref() {
        None | Some("sweep") => Ok(Identity::Sweep),
        Some("derivative") => Ok(Identity::Derivative),
        Some(other) => Err(Failure::Invalid(format!(
            "unknown identity {other:?}; use sweep or derivative"
        ))),
    }
}

pub fn parse_format(name: Option<String>) -> Result<Format, Failure> {
    match name.as_deref() {
        None | Some("json") => Ok(Format::Json),
        Some("csv") => Ok(Format::Csv),
        Some(other) => Err(Failure::Invalid(format!(
            "unknown format {other:?}; use json or csv"
        ))),
    }
}

pub fn parse_sweep(text: &str) -> Result<Vec<f64>, Failure> {
    let list = text.strip_prefix("rho=").ok_or_else(|| {
        Failure::Invalid(format!("sweep must look like rho=0,0.1,..., got {text:?}"))
    })?;
    let mut vals = Vec::new();
    for tok in list.split(',') {
        vals.push(tok.trim().parse::<f64>().map_err(|e| {
            Failure::Invalid(format!("sweep value {tok:?}: {e}"))
        })?);
    }
    Ok(vals)
}

/// Accepts plain reals and the forms a+bi / a-bi / bi.
pub fn parse_complex(text: &str) -> Result<Complex64, Failure> {
    let bad = || {
        Failure::Invalid(format!(
            "cannot parse complex number {text:?}; use forms like 4, 4+2i, 4-2i"
        ))
    };
    let t = text.trim();
    let Some(body) = t.strip_suffix('i') else {
        return t.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    // split at the last +/- that is not an exponent sign
    let bytes = body.as_bytes();
    let mut split = None;
    for k in (1..bytes.len()).rev() {
        if (bytes[k] == b'+' || bytes[k] == b'-') && bytes[k - 1] != b'e' && bytes[k - 1] != b'E' {
            split = Some(k);
            break;
        }
    }
    let (re_part, im_part) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("", body),
    };
    let re = if re_part.is_empty() { 0.0 } else { re_part.parse::<f64>().map_err(|_| bad())? };
    let im = match im_part {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => other.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(Complex64::new(re, im))
}

pub fn parse_s_values(vals: Option<Vec<String>>) -> Result<Vec<Complex64>, Failure> {
    match vals {
        None => Ok(vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(4.0, 0.0),
            Complex64::new(9.0, 0.0),
            Complex64::new(16.0, 0.0),
            Complex64::new(4.0, 2.0),
            Complex64::new(4.0, -2.0),
        ]),
        Some(v) => v.iter().map(|t| parse_complex(t)).collect(),
    }
}

/// Boundary-curve parameters: both overrides, or neither and the run.json
/// sidecar next to the CSV supplies them.
fn curve_params(path: &Path, rho: Option<f64>, theta: Option<f64>) -> Result<CanonicalParams, Failure> {
    let (rho, theta) = match (rho, theta) {
        (Some(r), Some(t)) => (r, t),
        (None, None) => {
            let meta = files::read_sidecar(path)?;
            (meta.rho, meta.theta)
        }
        _ => {
            return Err(Failure::Invalid(
                "give both --rho and --theta, or neither to use the run.json sidecar".into(),
            ))
        }
    };
    Ok(CanonicalParams::new(rho, theta)?)
}

fn method_name(m: LcpMethod) -> &'static str {
    match m {
        LcpMethod::Psor => "psor",
        LcpMethod::ProjectedSweep => "projected_sweep",
    }
}

fn rule_name(r: CrossingRule) -> &'static str {
    match r {
        CrossingRule::ZeroCrossing => "zero_crossing",
        CrossingRule::GeometricMidpoint => "geometric_midpoint",
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Invalid(format!("serialize: {e}")))?;
    body.push('\n');
    Ok(body)
}

fn json_num(v: f64) -> String {
    match serde_json::Number::from_f64(v) {
        Some(n) => n.to_string(),
        None => "null".into(),
    }
}

pub struct SolveCmd {
    pub rho: f64,
    pub theta: f64,
    pub h: f64,
    pub dt: f64,
    pub tmax: f64,
    pub threshold: f64,
    pub method: LcpMethod,
    pub out: PathBuf,
    pub sweep: Option<Vec<f64>>,
}

pub fn solve(cmd: SolveCmd) -> Result<(), Failure> {
    match cmd.sweep.clone() {
        None => solve_into(&cmd, cmd.rho, &cmd.out.clone()),
        Some(rhos) => {
            if rhos.is_empty() {
                return Err(Failure::Invalid("sweep list is empty".into()));
            }
            let pool = sweep_pool()?;
            pool.install(|| {
                rhos.par_iter()
                    .try_for_each(|&rho| solve_into(&cmd, rho, &cmd.out.join(format!("rho_{rho}"))))
            })
        }
    }
}

fn sweep_pool() -> Result<rayon::ThreadPool, Failure> {
    let threads = match std::env::var("AMPUT_THREADS") {
        Ok(v) => v.parse::<usize>().map_err(|_| {
            Failure::Invalid(format!("AMPUT_THREADS must be a nonnegative integer, got {v:?}"))
        })?,
        Err(_) => 0, // rayon picks the core count
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Invalid(format!("thread pool: {e}")))
}

fn solve_into(cmd: &SolveCmd, rho: f64, dir: &Path) -> Result<(), Failure> {
    let p = CanonicalParams::new(rho, cmd.theta)?;
    let g = GridSpec::standard(&p, cmd.h, cmd.dt, cmd.tmax)?;
    let sol = solve_with(&p, &g, cmd.method)?;
    let curve = extract_boundary(&sol, cmd.threshold)?;
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    let csv = dir.join("boundary.csv");
    files::write_str(&csv, &files::boundary_csv(&curve))?;
    let meta = RunMeta {
        mode: "solve".into(),
        rho,
        theta: cmd.theta,
        mu: curve.mu(),
        grid: Some(GridMeta {
            h: g.h(),
            dt: g.dt(),
            t_max: g.t_max,
            method: method_name(cmd.method).into(),
            threshold: cmd.threshold,
            complementarity: sol.complementarity,
        }),
        lattice: None,
    };
    files::write_json(&dir.join("run.json"), &meta)?;
    eprintln!("wrote {}", csv.display());
    Ok(())
}

pub struct BalayageCmd {
    pub boundary: PathBuf,
    pub rho: Option<f64>,
    pub theta: Option<f64>,
    pub s: Vec<Complex64>,
    pub identity: Identity,
    pub out: PathBuf,
}

pub fn balayage(cmd: BalayageCmd) -> Result<(), Failure> {
    let params = curve_params(&cmd.boundary, cmd.rho, cmd.theta)?;
    let curve = files::read_boundary_csv(&cmd.boundary, params)?;
    let mut rows = Vec::with_capacity(cmd.s.len());
    for &s in &cmd.s {
        let r = match cmd.identity {
            Identity::Sweep => residual(&curve, s)?,
            Identity::Derivative => derivative_identity_residual(&curve, s)?,
        };
        rows.push(vec![
            r.s.re,
            r.s.im,
            r.lhs.re,
            r.lhs.im,
            r.rhs.re,
            r.rhs.im,
            r.abs_err,
            r.rel_err,
            r.tail_estimate,
        ]);
    }
    fs::create_dir_all(&cmd.out).map_err(|e| Failure::io(&cmd.out, e))?;
    let path = cmd.out.join("residuals.csv");
    let table = files::render_table(
        "re_s,im_s,lhs_re,lhs_im,rhs_re,rhs_im,abs_err,rel_err,tail_estimate",
        rows,
    );
    files::write_str(&path, &table)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub struct AsymptoticsCmd {
    pub boundary: PathBuf,
    pub rho: Option<f64>,
    pub theta: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

pub fn asymptotics(cmd: AsymptoticsCmd) -> Result<(), Failure> {
    let params = curve_params(&cmd.boundary, cmd.rho, cmd.theta)?;
    let curve = files::read_boundary_csv(&cmd.boundary, params)?;
    let tail = TailModel::fit(&curve)?;
    let report = AsymptoticReport::compute(&curve, &tail);
    let body = match cmd.format {
        Format::Json => to_json(&report)?,
        Format::Csv => asymptotics_csv(&report),
    };
    print!("{body}");
    if let Some(dir) = &cmd.out {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        let name = match cmd.format {
            Format::Json => "asymptotics.json",
            Format::Csv => "asymptotics.csv",
        };
        files::write_str(&dir.join(name), &body)?;
    }
    Ok(())
}

fn asymptotics_csv(r: &AsymptoticReport) -> String {
    let mut s = String::from("name,value\n");
    let mut row = |name: &str, v: f64| {
        let _ = writeln!(s, "{name},{v:.16e}");
    };
    row("mu", r.mu);
    row("eta", r.eta);
    row("moment_v1", r.moment_v1);
    row("B1", r.b1);
    row("lambda0", r.lambda0);
    row("beta1", r.beta1);
    row("beta1_intro", r.beta1_intro);
    row("beta1_parts", r.beta1_parts);
    if let Some(tf) = r.tail_fit {
        row("tail_fit", tf);
    }
    row("consistency", r.consistency);
    s
}

pub struct LatticeCmd {
    pub steps: usize,
    pub maturity: f64,
    pub r: f64,
    pub sigma: f64,
    pub rule: CrossingRule,
    pub boundary: Option<PathBuf>,
    pub rho: Option<f64>,
    pub theta: Option<f64>,
    pub out: PathBuf,
}

pub fn lattice(cmd: LatticeCmd) -> Result<(), Failure> {
    let market = MarketParams::new(cmd.r, cmd.sigma)?;
    let spec = LatticeSpec::new(cmd.steps, cmd.maturity, market)?;
    let lb = extract_lattice_boundary_with(&spec, cmd.rule)?;
    let canon = lattice_boundary_to_canonical(&lb, &market)?;
    fs::create_dir_all(&cmd.out).map_err(|e| Failure::io(&cmd.out, e))?;

    let nominal = files::render_table(
        "t,s_star",
        lb.t.iter().zip(&lb.s_star).map(|(&t, &s)| vec![t, s]),
    );
    files::write_str(&cmd.out.join("lattice_boundary.csv"), &nominal)?;
    files::write_str(&cmd.out.join("lattice_canonical.csv"), &files::boundary_csv(&canon))?;

    let meta = RunMeta {
        mode: "lattice".into(),
        rho: canon.params.rho,
        theta: canon.params.theta,
        mu: canon.mu(),
        grid: None,
        lattice: Some(LatticeMeta {
            steps: cmd.steps,
            t_maturity: cmd.maturity,
            r: cmd.r,
            sigma: cmd.sigma,
            rule: rule_name(cmd.rule).into(),
            price_at_root: lb.price_at_root,
        }),
    };
    files::write_json(&cmd.out.join("run.json"), &meta)?;

    if let Some(bpath) = &cmd.boundary {
        let params = curve_params(bpath, cmd.rho, cmd.theta)?;
        let pde = files::read_boundary_csv(bpath, params)?;
        let tmax = pde.t_max();
        let rows = canon.t.iter().zip(&canon.phi).filter(|&(&t, _)| t <= tmax).map(
            |(&t, &phi_lat)| {
                let phi_pde = interp(&pde.t, &pde.phi, t);
                vec![t, phi_lat, phi_pde, phi_lat - phi_pde]
            },
        );
        let table = files::render_table("t,phi_lattice,phi_pde,gap", rows);
        files::write_str(&cmd.out.join("comparison.csv"), &table)?;
    }
    eprintln!("wrote lattice tables to {}", cmd.out.display());
    Ok(())
}

pub struct PerturbCmd {
    pub rho: f64,
    pub delta: f64,
    pub h: f64,
    pub dt: f64,
    pub tmax: f64,
    pub t_samples: Vec<f64>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

pub fn perturb(cmd: PerturbCmd) -> Result<(), Failure> {
    let report =
        first_theta_derivative_check(cmd.rho, cmd.delta, cmd.h, cmd.dt, cmd.tmax, &cmd.t_samples)?;
    let body = match cmd.format {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let rows = (0..report.t_samples.len()).map(|i| {
                vec![
                    report.t_samples[i],
                    report.varphi_delta[i],
                    report.varphi_half[i],
                    report.onset_ratio[i],
                    report.second_derivative_estimate[i],
                    report.closed_form[i],
                ]
            });
            files::render_table(
                "t,varphi_delta,varphi_half,onset_ratio,second_derivative_estimate,closed_form",
                rows,
            )
        }
    };
    print!("{body}");
    if let Some(dir) = &cmd.out {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        let name = match cmd.format {
            Format::Json => "perturb.json",
            Format::Csv => "perturb.csv",
        };
        files::write_str(&dir.join(name), &body)?;
    }
    Ok(())
}

pub struct TransformCmd {
    pub r: f64,
    pub sigma: f64,
}

pub fn transform(cmd: TransformCmd) -> Result<(), Failure> {
    let p = from_market(&MarketParams::new(cmd.r, cmd.sigma)?)?;
    let alpha = p.alpha.expect("from_market always sets alpha");
    println!("{{\"alpha\": {}, \"rho\": {}}}", json_num(alpha), json_num(p.rho));
    Ok(())
}

pub struct PlotdataCmd {
    pub boundary: PathBuf,
    pub rho: Option<f64>,
    pub theta: Option<f64>,
    pub out: PathBuf,
}

pub fn plotdata(cmd: PlotdataCmd) -> Result<(), Failure> {
    let params = curve_params(&cmd.boundary, cmd.rho, cmd.theta)?;
    let curve = files::read_boundary_csv(&cmd.boundary, params)?;
    let tail = TailModel::fit(&curve)?;
    let beta = beta1(&curve, &tail, Beta1Form::Lambda0);
    let lemma_c = b1(&curve.params);
    let m = curve.mu();
    let rows = (0..curve.len()).map(|i| {
        let t = curve.t[i];
        vec![t, curve.phi[i], m, overlay(m, lemma_c, t), overlay(m, beta, t)]
    });
    let table = files::render_table("t,phi,mu_line,lemma_lower_bound,expansion_n0", rows);
    fs::create_dir_all(&cmd.out).map_err(|e| Failure::io(&cmd.out, e))?;
    let path = cmd.out.join("plotdata.csv");
    files::write_str(&path, &table)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// mu - c t^{-3/2} e^{-t}, floored at zero: the asymptotic form diverges as
/// t -> 0 while the boundary never leaves [0, mu), so zero is the tightest
/// safe floor there.
fn overlay(m: f64, c: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (m - c * t.powf(-1.5) * (-t).exp()).max(0.0)
}
