//! On-disk formats shared by the subcommands: the boundary CSV, the run
//! metadata sidecar, and numeric tables. Every float is written with 17
//! significant digits, so identical configs produce byte-identical files
//! and parsing recovers the exact doubles.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use amput::BoundaryCurve;
use serde::{Deserialize, Serialize};

use crate::ops::Failure;

/// Sidecar written next to every CSV a run produces. Consumers only need
/// `rho` and `theta`; the rest records how the file was made.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub mode: String,
    pub rho: f64,
    pub theta: f64,
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMeta {
    pub h: f64,
    pub dt: f64,
    pub t_max: f64,
    pub method: String,
    pub threshold: f64,
    /// Worst complementarity defect over the sampled time steps.
    pub complementarity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeMeta {
    pub steps: usize,
    pub t_maturity: f64,
    pub r: f64,
    pub sigma: f64,
    pub rule: String,
    pub price_at_root: f64,
}

pub fn write_str(path: &Path, body: &str) -> Result<(), Failure> {
    fs::write(path, body).map_err(|e| Failure::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Invalid(format!("serializing {}: {e}", path.display())))?;
    body.push('\n');
    write_str(path, &body)
}

pub fn render_table<I>(header: &str, rows: I) -> String
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut body = String::with_capacity(256);
    body.push_str(header);
    body.push('\n');
    for row in rows {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                body.push(',');
            }
            let _ = write!(body, "{v:.16e}");
        }
        body.push('\n');
    }
    body
}

pub fn boundary_csv(curve: &BoundaryCurve) -> String {
    render_table(
        "t,phi,varphi,dphi",
        (0..curve.len()).map(|i| vec![curve.t[i], curve.phi[i], curve.varphi[i], curve.dphi[i]]),
    )
}

/// Parse a boundary CSV back into a curve. The pre-projection diagnostic
/// column is not persisted, so `phi_raw` is set to the projected curve.
pub fn read_boundary_csv(
    path: &Path,
    params: amput::CanonicalParams,
) -> Result<BoundaryCurve, Failure> {
    let body = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let mut lines = body.lines();
    match lines.next() {
        Some("t,phi,varphi,dphi") => {}
        other => {
            return Err(Failure::Invalid(format!(
                "{}: expected header t,phi,varphi,dphi, got {:?}",
                path.display(),
                other.unwrap_or("")
            )))
        }
    }
    let (mut t, mut phi, mut varphi, mut dphi) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Failure::Invalid(format!(
                "{} line {}: expected 4 columns, got {}",
                path.display(),
                ln + 2,
                cols.len()
            )));
        }
        let parse = |k: usize| -> Result<f64, Failure> {
            cols[k].trim().parse::<f64>().map_err(|e| {
                Failure::Invalid(format!("{} line {}: {e}", path.display(), ln + 2))
            })
        };
        t.push(parse(0)?);
        phi.push(parse(1)?);
        varphi.push(parse(2)?);
        dphi.push(parse(3)?);
    }
    if t.len() < 2 {
        return Err(Failure::Invalid(format!(
            "{}: fewer than two boundary samples",
            path.display()
        )));
    }
    Ok(BoundaryCurve { t, phi: phi.clone(), phi_raw: phi, varphi, dphi, params })
}

/// Load the run.json sitting next to a boundary CSV.
pub fn read_sidecar(csv_path: &Path) -> Result<RunMeta, Failure> {
    let side = csv_path.parent().unwrap_or(Path::new(".")).join("run.json");
    let body = fs::read_to_string(&side).map_err(|e| Failure::io(&side, e))?;
    serde_json::from_str(&body).map_err(|e| Failure::Invalid(format!("{}: {e}", side.display())))
}
