//! Parabolic obstacle problem for the gap U = envelope - reward on a
//! truncated grid, and free-boundary extraction.
//!
//! The solver works in the time-factored variable u = e^{-t} U, which turns
//! the moving exponential source into the fixed data
//! f0(x) = theta (1 + rho) delta_0(x) - (1 - rho^2) e^{rho x} 1_{x > 0},
//! so each implicit Euler step is a tridiagonal linear complementarity
//! problem with constant coefficients:
//! [(1 + dt + 2 lam) I - lam shift] u = u_prev + dt f0,  u >= 0,
//! with lam = dt / h^2 and Dirichlet zeros at both truncation ends.

use crate::canonical::{mu, reward_canonical, shift_point, CanonicalParams, MarketParams};
use crate::error::{Error, Result};
use crate::quad::{interp, pav};
use serde::{Deserialize, Serialize};

/// Activity threshold on the factored variable u = e^{-t} U. A fixed u-scale
/// cut keeps the "active node" notion uniform in time; a cut on U itself
/// would drift with the e^t factor.
pub const DEFAULT_ACTIVE_THRESHOLD: f64 = 1e-9;

pub const DEFAULT_PSOR_TOL: f64 = 1e-10;
pub const DEFAULT_PSOR_OMEGA: f64 = 1.5;
pub const DEFAULT_PSOR_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LcpMethod {
    /// Projected successive over-relaxation, the reference iteration.
    Psor,
    /// Projected Thomas elimination sweeping right to left. Exact for this
    /// problem because the constrained set is a right half-line at every
    /// time level; validated against PSOR in the test suite.
    ProjectedSweep,
}

fn default_stride() -> usize {
    1
}

/// Space-time grid and LCP solver controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_max: f64,
    pub nt: usize,
    pub x_left: f64,
    pub x_right: f64,
    pub nx: usize,
    pub psor_tol: f64,
    pub psor_omega: f64,
    pub psor_max_iter: usize,
    /// Full solution rows are kept every this many time steps.
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

impl GridSpec {
    /// Standard truncation for the given parameters and resolution:
    /// x_left = -max(8, 6 sqrt(t_max)) (heat-kernel decay into x < 0) and
    /// x_right = mu + 1 (the gap vanishes beyond the boundary), both rounded
    /// outward to whole cells so a node lands exactly on x = 0. The
    /// relaxation factor is set near the SOR optimum for the step matrix.
    pub fn standard(p: &CanonicalParams, h: f64, dt: f64, t_max: f64) -> Result<Self> {
        if !(h > 0.0 && dt > 0.0 && t_max > 0.0) {
            return Err(Error::InvalidParams(format!(
                "grid scales must be positive: h = {h}, dt = {dt}, t_max = {t_max}"
            )));
        }
        let m = mu(p);
        let xl_cells = (f64::max(8.0, 6.0 * t_max.sqrt()) / h).ceil() as usize;
        let xr_cells = ((m + 1.0) / h).ceil() as usize;
        let nt = (t_max / dt).round() as usize;
        if nt < 2 {
            return Err(Error::InvalidParams("need at least two time steps".into()));
        }
        let nx = xl_cells + xr_cells + 1;
        let ni = nx - 2;
        let lam = dt / (h * h);
        let diag = 1.0 + dt + 2.0 * lam;
        let jacobi = 2.0 * lam / diag * (std::f64::consts::PI / (ni as f64 + 1.0)).cos();
        let omega = 2.0 / (1.0 + (1.0 - jacobi * jacobi).sqrt());
        let g = GridSpec {
            t_max,
            nt,
            x_left: -(xl_cells as f64) * h,
            x_right: xr_cells as f64 * h,
            nx,
            psor_tol: DEFAULT_PSOR_TOL,
            psor_omega: omega,
            psor_max_iter: DEFAULT_PSOR_MAX_ITER,
            snapshot_stride: (nt / 400).max(1),
        };
        g.validate(p)?;
        Ok(g)
    }

    pub fn h(&self) -> f64 {
        (self.x_right - self.x_left) / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.nt as f64
    }

    /// Full-grid index of the node sitting on x = 0.
    pub fn zero_node(&self) -> usize {
        (-self.x_left / self.h()).round() as usize
    }

    /// Node abscissa, exactly zero at the zero node.
    pub fn x(&self, j: usize) -> f64 {
        (j as isize - self.zero_node() as isize) as f64 * self.h()
    }

    pub fn validate(&self, p: &CanonicalParams) -> Result<()> {
        if !(self.t_max > 0.0) || self.nt < 2 || self.nx < 3 {
            return Err(Error::InvalidParams("degenerate grid extents".into()));
        }
        if !(self.x_left < 0.0 && self.x_right > 0.0) {
            return Err(Error::InvalidParams("grid must straddle x = 0".into()));
        }
        let h = self.h();
        let zero = -self.x_left / h;
        if (zero - zero.round()).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "no grid node on x = 0: x_left / h = {zero} is not an integer"
            )));
        }
        let m = mu(p);
        if !(m < self.x_right - 0.5) {
            return Err(Error::InvalidParams(format!(
                "right truncation too close to the asymptote: mu = {m}, x_right = {}",
                self.x_right
            )));
        }
        if !(self.psor_tol > 0.0) || !(self.psor_omega > 0.0 && self.psor_omega < 2.0) {
            return Err(Error::InvalidParams("PSOR controls out of range".into()));
        }
        if self.psor_max_iter == 0 || self.snapshot_stride == 0 {
            return Err(Error::InvalidParams("iteration controls must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct PsorStats {
    pub total_iterations: u64,
    pub max_step_iterations: usize,
}

/// Grid solution of the complementarity problem. Full rows of U = e^t u are
/// retained at the snapshot stride; the narrow window around the last active
/// node is retained at every step since boundary extraction needs it.
#[derive(Debug, Clone)]
pub struct ObstacleSolution {
    pub grid: GridSpec,
    pub params: CanonicalParams,
    pub method: LcpMethod,
    snapshot_steps: Vec<usize>,
    snapshots: Vec<Vec<f64>>,
    /// Full-grid index of the rightmost active node per step, -1 if none.
    kstar: Vec<i64>,
    /// u at full-grid nodes kstar - 4 ..= kstar + 1 per step.
    window: Vec<[f64; 6]>,
    /// theta (1 + rho) e^t at snapshot times: the Dirac line-mass record.
    pub source_mass: Vec<f64>,
    /// Worst |min(u, step residual)| over the sampled steps.
    pub complementarity: f64,
    pub stats: PsorStats,
}

fn psor_step(
    b: &[f64],
    u: &mut [f64],
    lam: f64,
    diag: f64,
    omega: f64,
    stop_tol: f64,
    max_iter: usize,
) -> Option<usize> {
    let ni = b.len();
    for it in 1..=max_iter {
        let mut delta = 0.0_f64;
        for j in 0..ni {
            let mut acc = b[j];
            if j > 0 {
                acc += lam * u[j - 1];
            }
            if j + 1 < ni {
                acc += lam * u[j + 1];
            }
            let unew = (u[j] + omega * (acc / diag - u[j])).max(0.0);
            delta = delta.max((unew - u[j]).abs());
            u[j] = unew;
        }
        if delta < stop_tol {
            return Some(it);
        }
    }
    None
}

/// Forward elimination factors for the constant-coefficient step matrix.
fn sweep_factors(ni: usize, lam: f64, diag: f64) -> Vec<f64> {
    let mut d = vec![0.0; ni];
    d[0] = diag;
    for j in 1..ni {
        d[j] = diag - lam * lam / d[j - 1];
    }
    d
}

/// Projected Thomas solve: plain forward elimination, then a right-to-left
/// back substitution clamped at zero. Exact when the active set {u = 0} is a
/// right half-line, which holds here at every level.
fn sweep_step(b: &[f64], u: &mut [f64], lam: f64, d: &[f64], work: &mut [f64]) {
    let ni = b.len();
    work[0] = b[0];
    for j in 1..ni {
        work[j] = b[j] + lam * work[j - 1] / d[j - 1];
    }
    u[ni - 1] = (work[ni - 1] / d[ni - 1]).max(0.0);
    for j in (0..ni - 1).rev() {
        u[j] = ((work[j] + lam * u[j + 1]) / d[j]).max(0.0);
    }
}

/// Solve with the default PSOR iteration.
pub fn solve(p: &CanonicalParams, g: &GridSpec) -> Result<ObstacleSolution> {
    solve_with(p, g, LcpMethod::Psor)
}

pub fn solve_with(p: &CanonicalParams, g: &GridSpec, method: LcpMethod) -> Result<ObstacleSolution> {
    g.validate(p)?;
    let (nx, nt) = (g.nx, g.nt);
    let ni = nx - 2;
    let h = g.h();
    let dt = g.dt();
    let lam = dt / (h * h);
    let diag = 1.0 + dt + 2.0 * lam;
    let zero = g.zero_node();
    let rho = p.rho;

    // Cell-averaged source on interior nodes. The Dirac mass lumps to 1/h at
    // the zero node; the bulk term is averaged over each cell so the first
    // half-cell to the right of the origin lands on the zero node too.
    let c = 1.0 - rho * rho;
    let mut f = vec![0.0_f64; ni];
    for i in 0..ni {
        let j = i + 1;
        if j == zero {
            f[i] += p.theta * (1.0 + rho) / h;
            f[i] -= if rho == 0.0 { 0.5 * c } else { c * (rho * h / 2.0).exp_m1() / (rho * h) };
        } else if j > zero {
            let x = g.x(j);
            f[i] -= if rho == 0.0 {
                c
            } else {
                c * (rho * x).exp() * 2.0 * (rho * h / 2.0).sinh() / (rho * h)
            };
        }
    }

    let stop_tol = g.psor_tol * 1e-2;
    let d = sweep_factors(ni, lam, diag);
    let mut u = vec![0.0_f64; ni];
    let mut b = vec![0.0_f64; ni];
    let mut work = vec![0.0_f64; ni];

    let mut kstar = vec![-1_i64; nt + 1];
    let mut window = vec![[0.0_f64; 6]; nt + 1];
    let mut snapshot_steps = Vec::new();
    let mut snapshots = Vec::new();
    let mut source_mass = Vec::new();
    let mut stats = PsorStats::default();
    let mut complementarity = 0.0_f64;

    let push_snapshot = |n: usize,
                             u: &[f64],
                             snapshot_steps: &mut Vec<usize>,
                             snapshots: &mut Vec<Vec<f64>>,
                             source_mass: &mut Vec<f64>| {
        let t = n as f64 * dt;
        let et = t.exp();
        let mut row = vec![0.0_f64; nx];
        for i in 0..ni {
            row[i + 1] = et * u[i];
        }
        snapshot_steps.push(n);
        snapshots.push(row);
        source_mass.push(p.theta * (1.0 + rho) * et);
    };

    push_snapshot(0, &u, &mut snapshot_steps, &mut snapshots, &mut source_mass);

    for n in 1..=nt {
        for i in 0..ni {
            b[i] = u[i] + dt * f[i];
        }
        match method {
            LcpMethod::Psor => {
                let iters = psor_step(&b, &mut u, lam, diag, g.psor_omega, stop_tol, g.psor_max_iter)
                    .ok_or(Error::NoConvergence { step: n, iters: g.psor_max_iter })?;
                stats.total_iterations += iters as u64;
                stats.max_step_iterations = stats.max_step_iterations.max(iters);
            }
            LcpMethod::ProjectedSweep => sweep_step(&b, &mut u, lam, &d, &mut work),
        }

        let mut k = -1_i64;
        for i in (0..ni).rev() {
            if u[i] > DEFAULT_ACTIVE_THRESHOLD {
                k = i as i64;
                break;
            }
        }
        // store the full-grid index
        kstar[n] = if k >= 0 { k + 1 } else { -1 };
        if k >= 0 {
            let mut win = [0.0_f64; 6];
            for (w, slot) in win.iter_mut().enumerate() {
                let idx = k - 4 + w as i64;
                if idx >= 0 && (idx as usize) < ni {
                    *slot = u[idx as usize];
                }
            }
            window[n] = win;
        }

        let sampled = n % g.snapshot_stride == 0 || n == nt;
        if sampled {
            if n % g.snapshot_stride == 0 {
                push_snapshot(n, &u, &mut snapshot_steps, &mut snapshots, &mut source_mass);
            }
            // complementarity audit: u >= 0, residual >= 0, u * residual ~ 0
            for i in 0..ni {
                let mut r = diag * u[i] - b[i];
                if i > 0 {
                    r -= lam * u[i - 1];
                }
                if i + 1 < ni {
                    r -= lam * u[i + 1];
                }
                complementarity = complementarity.max(u[i].min(r).abs());
            }
        }
    }
    if *snapshot_steps.last().expect("at least the initial row") != nt {
        push_snapshot(nt, &u, &mut snapshot_steps, &mut snapshots, &mut source_mass);
    }

    Ok(ObstacleSolution {
        grid: *g,
        params: *p,
        method,
        snapshot_steps,
        snapshots,
        kstar,
        window,
        source_mass,
        complementarity,
        stats,
    })
}

impl ObstacleSolution {
    pub fn snapshot_times(&self) -> Vec<f64> {
        let dt = self.grid.dt();
        self.snapshot_steps.iter().map(|&n| n as f64 * dt).collect()
    }

    /// Stored row of U at the i-th snapshot, full grid width.
    pub fn snapshot(&self, i: usize) -> &[f64] {
        &self.snapshots[i]
    }

    pub fn snapshot_count(&self) -> usize {
        self.snapshots.len()
    }

    /// U(t, x) by linear interpolation in t between snapshot rows and in x
    /// along each row.
    pub fn u_at(&self, t: f64, x: f64) -> Result<f64> {
        let g = &self.grid;
        if !(0.0..=g.t_max + 1e-12).contains(&t) || x < g.x_left - 1e-12 || x > g.x_right + 1e-12 {
            return Err(Error::OutOfDomain { t, x });
        }
        let dt = g.dt();
        let step = t / dt;
        let row_val = |si: usize| -> f64 {
            let row = &self.snapshots[si];
            let h = g.h();
            let pos = (x - g.x_left) / h;
            let j = (pos.floor() as usize).min(g.nx - 2);
            let frac = (pos - j as f64).clamp(0.0, 1.0);
            row[j] * (1.0 - frac) + row[j + 1] * frac
        };
        // locate bracketing snapshots
        let hi = self.snapshot_steps.partition_point(|&s| (s as f64) < step);
        if hi == 0 {
            return Ok(row_val(0));
        }
        if hi >= self.snapshot_steps.len() {
            return Ok(row_val(self.snapshot_steps.len() - 1));
        }
        let (s0, s1) = (self.snapshot_steps[hi - 1], self.snapshot_steps[hi]);
        let w = (step - s0 as f64) / (s1 - s0) as f64;
        Ok(row_val(hi - 1) * (1.0 - w) + row_val(hi) * w)
    }

    /// Envelope value U + reward at a canonical-frame point.
    pub fn envelope_value(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.u_at(t, x)? + reward_canonical(t, x, &self.params))
    }

    /// Envelope in the market frame: the scaled point (alpha^2 t, alpha x)
    /// is pulled back through the affine drift shift, and the caloric
    /// prefactor of the shift is divided out.
    pub fn envelope_value_market(&self, t: f64, x: f64, m: &MarketParams) -> Result<f64> {
        let p = crate::canonical::from_market(m)?;
        if (p.rho - self.params.rho).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!(
                "market params imply rho = {}, solution has rho = {}",
                p.rho, self.params.rho
            )));
        }
        let alpha = p.alpha.expect("from_market always sets alpha");
        let (tc, xc) = (alpha * alpha * t, alpha * x);
        let y = shift_point(tc, xc, self.params.rho);
        let vhat_shifted = self.envelope_value(tc, y)?;
        Ok((-self.params.rho * self.params.rho * tc - self.params.rho * y).exp() * vhat_shifted)
    }
}

/// Sampled free boundary phi(t) with deviation varphi = mu - phi.
#[derive(Debug, Clone)]
pub struct BoundaryCurve {
    pub t: Vec<f64>,
    pub phi: Vec<f64>,
    /// Extraction output before the isotonic projection, kept for
    /// diagnostics.
    pub phi_raw: Vec<f64>,
    pub varphi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub params: CanonicalParams,
}

/// Midpoint Stieltjes increments of the deviation: (t_mid, varphi_mid,
/// varphi_i - varphi_{i+1}). The third entry is nonnegative after the
/// isotonic projection.
pub struct Increments {
    pub tm: Vec<f64>,
    pub vm: Vec<f64>,
    pub dv: Vec<f64>,
}

impl BoundaryCurve {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        *self.t.last().expect("curve is nonempty")
    }

    pub fn mu(&self) -> f64 {
        mu(&self.params)
    }

    pub fn increments(&self) -> Increments {
        let n = self.t.len() - 1;
        let mut tm = Vec::with_capacity(n);
        let mut vm = Vec::with_capacity(n);
        let mut dv = Vec::with_capacity(n);
        for i in 0..n {
            tm.push(0.5 * (self.t[i] + self.t[i + 1]));
            vm.push(0.5 * (self.varphi[i] + self.varphi[i + 1]));
            dv.push(self.varphi[i] - self.varphi[i + 1]);
        }
        Increments { tm, vm, dv }
    }

    /// Convexity diagnostic: the largest positive second difference of phi
    /// after resampling at the given coarse spacing. Concave curves give
    /// values at grid-noise scale.
    pub fn max_convexity(&self, spacing: f64) -> f64 {
        let n = ((self.t_max() / spacing).floor() as usize).max(2);
        let samples: Vec<f64> = (0..=n)
            .map(|k| interp(&self.t, &self.phi, k as f64 * spacing))
            .collect();
        let mut worst = 0.0_f64;
        for w in samples.windows(3) {
            worst = worst.max(w[2] - 2.0 * w[1] + w[0]);
        }
        worst
    }
}

/// Sub-grid refinement of one time level. `win` holds u at full-grid nodes
/// kstar - 4 ..= kstar + 1 and `ws` indexes the last node above threshold
/// (so 4 when the capture threshold is used unchanged).
///
/// Primary rule: the parabola through the last three active nodes, whose
/// vertex absorbs the constant near-contact offset of the discrete LCP.
/// Fallback: linear fit of sqrt(u) on the last two active nodes (smooth fit
/// makes u vanish quadratically); final fallback: half a cell past the last
/// active node.
fn refine_level(win: &[f64; 6], ws: usize, xk: f64, h: f64) -> f64 {
    let u0 = win[ws];
    let u1 = if ws >= 1 { win[ws - 1] } else { 0.0 };
    let u2 = if ws >= 2 { win[ws - 2] } else { 0.0 };
    if u2 > u1 && u1 > u0 && u0 > 0.0 {
        let curv = (u2 - 2.0 * u1 + u0) / (h * h);
        let slope = (u0 - u2) / (2.0 * h);
        if curv > 0.0 {
            let d = (xk - h) - slope / curv;
            return d.clamp(xk - 0.5 * h, xk + 1.5 * h);
        }
    }
    if u1 > u0 && u0 > 0.0 {
        let (s0, s1) = (u0.sqrt(), u1.sqrt());
        let d = xk + s0 * h / (s1 - s0);
        return d.clamp(xk, xk + h);
    }
    xk + 0.5 * h
}

pub fn extract_boundary(sol: &ObstacleSolution, threshold: f64) -> Result<BoundaryCurve> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParams(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let g = &sol.grid;
    let (h, dt) = (g.h(), g.dt());
    let zero = g.zero_node() as i64;
    let nt = g.nt;
    let mut phi_raw = vec![0.0_f64; nt + 1];
    for n in 1..=nt {
        let k = sol.kstar[n];
        let win = &sol.window[n];
        // rightmost window slot above the requested threshold
        let ws = (0..=4usize).rev().find(|&w| k >= 0 && win[w] > threshold);
        let Some(ws) = ws else {
            if sol.params.theta > 0.0 {
                return Err(Error::DegenerateLevel { t: n as f64 * dt });
            }
            continue;
        };
        let kfull = k - (4 - ws as i64);
        let xk = (kfull - zero) as f64 * h;
        phi_raw[n] = refine_level(win, ws, xk, h);
    }
    let phi = pav(&phi_raw);
    let m = mu(&sol.params);
    let t: Vec<f64> = (0..=nt).map(|n| n as f64 * dt).collect();
    let varphi: Vec<f64> = phi.iter().map(|&p| m - p).collect();
    let dphi = derivative_estimates(&t, &phi);
    Ok(BoundaryCurve { t, phi, phi_raw, varphi, dphi, params: sol.params })
}

fn derivative_estimates(t: &[f64], phi: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut d = vec![0.0_f64; n];
    if n < 2 {
        return d;
    }
    d[0] = (phi[1] - phi[0]) / (t[1] - t[0]);
    d[n - 1] = (phi[n - 1] - phi[n - 2]) / (t[n - 1] - t[n - 2]);
    for i in 1..n - 1 {
        d[i] = (phi[i + 1] - phi[i - 1]) / (t[i + 1] - t[i - 1]);
    }
    d
}

/// Cancel the leading O(dt) error by combining solves at dt and 2 dt on the
/// same spatial grid: varphi_extrapolated = 2 varphi_fine - varphi_coarse.
pub fn richardson_in_dt(fine: &BoundaryCurve, coarse: &BoundaryCurve) -> Result<BoundaryCurve> {
    let rf = fine.t[1] - fine.t[0];
    let rc = coarse.t[1] - coarse.t[0];
    if (rc - 2.0 * rf).abs() > 1e-9 * rc {
        return Err(Error::InvalidParams(format!(
            "time steps must differ by a factor 2, got {rf} and {rc}"
        )));
    }
    let m = fine.mu();
    let vr: Vec<f64> = fine
        .t
        .iter()
        .zip(&fine.varphi)
        .map(|(&ti, &vf)| 2.0 * vf - interp(&coarse.t, &coarse.varphi, ti))
        .collect();
    let raw: Vec<f64> = vr.iter().map(|&v| m - v).collect();
    let phi = pav(&raw);
    let varphi: Vec<f64> = phi.iter().map(|&p| m - p).collect();
    let dphi = derivative_estimates(&fine.t, &phi);
    Ok(BoundaryCurve {
        t: fine.t.clone(),
        phi,
        phi_raw: raw,
        varphi,
        dphi,
        params: fine.params,
    })
}

#[derive(Debug, Clone)]
pub struct SmoothFitReport {
    pub t: Vec<f64>,
    /// One-sided estimate of dU/dx at the boundary from the last two active
    /// nodes; O(h) for a converged solve by smooth fit.
    pub residual: Vec<f64>,
}

impl SmoothFitReport {
    pub fn mean_abs(&self, lo: f64, hi: f64) -> f64 {
        let vals: Vec<f64> = self
            .t
            .iter()
            .zip(&self.residual)
            .filter(|(&ti, _)| ti >= lo && ti <= hi)
            .map(|(_, &r)| r.abs())
            .collect();
        if vals.is_empty() {
            return 0.0;
        }
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

pub fn smooth_fit_residual(sol: &ObstacleSolution, curve: &BoundaryCurve) -> SmoothFitReport {
    let g = &sol.grid;
    let (h, dt) = (g.h(), g.dt());
    let nt = g.nt;
    let mut residual = vec![0.0_f64; nt + 1];
    for n in 1..=nt {
        if sol.kstar[n] >= 0 {
            let win = &sol.window[n];
            if win[3] > 0.0 && win[4] > 0.0 {
                residual[n] = (n as f64 * dt).exp() * (win[4] - win[3]) / h;
            }
        }
    }
    SmoothFitReport { t: curve.t.clone(), residual }
}

/// Central-difference dU/dx from snapshot rows, for interior diagnostics.
pub fn x_derivative_at(sol: &ObstacleSolution, t: f64, x: f64) -> Result<f64> {
    let h = sol.grid.h();
    Ok((sol.u_at(t, x + h)? - sol.u_at(t, x - h)?) / (2.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::CanonicalParams;
    use approx::assert_abs_diff_eq;

    const LN_2: f64 = std::f64::consts::LN_2;

    fn p01() -> CanonicalParams {
        CanonicalParams::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn standard_grid_places_a_node_on_zero() {
        let g = GridSpec::standard(&p01(), 0.02, 0.004, 1.0).unwrap();
        let zero = g.zero_node();
        assert_eq!(g.x(zero), 0.0);
        assert!(g.x_left <= -8.0 && g.x_right >= LN_2 + 1.0 - 1e-12);
        assert!(g.validate(&p01()).is_ok());
        // truncation widens with the horizon
        let g8 = GridSpec::standard(&p01(), 0.02, 0.004, 8.0).unwrap();
        assert!(g8.x_left <= -6.0 * 8.0_f64.sqrt() + 1e-9);
    }

    #[test]
    fn grid_validation_rejects_misalignment_and_tight_truncation() {
        let mut g = GridSpec::standard(&p01(), 0.02, 0.004, 1.0).unwrap();
        g.x_left += 0.007;
        assert!(g.validate(&p01()).is_err());
        let mut g = GridSpec::standard(&p01(), 0.02, 0.004, 1.0).unwrap();
        g.x_right = LN_2 + 0.3;
        assert!(g.validate(&p01()).is_err());
    }

    #[test]
    fn zero_theta_solves_to_the_zero_gap() {
        let p = CanonicalParams::new(0.3, 0.0).unwrap();
        let g = GridSpec::standard(&p, 0.05, 0.01, 0.5).unwrap();
        let sol = solve_with(&p, &g, LcpMethod::ProjectedSweep).unwrap();
        for i in 0..sol.snapshot_count() {
            assert!(sol.snapshot(i).iter().all(|&v| v == 0.0));
        }
        let curve = extract_boundary(&sol, DEFAULT_ACTIVE_THRESHOLD).unwrap();
        assert!(curve.phi.iter().all(|&v| v == 0.0));
        assert!(curve.varphi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn initial_row_is_zero_and_source_mass_grows_exponentially() {
        let g = GridSpec::standard(&p01(), 0.05, 0.01, 0.5).unwrap();
        let sol = solve_with(&p01(), &g, LcpMethod::ProjectedSweep).unwrap();
        assert!(sol.snapshot(0).iter().all(|&v| v == 0.0));
        let times = sol.snapshot_times();
        for (i, &t) in times.iter().enumerate() {
            assert_abs_diff_eq!(sol.source_mass[i], t.exp(), epsilon = 1e-12 * t.exp());
        }
    }

    #[test]
    fn psor_and_projected_sweep_agree() {
        let g = GridSpec::standard(&p01(), 0.02, 0.004, 1.0).unwrap();
        let a = solve_with(&p01(), &g, LcpMethod::Psor).unwrap();
        let b = solve_with(&p01(), &g, LcpMethod::ProjectedSweep).unwrap();
        assert!(a.stats.total_iterations > 0);
        let ca = extract_boundary(&a, DEFAULT_ACTIVE_THRESHOLD).unwrap();
        let cb = extract_boundary(&b, DEFAULT_ACTIVE_THRESHOLD).unwrap();
        let sup = ca
            .phi
            .iter()
            .zip(&cb.phi)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0_f64, f64::max);
        assert!(sup <= 1e-9, "phi mismatch {sup}");
        let last = a.snapshot_count() - 1;
        let usup = a
            .snapshot(last)
            .iter()
            .zip(b.snapshot(last))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0_f64, f64::max);
        assert!(usup <= 1e-8, "state mismatch {usup}");
    }

    #[test]
    fn complementarity_residual_is_tiny() {
        let g = GridSpec::standard(&p01(), 0.02, 0.004, 1.0).unwrap();
        let sol = solve_with(&p01(), &g, LcpMethod::ProjectedSweep).unwrap();
        assert!(sol.complementarity <= g.psor_tol, "lcp residual {}", sol.complementarity);
        let sol = solve_with(&p01(), &g, LcpMethod::Psor).unwrap();
        assert!(sol.complementarity <= g.psor_tol, "lcp residual {}", sol.complementarity);
    }

    #[test]
    fn psor_failure_surfaces_as_no_convergence() {
        let mut g = GridSpec::standard(&p01(), 0.02, 0.004, 0.5).unwrap();
        g.psor_max_iter = 1;
        g.psor_tol = 1e-14;
        match solve_with(&p01(), &g, LcpMethod::Psor) {
            Err(Error::NoConvergence { step, .. }) => assert!(step >= 1),
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn boundary_shape_on_a_coarse_grid() {
        let g = GridSpec::standard(&p01(), 0.02, 0.004, 2.0).unwrap();
        let sol = solve_with(&p01(), &g, LcpMethod::ProjectedSweep).unwrap();
        let curve = extract_boundary(&sol, DEFAULT_ACTIVE_THRESHOLD).unwrap();
        assert_eq!(curve.phi[0], 0.0);
        for w in curve.phi.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for (i, &v) in curve.phi.iter().enumerate() {
            assert!((0.0..LN_2).contains(&v), "phi[{i}] = {v}");
            assert_abs_diff_eq!(curve.varphi[i], LN_2 - v, epsilon = 0.0);
        }
        // the asymptote is approached from below
        assert!(curve.phi.last().unwrap() > &(LN_2 - 0.02));
        // raw monotonicity violations stay below one cell
        let worst = curve
            .phi_raw
            .windows(2)
            .map(|w| (w[0] - w[1]).max(0.0))
            .fold(0.0_f64, f64::max);
        assert!(worst <= g.h() + 1e-12, "raw violation {worst}");
        // concavity at theta = 1, up to grid noise
        assert!(curve.max_convexity(0.1) <= g.h(), "convexity {}", curve.max_convexity(0.1));
    }

    #[test]
    fn refine_level_recovers_planted_quadratics() {
        let h = 0.01;
        let xk = 0.37;
        for frac in [0.1, 0.45, 0.9] {
            let b = xk + frac * h; // planted boundary inside the next cell
            let q = |x: f64| 0.8 * (b - x) * (b - x);
            let win = [
                q(xk - 4.0 * h),
                q(xk - 3.0 * h),
                q(xk - 2.0 * h),
                q(xk - h),
                q(xk),
                0.0,
            ];
            let est = refine_level(&win, 4, xk, h);
            assert_abs_diff_eq!(est, b, epsilon = 1e-12);
        }
        // two-point fallback when only two active nodes exist
        let b = xk + 0.3 * h;
        let q = |x: f64| 0.8 * (b - x) * (b - x);
        let win = [0.0, 0.0, 0.0, q(xk - h), q(xk), 0.0];
        let est = refine_level(&win, 4, xk, h);
        assert_abs_diff_eq!(est, b, epsilon = 1e-12);
        // no usable neighbors: midpoint convention
        let win = [0.0, 0.0, 0.0, 0.0, 1e-8, 0.0];
        assert_abs_diff_eq!(refine_level(&win, 4, xk, h), xk + 0.5 * h, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_level_is_reported() {
        let g = GridSpec::standard(&p01(), 0.05, 0.01, 0.5).unwrap();
        let sol = solve_with(&p01(), &g, LcpMethod::ProjectedSweep).unwrap();
        match extract_boundary(&sol, 1e30) {
            Err(Error::DegenerateLevel { t }) => assert!(t > 0.0),
            other => panic!("expected DegenerateLevel, got {other:?}"),
        }
    }

    #[test]
    fn smooth_fit_residual_shrinks_under_refinement() {
        let run = |h: f64, dt: f64| {
            let g = GridSpec::standard(&p01(), h, dt, 1.0).unwrap();
            let sol = solve_with(&p01(), &g, LcpMethod::ProjectedSweep).unwrap();
            let curve = extract_boundary(&sol, DEFAULT_ACTIVE_THRESHOLD).unwrap();
            smooth_fit_residual(&sol, &curve).mean_abs(0.5, 1.0)
        };
        let coarse = run(0.02, 0.004);
        let fine = run(0.01, 0.002);
        assert!(coarse > 0.0 && fine > 0.0);
        assert!(fine / coarse <= 0.6, "ratio {}", fine / coarse);
    }

    #[test]
    fn interior_slope_is_strictly_negative() {
        let g = GridSpec::standard(&p01(), 0.01, 0.002, 1.0).unwrap();
        let sol = solve_with(&p01(), &g, LcpMethod::ProjectedSweep).unwrap();
        let curve = extract_boundary(&sol, DEFAULT_ACTIVE_THRESHOLD).unwrap();
        let phi1 = *curve.phi.last().unwrap();
        let slope = x_derivative_at(&sol, 1.0, phi1 - 0.2).unwrap();
        assert!(slope < -0.05, "slope {slope}");
    }

    #[test]
    fn envelope_dominates_reward_and_matches_it_beyond_mu() {
        let g = GridSpec::standard(&p01(), 0.02, 0.004, 1.0).unwrap();
        let sol = solve_with(&p01(), &g, LcpMethod::ProjectedSweep).unwrap();
        for t in [0.1, 0.5, 1.0] {
            for x in [-2.0, -0.5, 0.0, 0.2, 0.5, LN_2, 1.0, 1.5] {
                let v = reward_canonical(t, x, &p01());
                let vhat = sol.envelope_value(t, x).unwrap();
                assert!(vhat >= v - 1e-9, "envelope below reward at ({t}, {x})");
                if x >= LN_2 {
                    assert_abs_diff_eq!(vhat, v, epsilon = 1e-7);
                }
            }
        }
        assert!(matches!(
            sol.envelope_value(2.0, 0.0),
            Err(Error::OutOfDomain { .. })
        ));
        // the caloric plane eta e^{t+x} majorizes the reward with tangency
        // exactly at x = mu, so it dominates the least supercaloric majorant
        // too; equality holds on the tangency line
        let eta = crate::canonical::eta(&p01());
        for t in [0.25, 0.5, 1.0] {
            for x in [-0.5, 0.0, 0.3, 0.6, LN_2, 1.0] {
                let plane = eta * (t + x).exp();
                assert!(
                    sol.envelope_value(t, x).unwrap() <= plane + 2e-3,
                    "envelope above the tangent plane at ({t}, {x})"
                );
            }
            assert_abs_diff_eq!(
                sol.envelope_value(t, LN_2).unwrap(),
                eta * (t + LN_2).exp(),
                epsilon = 1e-7
            );
        }
    }

    #[test]
    fn market_envelope_reduces_to_canonical_at_rho_zero() {
        let g = GridSpec::standard(&p01(), 0.02, 0.004, 1.0).unwrap();
        let sol = solve_with(&p01(), &g, LcpMethod::ProjectedSweep).unwrap();
        let m = MarketParams::new(1.0, crate::canonical::SQRT_2).unwrap();
        let a = sol.envelope_value(0.8, 0.3).unwrap();
        let b = sol.envelope_value_market(0.8, 0.3, &m).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        let wrong = MarketParams::new(0.05, 0.3).unwrap();
        assert!(sol.envelope_value_market(0.8, 0.3, &wrong).is_err());
    }

    #[test]
    fn richardson_cancels_a_planted_linear_error() {
        let p = p01();
        let m = LN_2;
        let t: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
        let tc: Vec<f64> = (0..=50).map(|k| k as f64 * 0.02).collect();
        let mk = |ts: &[f64], truth: &dyn Fn(f64) -> f64, dt_err: f64| {
            let phi: Vec<f64> = ts.iter().map(|&ti| truth(ti) - dt_err).collect();
            let varphi: Vec<f64> = phi.iter().map(|&v| m - v).collect();
            BoundaryCurve {
                t: ts.to_vec(),
                phi: phi.clone(),
                phi_raw: phi.clone(),
                varphi,
                dphi: vec![0.0; ts.len()],
                params: p,
            }
        };
        // a linear truth is reproduced exactly at every node: the coarse
        // curve interpolates without error between its nodes
        let lin = |ti: f64| 0.1 + 0.25 * ti;
        let rich =
            richardson_in_dt(&mk(&t, &lin, 0.004), &mk(&tc, &lin, 0.008)).unwrap();
        for (i, &ti) in t.iter().enumerate() {
            assert_abs_diff_eq!(rich.phi[i], lin(ti), epsilon = 1e-12);
        }
        // a curved truth is still exact at the shared nodes, where no
        // interpolation of the coarse curve is involved
        let cvx = |ti: f64| (0.3 * ti.sqrt()).min(m - 1e-3);
        let rich =
            richardson_in_dt(&mk(&t, &cvx, 0.004), &mk(&tc, &cvx, 0.008)).unwrap();
        for (i, &ti) in t.iter().enumerate().step_by(2) {
            assert_abs_diff_eq!(rich.phi[i], cvx(ti), epsilon = 1e-12);
        }
        let fine = mk(&t, &lin, 0.004);
        assert!(richardson_in_dt(&fine, &fine).is_err());
    }
}
