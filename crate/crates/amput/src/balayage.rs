//! Laplace-domain identities satisfied by the computed boundary: the sweep
//! identity relating the boundary integral to a closed form, its derivative
//! variant, flux conservation, and the analytic continuation of the level
//! transform, each with an explicit truncation estimate.

use crate::canonical::{psi_zero_target, CanonicalParams};
use crate::error::{Error, Result};
use crate::obstacle::BoundaryCurve;
use crate::quad::{em1c, gauss_legendre_32, lstsq2, product_integral, trapezoid_c};
use crate::tail::{stieltjes_with_tail, TailModel};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Standoff from the pole at s = 1; keeps 1/(s-1) conditioning bounded in
/// the quadrature identities.
pub const POLE_STANDOFF: f64 = 0.05;

/// Laplace abscissa together with its principal square root (Re z >= 0, so
/// a right-half-plane s yields a right-half-plane z).
#[derive(Debug, Clone, Copy)]
pub struct LaplacePoint {
    pub s: Complex64,
    pub z: Complex64,
}

impl LaplacePoint {
    pub fn new(s: Complex64) -> Self {
        LaplacePoint { s, z: s.sqrt() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BalayageResidual {
    pub s: Complex64,
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub abs_err: f64,
    pub rel_err: f64,
    /// Bound on the integral mass ignored beyond the last curve sample.
    pub tail_estimate: f64,
}

fn require_standoff(s: Complex64) -> Result<()> {
    if s.re <= 1.0 + POLE_STANDOFF {
        return Err(Error::Domain(format!(
            "Re s must exceed {}, got {}",
            1.0 + POLE_STANDOFF,
            s.re
        )));
    }
    Ok(())
}

fn require_curve(curve: &BoundaryCurve) -> Result<()> {
    if curve.len() < 2 {
        return Err(Error::Domain("boundary curve has fewer than two samples".into()));
    }
    Ok(())
}

/// Boundary side of the sweep identity: the level integral against the
/// Laplace kernel, with the exactly integrable part beyond the last sample
/// (where the level is treated as zero) restored in closed form.
pub fn balayage_lhs(curve: &BoundaryCurve, s: Complex64) -> Result<Complex64> {
    require_standoff(s)?;
    require_curve(curve)?;
    let c = Complex64::new(curve.params.rho, 0.0) + s.sqrt();
    let w = s - 1.0;
    let f: Vec<Complex64> = curve.varphi.iter().map(|&v| (-c * v).exp()).collect();
    let quad = product_integral(&curve.t, &f, w);
    Ok(quad + (-w * curve.t_max()).exp() / w)
}

/// Closed-form side of the sweep identity; simple pole at s = 1.
pub fn balayage_rhs(s: Complex64, p: &CanonicalParams) -> Result<Complex64> {
    if s == Complex64::new(1.0, 0.0) {
        return Err(Error::Pole);
    }
    let z = s.sqrt();
    let m = crate::canonical::mu(p);
    let bracket = Complex64::new(1.0 - p.rho, 0.0) + p.theta * (z + p.rho);
    Ok((-m * p.rho).exp() / (1.0 - p.rho) * bracket / (s - 1.0) * (-m * z).exp())
}

pub fn residual(curve: &BoundaryCurve, s: Complex64) -> Result<BalayageResidual> {
    let lhs = balayage_lhs(curve, s)?;
    let rhs = balayage_rhs(s, &curve.params)?;
    let abs_err = (lhs - rhs).norm();
    let rel_err = if rhs.norm() > 0.0 { abs_err / rhs.norm() } else { abs_err };
    let vt = *curve.varphi.last().unwrap();
    let cn = (Complex64::new(curve.params.rho, 0.0) + s.sqrt()).norm();
    // beyond t_max the integrand deviates from the restored closed form by
    // e^{-c varphi} - 1, and varphi itself keeps decaying like e^{-t}
    let tail_estimate =
        cn * vt * (cn * vt).exp() * (-(s.re - 1.0) * curve.t_max()).exp() / s.re;
    Ok(BalayageResidual { s, lhs, rhs, abs_err, rel_err, tail_estimate })
}

/// Derivative form of the sweep identity, consumed as a Stieltjes sum over
/// the level increments so no pointwise derivative estimate enters.
pub fn derivative_identity_residual(curve: &BoundaryCurve, s: Complex64) -> Result<BalayageResidual> {
    require_standoff(s)?;
    require_curve(curve)?;
    let p = &curve.params;
    let z = s.sqrt();
    let c = Complex64::new(p.rho, 0.0) + z;
    let w = s - 1.0;
    let inc = curve.increments();
    let mut lhs = Complex64::new(0.0, 0.0);
    for j in 0..inc.tm.len() {
        lhs += (-c * inc.vm[j]).exp() * (-w * inc.tm[j]).exp() * inc.dv[j];
    }
    let rhs = psi_zero_target(p) * (-crate::canonical::mu(p) * z).exp();
    let abs_err = (lhs - rhs).norm();
    let rel_err = if rhs.norm() > 0.0 { abs_err / rhs.norm() } else { abs_err };
    let vt = *curve.varphi.last().unwrap();
    let tmx = curve.t_max();
    let tail_estimate = vt * (1.0 + 1.5 / tmx) * (-(s.re - 1.0) * tmx).exp() / s.re;
    Ok(BalayageResidual { s, lhs, rhs, abs_err, rel_err, tail_estimate })
}

/// Same integrand through the pointwise derivative estimates; noisier than
/// the Stieltjes form, kept for diagnostics.
pub fn derivative_identity_pointwise(curve: &BoundaryCurve, s: Complex64) -> Result<Complex64> {
    require_standoff(s)?;
    require_curve(curve)?;
    let c = Complex64::new(curve.params.rho, 0.0) + s.sqrt();
    let w = s - 1.0;
    let f: Vec<Complex64> = (0..curve.len())
        .map(|i| curve.dphi[i] * (-c * curve.varphi[i]).exp() * (-w * curve.t[i]).exp())
        .collect();
    Ok(trapezoid_c(&curve.t, &f))
}

/// Log-slope of the derivative-identity boundary integral in sqrt(s) over
/// s in {4, 9, 16, 25}; recovers the negated level asymptote.
pub fn boundary_level_slope(curve: &BoundaryCurve) -> Result<f64> {
    let mut ones = Vec::new();
    let mut zs = Vec::new();
    let mut ln_lhs = Vec::new();
    for s in [4.0, 9.0, 16.0, 25.0] {
        let r = derivative_identity_residual(curve, Complex64::new(s, 0.0))?;
        if !(r.lhs.norm() > 0.0) {
            return Err(Error::Domain("level integral vanished, no slope".into()));
        }
        ones.push(1.0);
        zs.push(s.sqrt());
        ln_lhs.push(r.lhs.norm().ln());
    }
    let (_, slope) = lstsq2(&ones, &zs, &ln_lhs);
    Ok(slope)
}

/// |flux integral - theta e^{-mu rho}/(1-rho)|; the integral conserves the
/// source mass swept onto the boundary. Exactly zero when theta = 0.
pub fn flux_identity_residual(curve: &BoundaryCurve, tail: &TailModel) -> f64 {
    let rho = curve.params.rho;
    let flux = stieltjes_with_tail(curve, tail, |v| (-rho * v).exp(), 1.0);
    (flux - psi_zero_target(&curve.params)).abs()
}

/// E_{N+1}(z) = e^z - sum_{k<=N} z^k/k!. For moderate |z| the power-series
/// subtraction cancels badly, so the integral form
/// z^{N+1}/N! int_0^1 (1-tau)^N e^{tau z} dtau is used instead.
pub fn taylor_remainder(z: Complex64, n: usize) -> Complex64 {
    if z.norm() <= 2.5 {
        let mut integral = Complex64::new(0.0, 0.0);
        for &(xi, wi) in gauss_legendre_32() {
            let tau = 0.5 * (xi + 1.0);
            integral += 0.5 * wi * (1.0 - tau).powi(n as i32) * (tau * z).exp();
        }
        let mut fact = 1.0;
        for k in 1..=n {
            fact *= k as f64;
        }
        z.powu(n as u32 + 1) / fact * integral
    } else {
        let mut sum = Complex64::new(1.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        for k in 1..=n {
            term *= z / k as f64;
            sum += term;
        }
        z.exp() - sum
    }
}

/// |z|^{N+1}/(N+1)! max(1, e^{Re z}), the standard remainder estimate.
pub fn taylor_remainder_bound(z: Complex64, n: usize) -> f64 {
    let mut fact = 1.0;
    for k in 1..=n + 1 {
        fact *= k as f64;
    }
    z.norm().powi(n as i32 + 1) / fact * 1.0_f64.max(z.re.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformMode {
    /// Defining Laplace integral; needs Re z > 0 and Re z^2 > 0.
    Direct,
    /// Continuation through the closed form plus second-order remainder
    /// integral; valid for Re z^2 > -1 except the simple pole at z = -1.
    Continued,
}

fn tail_span(z: Complex64) -> f64 {
    40.0 / (z * z).re.max(0.02)
}

fn tail_grid(tmx: f64, span: f64, n: usize) -> Vec<f64> {
    let step = span / (n - 1) as f64;
    (0..n).map(|i| tmx + i as f64 * step).collect()
}

/// Second-remainder piece of the continued transform: the integral of
/// E_2(-(rho+z) varphi) against the Laplace kernel. Not an even function of
/// z (only the full transform is), so it is exposed for diagnostics.
pub fn phi_remainder_integral(curve: &BoundaryCurve, tail: &TailModel, z: Complex64) -> Complex64 {
    let c = Complex64::new(curve.params.rho, 0.0) + z;
    let w = z * z - 1.0;
    let f: Vec<Complex64> = (0..curve.len())
        .map(|i| taylor_remainder(-c * curve.varphi[i], 1) * (-w * curve.t[i]).exp())
        .collect();
    let head = trapezoid_c(&curve.t, &f);
    let tmx = curve.t_max();
    let tt = tail_grid(tmx, tail_span(z), 40_001);
    // E_2(-c varphi) ~ (c varphi)^2/2 once varphi is tiny; folding the two
    // e^{-t} factors into the kernel keeps everything bounded
    let ft: Vec<Complex64> = tt
        .iter()
        .map(|&t| {
            let q = c * tail.varphi_alg(t);
            0.5 * q * q * (-(z * z + 1.0) * t).exp()
        })
        .collect();
    head + trapezoid_c(&tt, &ft)
}

/// Laplace transform of the boundary level, taken at abscissa z^2 - 1.
pub fn phi_transform(
    curve: &BoundaryCurve,
    tail: &TailModel,
    z: Complex64,
    mode: TransformMode,
) -> Result<Complex64> {
    require_curve(curve)?;
    let p = &curve.params;
    let m = crate::canonical::mu(p);
    match mode {
        TransformMode::Direct => {
            if !(z.re > 0.0 && (z * z).re > 0.0) {
                return Err(Error::Domain(format!(
                    "direct transform needs Re z > 0 and Re z^2 > 0, got z = {z}"
                )));
            }
            let w = z * z - 1.0;
            let f: Vec<Complex64> =
                (0..curve.len()).map(|i| curve.varphi[i] * (-w * curve.t[i]).exp()).collect();
            let head = trapezoid_c(&curve.t, &f);
            let tt = tail_grid(curve.t_max(), tail_span(z), 40_001);
            let ft: Vec<Complex64> =
                tt.iter().map(|&t| tail.varphi_alg(t) * (-(z * z) * t).exp()).collect();
            Ok(head + trapezoid_c(&tt, &ft))
        }
        TransformMode::Continued => {
            if !((z * z).re > -1.0) || z == Complex64::new(-1.0, 0.0) {
                return Err(Error::Domain(format!(
                    "continued transform needs Re z^2 > -1 and z != -1, got z = {z}"
                )));
            }
            // the z = -rho zero of the denominator is removable; a symmetric
            // pair of nearby real evaluations cancels the leading error
            if (z + p.rho).norm() < 1e-3 {
                let eps = 1e-3;
                let a = phi_transform(
                    curve,
                    tail,
                    Complex64::new(-p.rho + eps, 0.0),
                    TransformMode::Continued,
                )?;
                let b = phi_transform(
                    curve,
                    tail,
                    Complex64::new(-p.rho - eps, 0.0),
                    TransformMode::Continued,
                )?;
                return Ok(0.5 * (a + b));
            }
            let quotient = if (z - 1.0).norm() < 1e-4 {
                // 1/w and the closed form share the z = 1 pole; expand their
                // difference N(z)/((z-1)(z+1)) about the zero of N
                let ex = (-m * (1.0 + p.rho)).exp() / (1.0 - p.rho);
                let np = m - p.theta * ex;
                let npp = 2.0 * m * p.theta * ex - m * m;
                (np + 0.5 * npp * (z - 1.0)) / (z + 1.0)
            } else {
                let w = z * z - 1.0;
                let bracket = Complex64::new(1.0 - p.rho, 0.0) + p.theta * (z + p.rho);
                let gt = (-m * p.rho).exp() * bracket * (-m * z).exp() / ((1.0 - p.rho) * w);
                1.0 / w - gt
            };
            Ok((quotient + phi_remainder_integral(curve, tail, z)) / (z + p.rho))
        }
    }
}

/// mu - (z^2 - 1) Phi(z), evaluated through the continued transform.
pub fn psi_transform(curve: &BoundaryCurve, tail: &TailModel, z: Complex64) -> Result<Complex64> {
    let phi = phi_transform(curve, tail, z, TransformMode::Continued)?;
    Ok(crate::canonical::mu(&curve.params) - (z * z - 1.0) * phi)
}

/// First-remainder Stieltjes form of the same transform: the closed target
/// minus the E_1 correction integral over the level increments.
pub fn psi_e1(curve: &BoundaryCurve, tail: &TailModel, z: Complex64) -> Result<Complex64> {
    require_curve(curve)?;
    let p = &curve.params;
    let m = crate::canonical::mu(p);
    let c = Complex64::new(p.rho, 0.0) + z;
    let w = z * z - 1.0;
    let first = p.theta * (-m * c).exp() / (1.0 - p.rho);
    let inc = curve.increments();
    let mut mid = Complex64::new(0.0, 0.0);
    for j in 0..inc.tm.len() {
        // expm1(-c v), cancellation-free through (1 - e^{-x})/x
        let x = c * inc.vm[j];
        mid += -x * em1c(x) * (-w * inc.tm[j]).exp() * inc.dv[j];
    }
    let tt = tail_grid(curve.t_max(), 60.0, 60_001);
    let ft: Vec<Complex64> = tt
        .iter()
        .map(|&t| {
            (tail.varphi_alg(t) * tail.abs_dvarphi_alg(t)) * (-(z * z + 1.0) * t).exp()
        })
        .collect();
    Ok(first - mid + c * trapezoid_c(&tt, &ft))
}
