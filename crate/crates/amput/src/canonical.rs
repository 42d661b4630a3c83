//! Parameter and coordinate reductions between market inputs (r, sigma) and
//! the canonical (rho, theta) heat-equation frame, plus the closed-form
//! constants mu and eta attached to that frame.
//!
//! Coordinate chain: market (t, s) with s the deadline-compounded price maps
//! to pre-shift heat coordinates via x = (sigma/sqrt2) t - (sqrt2/sigma) ln s
//! and the scaling (t', x') = (alpha^2 t, alpha x). A further affine shift
//! x -> x + 2 rho t turns the drifted problem into the driftless obstacle
//! problem for the reward `reward_canonical`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Raw financial inputs: continuously compounded rate and volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub r: f64,
    pub sigma: f64,
}

impl MarketParams {
    pub fn new(r: f64, sigma: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidParams(format!("r must be positive, got {r}")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParams(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { r, sigma })
    }
}

/// Reduced parameters of the canonical frame. `alpha` is carried only when
/// the parameters were derived from market inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalParams {
    pub rho: f64,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl CanonicalParams {
    /// theta = 0 is admitted: it is the degenerate family member with
    /// mu = 0 and identically vanishing boundary, used by perturbation
    /// checks. Only theta < 0 is rejected.
    pub fn new(rho: f64, theta: f64) -> Result<Self> {
        if !(rho > -1.0 && rho < 1.0) {
            return Err(Error::InvalidParams(format!(
                "rho must lie in (-1, 1), got {rho}"
            )));
        }
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(Error::InvalidParams(format!(
                "theta must be nonnegative, got {theta}"
            )));
        }
        Ok(Self { rho, theta, alpha: None })
    }

    pub fn from_market(m: &MarketParams) -> Result<Self> {
        from_market(m)
    }

    pub fn mu(&self) -> f64 {
        mu(self)
    }

    pub fn eta(&self) -> f64 {
        eta(self)
    }

    pub fn constants(&self) -> BoundaryConstants {
        BoundaryConstants { mu: mu(self), eta: eta(self) }
    }
}

/// The asymptote level mu and the envelope-bound coefficient eta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConstants {
    pub mu: f64,
    pub eta: f64,
}

/// Reduce (r, sigma) to the canonical frame: alpha = (sigma^2 + 2r) /
/// (2 sqrt2 sigma), rho = (sigma^2 - 2r) / (sigma^2 + 2r), theta = 1.
///
/// rho's numerator is evaluated in the factored form (sigma - sqrt(2r)) *
/// (sigma + sqrt(2r)) so that sigma = sqrt(2r) yields exactly zero rather
/// than rounding noise; alpha is evaluated as the mean of sigma/sqrt2 and
/// sqrt2 r/sigma for the same reason.
pub fn from_market(m: &MarketParams) -> Result<CanonicalParams> {
    if !(m.r > 0.0 && m.sigma > 0.0) {
        return Err(Error::InvalidParams(format!(
            "market params must be positive: r = {}, sigma = {}",
            m.r, m.sigma
        )));
    }
    let s2r = (2.0 * m.r).sqrt();
    let rho = (m.sigma - s2r) * (m.sigma + s2r) / (m.sigma * m.sigma + 2.0 * m.r);
    let alpha = 0.5 * (m.sigma / SQRT_2 + SQRT_2 * m.r / m.sigma);
    Ok(CanonicalParams { rho, theta: 1.0, alpha: Some(alpha) })
}

/// Exercise payoff in deadline-compounded dollars: max(0, e^{rt} - s), with
/// t the time to expiry and s the deadline-compounded stock price.
pub fn reward_original(t: f64, s: f64, r: f64) -> f64 {
    ((r * t).exp() - s).max(0.0)
}

/// Map a market-frame point (t, s) into scaled heat coordinates (t', x').
pub fn to_canonical_point(t: f64, s: f64, m: &MarketParams) -> Result<(f64, f64)> {
    if !(s > 0.0) {
        return Err(Error::InvalidParams(format!("price must be positive, got {s}")));
    }
    let p = from_market(m)?;
    let alpha = p.alpha.expect("from_market always sets alpha");
    let x = m.sigma / SQRT_2 * t - SQRT_2 / m.sigma * s.ln();
    Ok((alpha * alpha * t, alpha * x))
}

/// Inverse of `to_canonical_point`: recover (t, s) in the market frame from
/// scaled heat coordinates.
pub fn from_canonical_point(tp: f64, xp: f64, m: &MarketParams) -> Result<(f64, f64)> {
    let p = from_market(m)?;
    let alpha = p.alpha.expect("from_market always sets alpha");
    let t = tp / (alpha * alpha);
    let x = xp / alpha;
    let log_s = 0.5 * m.sigma * m.sigma * t - m.sigma / SQRT_2 * x;
    Ok((t, log_s.exp()))
}

/// Coefficients of the two decaying exponentials in the canonical reward:
/// a = (1 + theta - rho + theta rho)/2 and b = (1 - theta)(1 + rho)/2.
/// a + b = 1 for every (rho, theta), which is what makes the reward
/// continuous across x = 0.
pub fn reward_coefficients(p: &CanonicalParams) -> (f64, f64) {
    let a = 0.5 * (1.0 + p.theta - p.rho + p.theta * p.rho);
    let b = 0.5 * (1.0 - p.theta) * (1.0 + p.rho);
    (a, b)
}

/// Canonical obstacle on the open quadrant {t > 0, x > 0}, zero outside.
/// Region membership, not a positive part, defines the extension: inside the
/// quadrant the formula value is returned even where it is negative for
/// theta far from 1.
pub fn reward_canonical(t: f64, x: f64, p: &CanonicalParams) -> f64 {
    if t <= 0.0 || x <= 0.0 {
        return 0.0;
    }
    let (a, b) = reward_coefficients(p);
    (t + p.rho * x).exp() - a * (t - x).exp() - b * (t + x).exp()
}

/// Pre-shift reward in scaled heat coordinates,
/// max(0, e^{(1-rho^2) t} - e^{(1+rho)^2 t - (1+rho) x}).
pub fn reward_preshift(t: f64, x: f64, rho: f64) -> f64 {
    let op = 1.0 + rho;
    (((1.0 - rho * rho) * t).exp() - (op * op * t - op * x).exp()).max(0.0)
}

/// Market-frame reward expressed in the unscaled heat variables (t, x):
/// the payoff e^{rt} - s with ln s = (sigma^2/2) t - (sigma/sqrt2) x.
/// Equals `reward_preshift(alpha^2 t, alpha x, rho)` pointwise.
pub fn reward_market_frame(t: f64, x: f64, m: &MarketParams) -> f64 {
    let log_s = 0.5 * m.sigma * m.sigma * t - m.sigma / SQRT_2 * x;
    ((m.r * t).exp() - log_s.exp()).max(0.0)
}

/// Asymptote level mu = log1p(theta (1+rho)/(1-rho)) / (1+rho).
pub fn mu(p: &CanonicalParams) -> f64 {
    (p.theta * (1.0 + p.rho) / (1.0 - p.rho)).ln_1p() / (1.0 + p.rho)
}

/// Envelope-bound coefficient eta = (1+rho)(e^{(rho-1) mu} - 1 + theta)/2.
pub fn eta(p: &CanonicalParams) -> f64 {
    let m = mu(p);
    0.5 * (1.0 + p.rho) * (((p.rho - 1.0) * m).exp() - 1.0 + p.theta)
}

/// Target of the Psi identity at z = 0: theta e^{-mu rho} / (1 - rho).
pub fn psi_zero_target(p: &CanonicalParams) -> f64 {
    p.theta * (-mu(p) * p.rho).exp() / (1.0 - p.rho)
}

/// Undo the affine drift shift for one boundary point: x_pre = x + 2 rho t.
pub fn unshift_point(t: f64, x: f64, rho: f64) -> f64 {
    x + 2.0 * rho * t
}

/// Inverse of `unshift_point`.
pub fn shift_point(t: f64, x_pre: f64, rho: f64) -> f64 {
    x_pre - 2.0 * rho * t
}

/// Map a sampled boundary from shifted canonical coordinates back to the
/// pre-shift frame. Returns the transformed x samples.
pub fn unshift_boundary(t: &[f64], x: &[f64], rho: f64) -> Vec<f64> {
    assert_eq!(t.len(), x.len(), "time and position sample counts differ");
    t.iter().zip(x).map(|(&ti, &xi)| unshift_point(ti, xi, rho)).collect()
}
