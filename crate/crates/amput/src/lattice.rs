//! Binomial-tree American put in nominal market coordinates, used as an
//! independent oracle against the PDE solver. Strike is fixed at 1.

use crate::canonical::{from_market, shift_point, to_canonical_point, MarketParams};
use crate::error::{Error, Result};
use crate::obstacle::BoundaryCurve;
use crate::quad::pav;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub steps: usize,
    /// Maturity in time units.
    pub t_maturity: f64,
    pub market: MarketParams,
}

impl LatticeSpec {
    pub fn new(steps: usize, t_maturity: f64, market: MarketParams) -> Result<Self> {
        if steps < 1 || !(t_maturity > 0.0) {
            return Err(Error::InvalidParams(format!(
                "lattice needs steps >= 1 and positive maturity, got {steps}, {t_maturity}"
            )));
        }
        Ok(LatticeSpec { steps, t_maturity, market })
    }
}

/// How the exercise boundary is localized between the last exercising node
/// and the first continuing one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingRule {
    /// Geometric midpoint of the two node prices: centers the O(dx) band
    /// but keeps its full width as bias.
    GeometricMidpoint,
    /// Zero crossing of (intrinsic - continuation), linear in log-price:
    /// localizes well inside the band and roughly halves the deviation from
    /// the PDE boundary; the default.
    ZeroCrossing,
}

/// Exercise boundary in nominal prices, by time to expiry. Row 0 is the
/// expiry itself, where exercise is optimal exactly in the money.
#[derive(Debug, Clone)]
pub struct LatticeBoundary {
    pub t: Vec<f64>,
    pub s_star: Vec<f64>,
    pub price_at_root: f64,
}

struct Tree {
    p_up: f64,
    disc: f64,
    /// up^k for k in [-steps, steps], offset by steps.
    powers: Vec<f64>,
}

impl Tree {
    fn build(spec: &LatticeSpec) -> Result<Tree> {
        let n = spec.steps;
        let dt = spec.t_maturity / n as f64;
        let up = (spec.market.sigma * dt.sqrt()).exp();
        let down = 1.0 / up;
        let grow = (spec.market.r * dt).exp();
        let p_up = (grow - down) / (up - down);
        if !(0.0 < p_up && p_up < 1.0) {
            return Err(Error::InvalidParams(format!(
                "risk-neutral probability {p_up} outside (0,1); refine the tree"
            )));
        }
        let mut powers = vec![0.0; 2 * n + 1];
        for (k, slot) in powers.iter_mut().enumerate() {
            *slot = up.powi(k as i32 - n as i32);
        }
        Ok(Tree { p_up, disc: (-spec.market.r * dt).exp(), powers })
    }

    /// Node price at level m (m+1 nodes), index j ascending in price.
    fn price(&self, s0: f64, m: usize, j: usize) -> f64 {
        let n = (self.powers.len() - 1) / 2;
        s0 * self.powers[2 * j + n - m]
    }
}

fn rollback(
    spec: &LatticeSpec,
    s0: f64,
    rule: Option<CrossingRule>,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let tree = Tree::build(spec)?;
    let n = spec.steps;
    let dt = spec.t_maturity / n as f64;
    let mut value: Vec<f64> = (0..=n).map(|j| (1.0 - tree.price(s0, n, j)).max(0.0)).collect();
    let mut gap = vec![0.0_f64; n + 1];
    let mut boundary = Vec::new();
    if rule.is_some() {
        boundary.push((0.0, 1.0));
    }
    for m in (0..n).rev() {
        for j in 0..=m {
            let cont = tree.disc * (tree.p_up * value[j + 1] + (1.0 - tree.p_up) * value[j]);
            let intr = 1.0 - tree.price(s0, m, j);
            gap[j] = intr - cont;
            value[j] = cont.max(intr);
        }
        let Some(rule) = rule else { continue };
        // last exercising node, scanning down in price
        let Some(k) = (0..=m).rev().find(|&j| gap[j] >= 0.0) else { continue };
        let t = (n - m) as f64 * dt;
        let sk = tree.price(s0, m, k);
        let s_star = if k == m {
            sk
        } else {
            let sk1 = tree.price(s0, m, k + 1);
            match rule {
                CrossingRule::GeometricMidpoint => (sk * sk1).sqrt(),
                CrossingRule::ZeroCrossing => {
                    let (ga, gb) = (gap[k], gap[k + 1]);
                    let frac = if ga != gb { ga / (ga - gb) } else { 0.0 };
                    // linear in x = -log S between the nodes
                    let xa = -sk.ln();
                    let xb = -sk1.ln();
                    (-(xa + frac * (xb - xa))).exp()
                }
            }
        };
        // exercising out of the money is never optimal; the interpolation
        // cannot move the boundary past the strike
        boundary.push((t, s_star.min(1.0)));
    }
    Ok((value[0], boundary))
}

pub fn price_american_put(spec: &LatticeSpec, s0: f64) -> Result<f64> {
    if !(s0 > 0.0) {
        return Err(Error::InvalidParams(format!("spot must be positive, got {s0}")));
    }
    Ok(rollback(spec, s0, None)?.0)
}

/// Same tree without early exercise, for dominance checks.
pub fn price_european_put(spec: &LatticeSpec, s0: f64) -> Result<f64> {
    if !(s0 > 0.0) {
        return Err(Error::InvalidParams(format!("spot must be positive, got {s0}")));
    }
    let tree = Tree::build(spec)?;
    let n = spec.steps;
    let mut value: Vec<f64> = (0..=n).map(|j| (1.0 - tree.price(s0, n, j)).max(0.0)).collect();
    for m in (0..n).rev() {
        for j in 0..=m {
            value[j] = tree.disc * (tree.p_up * value[j + 1] + (1.0 - tree.p_up) * value[j]);
        }
    }
    Ok(value[0])
}

pub fn extract_lattice_boundary(spec: &LatticeSpec) -> Result<LatticeBoundary> {
    extract_lattice_boundary_with(spec, CrossingRule::ZeroCrossing)
}

pub fn extract_lattice_boundary_with(
    spec: &LatticeSpec,
    rule: CrossingRule,
) -> Result<LatticeBoundary> {
    if spec.steps < 100 {
        return Err(Error::InvalidParams(format!(
            "boundary extraction needs at least 100 steps, got {}",
            spec.steps
        )));
    }
    let (price_at_root, raw) = rollback(spec, 1.0, Some(rule))?;
    let t: Vec<f64> = raw.iter().map(|&(ti, _)| ti).collect();
    // enforce monotonicity in log-price: s_star nonincreasing in time to
    // expiry is the put boundary shape, jitter is quantization noise
    let x: Vec<f64> = raw.iter().map(|&(_, s)| -s.ln()).collect();
    let s_star: Vec<f64> = pav(&x).iter().map(|&xi| (-xi).exp()).collect();
    Ok(LatticeBoundary { t, s_star, price_at_root })
}

/// Map the nominal boundary into the shifted canonical frame of the obstacle
/// solver: deadline compounding, heat coordinates, parabolic scaling, then
/// the drift shift. Output times are the scaled canonical times.
pub fn lattice_boundary_to_canonical(
    lb: &LatticeBoundary,
    market: &MarketParams,
) -> Result<BoundaryCurve> {
    let p = from_market(market)?;
    let m = crate::canonical::mu(&p);
    let mut t = Vec::with_capacity(lb.t.len());
    let mut raw = Vec::with_capacity(lb.t.len());
    for (&ti, &si) in lb.t.iter().zip(&lb.s_star) {
        let s_deadline = si * (market.r * ti).exp();
        let (tp, xp) = to_canonical_point(ti, s_deadline, market)?;
        t.push(tp);
        raw.push(shift_point(tp, xp, p.rho));
    }
    let phi = pav(&raw);
    let varphi: Vec<f64> = phi.iter().map(|&v| m - v).collect();
    let n = t.len();
    let mut dphi = vec![0.0; n];
    if n >= 2 {
        dphi[0] = (phi[1] - phi[0]) / (t[1] - t[0]);
        dphi[n - 1] = (phi[n - 1] - phi[n - 2]) / (t[n - 1] - t[n - 2]);
        for i in 1..n - 1 {
            dphi[i] = (phi[i + 1] - phi[i - 1]) / (t[i + 1] - t[i - 1]);
        }
    }
    Ok(BoundaryCurve { t, phi, phi_raw: raw, varphi, dphi, params: p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::{from_canonical_point, SQRT_2};
    use approx::assert_abs_diff_eq;

    fn desk_market() -> MarketParams {
        MarketParams::new(1.0, SQRT_2).unwrap()
    }

    #[test]
    fn expiry_limit_is_the_payoff() {
        // at the kink s0 = 1 the one-step tree misses the payoff by about
        // 0.5 sigma sqrt(dt), which sets the tolerance floor here
        let spec = LatticeSpec::new(1, 1e-12, desk_market()).unwrap();
        for s0 in [0.5, 0.9, 1.0, 1.4] {
            let price = price_american_put(&spec, s0).unwrap();
            assert_abs_diff_eq!(price, (1.0 - s0).max(0.0), epsilon = 2e-6);
        }
    }

    #[test]
    fn american_dominates_european_and_payoff() {
        let spec = LatticeSpec::new(600, 1.0, desk_market()).unwrap();
        for s0 in [0.6, 0.9, 1.1] {
            let amer = price_american_put(&spec, s0).unwrap();
            let euro = price_european_put(&spec, s0).unwrap();
            assert!(amer >= euro - 1e-12, "american {amer} below european {euro}");
            assert!(amer >= (1.0 - s0).max(0.0) - 1e-12);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(LatticeSpec::new(0, 1.0, desk_market()).is_err());
        assert!(LatticeSpec::new(10, -1.0, desk_market()).is_err());
        let spec = LatticeSpec::new(100, 1.0, desk_market()).unwrap();
        assert!(price_american_put(&spec, 0.0).is_err());
        assert!(extract_lattice_boundary(&LatticeSpec::new(99, 1.0, desk_market()).unwrap())
            .is_err());
    }

    #[test]
    fn price_error_shrinks_as_the_tree_refines() {
        // at-the-money tree prices oscillate between adjacent resolutions,
        // so compare errors across a wide refinement span instead of
        // demanding monotone consecutive differences
        let price = |n: usize| {
            price_american_put(&LatticeSpec::new(n, 3.0, desk_market()).unwrap(), 1.0).unwrap()
        };
        let reference = price(8192);
        let e_coarse = (price(250) - reference).abs();
        let e_fine = (price(2000) - reference).abs();
        assert!(
            e_fine < e_coarse / 4.0,
            "refinement did not pay off: coarse {e_coarse:.3e}, fine {e_fine:.3e}"
        );
        assert!(e_fine < 5e-4, "fine-tree error {e_fine:.3e} out of range");
    }

    #[test]
    fn boundary_shape_invariants() {
        let spec = LatticeSpec::new(800, 3.0, desk_market()).unwrap();
        let lb = extract_lattice_boundary(&spec).unwrap();
        assert_eq!(lb.t[0], 0.0);
        assert_eq!(lb.s_star[0], 1.0);
        for w in lb.s_star.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "s_star not nonincreasing");
        }
        assert!(lb.s_star.iter().all(|&s| s > 0.0 && s <= 1.0));
        // midpoint rule shares the invariants
        let lbm = extract_lattice_boundary_with(&spec, CrossingRule::GeometricMidpoint).unwrap();
        for w in lbm.s_star.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn canonical_mapping_round_trips_and_stays_below_mu() {
        let spec = LatticeSpec::new(800, 3.0, desk_market()).unwrap();
        let lb = extract_lattice_boundary(&spec).unwrap();
        let curve = lattice_boundary_to_canonical(&lb, &desk_market()).unwrap();
        assert!(curve.phi_raw[0].abs() < 1e-12);
        let m = curve.mu();
        for (i, &v) in curve.phi.iter().enumerate() {
            if curve.t[i] > 0.2 {
                assert!(v < m, "phi {v} not below asymptote at t = {}", curve.t[i]);
            }
        }
        // invert the chain pointwise on the raw samples
        for i in (0..lb.t.len()).step_by(97) {
            let s_deadline = lb.s_star[i] * (1.0_f64 * lb.t[i]).exp();
            let (tp, xp) = to_canonical_point(lb.t[i], s_deadline, &desk_market()).unwrap();
            let (tb, sb) = from_canonical_point(tp, xp, &desk_market()).unwrap();
            assert_abs_diff_eq!(tb, lb.t[i], epsilon = 1e-12);
            assert_abs_diff_eq!(sb * (-tb).exp(), lb.s_star[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn rho_zero_map_is_minus_log_price() {
        let spec = LatticeSpec::new(400, 2.0, desk_market()).unwrap();
        let lb = extract_lattice_boundary(&spec).unwrap();
        let curve = lattice_boundary_to_canonical(&lb, &desk_market()).unwrap();
        for i in 0..lb.t.len() {
            assert_abs_diff_eq!(curve.t[i], lb.t[i], epsilon = 1e-12);
            assert_abs_diff_eq!(curve.phi_raw[i], -lb.s_star[i].ln(), epsilon = 1e-10);
        }
    }
}
