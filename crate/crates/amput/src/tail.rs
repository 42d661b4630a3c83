//! Model for the boundary deviation beyond the solved horizon.
//!
//! The deviation decays like e^{-t} times a half-integer power series, so a
//! three-term model e^{-t}(c0 t^{-3/2} + c1 t^{-5/2} + c2 t^{-7/2}) captures
//! the tail well enough to close the improper integrals the identity checks
//! need. The coefficients are fitted in two passes: a crude least-squares on
//! the increment data near the horizon, then a refit through the spectral
//! density evaluated just above the branch point, which is far less noisy.

use crate::canonical::psi_zero_target;
use crate::error::{Error, Result};
use crate::obstacle::BoundaryCurve;
use crate::quad::{gamma_half, lstsq2, lstsq3, trapezoid};

/// Least horizon for a meaningful tail fit: the crude pass uses the final
/// three time units of the curve.
pub const MIN_FIT_HORIZON: f64 = 4.0;

const EDGE_OFFSETS: [f64; 11] =
    [0.001, 0.002, 0.004, 0.008, 0.016, 0.032, 0.064, 0.1, 0.15, 0.22, 0.3];

#[derive(Debug, Clone, Copy)]
pub struct TailModel {
    /// Coefficients of t^{-3/2}, t^{-5/2}, t^{-7/2} in e^t varphi(t).
    pub c: [f64; 3],
}

impl TailModel {
    pub fn zero() -> Self {
        TailModel { c: [0.0; 3] }
    }

    /// Modeled deviation e^{-t} sum_k c_k t^{-(3/2+k)}.
    pub fn varphi(&self, t: f64) -> f64 {
        (-t).exp() * self.varphi_alg(t)
    }

    /// Algebraic factor sum_k c_k t^{-(3/2+k)} = e^t varphi(t); bounded for
    /// large t, which is what the folded tail integrals work with.
    pub fn varphi_alg(&self, t: f64) -> f64 {
        let r = t.sqrt().recip() / t;
        let mut acc = 0.0;
        let mut pw = r;
        for &ck in &self.c {
            acc += ck * pw;
            pw /= t;
        }
        acc
    }

    /// |d varphi / dt| for the model (the deviation is decreasing).
    pub fn abs_dvarphi(&self, t: f64) -> f64 {
        (-t).exp() * self.abs_dvarphi_alg(t)
    }

    /// e^t |d varphi / dt| = sum_k c_k (t^{-(3/2+k)} + (3/2+k) t^{-(5/2+k)}).
    pub fn abs_dvarphi_alg(&self, t: f64) -> f64 {
        let r = t.sqrt().recip() / t;
        let mut acc = 0.0;
        let mut pw = r;
        for (k, &ck) in self.c.iter().enumerate() {
            acc += ck * (pw + (1.5 + k as f64) * pw / t);
            pw /= t;
        }
        acc
    }

    /// Series coefficients of the spectral density at the branch point:
    /// lambda_k = c_k / Gamma(k + 3/2).
    pub fn lambda_coefficients(&self) -> [f64; 3] {
        [
            self.c[0] / gamma_half(0),
            self.c[1] / gamma_half(1),
            self.c[2] / gamma_half(2),
        ]
    }

    /// Closed form of the flux-weighted tail mass
    /// int_tmx^inf |varphi'(t)| e^t dt for the model:
    /// sum_k c_k (tmx^{-(1/2+k)}/(1/2+k) + tmx^{-(3/2+k)}).
    pub fn edge_flux_integral(&self, tmx: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &ck) in self.c.iter().enumerate() {
            let pk = 0.5 + k as f64;
            acc += ck * (tmx.powf(-pk) / pk + tmx.powf(-(pk + 1.0)));
        }
        acc
    }

    /// Two-pass fit against a solved curve.
    pub fn fit(curve: &BoundaryCurve) -> Result<Self> {
        let tmx = curve.t_max();
        if tmx < MIN_FIT_HORIZON {
            return Err(Error::Domain(format!(
                "tail fit needs t_max >= {MIN_FIT_HORIZON}, curve ends at {tmx}"
            )));
        }
        let (c0, c1) = crude_edge_fit(curve, tmx - 3.0, tmx);
        let crude = TailModel { c: [c0, c1, 0.0] };
        let vals: Vec<f64> = EDGE_OFFSETS
            .iter()
            .map(|&u| lambda_density_model(curve, &crude, 1.0 + u) / u.sqrt())
            .collect();
        let ones = [1.0; 11];
        let sq: Vec<f64> = EDGE_OFFSETS.iter().map(|u| u * u).collect();
        let (l0, l1, l2) = lstsq3(&ones, &EDGE_OFFSETS, &sq, &vals);
        Ok(TailModel { c: [gamma_half(0) * l0, gamma_half(1) * l1, gamma_half(2) * l2] })
    }
}

/// First-pass coefficients: least squares of the increment data against the
/// two-term model of -d varphi, restricted to t in [lo, hi].
pub fn crude_edge_fit(curve: &BoundaryCurve, lo: f64, hi: f64) -> (f64, f64) {
    let mut a0 = Vec::new();
    let mut a1 = Vec::new();
    let mut y = Vec::new();
    let n = curve.t.len();
    for i in 0..n - 1 {
        if curve.t[i] >= lo && curve.t[i + 1] <= hi {
            let tm = 0.5 * (curve.t[i] + curve.t[i + 1]);
            let dt = curve.t[i + 1] - curve.t[i];
            let e = (-tm).exp();
            let p15 = tm.powf(-1.5);
            let p25 = tm.powf(-2.5);
            a0.push(e * (p15 + 1.5 * p25) * dt);
            a1.push(e * (p25 + 2.5 * tm.powf(-3.5)) * dt);
            y.push(curve.varphi[i] - curve.varphi[i + 1]);
        }
    }
    lstsq2(&a0, &a1, &y)
}

/// Spectral density at abscissa x in [1, 2): the sine-transformed flux
/// balance divided by pi x. The curve integral carries the e^{x t} weight
/// explicitly; the model tail is folded so every factor stays bounded (the
/// integrand decays like e^{(x-2)t} after the sine expansion).
pub(crate) fn lambda_density_model(curve: &BoundaryCurve, tail: &TailModel, x: f64) -> f64 {
    let p = &curve.params;
    let rho = p.rho;
    let m = curve.mu();
    let nu = (x - 1.0).sqrt();
    let inc = curve.increments();
    let mut i_curve = 0.0;
    for j in 0..inc.tm.len() {
        i_curve +=
            (-rho * inc.vm[j]).exp() * (inc.vm[j] * nu).sin() * (x * inc.tm[j]).exp() * inc.dv[j];
    }
    let tmx = curve.t_max();
    let cap = tmx + 60.0 / (2.0 - x).max(0.1);
    let npts = 20_001;
    let step = (cap - tmx) / (npts - 1) as f64;
    let mut tt = Vec::with_capacity(npts);
    let mut f = Vec::with_capacity(npts);
    for i in 0..npts {
        let t = tmx + i as f64 * step;
        let mv = tail.varphi(t);
        let mva = tail.varphi_alg(t);
        let dva = tail.abs_dvarphi_alg(t);
        let damp = 1.0 - rho * mv;
        let lead = nu * dva * mva * damp * ((x - 2.0) * t).exp();
        let cubic = nu * nu * nu / 6.0 * dva * mva * mva * mva * damp * ((x - 4.0) * t).exp();
        tt.push(t);
        f.push(lead - cubic);
    }
    let i_tail = trapezoid(&tt, &f);
    (psi_zero_target(p) * (m * nu).sin() - (i_curve + i_tail)) / (std::f64::consts::PI * x)
}

/// Curve integral sum_i F(vm_i) e^{tm_i} dv_i plus the model tail of
/// int F(varphi) |varphi'| e^t dt beyond the horizon, with the constant part
/// F(0) = f0 integrated in closed form and the remainder by quadrature.
pub(crate) fn stieltjes_with_tail<F: Fn(f64) -> f64>(
    curve: &BoundaryCurve,
    tail: &TailModel,
    f: F,
    f0: f64,
) -> f64 {
    let inc = curve.increments();
    let mut acc = 0.0;
    for j in 0..inc.tm.len() {
        acc += f(inc.vm[j]) * inc.tm[j].exp() * inc.dv[j];
    }
    let tmx = curve.t_max();
    acc += f0 * tail.edge_flux_integral(tmx);
    let npts = 60_001;
    let step = 60.0 / (npts - 1) as f64;
    let mut tt = Vec::with_capacity(npts);
    let mut g = Vec::with_capacity(npts);
    for i in 0..npts {
        let t = tmx + i as f64 * step;
        tt.push(t);
        g.push((f(tail.varphi(t)) - f0) * tail.abs_dvarphi_alg(t));
    }
    acc + trapezoid(&tt, &g)
}
