//! Large-time structure of the boundary level: the closed-form first moment
//! and envelope constant, three quadrature routes to the leading expansion
//! coefficient, the spectral density on [1, 2], the caloric-extension
//! asymptotic, a small-time reference law, and the small-theta perturbation
//! checks against the obstacle solver.

use crate::canonical::{eta, mu, psi_zero_target, CanonicalParams};
use crate::error::{Error, Result};
use crate::obstacle::{
    extract_boundary, solve_with, BoundaryCurve, GridSpec, LcpMethod, DEFAULT_ACTIVE_THRESHOLD,
};
use crate::quad::{gamma_half, interp, trapezoid};
use crate::tail::{lambda_density_model, stieltjes_with_tail, TailModel};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::PI;

/// (e^x - 1 - x)/x^2 with the removable singularity filled in.
fn em2(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        0.5 + x / 6.0 + x * x / 24.0
    } else {
        (x.exp() - 1.0 - x) / (x * x)
    }
}

/// ((1 - w)e^w - 1)/w^2, the kernel of the parts form; -1/2 at w = 0.
fn k2(w: f64) -> f64 {
    if w.abs() < 1e-3 {
        -(0.5 + w / 3.0 + w * w / 8.0 + w * w * w / 30.0)
    } else {
        ((1.0 - w) * w.exp() - 1.0) / (w * w)
    }
}

/// Signed first moment of the initial gap against the tangent envelope.
/// Negative for every admissible parameter pair; vanishes with theta.
pub fn first_moment_v1(p: &CanonicalParams) -> f64 {
    let m = mu(p);
    let e = eta(p);
    let rho = p.rho;
    let t2 = 2.0 * m * m * em2(rho * m);
    let t3 = -(1.0 - rho) * ((rho + 1.0) * m).exp() * ((-m).exp_m1() + m);
    let t4 = -(1.0 - p.theta) * (1.0 + rho) * (m.exp_m1() - m);
    -2.0 * e + t2 + t3 + t4
}

/// Envelope constant: e^{-rho mu}/(2 sqrt(pi) (1-rho^2)) times the negated
/// first moment.
pub fn b1(p: &CanonicalParams) -> f64 {
    let m = mu(p);
    (-p.rho * m).exp() / (2.0 * PI.sqrt() * (1.0 - p.rho * p.rho)) * (-first_moment_v1(p))
}

/// Both quadrature lines for the leading spectral coefficient. The first
/// integrates (mu - v)e^{-rho v} against the level increments; the second
/// reuses the flux identity to trade the constant part for its closed form.
/// They agree up to the flux defect of the curve.
pub fn lambda0_lines(curve: &BoundaryCurve, tail: &TailModel) -> (f64, f64) {
    let p = &curve.params;
    let rho = p.rho;
    let m = curve.mu();
    let a = stieltjes_with_tail(curve, tail, |v| (m - v) * (-rho * v).exp(), m) / PI;
    let j = stieltjes_with_tail(curve, tail, |v| v * (-rho * v).exp(), 0.0);
    let b = m * psi_zero_target(p) / PI - j / PI;
    (a, b)
}

pub fn lambda0(curve: &BoundaryCurve, tail: &TailModel) -> f64 {
    lambda0_lines(curve, tail).0
}

/// The three algebraically equivalent evaluations of the leading tail
/// coefficient; they differ numerically by quadrature and tail-model error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beta1Form {
    /// Gamma(3/2) times the spectral coefficient.
    Lambda0,
    /// Direct level integral with the e^{rho phi} weight.
    Intro,
    /// Integration by parts, trading the derivative for the k2 kernel.
    Parts,
}

pub fn beta1(curve: &BoundaryCurve, tail: &TailModel, form: Beta1Form) -> f64 {
    let p = &curve.params;
    let rho = p.rho;
    let m = curve.mu();
    match form {
        Beta1Form::Lambda0 => gamma_half(0) * lambda0(curve, tail),
        Beta1Form::Intro => {
            let i = stieltjes_with_tail(
                curve,
                tail,
                |v| (m - v) * (rho * (m - v)).exp(),
                m * (rho * m).exp(),
            );
            (-rho * m).exp() / (2.0 * PI.sqrt()) * i
        }
        Beta1Form::Parts => {
            let head: Vec<f64> = (0..curve.len())
                .map(|i| {
                    let v = curve.varphi[i];
                    v * v * k2(-rho * v) * curve.t[i].exp()
                })
                .collect();
            let i_head = trapezoid(&curve.t, &head);
            let tmx = curve.t_max();
            let n = 60_001;
            let step = 60.0 / (n - 1) as f64;
            let mut tt = Vec::with_capacity(n);
            let mut ft = Vec::with_capacity(n);
            for i in 0..n {
                let t = tmx + i as f64 * step;
                // varphi^2 e^t stays bounded as varphi_alg^2 e^{-t}
                let va = tail.varphi_alg(t);
                ft.push(va * va * k2(-rho * tail.varphi(t)) * (-t).exp());
                tt.push(t);
            }
            let i_tail = trapezoid(&tt, &ft);
            (p.theta * m * (-rho * m).exp() / (1.0 - rho)
                + m * m * k2(-rho * m)
                + i_head
                + i_tail)
                / (2.0 * PI.sqrt())
        }
    }
}

/// (t, varphi t^{3/2} e^t) samples over [lo, hi]; constant where the
/// one-term tail law holds.
pub fn tail_law_profile(curve: &BoundaryCurve, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    curve
        .t
        .iter()
        .zip(&curve.varphi)
        .filter(|(&t, _)| t >= lo && t <= hi)
        .map(|(&t, &v)| (t, v * t.powf(1.5) * t.exp()))
        .collect()
}

/// Mean of the tail-law profile over [4, 7]; None when the curve is too
/// short to reach that window.
pub fn tail_law_fit(curve: &BoundaryCurve) -> Option<f64> {
    if curve.t_max() < 7.0 {
        return None;
    }
    let prof = tail_law_profile(curve, 4.0, 7.0);
    if prof.is_empty() {
        return None;
    }
    Some(prof.iter().map(|&(_, g)| g).sum::<f64>() / prof.len() as f64)
}

/// Flat summary of the asymptotic constants for one curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub mu: f64,
    pub eta: f64,
    pub moment_v1: f64,
    #[serde(rename = "B1")]
    pub b1: f64,
    pub lambda0: f64,
    pub beta1: f64,
    pub beta1_intro: f64,
    pub beta1_parts: f64,
    pub tail_fit: Option<f64>,
    /// Largest pairwise absolute gap between the three beta1 routes.
    pub consistency: f64,
}

impl AsymptoticReport {
    pub fn compute(curve: &BoundaryCurve, tail: &TailModel) -> Self {
        let p = &curve.params;
        let l0 = lambda0(curve, tail);
        let beta = gamma_half(0) * l0;
        let beta_intro = beta1(curve, tail, Beta1Form::Intro);
        let beta_parts = beta1(curve, tail, Beta1Form::Parts);
        let consistency = (beta - beta_intro)
            .abs()
            .max((beta - beta_parts).abs())
            .max((beta_intro - beta_parts).abs());
        AsymptoticReport {
            mu: mu(p),
            eta: eta(p),
            moment_v1: first_moment_v1(p),
            b1: b1(p),
            lambda0: l0,
            beta1: beta,
            beta1_intro: beta_intro,
            beta1_parts: beta_parts,
            tail_fit: tail_law_fit(curve),
            consistency,
        }
    }
}

/// Caloric extension of odd data, evaluated at (t, x), together with the
/// leading odd-moment asymptotic x/(4 sqrt(pi) t^{3/2}) int f(xi) xi dxi.
/// The sample grid must be symmetric and the data odd.
pub fn heat_extension(xi: &[f64], f: &[f64], t: f64, x: f64) -> Result<(f64, f64)> {
    if xi.len() != f.len() || xi.len() < 3 {
        return Err(Error::InvalidParams("need matching grids with at least 3 samples".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParams(format!("time must be positive, got {t}")));
    }
    let n = xi.len();
    for i in 0..n / 2 + 1 {
        if (xi[i] + xi[n - 1 - i]).abs() > 1e-12 {
            return Err(Error::InvalidParams("sample grid is not symmetric about 0".into()));
        }
        if (f[i] + f[n - 1 - i]).abs() > 1e-10 {
            return Err(Error::InvalidParams(format!(
                "data is not odd: asymmetry {} at xi = {}",
                (f[i] + f[n - 1 - i]).abs(),
                xi[i]
            )));
        }
    }
    let kernel: Vec<f64> =
        (0..n).map(|i| (-(x - xi[i]) * (x - xi[i]) / (4.0 * t)).exp() * f[i]).collect();
    let value = trapezoid(xi, &kernel) / (2.0 * (PI * t).sqrt());
    let moments: Vec<f64> = (0..n).map(|i| f[i] * xi[i]).collect();
    let leading = x / (4.0 * PI.sqrt() * t.powf(1.5)) * trapezoid(xi, &moments);
    Ok((value, leading))
}

/// Spectral density of the level transform at x; the default domain stops
/// at 1.9 because the tail integral converges only algebraically as x -> 2.
pub fn lambda_density(curve: &BoundaryCurve, tail: &TailModel, x: f64) -> Result<f64> {
    if !(1.0..=1.9).contains(&x) {
        return Err(Error::Domain(format!(
            "density abscissa {x} outside [1, 1.9]; use the unrestricted variant up to 2"
        )));
    }
    Ok(lambda_density_model(curve, tail, x))
}

/// Same density with the domain opened up to the slow-convergence endpoint.
pub fn lambda_density_unrestricted(
    curve: &BoundaryCurve,
    tail: &TailModel,
    x: f64,
) -> Result<f64> {
    if !(1.0..=2.0).contains(&x) {
        return Err(Error::Domain(format!("density abscissa {x} outside [1, 2]")));
    }
    Ok(lambda_density_model(curve, tail, x))
}

/// Two-point Richardson extrapolation of lambda(1+u)/sqrt(u) to u = 0.
pub fn lambda0_limit(curve: &BoundaryCurve, tail: &TailModel) -> Result<f64> {
    let v1 = lambda_density(curve, tail, 1.0 + 1e-3)? / 1e-3_f64.sqrt();
    let v4 = lambda_density(curve, tail, 1.0 + 4e-3)? / 4e-3_f64.sqrt();
    Ok((4.0 * v1 - v4) / 3.0)
}

/// Tabulated density on [1, 1.9] plus its edge extrapolation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaDensity {
    pub x: Vec<f64>,
    pub lam: Vec<f64>,
    pub lambda0_limit: f64,
}

impl LambdaDensity {
    pub fn sample(curve: &BoundaryCurve, tail: &TailModel, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams("need at least two samples".into()));
        }
        let mut x = Vec::with_capacity(n);
        let mut lam = Vec::with_capacity(n);
        for i in 0..n {
            let xi = 1.0 + 0.9 * i as f64 / (n - 1) as f64;
            x.push(xi);
            lam.push(lambda_density(curve, tail, xi)?);
        }
        Ok(LambdaDensity { x, lam, lambda0_limit: lambda0_limit(curve, tail)? })
    }
}

/// Sum of lambda_j Gamma(j + 3/2) t^{-j-3/2} e^{-t}.
pub fn expansion_eval(t: f64, coefficients: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("expansion needs t > 0, got {t}")));
    }
    let mut acc = 0.0;
    for (j, &lam) in coefficients.iter().enumerate() {
        let jf = j as f64;
        acc += lam * gamma_half(j) * t.powf(-jf - 1.5);
    }
    Ok(acc * (-t).exp())
}

/// Small-time boundary law (1+rho) sqrt(2 t log(1/t)); the log makes it
/// meaningful only below 1/e.
pub fn small_time_reference(t: f64, rho: f64) -> Result<f64> {
    if !(t > 0.0 && t < (-1.0_f64).exp()) {
        return Err(Error::Domain(format!("small-time law needs 0 < t < 1/e, got {t}")));
    }
    Ok((1.0 + rho) * (2.0 * t * (1.0 / t).ln()).sqrt())
}

/// Second theta-derivative of the level at theta = 0, through the erfc
/// closed form of the upper incomplete gamma at -1/2.
pub fn d2varphi_dtheta2_at0(t: f64, rho: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("needs t > 0, got {t}")));
    }
    let g = 2.0 * ((-t).exp() / t.sqrt() - PI.sqrt() * erfc(t.sqrt()));
    Ok(g / (2.0 * PI.sqrt() * (1.0 - rho) * (1.0 - rho)))
}

/// Outcome of the quadratic-onset check: levels at theta = delta and
/// delta/2 against the closed-form second derivative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub rho: f64,
    pub delta: f64,
    pub t_samples: Vec<f64>,
    pub varphi_delta: Vec<f64>,
    pub varphi_half: Vec<f64>,
    /// varphi(t; delta/2) / varphi(t; delta), near 1/4 for quadratic onset.
    pub onset_ratio: Vec<f64>,
    /// 2 varphi(t; delta)/delta^2 versus the closed form.
    pub second_derivative_estimate: Vec<f64>,
    pub closed_form: Vec<f64>,
    pub max_rel_dev: f64,
}

/// Runs the obstacle solver at theta = delta and delta/2 (concurrently) and
/// compares the onset of the level against d2varphi_dtheta2_at0.
pub fn first_theta_derivative_check(
    rho: f64,
    delta: f64,
    h: f64,
    dt: f64,
    t_max: f64,
    t_samples: &[f64],
) -> Result<PerturbationReport> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParams(format!("delta must be positive, got {delta}")));
    }
    let run = |theta: f64| -> Result<BoundaryCurve> {
        let p = CanonicalParams::new(rho, theta)?;
        let g = GridSpec::standard(&p, h, dt, t_max)?;
        let sol = solve_with(&p, &g, LcpMethod::ProjectedSweep)?;
        extract_boundary(&sol, DEFAULT_ACTIVE_THRESHOLD)
    };
    let (full, half) = rayon::join(|| run(delta), || run(0.5 * delta));
    let (full, half) = (full?, half?);
    let mut report = PerturbationReport {
        rho,
        delta,
        t_samples: t_samples.to_vec(),
        varphi_delta: Vec::new(),
        varphi_half: Vec::new(),
        onset_ratio: Vec::new(),
        second_derivative_estimate: Vec::new(),
        closed_form: Vec::new(),
        max_rel_dev: 0.0,
    };
    for &tq in t_samples {
        if !(tq > 0.0 && tq <= t_max) {
            return Err(Error::Domain(format!("sample time {tq} outside (0, {t_max}]")));
        }
        let vd = interp(&full.t, &full.varphi, tq);
        let vh = interp(&half.t, &half.varphi, tq);
        let est = 2.0 * vd / (delta * delta);
        let cf = d2varphi_dtheta2_at0(tq, rho)?;
        report.varphi_delta.push(vd);
        report.varphi_half.push(vh);
        report.onset_ratio.push(if vd != 0.0 { vh / vd } else { f64::NAN });
        report.second_derivative_estimate.push(est);
        report.closed_form.push(cf);
        report.max_rel_dev = report.max_rel_dev.max(((est - cf) / cf).abs());
    }
    Ok(report)
}

/// Diagnostic for the density route back to the level: the Laplace image
/// of the tabulated density should reproduce varphi with an error falling
/// faster than the leading tail law on [3, 6].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiLambdaReport {
    pub t: Vec<f64>,
    /// |varphi - varphi_Lambda| t^{3/2} e^t at each sample.
    pub weighted_gap: Vec<f64>,
    pub decreasing: bool,
}

pub fn phi_lambda_diagnostic(curve: &BoundaryCurve, tail: &TailModel) -> Result<PhiLambdaReport> {
    let dens = LambdaDensity::sample(curve, tail, 181)?;
    let mut t = Vec::with_capacity(13);
    let mut weighted_gap = Vec::with_capacity(13);
    let mut decreasing = true;
    for i in 0..13 {
        let tq = 3.0 + 3.0 * i as f64 / 12.0;
        let img: Vec<f64> =
            (0..dens.x.len()).map(|j| dens.lam[j] * (-dens.x[j] * tq).exp()).collect();
        let phl = trapezoid(&dens.x, &img);
        let pd = interp(&curve.t, &curve.varphi, tq);
        let w = (pd - phl).abs() * tq.powf(1.5) * tq.exp();
        if let Some(&prev) = weighted_gap.last() {
            if w >= prev {
                decreasing = false;
            }
        }
        t.push(tq);
        weighted_gap.push(w);
    }
    Ok(PhiLambdaReport { t, weighted_gap, decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn flat_zero_curve(rho: f64, t_max: f64) -> BoundaryCurve {
        let p = CanonicalParams::new(rho, 0.0).unwrap();
        let n = 1601;
        let t: Vec<f64> = (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect();
        BoundaryCurve {
            t,
            phi: vec![0.0; n],
            phi_raw: vec![0.0; n],
            varphi: vec![0.0; n],
            dphi: vec![0.0; n],
            params: p,
        }
    }

    #[test]
    fn moment_and_envelope_constant_match_frozen_values() {
        let p = CanonicalParams::new(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(first_moment_v1(&p), -0.40584134720168919417, epsilon = 1e-15);
        assert_abs_diff_eq!(b1(&p), 0.11448573033209069639, epsilon = 1e-15);
    }

    #[test]
    fn moment_sweep_is_negative_and_matches_the_oracle() {
        let cases = [
            (-0.5, 0.5, -0.06296461188, 0.02762976079),
            (-0.5, 1.0, -0.1852092102, 0.09288276193),
            (-0.5, 2.0, -0.2974598636, 0.1864708406),
            (0.0, 0.5, -0.1577298209, 0.04449476098),
            (0.0, 1.0, -0.4058413472, 0.1144857303),
            (0.0, 2.0, -0.5208335272, 0.1469244254),
            (0.5, 0.5, -0.306527395, 0.08494863982),
            (0.5, 1.0, -0.5846103421, 0.1385203674),
            (0.5, 2.0, -0.1236553964, 0.02431350283),
        ];
        for (rho, theta, want_m, want_b) in cases {
            let p = CanonicalParams::new(rho, theta).unwrap();
            let m = first_moment_v1(&p);
            let b = b1(&p);
            assert!(m < 0.0, "moment not negative at ({rho}, {theta})");
            assert!(b > 0.0);
            assert_abs_diff_eq!(m, want_m, epsilon = 1e-8);
            assert_abs_diff_eq!(b, want_b, epsilon = 1e-9);
        }
    }

    #[test]
    fn moment_vanishes_with_theta_and_survives_the_series_branch() {
        let p0 = CanonicalParams::new(0.4, 0.0).unwrap();
        assert_eq!(first_moment_v1(&p0), 0.0);
        assert_eq!(b1(&p0), 0.0);
        // rho inside the series window vs just outside: continuity
        let a = first_moment_v1(&CanonicalParams::new(5e-5, 1.0).unwrap());
        let b = first_moment_v1(&CanonicalParams::new(2e-4, 1.0).unwrap());
        let c = first_moment_v1(&CanonicalParams::new(0.0, 1.0).unwrap());
        assert!((a - c).abs() < 1e-4);
        assert!((b - c).abs() < 5e-4);
        assert!((a - c).abs() < (b - c).abs());
    }

    #[test]
    fn zero_theta_sends_every_tail_quantity_to_zero() {
        let curve = flat_zero_curve(0.3, 8.0);
        let tail = TailModel::zero();
        let (a, b) = lambda0_lines(&curve, &tail);
        assert_eq!(a, 0.0);
        assert_eq!(b, 0.0);
        for form in [Beta1Form::Lambda0, Beta1Form::Intro, Beta1Form::Parts] {
            assert_eq!(beta1(&curve, &tail, form), 0.0);
        }
        assert_eq!(lambda_density(&curve, &tail, 1.5).unwrap(), 0.0);
        let rep = AsymptoticReport::compute(&curve, &tail);
        assert_eq!(rep.beta1, 0.0);
        assert_eq!(rep.tail_fit, Some(0.0));
        assert_eq!(rep.consistency, 0.0);
    }

    #[test]
    fn report_serializes_under_the_published_keys() {
        let curve = flat_zero_curve(0.0, 8.0);
        let rep = AsymptoticReport::compute(&curve, &TailModel::zero());
        let json = serde_json::to_string(&rep).unwrap();
        for key in [
            "\"mu\"",
            "\"eta\"",
            "\"moment_v1\"",
            "\"B1\"",
            "\"lambda0\"",
            "\"beta1\"",
            "\"beta1_intro\"",
            "\"beta1_parts\"",
            "\"tail_fit\"",
            "\"consistency\"",
        ] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
        assert!(!json.contains("\"b1\""));
        let back: AsymptoticReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.b1, rep.b1);
    }

    #[test]
    fn density_is_zero_at_the_branch_point_and_guards_its_domain() {
        let curve = flat_zero_curve(0.0, 8.0);
        let tail = TailModel::zero();
        assert_eq!(lambda_density(&curve, &tail, 1.0).unwrap(), 0.0);
        assert!(lambda_density(&curve, &tail, 1.95).is_err());
        assert!(lambda_density_unrestricted(&curve, &tail, 1.95).is_ok());
        assert!(lambda_density_unrestricted(&curve, &tail, 2.05).is_err());
        assert!(lambda_density(&curve, &tail, 0.99).is_err());
    }

    #[test]
    fn heat_extension_matches_the_closed_gaussian_case() {
        let n = 1601;
        let hgrid = 0.01;
        let half = (n - 1) / 2;
        let xi: Vec<f64> = (0..n).map(|i| (i as i64 - half as i64) as f64 * hgrid).collect();
        let f: Vec<f64> = xi.iter().map(|&u| u * (-u * u).exp()).collect();
        let (value, leading) = heat_extension(&xi, &f, 100.0, 1.0).unwrap();
        assert_abs_diff_eq!(value, 0.000124222542099770565, epsilon = 1e-12);
        assert_abs_diff_eq!(leading, 1.25e-4, epsilon = 1e-12);
        assert!((value - leading).abs() / leading < 5e-2);
        // halving the time horizon scales the leading term by 2^{3/2}
        let (_, lead50) = heat_extension(&xi, &f, 50.0, 1.0).unwrap();
        assert_abs_diff_eq!(leading / lead50, 0.5_f64.powf(1.5), epsilon = 1e-14);
    }

    #[test]
    fn heat_extension_conserves_the_first_moment() {
        let n = 1201;
        let half = (n - 1) / 2;
        let xi: Vec<f64> = (0..n).map(|i| (i as i64 - half as i64) as f64 * 0.01).collect();
        let f: Vec<f64> = xi.iter().map(|&u| u * (-u * u).exp()).collect();
        let t = 0.5;
        let xs: Vec<f64> = (0..2401).map(|i| (i as i64 - 1200) as f64 * 0.01).collect();
        let us: Vec<f64> =
            xs.iter().map(|&x| heat_extension(&xi, &f, t, x).unwrap().0).collect();
        let moments: Vec<f64> = xs.iter().zip(&us).map(|(&x, &u)| x * u).collect();
        let evolved = trapezoid(&xs, &moments);
        let initial: Vec<f64> = xi.iter().zip(&f).map(|(&u, &fv)| u * fv).collect();
        assert_abs_diff_eq!(evolved, trapezoid(&xi, &initial), epsilon = 1e-8);
    }

    #[test]
    fn heat_extension_rejects_bad_input() {
        let xi = [-1.0, 0.0, 1.0];
        assert!(heat_extension(&xi, &[1.0, 0.0, 1.0], 1.0, 0.5).is_err());
        assert!(heat_extension(&xi, &[-1.0, 0.0, 1.0], 0.0, 0.5).is_err());
        assert!(heat_extension(&[-1.0, 0.1, 1.0], &[-1.0, 0.0, 1.0], 1.0, 0.5).is_err());
        let (v, l) = heat_extension(&xi, &[0.0, 0.0, 0.0], 2.0, 0.3).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(l, 0.0);
    }

    #[test]
    fn expansion_reduces_to_the_one_term_law() {
        let beta = 0.1249;
        let lam0 = beta / gamma_half(0);
        for t in [2.0, 5.0, 9.0] {
            let got = expansion_eval(t, &[lam0]).unwrap();
            assert_abs_diff_eq!(got, beta * t.powf(-1.5) * (-t).exp(), epsilon = 1e-16);
        }
        assert_eq!(expansion_eval(3.0, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(expansion_eval(3.0, &[]).unwrap(), 0.0);
        assert!(expansion_eval(0.0, &[1.0]).is_err());
        // a second coefficient adds the Gamma(5/2) t^{-5/2} term
        let two = expansion_eval(4.0, &[lam0, 0.3]).unwrap();
        let one = expansion_eval(4.0, &[lam0]).unwrap();
        assert_abs_diff_eq!(
            two - one,
            0.3 * gamma_half(1) * 4.0_f64.powf(-2.5) * (-4.0_f64).exp(),
            epsilon = 1e-16
        );
    }

    #[test]
    fn small_time_law_matches_its_closed_form() {
        assert_abs_diff_eq!(
            small_time_reference(0.01, 0.0).unwrap(),
            0.30348542587702927,
            epsilon = 1e-15
        );
        let base = small_time_reference(0.02, 0.0).unwrap();
        assert_abs_diff_eq!(
            small_time_reference(0.02, 0.5).unwrap(),
            1.5 * base,
            epsilon = 1e-15
        );
        assert!(small_time_reference(0.4, 0.0).is_err());
        assert!(small_time_reference(0.0, 0.0).is_err());
    }

    #[test]
    fn second_theta_derivative_matches_frozen_values() {
        let cases = [
            (0.5, 0.0, 0.166630941175372597),
            (1.0, 0.0, 0.050254541660012221),
            (2.0, 0.0, 0.00849070261682963755),
            (1.0, 0.3, 0.102560289102065757),
        ];
        // the erfc evaluation is good to about 1e-10 absolute, which caps
        // the achievable agreement with the 50-digit reference values
        for (t, rho, want) in cases {
            assert_abs_diff_eq!(d2varphi_dtheta2_at0(t, rho).unwrap(), want, epsilon = 1e-8);
        }
        assert!(d2varphi_dtheta2_at0(40.0, 0.0).unwrap() < 1e-18);
        let r0 = d2varphi_dtheta2_at0(1.0, 0.0).unwrap();
        let r5 = d2varphi_dtheta2_at0(1.0, 0.5).unwrap();
        assert_abs_diff_eq!(r5, 4.0 * r0, epsilon = 1e-14);
    }

    #[test]
    fn quadratic_onset_shows_up_on_a_modest_grid() {
        let report = first_theta_derivative_check(
            0.0,
            0.05,
            2.5e-3,
            5e-4,
            1.5,
            &[0.5, 1.0],
        )
        .unwrap();
        for (i, &r) in report.onset_ratio.iter().enumerate() {
            assert!(
                (0.15..=0.35).contains(&r),
                "onset ratio {r} at t = {} not near 1/4",
                report.t_samples[i]
            );
        }
        assert!(
            report.max_rel_dev < 0.15,
            "2 varphi/delta^2 off by {} from the closed form",
            report.max_rel_dev
        );
    }
}
