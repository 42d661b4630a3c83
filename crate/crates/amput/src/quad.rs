//! Small numerical kernels shared across the crate: isotonic projection,
//! trapezoid sums, exact product integrals of piecewise-linear data against
//! exponentials, Gauss-Legendre nodes, and tiny least-squares solves.

use num_complex::Complex64;
use std::sync::OnceLock;

/// Pool-adjacent-violators projection onto nondecreasing sequences
/// (least-squares, unit weights). Returns a sequence of the same length.
pub fn pav(y: &[f64]) -> Vec<f64> {
    let mut vals: Vec<f64> = Vec::with_capacity(y.len());
    let mut wts: Vec<f64> = Vec::with_capacity(y.len());
    for &yi in y {
        let mut v = yi;
        let mut w = 1.0;
        while let Some(&last) = vals.last() {
            if last <= v {
                break;
            }
            let w0 = wts.pop().expect("weights track values");
            let v0 = vals.pop().expect("nonempty");
            v = (v * w + v0 * w0) / (w + w0);
            w += w0;
        }
        vals.push(v);
        wts.push(w);
    }
    let mut out = Vec::with_capacity(y.len());
    for (v, w) in vals.iter().zip(&wts) {
        for _ in 0..(w.round() as usize) {
            out.push(*v);
        }
    }
    debug_assert_eq!(out.len(), y.len());
    out
}

/// Piecewise-linear interpolation on a sorted abscissa grid, clamped at the
/// ends (the convention of numpy's interp).
pub fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(!xs.is_empty());
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let j = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let (y0, y1) = (ys[j - 1], ys[j]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

pub fn trapezoid(t: &[f64], f: &[f64]) -> f64 {
    assert_eq!(t.len(), f.len());
    let mut acc = 0.0;
    for i in 1..t.len() {
        acc += 0.5 * (f[i] + f[i - 1]) * (t[i] - t[i - 1]);
    }
    acc
}

pub fn trapezoid_c(t: &[f64], f: &[Complex64]) -> Complex64 {
    assert_eq!(t.len(), f.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 1..t.len() {
        acc += 0.5 * (f[i] + f[i - 1]) * (t[i] - t[i - 1]);
    }
    acc
}

/// Gamma(j + 3/2) by the half-integer recurrence from Gamma(3/2) = sqrt(pi)/2.
/// Exact to rounding, unlike a general-purpose gamma approximation.
pub fn gamma_half(j: usize) -> f64 {
    let mut g = 0.5 * std::f64::consts::PI.sqrt();
    for i in 1..=j {
        g *= i as f64 + 0.5;
    }
    g
}

/// (1 - e^{-x}) / x, stable near x = 0.
pub fn em1c(x: Complex64) -> Complex64 {
    if x.norm() < 1e-4 {
        Complex64::new(1.0, 0.0) - x / 2.0 + x * x / 6.0 - x * x * x / 24.0
    } else {
        (Complex64::new(1.0, 0.0) - (-x).exp()) / x
    }
}

/// (1 - e^{-x}(1 + x)) / x^2, stable near x = 0.
pub fn g2c(x: Complex64) -> Complex64 {
    if x.norm() < 1e-3 {
        Complex64::new(0.5, 0.0) - x / 3.0 + x * x / 8.0 - x * x * x / 30.0
    } else {
        (Complex64::new(1.0, 0.0) - (-x).exp() * (Complex64::new(1.0, 0.0) + x)) / (x * x)
    }
}

/// Integral of a piecewise-linear interpolant of (t, f) against e^{-w t},
/// exact per interval. Used where the decaying exponential varies faster
/// than the sampled data, which breaks plain trapezoid sums.
pub fn product_integral(t: &[f64], f: &[Complex64], w: Complex64) -> Complex64 {
    assert_eq!(t.len(), f.len());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 1..t.len() {
        let dt = t[i] - t[i - 1];
        let e0 = (-w * t[i - 1]).exp();
        let df = f[i] - f[i - 1];
        acc += e0 * dt * (f[i - 1] * em1c(w * dt) + df * g2c(w * dt));
    }
    acc
}

/// 32-point Gauss-Legendre rule on [-1, 1] as (node, weight) pairs in
/// ascending node order, computed once by Newton iteration on P_32.
pub fn gauss_legendre_32() -> &'static [(f64, f64); 32] {
    static TABLE: OnceLock<[(f64, f64); 32]> = OnceLock::new();
    TABLE.get_or_init(|| {
        const N: usize = 32;
        let nf = N as f64;
        let mut out = [(0.0_f64, 0.0_f64); N];
        let legendre = |z: f64| -> (f64, f64) {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..N {
                let jf = j as f64;
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * jf + 1.0) * z * p1 - jf * p2) / (jf + 1.0);
            }
            let dp = nf * (z * p0 - p1) / (z * z - 1.0);
            (p0, dp)
        };
        for i in 0..N / 2 {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(z);
                let step = p / dp;
                z -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            let (_, dp) = legendre(z);
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            out[i] = (-z, w);
            out[N - 1 - i] = (z, w);
        }
        out
    })
}

/// Least-squares fit of y against two column functions by normal equations.
pub fn lstsq2(a0: &[f64], a1: &[f64], y: &[f64]) -> (f64, f64) {
    let n = y.len();
    assert!(a0.len() == n && a1.len() == n && n >= 2);
    let (mut s00, mut s01, mut s11, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        s00 += a0[i] * a0[i];
        s01 += a0[i] * a1[i];
        s11 += a1[i] * a1[i];
        b0 += a0[i] * y[i];
        b1 += a1[i] * y[i];
    }
    let det = s00 * s11 - s01 * s01;
    ((s11 * b0 - s01 * b1) / det, (s00 * b1 - s01 * b0) / det)
}

/// Least-squares fit against three columns by normal equations with a
/// pivoted 3x3 solve.
pub fn lstsq3(a0: &[f64], a1: &[f64], a2: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = y.len();
    assert!(a0.len() == n && a1.len() == n && a2.len() == n && n >= 3);
    let cols = [a0, a1, a2];
    let mut m = [[0.0_f64; 4]; 3];
    for r in 0..3 {
        for c in 0..3 {
            m[r][c] = cols[r].iter().zip(cols[c]).map(|(u, v)| u * v).sum();
        }
        m[r][3] = cols[r].iter().zip(y).map(|(u, v)| u * v).sum();
    }
    for k in 0..3 {
        let piv = (k..3)
            .max_by(|&a, &b| m[a][k].abs().total_cmp(&m[b][k].abs()))
            .expect("nonempty range");
        m.swap(k, piv);
        for r in k + 1..3 {
            let f = m[r][k] / m[k][k];
            for c in k..4 {
                m[r][c] -= f * m[k][c];
            }
        }
    }
    let mut x = [0.0_f64; 3];
    for k in (0..3).rev() {
        let mut acc = m[k][3];
        for c in k + 1..3 {
            acc -= m[k][c] * x[c];
        }
        x[k] = acc / m[k][k];
    }
    (x[0], x[1], x[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pav_projects_onto_monotone_sequences() {
        assert_eq!(pav(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(pav(&[3.0, 1.0]), vec![2.0, 2.0]);
        let out = pav(&[1.0, 3.0, 2.0, 4.0, 0.0]);
        for w in out.windows(2) {
            assert!(w[0] <= w[1]);
        }
        // projection preserves the mean
        let y = [0.4, 0.1, 0.9, 0.3, 0.5, 0.5, 0.2];
        let p = pav(&y);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert_abs_diff_eq!(mean(&y), mean(&p), epsilon = 1e-15);
    }

    #[test]
    fn interp_matches_hand_values() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 10.0, 0.0];
        assert_eq!(interp(&xs, &ys, -1.0), 0.0);
        assert_eq!(interp(&xs, &ys, 0.5), 5.0);
        assert_eq!(interp(&xs, &ys, 1.5), 5.0);
        assert_eq!(interp(&xs, &ys, 7.0), 0.0);
    }

    #[test]
    fn product_integral_reproduces_closed_forms() {
        let t: Vec<f64> = (0..=1000).map(|k| k as f64 * 1e-3).collect();
        let ones: Vec<Complex64> = t.iter().map(|_| Complex64::new(1.0, 0.0)).collect();
        let w = Complex64::new(2.0, 0.0);
        let got = product_integral(&t, &ones, w);
        let want = (1.0 - (-2.0_f64).exp()) / 2.0;
        assert_abs_diff_eq!(got.re, want, epsilon = 1e-14);
        assert_abs_diff_eq!(got.im, 0.0, epsilon = 1e-16);

        // linear integrand is integrated exactly regardless of step size
        let t2: Vec<f64> = vec![0.0, 0.4, 1.0];
        let f2: Vec<Complex64> = t2.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let got = product_integral(&t2, &f2, w);
        let want = (1.0 - 3.0 * (-2.0_f64).exp()) / 4.0;
        assert_abs_diff_eq!(got.re, want, epsilon = 1e-15);

        // complex weight against the same exact linear rule
        let wz = Complex64::new(1.0, 2.0);
        let got = product_integral(&t2, &f2, wz);
        // int_0^1 t e^{-wz t} dt = (1 - e^{-wz}(1 + wz)) / wz^2
        let want = (Complex64::new(1.0, 0.0) - (-wz).exp() * (Complex64::new(1.0, 0.0) + wz))
            / (wz * wz);
        assert!((got - want).norm() < 1e-15);
    }

    #[test]
    fn stable_kernels_match_their_series() {
        for x in [1e-6, 5e-5] {
            let z = Complex64::new(x, 0.0);
            let em1c_series = 1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0;
            let g2c_series = 0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0;
            assert_abs_diff_eq!(em1c(z).re, em1c_series, epsilon = 1e-15);
            assert_abs_diff_eq!(g2c(z).re, g2c_series, epsilon = 1e-15);
        }
        // continuity across the series/closed-form switch: straddle the
        // threshold so closely that the genuine variation of the function
        // is far below the allowed jump
        for (f, thr) in [
            (em1c as fn(Complex64) -> Complex64, 1e-4),
            (g2c as fn(Complex64) -> Complex64, 1e-3),
        ] {
            let a = f(Complex64::new(thr * (1.0 - 1e-6), 0.0)).re;
            let b = f(Complex64::new(thr * (1.0 + 1e-6), 0.0)).re;
            assert!((a - b).abs() < 1e-8, "branch jump {:.3e}", (a - b).abs());
        }
    }

    #[test]
    fn gauss_legendre_rule_is_exact_for_high_degree() {
        let rule = gauss_legendre_32();
        let wsum: f64 = rule.iter().map(|&(_, w)| w).sum();
        assert_abs_diff_eq!(wsum, 2.0, epsilon = 1e-14);
        let p2: f64 = rule.iter().map(|&(x, w)| w * x * x).sum();
        assert_abs_diff_eq!(p2, 2.0 / 3.0, epsilon = 1e-14);
        // degree 62 is still inside the exactness range 2n - 1 = 63
        let p62: f64 = rule.iter().map(|&(x, w)| w * x.powi(62)).sum();
        assert_abs_diff_eq!(p62, 2.0 / 63.0, epsilon = 1e-14);
        let e: f64 = rule.iter().map(|&(x, w)| w * x.exp()).sum();
        assert_abs_diff_eq!(e, std::f64::consts::E - (-1.0_f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn least_squares_recovers_planted_coefficients() {
        let t: Vec<f64> = (1..=40).map(|k| k as f64 * 0.1).collect();
        let a0: Vec<f64> = t.iter().map(|&v| v.powf(-1.5)).collect();
        let a1: Vec<f64> = t.iter().map(|&v| v.powf(-2.5)).collect();
        let y: Vec<f64> = t.iter().map(|&v| 0.7 * v.powf(-1.5) - 0.2 * v.powf(-2.5)).collect();
        let (c0, c1) = lstsq2(&a0, &a1, &y);
        assert_abs_diff_eq!(c0, 0.7, epsilon = 1e-10);
        assert_abs_diff_eq!(c1, -0.2, epsilon = 1e-10);

        let a2: Vec<f64> = t.iter().map(|&v| v.powf(-3.5)).collect();
        let y3: Vec<f64> = t
            .iter()
            .map(|&v| 0.7 * v.powf(-1.5) - 0.2 * v.powf(-2.5) + 0.05 * v.powf(-3.5))
            .collect();
        let (c0, c1, c2) = lstsq3(&a0, &a1, &a2, &y3);
        assert_abs_diff_eq!(c0, 0.7, epsilon = 1e-8);
        assert_abs_diff_eq!(c1, -0.2, epsilon = 1e-8);
        assert_abs_diff_eq!(c2, 0.05, epsilon = 1e-8);
    }
}
