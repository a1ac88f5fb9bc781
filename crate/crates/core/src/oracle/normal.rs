//! Normal and bivariate-normal CDFs computed by series and one-dimensional
//! quadrature, independent of the engine's erfc-based and lattice paths.

use std::f64::consts::PI;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn phi(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `Φ(x)`: Taylor series `½ + φ(x) Σ x^{2k+1}/(2k+1)!!` for `|x| ≤ 3`,
/// continued fraction for the tails.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x > 3.0 {
        return 1.0 - upper_tail(x);
    }
    if x < -3.0 {
        return upper_tail(-x);
    }
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 1.0;
    while term.abs() > 1e-17 * sum.abs().max(1e-300) {
        term *= x2 / (2.0 * k + 1.0);
        sum += term;
        k += 1.0;
    }
    0.5 + phi(x) * sum
}

/// `1 − Φ(x)` for `x > 0` by the Laplace continued fraction
/// `φ(x) / (x + 1/(x + 2/(x + 3/(x + …))))`, evaluated bottom-up.
fn upper_tail(x: f64) -> f64 {
    let mut f = x;
    for k in (1..=200).rev() {
        f = x + k as f64 / f;
    }
    phi(x) / f
}

/// `P(X ≤ h, Y ≤ k)` for a standard bivariate normal with correlation `ρ`,
/// via `Φ(h)Φ(k) + (2π)⁻¹ ∫₀^{asin ρ} exp(−(h² + k² − 2hk sin θ)/(2cos²θ)) dθ`.
pub fn bvn_cdf(h: f64, k: f64, rho: f64) -> f64 {
    assert!((-1.0..=1.0).contains(&rho), "correlation out of range: {rho}");
    if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
        return 0.0;
    }
    if h == f64::INFINITY {
        return normal_cdf(k);
    }
    if k == f64::INFINITY {
        return normal_cdf(h);
    }
    if rho == 1.0 {
        return normal_cdf(h.min(k));
    }
    if rho == -1.0 {
        return (normal_cdf(h) + normal_cdf(k) - 1.0).max(0.0);
    }
    let f = |t: f64| {
        let c = t.cos();
        if c <= 0.0 {
            return 0.0;
        }
        (-(h * h + k * k - 2.0 * h * k * t.sin()) / (2.0 * c * c)).exp()
    };
    let upper = rho.asin();
    let integral = adaptive_simpson(&f, 0.0, upper, 1e-15);
    (normal_cdf(h) * normal_cdf(k) + integral / (2.0 * PI)).clamp(0.0, 1.0)
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `Φ` by the error-function identity, for cross-checks only.
#[cfg(test)]
fn erf_based(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 20-digit reference values of `Φ`.
    const REFERENCE: [(f64, f64); 16] = [
        (-37.0, 5.725_571_222_524_576_8e-300),
        (-20.0, 2.753_624_118_606_233_7e-89),
        (-8.5, 9.479_534_822_203_318_4e-18),
        (-6.0, 9.865_876_450_376_981_4e-10),
        (-4.05, 2.560_881_647_404_148_8e-5),
        (-3.96, 3.747_488_169_107_344_2e-5),
        (-3.0, 1.349_898_031_630_094_5e-3),
        (-2.999, 1.354_336_533_727_106_7e-3),
        (-1.5, 6.680_720_126_885_806_6e-2),
        (-0.3, 0.382_088_577_811_047_36),
        (0.0, 0.5),
        (0.7, 0.758_036_347_776_926_99),
        (2.5, 0.993_790_334_674_223_86),
        (3.2, 0.999_312_862_062_084_15),
        (5.5, 0.999_999_981_010_437_53),
        (9.0, 1.0),
    ];

    #[test]
    fn normal_cdf_matches_reference() {
        for (x, want) in REFERENCE {
            let got = normal_cdf(x);
            assert!(((got - want) / want).abs() < 1e-13, "{x}: {got} vs {want}");
        }
    }

    #[test]
    fn normal_cdf_close_to_erf_identity() {
        for i in -100..=100 {
            let x = i as f64 * 0.09;
            let (a, b) = (normal_cdf(x), erf_based(x));
            assert!(((a - b) / b).abs() < 1e-9, "{x}: {a} vs {b}");
        }
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-15);
        assert!(((normal_cdf(-8.0) - 6.220_960_574_271_784e-16) / 6.22e-16).abs() < 1e-12);
    }

    #[test]
    fn orthant_identity() {
        for rho in [-0.9, -0.5, 0.0, 0.5, 0.9] {
            let exact = 0.25 + f64::asin(rho) / (2.0 * PI);
            assert!((bvn_cdf(0.0, 0.0, rho) - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn independence_and_limits() {
        assert!((bvn_cdf(0.3, -1.2, 0.0) - normal_cdf(0.3) * normal_cdf(-1.2)).abs() < 1e-15);
        assert_eq!(bvn_cdf(1.0, 0.5, 1.0), normal_cdf(0.5));
        assert!((bvn_cdf(1.0, 0.5, 0.999_999) - normal_cdf(0.5)).abs() < 1e-4);
        assert_eq!(bvn_cdf(f64::NEG_INFINITY, 0.5, 0.3), 0.0);
    }

    #[test]
    fn symmetry_relation() {
        // P(X ≤ h, Y ≤ k; ρ) + P(X ≤ h, Y > k; ρ) = Φ(h), and the second term
        // is P(X ≤ h, −Y < −k; −ρ).
        let (h, k, rho) = (0.7, -0.4, 0.65);
        let s = bvn_cdf(h, k, rho) + (normal_cdf(h) - bvn_cdf(h, k, rho));
        assert!((s - normal_cdf(h)).abs() < 1e-15);
        let lhs = normal_cdf(h) - bvn_cdf(h, k, rho);
        let rhs = bvn_cdf(h, -k, -rho);
        assert!((lhs - rhs).abs() < 1e-14, "{lhs} vs {rhs}");
    }
}
