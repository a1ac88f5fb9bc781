//! Scalar distribution functions used by the integration kernels.

use statrs::function::beta::beta_reg;
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{gamma_lr, ln_gamma};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() * 0.398_942_280_401_432_7
}

/// Standard normal quantile.
#[inline]
pub fn norm_inv(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Univariate Student-t CDF through the regularized incomplete beta function.
pub fn t_cdf(x: f64, nu: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let x2 = x * x;
    if nu > x2 {
        let half = 0.5 * beta_reg(0.5, 0.5 * nu, x2 / (nu + x2));
        if x > 0.0 { 0.5 + half } else { 0.5 - half }
    } else {
        let tail = 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + x2));
        if x > 0.0 { 1.0 - tail } else { tail }
    }
}

/// Inverse of the regularized lower incomplete gamma function `P(a, ·)`.
///
/// Wilson–Hilferty (or small-`a` power-law) start followed by Halley steps.
pub fn gamma_p_inv(a: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let gln = ln_gamma(a);
    let a1 = a - 1.0;
    let (lna1, afac) = if a > 1.0 {
        let lna1 = a1.ln();
        (lna1, (a1 * (lna1 - 1.0) - gln).exp())
    } else {
        (0.0, 0.0)
    };
    let mut x = if a > 1.0 {
        let pp = if p < 0.5 { p } else { 1.0 - p };
        let t = (-2.0 * pp.ln()).sqrt();
        let mut z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        if p < 0.5 {
            z = -z;
        }
        (a * (1.0 - 1.0 / (9.0 * a) - z / (3.0 * a.sqrt())).powi(3)).max(1e-3)
    } else {
        let t = 1.0 - a * (0.253 + a * 0.12);
        if p < t { (p / t).powf(1.0 / a) } else { 1.0 - (1.0 - (p - t) / (1.0 - t)).ln() }
    };
    for _ in 0..30 {
        if x <= 0.0 {
            return 0.0;
        }
        let err = gamma_lr(a, x) - p;
        let dens = if a > 1.0 {
            afac * (-(x - a1) + a1 * (x.ln() - lna1)).exp()
        } else {
            (-x + a1 * x.ln() - gln).exp()
        };
        if dens == 0.0 {
            break;
        }
        let u = err / dens;
        let step = u / (1.0 - 0.5 * (u * (a1 / x - 1.0)).min(1.0));
        x -= step;
        if x <= 0.0 {
            x = 0.5 * (x + step);
        }
        if step.abs() < 1e-14 * x.max(1e-300) {
            break;
        }
    }
    x
}

/// Chi-square quantile with `nu` degrees of freedom.
pub fn chi2_inv(nu: f64, p: f64) -> f64 {
    2.0 * gamma_p_inv(0.5 * nu, p)
}
