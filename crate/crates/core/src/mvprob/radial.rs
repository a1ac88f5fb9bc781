//! Tabulated chi radius `r(z) = (χ²_ν⁻¹(Φ(z)) / ν)^{1/2}` for the Student
//! kernel. In normal-score space `ln r` is smooth and close to quadratic for
//! every `ν`, so cubic Hermite interpolation of `ln r` on a uniform `z` grid
//! with exact slopes `d ln r/dz = φ(z) / (r f_R(r))` replaces a quantile
//! solve per lattice point.

use std::cell::RefCell;
use std::rc::Rc;

use statrs::function::gamma::ln_gamma;

use super::special::{chi2_inv, norm_cdf, norm_inv, norm_pdf};

const Z_MAX: f64 = 8.25;
const STEPS_PER_UNIT: f64 = 64.0;
const CACHE_LIMIT: usize = 64;
/// Below this the quantile curve is too sharp in `ln r` for the grid, and
/// radii are solved directly.
const MIN_TABULATED_NU: f64 = 0.25;

#[derive(Debug)]
pub(crate) struct RadialTable {
    nu: f64,
    log_r: Vec<f64>,
    slope: Vec<f64>,
}

impl RadialTable {
    fn build(nu: f64) -> Self {
        let n = (2.0 * Z_MAX * STEPS_PER_UNIT) as usize + 1;
        let h = 1.0 / STEPS_PER_UNIT;
        // log f_R(r) = ln 2 + (ν/2) ln(ν/2) − ln Γ(ν/2) + (ν−1) ln r − ν r²/2.
        let log_norm = std::f64::consts::LN_2 + 0.5 * nu * (0.5 * nu).ln() - ln_gamma(0.5 * nu);
        let mut log_r = Vec::with_capacity(n);
        let mut slope = Vec::with_capacity(n);
        for i in 0..n {
            let z = -Z_MAX + i as f64 * h;
            let ri = radius_direct(nu, norm_cdf(z));
            let log_f = log_norm + (nu - 1.0) * ri.ln() - 0.5 * nu * ri * ri;
            log_r.push(ri.ln());
            slope.push(norm_pdf(z) / (ri * log_f.exp()));
        }
        RadialTable { nu, log_r, slope }
    }

    /// `r` at uniform coordinate `w ∈ (0, 1)`.
    pub(crate) fn radius(&self, w: f64) -> f64 {
        let z = norm_inv(w);
        if !(z > -Z_MAX && z < Z_MAX) {
            return radius_direct(self.nu, w);
        }
        let x = (z + Z_MAX) * STEPS_PER_UNIT;
        let i = (x as usize).min(self.log_r.len() - 2);
        let ends = [self.log_r[i], self.log_r[i + 1], self.slope[i], self.slope[i + 1]];
        if ends.iter().any(|v| !v.is_finite()) {
            // Radii that underflow at tiny ν.
            return radius_direct(self.nu, w);
        }
        let t = x - i as f64;
        let h = 1.0 / STEPS_PER_UNIT;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        (h00 * self.log_r[i] + h10 * h * self.slope[i] + h01 * self.log_r[i + 1] + h11 * h * self.slope[i + 1]).exp()
    }
}

pub(crate) fn radius_direct(nu: f64, w: f64) -> f64 {
    (chi2_inv(nu, w) / nu).sqrt()
}

thread_local! {
    static CACHE: RefCell<Vec<Rc<RadialTable>>> = const { RefCell::new(Vec::new()) };
}

/// Shared table for `ν`, built on first use in each thread; `None` for
/// `ν` below the tabulated range.
pub(crate) fn table(nu: f64) -> Option<Rc<RadialTable>> {
    if nu < MIN_TABULATED_NU {
        return None;
    }
    Some(CACHE.with(|c| {
        let mut c = c.borrow_mut();
        if let Some(t) = c.iter().find(|t| t.nu.to_bits() == nu.to_bits()) {
            return Rc::clone(t);
        }
        if c.len() >= CACHE_LIMIT {
            c.remove(0);
        }
        let t = Rc::new(RadialTable::build(nu));
        c.push(Rc::clone(&t));
        t
    }))
}
