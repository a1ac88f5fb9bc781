use nalgebra::{DMatrix, DVector};

use super::{extended, scale_rows, SueDistribution};
use crate::error::{Error, Result};
use crate::generators::condition_generator;
use crate::linalg::{cholesky, Cholesky, SymMatrix};
use crate::mvprob::{elliptical_cdf, ProbEstimate};

/// Density value with a first-order error bound inherited from the CDF
/// factors. `log_value` is computed without exponentiating the pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdfEstimate {
    pub value: f64,
    pub abs_error: f64,
    pub log_value: f64,
}

/// Precomputed pieces of the density, reusable across evaluation points.
#[derive(Debug, Clone)]
pub struct DensityEvaluator {
    d: SueDistribution,
    chol: Cholesky,
    log_det: f64,
    /// `Δᵀ Ω̄⁻¹ ω⁻¹ = (Ω⁻¹ ω Δ)ᵀ`, q × m.
    slope: DMatrix<f64>,
    /// `Γ̄ − Δᵀ Ω̄⁻¹ Δ`.
    cond_disp: Option<SymMatrix>,
    denom: ProbEstimate,
    tol: f64,
    seed: u64,
}

impl DensityEvaluator {
    pub fn new(d: &SueDistribution, tol: f64, seed: u64) -> Result<Self> {
        let chol = cholesky(d.omega())?;
        let log_det = chol.log_det();
        let (m, q) = (d.m(), d.q());
        if q == 0 {
            return Ok(DensityEvaluator {
                d: d.clone(),
                chol,
                log_det,
                slope: DMatrix::zeros(0, m),
                cond_disp: None,
                denom: ProbEstimate::exact(1.0),
                tol,
                seed,
            });
        }
        let w_delta = scale_rows(d.delta(), &d.scales());
        let x = chol.solve_mat(&w_delta);
        let slope = x.transpose();
        let cond_disp = SymMatrix::new(d.gamma_bar().matrix() - w_delta.transpose() * &x)?;
        let denom = elliptical_cdf(d.tau(), d.gamma_bar(), d.generator(), tol, seed)?;
        if denom.value <= 0.0 {
            return Err(Error::InvalidArgument("normalizing probability F_q(τ; Γ̄) is zero".into()));
        }
        Ok(DensityEvaluator { d: d.clone(), chol, log_det, slope, cond_disp: Some(cond_disp), denom, tol, seed })
    }

    pub fn distribution(&self) -> &SueDistribution {
        &self.d
    }

    /// `F_q(τ; Γ̄, g^{(q)})`, the acceptance probability of the selection
    /// representation.
    pub fn normalizer(&self) -> ProbEstimate {
        self.denom
    }

    /// Elliptical part `log f_m(z − ξ; Ω, g^{(m)})` and the quadratic form.
    fn log_elliptical(&self, r: &DVector<f64>) -> (f64, f64) {
        let q = self.chol.quad_form(r);
        (-0.5 * self.log_det + self.d.generator().log_eval(self.d.m(), q), q)
    }

    pub fn pdf(&self, z: &DVector<f64>) -> Result<PdfEstimate> {
        let m = self.d.m();
        if z.len() != m {
            return Err(Error::InvalidArgument(format!("point has length {}, expected {m}", z.len())));
        }
        let r = z - self.d.xi();
        let (log_f, quad) = self.log_elliptical(&r);
        let Some(cond_disp) = &self.cond_disp else {
            let v = log_f.exp();
            return Ok(PdfEstimate { value: v, abs_error: 0.0, log_value: log_f });
        };
        let q = self.d.q();
        let arg = self.d.tau() + &self.slope * &r;
        let g_cond = condition_generator(self.d.generator(), m + q, m, quad)?;
        let num = elliptical_cdf(&arg, cond_disp, &g_cond, self.tol, self.seed)?;
        let den = self.denom;
        let log_value = log_f + num.value.ln() - den.value.ln();
        let value = log_value.exp();
        let scale = log_f.exp() / den.value;
        let abs_error = scale * num.abs_error + value * den.abs_error / den.value;
        Ok(PdfEstimate { value, abs_error, log_value })
    }
}

/// Density at `z`.
pub fn sue_pdf(d: &SueDistribution, z: &DVector<f64>, tol: f64, seed: u64) -> Result<PdfEstimate> {
    DensityEvaluator::new(d, tol, seed)?.pdf(z)
}

/// `P(Z ≤ z) = F_{m+q}([z−ξ; τ]; [[Ω, −ωΔ], [−Δᵀω, Γ̄]], g) / F_q(τ; Γ̄, g)`.
pub fn sue_cdf(d: &SueDistribution, z: &DVector<f64>, tol: f64, seed: u64) -> Result<ProbEstimate> {
    let (m, q) = (d.m(), d.q());
    if z.len() != m {
        return Err(Error::InvalidArgument(format!("point has length {}, expected {m}", z.len())));
    }
    let r = z - d.xi();
    if q == 0 {
        return elliptical_cdf(&r, d.omega(), d.generator(), tol, seed);
    }
    let off = -scale_rows(d.delta(), &d.scales());
    let joint = SymMatrix::new(extended(d.omega().matrix(), &off, d.gamma_bar().matrix()))?;
    let mut upper = DVector::zeros(m + q);
    upper.rows_mut(0, m).copy_from(&r);
    upper.rows_mut(m, q).copy_from(d.tau());
    let num = elliptical_cdf(&upper, &joint, d.generator(), tol, seed)?;
    let den = elliptical_cdf(d.tau(), d.gamma_bar(), d.generator(), tol, seed)?;
    let value = num.value / den.value;
    let abs_error = num.abs_error / den.value + value * den.abs_error / den.value;
    Ok(ProbEstimate { value: value.clamp(0.0, 1.0), abs_error, n_points: num.n_points + den.n_points })
}
