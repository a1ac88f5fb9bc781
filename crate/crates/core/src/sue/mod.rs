//! The unified skew-elliptical distribution `SUE_{m,q}(ξ, Ω, Δ, τ, Γ̄, g)`.
//!
//! Density:
//! `p(z) = f_m(z−ξ; Ω, g^{(m)}) · F_q(τ + Δᵀ Ω̄⁻¹ ω⁻¹ (z−ξ); Γ̄ − Δᵀ Ω̄⁻¹ Δ, g_Q^{(q)}) / F_q(τ; Γ̄, g^{(q)})`.
//! Equivalently `z = (z̄ | z̄₀ > 0)` with
//! `(z̄, z̄₀) ~ EC_{m+q}((ξ, τ), [[Ω, ωΔ], [Δᵀω, Γ̄]], g)`.

mod closure;
mod density;
mod sample;

pub use closure::{
    condition_on_positivity, condition_on_value, linear_transform, marginal, reduce_latent, standardize_gamma,
    BlockPartition,
};
pub use density::{sue_cdf, sue_pdf, DensityEvaluator, PdfEstimate};
pub use sample::{sue_moments, sue_sample, MomentEstimate, SampleSet};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::generators::DensityGenerator;
use crate::linalg::{cholesky, corr_split, SymMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SueDistribution {
    xi: DVector<f64>,
    omega: SymMatrix,
    delta: DMatrix<f64>,
    tau: DVector<f64>,
    gamma_bar: SymMatrix,
    generator: DensityGenerator,
}

impl SueDistribution {
    /// Validates dimensions, `Ω ≻ 0`, unit diagonal of `Γ̄`, and positive
    /// definiteness of the extended dispersion `[[Ω̄, Δ], [Δᵀ, Γ̄]]`.
    pub fn new(
        xi: DVector<f64>,
        omega: SymMatrix,
        delta: DMatrix<f64>,
        tau: DVector<f64>,
        gamma_bar: SymMatrix,
        generator: DensityGenerator,
    ) -> Result<Self> {
        let m = xi.len();
        let q = tau.len();
        if m == 0 {
            return Err(Error::InvalidArgument("observed dimension must be ≥ 1".into()));
        }
        if omega.dim() != m || delta.nrows() != m || delta.ncols() != q || gamma_bar.dim() != q {
            return Err(Error::InvalidArgument(format!(
                "inconsistent dimensions: xi {m}, Omega {}, Delta {}x{}, tau {q}, Gamma {}",
                omega.dim(),
                delta.nrows(),
                delta.ncols(),
                gamma_bar.dim()
            )));
        }
        if xi.iter().chain(tau.iter()).chain(delta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter entry".into()));
        }
        generator.validate()?;
        cholesky(&omega).map_err(|e| context(e, "Omega"))?;
        if let Some(i) = gamma_bar.diagonal().iter().position(|v| (v - 1.0).abs() > 1e-10) {
            return Err(Error::InvalidArgument(format!(
                "Gamma_bar must be a correlation matrix (diagonal entry {i} is {})",
                gamma_bar.matrix()[(i, i)]
            )));
        }
        if q > 0 {
            let split = corr_split(&omega)?;
            let ext = extended(split.omega_bar.matrix(), &delta, gamma_bar.matrix());
            cholesky(&SymMatrix::new(ext)?).map_err(|e| context(e, "extended dispersion [[Ω̄, Δ], [Δᵀ, Γ̄]]"))?;
        }
        Ok(SueDistribution { xi, omega, delta, tau, gamma_bar, generator })
    }

    /// The `q = 0` elliptical case.
    pub fn elliptical(xi: DVector<f64>, omega: SymMatrix, generator: DensityGenerator) -> Result<Self> {
        let m = xi.len();
        SueDistribution::new(xi, omega, DMatrix::zeros(m, 0), DVector::zeros(0), SymMatrix::zeros(0), generator)
    }

    pub fn m(&self) -> usize {
        self.xi.len()
    }

    pub fn q(&self) -> usize {
        self.tau.len()
    }

    pub fn xi(&self) -> &DVector<f64> {
        &self.xi
    }

    pub fn omega(&self) -> &SymMatrix {
        &self.omega
    }

    pub fn delta(&self) -> &DMatrix<f64> {
        &self.delta
    }

    pub fn tau(&self) -> &DVector<f64> {
        &self.tau
    }

    pub fn gamma_bar(&self) -> &SymMatrix {
        &self.gamma_bar
    }

    pub fn generator(&self) -> &DensityGenerator {
        &self.generator
    }

    /// Scales `ω = diag(Ω)^{1/2}`.
    pub fn scales(&self) -> DVector<f64> {
        self.omega.diagonal().map(f64::sqrt)
    }

    /// Folds a `StudentTScaled(ν, s)` generator into the parameters,
    /// returning the plain `SUT(ξ, sΩ, Δ, s^{-1/2}τ, Γ̄, ν)` together with `s`.
    /// Other generators are returned unchanged with `None`.
    pub fn absorb_scale(&self) -> (SueDistribution, Option<f64>) {
        match self.generator {
            DensityGenerator::StudentTScaled { nu, scale } => {
                let d = SueDistribution {
                    xi: self.xi.clone(),
                    omega: self.omega.scaled(scale),
                    delta: self.delta.clone(),
                    tau: &self.tau / scale.sqrt(),
                    gamma_bar: self.gamma_bar.clone(),
                    generator: DensityGenerator::StudentT { nu },
                };
                (d, Some(scale))
            }
            _ => (self.clone(), None),
        }
    }

    /// Largest absolute parameter difference, for tests and diagnostics.
    /// Infinite when dimensions or generators differ.
    pub fn max_abs_diff(&self, other: &SueDistribution) -> f64 {
        if self.m() != other.m() || self.q() != other.q() || self.generator != other.generator {
            return f64::INFINITY;
        }
        let d = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax();
        let v = |a: &DVector<f64>, b: &DVector<f64>| if a.is_empty() { 0.0 } else { (a - b).amax() };
        let mut out = v(&self.xi, &other.xi).max(d(self.omega.matrix(), other.omega.matrix()));
        if self.q() > 0 {
            out = out
                .max(d(&self.delta, &other.delta))
                .max(v(&self.tau, &other.tau))
                .max(d(self.gamma_bar.matrix(), other.gamma_bar.matrix()));
        }
        out
    }
}

fn context(e: Error, what: &str) -> Error {
    match e {
        Error::NotPositiveDefinite(msg) => Error::NotPositiveDefinite(format!("{what}: {msg}")),
        other => other,
    }
}

pub(crate) fn extended(top_left: &DMatrix<f64>, off: &DMatrix<f64>, bottom_right: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, q) = (top_left.nrows(), bottom_right.nrows());
    let mut out = DMatrix::zeros(m + q, m + q);
    out.view_mut((0, 0), (m, m)).copy_from(top_left);
    out.view_mut((0, m), (m, q)).copy_from(off);
    out.view_mut((m, 0), (q, m)).copy_from(&off.transpose());
    out.view_mut((m, m), (q, q)).copy_from(bottom_right);
    out
}

/// `diag(d) · M`.
pub(crate) fn scale_rows(m: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)])
}

/// `M · diag(d)`.
pub(crate) fn scale_cols(m: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[j])
}
