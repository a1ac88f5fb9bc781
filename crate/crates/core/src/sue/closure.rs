//! Closure of the family under affine maps, marginalization, conditioning on
//! values and on positivity, plus the two canonicalizations (correlation-form
//! `Γ̄` and removal of redundant latent coordinates).

use nalgebra::{DMatrix, DVector};

use super::{scale_cols, scale_rows, SueDistribution};
use crate::error::{Error, Result};
use crate::generators::{condition_generator, DensityGenerator};
use crate::linalg::{cholesky, SymMatrix};

/// Absolute threshold below which a latent coordinate's shape, correlation
/// or truncation entries count as zero in [`reduce_latent`]. These entries
/// live on a correlation scale, so an absolute threshold is scale-free.
pub const LATENT_ZERO_TOL: f64 = 1e-10;

/// Ordered split of `0..m` into two blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    pub idx_1: Vec<usize>,
    pub idx_2: Vec<usize>,
}

impl BlockPartition {
    pub fn new(m: usize, idx_1: Vec<usize>, idx_2: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; m];
        for &k in idx_1.iter().chain(&idx_2) {
            if k >= m {
                return Err(Error::InvalidIndex { index: k, dim: m });
            }
            if seen[k] {
                return Err(Error::InvalidArgument(format!("index {k} repeated in partition")));
            }
            seen[k] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("partition does not cover every index".into()));
        }
        Ok(BlockPartition { idx_1, idx_2 })
    }

    /// `idx_1` as given and its complement in increasing order.
    pub fn split(m: usize, idx_1: Vec<usize>) -> Result<Self> {
        let idx_2 = (0..m).filter(|k| !idx_1.contains(k)).collect();
        BlockPartition::new(m, idx_1, idx_2)
    }

    /// First `k` coordinates against the remainder.
    pub fn leading(m: usize, k: usize) -> Result<Self> {
        BlockPartition::split(m, (0..k.min(m)).collect())
    }
}

fn require_blocks(p: &BlockPartition, m: usize) -> Result<()> {
    BlockPartition::new(m, p.idx_1.clone(), p.idx_2.clone())?;
    if p.idx_1.is_empty() || p.idx_2.is_empty() {
        return Err(Error::InvalidArgument("both partition blocks must be nonempty".into()));
    }
    Ok(())
}

/// `A z + b` for `A` of full row rank `r ≤ m`:
/// `SUE_{r,q}(Aξ + b, AΩAᵀ, ω_A⁻¹ A ω Δ, τ, Γ̄)`.
pub fn linear_transform(d: &SueDistribution, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<SueDistribution> {
    let (r, m) = (a.nrows(), d.m());
    if a.ncols() != m || b.len() != r || r == 0 {
        return Err(Error::InvalidArgument(format!(
            "transform is {r}x{} with offset {} for dimension {m}",
            a.ncols(),
            b.len()
        )));
    }
    if r > m {
        return Err(Error::RankDeficient { rows: r });
    }
    let sv = a.clone().svd(false, false).singular_values;
    let top = sv.max();
    if top == 0.0 || sv.iter().filter(|&&s| s > 1e-10 * top).count() < r {
        return Err(Error::RankDeficient { rows: r });
    }
    let xi = a * d.xi() + b;
    let omega = SymMatrix::new(a * d.omega().matrix() * a.transpose())?;
    let omega_a = omega.diagonal().map(f64::sqrt);
    let delta = scale_rows(&(a * scale_rows(d.delta(), &d.scales())), &omega_a.map(|v| 1.0 / v));
    SueDistribution::new(xi, omega, delta, d.tau().clone(), d.gamma_bar().clone(), d.generator().clone())
}

/// Sub-vector `z_C`: `SUE_{|C|,q}(ξ_C, Ω_CC, Δ_C·, τ, Γ̄)`.
pub fn marginal(d: &SueDistribution, c: &[usize]) -> Result<SueDistribution> {
    let m = d.m();
    if c.is_empty() {
        return Err(Error::InvalidArgument("marginal over an empty index set".into()));
    }
    let mut seen = vec![false; m];
    for &k in c {
        if k >= m {
            return Err(Error::InvalidIndex { index: k, dim: m });
        }
        if seen[k] {
            return Err(Error::InvalidArgument(format!("index {k} repeated")));
        }
        seen[k] = true;
    }
    SueDistribution::new(
        DVector::from_iterator(c.len(), c.iter().map(|&k| d.xi()[k])),
        d.omega().principal(c),
        d.delta().select_rows(c),
        d.tau().clone(),
        d.gamma_bar().clone(),
        d.generator().clone(),
    )
}

/// Law of `z_i` given `z_j = value`, with `(i, j) = (idx_1, idx_2)`.
///
/// Location and dispersion follow Schur-complement conditioning; the shape,
/// truncation and latent correlation are standardized by
/// `γ = diag(Γ̄ − Δ_jᵀ Ω̄_jj⁻¹ Δ_j)^{1/2}`; the generator is conditioned on
/// `Q_j = (z_j − ξ_j)ᵀ Ω_jj⁻¹ (z_j − ξ_j)`.
pub fn condition_on_value(d: &SueDistribution, p: &BlockPartition, value: &DVector<f64>) -> Result<SueDistribution> {
    let (m, q) = (d.m(), d.q());
    require_blocks(p, m)?;
    let (i, j) = (&p.idx_1, &p.idx_2);
    if value.len() != j.len() {
        return Err(Error::InvalidArgument(format!(
            "conditioning value has length {}, block has {}",
            value.len(),
            j.len()
        )));
    }
    let omega_jj = d.omega().principal(j);
    let chol = cholesky(&omega_jj)?;
    let omega_ij = d.omega().block(i, j);
    let xi_j = DVector::from_iterator(j.len(), j.iter().map(|&k| d.xi()[k]));
    let xi_i = DVector::from_iterator(i.len(), i.iter().map(|&k| d.xi()[k]));
    let resid = value - xi_j;
    let w = chol.solve(&resid);
    let quad = resid.dot(&w);
    // Ω_ij Ω_jj⁻¹ as (Ω_jj⁻¹ Ω_ji)ᵀ.
    let reg = chol.solve_mat(&omega_ij.transpose()).transpose();
    let xi_c = xi_i + &omega_ij * &w;
    let omega_c = SymMatrix::new(d.omega().principal(i).matrix() - &reg * omega_ij.transpose())?;
    let generator = condition_generator(d.generator(), m + q, j.len(), quad)?;
    if q == 0 {
        return SueDistribution::elliptical(xi_c, omega_c, generator);
    }
    let scales = d.scales();
    let w_delta = scale_rows(d.delta(), &scales);
    let w_delta_i = w_delta.select_rows(i);
    let w_delta_j = w_delta.select_rows(j);
    // Δ_jᵀ Ω̄_jj⁻¹ ω_j⁻¹ = (ω_j Δ_j)ᵀ Ω_jj⁻¹.
    let lift = chol.solve_mat(&w_delta_j).transpose();
    let gamma_full = SymMatrix::new(d.gamma_bar().matrix() - &lift * &w_delta_j)?;
    let gamma = gamma_full.diagonal().map(f64::sqrt);
    let inv_gamma = gamma.map(|v| 1.0 / v);
    let omega_c_scales = omega_c.diagonal().map(f64::sqrt);
    let delta_c = scale_cols(
        &scale_rows(&(w_delta_i - &reg * &w_delta_j), &omega_c_scales.map(|v| 1.0 / v)),
        &inv_gamma,
    );
    let tau_c = (d.tau() + &lift * &resid).component_mul(&inv_gamma);
    let gamma_c = gamma_full.congruent_diag(&inv_gamma);
    SueDistribution::new(xi_c, omega_c, delta_c, tau_c, unit_diagonal(gamma_c), generator)
}

/// Law of `z_i` given `z_j > 0` elementwise:
/// `SUE_{m_i, m_j+q}(ξ_i, Ω_ii, [Ω̄_ij, Δ_i], [ω_j⁻¹ξ_j; τ], [[Ω̄_jj, Δ_j], [Δ_jᵀ, Γ̄]])`
/// with the base generator unchanged. New latent coordinates come first.
pub fn condition_on_positivity(d: &SueDistribution, p: &BlockPartition) -> Result<SueDistribution> {
    let (m, q) = (d.m(), d.q());
    require_blocks(p, m)?;
    let (i, j) = (&p.idx_1, &p.idx_2);
    let (mi, mj) = (i.len(), j.len());
    let scales = d.scales();
    let inv = scales.map(|v| 1.0 / v);
    let omega_bar = d.omega().congruent_diag(&inv);
    let mut delta = DMatrix::zeros(mi, mj + q);
    delta.view_mut((0, 0), (mi, mj)).copy_from(&omega_bar.block(i, j));
    delta.view_mut((0, mj), (mi, q)).copy_from(&d.delta().select_rows(i));
    let mut tau = DVector::zeros(mj + q);
    for (r, &k) in j.iter().enumerate() {
        tau[r] = d.xi()[k] * inv[k];
    }
    tau.rows_mut(mj, q).copy_from(d.tau());
    let gamma = super::extended(omega_bar.principal(j).matrix(), &d.delta().select_rows(j), d.gamma_bar().matrix());
    SueDistribution::new(
        DVector::from_iterator(mi, i.iter().map(|&k| d.xi()[k])),
        d.omega().principal(i),
        delta,
        tau,
        unit_diagonal(SymMatrix::new(gamma)?),
        d.generator().clone(),
    )
}

/// Rescales a full latent dispersion `Γ` to correlation form:
/// `Δγ⁻¹`, `γ⁻¹τ`, `γ⁻¹Γγ⁻¹` with `γ = diag(Γ)^{1/2}`.
pub fn standardize_gamma(
    xi: DVector<f64>,
    omega: SymMatrix,
    delta: DMatrix<f64>,
    tau: DVector<f64>,
    gamma: SymMatrix,
    generator: DensityGenerator,
) -> Result<SueDistribution> {
    if gamma.dim() == 0 {
        return SueDistribution::new(xi, omega, delta, tau, gamma, generator);
    }
    cholesky(&gamma)?;
    let inv = gamma.diagonal().map(|v| 1.0 / v.sqrt());
    let delta = scale_cols(&delta, &inv);
    let tau = tau.component_mul(&inv);
    let gamma_bar = unit_diagonal(gamma.congruent_diag(&inv));
    SueDistribution::new(xi, omega, delta, tau, gamma_bar, generator)
}

/// Drops latent coordinates that factor out of both CDF terms: zero shape
/// column, zero latent correlation with the others, and zero truncation
/// (any truncation for Gaussian generators, whose orthant probabilities of
/// independent blocks factorize).
pub fn reduce_latent(d: &SueDistribution) -> SueDistribution {
    let q = d.q();
    let gaussian = d.generator().is_gaussian();
    let keep: Vec<usize> = (0..q)
        .filter(|&k| {
            let shape_zero = d.delta().column(k).iter().all(|v| v.abs() <= LATENT_ZERO_TOL);
            let corr_zero = (0..q).all(|l| l == k || d.gamma_bar().matrix()[(k, l)].abs() <= LATENT_ZERO_TOL);
            let tau_ok = gaussian || d.tau()[k].abs() <= LATENT_ZERO_TOL;
            !(shape_zero && corr_zero && tau_ok)
        })
        .collect();
    if keep.len() == q {
        return d.clone();
    }
    SueDistribution::new(
        d.xi().clone(),
        d.omega().clone(),
        d.delta().select_columns(&keep),
        DVector::from_iterator(keep.len(), keep.iter().map(|&k| d.tau()[k])),
        d.gamma_bar().principal(&keep),
        d.generator().clone(),
    )
    .expect("sub-selection of a valid distribution stays valid")
}

fn unit_diagonal(g: SymMatrix) -> SymMatrix {
    let mut m = g.into_matrix();
    m.fill_diagonal(1.0);
    SymMatrix::new(m).expect("finite matrix")
}
