//! Dense symmetric-matrix kernels: Cholesky factors, Schur complements and the
//! scale/correlation split `Ω = ω Ω̄ ω`.
//!
//! Explicit inverses are never formed; every `Ω⁻¹x` goes through triangular
//! solves against a Cholesky factor.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric matrix, symmetrized as `(M + Mᵀ)/2` on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidArgument(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(SymMatrix(sym))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Builds from row-major nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("rows of unequal length".into()));
        }
        SymMatrix::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.0.diagonal()
    }

    pub fn scaled(&self, s: f64) -> SymMatrix {
        SymMatrix(&self.0 * s)
    }

    /// Principal sub-matrix on `idx`, in the given order.
    pub fn principal(&self, idx: &[usize]) -> SymMatrix {
        SymMatrix(self.0.select_rows(idx).select_columns(idx))
    }

    /// Off-diagonal block `M[rows, cols]`.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        self.0.select_rows(rows).select_columns(cols)
    }

    /// `D M D` for a diagonal `D` given by its entries.
    pub fn congruent_diag(&self, d: &DVector<f64>) -> SymMatrix {
        let n = self.dim();
        SymMatrix(DMatrix::from_fn(n, n, |i, j| d[i] * self.0[(i, j)] * d[j]))
    }
}

/// Lower-triangular factor `L` with `L Lᵀ = M`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

pub fn cholesky(m: &SymMatrix) -> Result<Cholesky> {
    let n = m.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("cholesky of an empty matrix".into()));
    }
    let a = m.matrix();
    let max_diag = a.diagonal().iter().cloned().fold(0.0_f64, f64::max);
    let floor = n as f64 * 1e-14 * max_diag;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > floor) {
            return Err(Error::NotPositiveDefinite(format!("pivot {j} is {d:.3e}")));
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(Cholesky { l })
}

impl Cholesky {
    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `L⁻¹ x` by forward substitution.
    pub fn solve_lower(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut y = x.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// `L⁻ᵀ x` by back substitution.
    pub fn solve_upper(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut y = x.clone();
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// `M⁻¹ x`.
    pub fn solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.solve_upper(&self.solve_lower(x))
    }

    /// `M⁻¹ B` column by column.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for c in 0..b.ncols() {
            let col = self.solve(&b.column(c).into_owned());
            out.set_column(c, &col);
        }
        out
    }

    /// `xᵀ M⁻¹ x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        self.solve_lower(x).norm_squared()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Cheap condition-number estimate `(max Lᵢᵢ / min Lᵢᵢ)²`; a lower bound on
    /// the spectral condition number.
    pub fn condition_estimate(&self) -> f64 {
        let d = self.l.diagonal();
        let hi = d.iter().cloned().fold(0.0_f64, f64::max);
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        (hi / lo).powi(2)
    }
}

fn check_partition(n: usize, block_i: &[usize], block_j: &[usize]) -> Result<()> {
    let mut seen = vec![false; n];
    for &k in block_i.iter().chain(block_j) {
        if k >= n {
            return Err(Error::InvalidIndex { index: k, dim: n });
        }
        if seen[k] {
            return Err(Error::InvalidArgument(format!("index {k} appears twice in partition")));
        }
        seen[k] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidArgument("partition does not cover all indices".into()));
    }
    Ok(())
}

/// `M_ii − M_ij M_jj⁻¹ M_ji`.
pub fn schur_complement(m: &SymMatrix, block_i: &[usize], block_j: &[usize]) -> Result<SymMatrix> {
    check_partition(m.dim(), block_i, block_j)?;
    let mii = m.principal(block_i);
    if block_j.is_empty() {
        return Ok(mii);
    }
    let chol = cholesky(&m.principal(block_j))?;
    let mji = m.block(block_j, block_i);
    let w = chol.solve_mat(&mji);
    SymMatrix::new(mii.matrix() - mji.transpose() * w)
}

/// Scales `ω = diag(Ω)^{1/2}` and correlation `Ω̄ = ω⁻¹ Ω ω⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrSplit {
    pub omega: DVector<f64>,
    pub omega_bar: SymMatrix,
}

pub fn corr_split(m: &SymMatrix) -> Result<CorrSplit> {
    let diag = m.diagonal();
    if let Some(i) = diag.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateScale(i));
    }
    let omega = diag.map(f64::sqrt);
    let inv = omega.map(|v| 1.0 / v);
    let mut omega_bar = m.congruent_diag(&inv).into_matrix();
    omega_bar.fill_diagonal(1.0);
    Ok(CorrSplit { omega, omega_bar: SymMatrix(omega_bar) })
}

/// Relative Frobenius distance `‖a − b‖ / max(‖b‖, tiny)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
