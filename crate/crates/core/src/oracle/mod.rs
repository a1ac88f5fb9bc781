//! Brute-force references for the closed-form engines: grid Bayes,
//! Simpson normalization checks, and simulation-based conditioning.
//!
//! The Bayes reference evaluates `p(β) p(y | β)` directly from the extended
//! elliptical law of `(β, ε, z̄₀)`: fix the coordinates that are observed as
//! values, then integrate the conditional elliptical law over the region the
//! observation defines (sign constraints for binary and censored responses,
//! `z̄₀ > 0` for the skewing latent). None of the closure or conjugate algebra
//! is involved, and one- and two-dimensional Gaussian probabilities come from
//! this module's own series-based CDFs.

mod mc;
mod normal;

pub use mc::{mc_condition, ConditionedSample, EllipticalLaw};
pub use normal::{adaptive_simpson, bvn_cdf, normal_cdf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::conjugate::{Observation, RegressionJoint};
use crate::error::{Error, Result};
use crate::generators::{condition_generator, DensityGenerator};
use crate::linalg::{cholesky, SymMatrix};
use crate::mvprob::{default_tol, elliptical_cdf};
use crate::sue::{DensityEvaluator, SueDistribution};

/// Boundary-to-peak ratio above which a grid does not cover the support.
pub const SUPPORT_RATIO: f64 = 1e-10;
pub const MIN_AXIS_POINTS: usize = 11;
pub const MAX_GRID_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || n < MIN_AXIS_POINTS {
            return Err(Error::InvalidArgument(format!(
                "axis needs finite lo < hi and at least {MIN_AXIS_POINTS} points, got ({lo}, {hi}, {n})"
            )));
        }
        Ok(Axis { lo, hi, n })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.step()
        } else {
            self.step()
        }
    }
}

/// Values at the nodes of a tensor grid, stored row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-axis indices of flat node `k`.
    pub fn index(&self, k: usize) -> Vec<usize> {
        index_of(&self.axes, k)
    }

    pub fn node(&self, k: usize) -> Vec<f64> {
        node_of(&self.axes, k)
    }

    /// Trapezoid integral of the values.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.axes, &self.values)
    }

    /// Trapezoid marginal along `axis`, one value per node of that axis.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes[axis].n];
        for k in 0..self.len() {
            let idx = self.index(k);
            let w: f64 = (0..self.axes.len()).filter(|&a| a != axis).map(|a| self.axes[a].trapezoid_weight(idx[a])).product();
            out[idx[axis]] += w * self.values[k];
        }
        out
    }

    /// Largest boundary value over the largest value.
    pub fn boundary_ratio(&self) -> f64 {
        boundary_ratio(&self.axes, &self.values)
    }
}

fn check_axes(axes: &[Axis]) -> Result<()> {
    if axes.is_empty() || axes.len() > MAX_GRID_DIM {
        return Err(Error::InvalidArgument(format!("grids have 1 or 2 axes, got {}", axes.len())));
    }
    for a in axes {
        Axis::new(a.lo, a.hi, a.n)?;
    }
    Ok(())
}

fn index_of(axes: &[Axis], mut k: usize) -> Vec<usize> {
    let mut idx = vec![0; axes.len()];
    for a in (0..axes.len()).rev() {
        idx[a] = k % axes[a].n;
        k /= axes[a].n;
    }
    idx
}

fn node_of(axes: &[Axis], k: usize) -> Vec<f64> {
    index_of(axes, k).iter().zip(axes).map(|(&i, a)| a.node(i)).collect()
}

fn trapezoid(axes: &[Axis], values: &[f64]) -> f64 {
    (0..values.len())
        .map(|k| {
            let idx = index_of(axes, k);
            let w: f64 = idx.iter().zip(axes).map(|(&i, a)| a.trapezoid_weight(i)).product();
            w * values[k]
        })
        .sum()
}

fn boundary_ratio(axes: &[Axis], values: &[f64]) -> f64 {
    let peak = values.iter().cloned().fold(0.0, f64::max);
    let edge = (0..values.len())
        .filter(|&k| index_of(axes, k).iter().zip(axes).any(|(&i, a)| i == 0 || i + 1 == a.n))
        .map(|k| values[k])
        .fold(0.0, f64::max);
    if peak > 0.0 {
        edge / peak
    } else {
        f64::INFINITY
    }
}

fn evaluate<F>(axes: &[Axis], f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let n: usize = axes.iter().map(|a| a.n).product();
    let values = (0..n).into_par_iter().map(|k| f(&node_of(axes, k))).collect::<Result<Vec<f64>>>()?;
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("grid function returned {v}")));
    }
    Ok(values)
}

fn normalized(axes: &[Axis], mut values: Vec<f64>) -> Result<Grid> {
    let ratio = boundary_ratio(axes, &values);
    if ratio == f64::INFINITY {
        return Err(Error::InvalidArgument("grid function vanishes at every node".into()));
    }
    if ratio >= SUPPORT_RATIO {
        return Err(Error::SupportTruncated { ratio });
    }
    let z = trapezoid(axes, &values);
    values.iter_mut().for_each(|v| *v /= z);
    Ok(Grid { axes: axes.to_vec(), values })
}

/// `p(β) p(y | β)` on the grid, trapezoid-normalized to unit mass.
pub fn grid_posterior<P, L>(prior_pdf: P, likelihood: L, axes: &[Axis]) -> Result<Grid>
where
    P: Fn(&[f64]) -> Result<f64> + Sync,
    L: Fn(&[f64]) -> Result<f64> + Sync,
{
    check_axes(axes)?;
    let values = evaluate(axes, |b| Ok(prior_pdf(b)? * likelihood(b)?))?;
    normalized(axes, values)
}

/// Composite Simpson rule with `n` nodes (rounded up to odd, at least 3).
pub fn quadrature_mass<F: Fn(f64) -> f64>(pdf: F, lo: f64, hi: f64, n: usize) -> f64 {
    let n = (n.max(3) - 1) / 2 * 2 + 1;
    let h = (hi - lo) / (n - 1) as f64;
    let inner: f64 = (1..n - 1).map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(lo + i as f64 * h)).sum();
    h / 3.0 * (pdf(lo) + inner + pdf(hi))
}

/// `f_V(v) · P(A W_F ≤ b | W_V = v)` for `W ~ law`, where `V = fixed` and
/// `F` is the complement of `V` in increasing order (`a` has `|F|` columns).
pub fn sliced_probability(
    law: &EllipticalLaw,
    fixed: &[usize],
    values: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    tol: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let k = law.dim();
    let free: Vec<usize> = (0..k).filter(|i| !fixed.contains(i)).collect();
    if fixed.is_empty() || values.len() != fixed.len() || a.ncols() != free.len() || a.nrows() != b.len() {
        return Err(Error::InvalidArgument("inconsistent slice layout".into()));
    }
    let s_vv = law.cov.principal(fixed);
    let chol = cholesky(&s_vv)?;
    let r = values - DVector::from_iterator(fixed.len(), fixed.iter().map(|&i| law.mean[i]));
    let quad = chol.quad_form(&r);
    let log_f = -0.5 * chol.log_det() + law.generator.log_eval(fixed.len(), quad);
    let dens = log_f.exp();
    if a.nrows() == 0 {
        return Ok((dens, 0.0));
    }
    let s_fv = law.cov.block(&free, fixed);
    let gain = chol.solve_mat(&s_fv.transpose()).transpose();
    let mu = DVector::from_iterator(free.len(), free.iter().map(|&i| law.mean[i])) + &gain * &r;
    let s = law.cov.principal(&free).matrix() - &gain * s_fv.transpose();
    let g = condition_generator(&law.generator, k, fixed.len(), quad)?;
    let upper = b - a * mu;
    let cov = SymMatrix::new(a * s * a.transpose())?;
    let (p, err) = region_probability(&upper, &cov, &g, tol, seed)?;
    Ok((dens * p, dens * err))
}

/// `P(X ≤ upper)` for centered `X ~ EC(0, cov, g)`.
fn region_probability(upper: &DVector<f64>, cov: &SymMatrix, g: &DensityGenerator, tol: f64, seed: u64) -> Result<(f64, f64)> {
    if g.is_gaussian() && upper.len() <= 2 {
        let s = cov.diagonal().map(f64::sqrt);
        let h = upper[0] / s[0];
        if upper.len() == 1 {
            return Ok((normal_cdf(h), 0.0));
        }
        let rho = (cov.matrix()[(0, 1)] / (s[0] * s[1])).clamp(-1.0, 1.0);
        return Ok((bvn_cdf(h, upper[1] / s[1], rho), 0.0));
    }
    let e = elliptical_cdf(upper, cov, g, tol, seed)?;
    Ok((e.value, e.abs_error))
}

/// Unnormalized prior and joint `p(β) p(y | β)` evaluated from the extended
/// elliptical law of `(β, ε, z̄₀)`.
pub struct BayesTarget<'a> {
    rj: &'a RegressionJoint,
    obs: &'a Observation,
    law: EllipticalLaw,
    tol: f64,
    seed: u64,
}

impl<'a> BayesTarget<'a> {
    pub fn new(rj: &'a RegressionJoint, obs: &'a Observation, tol: f64, seed: u64) -> Result<Self> {
        if obs.model() != rj.model() || obs.len() != rj.n() {
            return Err(Error::InvalidArgument("observation does not match the regression model".into()));
        }
        Ok(BayesTarget { rj, obs, law: EllipticalLaw::extended(rj.joint())?, tol, seed })
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.rj.p(), self.rj.n(), self.rj.joint().q())
    }

    /// Prior density of `β` up to the constant `F_q(τ; Γ̄)`.
    pub fn prior(&self, beta: &[f64]) -> Result<f64> {
        let (p, n, q) = self.dims();
        let mut a = DMatrix::zeros(q, n + q);
        a.view_mut((0, n), (q, q)).copy_from(&(-DMatrix::<f64>::identity(q, q)));
        let fixed: Vec<usize> = (0..p).collect();
        Ok(sliced_probability(&self.law, &fixed, &DVector::from_row_slice(beta), &a, &DVector::zeros(q), self.tol, self.seed)?.0)
    }

    /// `p(β) p(y | β)` up to the same constant.
    pub fn joint(&self, beta: &[f64]) -> Result<f64> {
        let (p, n, q) = self.dims();
        let b = DVector::from_row_slice(beta);
        let xb = self.rj.x() * &b;
        let neg_i = |k: usize| -DMatrix::<f64>::identity(k, k);
        let (fixed, values, a, upper) = match self.obs {
            Observation::Linear(y) => {
                let fixed: Vec<usize> = (0..p + n).collect();
                let values = DVector::from_iterator(p + n, b.iter().copied().chain((y - &xb).iter().copied()));
                (fixed, values, neg_i(q), DVector::zeros(q))
            }
            Observation::Binary(y) => {
                let d = DVector::from_iterator(n, y.iter().map(|&v| if v { 1.0 } else { -1.0 }));
                let mut a = DMatrix::zeros(n + q, n + q);
                a.view_mut((0, 0), (n, n)).copy_from(&(-DMatrix::from_diagonal(&d)));
                a.view_mut((n, n), (q, q)).copy_from(&neg_i(q));
                let upper = DVector::from_iterator(n + q, d.component_mul(&xb).iter().copied().chain((0..q).map(|_| 0.0)));
                ((0..p).collect(), b.clone(), a, upper)
            }
            Observation::Censored(y) => {
                let obs: Vec<usize> = (0..n).filter(|&i| y[i] > 0.0).collect();
                let cens: Vec<usize> = (0..n).filter(|&i| y[i] == 0.0).collect();
                let fixed: Vec<usize> = (0..p).chain(obs.iter().map(|&i| p + i)).collect();
                let values =
                    DVector::from_iterator(fixed.len(), b.iter().copied().chain(obs.iter().map(|&i| y[i] - xb[i])));
                let n0 = cens.len();
                let mut a = DMatrix::zeros(n0 + q, n0 + q);
                a.view_mut((0, 0), (n0, n0)).copy_from(&DMatrix::identity(n0, n0));
                a.view_mut((n0, n0), (q, q)).copy_from(&neg_i(q));
                let upper = DVector::from_iterator(n0 + q, cens.iter().map(|&i| -xb[i]).chain((0..q).map(|_| 0.0)));
                (fixed, values, a, upper)
            }
        };
        Ok(sliced_probability(&self.law, &fixed, &values, &a, &upper, self.tol, self.seed)?.0)
    }
}

/// CDF tolerance of grid checks: a 1e-3 relative comparison needs about
/// 1e-5 absolute accuracy in the probability factors.
pub const CHECK_TOL: f64 = 1e-5;

/// Settings for [`bayes_reference`] and [`bayes_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct BayesOptions {
    /// Initial half-width of the grid in prior scale units.
    pub half_width: f64,
    /// Initial nodes per axis.
    pub points: usize,
    /// Node cap per axis when widening.
    pub max_points: usize,
    pub max_widenings: usize,
    /// Prior mass of the central comparison region.
    pub central_mass: f64,
    /// CDF tolerance; `None` uses the generator default.
    pub tol: Option<f64>,
    pub seed: u64,
}

impl BayesOptions {
    pub fn for_dim(p: usize, seed: u64) -> Self {
        let (points, max_points) = if p == 1 { (801, 2001) } else { (61, 121) };
        BayesOptions { half_width: 8.0, points, max_points, max_widenings: 5, central_mass: 0.9999, tol: Some(CHECK_TOL), seed }
    }
}

/// Grid posterior plus the normalized prior on the same nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesReference {
    pub posterior: Grid,
    pub prior: Grid,
    /// Per-axis central prior-mass interval, snapped outward to nodes.
    pub region: Vec<(f64, f64)>,
}

/// Nodes per axis of the pre-pass that picks the grid width.
const COARSE_POINTS: usize = 41;

/// Grid Bayes reference for a regression with `p ≤ 2`, widening the grid
/// until the posterior boundary falls below `1e-10` of its peak. A coarse
/// pre-pass picks the width so the fine grid is evaluated once.
pub fn bayes_reference(rj: &RegressionJoint, obs: &Observation, opts: &BayesOptions) -> Result<BayesReference> {
    let p = rj.p();
    if p > MAX_GRID_DIM {
        return Err(Error::InvalidArgument(format!("grid reference needs p ≤ {MAX_GRID_DIM}, got {p}")));
    }
    let tol = opts.tol.unwrap_or_else(|| default_tol(rj.joint().generator()));
    let target = BayesTarget::new(rj, obs, tol, opts.seed)?;
    let xi = rj.joint().xi();
    let scale = rj.joint().omega().diagonal().map(f64::sqrt);
    let axes_at = |half: f64, n: usize| {
        (0..p).map(|i| Axis::new(xi[i] - half * scale[i], xi[i] + half * scale[i], n)).collect::<Result<Vec<_>>>()
    };
    let mut half = opts.half_width;
    let mut points = opts.points;
    let mut last_ratio = f64::INFINITY;
    for _ in 0..=opts.max_widenings {
        let coarse = axes_at(half, COARSE_POINTS)?;
        let ratio = boundary_ratio(&coarse, &evaluate(&coarse, |b| target.joint(b))?);
        if ratio < SUPPORT_RATIO {
            let axes = axes_at(half, points)?;
            match normalized(&axes, evaluate(&axes, |b| target.joint(b))?) {
                Ok(posterior) => {
                    let prior = normalized_any(&axes, evaluate(&axes, |b| target.prior(b))?)?;
                    let region = (0..p).map(|i| central_interval(&prior, i, opts.central_mass)).collect();
                    return Ok(BayesReference { posterior, prior, region });
                }
                Err(Error::SupportTruncated { ratio }) => last_ratio = ratio,
                Err(e) => return Err(e),
            }
        } else {
            last_ratio = ratio;
        }
        half *= 2.0;
        points = (2 * points - 1).min(opts.max_points);
    }
    Err(Error::SupportTruncated { ratio: last_ratio })
}

/// Normalization without the support condition (for the prior, whose tails
/// may be heavier than the posterior's).
fn normalized_any(axes: &[Axis], mut values: Vec<f64>) -> Result<Grid> {
    let z = trapezoid(axes, &values);
    if !(z > 0.0) {
        return Err(Error::InvalidArgument("prior vanishes on the grid".into()));
    }
    values.iter_mut().for_each(|v| *v /= z);
    Ok(Grid { axes: axes.to_vec(), values })
}

/// Smallest node interval holding the central `mass` of the marginal along
/// `axis`, from the cumulative trapezoid sums.
fn central_interval(g: &Grid, axis: usize, mass: f64) -> (f64, f64) {
    let m = g.marginal(axis);
    let a = g.axes[axis];
    let h = a.step();
    let mut cdf = vec![0.0; a.n];
    for i in 1..a.n {
        cdf[i] = cdf[i - 1] + 0.5 * h * (m[i - 1] + m[i]);
    }
    let total = cdf[a.n - 1];
    let tail = 0.5 * (1.0 - mass) * total;
    let lo = cdf.iter().rposition(|&c| c <= tail).unwrap_or(0);
    let hi = cdf.iter().position(|&c| c >= total - tail).unwrap_or(a.n - 1);
    (a.node(lo), a.node(hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    /// `max |closed − grid| / max grid` over the comparison region.
    pub max_rel_dev: f64,
    pub n_compared: usize,
    pub region: Vec<(f64, f64)>,
    pub grid_points: usize,
}

impl CheckReport {
    pub fn passed(&self, limit: f64) -> bool {
        self.max_rel_dev <= limit
    }
}

/// Compares a closed-form posterior density against the grid reference at
/// every grid node inside the central prior-mass region.
pub fn bayes_check(
    rj: &RegressionJoint,
    obs: &Observation,
    posterior: &SueDistribution,
    opts: &BayesOptions,
) -> Result<CheckReport> {
    let reference = bayes_reference(rj, obs, opts)?;
    compare_to_reference(&reference, posterior, opts)
}

/// The comparison half of [`bayes_check`], for a precomputed reference.
pub fn compare_to_reference(reference: &BayesReference, posterior: &SueDistribution, opts: &BayesOptions) -> Result<CheckReport> {
    let g = &reference.posterior;
    if posterior.m() != g.axes.len() {
        return Err(Error::InvalidArgument("posterior dimension does not match the grid".into()));
    }
    let tol = opts.tol.unwrap_or_else(|| default_tol(posterior.generator()));
    let eval = DensityEvaluator::new(posterior, tol, opts.seed)?;
    let inside: Vec<usize> = (0..g.len())
        .filter(|&k| g.node(k).iter().zip(&reference.region).all(|(x, (lo, hi))| *lo <= *x && *x <= *hi))
        .collect();
    let closed = inside
        .par_iter()
        .map(|&k| Ok(eval.pdf(&DVector::from_vec(g.node(k)))?.value))
        .collect::<Result<Vec<f64>>>()?;
    let peak = inside.iter().map(|&k| g.values[k]).fold(0.0, f64::max);
    let dev = inside.iter().zip(&closed).map(|(&k, c)| (c - g.values[k]).abs()).fold(0.0, f64::max);
    Ok(CheckReport {
        max_rel_dev: dev / peak,
        n_compared: inside.len(),
        region: reference.region.clone(),
        grid_points: g.len(),
    })
}
