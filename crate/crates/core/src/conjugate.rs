//! Conjugate regression engines.
//!
//! Start from a joint SUE over `(β, ε)` and a known design `X`, so that
//! `ȳ = Xβ + ε`. The joint law of `(β, ȳ)` is again SUE; the prior is its
//! `β` marginal, and likelihoods and posteriors follow from conditioning:
//!
//! * linear `y = ȳ`: condition on the value of `ȳ` (latent dimension kept);
//! * binary `y_i = 1(ȳ_i > 0)`: condition on `D_y ȳ > 0` with
//!   `D_y = diag(2y − 1)` (latent dimension grows by `n`);
//! * censored `y_i = ȳ_i 1(ȳ_i > 0)`: condition on the observed block, then
//!   on `−ȳ₀ > 0` for the censored block (latent dimension grows by `n₀`).
//!
//! Student posteriors are returned in plain SUT form with the conditional
//! scale `α = (ν + Q)/(ν + k)` folded into `Ω` and `τ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::generators::DensityGenerator;
use crate::linalg::{cholesky, SymMatrix};
use crate::mvprob::ProbEstimate;
use crate::sue::{
    condition_on_positivity, condition_on_value, linear_transform, marginal, reduce_latent, standardize_gamma,
    sue_cdf, sue_pdf, BlockPartition, SueDistribution,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Linear,
    Binary,
    Censored,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Binary => "binary",
            ModelKind::Censored => "censored",
        }
    }
}

/// Joint `(β, ε)` law, design matrix and observation model.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionJoint {
    p: usize,
    n: usize,
    joint: SueDistribution,
    x: DMatrix<f64>,
    model: ModelKind,
}

impl RegressionJoint {
    /// `joint` is over `(β, ε)` with the first `p = x.ncols()` coordinates
    /// being `β`.
    pub fn new(joint: SueDistribution, x: DMatrix<f64>, model: ModelKind) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if p == 0 || n == 0 {
            return Err(Error::InvalidArgument("design matrix must be nonempty".into()));
        }
        if joint.m() != p + n {
            return Err(Error::InvalidArgument(format!(
                "joint has dimension {}, design implies p + n = {}",
                joint.m(),
                p + n
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("design matrix has non-finite entries".into()));
        }
        Ok(RegressionJoint { p, n, joint, x, model })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn joint(&self) -> &SueDistribution {
        &self.joint
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn with_model(&self, model: ModelKind) -> RegressionJoint {
        RegressionJoint { model, ..self.clone() }
    }

    fn expect(&self, model: ModelKind) -> Result<()> {
        if self.model == model {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "operation needs a {} model, got {}",
                model.name(),
                self.model.name()
            )))
        }
    }

    fn beta_idx(&self) -> Vec<usize> {
        (0..self.p).collect()
    }

    fn response_idx(&self) -> Vec<usize> {
        (self.p..self.p + self.n).collect()
    }
}

/// Observed responses, validated against the model tag.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Linear(DVector<f64>),
    Binary(Vec<bool>),
    /// Nonnegative responses; exact zeros mark the censored block.
    Censored(DVector<f64>),
}

impl Observation {
    /// Builds the observation for `model` from raw numbers: binary responses
    /// must be exactly 0 or 1, censored ones nonnegative.
    pub fn from_values(model: ModelKind, y: &DVector<f64>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite response".into()));
        }
        match model {
            ModelKind::Linear => Ok(Observation::Linear(y.clone())),
            ModelKind::Binary => y
                .iter()
                .map(|&v| match v {
                    0.0 => Ok(false),
                    1.0 => Ok(true),
                    _ => Err(Error::InvalidArgument(format!("binary response must be 0 or 1, got {v}"))),
                })
                .collect::<Result<Vec<bool>>>()
                .map(Observation::Binary),
            ModelKind::Censored => {
                if let Some(v) = y.iter().find(|&&v| v < 0.0) {
                    return Err(Error::InvalidArgument(format!("censored response must be ≥ 0, got {v}")));
                }
                Ok(Observation::Censored(y.clone()))
            }
        }
    }

    pub fn model(&self) -> ModelKind {
        match self {
            Observation::Linear(_) => ModelKind::Linear,
            Observation::Binary(_) => ModelKind::Binary,
            Observation::Censored(_) => ModelKind::Censored,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Observation::Linear(y) | Observation::Censored(y) => y.len(),
            Observation::Binary(y) => y.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// How the density generator changed between the joint and the result.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorRecord {
    pub joint: DensityGenerator,
    pub result: DensityGenerator,
    /// Degrees of freedom of the joint and of the result (Student families).
    pub df_joint: Option<f64>,
    pub df_result: Option<f64>,
    /// Number of observed coordinates conditioned on by value.
    pub conditioned_on: usize,
    /// Quadratic form of the conditioning value, when there is one.
    pub quad_form: Option<f64>,
    /// Scale `α = (ν + Q)/(ν + k)` folded into `Ω` and `τ`.
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Latent coordinates added by the conditioning (0 / n / n₀).
    pub latent_growth: usize,
    /// Latent coordinates removed afterwards as redundant.
    pub latent_dropped: usize,
    pub latent_dim: usize,
    pub generator: GeneratorRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorReport {
    pub posterior: SueDistribution,
    pub diagnostics: Diagnostics,
}

/// A likelihood value with its numerical error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodValue {
    pub value: f64,
    pub abs_error: f64,
}

/// Joint law of `(β, ȳ)` with `ȳ = Xβ + ε`: the image of `(β, ε)` under
/// `[[I, 0], [X, I]]`.
pub fn build_joint_response(rj: &RegressionJoint) -> Result<SueDistribution> {
    let (p, n) = (rj.p, rj.n);
    let mut a = DMatrix::identity(p + n, p + n);
    a.view_mut((p, 0), (n, p)).copy_from(&rj.x);
    linear_transform(&rj.joint, &a, &DVector::zeros(p + n))
}

/// Prior of `β`: the first `p` coordinates of the joint.
pub fn prior_of(rj: &RegressionJoint) -> Result<SueDistribution> {
    marginal(&rj.joint, &rj.beta_idx())
}

/// Conditions the coordinates `cond` of `d` on `value`, keeping `keep`,
/// then canonicalizes. Returns the report with growth 0.
fn condition_report(d: &SueDistribution, keep: Vec<usize>, cond: Vec<usize>, value: &DVector<f64>) -> Result<PosteriorReport> {
    let quad = quad_form(d, &cond, value)?;
    let k = cond.len();
    let p = BlockPartition::new(d.m(), keep, cond)?;
    let c = condition_on_value(d, &p, value)?;
    Ok(finish(d.generator(), c, 0, k, Some(quad)))
}

/// `(v − ξ_J)ᵀ Ω_JJ⁻¹ (v − ξ_J)`.
fn quad_form(d: &SueDistribution, idx: &[usize], value: &DVector<f64>) -> Result<f64> {
    let xi = DVector::from_iterator(idx.len(), idx.iter().map(|&k| d.xi()[k]));
    Ok(cholesky(&d.omega().principal(idx))?.quad_form(&(value - xi)))
}

/// Standardize, fold the Student scale, drop redundant latents, and record.
fn finish(
    joint_gen: &DensityGenerator,
    d: SueDistribution,
    latent_growth: usize,
    conditioned_on: usize,
    quad_form: Option<f64>,
) -> PosteriorReport {
    let standardized = standardize_gamma(
        d.xi().clone(),
        d.omega().clone(),
        d.delta().clone(),
        d.tau().clone(),
        d.gamma_bar().clone(),
        d.generator().clone(),
    )
    .expect("standardizing a valid distribution stays valid");
    let (absorbed, alpha) = standardized.absorb_scale();
    let reduced = reduce_latent(&absorbed);
    let df = |g: &DensityGenerator| g.student_parts().map(|(nu, _)| nu);
    let generator = GeneratorRecord {
        joint: joint_gen.clone(),
        result: reduced.generator().clone(),
        df_joint: df(joint_gen),
        df_result: df(reduced.generator()),
        conditioned_on,
        quad_form,
        alpha,
    };
    PosteriorReport {
        diagnostics: Diagnostics {
            latent_growth,
            latent_dropped: absorbed.q() - reduced.q(),
            latent_dim: reduced.q(),
            generator,
        },
        posterior: reduced,
    }
}

/// Law of `y | β` in the linear model, with the full report.
pub fn linear_likelihood_report(rj: &RegressionJoint, beta: &DVector<f64>) -> Result<PosteriorReport> {
    rj.expect(ModelKind::Linear)?;
    check_len("beta", beta.len(), rj.p)?;
    condition_report(&build_joint_response(rj)?, rj.response_idx(), rj.beta_idx(), beta)
}

/// Law of `y | β` in the linear model.
pub fn linear_likelihood(rj: &RegressionJoint, beta: &DVector<f64>) -> Result<SueDistribution> {
    Ok(linear_likelihood_report(rj, beta)?.posterior)
}

/// Posterior `β | y` in the linear model.
pub fn linear_posterior(rj: &RegressionJoint, y: &DVector<f64>) -> Result<PosteriorReport> {
    rj.expect(ModelKind::Linear)?;
    linear_posterior_unchecked(rj, y)
}

fn linear_posterior_unchecked(rj: &RegressionJoint, y: &DVector<f64>) -> Result<PosteriorReport> {
    check_len("y", y.len(), rj.n)?;
    condition_report(&build_joint_response(rj)?, rj.beta_idx(), rj.response_idx(), y)
}

/// Joint of `(β, D_y ȳ)`.
fn signed_joint(rj: &RegressionJoint, y: &[bool]) -> Result<SueDistribution> {
    check_len("y", y.len(), rj.n)?;
    let p = rj.p;
    let signs: Vec<f64> = (0..p).map(|_| 1.0).chain(y.iter().map(|&v| if v { 1.0 } else { -1.0 })).collect();
    let a = DMatrix::from_diagonal(&DVector::from_vec(signs));
    linear_transform(&build_joint_response(rj)?, &a, &DVector::zeros(p + rj.n))
}

/// `Pr(y | β) = Pr(D_y ȳ > 0 | β)` in the binary model.
pub fn binary_likelihood(
    rj: &RegressionJoint,
    beta: &DVector<f64>,
    y: &[bool],
    tol: f64,
    seed: u64,
) -> Result<ProbEstimate> {
    rj.expect(ModelKind::Binary)?;
    check_len("beta", beta.len(), rj.p)?;
    let s = signed_joint(rj, y)?;
    let cond = condition_report(&s, rj.response_idx(), rj.beta_idx(), beta)?.posterior;
    positive_orthant(&cond, tol, seed)
}

/// `Pr(w > 0)` as the CDF of `−w` at zero.
fn positive_orthant(w: &SueDistribution, tol: f64, seed: u64) -> Result<ProbEstimate> {
    let k = w.m();
    let neg = linear_transform(w, &(-DMatrix::identity(k, k)), &DVector::zeros(k))?;
    sue_cdf(&neg, &DVector::zeros(k), tol, seed)
}

/// Posterior `β | y` in the binary model: `β | D_y ȳ > 0`.
pub fn binary_posterior(rj: &RegressionJoint, y: &[bool]) -> Result<PosteriorReport> {
    rj.expect(ModelKind::Binary)?;
    let s = signed_joint(rj, y)?;
    let part = BlockPartition::new(s.m(), rj.beta_idx(), rj.response_idx())?;
    let c = condition_on_positivity(&s, &part)?;
    Ok(finish(rj.joint.generator(), c, rj.n, 0, None))
}

/// Observed (positive) and censored (exactly zero) response indices.
fn censor_split(y: &DVector<f64>) -> Result<(Vec<usize>, Vec<usize>)> {
    if let Some(v) = y.iter().find(|&&v| !(v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("censored response must be ≥ 0, got {v}")));
    }
    let observed = (0..y.len()).filter(|&i| y[i] > 0.0).collect();
    let censored = (0..y.len()).filter(|&i| y[i] == 0.0).collect();
    Ok((observed, censored))
}

/// `p(ȳ₁ = y₁ | β) · Pr(ȳ₀ ≤ 0 | ȳ₁ = y₁, β)` in the censored model.
pub fn censored_likelihood(
    rj: &RegressionJoint,
    beta: &DVector<f64>,
    y: &DVector<f64>,
    tol: f64,
    seed: u64,
) -> Result<LikelihoodValue> {
    rj.expect(ModelKind::Censored)?;
    check_len("beta", beta.len(), rj.p)?;
    check_len("y", y.len(), rj.n)?;
    let (obs, cens) = censor_split(y)?;
    let given_beta = condition_report(&build_joint_response(rj)?, rj.response_idx(), rj.beta_idx(), beta)?.posterior;
    let y1 = DVector::from_iterator(obs.len(), obs.iter().map(|&i| y[i]));
    let (dens, dens_err) = if obs.is_empty() {
        (1.0, 0.0)
    } else {
        let f = sue_pdf(&marginal(&given_beta, &obs)?, &y1, tol, seed)?;
        (f.value, f.abs_error)
    };
    if cens.is_empty() {
        return Ok(LikelihoodValue { value: dens, abs_error: dens_err });
    }
    let censored_law = if obs.is_empty() {
        given_beta
    } else {
        condition_report(&given_beta, cens.clone(), obs, &y1)?.posterior
    };
    let tail = sue_cdf(&censored_law, &DVector::zeros(cens.len()), tol, seed)?;
    Ok(LikelihoodValue { value: dens * tail.value, abs_error: dens_err * tail.value + dens * tail.abs_error })
}

/// Posterior `β | y` in the censored model.
pub fn censored_posterior(rj: &RegressionJoint, y: &DVector<f64>) -> Result<PosteriorReport> {
    rj.expect(ModelKind::Censored)?;
    check_len("y", y.len(), rj.n)?;
    let (obs, cens) = censor_split(y)?;
    if cens.is_empty() {
        return linear_posterior_unchecked(rj, y);
    }
    let p = rj.p;
    let resp = build_joint_response(rj)?;
    // (β, ȳ₀) after fixing the observed block.
    let keep: Vec<usize> = rj.beta_idx().into_iter().chain(cens.iter().map(|&i| p + i)).collect();
    let (partial, quad) = if obs.is_empty() {
        (marginal(&resp, &keep)?, None)
    } else {
        let cond: Vec<usize> = obs.iter().map(|&i| p + i).collect();
        let y1 = DVector::from_iterator(obs.len(), obs.iter().map(|&i| y[i]));
        let q = quad_form(&resp, &cond, &y1)?;
        let part = BlockPartition::new(resp.m(), keep, cond)?;
        (condition_on_value(&resp, &part, &y1)?, Some(q))
    };
    let n0 = cens.len();
    let signs: Vec<f64> = (0..p).map(|_| 1.0).chain((0..n0).map(|_| -1.0)).collect();
    let flipped = linear_transform(&partial, &DMatrix::from_diagonal(&DVector::from_vec(signs)), &DVector::zeros(p + n0))?;
    let part = BlockPartition::leading(p + n0, p)?;
    let c = condition_on_positivity(&flipped, &part)?;
    Ok(finish(rj.joint.generator(), c, n0, obs.len(), quad))
}

/// Posterior for any model, dispatching on the observation.
pub fn posterior(rj: &RegressionJoint, obs: &Observation) -> Result<PosteriorReport> {
    match obs {
        Observation::Linear(y) => linear_posterior(rj, y),
        Observation::Binary(y) => binary_posterior(rj, y),
        Observation::Censored(y) => censored_posterior(rj, y),
    }
}

/// Likelihood `p(y | β)` for any model.
pub fn likelihood(
    rj: &RegressionJoint,
    beta: &DVector<f64>,
    obs: &Observation,
    tol: f64,
    seed: u64,
) -> Result<LikelihoodValue> {
    match obs {
        Observation::Linear(y) => {
            let f = sue_pdf(&linear_likelihood(rj, beta)?, y, tol, seed)?;
            Ok(LikelihoodValue { value: f.value, abs_error: f.abs_error })
        }
        Observation::Binary(y) => {
            let p = binary_likelihood(rj, beta, y, tol, seed)?;
            Ok(LikelihoodValue { value: p.value, abs_error: p.abs_error })
        }
        Observation::Censored(y) => censored_likelihood(rj, beta, y, tol, seed),
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} has length {got}, expected {want}")))
    }
}

/// Skew-normal noise `SUN_{n,n}(0, σ²I, ᾱI, 0, I)` with `ᾱ = α/(1+α²)^{1/2}`,
/// independent of a Gaussian-generator prior on `β`.
pub fn make_skewnormal_regression(
    x: DMatrix<f64>,
    sigma2: f64,
    alpha: f64,
    prior: &SueDistribution,
    model: ModelKind,
) -> Result<RegressionJoint> {
    if !prior.generator().is_gaussian() {
        return Err(Error::InvalidArgument("skew-normal regression needs a Gaussian-generator prior".into()));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("need sigma2 > 0 and finite alpha, got {sigma2}, {alpha}")));
    }
    let n = x.nrows();
    check_len("prior", prior.m(), x.ncols())?;
    let alpha_bar = alpha / (1.0 + alpha * alpha).sqrt();
    let noise = SueDistribution::new(
        DVector::zeros(n),
        SymMatrix::identity(n).scaled(sigma2),
        DMatrix::identity(n, n) * alpha_bar,
        DVector::zeros(n),
        SymMatrix::identity(n),
        DensityGenerator::Gaussian,
    )?;
    RegressionJoint::new(independent_blocks(prior, &noise)?, x, model)
}

/// Example-2 style Student joint: `β ~ T_p(ξ_β, Ω_β, ν)` with no skewness,
/// noise dispersion `Ω_ε`, noise shape `Δ_ε` (n × q), latent correlation `Γ̄`,
/// zero truncation and no `β`–`ε` dispersion coupling, sharing a single
/// Student generator.
#[allow(clippy::too_many_arguments)]
pub fn make_student_regression(
    x: DMatrix<f64>,
    omega_eps: SymMatrix,
    delta_eps: DMatrix<f64>,
    gamma_bar: SymMatrix,
    nu: f64,
    prior_xi: DVector<f64>,
    prior_omega: SymMatrix,
    model: ModelKind,
) -> Result<RegressionJoint> {
    let (n, p, q) = (x.nrows(), x.ncols(), delta_eps.ncols());
    check_len("prior location", prior_xi.len(), p)?;
    check_len("prior dispersion", prior_omega.dim(), p)?;
    check_len("noise dispersion", omega_eps.dim(), n)?;
    check_len("noise shape rows", delta_eps.nrows(), n)?;
    check_len("latent correlation", gamma_bar.dim(), q)?;
    let mut xi = DVector::zeros(p + n);
    xi.rows_mut(0, p).copy_from(&prior_xi);
    let omega = block_diag(prior_omega.matrix(), omega_eps.matrix());
    let mut delta = DMatrix::zeros(p + n, q);
    delta.view_mut((p, 0), (n, q)).copy_from(&delta_eps);
    let joint = SueDistribution::new(
        xi,
        SymMatrix::new(omega)?,
        delta,
        DVector::zeros(q),
        gamma_bar,
        DensityGenerator::student(nu),
    )?;
    RegressionJoint::new(joint, x, model)
}

/// Stacks two distributions with a shared generator block-diagonally:
/// dispersion, shape and latent correlation become block diagonal.
/// For non-Gaussian generators the components are uncorrelated but not
/// independent.
pub fn independent_blocks(a: &SueDistribution, b: &SueDistribution) -> Result<SueDistribution> {
    if a.generator() != b.generator() {
        return Err(Error::InvalidArgument("blocks must share one density generator".into()));
    }
    let xi = DVector::from_iterator(a.m() + b.m(), a.xi().iter().chain(b.xi().iter()).copied());
    let tau = DVector::from_iterator(a.q() + b.q(), a.tau().iter().chain(b.tau().iter()).copied());
    SueDistribution::new(
        xi,
        SymMatrix::new(block_diag(a.omega().matrix(), b.omega().matrix()))?,
        block_diag(a.delta(), b.delta()),
        tau,
        SymMatrix::new(block_diag(a.gamma_bar().matrix(), b.gamma_bar().matrix()))?,
        a.generator().clone(),
    )
}

/// `diag(a, b)` for rectangular blocks.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}
