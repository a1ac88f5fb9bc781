use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;

use super::{extended, scale_rows, SueDistribution};
use crate::error::{Error, Result};
use crate::generators::DensityGenerator;
use crate::linalg::{cholesky, SymMatrix};

/// Proposals per chunk; chunk `c` always draws from stream `(seed, c)`.
const CHUNK: usize = 8192;
/// Chunks evaluated per parallel batch.
const BATCH: usize = 16;
const MIN_PROPOSALS_FOR_GUARD: u64 = 100_000;
const MIN_ACCEPTANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// One draw per row, `n × m`.
    pub draws: DMatrix<f64>,
    pub proposals: u64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub mean: DVector<f64>,
    pub cov: SymMatrix,
    pub se_mean: DVector<f64>,
    pub n_samples: usize,
}

/// Radial mixing law of the joint elliptical vector.
#[derive(Clone, Copy)]
enum Mixing {
    Gaussian,
    Student { nu: f64, scale: f64 },
}

impl Mixing {
    fn of(g: &DensityGenerator) -> Result<Self> {
        match g {
            DensityGenerator::Gaussian => Ok(Mixing::Gaussian),
            DensityGenerator::StudentT { nu } => Ok(Mixing::Student { nu: *nu, scale: 1.0 }),
            DensityGenerator::StudentTScaled { nu, scale } => Ok(Mixing::Student { nu: *nu, scale: *scale }),
            _ => Err(Error::UnsupportedGenerator("sampling needs a Gaussian or Student-t generator".into())),
        }
    }
}

/// Rejection sampler over the selection representation: draw
/// `(z̄, z̄₀) ~ EC_{m+q}((ξ, τ), [[Ω, ωΔ], [Δᵀω, Γ̄]], g)` and keep `z̄` when
/// `z̄₀ > 0` elementwise.
pub fn sue_sample(d: &SueDistribution, n: usize, seed: u64) -> Result<SampleSet> {
    let mixing = Mixing::of(d.generator())?;
    let (m, q) = (d.m(), d.q());
    if n == 0 {
        return Ok(SampleSet { draws: DMatrix::zeros(0, m), proposals: 0, acceptance_rate: 1.0 });
    }
    let joint = if q == 0 {
        d.omega().clone()
    } else {
        let off = scale_rows(d.delta(), &d.scales());
        SymMatrix::new(extended(d.omega().matrix(), &off, d.gamma_bar().matrix()))?
    };
    let l = cholesky(&joint)?.l().clone();
    let mut location = DVector::zeros(m + q);
    location.rows_mut(0, m).copy_from(d.xi());
    location.rows_mut(m, q).copy_from(d.tau());

    let chunk = |c: usize| -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let chi = match mixing {
            Mixing::Student { nu, .. } => Some(ChiSquared::new(nu).expect("validated degrees of freedom")),
            Mixing::Gaussian => None,
        };
        let mut out = Vec::new();
        let mut e = DVector::<f64>::zeros(m + q);
        for _ in 0..CHUNK {
            for v in e.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let mut x = &l * &e;
            if let (Mixing::Student { nu, scale }, Some(chi)) = (mixing, &chi) {
                let w: f64 = chi.sample(&mut rng);
                x *= (scale * nu / w).sqrt();
            }
            x += &location;
            if x.rows(m, q).iter().all(|&v| v > 0.0) {
                out.push(x.rows(0, m).into_owned());
            }
        }
        out
    };

    let mut accepted: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut proposals = 0u64;
    let mut next = 0usize;
    let single_chunk = q == 0 && n <= CHUNK;
    while accepted.len() < n {
        let batch = if single_chunk { 1 } else { BATCH };
        let results: Vec<Vec<DVector<f64>>> = (next..next + batch).into_par_iter().map(chunk).collect();
        next += batch;
        for r in results {
            if accepted.len() >= n {
                break;
            }
            proposals += CHUNK as u64;
            accepted.extend(r);
        }
        let rate = accepted.len() as f64 / proposals as f64;
        if proposals >= MIN_PROPOSALS_FOR_GUARD && rate < MIN_ACCEPTANCE {
            return Err(Error::LowAcceptance { rate, proposals });
        }
    }
    // Rate over every consumed chunk, before trimming the surplus draws.
    let rate = accepted.len() as f64 / proposals as f64;
    accepted.truncate(n);
    let draws = DMatrix::from_fn(n, m, |i, j| accepted[i][j]);
    Ok(SampleSet { draws, proposals, acceptance_rate: rate.min(1.0) })
}

/// Sample mean, covariance, and standard errors of the mean.
pub fn sue_moments(d: &SueDistribution, n_mc: usize, seed: u64) -> Result<MomentEstimate> {
    if n_mc < 2 {
        return Err(Error::InvalidArgument("moment estimation needs at least two draws".into()));
    }
    let s = sue_sample(d, n_mc, seed)?;
    Ok(moments_of(&s.draws))
}

pub(crate) fn moments_of(draws: &DMatrix<f64>) -> MomentEstimate {
    let (n, m) = (draws.nrows(), draws.ncols());
    let mean = DVector::from_fn(m, |j, _| draws.column(j).mean());
    let centered = DMatrix::from_fn(n, m, |i, j| draws[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let se_mean = DVector::from_fn(m, |j, _| (cov[(j, j)] / n as f64).sqrt());
    MomentEstimate { mean, cov: SymMatrix::new(cov).expect("finite sample covariance"), se_mean, n_samples: n }
}
