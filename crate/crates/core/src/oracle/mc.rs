//! Brute-force conditioning by simulation: draw from a joint law and keep
//! the draws satisfying a predicate.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generators::DensityGenerator;
use crate::linalg::{cholesky, SymMatrix};
use crate::sue::SueDistribution;

/// Proposals per chunk; chunk `c` draws from stream `(seed, c)`.
const CHUNK: usize = 16_384;
const MIN_ACCEPTANCE: f64 = 1e-4;

/// An elliptical law `EC_k(μ, Σ, g)` with a Gaussian or Student generator.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticalLaw {
    pub mean: DVector<f64>,
    pub cov: SymMatrix,
    pub generator: DensityGenerator,
}

impl EllipticalLaw {
    /// The selection-representation vector `(z̄, z̄₀)` of a SUE:
    /// mean `(ξ, τ)`, dispersion `[[Ω, ωΔ], [Δᵀω, Γ̄]]`.
    pub fn extended(d: &SueDistribution) -> Result<Self> {
        let (m, q) = (d.m(), d.q());
        let w = d.omega().diagonal().map(f64::sqrt);
        let cross = DMatrix::from_fn(m, q, |i, j| w[i] * d.delta()[(i, j)]);
        let cov = DMatrix::from_fn(m + q, m + q, |i, j| match (i < m, j < m) {
            (true, true) => d.omega().matrix()[(i, j)],
            (true, false) => cross[(i, j - m)],
            (false, true) => cross[(j, i - m)],
            (false, false) => d.gamma_bar().matrix()[(i - m, j - m)],
        });
        let mean = DVector::from_iterator(m + q, d.xi().iter().chain(d.tau().iter()).copied());
        Ok(EllipticalLaw { mean, cov: SymMatrix::new(cov)?, generator: d.generator().clone() })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// A sampler closure for [`mc_condition`].
    pub fn sampler(&self) -> Result<impl Fn(&mut ChaCha8Rng) -> DVector<f64> + Sync + '_> {
        let l = cholesky(&self.cov)?.l().clone();
        let mix = match self.generator {
            DensityGenerator::Gaussian => None,
            DensityGenerator::StudentT { nu } => Some((nu, 1.0)),
            DensityGenerator::StudentTScaled { nu, scale } => Some((nu, scale)),
            _ => return Err(Error::UnsupportedGenerator("oracle sampling needs a Gaussian or Student law".into())),
        };
        let chi = mix.map(|(nu, _)| ChiSquared::new(nu).expect("positive degrees of freedom"));
        let k = self.dim();
        Ok(move |rng: &mut ChaCha8Rng| {
            let e = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
            let mut x = &l * e;
            if let (Some((nu, s)), Some(chi)) = (mix, &chi) {
                let w: f64 = chi.sample(rng);
                x *= (s * nu / w).sqrt();
            }
            x + &self.mean
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedSample {
    pub accepted: Vec<DVector<f64>>,
    pub proposals: usize,
    pub acceptance_rate: f64,
}

impl ConditionedSample {
    /// Mean and standard error of coordinate `j` over the accepted draws.
    pub fn mean_se(&self, j: usize) -> (f64, f64) {
        let n = self.accepted.len() as f64;
        let mean = self.accepted.iter().map(|x| x[j]).sum::<f64>() / n;
        let var = self.accepted.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }
}

/// Draws `n` proposals from `sampler` and keeps those satisfying
/// `predicate`. Deterministic in `seed` regardless of thread count.
pub fn mc_condition<S, P>(sampler: S, predicate: P, n: usize, seed: u64) -> Result<ConditionedSample>
where
    S: Fn(&mut ChaCha8Rng) -> DVector<f64> + Sync,
    P: Fn(&DVector<f64>) -> bool + Sync,
{
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one proposal".into()));
    }
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<DVector<f64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).map(|_| sampler(&mut rng)).filter(|x| predicate(x)).collect()
        })
        .collect();
    let accepted: Vec<DVector<f64>> = parts.into_iter().flatten().collect();
    let rate = accepted.len() as f64 / n as f64;
    if rate < MIN_ACCEPTANCE {
        return Err(Error::LowAcceptance { rate, proposals: n as u64 });
    }
    Ok(ConditionedSample { accepted, proposals: n, acceptance_rate: rate })
}
