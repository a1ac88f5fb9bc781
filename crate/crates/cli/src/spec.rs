//! Model spec documents and data tables.
//!
//! A spec names the model, the generator, and the `β` and `ε` blocks of the
//! joint law of `(β, ε)`. Blocks are either raw `{xi, Omega, Delta, tau,
//! Gamma}` parameters or constructor shorthands expanded once the number of
//! observations is known. Raw `Gamma` may be any positive definite latent
//! dispersion; it is rescaled to correlation form on load.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sue_core::conjugate::{block_diag, ModelKind, Observation, RegressionJoint};
use sue_core::generators::DensityGenerator;
use sue_core::linalg::SymMatrix;
use sue_core::sue::{standardize_gamma, SueDistribution};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub model: String,
    pub generator: GeneratorSpec,
    pub prior: BlockSpec,
    pub noise: BlockSpec,
    /// `Ω_βε`, p × n; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_cov: Option<Vec<Vec<f64>>>,
    /// Latent dispersion between the `β` and `ε` latent blocks; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_cross: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Gaussian,
    StudentT { nu: f64 },
}

impl GeneratorSpec {
    pub fn generator(&self) -> DensityGenerator {
        match self {
            GeneratorSpec::Gaussian => DensityGenerator::Gaussian,
            GeneratorSpec::StudentT { nu } => DensityGenerator::student(*nu),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockSpec {
    Shorthand(Shorthand),
    Raw(RawBlock),
}

/// Noise shorthands, expanded for `n` observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shorthand {
    /// Independent skew-normal errors `SN(0, σ², α)`:
    /// `SUN_{n,n}(0, σ²I, ᾱI, 0, I)` with `ᾱ = α / (1 + α²)^{1/2}`.
    SkewNormal { sigma2: f64, alpha: f64 },
    /// Student errors sharing the joint generator:
    /// `Ω_ε = σ²I`, `Δ_ε = δI`, `τ = 0`, `Γ̄ = I` (no latent block when `δ = 0`).
    Student { sigma2: f64, #[serde(default)] delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RawBlock {
    /// Defaults to zero (noise) — required for the prior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    pub Omega: Vec<Vec<f64>>,
    /// m × q; absent means no latent block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub Delta: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub Gamma: Option<Vec<Vec<f64>>>,
}

/// Parsed block with all dimensions resolved.
#[derive(Debug, Clone, PartialEq)]
struct Block {
    xi: DVector<f64>,
    omega: DMatrix<f64>,
    delta: DMatrix<f64>,
    tau: DVector<f64>,
    gamma: DMatrix<f64>,
}

impl Block {
    fn to_raw(&self) -> RawBlock {
        let q = self.tau.len();
        RawBlock {
            xi: Some(self.xi.iter().copied().collect()),
            Omega: rows(&self.omega),
            Delta: (q > 0).then(|| rows(&self.delta)),
            tau: (q > 0).then(|| self.tau.iter().copied().collect()),
            Gamma: (q > 0).then(|| rows(&self.gamma)),
        }
    }
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn parse_err(msg: impl Into<String>) -> CliError {
    CliError::Parse(msg.into())
}

fn matrix(name: &str, v: &[Vec<f64>], shape: (usize, usize)) -> Result<DMatrix<f64>, CliError> {
    if v.len() != shape.0 || v.iter().any(|r| r.len() != shape.1) {
        return Err(parse_err(format!("{name} must be {}x{}", shape.0, shape.1)));
    }
    Ok(DMatrix::from_fn(shape.0, shape.1, |i, j| v[i][j]))
}

fn vector(name: &str, v: &[f64], len: usize) -> Result<DVector<f64>, CliError> {
    if v.len() != len {
        return Err(parse_err(format!("{name} must have length {len}, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

fn raw_block(name: &str, b: &RawBlock, require_xi: bool) -> Result<Block, CliError> {
    let m = b.Omega.len();
    if m == 0 {
        return Err(parse_err(format!("{name}.Omega is empty")));
    }
    let omega = matrix(&format!("{name}.Omega"), &b.Omega, (m, m))?;
    let xi = match &b.xi {
        Some(xi) => vector(&format!("{name}.xi"), xi, m)?,
        None if require_xi => return Err(parse_err(format!("{name}.xi is required"))),
        None => DVector::zeros(m),
    };
    let (delta, tau, gamma) = match (&b.Delta, &b.tau, &b.Gamma) {
        (None, None, None) => (DMatrix::zeros(m, 0), DVector::zeros(0), DMatrix::zeros(0, 0)),
        (Some(d), tau, Some(g)) => {
            let q = g.len();
            let delta = matrix(&format!("{name}.Delta"), d, (m, q))?;
            let gamma = matrix(&format!("{name}.Gamma"), g, (q, q))?;
            let tau = match tau {
                Some(t) => vector(&format!("{name}.tau"), t, q)?,
                None => DVector::zeros(q),
            };
            (delta, tau, gamma)
        }
        _ => return Err(parse_err(format!("{name}: Delta and Gamma must be given together"))),
    };
    Ok(Block { xi, omega, delta, tau, gamma })
}

fn expand(name: &str, b: &BlockSpec, n: usize, generator: &GeneratorSpec, require_xi: bool) -> Result<Block, CliError> {
    match b {
        BlockSpec::Raw(raw) => raw_block(name, raw, require_xi),
        BlockSpec::Shorthand(s) => {
            if name != "noise" {
                return Err(parse_err(format!("{name}: shorthands describe the noise block only")));
            }
            let (sigma2, shape) = match (s, generator) {
                (Shorthand::SkewNormal { sigma2, alpha }, GeneratorSpec::Gaussian) => {
                    (*sigma2, alpha / (1.0 + alpha * alpha).sqrt())
                }
                (Shorthand::Student { sigma2, delta }, GeneratorSpec::StudentT { .. }) => (*sigma2, *delta),
                (Shorthand::SkewNormal { .. }, _) => {
                    return Err(CliError::Unsupported("skew_normal noise needs the gaussian generator".into()))
                }
                (Shorthand::Student { .. }, _) => {
                    return Err(CliError::Unsupported("student noise needs the student_t generator".into()))
                }
            };
            if !(sigma2 > 0.0 && sigma2.is_finite() && shape.is_finite()) {
                return Err(parse_err(format!("{name}: need sigma2 > 0 and a finite shape")));
            }
            let q = if shape == 0.0 { 0 } else { n };
            Ok(Block {
                xi: DVector::zeros(n),
                omega: DMatrix::identity(n, n) * sigma2,
                delta: DMatrix::identity(n, q) * shape,
                tau: DVector::zeros(q),
                gamma: DMatrix::identity(q, q),
            })
        }
    }
}

pub fn model_kind(name: &str) -> Result<ModelKind, CliError> {
    match name {
        "linear" => Ok(ModelKind::Linear),
        "binary" => Ok(ModelKind::Binary),
        "censored" => Ok(ModelKind::Censored),
        other => Err(parse_err(format!("unknown model {other:?}; expected linear, binary or censored"))),
    }
}

/// A spec bound to a dataset.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub joint: RegressionJoint,
    pub observation: Observation,
    /// The model spec with shorthands expanded into raw blocks.
    pub expanded: ModelSpec,
}

pub fn read_spec(path: &Path) -> Result<ModelSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| parse_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| parse_err(format!("{}: {e}", path.display())))
}

/// Reads a comma-separated table with a header row.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let err = |e: String| parse_err(format!("{}: {e}", path.display()));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| err(e.to_string()))?;
    let header: Vec<String> = reader.headers().map_err(|e| err(e.to_string()))?.iter().map(String::from).collect();
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| err(format!("row {}: {s:?} is not a number", i + 1))))
            .collect::<Result<Vec<f64>, _>>()?;
        out.push(row);
    }
    Ok((header, out))
}

/// Splits a data table into the design `X` and the response `y`.
pub fn read_data(path: &Path, p: usize) -> Result<(DMatrix<f64>, DVector<f64>), CliError> {
    let (header, rows) = read_table(path)?;
    if header.len() != p + 1 {
        return Err(parse_err(format!("{}: expected {} columns (x_1..x_{p}, y), got {}", path.display(), p + 1, header.len())));
    }
    let n = rows.len();
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let y = DVector::from_fn(n, |i, _| rows[i][p]);
    Ok((x, y))
}

impl ModelSpec {
    pub fn p(&self) -> Result<usize, CliError> {
        match &self.prior {
            BlockSpec::Raw(b) => Ok(b.Omega.len()),
            BlockSpec::Shorthand(_) => Err(parse_err("prior: shorthands describe the noise block only")),
        }
    }

    /// Builds the joint law of `(β, ε)` for `n` observations with design `x`.
    pub fn bind(&self, x: DMatrix<f64>, y: &DVector<f64>) -> Result<LoadedModel, CliError> {
        let kind = model_kind(&self.model)?;
        let n = x.nrows();
        if n == 0 {
            return Err(parse_err("data file has no rows"));
        }
        let prior = expand("prior", &self.prior, n, &self.generator, true)?;
        let noise = expand("noise", &self.noise, n, &self.generator, false)?;
        let p = prior.xi.len();
        if x.ncols() != p {
            return Err(parse_err(format!("design has {} columns, prior has dimension {p}", x.ncols())));
        }
        if noise.xi.len() != n {
            return Err(parse_err(format!("noise block has dimension {}, data has {n} rows", noise.xi.len())));
        }
        let (qb, qe) = (prior.tau.len(), noise.tau.len());
        let mut omega = block_diag(&prior.omega, &noise.omega);
        if let Some(c) = &self.cross_cov {
            let c = matrix("cross_cov", c, (p, n))?;
            omega.view_mut((0, p), (p, n)).copy_from(&c);
            omega.view_mut((p, 0), (n, p)).copy_from(&c.transpose());
        }
        let mut gamma = block_diag(&prior.gamma, &noise.gamma);
        if let Some(c) = &self.latent_cross {
            let c = matrix("latent_cross", c, (qb, qe))?;
            gamma.view_mut((0, qb), (qb, qe)).copy_from(&c);
            gamma.view_mut((qb, 0), (qe, qb)).copy_from(&c.transpose());
        }
        let xi = DVector::from_iterator(p + n, prior.xi.iter().chain(noise.xi.iter()).copied());
        let tau = DVector::from_iterator(qb + qe, prior.tau.iter().chain(noise.tau.iter()).copied());
        let delta = block_diag(&prior.delta, &noise.delta);
        let joint = standardize_gamma(
            xi,
            SymMatrix::new(omega)?,
            delta,
            tau,
            SymMatrix::new(gamma)?,
            self.generator.generator(),
        )?;
        let observation = Observation::from_values(kind, y).map_err(|e| parse_err(e.to_string()))?;
        let expanded = self.echo(&joint, p, qb);
        let joint = RegressionJoint::new(joint, x, kind)?;
        Ok(LoadedModel { joint, observation, expanded })
    }
}

impl ModelSpec {
    /// The standardized joint split back into blocks: loading the echo again
    /// reproduces the same joint.
    fn echo(&self, d: &SueDistribution, p: usize, qb: usize) -> ModelSpec {
        let (m, q) = (d.m(), d.q());
        let om = d.omega().matrix();
        let gm = d.gamma_bar().matrix();
        let block = |r: std::ops::Range<usize>, l: std::ops::Range<usize>| Block {
            xi: d.xi().rows(r.start, r.len()).into_owned(),
            omega: om.view((r.start, r.start), (r.len(), r.len())).into_owned(),
            delta: d.delta().view((r.start, l.start), (r.len(), l.len())).into_owned(),
            tau: d.tau().rows(l.start, l.len()).into_owned(),
            gamma: gm.view((l.start, l.start), (l.len(), l.len())).into_owned(),
        };
        ModelSpec {
            model: self.model.clone(),
            generator: self.generator.clone(),
            prior: BlockSpec::Raw(block(0..p, 0..qb).to_raw()),
            noise: BlockSpec::Raw(block(p..m, qb..q).to_raw()),
            cross_cov: self.cross_cov.as_ref().map(|_| rows(&om.view((0, p), (p, m - p)).into_owned())),
            latent_cross: self.latent_cross.as_ref().map(|_| rows(&gm.view((0, qb), (qb, q - qb)).into_owned())),
        }
    }
}

/// Reads the model spec and data and binds them.
pub fn load(spec_path: &Path, data_path: &Path) -> Result<LoadedModel, CliError> {
    let spec = read_spec(spec_path)?;
    let (x, y) = read_data(data_path, spec.p()?)?;
    spec.bind(x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(json: &str) -> ModelSpec {
        serde_json::from_str(json).unwrap()
    }

    const EXAMPLE_1: &str = r#"{
        "model": "linear",
        "generator": {"family": "gaussian"},
        "prior": {"xi": [0.1, -0.2], "Omega": [[1.0, 0.2], [0.2, 2.0]],
                  "Delta": [[0.3], [-0.2]], "tau": [0.5], "Gamma": [[1.0]]},
        "noise": {"kind": "skew_normal", "sigma2": 0.5, "alpha": 1.5}
    }"#;

    #[test]
    fn skew_normal_shorthand_expands_per_observation() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.1, 1.0, -0.4, 1.0, 0.9]);
        let m = spec(EXAMPLE_1).bind(x, &DVector::from_vec(vec![0.2, 0.1, -0.3])).unwrap();
        let d = m.joint.joint();
        assert_eq!((d.m(), d.q()), (5, 4));
        let ab = 1.5 / (1.0f64 + 2.25).sqrt();
        assert!((d.delta()[(2, 1)] - ab).abs() < 1e-15);
        assert_eq!(d.omega().matrix()[(4, 4)], 0.5);
    }

    #[test]
    fn raw_gamma_is_standardized() {
        let raw = spec(
            r#"{"model": "linear", "generator": {"family": "gaussian"},
                "prior": {"xi": [0.0], "Omega": [[1.0]], "Delta": [[0.4]], "tau": [1.0], "Gamma": [[4.0]]},
                "noise": {"Omega": [[1.0]]}}"#,
        );
        let m = raw.bind(DMatrix::from_element(1, 1, 1.0), &DVector::from_vec(vec![0.3])).unwrap();
        let d = m.joint.joint();
        assert_eq!(d.gamma_bar().matrix()[(0, 0)], 1.0);
        assert!((d.tau()[0] - 0.5).abs() < 1e-15);
        assert!((d.delta()[(0, 0)] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn expanded_spec_is_a_fixed_point() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 1.0, -0.4]);
        let y = DVector::from_vec(vec![0.2, 0.1]);
        let first = spec(EXAMPLE_1).bind(x.clone(), &y).unwrap();
        let text = serde_json::to_string(&first.expanded).unwrap();
        let second = spec(&text).bind(x.clone(), &y).unwrap();
        assert_eq!(second.expanded, first.expanded);
        assert_eq!(second.joint.joint(), first.joint.joint());

        let raw = spec(
            r#"{"model": "linear", "generator": {"family": "gaussian"},
                "prior": {"xi": [0.0, 0.5], "Omega": [[1.0, 0.0], [0.0, 2.0]], "Delta": [[0.4], [0.1]], "tau": [1.0], "Gamma": [[4.0]]},
                "noise": {"Omega": [[1.0, 0.0], [0.0, 1.0]], "Delta": [[0.6], [0.0]], "tau": [0.2], "Gamma": [[2.0]]},
                "latent_cross": [[0.5]], "cross_cov": [[0.1, 0.0], [0.0, -0.1]]}"#,
        );
        let first = raw.bind(x.clone(), &y).unwrap();
        let again = spec(&serde_json::to_string(&first.expanded).unwrap()).bind(x, &y).unwrap();
        assert_eq!(again.expanded, first.expanded);
        assert!(again.joint.joint().max_abs_diff(first.joint.joint()) < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_a_parse_error() {
        let bad = spec(
            r#"{"model": "linear", "generator": {"family": "gaussian"},
                "prior": {"xi": [0.0, 1.0], "Omega": [[1.0]]}, "noise": {"Omega": [[1.0]]}}"#,
        );
        let r = bad.bind(DMatrix::from_element(1, 1, 1.0), &DVector::from_vec(vec![0.3]));
        assert!(matches!(r, Err(CliError::Parse(_))));
    }

    #[test]
    fn shorthand_generator_mismatch_is_unsupported() {
        let bad = spec(
            r#"{"model": "linear", "generator": {"family": "student_t", "nu": 4.0},
                "prior": {"xi": [0.0], "Omega": [[1.0]]}, "noise": {"kind": "skew_normal", "sigma2": 1.0, "alpha": 1.0}}"#,
        );
        let r = bad.bind(DMatrix::from_element(1, 1, 1.0), &DVector::from_vec(vec![0.3]));
        assert!(matches!(r, Err(CliError::Unsupported(_))));
    }
}
