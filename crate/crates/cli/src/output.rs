//! Result documents. Every float is written with 17 significant digits so
//! that parsing the text recovers the exact binary value.

use std::io::{self, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use sue_core::conjugate::{GeneratorRecord, PosteriorReport};
use sue_core::generators::DensityGenerator;
use sue_core::sue::SueDistribution;

use crate::spec::{rows, GeneratorSpec, ModelSpec};

/// `{:.16e}` for every float: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Pretty JSON with floats printed by [`fmt_f64`]; non-finite values (which
/// JSON cannot hold) become `null`.
struct Digits17<'a>(PrettyFormatter<'a>);

impl Formatter for Digits17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        if v.is_finite() {
            w.write_all(fmt_f64(v).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("serializing to memory");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct SueParams {
    pub m: usize,
    pub q: usize,
    pub xi: Vec<f64>,
    pub Omega: Vec<Vec<f64>>,
    pub Delta: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    pub Gamma: Vec<Vec<f64>>,
    pub generator: GeneratorOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GeneratorOut {
    Gaussian,
    StudentT { nu: f64 },
    StudentTScaled { nu: f64, scale: f64 },
    Other { description: String },
}

impl From<&DensityGenerator> for GeneratorOut {
    fn from(g: &DensityGenerator) -> Self {
        match g {
            DensityGenerator::Gaussian => GeneratorOut::Gaussian,
            DensityGenerator::StudentT { nu } => GeneratorOut::StudentT { nu: *nu },
            DensityGenerator::StudentTScaled { nu, scale } => GeneratorOut::StudentTScaled { nu: *nu, scale: *scale },
            other => GeneratorOut::Other { description: format!("{other:?}") },
        }
    }
}

impl From<&SueDistribution> for SueParams {
    fn from(d: &SueDistribution) -> Self {
        let v = |x: &DVector<f64>| x.iter().copied().collect();
        SueParams {
            m: d.m(),
            q: d.q(),
            xi: v(d.xi()),
            Omega: rows(d.omega().matrix()),
            Delta: rows(d.delta()),
            tau: v(d.tau()),
            Gamma: rows(d.gamma_bar().matrix()),
            generator: d.generator().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecordOut {
    pub joint: GeneratorOut,
    pub result: GeneratorOut,
    pub df_joint: Option<f64>,
    pub df_result: Option<f64>,
    pub conditioned_on: usize,
    pub quad_form: Option<f64>,
    pub alpha: Option<f64>,
}

impl From<&GeneratorRecord> for GeneratorRecordOut {
    fn from(r: &GeneratorRecord) -> Self {
        GeneratorRecordOut {
            joint: (&r.joint).into(),
            result: (&r.result).into(),
            df_joint: r.df_joint,
            df_result: r.df_result,
            conditioned_on: r.conditioned_on,
            quad_form: r.quad_form,
            alpha: r.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsOut {
    pub latent_growth: usize,
    pub latent_dropped: usize,
    pub latent_dim: usize,
}

/// Output of `posterior`. Wall time goes to the error stream, not here, so
/// that reruns with one seed are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub command: String,
    pub seed: u64,
    pub model: String,
    pub generator: GeneratorSpec,
    pub n_observations: usize,
    pub posterior: SueParams,
    pub generator_record: GeneratorRecordOut,
    pub diagnostics: DiagnosticsOut,
    #[serde(default)]
    pub sample_file: Option<String>,
    /// The model spec with shorthands expanded, for auditability.
    pub expanded_spec: ModelSpec,
}

impl RunResult {
    pub fn new(command: &str, seed: u64, n: usize, report: &PosteriorReport, expanded: &ModelSpec) -> Self {
        let d = &report.diagnostics;
        RunResult {
            command: command.into(),
            seed,
            model: expanded.model.clone(),
            generator: expanded.generator.clone(),
            n_observations: n,
            posterior: (&report.posterior).into(),
            generator_record: (&d.generator).into(),
            diagnostics: DiagnosticsOut {
                latent_growth: d.latent_growth,
                latent_dropped: d.latent_dropped,
                latent_dim: d.latent_dim,
            },
            sample_file: None,
            expanded_spec: expanded.clone(),
        }
    }
}
