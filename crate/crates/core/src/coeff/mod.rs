//! Drift and diffusion coefficients: a small expression language for
//! drifts, parametric diffusions, per-vertex override tables and the static
//! growth/Lipschitz validators.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::{Graph, GraphError};

pub mod ast;
pub mod eval;
pub mod parser;
pub mod validate;

pub use ast::Expr;
pub use eval::{eval_into, linear_form, EvalError, History, LinearDrift, ResolvedLinear};
pub use parser::{parse_expr, ParseError, ParseErrorKind};
pub use validate::{validate_linear_growth, validate_lipschitz, ValidationReport, Violation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoeffError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("diffusion matrix must be square and non-empty")]
    NotSquare,
    #[error("diffusion matrix is singular")]
    Singular,
    #[error("diagonal diffusion needs a_i > |b_i| (component {0})")]
    DegenerateDiagonal(usize),
    #[error("diagonal diffusion parameter lengths differ ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("coefficient refers to component {index} but the state dimension is {dim}")]
    Dimension { index: usize, dim: usize },
    #[error("override for unknown vertex `{0}`")]
    UnknownOverride(String),
}

/// A parsed drift expression together with its source text.
#[derive(Debug, Clone)]
pub struct DriftSpec {
    source: String,
    expr: Expr,
}

impl DriftSpec {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        Ok(Self { source: text.to_string(), expr: parse_expr(text)? })
    }

    pub fn zero() -> Self {
        Self::parse("0").expect("literal zero parses")
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn is_zero(&self) -> bool {
        self.expr.constant_value() == Some(0.0)
    }

    /// Smallest state dimension the expression can be evaluated in.
    pub fn min_dim(&self) -> usize {
        self.expr.max_component().map_or(1, |c| c + 1)
    }

    pub fn check_dim(&self, dim: usize) -> Result<(), CoeffError> {
        match self.expr.max_component() {
            Some(c) if c >= dim => Err(CoeffError::Dimension { index: c, dim }),
            _ => Ok(()),
        }
    }
}

impl PartialEq for DriftSpec {
    fn eq(&self, other: &Self) -> bool {
        self.expr == other.expr
    }
}

impl fmt::Display for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl FromStr for DriftSpec {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for DriftSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for DriftSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Self::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Homogeneous default with per-vertex overrides keyed by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftTable {
    pub default: DriftSpec,
    #[serde(default)]
    pub overrides: BTreeMap<String, DriftSpec>,
}

impl DriftTable {
    pub fn homogeneous(spec: DriftSpec) -> Self {
        Self { default: spec, overrides: BTreeMap::new() }
    }

    pub fn spec_for(&self, label: &str) -> &DriftSpec {
        self.overrides.get(label).unwrap_or(&self.default)
    }

    /// One drift per vertex of `g`, in index order. Overrides must name
    /// vertices of `g`.
    pub fn resolve(&self, g: &Graph) -> Result<VertexDrifts, CoeffError> {
        if let Some(bad) = self.overrides.keys().find(|l| g.vertex(l).is_err()) {
            return Err(CoeffError::UnknownOverride(bad.clone()));
        }
        Ok(VertexDrifts::new(g.labels().iter().map(|l| (l.clone(), self.spec_for(l).clone())).collect()))
    }

    /// Like [`resolve`](Self::resolve) but ignores overrides for vertices
    /// outside `g`, as needed when `g` is a truncation of a larger graph.
    pub fn resolve_lenient(&self, g: &Graph) -> VertexDrifts {
        VertexDrifts::new(g.labels().iter().map(|l| (l.clone(), self.spec_for(l).clone())).collect())
    }
}

/// Drifts assigned to the vertices of a concrete graph, in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexDrifts {
    labels: Vec<String>,
    specs: Vec<DriftSpec>,
}

impl VertexDrifts {
    pub fn new(entries: Vec<(String, DriftSpec)>) -> Self {
        let (labels, specs) = entries.into_iter().unzip();
        Self { labels, specs }
    }

    pub fn uniform(g: &Graph, spec: &DriftSpec) -> Self {
        Self { labels: g.labels().to_vec(), specs: vec![spec.clone(); g.len()] }
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn specs(&self) -> &[DriftSpec] {
        &self.specs
    }

    pub fn get(&self, label: &str) -> Option<&DriftSpec> {
        self.labels.iter().position(|l| l == label).map(|i| &self.specs[i])
    }

    pub fn matches(&self, g: &Graph) -> bool {
        self.labels.as_slice() == g.labels()
    }

    pub fn all_zero(&self) -> bool {
        self.specs.iter().all(DriftSpec::is_zero)
    }
}

/// The drift family on the truncation `G_n`: vertices of `V_{n-2}` keep
/// their drift, the annulus `U_n` is driftless, and vertices outside `V_n`
/// are absent. Entries follow the vertex order of
/// `g.augmented_truncation(n)`.
pub fn truncated_drift_family(table: &DriftTable, g: &Graph, n: usize) -> Result<VertexDrifts, CoeffError> {
    let gn = g.augmented_truncation(n)?;
    let inner = gn.ball(n - 2)?;
    let zero = DriftSpec::zero();
    Ok(VertexDrifts::new(
        gn.labels()
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let spec = if inner.contains(i) { table.spec_for(l).clone() } else { zero.clone() };
                (l.clone(), spec)
            })
            .collect(),
    ))
}

/// Own-state diffusion coefficient `σ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", try_from = "RawDiffusion")]
pub enum DiffusionSpec {
    /// Constant invertible matrix, row-major.
    Constant { matrix: Vec<Vec<f64>> },
    /// `diag(a_i + b_i tanh(x_i))` with `a_i > |b_i|`.
    Diagonal { a: Vec<f64>, b: Vec<f64> },
}

#[derive(Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
enum RawDiffusion {
    Constant { matrix: Vec<Vec<f64>> },
    Diagonal { a: Vec<f64>, b: Vec<f64> },
}

impl TryFrom<RawDiffusion> for DiffusionSpec {
    type Error = CoeffError;
    fn try_from(raw: RawDiffusion) -> Result<Self, CoeffError> {
        match raw {
            RawDiffusion::Constant { matrix } => Self::constant(matrix),
            RawDiffusion::Diagonal { a, b } => Self::diagonal(a, b),
        }
    }
}

impl DiffusionSpec {
    pub fn identity(dim: usize) -> Self {
        let matrix = (0..dim).map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self::Constant { matrix }
    }

    pub fn constant(matrix: Vec<Vec<f64>>) -> Result<Self, CoeffError> {
        let d = matrix.len();
        if d == 0 || matrix.iter().any(|r| r.len() != d) {
            return Err(CoeffError::NotSquare);
        }
        let m = nalgebra::DMatrix::from_fn(d, d, |i, j| matrix[i][j]);
        let svd = m.svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-12 * smax.max(1e-300)) || !smin.is_finite() {
            return Err(CoeffError::Singular);
        }
        Ok(Self::Constant { matrix })
    }

    pub fn diagonal(a: Vec<f64>, b: Vec<f64>) -> Result<Self, CoeffError> {
        if a.len() != b.len() {
            return Err(CoeffError::LengthMismatch { a: a.len(), b: b.len() });
        }
        if a.is_empty() {
            return Err(CoeffError::NotSquare);
        }
        if let Some(i) = (0..a.len()).find(|&i| !(a[i] > b[i].abs()) || !a[i].is_finite()) {
            return Err(CoeffError::DegenerateDiagonal(i));
        }
        Ok(Self::Diagonal { a, b })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Constant { matrix } => matrix.len(),
            Self::Diagonal { a, .. } => a.len(),
        }
    }

    /// Whether `σ` is a multiple of the identity that does not depend on the state.
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Self::Constant { matrix } => {
                let s = matrix[0][0];
                let ok = matrix
                    .iter()
                    .enumerate()
                    .all(|(i, r)| r.iter().enumerate().all(|(j, &v)| v == if i == j { s } else { 0.0 }));
                ok.then_some(s)
            }
            Self::Diagonal { a, b } => (b.iter().all(|&v| v == 0.0) && a.iter().all(|&v| v == a[0])).then_some(a[0]),
        }
    }

    /// `σ(x)` as a dense matrix.
    pub fn matrix_at(&self, x: &[f64]) -> nalgebra::DMatrix<f64> {
        match self {
            Self::Constant { matrix } => {
                let d = matrix.len();
                nalgebra::DMatrix::from_fn(d, d, |i, j| matrix[i][j])
            }
            Self::Diagonal { a, b } => {
                nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_fn(a.len(), |i, _| a[i] + b[i] * x[i].tanh()))
            }
        }
    }

    /// Upper bound on the operator norm of `σ(x)` over all states.
    pub fn norm_bound(&self) -> f64 {
        match self {
            Self::Constant { matrix } => {
                self.matrix_at(&vec![0.0; matrix.len()]).svd(false, false).singular_values.max()
            }
            Self::Diagonal { a, b } => a.iter().zip(b).map(|(a, b)| a + b.abs()).fold(0.0, f64::max),
        }
    }

    /// Upper bound on the operator norm of `σ(x)^{-1}` over all states.
    pub fn inverse_norm_bound(&self) -> f64 {
        match self {
            Self::Constant { matrix } => {
                1.0 / self.matrix_at(&vec![0.0; matrix.len()]).svd(false, false).singular_values.min()
            }
            Self::Diagonal { a, b } => 1.0 / a.iter().zip(b).map(|(a, b)| a - b.abs()).fold(f64::INFINITY, f64::min),
        }
    }

    /// Lipschitz constant of `x ↦ σ(x)` in operator norm.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Self::Constant { .. } => 0.0,
            Self::Diagonal { b, .. } => b.iter().map(|v| v.abs()).fold(0.0, f64::max),
        }
    }

    /// Precomputed evaluator for the hot loops.
    pub fn compile(&self) -> CompiledDiffusion {
        match self {
            Self::Constant { matrix } => {
                let m = self.matrix_at(&vec![0.0; matrix.len()]);
                let inv = m.clone().try_inverse().expect("validated as invertible");
                let d = m.nrows();
                if self.scalar().is_some() {
                    CompiledDiffusion::Scalar(m[(0, 0)], d)
                } else {
                    CompiledDiffusion::Matrix { sigma: m, inverse: inv }
                }
            }
            Self::Diagonal { a, b } => CompiledDiffusion::Diagonal { a: a.clone(), b: b.clone() },
        }
    }
}

/// Evaluation form of a [`DiffusionSpec`].
#[derive(Debug, Clone)]
pub enum CompiledDiffusion {
    Scalar(f64, usize),
    Matrix { sigma: nalgebra::DMatrix<f64>, inverse: nalgebra::DMatrix<f64> },
    Diagonal { a: Vec<f64>, b: Vec<f64> },
}

impl CompiledDiffusion {
    /// `out = σ(x) z`.
    pub fn apply(&self, x: &[f64], z: &[f64], out: &mut [f64]) {
        match self {
            Self::Scalar(s, _) => {
                for (o, v) in out.iter_mut().zip(z) {
                    *o = s * v;
                }
            }
            Self::Matrix { sigma, .. } => mat_vec(sigma, z, out),
            Self::Diagonal { a, b } => {
                for i in 0..out.len() {
                    out[i] = (a[i] + b[i] * x[i].tanh()) * z[i];
                }
            }
        }
    }

    /// `out = σ(x)^{-1} v`.
    pub fn solve(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            Self::Scalar(s, _) => {
                for (o, w) in out.iter_mut().zip(v) {
                    *o = w / s;
                }
            }
            Self::Matrix { inverse, .. } => mat_vec(inverse, v, out),
            Self::Diagonal { a, b } => {
                for i in 0..out.len() {
                    out[i] = v[i] / (a[i] + b[i] * x[i].tanh());
                }
            }
        }
    }
}

fn mat_vec(m: &nalgebra::DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum();
    }
}

/// Homogeneous diffusion with per-vertex overrides keyed by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionTable {
    pub default: DiffusionSpec,
    #[serde(default)]
    pub overrides: BTreeMap<String, DiffusionSpec>,
}

impl DiffusionTable {
    pub fn homogeneous(spec: DiffusionSpec) -> Self {
        Self { default: spec, overrides: BTreeMap::new() }
    }

    pub fn spec_for(&self, label: &str) -> &DiffusionSpec {
        self.overrides.get(label).unwrap_or(&self.default)
    }

    /// One diffusion per vertex of `g`; every entry must have dimension `dim`.
    pub fn resolve(&self, g: &Graph, dim: usize) -> Result<Vec<DiffusionSpec>, CoeffError> {
        let specs: Vec<DiffusionSpec> = g.labels().iter().map(|l| self.spec_for(l).clone()).collect();
        if let Some(s) = specs.iter().find(|s| s.dim() != dim) {
            return Err(CoeffError::Dimension { index: s.dim().saturating_sub(1), dim });
        }
        Ok(specs)
    }
}
