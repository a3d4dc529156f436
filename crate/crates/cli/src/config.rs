//! Experiment configuration: one JSON document, validated in full before
//! any command runs. Unknown keys are rejected at every level.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use netdiff_core::coeff::{DiffusionSpec, DiffusionTable, DriftSpec, DriftTable};
use netdiff_core::gaussian::TimeGrid;
use netdiff_core::graph::generators::{complete, cycle, grid, path, tree};
use netdiff_core::graph::{Graph, InfiniteGraph, ZLine, ZSquare};
use netdiff_core::sde::{InitialLaw, Recording};

use crate::run::RunError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<DiffusionInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_report: Option<GraphParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<GaussianParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub girsanov: Option<GirsanovParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_scan: Option<CiScanParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approx: Option<ApproxParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hc_lab: Option<HcLabParams>,
}

/// Where the graph comes from. `file` is replaced by `edge_list` when the
/// config is loaded, so the run hash covers the file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    Path { n: usize },
    Cycle { n: usize },
    Complete { n: usize },
    Grid { rows: usize, cols: usize },
    Tree { branching: usize, depth: usize },
    ZLine,
    ZSquare,
    EdgeList { text: String },
    File { path: String },
}

/// A drift given either as one expression for every vertex or as a table
/// with per-vertex overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DriftInput {
    Text(DriftSpec),
    Table(DriftTable),
}

/// A diffusion given as a scalar multiple of the identity, a single
/// specification or a table with overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DiffusionInput {
    Scalar(f64),
    Spec(DiffusionSpec),
    Table(DiffusionTable),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_max: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphParams {
    /// Vertex sets, by label, whose boundaries are reported.
    #[serde(default)]
    pub sets: Vec<Vec<String>>,
    /// Truncation depths around the root.
    #[serde(default)]
    pub truncations: Vec<usize>,
    /// Whether to enumerate cliques of order 1 and 2.
    #[serde(default = "yes")]
    pub cliques: bool,
}

impl Default for GraphParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeChoice {
    Euler,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionalRequest {
    pub target: Vec<String>,
    #[serde(default)]
    pub given: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianParams {
    /// Diagonal of the drift matrix when no drift expression is given.
    #[serde(default = "standard_shift")]
    pub diag_shift: f64,
    /// Times at which covariance and precision are tabulated.
    pub times: Vec<f64>,
    #[serde(default)]
    pub conditionals: Vec<ConditionalRequest>,
    /// Entries of the precision below this count as zero in the support.
    #[serde(default = "support_tol")]
    pub support_tol: f64,
    /// Stacked path-space precision on the config grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_scheme: Option<SchemeChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<GaussianExpect>,
}

/// Reference values checked against the first tabulated time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianExpect {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    /// One matrix per requested conditional, `null` to skip.
    #[serde(default)]
    pub conditionals: Vec<Option<Vec<Vec<f64>>>>,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureChoice {
    #[default]
    Interacting,
    Driftless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    #[serde(default = "record_all")]
    pub recording: Recording,
    #[serde(default)]
    pub measure: MeasureChoice,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self { recording: Recording::All, measure: MeasureChoice::Interacting }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GirsanovParams {
    /// Width of the acceptance band around 1, in standard errors.
    #[serde(default = "three")]
    pub sigmas: f64,
}

impl Default for GirsanovParams {
    fn default() -> Self {
        Self { sigmas: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiSourceChoice {
    /// Stacked covariance of the linear Gaussian system.
    #[default]
    Exact,
    /// Partial correlations of a simulated ensemble.
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CiScanParams {
    #[serde(default)]
    pub source: CiSourceChoice,
    #[serde(default = "both_orders")]
    pub orders: Vec<usize>,
    /// Sets to scan; singletons and edges when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sets: Option<Vec<Vec<String>>>,
    #[serde(default = "exact_tol")]
    pub tol: f64,
    #[serde(default = "euler")]
    pub scheme: SchemeChoice,
    #[serde(default = "standard_shift")]
    pub diag_shift: f64,
    #[serde(default = "alpha")]
    pub alpha: f64,
    #[serde(default = "record_endpoints")]
    pub recording: Recording,
    /// Recorded time indices used as features; all but the first when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_times: Option<Vec<usize>>,
    /// Expected pass/fail per order.
    #[serde(default)]
    pub expect: BTreeMap<usize, bool>,
}

impl Default for CiScanParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxParams {
    pub window: Vec<String>,
    /// Truncation depths; the last is the reference.
    pub levels: Vec<usize>,
    /// Require the energy distance to decrease strictly along the levels.
    #[serde(default)]
    pub expect_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "suite", rename_all = "snake_case", deny_unknown_fields)]
pub enum HcLabParams {
    /// Random 2-clique models are second-order Markov and refactorize.
    Factorization {
        #[serde(default = "five")]
        max_vertices: usize,
        #[serde(default = "ten")]
        models: usize,
        #[serde(default = "two")]
        states: usize,
    },
    /// Projection onto the truncation keeps the marginal and the Markov property.
    Projection {
        depth: usize,
        #[serde(default = "five")]
        models: usize,
    },
    /// Random search for a marginal that is not Markov on an induced subgraph.
    Search {
        subset: Vec<String>,
        #[serde(default = "two_hundred")]
        trials: usize,
        #[serde(default = "one")]
        order: usize,
        #[serde(default = "min_gap")]
        min_gap: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_found: Option<bool>,
    },
    /// Local and joint conditional kernels agree.
    Specification {
        set: Vec<String>,
        #[serde(default = "five")]
        models: usize,
        #[serde(default = "two")]
        states: usize,
    },
}

fn yes() -> bool {
    true
}
fn standard_shift() -> f64 {
    -2.0
}
fn support_tol() -> f64 {
    1e-10
}
fn record_all() -> Recording {
    Recording::All
}
fn record_endpoints() -> Recording {
    Recording::Endpoints
}
fn three() -> f64 {
    3.0
}
fn both_orders() -> Vec<usize> {
    vec![1, 2]
}
fn exact_tol() -> f64 {
    netdiff_core::mrf::EXACT_TOL
}
fn euler() -> SchemeChoice {
    SchemeChoice::Euler
}
fn alpha() -> f64 {
    0.01
}
fn one() -> usize {
    1
}
fn two() -> usize {
    2
}
fn five() -> usize {
    5
}
fn ten() -> usize {
    10
}
fn two_hundred() -> usize {
    200
}
fn min_gap() -> f64 {
    1e-3
}

/// A resolved graph: finite with an optional root, or a lazily explored
/// infinite lattice.
pub enum Topology {
    Finite(Graph),
    Infinite(Box<dyn InfiniteGraph>),
}

impl ExperimentConfig {
    /// Parses and validates a config file.
    pub fn load(file: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(file)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", file.display())))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", file.display())))?;
        if let Some(GraphSource::File { path }) = &cfg.graph {
            let target = file.parent().unwrap_or(Path::new(".")).join(path);
            let text = std::fs::read_to_string(&target)
                .map_err(|e| RunError::Config(format!("cannot read graph file {}: {e}", target.display())))?;
            cfg.graph = Some(GraphSource::EdgeList { text });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if let Some(g) = &self.grid {
            if !(g.t_max > 0.0 && g.t_max.is_finite()) || g.steps == 0 {
                return Err(RunError::Config("grid needs t_max > 0 and steps >= 1".into()));
            }
        }
        if self.replicas == Some(0) {
            return Err(RunError::Config("replicas must be positive".into()));
        }
        if let Some(source) = &self.graph {
            let n = match source {
                GraphSource::Path { n } | GraphSource::Cycle { n } | GraphSource::Complete { n } => *n,
                GraphSource::Grid { rows, cols } => rows * cols,
                _ => 1,
            };
            if n == 0 {
                return Err(RunError::Config("graph must have at least one vertex".into()));
            }
        }
        Ok(())
    }

    pub fn topology(&self) -> Result<Topology, RunError> {
        let source = self.graph.as_ref().ok_or_else(|| RunError::Config("`graph` is required".into()))?;
        let infinite: Option<Box<dyn InfiniteGraph>> = match source {
            GraphSource::ZLine => Some(Box::new(ZLine)),
            GraphSource::ZSquare => Some(Box::new(ZSquare)),
            _ => None,
        };
        if let Some(inf) = infinite {
            if let Some(root) = &self.root {
                if *root != inf.root() {
                    return Err(RunError::Config(format!("lattice root is `{}`, not `{root}`", inf.root())));
                }
            }
            return Ok(Topology::Infinite(inf));
        }
        let g = match source {
            GraphSource::Path { n } => path(*n),
            GraphSource::Cycle { n } => cycle(*n),
            GraphSource::Complete { n } => complete(*n),
            GraphSource::Grid { rows, cols } => grid(*rows, *cols),
            GraphSource::Tree { branching, depth } => tree(*branching, *depth),
            GraphSource::EdgeList { text } => Graph::parse_edge_list(text)?,
            GraphSource::File { path } => {
                return Err(RunError::Config(format!("graph file `{path}` was not resolved at load time")))
            }
            GraphSource::ZLine | GraphSource::ZSquare => unreachable!("handled above"),
        };
        let g = match &self.root {
            Some(root) => g.with_root(root)?,
            None => g,
        };
        Ok(Topology::Finite(g))
    }

    pub fn finite_graph(&self) -> Result<Graph, RunError> {
        match self.topology()? {
            Topology::Finite(g) => Ok(g),
            Topology::Infinite(_) => Err(RunError::Config("this command needs a finite graph".into())),
        }
    }

    pub fn drift_table(&self) -> Option<DriftTable> {
        self.drift.as_ref().map(|d| match d {
            DriftInput::Text(spec) => DriftTable::homogeneous(spec.clone()),
            DriftInput::Table(t) => t.clone(),
        })
    }

    pub fn require_drift(&self) -> Result<DriftTable, RunError> {
        self.drift_table().ok_or_else(|| RunError::Config("`drift` is required".into()))
    }

    pub fn diffusion_table(&self) -> Result<DiffusionTable, RunError> {
        Ok(match &self.diffusion {
            None => DiffusionTable::homogeneous(DiffusionSpec::identity(1)),
            Some(DiffusionInput::Scalar(s)) => DiffusionTable::homogeneous(DiffusionSpec::constant(vec![vec![*s]])?),
            Some(DiffusionInput::Spec(spec)) => DiffusionTable::homogeneous(spec.clone()),
            Some(DiffusionInput::Table(t)) => t.clone(),
        })
    }

    pub fn initial_law(&self) -> InitialLaw {
        self.initial.clone().unwrap_or_else(|| InitialLaw::point(0.0))
    }

    pub fn time_grid(&self) -> Result<TimeGrid, RunError> {
        let g = self.grid.ok_or_else(|| RunError::Config("`grid` is required".into()))?;
        Ok(TimeGrid::uniform(g.t_max, g.steps)?)
    }

    pub fn replicas_or(&self, default: usize) -> usize {
        self.replicas.unwrap_or(default)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}
