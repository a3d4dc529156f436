//! Euler–Maruyama simulation of interacting diffusions on finite graphs,
//! Girsanov weights against the driftless reference system, truncation
//! families of locally finite graphs and Monte Carlo diagnostics.
//!
//! Noise for replica `r` at vertex `v` comes from its own keyed stream
//! `(seed, r, label(v))`, drawn step by step, so runs on different graphs
//! that share vertex labels use identical noise at those vertices.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeff::{
    linear_form, truncated_drift_family, validate_linear_growth, CoeffError, CompiledDiffusion, DiffusionSpec,
    DiffusionTable, DriftSpec, DriftTable, EvalError, Expr, History, LinearDrift, VertexDrifts,
};
use crate::gaussian::TimeGrid;
use crate::graph::{materialize_ball, Graph, GraphError, InfiniteGraph};
use crate::hc::{FactorModel, GibbsSampler, HcError};
use crate::rng::{self, fnv1a, purpose};
use crate::stats;

#[derive(Debug, Error)]
pub enum SdeError {
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Hc(#[from] HcError),
    #[error("drift for vertex `{vertex}` fails validation: {rule}")]
    Validation { vertex: String, rule: String },
    #[error("non-finite state at replica {replica}, step {step}, vertex `{vertex}`")]
    NonFinite { replica: usize, step: usize, vertex: String },
    #[error("expected an ensemble under {expected}, found {found}")]
    MeasureMismatch { expected: MeasureTag, found: MeasureTag },
    #[error("operation needs every simulation step recorded")]
    NeedsFullPaths,
    #[error("{0}")]
    Shape(String),
    #[error("vertex `{0}` is not in the ensemble")]
    UnknownVertex(String),
    #[error("window vertex `{0}` lies outside the smallest truncation's inner ball")]
    WindowOutsideTruncation(String),
    #[error("time {0} is not within the grid")]
    TimeOutsideGrid(f64),
    #[error("ensemble file: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, SdeError>;

/// Law an ensemble was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureTag {
    /// The interacting system.
    #[serde(rename = "P")]
    Interacting,
    /// The driftless reference system.
    #[serde(rename = "P_star")]
    Driftless,
    /// The interacting system on the truncation of depth `n`.
    #[serde(rename = "P_n")]
    Truncated(usize),
}

impl std::fmt::Display for MeasureTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Interacting => f.write_str("P"),
            Self::Driftless => f.write_str("P_star"),
            Self::Truncated(n) => write!(f, "P_n({n})"),
        }
    }
}

/// Per-vertex initial distribution, applied independently to every
/// component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VertexLaw {
    Point { value: f64 },
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
}

impl VertexLaw {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Self::Point { value } => value,
            Self::Normal { mean, std } => mean + std * rng.sample::<f64, _>(StandardNormal),
            Self::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }
}

/// Initial law of the whole system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    /// Independent vertices.
    Product {
        default: VertexLaw,
        #[serde(default)]
        overrides: BTreeMap<String, VertexLaw>,
    },
    /// A discrete Markov field sampled by Gibbs sweeps, mapped to reals by
    /// `values[state]`. The model's vertex labels must cover the graph.
    Gibbs { model: FactorModel, values: Vec<f64>, sweeps: usize },
}

impl InitialLaw {
    pub fn point(value: f64) -> Self {
        Self::Product { default: VertexLaw::Point { value }, overrides: BTreeMap::new() }
    }

    pub fn normal(mean: f64, std: f64) -> Self {
        Self::Product { default: VertexLaw::Normal { mean, std }, overrides: BTreeMap::new() }
    }

    fn check(&self, labels: &[String]) -> Result<()> {
        if let Self::Gibbs { model, values, .. } = self {
            if values.len() != model.k() {
                return Err(SdeError::Shape(format!(
                    "{} state values for alphabet of size {}",
                    values.len(),
                    model.k()
                )));
            }
            for l in labels {
                model.graph().vertex(l)?;
            }
        }
        Ok(())
    }

    /// Fills `out` (vertex-major, `dim` components) for one replica.
    fn sample(&self, seed: u64, replica: usize, labels: &[String], dim: usize, out: &mut [f64]) -> Result<()> {
        match self {
            Self::Product { default, overrides } => {
                for (v, label) in labels.iter().enumerate() {
                    let law = overrides.get(label).unwrap_or(default);
                    let mut r = rng::keyed(seed, &[replica as u64, fnv1a(label), purpose::INITIAL]);
                    for c in 0..dim {
                        out[v * dim + c] = law.sample(&mut r);
                    }
                }
            }
            Self::Gibbs { model, values, sweeps } => {
                let mut sampler = GibbsSampler::new(model, rng::keyed(seed, &[replica as u64, purpose::GIBBS]))?;
                let state = sampler.sample(*sweeps);
                for (v, label) in labels.iter().enumerate() {
                    let s = state[model.graph().vertex(label)?];
                    out[v * dim..(v + 1) * dim].fill(values[s]);
                }
            }
        }
        Ok(())
    }
}

/// Which simulation steps are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recording {
    All,
    /// Every `n`-th step plus the last one.
    Every(usize),
    /// The initial and the final time.
    Endpoints,
}

impl Recording {
    fn indices(self, steps: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = match self {
            Recording::All => (0..=steps).collect(),
            Recording::Every(n) => (0..=steps).step_by(n.max(1)).collect(),
            Recording::Endpoints => vec![0],
        };
        if idx.last() != Some(&steps) {
            idx.push(steps);
        }
        idx
    }
}

/// Scheme descriptor stored with every ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeInfo {
    pub name: String,
    pub grid: Vec<f64>,
    pub recorded_steps: Vec<usize>,
}

/// Simulated trajectories, indexed `(replica, vertex, recorded time,
/// component)` in that row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    pub dim: usize,
    pub replicas: usize,
    pub seed: u64,
    pub scheme: SchemeInfo,
    pub measure: MeasureTag,
    values: Vec<f64>,
}

impl PathEnsemble {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    fn replica_len(&self) -> usize {
        self.labels.len() * self.times.len() * self.dim
    }

    pub fn vertex(&self, label: &str) -> Result<usize> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| SdeError::UnknownVertex(label.to_string()))
    }

    pub fn value(&self, replica: usize, vertex: usize, time: usize, comp: usize) -> f64 {
        self.values[((replica * self.n_vertices() + vertex) * self.n_times() + time) * self.dim + comp]
    }

    /// Recorded path of one vertex in one replica.
    pub fn history(&self, replica: usize, vertex: usize) -> History<'_> {
        let per = self.n_times() * self.dim;
        let start = replica * self.replica_len() + vertex * per;
        History::new(&self.times, &self.values[start..start + per], self.dim)
    }

    /// Whether every simulation step is stored.
    pub fn full_paths(&self) -> bool {
        self.scheme.recorded_steps.len() == self.scheme.grid.len()
    }

    /// Index of the recorded time closest to `t`.
    pub fn time_index(&self, t: f64) -> Result<usize> {
        let slack = 1e-9 * t.abs().max(1.0);
        self.times.iter().position(|&s| (s - t).abs() <= slack).ok_or(SdeError::TimeOutsideGrid(t))
    }

    /// One row per replica: component `comp` of the given vertices at a
    /// recorded time index.
    pub fn snapshot(&self, time: usize, vertices: &[usize], comp: usize) -> Vec<Vec<f64>> {
        (0..self.replicas).map(|r| vertices.iter().map(|&v| self.value(r, v, time, comp)).collect()).collect()
    }

    /// Sample covariance across all vertices at a recorded time, with
    /// entrywise standard errors.
    pub fn sample_covariance(&self, time: usize, comp: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let all: Vec<usize> = (0..self.n_vertices()).collect();
        stats::covariance_with_se(&self.snapshot(time, &all, comp))
    }

    /// Per vertex, time and component: mean and variance across replicas.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("vertex,time,component,mean,variance\n");
        for v in 0..self.n_vertices() {
            for j in 0..self.n_times() {
                for c in 0..self.dim {
                    let xs: Vec<f64> = (0..self.replicas).map(|r| self.value(r, v, j, c)).collect();
                    let n = xs.len() as f64;
                    let mean = xs.iter().sum::<f64>() / n;
                    let var =
                        if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
                    s.push_str(&format!("{},{},{},{:.12e},{:.12e}\n", self.labels[v], self.times[j], c, mean, var));
                }
            }
        }
        s
    }

    /// Binary container: magic, little-endian header length, JSON header,
    /// then the values as little-endian `f64`.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = EnsembleHeader {
            labels: self.labels.clone(),
            times: self.times.clone(),
            dim: self.dim,
            replicas: self.replicas,
            seed: self.seed,
            scheme: self.scheme.clone(),
            measure: self.measure,
        };
        let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let io = |e: std::io::Error| SdeError::Io(e.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(SdeError::Io("bad magic".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(io)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut json).map_err(io)?;
        let h: EnsembleHeader = serde_json::from_slice(&json).map_err(|e| SdeError::Io(e.to_string()))?;
        let count = h.replicas * h.labels.len() * h.times.len() * h.dim;
        let mut raw = vec![0u8; count * 8];
        r.read_exact(&mut raw).map_err(io)?;
        let values = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        Ok(Self {
            labels: h.labels,
            times: h.times,
            dim: h.dim,
            replicas: h.replicas,
            seed: h.seed,
            scheme: h.scheme,
            measure: h.measure,
            values,
        })
    }
}

const MAGIC: &[u8; 8] = b"NDENSEMB";

#[derive(Serialize, Deserialize)]
struct EnsembleHeader {
    labels: Vec<String>,
    times: Vec<f64>,
    dim: usize,
    replicas: usize,
    seed: u64,
    scheme: SchemeInfo,
    measure: MeasureTag,
}

/// Drift ready for repeated evaluation.
#[derive(Debug, Clone)]
pub enum CompiledDrift {
    Linear(LinearDrift),
    General(Expr),
}

impl CompiledDrift {
    pub fn new(spec: &DriftSpec, dim: usize) -> Self {
        match linear_form(spec.expr(), dim) {
            Some(l) => Self::Linear(l),
            None => Self::General(spec.expr().clone()),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Linear(l) if *l == LinearDrift::default())
    }

    /// Drift at grid index `k` from the vertex's own and its neighbors'
    /// histories.
    pub fn eval(&self, k: usize, own: &History, neighbors: &[History], out: &mut [f64]) -> Result<()> {
        match self {
            Self::Linear(l) => {
                let f = l.resolve(neighbors.len());
                let x = own.at(k);
                for (c, o) in out.iter_mut().enumerate() {
                    let mut s = 0.0;
                    if f.neighbor != 0.0 {
                        for h in neighbors {
                            s += h.at(k)[c];
                        }
                    }
                    *o = f.constant + f.own * x[c] + f.neighbor * s;
                }
                Ok(())
            }
            Self::General(e) => Ok(crate::coeff::eval_into(e, k, own, neighbors, out)?),
        }
    }
}

/// Everything needed to simulate one system.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub graph: Graph,
    pub drifts: VertexDrifts,
    pub diffusions: Vec<DiffusionSpec>,
    pub initial: InitialLaw,
    pub grid: TimeGrid,
    pub replicas: usize,
    pub seed: u64,
    pub dim: usize,
    pub recording: Recording,
    pub measure: MeasureTag,
}

impl Simulation {
    /// Interacting system with homogeneous coefficients.
    pub fn new(
        graph: &Graph,
        drift: &DriftTable,
        diffusion: &DiffusionTable,
        grid: TimeGrid,
        replicas: usize,
        seed: u64,
    ) -> Result<Self> {
        let dim = diffusion.default.dim();
        Ok(Self {
            drifts: drift.resolve(graph)?,
            diffusions: diffusion.resolve(graph, dim)?,
            graph: graph.clone(),
            initial: InitialLaw::point(0.0),
            grid,
            replicas,
            seed,
            dim,
            recording: Recording::All,
            measure: MeasureTag::Interacting,
        })
    }

    pub fn with_initial(mut self, initial: InitialLaw) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_recording(mut self, recording: Recording) -> Self {
        self.recording = recording;
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.graph.len();
        if !self.drifts.matches(&self.graph) || self.diffusions.len() != n {
            return Err(SdeError::Shape("coefficients do not match the graph".into()));
        }
        if self.replicas == 0 {
            return Err(SdeError::Shape("at least one replica is needed".into()));
        }
        let horizon = *self.grid.times().last().expect("grid is nonempty");
        let degree = Some(self.graph.max_degree());
        for (label, spec) in self.drifts.labels().iter().zip(self.drifts.specs()) {
            spec.check_dim(self.dim)?;
            let report = validate_linear_growth(spec, horizon, self.dim, degree);
            if let Some(v) = report.violations.first() {
                return Err(SdeError::Validation { vertex: label.clone(), rule: format!("{} at {}", v.rule, v.node) });
            }
        }
        if let Some(d) = self.diffusions.iter().find(|d| d.dim() != self.dim) {
            return Err(SdeError::Shape(format!(
                "diffusion of dimension {} for state dimension {}",
                d.dim(),
                self.dim
            )));
        }
        self.initial.check(self.graph.labels())
    }
}

/// Euler–Maruyama run of `sim`, replicas in parallel.
pub fn simulate(sim: &Simulation) -> Result<PathEnsemble> {
    sim.validate()?;
    let steps = sim.grid.len() - 1;
    let recorded = sim.recording.indices(steps);
    let (n, d, t) = (sim.graph.len(), sim.dim, recorded.len());
    let per = n * t * d;
    let mut values = vec![0.0; sim.replicas * per];
    let drifts: Vec<CompiledDrift> = sim.drifts.specs().iter().map(|s| CompiledDrift::new(s, d)).collect();
    let diffusions: Vec<CompiledDiffusion> = sim.diffusions.iter().map(DiffusionSpec::compile).collect();
    let ctx = ReplicaContext { sim, drifts: &drifts, diffusions: &diffusions, recorded: &recorded };
    let outcomes: Vec<Result<()>> =
        values.par_chunks_mut(per.max(1)).enumerate().map(|(r, chunk)| ctx.run(r, chunk)).collect();
    if let Some(err) = outcomes.into_iter().find_map(|o| o.err()) {
        return Err(err);
    }
    let times = sim.grid.times();
    Ok(PathEnsemble {
        labels: sim.graph.labels().to_vec(),
        times: recorded.iter().map(|&k| times[k]).collect(),
        dim: d,
        replicas: sim.replicas,
        seed: sim.seed,
        scheme: SchemeInfo { name: "euler_maruyama".into(), grid: times.to_vec(), recorded_steps: recorded },
        measure: sim.measure,
        values,
    })
}

/// The driftless reference system for the same graph and diffusion.
pub fn simulate_driftless(sim: &Simulation) -> Result<PathEnsemble> {
    let mut reference = sim.clone();
    reference.drifts = VertexDrifts::uniform(&sim.graph, &DriftSpec::zero());
    reference.measure = MeasureTag::Driftless;
    simulate(&reference)
}

struct ReplicaContext<'a> {
    sim: &'a Simulation,
    drifts: &'a [CompiledDrift],
    diffusions: &'a [CompiledDiffusion],
    recorded: &'a [usize],
}

impl ReplicaContext<'_> {
    fn run(&self, r: usize, out: &mut [f64]) -> Result<()> {
        let sim = self.sim;
        let g = &sim.graph;
        let (n, d) = (g.len(), sim.dim);
        let times = sim.grid.times();
        let steps = times.len() - 1;
        let t_rec = self.recorded.len();
        let labels = g.labels();
        let mut noise: Vec<ChaCha8Rng> =
            labels.iter().map(|l| rng::keyed(sim.seed, &[r as u64, fnv1a(l), purpose::NOISE])).collect();
        let mut cur = vec![0.0; n * d];
        sim.initial.sample(sim.seed, r, labels, d, &mut cur)?;
        let needs_history = self.drifts.iter().any(|c| matches!(c, CompiledDrift::General(_)));
        let span = (steps + 1) * d;
        let mut hist = if needs_history { vec![0.0; n * span] } else { Vec::new() };
        if needs_history {
            for v in 0..n {
                hist[v * span..v * span + d].copy_from_slice(&cur[v * d..(v + 1) * d]);
            }
        }
        let mut next = vec![0.0; n * d];
        let mut b = vec![0.0; d];
        let mut z = vec![0.0; d];
        let mut kick = vec![0.0; d];
        let mut slot = 0;
        let mut record = |k: usize, state: &[f64], slot: &mut usize| {
            if *slot < t_rec && self.recorded[*slot] == k {
                for v in 0..n {
                    let base = (v * t_rec + *slot) * d;
                    out[base..base + d].copy_from_slice(&state[v * d..(v + 1) * d]);
                }
                *slot += 1;
            }
        };
        record(0, &cur, &mut slot);
        for k in 0..steps {
            let dt = times[k + 1] - times[k];
            let sq = dt.sqrt();
            for v in 0..n {
                let x = &cur[v * d..(v + 1) * d];
                match &self.drifts[v] {
                    CompiledDrift::Linear(l) => {
                        let f = l.resolve(g.degree(v));
                        for c in 0..d {
                            let mut s = 0.0;
                            if f.neighbor != 0.0 {
                                for &u in g.neighbors(v) {
                                    s += cur[u * d + c];
                                }
                            }
                            b[c] = f.constant + f.own * x[c] + f.neighbor * s;
                        }
                    }
                    CompiledDrift::General(e) => {
                        let own = History::new(&times[..=k], &hist[v * span..v * span + (k + 1) * d], d);
                        let nbrs: Vec<History> = g
                            .neighbors(v)
                            .iter()
                            .map(|&u| History::new(&times[..=k], &hist[u * span..u * span + (k + 1) * d], d))
                            .collect();
                        crate::coeff::eval_into(e, k, &own, &nbrs, &mut b)?;
                    }
                }
                for zc in z.iter_mut() {
                    *zc = noise[v].sample(StandardNormal);
                }
                self.diffusions[v].apply(x, &z, &mut kick);
                for c in 0..d {
                    let y = x[c] + b[c] * dt + kick[c] * sq;
                    if !y.is_finite() {
                        return Err(SdeError::NonFinite { replica: r, step: k + 1, vertex: labels[v].clone() });
                    }
                    next[v * d + c] = y;
                }
            }
            std::mem::swap(&mut cur, &mut next);
            if needs_history {
                for v in 0..n {
                    let at = v * span + (k + 1) * d;
                    hist[at..at + d].copy_from_slice(&cur[v * d..(v + 1) * d]);
                }
            }
            record(k + 1, &cur, &mut slot);
        }
        Ok(())
    }
}

/// Log-likelihood ratio of the interacting law against the driftless one,
/// per replica, with the per-vertex martingale terms kept.
#[derive(Debug, Clone, PartialEq)]
pub struct GirsanovWeights {
    pub labels: Vec<String>,
    /// `log_weights[r] = Σ_v (martingale[r][v] − ½ quadratic_variation[r][v])`.
    pub log_weights: Vec<f64>,
    pub martingale: Vec<Vec<f64>>,
    pub quadratic_variation: Vec<Vec<f64>>,
}

impl GirsanovWeights {
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    /// `exp(M_v − ½[M_v])`, the factor of one vertex.
    pub fn vertex_factor(&self, replica: usize, vertex: usize) -> f64 {
        (self.martingale[replica][vertex] - 0.5 * self.quadratic_variation[replica][vertex]).exp()
    }
}

/// Discretized `(M_v, [M_v])` of one vertex from its own path and its
/// neighbors' paths only. Integrands are evaluated at the left endpoint of
/// each step.
pub fn local_martingale(
    own: &History,
    neighbors: &[History],
    drift: &CompiledDrift,
    diffusion: &CompiledDiffusion,
) -> Result<(f64, f64)> {
    let d = own.dim;
    let (mut m, mut qv) = (0.0, 0.0);
    if drift.is_zero() {
        return Ok((0.0, 0.0));
    }
    let mut b = vec![0.0; d];
    let mut wb = vec![0.0; d];
    let mut dx = vec![0.0; d];
    let mut wdx = vec![0.0; d];
    for k in 0..own.len() - 1 {
        drift.eval(k, own, neighbors, &mut b)?;
        let x = own.at(k);
        let y = own.at(k + 1);
        for c in 0..d {
            dx[c] = y[c] - x[c];
        }
        diffusion.solve(x, &b, &mut wb);
        diffusion.solve(x, &dx, &mut wdx);
        let dt = own.times[k + 1] - own.times[k];
        for c in 0..d {
            m += wb[c] * wdx[c];
            qv += wb[c] * wb[c] * dt;
        }
    }
    Ok((m, qv))
}

/// Girsanov weights of a driftless ensemble for the drifts of `sim`.
pub fn girsanov_weights(ens: &PathEnsemble, sim: &Simulation) -> Result<GirsanovWeights> {
    if ens.measure != MeasureTag::Driftless {
        return Err(SdeError::MeasureMismatch { expected: MeasureTag::Driftless, found: ens.measure });
    }
    if !ens.full_paths() {
        return Err(SdeError::NeedsFullPaths);
    }
    if ens.labels.as_slice() != sim.graph.labels() {
        return Err(SdeError::Shape("ensemble and system have different vertices".into()));
    }
    let g = &sim.graph;
    let drifts: Vec<CompiledDrift> = sim.drifts.specs().iter().map(|s| CompiledDrift::new(s, ens.dim)).collect();
    let diffusions: Vec<CompiledDiffusion> = sim.diffusions.iter().map(DiffusionSpec::compile).collect();
    let rows: Vec<Result<Vec<(f64, f64)>>> = (0..ens.replicas)
        .into_par_iter()
        .map(|r| {
            (0..g.len())
                .map(|v| {
                    let nbrs: Vec<History> = g.neighbors(v).iter().map(|&u| ens.history(r, u)).collect();
                    local_martingale(&ens.history(r, v), &nbrs, &drifts[v], &diffusions[v])
                })
                .collect()
        })
        .collect();
    let mut out = GirsanovWeights {
        labels: ens.labels.clone(),
        log_weights: Vec::with_capacity(ens.replicas),
        martingale: Vec::with_capacity(ens.replicas),
        quadratic_variation: Vec::with_capacity(ens.replicas),
    };
    for row in rows {
        let row = row?;
        out.log_weights.push(row.iter().map(|(m, q)| m - 0.5 * q).sum());
        out.martingale.push(row.iter().map(|p| p.0).collect());
        out.quadratic_variation.push(row.iter().map(|p| p.1).collect());
    }
    Ok(out)
}

/// Simulation of the truncated system on `G_n`: the ball of radius `n`
/// around the root with its annulus completed into a clique, original
/// drifts on `V_{n-2}` and zero drift on the annulus.
#[allow(clippy::too_many_arguments)]
pub fn truncated_simulation(
    inf: &dyn InfiniteGraph,
    n: usize,
    drift: &DriftTable,
    diffusion: &DiffusionTable,
    initial: &InitialLaw,
    grid: TimeGrid,
    replicas: usize,
    seed: u64,
) -> Result<Simulation> {
    let ball = materialize_ball(inf, n);
    let gn = ball.augmented_truncation(n)?;
    let drifts = truncated_drift_family(drift, &ball, n)?;
    let dim = diffusion.default.dim();
    Ok(Simulation {
        diffusions: diffusion.resolve(&gn, dim)?,
        graph: gn,
        drifts,
        initial: initial.clone(),
        grid,
        replicas,
        seed,
        dim,
        recording: Recording::All,
        measure: MeasureTag::Truncated(n),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_truncated(
    inf: &dyn InfiniteGraph,
    n: usize,
    drift: &DriftTable,
    diffusion: &DiffusionTable,
    initial: &InitialLaw,
    grid: TimeGrid,
    replicas: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    simulate(&truncated_simulation(inf, n, drift, diffusion, initial, grid, replicas, seed)?)
}

/// One row of a truncation-convergence table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub energy_distance: f64,
    pub ks_max: f64,
    pub replicas: usize,
}

/// Parameters of a truncation-convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceStudy<'a> {
    pub graph: &'a dyn InfiniteGraph,
    pub window: Vec<String>,
    pub horizon: f64,
    pub steps: usize,
    pub levels: Vec<usize>,
    pub replicas: usize,
    pub seed: u64,
    pub drift: DriftTable,
    pub diffusion: DiffusionTable,
    pub initial: InitialLaw,
}

impl std::fmt::Debug for dyn InfiniteGraph + '_ {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "InfiniteGraph(root {})", self.root())
    }
}

/// Window marginals at time `horizon` for each truncation level compared
/// with the deepest level: energy distance of the joint window law and the
/// largest per-coordinate Kolmogorov–Smirnov statistic. All levels share
/// the seed, so common vertices see common noise.
pub fn truncation_convergence(study: &ConvergenceStudy) -> Result<Vec<ConvergenceRow>> {
    let reference_level = *study.levels.iter().max().ok_or_else(|| SdeError::Shape("no truncation levels".into()))?;
    let smallest = *study.levels.iter().min().expect("nonempty");
    let probe = materialize_ball(study.graph, smallest);
    let inner = probe.ball(smallest.saturating_sub(2))?;
    for w in &study.window {
        let ok = probe.vertex(w).map(|v| inner.contains(v)).unwrap_or(false);
        if !ok || smallest < 4 {
            return Err(SdeError::WindowOutsideTruncation(w.clone()));
        }
    }
    let grid = TimeGrid::uniform(study.horizon, study.steps).map_err(|e| SdeError::Shape(e.to_string()))?;
    let window_sample = |n: usize| -> Result<Vec<Vec<f64>>> {
        let sim = truncated_simulation(
            study.graph,
            n,
            &study.drift,
            &study.diffusion,
            &study.initial,
            grid.clone(),
            study.replicas,
            study.seed,
        )?
        .with_recording(Recording::Endpoints);
        let ens = simulate(&sim)?;
        let idx = study.window.iter().map(|w| ens.vertex(w)).collect::<Result<Vec<_>>>()?;
        let last = ens.n_times() - 1;
        Ok((0..ens.replicas)
            .map(|r| {
                idx.iter()
                    .flat_map(|&v| (0..ens.dim).map(move |c| (v, c)))
                    .map(|(v, c)| ens.value(r, v, last, c))
                    .collect()
            })
            .collect())
    };
    let reference = window_sample(reference_level)?;
    let mut rows = Vec::new();
    for &n in &study.levels {
        let sample = if n == reference_level { reference.clone() } else { window_sample(n)? };
        let coords = reference[0].len();
        let ks_max = (0..coords)
            .map(|j| {
                let a: Vec<f64> = sample.iter().map(|x| x[j]).collect();
                let b: Vec<f64> = reference.iter().map(|x| x[j]).collect();
                stats::ks_statistic(&a, &b)
            })
            .fold(0.0, f64::max);
        rows.push(ConvergenceRow {
            n,
            energy_distance: stats::energy_distance(&sample, &reference),
            ks_max,
            replicas: study.replicas,
        });
    }
    Ok(rows)
}

/// CSV with columns `n,energy_distance,ks_max,replicas`.
pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from("n,energy_distance,ks_max,replicas\n");
    for r in rows {
        s.push_str(&format!("{},{:.12e},{:.12e},{}\n", r.n, r.energy_distance, r.ks_max, r.replicas));
    }
    s
}

/// Monte Carlo estimate of `½ Σ_{v∈A} E ∫_0^t |σ_v^{-1} b_v|² ds` from a
/// fully recorded ensemble of the interacting (or truncated) system, with
/// its standard error.
pub fn entropy_bound_estimate(ens: &PathEnsemble, sim: &Simulation, window: &[String], t: f64) -> Result<(f64, f64)> {
    if !ens.full_paths() {
        return Err(SdeError::NeedsFullPaths);
    }
    let last = ens.time_index(t)?;
    let g = &sim.graph;
    let idx = window.iter().map(|w| ens.vertex(w)).collect::<Result<Vec<_>>>()?;
    let drifts: Vec<CompiledDrift> = sim.drifts.specs().iter().map(|s| CompiledDrift::new(s, ens.dim)).collect();
    let diffusions: Vec<CompiledDiffusion> = sim.diffusions.iter().map(DiffusionSpec::compile).collect();
    let per_replica: Vec<Result<f64>> = (0..ens.replicas)
        .into_par_iter()
        .map(|r| {
            let mut total = 0.0;
            for &v in &idx {
                let own = ens.history(r, v);
                let own = own.upto(last);
                let nbrs: Vec<History> = g.neighbors(v).iter().map(|&u| ens.history(r, u).upto(last)).collect();
                let mut b = vec![0.0; ens.dim];
                let mut wb = vec![0.0; ens.dim];
                for k in 0..last {
                    drifts[v].eval(k, &own, &nbrs, &mut b)?;
                    diffusions[v].solve(own.at(k), &b, &mut wb);
                    let dt = own.times[k + 1] - own.times[k];
                    total += wb.iter().map(|x| x * x).sum::<f64>() * dt;
                }
            }
            Ok(0.5 * total)
        })
        .collect();
    let xs = per_replica.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(stats::mean_and_se(&xs))
}
