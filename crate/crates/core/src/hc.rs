//! Exact brute-force laboratory for discrete random fields on small graphs:
//! factor models over bounded-diameter cliques, joint tables, conditional
//! independence checks, canonical factorization, projection onto the
//! augmented truncation, local specifications and a Gibbs sampler.
//!
//! Configurations are encoded row-major with vertex 0 most significant;
//! factor tables are row-major over the clique's vertices in index order.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, VertexSet};
use crate::rng;

/// Largest joint table built by default.
pub const DEFAULT_CAP: usize = 1 << 20;

/// Violations at or below this level count as exact independence.
pub const MRF_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HcError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("factor on {0:?} is not a set of diameter at most 2")]
    NotTwoClique(Vec<String>),
    #[error("duplicate factor on {0:?}")]
    DuplicateFactor(Vec<String>),
    #[error("table for {clique:?} has {found} entries, expected {expected}")]
    TableShape { clique: Vec<String>, expected: usize, found: usize },
    #[error("factor entries must be finite and nonnegative")]
    BadEntry,
    #[error("state space needs {entries} entries, cap is {cap}")]
    TooLarge { entries: usize, cap: usize },
    #[error("normalizing constant is zero")]
    ZeroNormalizer,
    #[error("table is not strictly positive")]
    NotPositive,
    #[error("table is not a second-order Markov field (violation {0:e})")]
    NotMrf(f64),
    #[error("table has {found} vertices, graph has {expected}")]
    Mismatch { expected: usize, found: usize },
    #[error("alphabet size must be at least 1")]
    EmptyAlphabet,
    #[error("invalid model description: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, HcError>;

fn state_count(k: usize, n: usize, cap: usize) -> Result<usize> {
    let entries = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if entries > cap as u128 {
        return Err(HcError::TooLarge { entries: entries.min(usize::MAX as u128) as usize, cap });
    }
    Ok(entries as usize)
}

/// Positive-or-zero density w.r.t. a product of per-vertex base weights,
/// written as a product of factors on sets of diameter at most 2.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    graph: Graph,
    k: usize,
    factors: BTreeMap<Vec<usize>, Vec<f64>>,
    base: Vec<Vec<f64>>,
}

impl FactorModel {
    /// `base = None` means uniform base weights.
    pub fn new(
        graph: Graph,
        k: usize,
        factors: Vec<(Vec<usize>, Vec<f64>)>,
        base: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(HcError::EmptyAlphabet);
        }
        let n = graph.len();
        let base = base.unwrap_or_else(|| vec![vec![1.0; k]; n]);
        if base.len() != n {
            return Err(HcError::Mismatch { expected: n, found: base.len() });
        }
        for b in &base {
            if b.len() != k {
                return Err(HcError::TableShape { clique: vec![], expected: k, found: b.len() });
            }
            if b.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(HcError::BadEntry);
            }
        }
        let mut map = BTreeMap::new();
        for (mut key, table) in factors {
            key.sort_unstable();
            key.dedup();
            let set: VertexSet = key.iter().copied().collect();
            let labels = || key.iter().map(|&v| graph.label(v).to_string()).collect::<Vec<_>>();
            if !graph.is_clique(&set, 2)? {
                return Err(HcError::NotTwoClique(labels()));
            }
            let expected = k.pow(key.len() as u32);
            if table.len() != expected {
                return Err(HcError::TableShape { clique: labels(), expected, found: table.len() });
            }
            if table.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(HcError::BadEntry);
            }
            if map.contains_key(&key) {
                return Err(HcError::DuplicateFactor(labels()));
            }
            map.insert(key, table);
        }
        Ok(Self { graph, k, factors: map, base })
    }

    /// Independent positive factors `exp(scale·N(0,1))` on every clique of
    /// the given order (1: complete subgraphs, 2: diameter ≤ 2), including
    /// singletons.
    pub fn random(graph: &Graph, k: usize, clique_order: usize, scale: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut factors = Vec::new();
        for c in graph.cliques(clique_order)? {
            let size = k.pow(c.len() as u32);
            let table = (0..size).map(|_| (scale * rng.sample::<f64, _>(StandardNormal)).exp()).collect();
            factors.push((c.to_vec(), table));
        }
        Self::new(graph.clone(), k, factors, None)
    }

    /// Product law with the given per-vertex weights.
    pub fn product(graph: &Graph, base: Vec<Vec<f64>>) -> Result<Self> {
        let k = base.first().map_or(1, Vec::len);
        Self::new(graph.clone(), k, Vec::new(), Some(base))
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn factors(&self) -> &BTreeMap<Vec<usize>, Vec<f64>> {
        &self.factors
    }

    pub fn factor(&self, clique: &[usize]) -> Option<&[f64]> {
        self.factors.get(clique).map(Vec::as_slice)
    }

    pub fn base(&self) -> &[Vec<f64>] {
        &self.base
    }

    pub fn strictly_positive(&self) -> bool {
        self.base.iter().flatten().all(|&x| x > 0.0) && self.factors.values().flatten().all(|&x| x > 0.0)
    }

    fn factor_index(&self, key: &[usize], x: &[usize]) -> usize {
        key.iter().fold(0, |acc, &v| acc * self.k + x[v])
    }

    /// Unnormalized weight of a full configuration.
    pub fn weight(&self, x: &[usize]) -> f64 {
        let mut w: f64 = x.iter().enumerate().map(|(v, &s)| self.base[v][s]).product();
        for (key, table) in &self.factors {
            w *= table[self.factor_index(key, x)];
        }
        w
    }

    /// Weight restricted to factors meeting `a` and base weights of `a`.
    fn local_weight(&self, a: &VertexSet, x: &[usize]) -> f64 {
        let mut w: f64 = a.iter().map(|v| self.base[v][x[v]]).product();
        for (key, table) in &self.factors {
            if key.iter().any(|&v| a.contains(v)) {
                w *= table[self.factor_index(key, x)];
            }
        }
        w
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FactorModelJson::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: FactorModelJson = serde_json::from_str(text).map_err(|e| HcError::Format(e.to_string()))?;
        raw.try_into()
    }
}

impl Serialize for FactorModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FactorModelJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for FactorModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        FactorModelJson::deserialize(d)?.try_into().map_err(serde::de::Error::custom)
    }
}

/// Serialized form: cliques keyed by their labels in lexicographic order,
/// tables row-major in that order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorModelJson {
    edge_list: String,
    k: usize,
    base: BTreeMap<String, Vec<f64>>,
    factors: Vec<FactorJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorJson {
    clique: Vec<String>,
    table: Vec<f64>,
}

/// Re-indexes a row-major table whose axes follow `from` so that its axes
/// follow `to` (a permutation of `from`).
fn permute_table(table: &[f64], k: usize, from: &[usize], to: &[usize]) -> Vec<f64> {
    let m = from.len();
    let pos: Vec<usize> = to.iter().map(|v| from.iter().position(|u| u == v).expect("same members")).collect();
    let mut out = vec![0.0; table.len()];
    let mut digits = vec![0usize; m];
    for (y, slot) in out.iter_mut().enumerate() {
        let mut r = y;
        for i in (0..m).rev() {
            digits[pos[i]] = r % k;
            r /= k;
        }
        let x = digits.iter().fold(0, |acc, &d| acc * k + d);
        *slot = table[x];
    }
    out
}

impl From<&FactorModel> for FactorModelJson {
    fn from(m: &FactorModel) -> Self {
        let g = &m.graph;
        let factors = m
            .factors
            .iter()
            .map(|(key, table)| {
                let mut sorted = key.clone();
                sorted.sort_by(|a, b| g.label(*a).cmp(g.label(*b)));
                FactorJson {
                    clique: sorted.iter().map(|&v| g.label(v).to_string()).collect(),
                    table: permute_table(table, m.k, key, &sorted),
                }
            })
            .collect();
        FactorModelJson {
            edge_list: g.to_edge_list(),
            k: m.k,
            base: g.labels().iter().cloned().zip(m.base.iter().cloned()).collect(),
            factors,
        }
    }
}

impl TryFrom<FactorModelJson> for FactorModel {
    type Error = HcError;
    fn try_from(raw: FactorModelJson) -> Result<Self> {
        let g = Graph::parse_edge_list(&raw.edge_list)?;
        let mut base = vec![vec![1.0; raw.k]; g.len()];
        for (label, w) in raw.base {
            base[g.vertex(&label)?] = w;
        }
        let mut factors = Vec::new();
        for f in raw.factors {
            let listed = f.clique.iter().map(|l| g.vertex(l)).collect::<std::result::Result<Vec<_>, _>>()?;
            let mut key = listed.clone();
            key.sort_unstable();
            let expected = raw.k.pow(listed.len() as u32);
            if f.table.len() != expected {
                return Err(HcError::TableShape { clique: f.clique, expected, found: f.table.len() });
            }
            factors.push((key.clone(), permute_table(&f.table, raw.k, &listed, &key)));
        }
        FactorModel::new(g, raw.k, factors, Some(base))
    }
}

/// Normalized law over `{0..k-1}^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    k: usize,
    n: usize,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(k: usize, n: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != state_count(k, n, usize::MAX)? {
            return Err(HcError::Mismatch { expected: k.pow(n as u32), found: probs.len() });
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(HcError::BadEntry);
        }
        let z: f64 = probs.iter().sum();
        if !(z > 0.0) {
            return Err(HcError::ZeroNormalizer);
        }
        Ok(Self { k, n, probs: probs.into_iter().map(|p| p / z).collect() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn index_of(&self, x: &[usize]) -> usize {
        x.iter().fold(0, |acc, &s| acc * self.k + s)
    }

    pub fn decode(&self, mut idx: usize, out: &mut [usize]) {
        for v in (0..self.n).rev() {
            out[v] = idx % self.k;
            idx /= self.k;
        }
    }

    pub fn prob(&self, x: &[usize]) -> f64 {
        self.probs[self.index_of(x)]
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    /// Law of the coordinates `vars`, in that order.
    pub fn marginal(&self, vars: &[usize]) -> JointTable {
        let size = self.k.pow(vars.len() as u32);
        let mut out = vec![0.0; size];
        let mut x = vec![0usize; self.n];
        for (idx, &p) in self.probs.iter().enumerate() {
            self.decode(idx, &mut x);
            let j = vars.iter().fold(0, |acc, &v| acc * self.k + x[v]);
            out[j] += p;
        }
        JointTable { k: self.k, n: vars.len(), probs: out }
    }

    /// Total-variation distance; both tables must have the same shape.
    pub fn tv(&self, other: &JointTable) -> f64 {
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// Exact normalized law of a model, with the default size cap.
pub fn joint_table(m: &FactorModel) -> Result<JointTable> {
    joint_table_capped(m, DEFAULT_CAP)
}

pub fn joint_table_capped(m: &FactorModel, cap: usize) -> Result<JointTable> {
    let n = m.graph.len();
    let size = state_count(m.k, n, cap)?;
    let mut probs = vec![0.0; size];
    let mut x = vec![0usize; n];
    for (idx, slot) in probs.iter_mut().enumerate() {
        let mut r = idx;
        for v in (0..n).rev() {
            x[v] = r % m.k;
            r /= m.k;
        }
        *slot = m.weight(&x);
    }
    JointTable::new(m.k, n, probs)
}

/// Largest conditional total-variation gap
/// `½ Σ |p(a,b|s) − p(a|s) p(b|s)|` over conditioning values of positive
/// probability. Zero iff `X_A ⟂ X_B | X_S`.
pub fn ci_violation(t: &JointTable, a: &[usize], s: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let k = t.k;
    let (na, ns, nb) = (k.pow(a.len() as u32), k.pow(s.len() as u32), k.pow(b.len() as u32));
    let order: Vec<usize> = s.iter().chain(a).chain(b).copied().collect();
    let m = t.marginal(&order);
    let mut worst: f64 = 0.0;
    for is in 0..ns {
        let block = &m.probs[is * na * nb..(is + 1) * na * nb];
        let ps: f64 = block.iter().sum();
        if !(ps > 1e-300) {
            continue;
        }
        let pa: Vec<f64> = (0..na).map(|ia| block[ia * nb..(ia + 1) * nb].iter().sum::<f64>() / ps).collect();
        let pb: Vec<f64> = (0..nb).map(|ib| (0..na).map(|ia| block[ia * nb + ib]).sum::<f64>() / ps).collect();
        let mut gap = 0.0;
        for ia in 0..na {
            for ib in 0..nb {
                gap += (block[ia * nb + ib] / ps - pa[ia] * pb[ib]).abs();
            }
        }
        worst = worst.max(0.5 * gap);
    }
    worst
}

/// Conditional-independence triple `(A, S, B)` of vertex indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Triple {
    pub a: Vec<usize>,
    pub s: Vec<usize>,
    pub b: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MrfCheck {
    pub holds: bool,
    pub max_violation: f64,
    pub worst: Option<Triple>,
}

/// Checks `X_A ⟂ X_{(A ∪ ∂^k A)^c} | X_{∂^k A}` for every nonempty `A`.
pub fn check_mrf_bruteforce(t: &JointTable, g: &Graph, order: usize) -> Result<MrfCheck> {
    let n = g.len();
    if t.n != n {
        return Err(HcError::Mismatch { expected: n, found: t.n });
    }
    if order != 1 && order != 2 {
        return Err(GraphError::BadCliqueOrder(order).into());
    }
    state_count(2, n, DEFAULT_CAP)?;
    let mut best = MrfCheck { holds: true, max_violation: 0.0, worst: None };
    for mask in 1u64..(1u64 << n) {
        let a: VertexSet = (0..n).filter(|v| mask >> v & 1 == 1).collect();
        let s = g.boundary_of_order(&a, order)?;
        let closed = a.union(&s);
        let b: Vec<usize> = (0..n).filter(|&v| !closed.contains(v)).collect();
        if b.is_empty() {
            continue;
        }
        let gap = ci_violation(t, &a.to_vec(), &s.to_vec(), &b);
        if gap > best.max_violation || best.worst.is_none() {
            best.max_violation = best.max_violation.max(gap);
            best.worst = Some(Triple { a: a.to_vec(), s: s.to_vec(), b });
        }
    }
    best.holds = best.max_violation <= MRF_TOL;
    Ok(best)
}

/// Canonical factorization of a strictly positive second-order Markov law:
/// Möbius inversion of `log p` around the all-zero configuration gives one
/// factor per set of diameter ≤ 2 and uniform base weights.
pub fn factorize_positive_2mrf(t: &JointTable, g: &Graph) -> Result<FactorModel> {
    if t.n != g.len() {
        return Err(HcError::Mismatch { expected: g.len(), found: t.n });
    }
    if !t.is_strictly_positive() {
        return Err(HcError::NotPositive);
    }
    let check = check_mrf_bruteforce(t, g, 2)?;
    if !check.holds {
        return Err(HcError::NotMrf(check.max_violation));
    }
    let (k, n) = (t.k, t.n);
    let logp: Vec<f64> = t.probs.iter().map(|p| p.ln()).collect();
    let weight: Vec<usize> = (0..n).map(|v| k.pow((n - 1 - v) as u32)).collect();
    let mut factors = Vec::new();
    for clique in g.cliques(2)? {
        let members = clique.to_vec();
        let m = members.len();
        let size = k.pow(m as u32);
        let mut table = vec![0.0; size];
        let mut digits = vec![0usize; m];
        for (xi, slot) in table.iter_mut().enumerate() {
            let mut r = xi;
            for i in (0..m).rev() {
                digits[i] = r % k;
                r /= k;
            }
            let mut potential = 0.0;
            for sub in 0u32..(1 << m) {
                let idx: usize = (0..m).filter(|i| sub >> i & 1 == 1).map(|i| digits[i] * weight[members[i]]).sum();
                let sign = if (m as u32 - sub.count_ones()).is_multiple_of(2) { 1.0 } else { -1.0 };
                potential += sign * logp[idx];
            }
            *slot = potential.exp();
        }
        factors.push((members, table));
    }
    FactorModel::new(g.clone(), k, factors, None)
}

/// Marginal of `m` on the ball `V_n`, written as a factor model on the
/// augmented truncation `G_n`: factors inside `V_n` are copied unchanged and
/// everything outside is summed into one factor on the annulus `U_n`.
pub fn project_to_truncation(m: &FactorModel, n: usize) -> Result<FactorModel> {
    let g = &m.graph;
    let gn = g.augmented_truncation(n)?;
    let vn = g.ball(n)?;
    let un = g.annulus(n)?;
    let size = state_count(m.k, g.len(), DEFAULT_CAP)?;
    let pos: HashMap<usize, usize> = vn.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let mut factors: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
    let mut outside = Vec::new();
    for (key, table) in &m.factors {
        if key.iter().all(|v| vn.contains(*v)) {
            factors.insert(key.iter().map(|v| pos[v]).collect(), table.clone());
        } else {
            outside.push((key, table));
        }
    }
    let annulus: Vec<usize> = un.to_vec();
    if !annulus.is_empty() {
        let mut agg = vec![0.0; m.k.pow(annulus.len() as u32)];
        let mut x = vec![0usize; g.len()];
        for idx in 0..size {
            let mut r = idx;
            for v in (0..g.len()).rev() {
                x[v] = r % m.k;
                r /= m.k;
            }
            let mut w: f64 = (0..g.len()).filter(|&v| !vn.contains(v)).map(|v| m.base[v][x[v]]).product();
            for (key, table) in &outside {
                w *= table[m.factor_index(key, &x)];
            }
            agg[annulus.iter().fold(0, |acc, &v| acc * m.k + x[v])] += w;
        }
        // the overall scale is irrelevant; keep entries near one
        let top = agg.iter().cloned().fold(0.0, f64::max);
        if top > 0.0 {
            agg.iter_mut().for_each(|a| *a /= top);
        }
        let key: Vec<usize> = annulus.iter().map(|v| pos[v]).collect();
        match factors.get_mut(&key) {
            Some(existing) => existing.iter_mut().zip(&agg).for_each(|(e, a)| *e *= a),
            None => {
                factors.insert(key, agg);
            }
        }
    }
    let base = vn.iter().map(|v| m.base[v].clone()).collect();
    FactorModel::new(gn, m.k, factors.into_iter().collect(), Some(base))
}

/// Induced subgraph on `sub` plus a clique on the vertices of `sub` within
/// distance `order` of the removed vertices: the graph a marginal on `sub`
/// is guaranteed to be Markov for.
pub fn completed_subgraph(g: &Graph, sub: &VertexSet, order: usize) -> Result<Graph> {
    let members = sub.to_vec();
    let rest: VertexSet = (0..g.len()).filter(|&v| !sub.contains(v)).collect();
    let near = if rest.is_empty() { VertexSet::new() } else { g.boundary_of_order(&rest, order)? };
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (i, &u) in members.iter().enumerate() {
        for (j, &v) in members.iter().enumerate().skip(i + 1) {
            if g.has_edge(u, v) || (near.contains(u) && near.contains(v)) {
                edges.insert((i, j));
            }
        }
    }
    let labels: Vec<String> = members.iter().map(|&v| g.label(v).to_string()).collect();
    Ok(Graph::new(labels, &edges.into_iter().collect::<Vec<_>>())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub trial: usize,
    pub model: FactorModel,
    /// Violating triple, in indices of the induced subgraph.
    pub triple: Triple,
    pub tv_gap: f64,
}

/// Draws random models with [`FactorModel::random`] (binary states, edge
/// and vertex factors), marginalizes each to `sub` and returns the first
/// whose marginal violates the Markov property of the given order on the
/// induced subgraph by more than `min_gap` (at least [`MRF_TOL`]).
pub fn projection_counterexample_search(
    g: &Graph,
    sub: &VertexSet,
    trials: usize,
    seed: u64,
    order: usize,
    min_gap: f64,
) -> Result<Option<Witness>> {
    search_with(g, sub, trials, seed, order, min_gap, |g, rng| FactorModel::random(g, 2, 1, 1.0, rng))
}

/// [`projection_counterexample_search`] with a caller-supplied model
/// generator. Trials run in parallel with per-trial streams; the lowest
/// violating trial index is reported.
pub fn search_with<F>(
    g: &Graph,
    sub: &VertexSet,
    trials: usize,
    seed: u64,
    order: usize,
    min_gap: f64,
    generate: F,
) -> Result<Option<Witness>>
where
    F: Fn(&Graph, &mut ChaCha8Rng) -> Result<FactorModel> + Sync,
{
    let induced = g.induced_subgraph(sub)?;
    let vars = sub.to_vec();
    let found: Vec<Result<Option<Witness>>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng::keyed(seed, &[trial as u64, rng::purpose::TRIAL]);
            let model = generate(g, &mut r)?;
            let marginal = joint_table(&model)?.marginal(&vars);
            let check = check_mrf_bruteforce(&marginal, &induced, order)?;
            Ok((check.max_violation > min_gap.max(MRF_TOL)).then(|| Witness {
                trial,
                model,
                triple: check.worst.expect("violation has a witness triple"),
                tv_gap: check.max_violation,
            }))
        })
        .collect();
    for r in found {
        if let Some(w) = r? {
            return Ok(Some(w));
        }
    }
    Ok(None)
}

/// Conditional law of `X_A` given `X_{∂²A}`: one row per boundary
/// configuration, `None` where the boundary value has probability zero.
/// Target and boundary vertices are listed in label order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecKernel {
    pub target: Vec<String>,
    pub boundary: Vec<String>,
    pub rows: Vec<Option<Vec<f64>>>,
}

impl SpecKernel {
    /// Largest entrywise difference over rows defined in both kernels;
    /// `None` when the kernels are over different vertex sets.
    pub fn max_difference(&self, other: &SpecKernel) -> Option<f64> {
        if self.target != other.target || self.boundary != other.boundary || self.rows.len() != other.rows.len() {
            return None;
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.rows.iter().zip(&other.rows) {
            if let (Some(a), Some(b)) = (a, b) {
                for (x, y) in a.iter().zip(b) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        Some(worst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecificationCheck {
    /// From the full joint table.
    pub exact: SpecKernel,
    /// From the factors meeting `A` only.
    pub local: SpecKernel,
    pub max_difference: f64,
    pub zero_probability_rows: usize,
}

fn label_sorted(g: &Graph, set: &VertexSet) -> Vec<usize> {
    let mut v = set.to_vec();
    v.sort_by(|a, b| g.label(*a).cmp(g.label(*b)));
    v
}

/// The specification kernel computed twice: by conditioning the joint law
/// and by the local product of factors meeting `A`.
pub fn conditional_specification(m: &FactorModel, a: &VertexSet) -> Result<SpecificationCheck> {
    let g = &m.graph;
    let bd = g.boundary2(a)?;
    let target = label_sorted(g, a);
    let boundary = label_sorted(g, &bd);
    let joint = joint_table(m)?;
    let order: Vec<usize> = boundary.iter().chain(&target).copied().collect();
    let marg = joint.marginal(&order);
    let k = m.k;
    let (nt, nb) = (k.pow(target.len() as u32), k.pow(boundary.len() as u32));
    let mut exact_rows = Vec::with_capacity(nb);
    let mut local_rows = Vec::with_capacity(nb);
    let mut zero_rows = 0;
    let mut x = vec![0usize; g.len()];
    let mut worst: f64 = 0.0;
    for ib in 0..nb {
        let block = &marg.probs[ib * nt..(ib + 1) * nt];
        let pb: f64 = block.iter().sum();
        let exact = (pb > 0.0).then(|| block.iter().map(|p| p / pb).collect::<Vec<f64>>());
        let mut r = ib;
        for &v in boundary.iter().rev() {
            x[v] = r % k;
            r /= k;
        }
        let mut weights = Vec::with_capacity(nt);
        for it in 0..nt {
            let mut r = it;
            for &v in target.iter().rev() {
                x[v] = r % k;
                r /= k;
            }
            weights.push(m.local_weight(a, &x));
        }
        let z: f64 = weights.iter().sum();
        let local = (z > 0.0).then(|| weights.iter().map(|w| w / z).collect::<Vec<f64>>());
        match (&exact, &local) {
            (Some(e), Some(l)) => {
                for (p, q) in e.iter().zip(l) {
                    worst = worst.max((p - q).abs());
                }
            }
            _ => zero_rows += 1,
        }
        exact_rows.push(exact);
        local_rows.push(local);
    }
    let names = |vs: &[usize]| vs.iter().map(|&v| g.label(v).to_string()).collect::<Vec<_>>();
    Ok(SpecificationCheck {
        exact: SpecKernel { target: names(&target), boundary: names(&boundary), rows: exact_rows },
        local: SpecKernel { target: names(&target), boundary: names(&boundary), rows: local_rows },
        max_difference: worst,
        zero_probability_rows: zero_rows,
    })
}

/// Single-site Gibbs sampler sweeping vertices in index order.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    model: FactorModel,
    touching: Vec<Vec<Vec<usize>>>,
    state: Vec<usize>,
    rng: ChaCha8Rng,
}

pub fn gibbs_sampler(m: &FactorModel, seed: u64) -> Result<GibbsSampler> {
    GibbsSampler::new(m, rng::keyed(seed, &[rng::purpose::GIBBS]))
}

impl GibbsSampler {
    /// Starts from the all-zero configuration.
    pub fn new(m: &FactorModel, rng: ChaCha8Rng) -> Result<Self> {
        if !m.strictly_positive() {
            return Err(HcError::NotPositive);
        }
        let n = m.graph.len();
        let mut touching = vec![Vec::new(); n];
        for key in m.factors.keys() {
            for &v in key {
                touching[v].push(key.clone());
            }
        }
        Ok(Self { model: m.clone(), touching, state: vec![0; n], rng })
    }

    pub fn state(&self) -> &[usize] {
        &self.state
    }

    pub fn sweep(&mut self) {
        let k = self.model.k;
        let mut weights = vec![0.0; k];
        for v in 0..self.state.len() {
            for (s, w) in weights.iter_mut().enumerate() {
                self.state[v] = s;
                let mut p = self.model.base[v][s];
                for key in &self.touching[v] {
                    p *= self.model.factors[key][self.model.factor_index(key, &self.state)];
                }
                *w = p;
            }
            let total: f64 = weights.iter().sum();
            let mut u = self.rng.random::<f64>() * total;
            let mut pick = k - 1;
            for (s, &w) in weights.iter().enumerate() {
                if u < w {
                    pick = s;
                    break;
                }
                u -= w;
            }
            self.state[v] = pick;
        }
    }

    /// Runs `sweeps` sweeps and returns the resulting configuration.
    pub fn sample(&mut self, sweeps: usize) -> Vec<usize> {
        for _ in 0..sweeps {
            self.sweep();
        }
        self.state.clone()
    }

    /// Empirical law of the state after each of `sweeps` sweeps.
    pub fn empirical(&mut self, sweeps: usize) -> Result<JointTable> {
        let n = self.state.len();
        let size = state_count(self.model.k, n, DEFAULT_CAP)?;
        let mut counts = vec![0.0; size];
        for _ in 0..sweeps {
            self.sweep();
            let idx = self.state.iter().fold(0, |acc, &s| acc * self.model.k + s);
            counts[idx] += 1.0;
        }
        JointTable::new(self.model.k, n, counts)
    }
}

/// All connected simple graphs on `1..=max_n` vertices up to isomorphism,
/// labelled `1..n`. Brute force over edge subsets and vertex permutations,
/// fine up to six vertices.
pub fn small_connected_graphs(max_n: usize) -> Vec<Graph> {
    let mut out = Vec::new();
    for n in 1..=max_n {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let pair_bit: HashMap<(usize, usize), usize> = pairs.iter().enumerate().map(|(b, &p)| (p, b)).collect();
        // relabelled[p][b]: bit of pair b after applying permutation p
        let relabelled: Vec<Vec<u64>> = permutations(n)
            .iter()
            .map(|p| pairs.iter().map(|&(i, j)| 1u64 << pair_bit[&(p[i].min(p[j]), p[i].max(p[j]))]).collect())
            .collect();
        for mask in 0u64..(1u64 << pairs.len()) {
            let canonical = relabelled.iter().all(|bits| {
                let image =
                    bits.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).fold(0u64, |acc, (_, &x)| acc | x);
                image >= mask
            });
            if !canonical {
                continue;
            }
            let edges: Vec<(usize, usize)> =
                pairs.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &e)| e).collect();
            let g = Graph::new((1..=n).map(|i| i.to_string()), &edges).expect("simple by construction");
            if g.is_connected() {
                out.push(g);
            }
        }
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}
