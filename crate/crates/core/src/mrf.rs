//! Conditional-independence checks: exact ones on Gaussian stacked
//! covariances via precision blocks, statistical ones on simulated path
//! snapshots via partial correlations, and Markov-order scans over vertex
//! sets.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::gaussian::{spd_inverse, GaussianError, StackedCovariance};
use crate::graph::{Graph, GraphError, VertexSet};
use crate::sde::PathEnsemble;

/// Default relative tolerance for exact precision blocks.
pub const EXACT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum MrfError {
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("sets A, S, B must be disjoint and A, B nonempty")]
    BadTriple,
    #[error("vertex index {0} out of range")]
    VertexOutOfRange(usize),
    #[error("vertex `{0}` missing from the source")]
    UnknownVertex(String),
    #[error("{replicas} replicas for {features} features; at least {needed} are needed")]
    TooFewReplicas { replicas: usize, features: usize, needed: usize },
    #[error("feature time index {0} not recorded")]
    BadFeatureTime(usize),
    #[error("order must be 1 or 2, got {0}")]
    BadOrder(usize),
}

pub type Result<T> = std::result::Result<T, MrfError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMode {
    ExactGaussian,
    PartialCorrelation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Independent,
    Dependent,
    Inconclusive,
}

/// Outcome of one test of `X_A ⟂ X_B | X_S`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CiTestReport {
    pub a: Vec<String>,
    pub s: Vec<String>,
    pub b: Vec<String>,
    pub mode: CiMode,
    pub order: Option<usize>,
    pub statistic: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    /// How `statistic` and `threshold` produce the verdict.
    pub rule: String,
    pub n_features: Option<usize>,
    pub n_replicas: Option<usize>,
}

impl CiTestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// CSV with columns `set,order,mode,statistic,verdict`; sets are
/// `A|S|B` with space-separated labels.
pub fn reports_csv(reports: &[CiTestReport]) -> String {
    let mut out = String::from("set,order,mode,statistic,verdict\n");
    for r in reports {
        let order = r.order.map(|o| o.to_string()).unwrap_or_default();
        let mode = match r.mode {
            CiMode::ExactGaussian => "exact_gaussian",
            CiMode::PartialCorrelation => "partial_correlation",
        };
        let verdict = match r.verdict {
            Verdict::Independent => "independent",
            Verdict::Dependent => "dependent",
            Verdict::Inconclusive => "inconclusive",
        };
        out.push_str(&format!(
            "{}|{}|{},{},{},{:.6e},{}\n",
            r.a.join(" "),
            r.s.join(" "),
            r.b.join(" "),
            order,
            mode,
            r.statistic,
            verdict
        ));
    }
    out
}

fn check_triple(n: usize, a: &[usize], s: &[usize], b: &[usize]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(MrfError::BadTriple);
    }
    let mut seen = vec![false; n];
    for &v in a.iter().chain(s).chain(b) {
        if v >= n {
            return Err(MrfError::VertexOutOfRange(v));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(MrfError::BadTriple);
        }
    }
    Ok(())
}

fn names(labels: &[String], vs: &[usize]) -> Vec<String> {
    vs.iter().map(|&v| labels[v].clone()).collect()
}

fn max_abs(q: &DMatrix<f64>, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> f64 {
    let mut m: f64 = 0.0;
    for i in rows {
        for j in cols.clone() {
            m = m.max(q[(i, j)].abs());
        }
    }
    m
}

/// Exact test on a stacked Gaussian covariance. The law of all times of
/// `A ∪ S ∪ B` is inverted and the `A × B` block of its precision is
/// compared, relative to the geometric mean of the largest `A × A` and
/// `B × B` entries, with `tol`.
pub fn exact_gaussian_ci(
    stacked: &StackedCovariance,
    a: &[usize],
    s: &[usize],
    b: &[usize],
    tol: f64,
) -> Result<CiTestReport> {
    check_triple(stacked.n_vertices(), a, s, b)?;
    let ia = stacked.indices_of(a);
    let is = stacked.indices_of(s);
    let ib = stacked.indices_of(b);
    let order: Vec<usize> = ia.iter().chain(&is).chain(&ib).copied().collect();
    let m = order.len();
    let marginal = DMatrix::from_fn(m, m, |i, j| stacked.matrix[(order[i], order[j])]);
    let q = spd_inverse(&marginal)?;
    let (na, ns) = (ia.len(), is.len());
    let b_range = na + ns..m;
    let cross = max_abs(&q, 0..na, b_range.clone());
    let scale = (max_abs(&q, 0..na, 0..na) * max_abs(&q, b_range.clone(), b_range)).sqrt();
    let statistic = if scale > 0.0 { cross / scale } else { 0.0 };
    Ok(CiTestReport {
        a: names(&stacked.labels, a),
        s: names(&stacked.labels, s),
        b: names(&stacked.labels, b),
        mode: CiMode::ExactGaussian,
        order: None,
        statistic,
        threshold: tol,
        verdict: if statistic < tol { Verdict::Independent } else { Verdict::Dependent },
        rule: "independent iff max|Q_AB| / sqrt(max|Q_AA| max|Q_BB|) < threshold".into(),
        n_features: Some(m),
        n_replicas: None,
    })
}

/// Options of the partial-correlation test.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialCorrelationOptions {
    /// Recorded time indices used as features, for every component.
    pub feature_times: Vec<usize>,
    pub alpha: f64,
    /// Whether the source is jointly Gaussian; otherwise the verdict is a
    /// heuristic and the rule says so.
    pub gaussian: bool,
}

/// Replicas needed per feature.
pub const REPLICAS_PER_FEATURE: usize = 50;

/// Statistical test on an ensemble. Features are the path values at the
/// feature times. For every pair of an `A` feature and a `B` feature the
/// partial correlation given all `S` features is turned into a Fisher-z
/// p-value; with Bonferroni over the pairs the verdict is independent iff
/// the smallest adjusted p-value exceeds `alpha`.
pub fn partial_correlation_ci_test(
    ens: &PathEnsemble,
    a: &[usize],
    s: &[usize],
    b: &[usize],
    opts: &PartialCorrelationOptions,
) -> Result<CiTestReport> {
    check_triple(ens.n_vertices(), a, s, b)?;
    if let Some(&j) = opts.feature_times.iter().find(|&&j| j >= ens.n_times()) {
        return Err(MrfError::BadFeatureTime(j));
    }
    let per_vertex = opts.feature_times.len() * ens.dim;
    let (fa, fs, fb) = (a.len() * per_vertex, s.len() * per_vertex, b.len() * per_vertex);
    let features = fa + fs + fb;
    let n = ens.replicas;
    if n < REPLICAS_PER_FEATURE * features {
        return Err(MrfError::TooFewReplicas { replicas: n, features, needed: REPLICAS_PER_FEATURE * features });
    }
    let columns: Vec<(usize, usize, usize)> = a
        .iter()
        .chain(b)
        .chain(s)
        .flat_map(|&v| opts.feature_times.iter().flat_map(move |&j| (0..ens.dim).map(move |c| (v, j, c))))
        .collect();
    let cov = feature_covariance(ens, &columns);
    let pairs = fa * fb;
    let dof = n as f64 - fs as f64 - 3.0;
    let z_crit = Normal::standard().inverse_cdf(1.0 - opts.alpha / (2.0 * pairs as f64));
    let threshold = (z_crit / dof.sqrt()).tanh();
    let mut report = CiTestReport {
        a: names(&ens.labels, a),
        s: names(&ens.labels, s),
        b: names(&ens.labels, b),
        mode: CiMode::PartialCorrelation,
        order: None,
        statistic: f64::NAN,
        threshold,
        verdict: Verdict::Inconclusive,
        rule: format!(
            "independent iff min Bonferroni-adjusted Fisher-z p-value > {} (equivalently max |partial correlation| <= threshold){}",
            opts.alpha,
            if opts.gaussian { "" } else { "; heuristic for non-Gaussian features" }
        ),
        n_features: Some(features),
        n_replicas: Some(n),
    };
    let Some(residual) = residual_covariance(&cov, fa + fb) else {
        return Ok(report);
    };
    let mut best: f64 = 0.0;
    for i in 0..fa {
        for j in fa..fa + fb {
            let denom = (residual[(i, i)] * residual[(j, j)]).sqrt();
            if !(denom > 1e-12 * (cov[(i, i)] * cov[(j, j)]).sqrt()) {
                return Ok(report);
            }
            best = best.max((residual[(i, j)] / denom).abs());
        }
    }
    report.statistic = best;
    let z = best.min(1.0 - 1e-16).atanh() * dof.sqrt();
    let p = (2.0 * (1.0 - Normal::standard().cdf(z)) * pairs as f64).min(1.0);
    report.verdict = if p > opts.alpha { Verdict::Independent } else { Verdict::Dependent };
    Ok(report)
}

fn feature_covariance(ens: &PathEnsemble, columns: &[(usize, usize, usize)]) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> =
        (0..ens.replicas).map(|r| columns.iter().map(|&(v, j, c)| ens.value(r, v, j, c)).collect()).collect();
    crate::stats::covariance_with_se(&rows).0
}

/// Covariance of the first `k` coordinates after regressing out the rest,
/// or `None` when the conditioning block is singular.
fn residual_covariance(cov: &DMatrix<f64>, k: usize) -> Option<DMatrix<f64>> {
    let m = cov.nrows();
    let top = cov.view((0, 0), (k, k)).clone_owned();
    if m == k {
        return Some(top);
    }
    let cross = cov.view((0, k), (k, m - k)).clone_owned();
    let given = cov.view((k, k), (m - k, m - k)).clone_owned();
    let chol = given.cholesky()?;
    let solved = chol.solve(&cross.transpose());
    Some(top - &cross * solved)
}

/// Source of a Markov-order scan.
#[derive(Debug, Clone)]
pub enum CiSource<'a> {
    Exact { stacked: &'a StackedCovariance, tol: f64 },
    Ensemble { ensemble: &'a PathEnsemble, options: PartialCorrelationOptions },
}

impl CiSource<'_> {
    fn labels(&self) -> &[String] {
        match self {
            Self::Exact { stacked, .. } => &stacked.labels,
            Self::Ensemble { ensemble, .. } => &ensemble.labels,
        }
    }

    fn test(&self, a: &[usize], s: &[usize], b: &[usize]) -> Result<CiTestReport> {
        match self {
            Self::Exact { stacked, tol } => exact_gaussian_ci(stacked, a, s, b, *tol),
            Self::Ensemble { ensemble, options } => partial_correlation_ci_test(ensemble, a, s, b, options),
        }
    }
}

/// Per-order outcome of a scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderScan {
    pub order: usize,
    /// Every tested set came out independent.
    pub passed: bool,
    pub reports: Vec<CiTestReport>,
}

/// Singletons and edges, the default sets of a scan.
pub fn default_scan_sets(g: &Graph) -> Vec<VertexSet> {
    let mut sets: Vec<VertexSet> = (0..g.len()).map(VertexSet::singleton).collect();
    sets.extend(g.edges().into_iter().map(|(u, v)| VertexSet::from([u, v])));
    sets
}

/// For every set `A` and order `k`, tests `A` against `V \ (A ∪ ∂ᵏA)`
/// given `∂ᵏA`. Sets whose far side is empty are skipped.
pub fn mrf_order_scan(
    g: &Graph,
    source: &CiSource,
    orders: &[usize],
    sets: Option<&[VertexSet]>,
) -> Result<Vec<OrderScan>> {
    let labels = source.labels();
    let map: Vec<usize> = g
        .labels()
        .iter()
        .map(|l| labels.iter().position(|m| m == l).ok_or_else(|| MrfError::UnknownVertex(l.clone())))
        .collect::<Result<_>>()?;
    let owned;
    let sets = match sets {
        Some(s) => s,
        None => {
            owned = default_scan_sets(g);
            &owned
        }
    };
    let all = g.all_vertices();
    let mut out = Vec::new();
    for &order in orders {
        if !(1..=2).contains(&order) {
            return Err(MrfError::BadOrder(order));
        }
        let triples: Vec<(Vec<usize>, Vec<usize>, Vec<usize>)> = sets
            .iter()
            .map(|a| {
                let s = g.boundary_of_order(a, order)?;
                let b = all.difference(&a.union(&s));
                Ok((a.to_vec(), s.to_vec(), b.to_vec()))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|t| !t.2.is_empty())
            .collect();
        let to_source = |vs: &[usize]| vs.iter().map(|&v| map[v]).collect::<Vec<_>>();
        let reports = triples
            .par_iter()
            .map(|(a, s, b)| {
                let mut r = source.test(&to_source(a), &to_source(s), &to_source(b))?;
                r.order = Some(order);
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        let passed = reports.iter().all(|r| r.verdict == Verdict::Independent);
        out.push(OrderScan { order, passed, reports });
    }
    Ok(out)
}
