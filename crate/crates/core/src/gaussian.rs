//! Exact second-order analytics for linear systems `dX = L X dt + dW`:
//! time-marginal covariance and precision, Gaussian conditioning, and the
//! covariance of discretized paths stacked over a time grid.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaussianError {
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("time grid must start at 0 and increase strictly")]
    BadGrid,
    #[error("matrix is singular: {0}")]
    Singular(&'static str),
    #[error("drift matrix must be square with one row per label")]
    Shape,
    #[error("index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("target and conditioning sets overlap")]
    NotDisjoint,
}

pub type Result<T> = std::result::Result<T, GaussianError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Adjacency minus twice the identity.
    Standard,
    /// Plain adjacency.
    ZeroDiagonal,
    Custom,
}

/// Linear drift matrix `L` over labelled coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSystem {
    l: DMatrix<f64>,
    labels: Vec<String>,
    variant: Variant,
}

/// `L = adjacency(g) + diag_shift·I`.
pub fn build_linear_system(g: &Graph, diag_shift: f64) -> GaussianSystem {
    let n = g.len();
    let mut l = DMatrix::from_diagonal_element(n, n, diag_shift);
    for (u, v) in g.edges() {
        l[(u, v)] = 1.0;
        l[(v, u)] = 1.0;
    }
    let variant = if diag_shift == -2.0 {
        Variant::Standard
    } else if diag_shift == 0.0 {
        Variant::ZeroDiagonal
    } else {
        Variant::Custom
    };
    GaussianSystem { l, labels: g.labels().to_vec(), variant }
}

impl GaussianSystem {
    pub fn custom(l: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if !l.is_square() || l.nrows() != labels.len() {
            return Err(GaussianError::Shape);
        }
        Ok(Self { l, labels, variant: Variant::Custom })
    }

    pub fn drift(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.l == self.l.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMethod {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceResult {
    pub sigma: DMatrix<f64>,
    pub t: f64,
    pub method: CovarianceMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionResult {
    pub q: DMatrix<f64>,
    pub t: f64,
    /// Pairs `i < j` with `|q_ij| > tol`.
    pub ci_edges: Vec<(usize, usize)>,
}

/// `e^{L t}`.
pub fn expm(l: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    if l == &l.transpose() {
        let eig = l.clone().symmetric_eigen();
        let d = eig.eigenvalues.map(|lam| (lam * t).exp());
        &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
    } else {
        (l * t).exp()
    }
}

/// `∫_0^t e^{2λs} ds`, continuous through `λ = 0`.
fn gram_weight(lambda: f64, t: f64) -> f64 {
    if lambda == 0.0 {
        t
    } else {
        (2.0 * lambda * t).exp_m1() / (2.0 * lambda)
    }
}

/// `∫_0^t e^{Ls} e^{Lᵀs} ds`: spectral formula for symmetric `L`, Van Loan's
/// block exponential otherwise.
pub fn integrated_gram(l: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = l.nrows();
    if t == 0.0 {
        return DMatrix::zeros(n, n);
    }
    if l == &l.transpose() {
        let eig = l.clone().symmetric_eigen();
        let w = eig.eigenvalues.map(|lam| gram_weight(lam, t));
        let s = &eig.eigenvectors * DMatrix::from_diagonal(&w) * eig.eigenvectors.transpose();
        return symmetrize(s);
    }
    van_loan_gram(l, t)
}

fn van_loan_gram(l: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = l.nrows();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-l * t));
    block.view_mut((0, n), (n, n)).copy_from(&(DMatrix::identity(n, n) * t));
    block.view_mut((n, n), (n, n)).copy_from(&(l.transpose() * t));
    let e = block.exp();
    let g12 = e.view((0, n), (n, n)).into_owned();
    let g22 = e.view((n, n), (n, n)).into_owned();
    symmetrize(g22.transpose() * g12)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Covariance of `X(t)` started from `X(0) = 0`.
pub fn covariance_at(sys: &GaussianSystem, t: f64) -> Result<CovarianceResult> {
    if !(t >= 0.0) {
        return Err(GaussianError::NegativeTime(t));
    }
    Ok(CovarianceResult { sigma: integrated_gram(&sys.l, t), t, method: CovarianceMethod::ClosedForm })
}

/// Same quantity by adaptive Simpson quadrature of `e^{Ls}e^{Lᵀs}`; used as
/// an independent cross-check of the closed form.
pub fn covariance_by_quadrature(sys: &GaussianSystem, t: f64, tol: f64) -> Result<CovarianceResult> {
    if !(t >= 0.0) {
        return Err(GaussianError::NegativeTime(t));
    }
    let l = sys.l.clone();
    let f = |s: f64| {
        let e = (&l * s).exp();
        &e * e.transpose()
    };
    let n = sys.len();
    if t == 0.0 {
        return Ok(CovarianceResult { sigma: DMatrix::zeros(n, n), t, method: CovarianceMethod::Quadrature });
    }
    let (fa, fm, fb) = (f(0.0), f(t / 2.0), f(t));
    let whole = (&fa + &fm * 4.0 + &fb) * (t / 6.0);
    let sigma = simpson(&f, 0.0, t, fa, fm, fb, whole, tol, 40);
    Ok(CovarianceResult { sigma: symmetrize(sigma), t, method: CovarianceMethod::Quadrature })
}

#[allow(clippy::too_many_arguments)]
fn simpson(
    f: &dyn Fn(f64) -> DMatrix<f64>,
    a: f64,
    b: f64,
    fa: DMatrix<f64>,
    fm: DMatrix<f64>,
    fb: DMatrix<f64>,
    whole: DMatrix<f64>,
    tol: f64,
    depth: usize,
) -> DMatrix<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (&fa + &flm * 4.0 + &fm) * ((m - a) / 6.0);
    let right = (&fm + &frm * 4.0 + &fb) * ((b - m) / 6.0);
    let both = &left + &right;
    let err = (&both - &whole).amax();
    if depth == 0 || err <= 15.0 * tol {
        return &both + (&both - &whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm.clone(), left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// `Q(t) = Σ(t)^{-1}` and the pairs whose precision entry exceeds `tol`.
pub fn precision_at(sys: &GaussianSystem, t: f64, tol: f64) -> Result<PrecisionResult> {
    if !(t > 0.0) {
        return Err(GaussianError::Singular("covariance vanishes at t = 0"));
    }
    let q = if sys.is_symmetric() {
        let eig = sys.l.clone().symmetric_eigen();
        let w = eig.eigenvalues.map(|lam| 1.0 / gram_weight(lam, t));
        if w.iter().any(|x| !x.is_finite()) {
            return Err(GaussianError::Singular("covariance"));
        }
        symmetrize(&eig.eigenvectors * DMatrix::from_diagonal(&w) * eig.eigenvectors.transpose())
    } else {
        spd_inverse(&integrated_gram(&sys.l, t))?
    };
    let ci_edges = support_pairs(&q, tol);
    Ok(PrecisionResult { q, t, ci_edges })
}

/// Off-diagonal pairs `i < j` with `|m_ij| > tol`.
pub fn support_pairs(m: &DMatrix<f64>, tol: f64) -> Vec<(usize, usize)> {
    let n = m.nrows();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if m[(i, j)].abs() > tol {
                out.push((i, j));
            }
        }
    }
    out
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m.clone().cholesky().ok_or(GaussianError::Singular("matrix is not positive definite"))?;
    Ok(symmetrize(chol.inverse()))
}

fn check_indices(n: usize, target: &[usize], given: &[usize]) -> Result<()> {
    if let Some(&i) = target.iter().chain(given).find(|&&i| i >= n) {
        return Err(GaussianError::IndexOutOfRange(i));
    }
    if target.iter().any(|i| given.contains(i)) {
        return Err(GaussianError::NotDisjoint);
    }
    Ok(())
}

fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Law of the `target` coordinates given the `given` coordinates:
/// `E[X_T | X_G] = regression · X_G` and the Schur-complement covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalLaw {
    pub regression: DMatrix<f64>,
    pub covariance: DMatrix<f64>,
}

pub fn conditional_law(cov: &DMatrix<f64>, target: &[usize], given: &[usize]) -> Result<ConditionalLaw> {
    check_indices(cov.nrows(), target, given)?;
    let stt = sub(cov, target, target);
    if given.is_empty() {
        return Ok(ConditionalLaw { regression: DMatrix::zeros(target.len(), 0), covariance: stt });
    }
    let stg = sub(cov, target, given);
    let sgg = sub(cov, given, given);
    let chol = sgg.cholesky().ok_or(GaussianError::Singular("conditioning block"))?;
    // regression = Σ_TG Σ_GG^{-1}, solved as Σ_GG Rᵀ = Σ_GT
    let regression = chol.solve(&stg.transpose()).transpose();
    let covariance = symmetrize(&stt - &regression * stg.transpose());
    Ok(ConditionalLaw { regression, covariance })
}

/// `Σ_TT − Σ_TG Σ_GG^{-1} Σ_GT`.
pub fn conditional_covariance(cov: &DMatrix<f64>, target: &[usize], given: &[usize]) -> Result<DMatrix<f64>> {
    Ok(conditional_law(cov, target, given)?.covariance)
}

/// Time grid starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.first() != Some(&0.0)
            || times.windows(2).any(|w| !(w[1] > w[0]))
            || times.iter().any(|t| !t.is_finite())
        {
            return Err(GaussianError::BadGrid);
        }
        Ok(Self(times))
    }

    /// `steps + 1` equally spaced points on `[0, t_max]`.
    pub fn uniform(t_max: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(t_max > 0.0) {
            return Err(GaussianError::BadGrid);
        }
        Self::new((0..=steps).map(|k| t_max * k as f64 / steps as f64).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `X_{k+1} = (I + LΔ) X_k + ξ_k`, `Cov ξ_k = Δ I`.
    Euler,
    /// Exact transition of the linear SDE.
    Exact,
}

/// Covariance of `(X_v(t_k))` stacked vertex-major: index `v * times + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedCovariance {
    pub matrix: DMatrix<f64>,
    pub labels: Vec<String>,
    /// Times that appear in the stacking.
    pub times: Vec<f64>,
    pub scheme: Scheme,
}

impl StackedCovariance {
    pub fn n_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    /// Stacked indices of every time of the given vertices.
    pub fn indices_of(&self, vertices: &[usize]) -> Vec<usize> {
        let k = self.n_times();
        vertices.iter().flat_map(|&v| (0..k).map(move |j| v * k + j)).collect()
    }

    /// Restriction to the given time positions (indices into `times`).
    pub fn at_times(&self, positions: &[usize]) -> StackedCovariance {
        let k = self.n_times();
        let idx: Vec<usize> = (0..self.n_vertices()).flat_map(|v| positions.iter().map(move |&j| v * k + j)).collect();
        StackedCovariance {
            matrix: sub(&self.matrix, &idx, &idx),
            labels: self.labels.clone(),
            times: positions.iter().map(|&j| self.times[j]).collect(),
            scheme: self.scheme,
        }
    }
}

/// Stacked path covariance on `grid`. With `initial = None` the chain
/// starts at the deterministic point `0`, and the degenerate time-zero
/// slice is left out; with an initial covariance the time-zero slice is
/// included.
pub fn path_covariance(
    sys: &GaussianSystem,
    grid: &TimeGrid,
    scheme: Scheme,
    initial: Option<&DMatrix<f64>>,
) -> Result<StackedCovariance> {
    let n = sys.len();
    let times = grid.times();
    if let Some(c0) = initial {
        if c0.nrows() != n || c0.ncols() != n {
            return Err(GaussianError::Shape);
        }
    }
    let steps = times.len() - 1;
    let mut transitions = Vec::with_capacity(steps);
    let mut noise = Vec::with_capacity(steps);
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        match scheme {
            Scheme::Euler => {
                transitions.push(DMatrix::identity(n, n) + &sys.l * dt);
                noise.push(DMatrix::from_diagonal_element(n, n, dt));
            }
            Scheme::Exact => {
                transitions.push(expm(&sys.l, dt));
                noise.push(integrated_gram(&sys.l, dt));
            }
        }
    }
    // blocks[j][k] = Cov(X_j, X_k) for j <= k
    let total = times.len();
    let mut diag = vec![initial.cloned().unwrap_or_else(|| DMatrix::zeros(n, n))];
    for k in 0..steps {
        let next = &transitions[k] * &diag[k] * transitions[k].transpose() + &noise[k];
        diag.push(symmetrize(next));
    }
    let first = if initial.is_some() { 0 } else { 1 };
    let kept: Vec<usize> = (first..total).collect();
    let m = kept.len();
    let mut matrix = DMatrix::zeros(n * m, n * m);
    for (a, &j) in kept.iter().enumerate() {
        let mut cross = diag[j].clone();
        for (b, &k) in kept.iter().enumerate().skip(a) {
            if k > j {
                cross = &cross * transitions[k - 1].transpose();
            }
            for u in 0..n {
                for v in 0..n {
                    matrix[(u * m + a, v * m + b)] = cross[(u, v)];
                    matrix[(v * m + b, u * m + a)] = cross[(u, v)];
                }
            }
        }
    }
    Ok(StackedCovariance {
        matrix,
        labels: sys.labels.clone(),
        times: kept.iter().map(|&j| times[j]).collect(),
        scheme,
    })
}

/// Size of one off-diagonal vertex block of the stacked precision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockNorm {
    pub u: usize,
    pub v: usize,
    pub label_u: String,
    pub label_v: String,
    pub max_abs: f64,
    /// `max_abs / sqrt(d_u d_v)` with `d_w` the largest entry of the
    /// diagonal block of `w`.
    pub relative: f64,
}

pub fn block_norms(precision: &DMatrix<f64>, labels: &[String], times: usize) -> Vec<BlockNorm> {
    let n = labels.len();
    let block_max = |u: usize, v: usize| {
        let mut m: f64 = 0.0;
        for a in 0..times {
            for b in 0..times {
                m = m.max(precision[(u * times + a, v * times + b)].abs());
            }
        }
        m
    };
    let scale: Vec<f64> = (0..n).map(|u| block_max(u, u)).collect();
    let mut out = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let max_abs = block_max(u, v);
            out.push(BlockNorm {
                u,
                v,
                label_u: labels[u].clone(),
                label_v: labels[v].clone(),
                max_abs,
                relative: max_abs / (scale[u] * scale[v]).sqrt(),
            });
        }
    }
    out
}

/// Per vertex pair, the largest entry of the stacked precision block.
pub fn path_precision_blocks(stacked: &StackedCovariance) -> Result<Vec<BlockNorm>> {
    let q = spd_inverse(&stacked.matrix)?;
    Ok(block_norms(&q, &stacked.labels, stacked.n_times()))
}

/// CSV with a header row of labels.
pub fn matrix_to_csv(labels: &[String], m: &DMatrix<f64>) -> String {
    let mut s = String::from("label");
    for l in labels {
        s.push(',');
        s.push_str(l);
    }
    s.push('\n');
    for i in 0..m.nrows() {
        s.push_str(&labels[i]);
        for j in 0..m.ncols() {
            s.push_str(&format!(",{:.12e}", m[(i, j)]));
        }
        s.push('\n');
    }
    s
}

/// Edge set as a JSON array of label pairs.
pub fn edges_to_json(labels: &[String], edges: &[(usize, usize)]) -> String {
    let pairs: Vec<[&str; 2]> = edges.iter().map(|&(i, j)| [labels[i].as_str(), labels[j].as_str()]).collect();
    serde_json::to_string(&pairs).expect("string pairs serialize")
}

/// Limit of `Q(t)` as `t → ∞` for a stable symmetric drift: the stationary
/// covariance is `-(2L)^{-1}`, so the precision tends to `-2L`.
pub fn stationary_precision(sys: &GaussianSystem) -> DMatrix<f64> {
    &sys.l * -2.0
}

/// Largest eigenvalue of a symmetric drift.
pub fn spectral_abscissa(sys: &GaussianSystem) -> f64 {
    let eig: DVector<f64> = sys.l.clone().symmetric_eigen().eigenvalues;
    eig.max()
}
