//! Sample statistics shared by the Monte Carlo diagnostics.

use nalgebra::DMatrix;

/// Mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample covariance of the columns of `rows` (one observation per row)
/// together with entrywise standard errors from the fourth moments.
pub fn covariance_with_se(rows: &[Vec<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let nf = n as f64;
    let mut mean = vec![0.0; p];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut cov = DMatrix::<f64>::zeros(p, p);
    let mut second = DMatrix::<f64>::zeros(p, p);
    let mut c = vec![0.0; p];
    for r in rows {
        for i in 0..p {
            c[i] = r[i] - mean[i];
        }
        for i in 0..p {
            for j in i..p {
                let prod = c[i] * c[j];
                cov[(i, j)] += prod;
                second[(i, j)] += prod * prod;
            }
        }
    }
    let mut se = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let m = cov[(i, j)] / nf;
            let var = (second[(i, j)] / nf - m * m) * nf / (nf - 1.0);
            cov[(i, j)] /= nf - 1.0;
            cov[(j, i)] = cov[(i, j)];
            se[(i, j)] = (var.max(0.0) / nf).sqrt();
            se[(j, i)] = se[(i, j)];
        }
    }
    (cov, se)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_pair_distance(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for x in xs {
        for y in ys {
            total += euclid(x, y);
        }
    }
    total / (xs.len() * ys.len()) as f64
}

/// Energy distance `2E|X−Y| − E|X−X'| − E|Y−Y'|` (V-statistic, so
/// nonnegative) between two samples of points in `ℝ^p`.
pub fn energy_distance(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    let d = 2.0 * mean_pair_distance(xs, ys) - mean_pair_distance(xs, xs) - mean_pair_distance(ys, ys);
    d.max(0.0)
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_x − F_y|`.
pub fn ks_statistic(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

/// Double-centred distance matrix.
fn centred_distances(xs: &[Vec<f64>]) -> Vec<f64> {
    let n = xs.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let e = euclid(&xs[i], &xs[j]);
            d[i * n + j] = e;
            d[j * n + i] = e;
        }
    }
    let row: Vec<f64> = (0..n).map(|i| d[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let all = row.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] += all - row[i] - row[j];
        }
    }
    d
}

/// Sample distance correlation between paired observations; zero in the
/// population iff the two vectors are independent.
pub fn distance_correlation(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    let a = centred_distances(xs);
    let b = centred_distances(ys);
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
    let vxy = dot(&a, &b);
    let denom = (dot(&a, &a) * dot(&b, &b)).sqrt();
    if denom > 0.0 {
        (vxy.max(0.0) / denom).sqrt()
    } else {
        0.0
    }
}
