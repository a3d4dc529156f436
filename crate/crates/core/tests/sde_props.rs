use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netdiff_core::coeff::{DiffusionSpec, DiffusionTable, DriftSpec, DriftTable, History};
use netdiff_core::gaussian::TimeGrid;
use netdiff_core::graph::generators::path;
use netdiff_core::graph::Graph;
use netdiff_core::hc::FactorModel;
use netdiff_core::sde::{
    girsanov_weights, local_martingale, simulate, simulate_driftless, CompiledDrift, InitialLaw, MeasureTag,
    PathEnsemble, Recording, Simulation,
};
use netdiff_core::stats::distance_correlation;

fn tables(drift: &str, diffusion: DiffusionSpec) -> (DriftTable, DiffusionTable) {
    (DriftTable::homogeneous(DriftSpec::parse(drift).unwrap()), DiffusionTable::homogeneous(diffusion))
}

fn random_connected(n: usize, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    for _ in 0..n / 2 {
        let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
        if u < v && !edges.contains(&(u, v)) {
            edges.push((u, v));
        }
    }
    Graph::new((0..n).map(|i| format!("n{i}")).collect::<Vec<_>>(), &edges).unwrap()
}

#[test]
fn same_seed_same_bits() {
    let g = path(4);
    let (drift, diffusion) = tables(
        "nbr_avg(tanh(y)) - x + 0.3 * sin(runavg(x, 0.2))",
        DiffusionSpec::diagonal(vec![1.0], vec![0.4]).unwrap(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = FactorModel::random(&g, 2, 2, 1.0, &mut rng).unwrap();
    let initial = InitialLaw::Gibbs { model, values: vec![-1.0, 1.0], sweeps: 20 };
    let sim = Simulation::new(&g, &drift, &diffusion, TimeGrid::uniform(1.0, 25).unwrap(), 40, 77)
        .unwrap()
        .with_initial(initial);
    let a = simulate(&sim).unwrap();
    let b = simulate(&sim).unwrap();
    assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    let mut buf = Vec::new();
    a.write_to(&mut buf).unwrap();
    assert_eq!(PathEnsemble::read_from(buf.as_slice()).unwrap(), a);
    assert_eq!(a.summary_csv(), b.summary_csv());
}

#[test]
fn vertices_shared_by_label_see_the_same_noise() {
    let (drift, diffusion) = tables("0", DiffusionSpec::identity(1));
    let grid = TimeGrid::uniform(1.0, 10).unwrap();
    let small = simulate(&Simulation::new(&path(3), &drift, &diffusion, grid.clone(), 5, 4).unwrap()).unwrap();
    let large = simulate(&Simulation::new(&path(6), &drift, &diffusion, grid, 5, 4).unwrap()).unwrap();
    for r in 0..5 {
        for v in 0..3 {
            for j in 0..small.n_times() {
                assert_eq!(small.value(r, v, j, 0), large.value(r, v, j, 0));
            }
        }
    }
}

#[test]
fn girsanov_vertex_factor_is_local() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..6 {
        let n = rng.random_range(2..=8);
        let g = random_connected(n, &mut rng);
        let (drift, diffusion) = tables(
            "nbr_avg(tanh(y)) - x + 0.2 * sin(lag(x, 0.1)) + nbr_sum(y) / 4",
            DiffusionSpec::diagonal(vec![1.2], vec![0.3]).unwrap(),
        );
        let sim = Simulation::new(&g, &drift, &diffusion, TimeGrid::uniform(1.0, 20).unwrap(), 6, trial)
            .unwrap()
            .with_initial(InitialLaw::normal(0.0, 1.0));
        let ens = simulate_driftless(&sim).unwrap();
        let w = girsanov_weights(&ens, &sim).unwrap();
        let compiled = CompiledDrift::new(&sim.drifts.specs()[0], 1);
        let sigma = sim.diffusions[0].compile();
        for r in 0..ens.replicas {
            for v in 0..n {
                // copy only the vertex and its neighbors out of the ensemble
                let own: Vec<f64> = ens.history(r, v).values.to_vec();
                let nbrs: Vec<Vec<f64>> = g.neighbors(v).iter().map(|&u| ens.history(r, u).values.to_vec()).collect();
                let own_h = History::new(&ens.times, &own, 1);
                let nbr_h: Vec<History> = nbrs.iter().map(|x| History::new(&ens.times, x, 1)).collect();
                let (m, qv) = local_martingale(&own_h, &nbr_h, &compiled, &sigma).unwrap();
                assert_eq!(m.to_bits(), w.martingale[r][v].to_bits());
                assert_eq!(qv.to_bits(), w.quadratic_variation[r][v].to_bits());
            }
            let total: f64 = (0..n).map(|v| w.vertex_factor(r, v)).product();
            assert!((total.ln() - w.log_weights[r]).abs() < 1e-9 * w.log_weights[r].abs().max(1.0));
        }
    }
}

fn permutation_p_value(xs: &[Vec<f64>], ys: &[Vec<f64>], rounds: usize, seed: u64) -> (f64, f64) {
    let observed = distance_correlation(xs, ys);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = ys.to_vec();
    let mut above = 0;
    for _ in 0..rounds {
        shuffled.shuffle(&mut rng);
        if distance_correlation(xs, &shuffled) >= observed {
            above += 1;
        }
    }
    (observed, (above + 1) as f64 / (rounds + 1) as f64)
}

#[test]
fn driftless_product_law_has_independent_groups() {
    let g = path(4);
    let (drift, diffusion) = tables("nbr_sum(y) - 2*x", DiffusionSpec::identity(1));
    let sim = Simulation::new(&g, &drift, &diffusion, TimeGrid::uniform(1.0, 20).unwrap(), 600, 8)
        .unwrap()
        .with_initial(InitialLaw::normal(0.0, 1.0))
        .with_recording(Recording::Every(5));
    let free = simulate_driftless(&sim).unwrap();
    assert_eq!(free.measure, MeasureTag::Driftless);
    let group = |ens: &PathEnsemble, vs: &[usize]| -> Vec<Vec<f64>> {
        (0..ens.replicas)
            .map(|r| {
                vs.iter()
                    .flat_map(|&v| (0..ens.n_times()).map(move |j| (v, j)))
                    .map(|(v, j)| ens.value(r, v, j, 0))
                    .collect()
            })
            .collect()
    };
    let (dcor, p) = permutation_p_value(&group(&free, &[0, 1]), &group(&free, &[2, 3]), 99, 1);
    assert!(p > 0.01, "driftless dcor {dcor:.3}, p {p:.3}");
    let coupled = simulate(&sim).unwrap();
    let (dcor, p) = permutation_p_value(&group(&coupled, &[0, 1]), &group(&coupled, &[2, 3]), 99, 1);
    assert!(p <= 0.01, "interacting dcor {dcor:.3}, p {p:.3}");
}

#[test]
fn halving_the_step_moves_the_covariance_within_noise() {
    let (drift, diffusion) = tables("nbr_sum(y) - 2*x", DiffusionSpec::identity(1));
    let run = |steps: usize, seed: u64| {
        let sim = Simulation::new(&path(5), &drift, &diffusion, TimeGrid::uniform(2.0, steps).unwrap(), 20_000, seed)
            .unwrap()
            .with_recording(Recording::Endpoints);
        simulate(&sim).unwrap().sample_covariance(1, 0)
    };
    let (fine, se_f) = run(1 << 10, 1);
    let (coarse, se_c) = run(1 << 9, 2);
    for i in 0..5 {
        for j in 0..5 {
            let ci = 1.96 * (se_f[(i, j)].powi(2) + se_c[(i, j)].powi(2)).sqrt();
            let change = (fine[(i, j)] - coarse[(i, j)]).abs();
            assert!(change < ci, "({i},{j}): {change:.2e} vs {ci:.2e}");
        }
    }
}
