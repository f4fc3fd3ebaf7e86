mod common;

use nalgebra::DMatrix;

use common::{cd_lasso, dense_circuit, qubo_energies_direct, qubo_operator, random_symmetric, Lcg};
use qsrf::dict::{kkt_violation, lasso_lars, objective};
use qsrf::forest::{fit_tree, Node, TreeParams};
use qsrf::qaoa::{
    precompute_diagonal, run_circuit, sample, spsa_optimize, CostDiagonal, QaoaParams, SpsaGains, Statevector,
};
use qsrf::qubo::{brute_force_minimum, build_qubo, cardinality_energy, Bitstring, QuboProblem};

#[test]
fn diagonal_matches_pauli_z_expansion() {
    let mut rng = Lcg(1);
    for n in 1..=5 {
        let q = random_symmetric(n, &mut rng);
        let offset = rng.range(-2.0, 2.0);
        let diag = precompute_diagonal(&QuboProblem::from_coeffs(q.clone(), offset).unwrap()).unwrap();
        let op = qubo_operator(&q, offset);
        for z in 0..1usize << n {
            assert!((diag.energies[z] - op[(z, z)].re).abs() < 1e-12);
            assert_eq!(op[(z, z)].im, 0.0);
        }
    }
}

#[test]
fn circuit_matches_dense_unitaries_at_every_depth() {
    let mut rng = Lcg(2);
    for n in 1..=4 {
        for p in 1..=5 {
            let energies: Vec<f64> = (0..1usize << n).map(|_| rng.range(-3.0, 3.0)).collect();
            let diag = CostDiagonal::new(energies.clone()).unwrap();
            let g: Vec<f64> = (0..p).map(|_| rng.range(-4.0, 4.0)).collect();
            let b: Vec<f64> = (0..p).map(|_| rng.range(-4.0, 4.0)).collect();
            let got = run_circuit(&diag, &QaoaParams::new(g.clone(), b.clone()).unwrap());
            let want = dense_circuit(&energies, &g, &b);
            for (z, a) in got.amplitudes().iter().enumerate() {
                assert!((a - want[z]).norm() < 1e-12, "n={n} p={p} z={z}");
            }
        }
    }
}

#[test]
fn energies_follow_cardinality_formula() {
    let mut rng = Lcg(3);
    for n in [1, 4, 8, 12] {
        let w: Vec<f64> = (0..n).map(|_| rng.unit()).collect();
        let k = 1 + rng.below(n);
        let q = build_qubo(&w, k, 1e3).unwrap();
        let table = q.all_energies().unwrap();
        let direct = qubo_energies_direct(&q.coeffs, q.offset);
        for z in 0..1usize << n {
            let bits = Bitstring::new(z as u64, n);
            let want = cardinality_energy(&w, k, 1e3, &bits);
            let ones = z.count_ones() as f64;
            let formula = -(0..n).filter(|&j| bits.get(j)).map(|j| w[j]).sum::<f64>() + 1e3 * (ones - k as f64).powi(2);
            assert!((table[z] - formula).abs() < 1e-8, "n={n} z={z}");
            assert!((direct[z] - formula).abs() < 1e-8);
            assert!((want - formula).abs() < 1e-9);
        }
    }
}

#[test]
fn brute_force_agrees_with_enumeration() {
    let mut rng = Lcg(4);
    for _ in 0..30 {
        let n = 1 + rng.below(10);
        let q = random_symmetric(n, &mut rng);
        let problem = QuboProblem::from_coeffs(q.clone(), 0.0).unwrap();
        let (best, e) = brute_force_minimum(&problem).unwrap();
        let direct = qubo_energies_direct(&q, 0.0);
        let min = direct.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((e - min).abs() < 1e-12);
        assert!((direct[best.bits() as usize] - min).abs() < 1e-12);
    }
}

#[test]
fn lars_matches_coordinate_descent() {
    let mut rng = Lcg(5);
    for case in 0..60 {
        let dim = 4 + rng.below(20);
        let atoms = 2 + rng.below(30);
        let mut d = DMatrix::from_fn(dim, atoms, |_, _| rng.normal());
        for mut c in d.column_iter_mut() {
            let n = c.norm();
            c /= n;
        }
        let x: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let max_corr = d
            .column_iter()
            .map(|c| c.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>().abs())
            .fold(0.0, f64::max);
        let lambda = max_corr * rng.range(0.02, 1.2);
        let lars = lasso_lars(&d, &x, lambda);
        let cd = cd_lasso(&d, &x, lambda);
        assert!(kkt_violation(&d, &x, &lars, lambda) < 1e-6, "case {case}");
        let (ol, oc) = (objective(&d, &x, &lars, lambda), objective(&d, &x, &cd, lambda));
        assert!(ol <= oc + 1e-9, "case {case}: {ol} vs {oc}");
        if atoms <= dim {
            for (a, b) in lars.iter().zip(&cd) {
                assert!((a - b).abs() < 1e-6, "case {case}");
            }
        }
    }
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

#[test]
fn stump_matches_exhaustive_split_search() {
    let mut rng = Lcg(6);
    for _ in 0..40 {
        let n = 10 + rng.below(40);
        let dim = 1 + rng.below(4);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.below(7) as f64).collect())
            .collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] + rng.range(-2.0, 2.0) > 3.0).collect();
        let params = TreeParams {
            max_depth: 1,
            min_leaf: 1,
        };
        let tree = fit_tree(&rows, &labels, params).unwrap();

        let weighted = |f: usize, t: f64| {
            let (mut l, mut lp, mut r, mut rp) = (0, 0, 0, 0);
            for (x, &y) in rows.iter().zip(&labels) {
                if x[f] <= t {
                    l += 1;
                    lp += y as usize;
                } else {
                    r += 1;
                    rp += y as usize;
                }
            }
            (l as f64 * gini(lp, l) + r as f64 * gini(rp, r)) / n as f64
        };
        let parent = gini(labels.iter().filter(|&&y| y).count(), n);
        let mut best = parent;
        for f in 0..dim {
            let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                best = best.min(weighted(f, 0.5 * (w[0] + w[1])));
            }
        }
        match tree.nodes()[0] {
            Node::Split { feature, threshold, .. } => {
                assert!((weighted(feature as usize, threshold) - best).abs() < 1e-12);
                assert!(best < parent);
            }
            Node::Leaf { .. } => assert!(best >= parent - 1e-12),
        }
    }
}

#[test]
fn spsa_reaches_single_qubit_grid_minimum() {
    let diag = CostDiagonal::new(vec![0.0, 1.0]).unwrap();
    let steps = 400;
    let mut grid_min = f64::INFINITY;
    let mut grid_max = f64::NEG_INFINITY;
    for i in 0..steps {
        for j in 0..steps {
            let g = std::f64::consts::PI * 2.0 * i as f64 / steps as f64;
            let b = std::f64::consts::PI * j as f64 / steps as f64;
            let s = run_circuit(&diag, &QaoaParams::new(vec![g], vec![b]).unwrap());
            let e = s.probabilities()[1];
            grid_min = grid_min.min(e);
            grid_max = grid_max.max(e);
        }
    }
    // E = (1 + sin 2β · sin γ)/2; start inside the basin around (π/2, 3π/4)
    let mut rng = Lcg(10);
    for seed in 0..5 {
        let init = QaoaParams::new(vec![rng.range(1.0, 2.1)], vec![rng.range(1.9, 2.8)]).unwrap();
        let res = spsa_optimize(&diag, &init, 150, 128, SpsaGains::default(), 100 + seed);
        let gap = (res.best_value - grid_min) / (grid_max - grid_min);
        assert!(gap < 0.05, "seed {seed}: {} vs grid {grid_min}", res.best_value);
    }
}

#[test]
fn sample_counts_are_binomial() {
    let amps: Vec<nalgebra::Complex<f64>> = [0.1, 0.2, 0.05, 0.15, 0.3, 0.0, 0.12, 0.08]
        .iter()
        .enumerate()
        .map(|(i, &p): (usize, &f64)| nalgebra::Complex::from_polar(p.sqrt(), i as f64))
        .collect();
    let state = Statevector::from_amplitudes(&amps).unwrap();
    let shots = 20_000;
    let draws = sample(&state, shots, 9);
    assert_eq!(draws.len(), shots);
    let mut counts = [0usize; 8];
    for d in &draws {
        counts[d.bits() as usize] += 1;
    }
    for (z, &p) in state.probabilities().iter().enumerate() {
        let mean = shots as f64 * p;
        let sd = (shots as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (counts[z] as f64 - mean).abs() <= 3.0 * sd + 1e-9,
            "z={z}: {} vs {mean}",
            counts[z]
        );
    }
}
