//! Independent reference implementations used only by tests.
#![allow(dead_code)]

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;

pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// `ops[j]` acts on qubit `j`; qubit 0 is the least significant index bit.
pub fn kron_qubits(ops: &[DMatrix<C64>]) -> DMatrix<C64> {
    let mut m = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    for op in ops.iter().rev() {
        m = kron(&m, op);
    }
    m
}

pub fn identity2() -> DMatrix<C64> {
    DMatrix::identity(2, 2)
}

pub fn pauli_z() -> DMatrix<C64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(-1.0, 0.0),
        ],
    )
}

pub fn hadamard() -> DMatrix<C64> {
    let h = 1.0 / 2f64.sqrt();
    DMatrix::from_row_slice(
        2,
        2,
        &[C64::new(h, 0.0), C64::new(h, 0.0), C64::new(h, 0.0), C64::new(-h, 0.0)],
    )
}

/// `exp(−iβX)`
pub fn rx(beta: f64) -> DMatrix<C64> {
    let (s, c) = beta.sin_cos();
    DMatrix::from_row_slice(
        2,
        2,
        &[C64::new(c, 0.0), C64::new(0.0, -s), C64::new(0.0, -s), C64::new(c, 0.0)],
    )
}

/// Dense operator `offset·I + Σ_ij Q_ij b_i b_j` with `b_j = (I − Z_j)/2`.
pub fn qubo_operator(q: &DMatrix<f64>, offset: f64) -> DMatrix<C64> {
    let n = q.nrows();
    let dim = 1usize << n;
    let b = |j: usize| {
        let ops: Vec<DMatrix<C64>> = (0..n)
            .map(|t| {
                if t == j {
                    (identity2() - pauli_z()) * C64::new(0.5, 0.0)
                } else {
                    identity2()
                }
            })
            .collect();
        kron_qubits(&ops)
    };
    let bs: Vec<DMatrix<C64>> = (0..n).map(b).collect();
    let mut h = DMatrix::<C64>::identity(dim, dim) * C64::new(offset, 0.0);
    for i in 0..n {
        for j in 0..n {
            h += &bs[i] * &bs[j] * C64::new(q[(i, j)], 0.0);
        }
    }
    h
}

/// `exp(−iγH)` for diagonal `H` through its eigen-decomposition, checking
/// that `H` really is diagonal.
pub fn expm_diagonal(h: &DMatrix<C64>, gamma: f64) -> DMatrix<C64> {
    let dim = h.nrows();
    let mut u = DMatrix::<C64>::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            if r != c {
                assert!(h[(r, c)].norm() < 1e-12, "operator is not diagonal");
            }
        }
        u[(r, r)] = (C64::new(0.0, -gamma) * h[(r, r)]).exp();
    }
    u
}

/// Full-matrix QAOA circuit: Hadamards, then alternating cost and mixer
/// unitaries.
pub fn dense_circuit(energies: &[f64], gammas: &[f64], betas: &[f64]) -> DVector<C64> {
    let dim = energies.len();
    let n = dim.trailing_zeros() as usize;
    let h_all = kron_qubits(&vec![hadamard(); n]);
    let mut psi = DVector::<C64>::zeros(dim);
    psi[0] = C64::new(1.0, 0.0);
    psi = &h_all * psi;
    let hc = DMatrix::from_diagonal(&DVector::from_iterator(dim, energies.iter().map(|&e| C64::new(e, 0.0))));
    for (&g, &b) in gammas.iter().zip(betas) {
        let uc = expm_diagonal(&hc, g);
        let um = kron_qubits(&vec![rx(b); n]);
        psi = &um * (&uc * psi);
    }
    psi
}

/// Plain cyclic coordinate descent without residual bookkeeping.
pub fn cd_lasso(atoms: &DMatrix<f64>, x: &[f64], lambda: f64) -> Vec<f64> {
    let a = atoms.ncols();
    let xv = DVector::from_column_slice(x);
    let mut beta = DVector::<f64>::zeros(a);
    for _ in 0..200_000 {
        let mut change: f64 = 0.0;
        for j in 0..a {
            let col = atoms.column(j);
            let sq = col.norm_squared();
            if sq == 0.0 {
                continue;
            }
            let others = atoms * &beta - col * beta[j];
            let rho = col.dot(&(&xv - others));
            let new = rho.signum() * (rho.abs() - lambda).max(0.0) / sq;
            change = change.max((new - beta[j]).abs());
            beta[j] = new;
        }
        if change < 1e-15 {
            break;
        }
    }
    beta.iter().copied().collect()
}

/// Mann–Whitney count over all positive/negative pairs, ties as one half.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            den += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / den
}

/// nDCG@k straight from the definition over an explicitly sorted list.
pub fn ndcg_definition(scored: &[(u32, f64, bool)], k: usize) -> f64 {
    let mut v = scored.to_vec();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let gains: Vec<f64> = v.iter().map(|s| if s.2 { 1.0 } else { 0.0 }).collect();
    let dcg = |g: &[f64]| -> f64 {
        g.iter()
            .take(k)
            .enumerate()
            .map(|(p, x)| x / (p as f64 + 2.0).ln() * 2f64.ln())
            .sum()
    };
    let mut ideal = gains.clone();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let idcg = dcg(&ideal);
    if idcg == 0.0 {
        0.0
    } else {
        dcg(&gains) / idcg
    }
}

pub fn log_loss_definition(p: &[f64], y: &[bool]) -> f64 {
    let eps = 1e-12;
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / p.len() as f64
}

/// Energy of every bitstring by direct double sum.
pub fn qubo_energies_direct(q: &DMatrix<f64>, offset: f64) -> Vec<f64> {
    let n = q.nrows();
    (0..1usize << n)
        .map(|z| {
            let mut e = offset;
            for i in 0..n {
                for j in 0..n {
                    if (z >> i) & 1 == 1 && (z >> j) & 1 == 1 {
                        e += q[(i, j)];
                    }
                }
            }
            e
        })
        .collect()
}

/// Small deterministic generator for test data.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let mut x = self.0;
        x ^= x >> 33;
        x = x.wrapping_mul(0xff51afd7ed558ccd);
        x ^ (x >> 33)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.unit().max(1e-300);
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

pub fn random_symmetric(n: usize, rng: &mut Lcg) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.range(-1.0, 1.0);
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    q
}
