//! Lasso solver: LARS homotopy with the Lasso drop rule, followed by
//! coordinate-descent polishing whenever the path had to skip a degenerate
//! atom.

use nalgebra::{DMatrix, DVector};

const EPS: f64 = 1e-12;
const POLISH_TOL: f64 = 1e-11;
const MAX_POLISH_SWEEPS: usize = 20_000;

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Correlations `Dᵀ(x − Dβ)` for a dense coefficient vector.
pub fn correlations(atoms: &DMatrix<f64>, x: &[f64], beta: &[f64]) -> Vec<f64> {
    let mut r = x.to_vec();
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (ri, &dv) in r.iter_mut().zip(atoms.column(j).iter()) {
                *ri -= b * dv;
            }
        }
    }
    (0..atoms.ncols())
        .map(|j| atoms.column(j).iter().zip(&r).map(|(a, b)| a * b).sum())
        .collect()
}

/// Largest violation of the Lasso optimality conditions
/// `g_j = λ·sign(β_j)` (active) and `|g_j| ≤ λ` (inactive), with
/// `g = Dᵀ(x − Dβ)`.
pub fn kkt_violation(atoms: &DMatrix<f64>, x: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let g = correlations(atoms, x, beta);
    g.iter()
        .zip(beta)
        .map(|(&gj, &bj)| {
            if bj > 0.0 {
                (gj - lambda).abs()
            } else if bj < 0.0 {
                (gj + lambda).abs()
            } else {
                (gj.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// `½‖x − Dβ‖² + λ‖β‖₁`
pub fn objective(atoms: &DMatrix<f64>, x: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let mut r = x.to_vec();
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (ri, &dv) in r.iter_mut().zip(atoms.column(j).iter()) {
                *ri -= b * dv;
            }
        }
    }
    0.5 * r.iter().map(|v| v * v).sum::<f64>() + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

fn polish(atoms: &DMatrix<f64>, x: &[f64], beta: &mut [f64], lambda: f64) {
    let sq: Vec<f64> = (0..atoms.ncols()).map(|j| atoms.column(j).norm_squared()).collect();
    let mut r = x.to_vec();
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (ri, &dv) in r.iter_mut().zip(atoms.column(j).iter()) {
                *ri -= b * dv;
            }
        }
    }
    for sweep in 0..MAX_POLISH_SWEEPS {
        for j in 0..atoms.ncols() {
            if sq[j] == 0.0 {
                continue;
            }
            let col = atoms.column(j);
            let rho: f64 = col.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() + sq[j] * beta[j];
            let new = soft(rho, lambda) / sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (ri, &dv) in r.iter_mut().zip(col.iter()) {
                    *ri -= delta * dv;
                }
                beta[j] = new;
            }
        }
        if sweep % 8 == 7 && kkt_violation(atoms, x, beta, lambda) < POLISH_TOL {
            break;
        }
    }
}

/// Solve `min_β ½‖x − Dβ‖² + λ‖β‖₁`, returning a dense coefficient vector.
pub fn lasso_lars(atoms: &DMatrix<f64>, x: &[f64], lambda: f64) -> Vec<f64> {
    let n_atoms = atoms.ncols();
    let mut beta = vec![0.0; n_atoms];
    if n_atoms == 0 || x.iter().all(|&v| v == 0.0) {
        return beta;
    }
    let lambda = lambda.max(0.0);
    let mut c = correlations(atoms, x, &beta);
    let (first, level0) = c
        .iter()
        .enumerate()
        .map(|(j, v)| (j, v.abs()))
        .fold((0, -1.0), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
    if level0 <= lambda {
        return beta;
    }
    let mut level = level0;
    let mut active = vec![first];
    let mut signs = vec![c[first].signum()];
    let mut excluded = vec![false; n_atoms];
    let mut in_active = vec![false; n_atoms];
    in_active[first] = true;
    let mut degenerate = false;
    let max_steps = 8 * (atoms.nrows() + 1) + n_atoms;

    for _ in 0..max_steps {
        let k = active.len();
        let gram = DMatrix::from_fn(k, k, |a, b| atoms.column(active[a]).dot(&atoms.column(active[b])));
        let Some(chol) = gram.cholesky() else {
            // newest atom is linearly dependent on the rest
            let j = active.pop().unwrap();
            signs.pop();
            in_active[j] = false;
            excluded[j] = true;
            degenerate = true;
            if active.is_empty() {
                break;
            }
            continue;
        };
        let w = chol.solve(&DVector::from_vec(signs.clone()));
        let mut u = DVector::zeros(atoms.nrows());
        for (idx, &j) in active.iter().enumerate() {
            u.axpy(w[idx], &atoms.column(j), 1.0);
        }

        let mut step = level - lambda;
        let mut event: Option<(bool, usize)> = None; // (is_join, index)
        for j in 0..n_atoms {
            if in_active[j] || excluded[j] {
                continue;
            }
            let a = atoms.column(j).dot(&u);
            for (num, den) in [(level - c[j], 1.0 - a), (level + c[j], 1.0 + a)] {
                if den > EPS {
                    let g = num / den;
                    if g > EPS && g < step {
                        step = g;
                        event = Some((true, j));
                    }
                }
            }
        }
        for (idx, &j) in active.iter().enumerate() {
            if w[idx] != 0.0 {
                let g = -beta[j] / w[idx];
                if g > EPS && g < step {
                    step = g;
                    event = Some((false, j));
                }
            }
        }

        for (idx, &j) in active.iter().enumerate() {
            beta[j] += step * w[idx];
        }
        level -= step;
        c = correlations(atoms, x, &beta);

        match event {
            None => break,
            Some((true, j)) => {
                active.push(j);
                signs.push(c[j].signum());
                in_active[j] = true;
            }
            Some((false, j)) => {
                let pos = active.iter().position(|&a| a == j).unwrap();
                active.remove(pos);
                signs.remove(pos);
                in_active[j] = false;
                beta[j] = 0.0;
            }
        }
        if active.is_empty() {
            break;
        }
    }

    if degenerate || kkt_violation(atoms, x, &beta, lambda) > POLISH_TOL {
        polish(atoms, x, &mut beta, lambda);
    }
    beta
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_threshold_gives_zero() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let beta = lasso_lars(&d, &[0.3, -0.2], 0.3);
        assert!(beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn single_atom_soft_threshold() {
        let d = DMatrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0]);
        let x = [1.2, 1.6, 0.0]; // 2·d
        let beta = lasso_lars(&d, &x, 0.5);
        assert!((beta[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn duplicate_atoms_stay_optimal() {
        let d = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let x = [2.0, 0.5];
        let beta = lasso_lars(&d, &x, 0.1);
        assert!(kkt_violation(&d, &x, &beta, 0.1) < 1e-9);
        assert!((beta[0] + beta[1] - 1.9).abs() < 1e-9);
    }

    #[test]
    fn overcomplete_kkt_holds() {
        let d = DMatrix::from_fn(4, 9, |r, c| (((r + 1) * (c + 3)) % 7) as f64 - 3.0);
        let mut d = d;
        for mut col in d.column_iter_mut() {
            let n = col.norm();
            col /= n;
        }
        let x = [0.4, -1.0, 2.0, 0.3];
        for lambda in [1.0, 0.1, 0.01, 1e-4] {
            let beta = lasso_lars(&d, &x, lambda);
            assert!(kkt_violation(&d, &x, &beta, lambda) < 1e-9, "lambda {lambda}");
        }
    }
}
