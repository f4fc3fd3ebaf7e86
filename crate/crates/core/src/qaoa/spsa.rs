use rand::Rng as _;

use super::{expectation, run_circuit, sample, CostDiagonal, QaoaParams};
use crate::qubo::Bitstring;
use crate::seed;

/// Step-size schedules `a_t = a/(t+1+A)^α` and `c_t = c/(t+1)^γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpsaGains {
    pub a: f64,
    pub c: f64,
    /// `A` as a fraction of the iteration budget.
    pub stability_fraction: f64,
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for SpsaGains {
    fn default() -> Self {
        Self {
            a: 0.2,
            c: 0.1,
            stability_fraction: 0.1,
            alpha: 0.602,
            gamma: 0.101,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpsaResult {
    /// Angles with the lowest exact expectation seen.
    pub params: QaoaParams,
    pub best_value: f64,
    /// Best-so-far exact expectation; entry 0 is the starting point.
    pub trace: Vec<f64>,
    pub circuit_runs: usize,
    /// Every shot measured while estimating the objective.
    pub samples: Vec<Bitstring>,
}

fn shot_estimate(diag: &CostDiagonal, params: &QaoaParams, shots: usize, seed: u64, seen: &mut Vec<Bitstring>) -> f64 {
    let state = run_circuit(diag, params);
    let draws = sample(&state, shots, seed);
    let mean = draws.iter().map(|b| diag.energies[b.bits() as usize]).sum::<f64>() / shots as f64;
    seen.extend(draws);
    mean
}

/// Simultaneous-perturbation descent on the shot-estimated expectation,
/// keeping the iterate with the best exact expectation.
pub fn spsa_optimize(
    diag: &CostDiagonal,
    init: &QaoaParams,
    iterations: usize,
    shots: usize,
    gains: SpsaGains,
    seed: u64,
) -> SpsaResult {
    let mut rng = seed::rng(seed);
    let mut theta = init.to_vec();
    let mut best = init.clone();
    let mut best_value = expectation(&run_circuit(diag, init), diag);
    let mut trace = Vec::with_capacity(iterations + 1);
    trace.push(best_value);
    let mut runs = 1;
    let mut seen = Vec::with_capacity(2 * iterations * shots);
    let stab = gains.stability_fraction * iterations as f64;
    for t in 0..iterations {
        let k = (t + 1) as f64;
        let a_t = gains.a / (k + stab).powf(gains.alpha);
        let c_t = gains.c / k.powf(gains.gamma);
        let delta: Vec<f64> = theta
            .iter()
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let plus: Vec<f64> = theta.iter().zip(&delta).map(|(x, d)| x + c_t * d).collect();
        let minus: Vec<f64> = theta.iter().zip(&delta).map(|(x, d)| x - c_t * d).collect();
        let yp = shot_estimate(diag, &QaoaParams::from_slice(&plus), shots, rng.random(), &mut seen);
        let ym = shot_estimate(diag, &QaoaParams::from_slice(&minus), shots, rng.random(), &mut seen);
        let g = (yp - ym) / (2.0 * c_t);
        for (x, d) in theta.iter_mut().zip(&delta) {
            *x -= a_t * g * d;
        }
        let cur = QaoaParams::from_slice(&theta);
        let value = expectation(&run_circuit(diag, &cur), diag);
        runs += 3;
        if value < best_value {
            best_value = value;
            best = cur;
        }
        trace.push(best_value);
    }
    SpsaResult {
        params: best,
        best_value,
        trace,
        circuit_runs: runs,
        samples: seen,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_nonincreasing_and_starts_at_init() {
        let diag = CostDiagonal::new((0..16).map(|z| ((z * 7) % 11) as f64 / 10.0).collect()).unwrap();
        let init = QaoaParams::random_small(2, 3);
        let res = spsa_optimize(&diag, &init, 30, 64, SpsaGains::default(), 9);
        assert_eq!(res.trace.len(), 31);
        assert_eq!(res.trace[0], expectation(&run_circuit(&diag, &init), &diag));
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*res.trace.last().unwrap(), res.best_value);
    }

    #[test]
    fn zero_iterations_returns_init() {
        let diag = CostDiagonal::new(vec![0.0, 1.0]).unwrap();
        let init = QaoaParams::random_small(1, 0);
        let res = spsa_optimize(&diag, &init, 0, 8, SpsaGains::default(), 0);
        assert_eq!(res.params, init);
        assert_eq!(res.trace.len(), 1);
    }
}
