//! Statevector simulation of layered QAOA circuits over a diagonal cost
//! Hamiltonian, with shot sampling, SPSA angle optimisation and mask
//! extraction.

mod extract;
mod spsa;
mod trig;

pub type Complex64 = nalgebra::Complex<f64>;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::qubo::{Bitstring, QuboProblem, MAX_EXHAUSTIVE};
use crate::seed;

pub use extract::{extract_mask, top_k_mask, Extraction};
pub use spsa::{spsa_optimize, SpsaGains, SpsaResult};

/// Amplitudes stored as separate real and imaginary arrays; index bit `j`
/// is qubit `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Statevector {
    /// `|0…0⟩`
    pub fn zero(n: usize) -> Self {
        let mut re = vec![0.0; 1 << n];
        re[0] = 1.0;
        Self {
            n,
            re,
            im: vec![0.0; 1 << n],
        }
    }

    /// Hadamard on every qubit of `|0…0⟩`.
    pub fn uniform(n: usize) -> Self {
        let dim = 1usize << n;
        let a = 1.0 / (dim as f64).sqrt();
        Self {
            n,
            re: vec![a; dim],
            im: vec![0.0; dim],
        }
    }

    pub fn basis(n: usize, z: usize) -> Self {
        let mut s = Self {
            n,
            re: vec![0.0; 1 << n],
            im: vec![0.0; 1 << n],
        };
        s.re[z] = 1.0;
        s
    }

    pub fn from_amplitudes(amps: &[Complex64]) -> Result<Self> {
        let dim = amps.len();
        if !dim.is_power_of_two() {
            return Err(Error::param("amplitude count must be a power of two"));
        }
        Ok(Self {
            n: dim.trailing_zeros() as usize,
            re: amps.iter().map(|a| a.re).collect(),
            im: amps.iter().map(|a| a.im).collect(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.re.len()
    }

    pub fn amplitude(&self, z: usize) -> Complex64 {
        Complex64::new(self.re[z], self.im[z])
    }

    pub fn amplitudes(&self) -> Vec<Complex64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(r, i)| r * r + i * i).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(r, i)| r * r + i * i).sum()
    }
}

/// `E(z)` for every basis state.
#[derive(Debug, Clone, PartialEq)]
pub struct CostDiagonal {
    pub energies: Vec<f64>,
    n: usize,
}

impl CostDiagonal {
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        if !energies.len().is_power_of_two() {
            return Err(Error::param("diagonal length must be a power of two"));
        }
        let n = energies.len().trailing_zeros() as usize;
        Ok(Self { energies, n })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn min(&self) -> f64 {
        self.energies.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.energies.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Affine map onto `[0, 1]`; returns the map's `(shift, scale)` so that
    /// `original = shift + scale · scaled`.
    pub fn rescaled(&self) -> (Self, f64, f64) {
        let lo = self.min();
        let span = self.max() - lo;
        let scale = if span > 0.0 { span } else { 1.0 };
        let energies = self.energies.iter().map(|e| (e - lo) / scale).collect();
        (Self { energies, n: self.n }, lo, scale)
    }
}

pub fn precompute_diagonal(problem: &QuboProblem) -> Result<CostDiagonal> {
    let n = problem.n();
    if n > MAX_EXHAUSTIVE {
        return Err(Error::TooLarge {
            n,
            limit: MAX_EXHAUSTIVE,
        });
    }
    CostDiagonal::new(problem.all_energies()?)
}

fn check_dims(state: &Statevector, diag: &CostDiagonal) {
    assert_eq!(state.dim(), diag.energies.len(), "state and diagonal sizes differ");
}

/// `a_z ← a_z · exp(−iγE(z))`
pub fn apply_cost(state: &mut Statevector, diag: &CostDiagonal, gamma: f64) {
    check_dims(state, diag);
    if gamma != 0.0 {
        phase_span(&mut state.re, &mut state.im, &diag.energies, gamma);
    }
}

#[inline(always)]
fn phase_span(re: &mut [f64], im: &mut [f64], energies: &[f64], gamma: f64) {
    for ((re, im), e) in re
        .chunks_mut(CHUNK)
        .zip(im.chunks_mut(CHUNK))
        .zip(energies.chunks(CHUNK))
    {
        let mut sin = [0.0; CHUNK];
        let mut cos = [0.0; CHUNK];
        for k in 0..e.len() {
            (sin[k], cos[k]) = trig::sin_cos(gamma * e[k]);
        }
        for k in 0..e.len() {
            let (r, i) = (re[k], im[k]);
            re[k] = r * cos[k] + i * sin[k];
            im[k] = i * cos[k] - r * sin[k];
        }
    }
}

const CHUNK: usize = 256;

const BLOCK_BITS: usize = 13;

#[inline(always)]
fn rotate_pairs(are: &mut [f64], aim: &mut [f64], bre: &mut [f64], bim: &mut [f64], c: f64, s: f64) {
    let len = are.len();
    let (aim, bre, bim) = (&mut aim[..len], &mut bre[..len], &mut bim[..len]);
    for k in 0..len {
        let (ar, ai, br, bi) = (are[k], aim[k], bre[k], bim[k]);
        are[k] = c * ar + s * bi;
        aim[k] = c * ai - s * br;
        bre[k] = c * br + s * ai;
        bim[k] = c * bi - s * ar;
    }
}

#[inline(always)]
fn apply_rx_range(re: &mut [f64], im: &mut [f64], qubit: usize, c: f64, s: f64) {
    let stride = 1usize << qubit;
    if stride == 1 {
        for (r, i) in re.chunks_exact_mut(2).zip(im.chunks_exact_mut(2)) {
            let (ar, ai, br, bi) = (r[0], i[0], r[1], i[1]);
            r[0] = c * ar + s * bi;
            i[0] = c * ai - s * br;
            r[1] = c * br + s * ai;
            i[1] = c * bi - s * ar;
        }
        return;
    }
    for (r, i) in re.chunks_exact_mut(2 * stride).zip(im.chunks_exact_mut(2 * stride)) {
        let (ra, rb) = r.split_at_mut(stride);
        let (ia, ib) = i.split_at_mut(stride);
        rotate_pairs(ra, ia, rb, ib, c, s);
    }
}

#[inline(always)]
fn apply_rx_pair(re: &mut [f64], im: &mut [f64], qubit: usize, c: f64, s: f64) {
    let s1 = 1usize << qubit;
    let (cc, cs, ss) = (c * c, c * s, s * s);
    for (r, i) in re.chunks_exact_mut(4 * s1).zip(im.chunks_exact_mut(4 * s1)) {
        let (r01, r23) = r.split_at_mut(2 * s1);
        let (i01, i23) = i.split_at_mut(2 * s1);
        let (r0, r1) = r01.split_at_mut(s1);
        let (r2, r3) = r23.split_at_mut(s1);
        let (i0, i1) = i01.split_at_mut(s1);
        let (i2, i3) = i23.split_at_mut(s1);
        let (r1, r2, r3) = (&mut r1[..s1], &mut r2[..s1], &mut r3[..s1]);
        let (i0, i1, i2, i3) = (&mut i0[..s1], &mut i1[..s1], &mut i2[..s1], &mut i3[..s1]);
        for k in 0..s1 {
            let (a0, b0, a1, b1) = (r0[k], i0[k], r1[k], i1[k]);
            let (a2, b2, a3, b3) = (r2[k], i2[k], r3[k], i3[k]);
            // (c − isX) ⊗ (c − isX): diagonal c², single flips −ics, double flip −s²
            r0[k] = cc * a0 + cs * (b1 + b2) - ss * a3;
            i0[k] = cc * b0 - cs * (a1 + a2) - ss * b3;
            r1[k] = cc * a1 + cs * (b0 + b3) - ss * a2;
            i1[k] = cc * b1 - cs * (a0 + a3) - ss * b2;
            r2[k] = cc * a2 + cs * (b0 + b3) - ss * a1;
            i2[k] = cc * b2 - cs * (a0 + a3) - ss * b1;
            r3[k] = cc * a3 + cs * (b1 + b2) - ss * a0;
            i3[k] = cc * b3 - cs * (a1 + a2) - ss * b0;
        }
    }
}

#[inline(always)]
fn apply_rx_span(re: &mut [f64], im: &mut [f64], from: usize, to: usize, c: f64, s: f64) {
    let mut q = from;
    if q == 0 && to > 0 {
        apply_rx_range(re, im, 0, c, s);
        q = 1;
    }
    while q + 1 < to {
        apply_rx_pair(re, im, q, c, s);
        q += 2;
    }
    if q < to {
        apply_rx_range(re, im, q, c, s);
    }
}

/// `exp(−iβX)` on every qubit.
pub fn apply_mixer(state: &mut Statevector, beta: f64) {
    if beta == 0.0 {
        return;
    }
    let (s, c) = beta.sin_cos();
    let n = state.n;
    let low = n.min(BLOCK_BITS);
    let block = 1usize << low;
    for (r, i) in state.re.chunks_exact_mut(block).zip(state.im.chunks_exact_mut(block)) {
        apply_rx_span(r, i, 0, low, c, s);
    }
    apply_rx_span(&mut state.re, &mut state.im, low, n, c, s);
}

/// Cost then mixer, sharing one cache-blocked sweep over the amplitudes.
pub fn apply_layer(state: &mut Statevector, diag: &CostDiagonal, gamma: f64, beta: f64) {
    check_dims(state, diag);
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        unsafe { layer_avx2(state, diag, gamma, beta) };
        return;
    }
    layer_body(state, diag, gamma, beta);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn layer_avx2(state: &mut Statevector, diag: &CostDiagonal, gamma: f64, beta: f64) {
    layer_body(state, diag, gamma, beta);
}

#[inline(always)]
fn layer_body(state: &mut Statevector, diag: &CostDiagonal, gamma: f64, beta: f64) {
    let (s, c) = beta.sin_cos();
    let n = state.n;
    let low = n.min(BLOCK_BITS);
    let block = 1usize << low;
    for ((r, i), e) in state
        .re
        .chunks_exact_mut(block)
        .zip(state.im.chunks_exact_mut(block))
        .zip(diag.energies.chunks_exact(block))
    {
        if gamma != 0.0 {
            phase_span(r, i, e, gamma);
        }
        if beta != 0.0 {
            apply_rx_span(r, i, 0, low, c, s);
        }
    }
    if beta != 0.0 && n > low {
        high_qubits(state, low, c, s);
    }
}

/// Rotations on qubits `low..n` in one sweep: for each run of `chunk`
/// consecutive low indices, gather the `2^(n−low)` strided copies into a
/// scratch block, rotate there, scatter back.
#[inline(always)]
fn high_qubits(state: &mut Statevector, low: usize, c: f64, s: f64) {
    let high = state.n - low;
    let combos = 1usize << high;
    let chunk_bits = low.saturating_sub(high).max(3).min(low);
    let chunk = 1usize << chunk_bits;
    let mut sr = vec![0.0; combos * chunk];
    let mut si = vec![0.0; combos * chunk];
    for base in (0..1usize << low).step_by(chunk) {
        for m in 0..combos {
            let at = (m << low) | base;
            sr[m * chunk..(m + 1) * chunk].copy_from_slice(&state.re[at..at + chunk]);
            si[m * chunk..(m + 1) * chunk].copy_from_slice(&state.im[at..at + chunk]);
        }
        apply_rx_span(&mut sr, &mut si, chunk_bits, chunk_bits + high, c, s);
        for m in 0..combos {
            let at = (m << low) | base;
            state.re[at..at + chunk].copy_from_slice(&sr[m * chunk..(m + 1) * chunk]);
            state.im[at..at + chunk].copy_from_slice(&si[m * chunk..(m + 1) * chunk]);
        }
    }
}

/// Depth-`p` angles.
#[derive(Debug, Clone, PartialEq)]
pub struct QaoaParams {
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl QaoaParams {
    pub fn new(gammas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if gammas.len() != betas.len() || gammas.is_empty() {
            return Err(Error::param("need the same positive number of gammas and betas"));
        }
        if gammas.iter().chain(&betas).any(|v| !v.is_finite()) {
            return Err(Error::param("angles must be finite"));
        }
        Ok(Self { gammas, betas })
    }

    pub fn zeros(depth: usize) -> Self {
        Self {
            gammas: vec![0.0; depth],
            betas: vec![0.0; depth],
        }
    }

    /// Angles drawn uniformly from `(0, 0.1)`.
    pub fn random_small(depth: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let mut draw = || rng.random_range(f64::EPSILON..0.1);
        let gammas = (0..depth).map(|_| draw()).collect();
        let betas = (0..depth).map(|_| draw()).collect();
        Self { gammas, betas }
    }

    pub fn depth(&self) -> usize {
        self.gammas.len()
    }

    pub(crate) fn to_vec(&self) -> Vec<f64> {
        self.gammas.iter().chain(&self.betas).copied().collect()
    }

    pub(crate) fn from_slice(v: &[f64]) -> Self {
        let p = v.len() / 2;
        Self {
            gammas: v[..p].to_vec(),
            betas: v[p..].to_vec(),
        }
    }
}

/// Uniform superposition followed by `p` cost/mixer layer pairs.
pub fn run_circuit(diag: &CostDiagonal, params: &QaoaParams) -> Statevector {
    let mut state = Statevector::uniform(diag.n_qubits());
    for (&g, &b) in params.gammas.iter().zip(&params.betas) {
        apply_layer(&mut state, diag, g, b);
    }
    state
}

/// `Σ_z |a_z|² E(z)`
pub fn expectation(state: &Statevector, diag: &CostDiagonal) -> f64 {
    check_dims(state, diag);
    state
        .re
        .iter()
        .zip(&state.im)
        .zip(&diag.energies)
        .map(|((r, i), e)| (r * r + i * i) * e)
        .sum()
}

/// Draw `shots` basis states i.i.d. from `|a_z|²`.
pub fn sample(state: &Statevector, shots: usize, seed: u64) -> Vec<Bitstring> {
    let total = state.norm_sqr();
    let mut rng = seed::rng(seed);
    let mut draws: Vec<(f64, usize)> = (0..shots).map(|s| (rng.random::<f64>() * total, s)).collect();
    draws.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = vec![Bitstring::zeros(state.n); shots];
    let mut acc = 0.0;
    let mut z = 0;
    let last = state.dim() - 1;
    for (u, slot) in draws {
        while z < last {
            let next = acc + state.re[z] * state.re[z] + state.im[z] * state.im[z];
            if next > u {
                break;
            }
            acc = next;
            z += 1;
        }
        out[slot] = Bitstring::new(z as u64, state.n);
    }
    out
}

/// Settings for one QAOA solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QaoaConfig {
    pub depth: usize,
    /// Shots per objective evaluation.
    pub shots: usize,
    pub iterations: usize,
    /// Shots drawn from the optimised state for mask extraction.
    pub final_shots: usize,
    /// Also offer every shot measured during optimisation to extraction.
    pub pool_samples: bool,
    pub gains: SpsaGains,
}

impl Default for QaoaConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            shots: 128,
            iterations: 150,
            final_shots: 1024,
            pool_samples: true,
            gains: SpsaGains::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QaoaOutcome {
    pub mask: Bitstring,
    pub fallback: bool,
    pub params: QaoaParams,
    /// Best exact expectation so far, in problem units, one entry per SPSA
    /// iteration (entry 0 is the initial angles).
    pub trace: Vec<f64>,
    pub best_expectation: f64,
    pub mask_energy: f64,
}

/// Optimise angles on the `[0, 1]`-rescaled diagonal, sample the best state
/// and extract a cardinality-feasible mask.
pub fn solve(
    problem: &QuboProblem,
    weights: &[f64],
    budget: usize,
    config: &QaoaConfig,
    seed: u64,
) -> Result<QaoaOutcome> {
    if weights.len() != problem.n() {
        return Err(Error::Dimension {
            expected: problem.n(),
            got: weights.len(),
        });
    }
    if config.depth == 0 || config.shots == 0 || config.final_shots == 0 {
        return Err(Error::param("depth and shot counts must be positive"));
    }
    let diag = precompute_diagonal(problem)?;
    let (scaled, shift, scale) = diag.rescaled();
    let init = QaoaParams::random_small(config.depth, seed::derive(seed, &[0]));
    let res = spsa_optimize(
        &scaled,
        &init,
        config.iterations,
        config.shots,
        config.gains,
        seed::derive(seed, &[1]),
    );
    let state = run_circuit(&scaled, &res.params);
    let mut shots = sample(&state, config.final_shots, seed::derive(seed, &[2]));
    if config.pool_samples {
        shots.extend_from_slice(&res.samples);
    }
    let ex = extract_mask(&shots, problem, weights, budget)?;
    Ok(QaoaOutcome {
        mask: ex.mask,
        fallback: ex.fallback,
        params: res.params,
        trace: res.trace.iter().map(|e| shift + scale * e).collect(),
        best_expectation: shift + scale * res.best_value,
        mask_energy: ex.energy,
    })
}
