//! Cardinality-penalised QUBO construction, evaluation and exhaustive
//! minimisation.

use std::cmp::Ordering;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest problem enumerated exhaustively.
pub const MAX_EXHAUSTIVE: usize = 24;
pub const DEFAULT_PENALTY: f64 = 1e3;

/// Binary assignment of up to 64 variables; bit `j` of `bits` is `z_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bitstring {
    bits: u64,
    len: usize,
}

impl Bitstring {
    pub fn new(bits: u64, len: usize) -> Self {
        assert!(len <= 64);
        let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        Self { bits: bits & mask, len }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(0, len)
    }

    pub fn from_bools(z: &[bool]) -> Self {
        let bits = z.iter().enumerate().fold(0u64, |acc, (j, &b)| acc | ((b as u64) << j));
        Self::new(bits, z.len())
    }

    pub fn from_indices(len: usize, ones: &[usize]) -> Self {
        Self::new(ones.iter().fold(0u64, |acc, &j| acc | (1u64 << j)), len)
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, j: usize) -> bool {
        (self.bits >> j) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn ones(&self) -> Vec<usize> {
        (0..self.len).filter(|&j| self.get(j)).collect()
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|j| self.get(j)).collect()
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.len {
            f.write_str(if self.get(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Lexicographic on `z_0 z_1 …`.
impl Ord for Bitstring {
    fn cmp(&self, other: &Self) -> Ordering {
        for j in 0..self.len.min(other.len) {
            match self.get(j).cmp(&other.get(j)) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        self.len.cmp(&other.len)
    }
}

impl PartialOrd for Bitstring {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Which expansion of the cardinality objective to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuboForm {
    /// Exact expansion of `−Σ w_j z_j + μ(Σ z_j − k)²` with its offset.
    #[default]
    Exact,
    /// `−diag(w) + μ·11ᵀ`, no offset.
    DiagPlusOnes,
    /// `w·wᵀ + μ·I`, no offset.
    OuterPlusIdentity,
}

impl QuboForm {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact" => Some(Self::Exact),
            "diag-plus-ones" => Some(Self::DiagPlusOnes),
            "outer-plus-identity" => Some(Self::OuterPlusIdentity),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::DiagPlusOnes => "diag-plus-ones",
            Self::OuterPlusIdentity => "outer-plus-identity",
        }
    }
}

/// `E(z) = Σ_j Q_jj z_j + Σ_{i<j} 2·Q_ij z_i z_j + offset` with symmetric `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuboProblem {
    pub coeffs: DMatrix<f64>,
    pub offset: f64,
    pub budget: Option<usize>,
    pub penalty: Option<f64>,
}

impl QuboProblem {
    pub fn from_coeffs(coeffs: DMatrix<f64>, offset: f64) -> Result<Self> {
        if !coeffs.is_square() {
            return Err(Error::param("QUBO matrix must be square"));
        }
        let n = coeffs.nrows();
        for i in 0..n {
            for j in 0..i {
                if (coeffs[(i, j)] - coeffs[(j, i)]).abs() > 1e-12 {
                    return Err(Error::param(format!("QUBO matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self {
            coeffs,
            offset,
            budget: None,
            penalty: None,
        })
    }

    pub fn n(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn energy(&self, z: &Bitstring) -> Result<f64> {
        if z.len() != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: z.len(),
            });
        }
        Ok(self.energy_bits(z.bits()))
    }

    pub(crate) fn energy_bits(&self, bits: u64) -> f64 {
        let ones: Vec<usize> = (0..self.n()).filter(|&j| (bits >> j) & 1 == 1).collect();
        let mut e = self.offset;
        for (a, &i) in ones.iter().enumerate() {
            e += self.coeffs[(i, i)];
            for &j in &ones[a + 1..] {
                e += 2.0 * self.coeffs[(i, j)];
            }
        }
        e
    }

    /// Energy of every basis state, indexed by the bit pattern.
    pub fn all_energies(&self) -> Result<Vec<f64>> {
        let n = self.n();
        if n > MAX_EXHAUSTIVE {
            return Err(Error::TooLarge {
                n,
                limit: MAX_EXHAUSTIVE,
            });
        }
        let mut out = vec![0.0; 1usize << n];
        out[0] = self.offset;
        let mut partial = vec![0.0; 1usize << n.saturating_sub(1)];
        for j in 0..n {
            let half = 1usize << j;
            // partial[s] = Σ_{i ∈ s} Q_ij for subsets s of the lower j bits
            partial[0] = 0.0;
            for s in 1..half {
                let low = s.trailing_zeros() as usize;
                partial[s] = partial[s & (s - 1)] + self.coeffs[(j, low)];
            }
            let qjj = self.coeffs[(j, j)];
            for s in 0..half {
                out[half + s] = out[s] + qjj + 2.0 * partial[s];
            }
        }
        Ok(out)
    }

    /// QUBO export: `#n=<n> offset=<o>` then upper-triangle `i<TAB>j<TAB>value`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "#n={} offset={:e}", self.n(), self.offset).unwrap();
        for i in 0..self.n() {
            for j in i..self.n() {
                let v = self.coeffs[(i, j)];
                if v != 0.0 {
                    writeln!(out, "{i}\t{j}\t{v:e}").unwrap();
                }
            }
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut n = None;
        let mut offset = 0.0;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                for tok in h.split_whitespace() {
                    match tok.split_once('=') {
                        Some(("n", v)) => n = v.parse().ok(),
                        Some(("offset", v)) => {
                            offset = v.parse().map_err(|_| Error::parse(path, lineno + 1, "bad offset"))?
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || Error::parse(path, lineno + 1, "expected `i<TAB>j<TAB>value`");
            if f.len() != 3 {
                return Err(bad());
            }
            let i: usize = f[0].parse().map_err(|_| bad())?;
            let j: usize = f[1].parse().map_err(|_| bad())?;
            let v: f64 = f[2].parse().map_err(|_| bad())?;
            entries.push((i, j, v));
        }
        let n = n.ok_or_else(|| Error::parse(path, 1, "missing `#n=<n> offset=<o>` header"))?;
        let mut coeffs = DMatrix::zeros(n, n);
        for (i, j, v) in entries {
            if i >= n || j >= n {
                return Err(Error::param(format!("QUBO entry ({i}, {j}) outside n={n}")));
            }
            coeffs[(i, j)] = v;
            coeffs[(j, i)] = v;
        }
        Self::from_coeffs(coeffs, offset)
    }
}

/// Expand the cardinality objective for weights `w`, budget `k` and penalty
/// `μ` into QUBO form.
pub fn build_qubo(weights: &[f64], budget: usize, penalty: f64) -> Result<QuboProblem> {
    build_qubo_form(weights, budget, penalty, QuboForm::Exact)
}

pub fn build_qubo_form(weights: &[f64], budget: usize, penalty: f64, form: QuboForm) -> Result<QuboProblem> {
    let n = weights.len();
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(Error::param("penalty must be positive"));
    }
    if budget == 0 || budget > n {
        return Err(Error::param(format!("budget {budget} must lie in [1, {n}]")));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::param("weights must be finite"));
    }
    let k = budget as f64;
    let (coeffs, offset) = match form {
        QuboForm::Exact => (
            DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    -weights[i] + penalty * (1.0 - 2.0 * k)
                } else {
                    penalty
                }
            }),
            penalty * k * k,
        ),
        QuboForm::DiagPlusOnes => (
            DMatrix::from_fn(n, n, |i, j| if i == j { -weights[i] + penalty } else { penalty }),
            0.0,
        ),
        QuboForm::OuterPlusIdentity => (
            DMatrix::from_fn(n, n, |i, j| {
                weights[i] * weights[j] + if i == j { penalty } else { 0.0 }
            }),
            0.0,
        ),
    };
    Ok(QuboProblem {
        coeffs,
        offset,
        budget: Some(budget),
        penalty: Some(penalty),
    })
}

/// Exact minimiser over all `2^n` assignments; ties go to the
/// lexicographically smallest bitstring.
pub fn brute_force_minimum(problem: &QuboProblem) -> Result<(Bitstring, f64)> {
    let n = problem.n();
    let energies = problem.all_energies()?;
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = 1e-9 * min.abs().max(1.0);
    // recompute near-ties directly so the tie rule is not decided by rounding
    let mut best: Option<(Bitstring, f64)> = None;
    for (z, &e) in energies.iter().enumerate() {
        if e > min + slack {
            continue;
        }
        let b = Bitstring::new(z as u64, n);
        let exact = problem.energy_bits(z as u64);
        best = match best {
            None => Some((b, exact)),
            Some((bb, be)) => {
                if exact < be || (exact == be && b < bb) {
                    Some((b, exact))
                } else {
                    Some((bb, be))
                }
            }
        };
    }
    Ok(best.expect("at least one assignment"))
}

/// `−Σ w_j z_j + μ(Σ z_j − k)²` evaluated term by term.
pub fn cardinality_energy(weights: &[f64], budget: usize, penalty: f64, z: &Bitstring) -> f64 {
    let lin: f64 = (0..weights.len()).filter(|&j| z.get(j)).map(|j| weights[j]).sum();
    let excess = z.count_ones() as f64 - budget as f64;
    -lin + penalty * excess * excess
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_selection_energy_is_offset() {
        let q = build_qubo(&[0.0; 4], 2, 10.0).unwrap();
        assert_eq!(q.energy(&Bitstring::zeros(4)).unwrap(), 40.0);
    }

    #[test]
    fn small_case_matches_formula() {
        let q = build_qubo(&[1.0, 2.0, 3.0], 1, 10.0).unwrap();
        let z = Bitstring::from_bools(&[false, false, true]);
        assert!((q.energy(&z).unwrap() + 3.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters() {
        assert!(build_qubo(&[1.0], 1, 0.0).is_err());
        assert!(build_qubo(&[1.0], 2, 1.0).is_err());
        assert!(build_qubo(&[1.0, 2.0], 0, 1.0).is_err());
    }

    #[test]
    fn length_mismatch() {
        let q = build_qubo(&[1.0, 2.0], 1, 10.0).unwrap();
        assert!(q.energy(&Bitstring::zeros(3)).is_err());
    }

    #[test]
    fn single_bit_at_argmax() {
        let q = build_qubo(&[0.3, 0.9, 0.1, 0.5], 1, 1e3).unwrap();
        let (z, _) = brute_force_minimum(&q).unwrap();
        assert_eq!(z.ones(), vec![1]);
    }

    #[test]
    fn exhaustive_guard() {
        let q = build_qubo(&vec![0.1; 25], 2, 1e3).unwrap();
        assert!(matches!(brute_force_minimum(&q), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn all_energies_match_direct() {
        let w = [0.3, -0.2, 0.8, 0.1, 0.5];
        for form in [QuboForm::Exact, QuboForm::DiagPlusOnes, QuboForm::OuterPlusIdentity] {
            let q = build_qubo_form(&w, 2, 7.0, form).unwrap();
            let all = q.all_energies().unwrap();
            for (z, e) in all.iter().enumerate() {
                assert!((e - q.energy_bits(z as u64)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lexicographic_order() {
        let a = Bitstring::from_bools(&[false, true, true]);
        let b = Bitstring::from_bools(&[true, false, false]);
        assert!(a < b);
        assert_eq!(a.to_string(), "011");
    }

    #[test]
    fn file_roundtrip() {
        let q = build_qubo(&[0.25, 1.5, -0.125], 2, 100.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.tsv");
        q.write(&p).unwrap();
        let back = QuboProblem::read(&p).unwrap();
        assert_eq!(back.coeffs, q.coeffs);
        assert_eq!(back.offset, q.offset);
    }
}
