//! Hamiltonians as magnitude-ordered Pauli sums with a deterministic/random
//! cut, plus file I/O and the power-law Heisenberg chain generator.
//!
//! Terms are stored by `|coeff|` descending, so the first `n_d` terms (the
//! largest) form the deterministic part `H0` and the rest form the sampled
//! part `H1`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pauli::{commutator, spectral_norm, HamiltonianTerm, PauliString, TermSum};

/// Default ingestion floor on `|coeff|`.
pub const DEFAULT_COEFF_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedHamiltonian {
    n_qubits: usize,
    terms: Vec<HamiltonianTerm>,
    n_d: usize,
    identity_offset: f64,
}

impl PartitionedHamiltonian {
    /// Merges duplicate strings, drops terms with `|coeff| < coeff_floor`
    /// (and exact zeros), and sorts by magnitude descending with ties broken
    /// by Pauli-string order. Identity terms are summed into
    /// [`identity_offset`](Self::identity_offset) instead of being evolved.
    pub fn from_terms(
        n_qubits: usize,
        terms: impl IntoIterator<Item = HamiltonianTerm>,
        coeff_floor: f64,
    ) -> Result<Self> {
        let mut merged: BTreeMap<PauliString, f64> = BTreeMap::new();
        let mut identity_offset = 0.0;
        for t in terms {
            if t.n_qubits() != n_qubits {
                return Err(Error::QubitMismatch(n_qubits, t.n_qubits()));
            }
            if !t.coeff.is_finite() {
                return Err(Error::invalid(format!("non-finite coefficient on {}", t.pauli)));
            }
            if t.pauli.is_identity() {
                identity_offset += t.coeff;
            } else {
                *merged.entry(t.pauli).or_insert(0.0) += t.coeff;
            }
        }
        let mut kept: Vec<HamiltonianTerm> = merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0 && c.abs() >= coeff_floor)
            .map(|(p, c)| HamiltonianTerm::new(c, p))
            .collect();
        // stable sort over lexicographic input keeps ties in string order
        kept.sort_by(|a, b| b.coeff.abs().total_cmp(&a.coeff.abs()));
        if kept.is_empty() {
            return Err(Error::EmptyHamiltonian);
        }
        Ok(PartitionedHamiltonian { n_qubits, terms: kept, n_d: 0, identity_offset })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Total term count `L`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[HamiltonianTerm] {
        &self.terms
    }

    pub fn n_d(&self) -> usize {
        self.n_d
    }

    pub fn n_r(&self) -> usize {
        self.terms.len() - self.n_d
    }

    /// Summed coefficient of identity terms, a global phase not evolved.
    pub fn identity_offset(&self) -> f64 {
        self.identity_offset
    }

    pub fn set_n_d(&mut self, n_d: usize) -> Result<()> {
        self.check_n_d(n_d)?;
        self.n_d = n_d;
        Ok(())
    }

    pub fn with_n_d(mut self, n_d: usize) -> Result<Self> {
        self.set_n_d(n_d)?;
        Ok(self)
    }

    fn check_n_d(&self, n_d: usize) -> Result<()> {
        if n_d > self.terms.len() {
            return Err(Error::invalid(format!(
                "n_d = {n_d} exceeds the term count {}",
                self.terms.len()
            )));
        }
        Ok(())
    }

    /// The `n_d` largest terms.
    pub fn h0_terms(&self) -> &[HamiltonianTerm] {
        &self.terms[..self.n_d]
    }

    pub fn h1_terms(&self) -> &[HamiltonianTerm] {
        &self.terms[self.n_d..]
    }

    pub fn full_sum(&self) -> Result<TermSum> {
        TermSum::from_terms(self.n_qubits, &self.terms)
    }

    /// Serializes in the line-oriented Hamiltonian file format. Coefficients
    /// use the shortest representation that parses back to the same `f64`.
    pub fn to_file_string(&self) -> String {
        let mut out = format!("qubits {}\n", self.n_qubits);
        if self.identity_offset != 0.0 {
            let _ = writeln!(out, "{}", self.identity_offset);
        }
        for t in &self.terms {
            let _ = writeln!(out, "{} {}", t.coeff, t.pauli);
        }
        out
    }
}

/// Parses the Hamiltonian file format:
///
/// ```text
/// qubits 3
/// # comment
/// 0.0823 X0 Y1 Z2
/// -0.5              # identity multiple, reported as a global phase
/// ```
pub fn parse_hamiltonian(text: &str, coeff_floor: f64) -> Result<PartitionedHamiltonian> {
    let mut n_qubits: Option<usize> = None;
    let mut terms = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { line: line_no, msg };
        let Some(n) = n_qubits else {
            let mut it = line.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some("qubits"), Some(v), None) => {
                    let n: usize = v
                        .parse()
                        .map_err(|_| perr(format!("bad qubit count `{v}`")))?;
                    PauliString::identity(n).map_err(|e| perr(e.to_string()))?;
                    n_qubits = Some(n);
                    continue;
                }
                _ => return Err(perr("expected `qubits N` header".into())),
            }
        };
        let (coeff_str, ops) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let coeff: f64 = coeff_str
            .parse()
            .map_err(|_| perr(format!("bad coefficient `{coeff_str}`")))?;
        let pauli = PauliString::parse_sparse(n, ops).map_err(|e| match e {
            Error::QubitOutOfRange { .. } => e,
            other => perr(other.to_string()),
        })?;
        if pauli.is_identity() {
            log::info!("line {line_no}: identity term {coeff} kept as a global phase");
        }
        terms.push(HamiltonianTerm::new(coeff, pauli));
    }
    let n = n_qubits.ok_or_else(|| Error::Parse { line: 0, msg: "missing `qubits N` header".into() })?;
    PartitionedHamiltonian::from_terms(n, terms, coeff_floor)
}

pub fn load_hamiltonian(path: impl AsRef<Path>, coeff_floor: f64) -> Result<PartitionedHamiltonian> {
    let text = std::fs::read_to_string(path)?;
    parse_hamiltonian(&text, coeff_floor)
}

/// Power-law Heisenberg chain: `1/|j-i|^4 (X_i X_j + Y_i Y_j + Z_i Z_j)` for
/// every pair plus fields `B_i Z_i` with `B_i ~ U[-1, 1]` drawn from
/// `field_seed`. Has `(3n^2 - n)/2` terms.
pub fn heisenberg_chain(n: usize, field_seed: u64) -> Result<PartitionedHamiltonian> {
    use crate::pauli::Pauli;
    if n < 2 {
        return Err(Error::invalid(format!("chain length must be at least 2, got {n}")));
    }
    let mut terms = Vec::with_capacity((3 * n * n - n) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let c = 1.0 / ((j - i) as f64).powi(4);
            for l in [Pauli::X, Pauli::Y, Pauli::Z] {
                terms.push(HamiltonianTerm::new(c, PauliString::from_sparse(n, &[(i, l), (j, l)])?));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(field_seed);
    for i in 0..n {
        let b: f64 = rng.random_range(-1.0..=1.0);
        terms.push(HamiltonianTerm::new(b, PauliString::from_sparse(n, &[(i, Pauli::Z)])?));
    }
    PartitionedHamiltonian::from_terms(n, terms, 0.0)
}

/// Splits at `n_d`: `H0` as a sum of the largest terms, `H1` as a term list.
pub fn partition(
    h: &PartitionedHamiltonian,
    n_d: usize,
) -> Result<(TermSum, Vec<HamiltonianTerm>)> {
    h.check_n_d(n_d)?;
    let h0 = TermSum::from_terms(h.n_qubits, &h.terms[..n_d])?;
    Ok((h0, h.terms[n_d..].to_vec()))
}

/// `[A, B]` for two Pauli sums, assembled term by term.
pub fn sum_commutator(a: &TermSum, b: &TermSum) -> Result<TermSum> {
    if a.n_qubits() != b.n_qubits() {
        return Err(Error::QubitMismatch(a.n_qubits(), b.n_qubits()));
    }
    let mut out = TermSum::new(a.n_qubits());
    for (p, ca) in a.iter() {
        for (q, cb) in b.iter() {
            if !p.commutes(q)? {
                let (phase, r) = p.multiply(q)?;
                out.add_term(r, ca * cb * phase.to_complex() * 2.0);
            }
        }
    }
    Ok(out)
}

/// `||[H0, H1]||`; zero when either side is empty.
pub fn commutator_norm(h0: &TermSum, h1: &TermSum) -> Result<f64> {
    if h0.is_empty() || h1.is_empty() {
        return Ok(0.0);
    }
    spectral_norm(&sum_commutator(h0, h1)?)
}

/// Second-order splitting operator `Q` of one hybrid step.
///
/// With `split_h0`, `H0` is applied as the ordered product
/// `exp(-i dt h_0) ... exp(-i dt h_{n_d-1})` and `Q` gathers every ordered
/// pair of that product: `[H0, H1] + sum_{a<b<n_d} [h_a, h_b]`. Without it,
/// `H0` is exponentiated exactly and only `[H0, H1]` remains. The one-step
/// error is `-(dt^2 / 2) Q psi + O(dt^3)`.
pub fn bch_operator(h: &PartitionedHamiltonian, n_d: usize, split_h0: bool) -> Result<TermSum> {
    let (h0, h1) = partition(h, n_d)?;
    let h1 = TermSum::from_terms(h.n_qubits, &h1)?;
    let mut q = sum_commutator(&h0, &h1)?;
    if split_h0 {
        let d = &h.terms[..n_d];
        for a in 0..d.len() {
            for b in a + 1..d.len() {
                q.add_assign(&commutator(&d[a], &d[b])?)?;
            }
        }
    }
    Ok(q)
}

/// `C = ||Q^2|| / 4` for a first-order split of `H0`.
pub fn bch_constant(h: &PartitionedHamiltonian, n_d: usize) -> Result<f64> {
    bch_constant_with(h, n_d, true)
}

pub fn bch_constant_with(h: &PartitionedHamiltonian, n_d: usize, split_h0: bool) -> Result<f64> {
    let q = bch_operator(h, n_d, split_h0)?;
    if q.is_empty() {
        return Ok(0.0);
    }
    let mut q2 = q.mul(&q)?;
    q2.prune(0.0);
    // Q is anti-Hermitian, so Q^2 is Hermitian up to rounding in the imaginary parts
    let q2 = q2.real_part();
    Ok(spectral_norm(&q2)? / 4.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const TOY: &str = "qubits 2\n0.5 Z1\n0.3 X0 X1\n";

    #[test]
    fn load_sorts_by_magnitude() {
        let h = parse_hamiltonian("qubits 2\n0.3 X0 X1\n0.5 Z1\n", 0.0).unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(h.terms()[0].coeff, 0.5);
        assert_eq!(h.terms()[0].pauli.to_string(), "Z1");
        assert_eq!(h.terms()[1].pauli.to_string(), "X0 X1");
        assert_eq!(h.n_d(), 0);
    }

    #[test]
    fn load_applies_floor() {
        let h = parse_hamiltonian(TOY, 0.4).unwrap();
        assert_eq!(h.len(), 1);
        assert!(matches!(parse_hamiltonian(TOY, 0.6), Err(Error::EmptyHamiltonian)));
    }

    #[test]
    fn load_merges_before_filtering() {
        let h = parse_hamiltonian("qubits 1\n0.2 Z0\n0.2 Z0\n", 0.3).unwrap();
        assert_eq!(h.len(), 1);
        assert_relative_eq!(h.terms()[0].coeff, 0.4);
    }

    #[test]
    fn load_handles_comments_identity_and_errors() {
        let h = parse_hamiltonian("# header\nqubits 2\n\n-1.25\n0.5 Z1 # field\n", 0.0).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h.identity_offset(), -1.25);

        match parse_hamiltonian("qubits 2\n0.5 Z1\nabc X0\n", 0.0) {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_hamiltonian("qubits 2\n0.5 Z2\n", 0.0),
            Err(Error::QubitOutOfRange { index: 2, n_qubits: 2 })
        ));
        assert!(matches!(parse_hamiltonian("0.5 Z0\n", 0.0), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn file_round_trip() {
        let h = heisenberg_chain(4, 9).unwrap();
        let back = parse_hamiltonian(&h.to_file_string(), 0.0).unwrap();
        assert_eq!(h, back);
    }

    #[test]
    fn ties_break_lexicographically() {
        let h = parse_hamiltonian("qubits 2\n1.0 Z0\n-1.0 X1\n1.0 X0\n", 0.0).unwrap();
        let s: Vec<String> = h.terms().iter().map(|t| t.pauli.to_string()).collect();
        assert_eq!(s, ["X1", "X0", "Z0"]);
    }

    #[test]
    fn chain_term_counts() {
        assert_eq!(heisenberg_chain(3, 1).unwrap().len(), 12);
        assert_eq!(heisenberg_chain(10, 1).unwrap().len(), 145);
        assert_eq!(heisenberg_chain(12, 1).unwrap().len(), 210);
        assert!(heisenberg_chain(1, 1).is_err());
    }

    #[test]
    fn chain_coefficients_follow_power_law() {
        let h = heisenberg_chain(5, 3).unwrap();
        let coeff_of = |s: &str| {
            let p = PauliString::parse_sparse(5, s).unwrap();
            h.terms().iter().find(|t| t.pauli == p).unwrap().coeff
        };
        assert_eq!(coeff_of("X0 X1"), 1.0);
        assert_eq!(coeff_of("Y1 Y3"), 0.0625);
        assert_eq!(coeff_of("Z0 Z4"), 1.0 / 256.0);
    }

    #[test]
    fn chain_seed_changes_only_fields() {
        let a = heisenberg_chain(4, 1).unwrap();
        let b = heisenberg_chain(4, 1).unwrap();
        let c = heisenberg_chain(4, 2).unwrap();
        assert_eq!(a, b);
        let couplings = |h: &PartitionedHamiltonian| {
            let mut v: Vec<(PauliString, u64)> = h
                .terms()
                .iter()
                .filter(|t| t.pauli.weight() == 2)
                .map(|t| (t.pauli, t.coeff.to_bits()))
                .collect();
            v.sort();
            v
        };
        assert_eq!(couplings(&a), couplings(&c));
        let fields = |h: &PartitionedHamiltonian| {
            let mut v: Vec<f64> =
                h.terms().iter().filter(|t| t.pauli.weight() == 1).map(|t| t.coeff).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        assert_ne!(fields(&a), fields(&c));
        assert!(fields(&a).iter().all(|b| (-1.0..=1.0).contains(b)));
    }

    #[test]
    fn partition_limits() {
        let h = parse_hamiltonian(TOY, 0.0).unwrap();
        let (h0, h1) = partition(&h, 0).unwrap();
        assert!(h0.is_empty());
        assert_eq!(h1.len(), 2);
        let (h0, h1) = partition(&h, 2).unwrap();
        assert_eq!(h0.len(), 2);
        assert!(h1.is_empty());
        let (h0, h1) = partition(&h, 1).unwrap();
        assert_eq!(h0.coeff(&PauliString::parse_sparse(2, "Z1").unwrap()).re, 0.5);
        assert_eq!(h1, vec![h.terms()[1]]);
        assert!(partition(&h, 3).is_err());
    }

    #[test]
    fn commutator_norm_examples() {
        let t = |c: f64, s: &str| {
            TermSum::from_terms(
                2,
                &[HamiltonianTerm::new(c, PauliString::parse_sparse(2, s).unwrap())],
            )
            .unwrap()
        };
        assert_eq!(commutator_norm(&t(1.0, "Z0"), &t(1.0, "Z1")).unwrap(), 0.0);
        assert_relative_eq!(commutator_norm(&t(0.5, "Z0"), &t(0.3, "X0")).unwrap(), 0.3, epsilon = 1e-14);
        assert_eq!(commutator_norm(&TermSum::new(2), &t(0.3, "X0")).unwrap(), 0.0);
    }

    #[test]
    fn bch_constant_limits() {
        let h = heisenberg_chain(4, 5).unwrap();
        assert_eq!(bch_constant(&h, 0).unwrap(), 0.0);
        let commuting = parse_hamiltonian("qubits 3\n0.9 Z0\n0.5 Z1 Z2\n0.2 Z0 Z2\n", 0.0).unwrap();
        for n_d in 0..=3 {
            assert_eq!(bch_constant(&commuting, n_d).unwrap(), 0.0);
        }
    }
}
