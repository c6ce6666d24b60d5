//! Pauli strings and sums of Pauli strings.
//!
//! A [`PauliString`] is stored in symplectic form: bit `k` of `x` and `z`
//! encodes the letter on qubit `k` (`I = 00`, `X = 10`, `Y = 11`, `Z = 01`).
//! Products carry an exact fourth-root-of-unity [`Phase`], so the algebra
//! layer never touches floating point.
//!
//! Qubit 0 is the least significant bit of a basis-state index, in the
//! dense matrices built here and in every state vector of the crate.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::Mul;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest qubit count for which dense matrices are formed.
pub const DENSE_CAP: usize = 12;

/// Largest qubit count representable by a [`PauliString`].
pub const MAX_QUBITS: usize = 64;

const I_POWERS: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(0.0, 1.0),
    Complex64::new(-1.0, 0.0),
    Complex64::new(0.0, -1.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// A power of `i`: one of `+1, +i, -1, -i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_power(k: i64) -> Self {
        Phase(k.rem_euclid(4) as u8)
    }

    /// Exponent `k` in `i^k`, in `0..4`.
    pub fn power(self) -> u8 {
        self.0
    }

    pub fn conj(self) -> Self {
        Phase((4 - self.0) % 4)
    }

    pub fn to_complex(self) -> Complex64 {
        I_POWERS[self.0 as usize]
    }
}

impl Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(["+1", "+i", "-1", "-i"][self.0 as usize])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliString {
    n_qubits: usize,
    x: u64,
    z: u64,
}

impl PauliString {
    pub fn identity(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::invalid(format!(
                "qubit count must be in 1..={MAX_QUBITS}, got {n_qubits}"
            )));
        }
        Ok(PauliString { n_qubits, x: 0, z: 0 })
    }

    /// Builds a string from one letter per qubit, qubit 0 first.
    pub fn from_letters(letters: &[Pauli]) -> Result<Self> {
        let mut p = Self::identity(letters.len())?;
        for (q, &l) in letters.iter().enumerate() {
            p.set(q, l)?;
        }
        Ok(p)
    }

    /// Builds a string from `(qubit, letter)` pairs; unlisted qubits are `I`.
    /// A qubit listed twice keeps its last letter.
    pub fn from_sparse(n_qubits: usize, ops: &[(usize, Pauli)]) -> Result<Self> {
        let mut p = Self::identity(n_qubits)?;
        for &(q, l) in ops {
            p.set(q, l)?;
        }
        Ok(p)
    }

    /// Parses the sparse form used in Hamiltonian files, e.g. `"X0 Y1 Z3"`.
    /// An empty string or `"I"` is the identity.
    pub fn parse_sparse(n_qubits: usize, s: &str) -> Result<Self> {
        let mut p = Self::identity(n_qubits)?;
        let mut seen = 0u64;
        for tok in s.split_whitespace() {
            if tok == "I" {
                continue;
            }
            let mut chars = tok.chars();
            let letter = chars
                .next()
                .and_then(Pauli::from_char)
                .filter(|l| *l != Pauli::I)
                .ok_or_else(|| Error::invalid(format!("bad Pauli operator `{tok}`")))?;
            let q: usize = chars
                .as_str()
                .parse()
                .map_err(|_| Error::invalid(format!("bad qubit index in `{tok}`")))?;
            if q >= n_qubits {
                return Err(Error::QubitOutOfRange { index: q, n_qubits });
            }
            if seen >> q & 1 == 1 {
                return Err(Error::invalid(format!("qubit {q} repeated in `{s}`")));
            }
            seen |= 1 << q;
            p.set(q, letter)?;
        }
        Ok(p)
    }

    fn set(&mut self, q: usize, l: Pauli) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::QubitOutOfRange { index: q, n_qubits: self.n_qubits });
        }
        let (xb, zb) = l.bits();
        let m = 1u64 << q;
        self.x = if xb { self.x | m } else { self.x & !m };
        self.z = if zb { self.z | m } else { self.z & !m };
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn letter(&self, q: usize) -> Pauli {
        Pauli::from_bits(self.x >> q & 1 == 1, self.z >> q & 1 == 1)
    }

    pub fn letters(&self) -> Vec<Pauli> {
        (0..self.n_qubits).map(|q| self.letter(q)).collect()
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    /// Number of non-identity sites.
    pub fn weight(&self) -> u32 {
        (self.x | self.z).count_ones()
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    fn y_count(&self) -> u32 {
        (self.x & self.z).count_ones()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::QubitMismatch(self.n_qubits, other.n_qubits));
        }
        Ok(())
    }

    /// Counts of sites where the pair `(self, other)` multiplies cyclically
    /// (`XY`, `YZ`, `ZX`) and anti-cyclically.
    fn cyclic_counts(&self, other: &Self) -> (u32, u32) {
        let (x1, y1, z1) = (self.x & !self.z, self.x & self.z, !self.x & self.z);
        let (x2, y2, z2) = (other.x & !other.z, other.x & other.z, !other.x & other.z);
        let plus = (x1 & y2) | (y1 & z2) | (z1 & x2);
        let minus = (x1 & z2) | (y1 & x2) | (z1 & y2);
        (plus.count_ones(), minus.count_ones())
    }

    /// Returns `(phase, r)` with `phase * r == self * other`.
    pub fn multiply(&self, other: &Self) -> Result<(Phase, PauliString)> {
        self.check_same(other)?;
        let (plus, minus) = self.cyclic_counts(other);
        let r = PauliString { n_qubits: self.n_qubits, x: self.x ^ other.x, z: self.z ^ other.z };
        Ok((Phase::from_power(plus as i64 - minus as i64), r))
    }

    pub fn commutes(&self, other: &Self) -> Result<bool> {
        self.check_same(other)?;
        let (plus, minus) = self.cyclic_counts(other);
        Ok((plus + minus) % 2 == 0)
    }

    /// Factor `i^{#Y} (-1)^{|b & z|}` such that `P|b> = factor |b ^ x>`.
    #[inline]
    pub(crate) fn action_phase(&self, b: usize) -> Complex64 {
        let k = self.y_count() + 2 * ((b as u64 & self.z).count_ones() & 1);
        I_POWERS[(k % 4) as usize]
    }

    /// `out += coeff * P * v`.
    pub(crate) fn apply_add(&self, coeff: Complex64, v: &[Complex64], out: &mut [Complex64]) {
        let base = self.y_count();
        let x = self.x as usize;
        for (b, amp) in v.iter().enumerate() {
            let k = base + 2 * ((b as u64 & self.z).count_ones() & 1);
            out[b ^ x] += coeff * I_POWERS[(k % 4) as usize] * amp;
        }
    }
}

impl Ord for PauliString {
    /// Lexicographic on letters, qubit 0 first, with `I < X < Y < Z`.
    fn cmp(&self, other: &Self) -> Ordering {
        self.n_qubits.cmp(&other.n_qubits).then_with(|| {
            let diff = (self.x ^ other.x) | (self.z ^ other.z);
            if diff == 0 {
                return Ordering::Equal;
            }
            let q = diff.trailing_zeros() as usize;
            self.letter(q).cmp(&other.letter(q))
        })
    }
}

impl PartialOrd for PauliString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PauliString {
    /// Sparse form, e.g. `X0 Z1`; the identity prints as `I`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return f.write_str("I");
        }
        let mut first = true;
        for q in 0..self.n_qubits {
            let l = self.letter(q);
            if l != Pauli::I {
                if !first {
                    f.write_str(" ")?;
                }
                write!(f, "{}{}", l.as_char(), q)?;
                first = false;
            }
        }
        Ok(())
    }
}

/// A real coefficient times a Pauli string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianTerm {
    pub coeff: f64,
    pub pauli: PauliString,
}

impl HamiltonianTerm {
    pub fn new(coeff: f64, pauli: PauliString) -> Self {
        HamiltonianTerm { coeff, pauli }
    }

    /// Spectral norm; Pauli strings are unitary involutions.
    pub fn norm(&self) -> f64 {
        self.coeff.abs()
    }

    pub fn n_qubits(&self) -> usize {
        self.pauli.n_qubits()
    }
}

impl fmt::Display for HamiltonianTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pauli.is_identity() {
            write!(f, "{}", self.coeff)
        } else {
            write!(f, "{} {}", self.coeff, self.pauli)
        }
    }
}

/// `[a, b] = ab - ba`; empty when the strings commute, otherwise the single
/// term `2 a.coeff b.coeff phase (a.pauli b.pauli)`.
pub fn commutator(a: &HamiltonianTerm, b: &HamiltonianTerm) -> Result<TermSum> {
    let mut out = TermSum::new(a.n_qubits());
    if a.pauli.commutes(&b.pauli)? {
        return Ok(out);
    }
    let (phase, r) = a.pauli.multiply(&b.pauli)?;
    out.add_term(r, phase.to_complex() * (2.0 * a.coeff * b.coeff));
    Ok(out)
}

/// A canonical sum of Pauli strings with complex coefficients: at most one
/// entry per string, no zero coefficients, entries in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct TermSum {
    n_qubits: usize,
    terms: BTreeMap<PauliString, Complex64>,
}

impl TermSum {
    pub fn new(n_qubits: usize) -> Self {
        TermSum { n_qubits, terms: BTreeMap::new() }
    }

    /// `c * I`.
    pub fn scalar(n_qubits: usize, c: Complex64) -> Result<Self> {
        let mut s = Self::new(n_qubits);
        s.add_term(PauliString::identity(n_qubits)?, c);
        Ok(s)
    }

    pub fn from_terms<'a>(
        n_qubits: usize,
        terms: impl IntoIterator<Item = &'a HamiltonianTerm>,
    ) -> Result<Self> {
        let mut s = Self::new(n_qubits);
        for t in terms {
            if t.n_qubits() != n_qubits {
                return Err(Error::QubitMismatch(n_qubits, t.n_qubits()));
            }
            s.add_term(t.pauli, Complex64::new(t.coeff, 0.0));
        }
        Ok(s)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PauliString, &Complex64)> {
        self.terms.iter()
    }

    pub fn coeff(&self, p: &PauliString) -> Complex64 {
        self.terms.get(p).copied().unwrap_or_default()
    }

    /// Adds `c * p`, merging with an existing entry and dropping exact zeros.
    /// Strings of the wrong width are a programming error and panic.
    pub fn add_term(&mut self, p: PauliString, c: Complex64) {
        assert_eq!(p.n_qubits(), self.n_qubits, "Pauli string width mismatch");
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        let e = self.terms.entry(p).or_default();
        *e += c;
        if *e == Complex64::new(0.0, 0.0) {
            self.terms.remove(&p);
        }
    }

    pub fn add_assign(&mut self, other: &TermSum) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::QubitMismatch(self.n_qubits, other.n_qubits));
        }
        for (p, c) in other.iter() {
            self.add_term(*p, *c);
        }
        Ok(())
    }

    pub fn scaled(&self, k: Complex64) -> TermSum {
        let mut out = TermSum::new(self.n_qubits);
        for (p, c) in self.iter() {
            out.add_term(*p, c * k);
        }
        out
    }

    /// Operator product `self * other`.
    pub fn mul(&self, other: &TermSum) -> Result<TermSum> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::QubitMismatch(self.n_qubits, other.n_qubits));
        }
        let mut out = TermSum::new(self.n_qubits);
        for (p, a) in self.iter() {
            for (q, b) in other.iter() {
                let (phase, r) = p.multiply(q)?;
                out.add_term(r, a * b * phase.to_complex());
            }
        }
        Ok(out)
    }

    /// Drops imaginary parts, e.g. the rounding residue of a product that is
    /// Hermitian in exact arithmetic.
    pub fn real_part(&self) -> TermSum {
        let mut out = TermSum::new(self.n_qubits);
        for (p, c) in self.iter() {
            out.add_term(*p, Complex64::new(c.re, 0.0));
        }
        out
    }

    /// Removes entries with `|c| <= tol`.
    pub fn prune(&mut self, tol: f64) {
        self.terms.retain(|_, c| c.norm() > tol);
    }

    fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// All coefficients real, up to a relative tolerance.
    pub fn is_hermitian(&self) -> bool {
        let tol = 1e-12 * self.max_abs();
        self.terms.values().all(|c| c.im.abs() <= tol)
    }

    /// All coefficients imaginary, up to a relative tolerance.
    pub fn is_anti_hermitian(&self) -> bool {
        let tol = 1e-12 * self.max_abs();
        self.terms.values().all(|c| c.re.abs() <= tol)
    }

    /// `out = self * v`.
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let dim = 1usize << self.n_qubits;
        if v.len() != dim {
            return Err(Error::invalid(format!(
                "vector length {} does not match {} qubits",
                v.len(),
                self.n_qubits
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        for (p, c) in self.iter() {
            p.apply_add(*c, v, &mut out);
        }
        Ok(out)
    }
}

impl fmt::Display for TermSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("0");
        }
        let mut first = true;
        for (p, c) in self.iter() {
            if !first {
                f.write_str(" + ")?;
            }
            write!(f, "({}{:+}i) {}", c.re, c.im, p)?;
            first = false;
        }
        Ok(())
    }
}

/// Dense `2^n x 2^n` matrix with the default [`DENSE_CAP`].
pub fn to_dense(s: &TermSum) -> Result<DMatrix<Complex64>> {
    to_dense_with_cap(s, DENSE_CAP)
}

pub fn to_dense_with_cap(s: &TermSum, cap: usize) -> Result<DMatrix<Complex64>> {
    let n = s.n_qubits();
    if n > cap {
        return Err(Error::DenseCapExceeded { n, cap });
    }
    let dim = 1usize << n;
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    for (p, c) in s.iter() {
        let x = p.x_mask() as usize;
        for b in 0..dim {
            m[(b ^ x, b)] += c * p.action_phase(b);
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy)]
pub struct NormOptions {
    /// Dense eigendecomposition is used up to this many qubits.
    pub dense_cap: usize,
    /// Relative change of the power-iteration estimate treated as converged.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions { dense_cap: DENSE_CAP, rel_tol: 1e-8, max_iter: 10_000 }
    }
}

/// Largest singular value of a Hermitian or anti-Hermitian sum.
pub fn spectral_norm(s: &TermSum) -> Result<f64> {
    spectral_norm_with(s, &NormOptions::default())
}

pub fn spectral_norm_with(s: &TermSum, opts: &NormOptions) -> Result<f64> {
    if s.is_empty() {
        return Ok(0.0);
    }
    let herm = if s.is_hermitian() {
        s.clone()
    } else if s.is_anti_hermitian() {
        s.scaled(Complex64::new(0.0, -1.0))
    } else {
        return Err(Error::NotHermitian);
    };
    // A multiple of the identity needs no matrix.
    if herm.len() == 1 {
        return Ok(herm.iter().next().map(|(_, c)| c.norm()).unwrap_or(0.0));
    }
    if herm.n_qubits() <= opts.dense_cap {
        dense_hermitian_norm(&herm, opts.dense_cap)
    } else {
        power_iteration_norm(&herm, opts)
    }
}

fn dense_hermitian_norm(s: &TermSum, cap: usize) -> Result<f64> {
    let mut m = to_dense_with_cap(s, cap)?;
    // Symmetrize away rounding in the real parts.
    for i in 0..m.nrows() {
        m[(i, i)].im = 0.0;
    }
    let eig = m.symmetric_eigenvalues();
    Ok(eig.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
}

/// Matrix-free power iteration on `s^2` for Hermitian `s`.
pub(crate) fn power_iteration_norm(s: &TermSum, opts: &NormOptions) -> Result<f64> {
    let dim = 1usize << s.n_qubits();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_90e4);
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    normalize(&mut v);
    let mut est = 0.0f64;
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let w = s.apply(&v)?;
        let new_est = vec_norm(&w);
        if new_est == 0.0 {
            return Ok(0.0);
        }
        let mut u = s.apply(&w)?;
        // residual of the eigen-equation for s^2 at the current Rayleigh quotient
        let lam2 = new_est * new_est;
        residual = u
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b * lam2).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / lam2;
        normalize(&mut u);
        v = u;
        if (new_est - est).abs() <= opts.rel_tol * new_est && residual <= opts.rel_tol.sqrt() {
            return Ok(new_est);
        }
        est = new_est;
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual })
}

pub(crate) fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(v: &mut [Complex64]) {
    let n = vec_norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|a| *a /= n);
    }
}
