//! Dense reference implementations built from 2x2 matrices, independent of
//! the library's bit-mask kernels.
#![allow(dead_code)]

use hybrid_trotter::{HamiltonianTerm, Pauli, PauliString, StateVector, TermSum};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn single(p: Pauli) -> CMat {
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    match p {
        Pauli::I => DMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        Pauli::X => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        Pauli::Y => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        Pauli::Z => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

/// Kronecker product with qubit 0 as the least significant index bit.
pub fn pauli_dense(p: &PauliString) -> CMat {
    let letters = p.letters();
    let mut m = DMatrix::from_element(1, 1, c(1.0, 0.0));
    for &l in letters.iter().rev() {
        m = m.kronecker(&single(l));
    }
    m
}

pub fn sum_dense(s: &TermSum) -> CMat {
    let dim = 1usize << s.n_qubits();
    let mut m = CMat::zeros(dim, dim);
    for (p, coeff) in s.iter() {
        m += pauli_dense(p) * *coeff;
    }
    m
}

pub fn terms_dense(n: usize, terms: &[HamiltonianTerm]) -> CMat {
    let dim = 1usize << n;
    let mut m = CMat::zeros(dim, dim);
    for t in terms {
        m += pauli_dense(&t.pauli) * c(t.coeff, 0.0);
    }
    m
}

/// `exp(-i t H)` through the dense matrix exponential.
pub fn propagator(h: &CMat, t: f64) -> CMat {
    (h * c(0.0, -t)).exp()
}

pub fn state_vec(s: &StateVector) -> DVector<Complex64> {
    DVector::from_column_slice(s.amplitudes())
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    m.clone().singular_values().iter().fold(0.0, |a: f64, &b| a.max(b))
}

pub fn random_letter<R: Rng>(rng: &mut R) -> Pauli {
    [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][rng.random_range(0..4)]
}

/// A random non-identity Pauli string on `n` qubits.
pub fn random_pauli<R: Rng>(n: usize, rng: &mut R) -> PauliString {
    loop {
        let letters: Vec<Pauli> = (0..n).map(|_| random_letter(rng)).collect();
        let p = PauliString::from_letters(&letters).unwrap();
        if !p.is_identity() {
            return p;
        }
    }
}

/// `n_terms` distinct non-identity terms with coefficients in `[-1, 1]`.
pub fn random_terms<R: Rng>(n: usize, n_terms: usize, rng: &mut R) -> Vec<HamiltonianTerm> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(n_terms);
    while out.len() < n_terms {
        let p = random_pauli(n, rng);
        if seen.insert(p) {
            let mut coeff: f64 = rng.random_range(-1.0..1.0);
            if coeff.abs() < 0.05 {
                coeff = 0.05f64.copysign(coeff);
            }
            out.push(HamiltonianTerm::new(coeff, p));
        }
    }
    out
}
