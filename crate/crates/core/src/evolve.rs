//! State vectors and the evolution kernels: single Pauli rotations, a cached
//! dense propagator, and deterministic Trotter steps.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::pauli::{to_dense, vec_norm, HamiltonianTerm, TermSum};

/// Allowed deviation of a state norm from 1.
pub const NORM_TOL: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Wraps amplitudes that must already be normalized.
    pub fn new(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_len(n_qubits, amps.len())?;
        let s = StateVector { n_qubits, amps };
        s.check_norm()?;
        Ok(s)
    }

    /// Normalizes the given amplitudes.
    pub fn normalized(n_qubits: usize, mut amps: Vec<Complex64>) -> Result<Self> {
        check_len(n_qubits, amps.len())?;
        let n = vec_norm(&amps);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::NotNormalized(n));
        }
        amps.iter_mut().for_each(|a| *a /= n);
        Ok(StateVector { n_qubits, amps })
    }

    /// Computational basis state `|index>`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let dim = dim_of(n_qubits)?;
        if index >= dim {
            return Err(Error::invalid(format!("basis index {index} out of range for {n_qubits} qubits")));
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n_qubits, amps })
    }

    /// Haar-random state from complex Gaussian amplitudes.
    pub fn random<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> Result<Self> {
        let dim = dim_of(n_qubits)?;
        let amps = (0..dim)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::normalized(n_qubits, amps)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        vec_norm(&self.amps)
    }

    pub fn check_norm(&self) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(n));
        }
        Ok(())
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// `||self - other||^2`.
    pub fn distance_sq(&self, other: &StateVector) -> f64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm_sqr()).sum()
    }

    fn check_width(&self, n: usize) -> Result<()> {
        if n != self.n_qubits {
            return Err(Error::QubitMismatch(self.n_qubits, n));
        }
        Ok(())
    }
}

fn dim_of(n_qubits: usize) -> Result<usize> {
    if n_qubits == 0 || n_qubits > 30 {
        return Err(Error::invalid(format!("state vectors support 1..=30 qubits, got {n_qubits}")));
    }
    Ok(1usize << n_qubits)
}

fn check_len(n_qubits: usize, len: usize) -> Result<()> {
    if dim_of(n_qubits)? != len {
        return Err(Error::invalid(format!("{len} amplitudes do not match {n_qubits} qubits")));
    }
    Ok(())
}

/// `state <- exp(-i theta c P) state = cos(theta c) state - i sin(theta c) P state`.
pub fn apply_pauli_rotation(state: &mut StateVector, term: &HamiltonianTerm, theta: f64) -> Result<()> {
    state.check_width(term.n_qubits())?;
    let angle = theta * term.coeff;
    if angle == 0.0 {
        return Ok(());
    }
    let (s, c) = angle.sin_cos();
    let p = &term.pauli;
    let amps = &mut state.amps;
    let x = p.x_mask() as usize;
    if x == 0 {
        // diagonal: P|b> = (-1)^{|b & z|} |b>
        let z = p.z_mask();
        let plus = Complex64::new(c, -s);
        let minus = Complex64::new(c, s);
        for (b, a) in amps.iter_mut().enumerate() {
            *a *= if (b as u64 & z).count_ones() & 1 == 0 { plus } else { minus };
        }
        return Ok(());
    }
    // pair b with b ^ x, visiting each pair once via the top bit of x
    let pivot = 1usize << (usize::BITS - 1 - x.leading_zeros());
    let mis = Complex64::new(0.0, -s);
    for b in 0..amps.len() {
        if b & pivot != 0 {
            continue;
        }
        let b2 = b ^ x;
        let (v1, v2) = (amps[b], amps[b2]);
        // P|b2> = phase(b2)|b>, P|b> = phase(b)|b2>
        amps[b] = c * v1 + mis * p.action_phase(b2) * v2;
        amps[b2] = c * v2 + mis * p.action_phase(b) * v1;
    }
    Ok(())
}

/// `exp(-i t H)` for a Hermitian sum, through a cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct ExactPropagator {
    n_qubits: usize,
    eigenvalues: Vec<f64>,
    vectors: DMatrix<Complex64>,
    vectors_adj: DMatrix<Complex64>,
}

impl ExactPropagator {
    pub fn new(h: &TermSum) -> Result<Self> {
        if !h.is_hermitian() {
            return Err(Error::NotHermitian);
        }
        let n = h.n_qubits();
        let dim = dim_of(n)?;
        if h.is_empty() {
            return Ok(ExactPropagator {
                n_qubits: n,
                eigenvalues: vec![0.0; dim],
                vectors: DMatrix::identity(dim, dim),
                vectors_adj: DMatrix::identity(dim, dim),
            });
        }
        let mut m = to_dense(h)?;
        for i in 0..dim {
            m[(i, i)].im = 0.0;
        }
        let eig = m.symmetric_eigen();
        let vectors = eig.eigenvectors;
        Ok(ExactPropagator {
            n_qubits: n,
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            vectors_adj: vectors.adjoint(),
            vectors,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Eigenvalues in the order of the cached eigenvectors (not sorted).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvector indices sorted by ascending eigenvalue.
    pub fn ascending_modes(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.eigenvalues.len()).collect();
        idx.sort_by(|&a, &b| self.eigenvalues[a].total_cmp(&self.eigenvalues[b]));
        idx
    }

    pub fn eigenvector(&self, k: usize) -> Result<StateVector> {
        if k >= self.eigenvalues.len() {
            return Err(Error::invalid(format!("mode {k} out of range")));
        }
        StateVector::normalized(self.n_qubits, self.vectors.column(k).iter().copied().collect())
    }

    /// Lowest-energy eigenvector and its eigenvalue.
    pub fn ground_state(&self) -> Result<(f64, StateVector)> {
        let k = self.ascending_modes()[0];
        Ok((self.eigenvalues[k], self.eigenvector(k)?))
    }

    /// `state <- exp(-i t H) state`.
    pub fn apply(&self, state: &mut StateVector, t: f64) -> Result<()> {
        state.check_width(self.n_qubits)?;
        if t == 0.0 {
            return Ok(());
        }
        let psi = DVector::from_column_slice(&state.amps);
        let mut coeffs = &self.vectors_adj * psi;
        for (c, &lam) in coeffs.iter_mut().zip(&self.eigenvalues) {
            let (s, co) = (lam * t).sin_cos();
            *c *= Complex64::new(co, -s);
        }
        let out = &self.vectors * coeffs;
        state.amps.copy_from_slice(out.as_slice());
        Ok(())
    }
}

/// Applies the operator product `exp(-i dt h_0) ... exp(-i dt h_{m-1})`, so the
/// last listed term acts first. Returns the number of exponentials applied.
pub fn trotter_step_first_order(state: &mut StateVector, terms: &[HamiltonianTerm], dt: f64) -> Result<usize> {
    for t in terms.iter().rev() {
        apply_pauli_rotation(state, t, dt)?;
    }
    Ok(terms.len())
}

/// Strang step `e^{-i dt h_0/2} ... e^{-i dt h_{m-1}} ... e^{-i dt h_0/2}`.
/// Returns `2m - 1` (0 for an empty list).
pub fn trotter_step_symmetric(state: &mut StateVector, terms: &[HamiltonianTerm], dt: f64) -> Result<usize> {
    let Some((last, rest)) = terms.split_last() else {
        return Ok(0);
    };
    for t in rest {
        apply_pauli_rotation(state, t, dt / 2.0)?;
    }
    apply_pauli_rotation(state, last, dt)?;
    for t in rest.iter().rev() {
        apply_pauli_rotation(state, t, dt / 2.0)?;
    }
    Ok(2 * terms.len() - 1)
}
