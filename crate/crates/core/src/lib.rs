//! Hybrid deterministic/random Trotter simulation of Pauli-sum Hamiltonians.
//!
//! The largest terms of a Hamiltonian are evolved by a deterministic
//! splitting each step; the remaining terms are sampled, one batch per step.
//! The crate provides the Pauli algebra, state-vector kernels, samplers,
//! the evolution schemes, ensemble error statistics, closed-form error and
//! gate-count bounds, and the experiment drivers behind the `htrot` CLI.

pub mod analysis;
pub mod error;
pub mod evolve;
pub mod experiment;
pub mod hamiltonian;
pub mod pauli;
pub mod sampling;
pub mod scheme;

pub use error::{Error, Result};
pub use evolve::{apply_pauli_rotation, ExactPropagator, StateVector};
pub use hamiltonian::{heisenberg_chain, load_hamiltonian, parse_hamiltonian, PartitionedHamiltonian};
pub use pauli::{HamiltonianTerm, Pauli, PauliString, Phase, TermSum};
pub use sampling::{SamplerMode, SamplerSpec};
pub use scheme::{SchemeConfig, SchemeKind, StepControl, U0Mode};
