//! Python bindings for the hybrid Trotter simulator.

use std::path::PathBuf;

use hybrid_trotter::analysis::{
    error_estimator, gate_count_markov, gate_count_mcdiarmid, global_mse_bound, one_step_mse_bound, optimal_partition,
    partition_constants, run_ensemble, ConcentrationMode, PartitionConstants,
};
use hybrid_trotter::experiment::{initial_state, InitialState};
use hybrid_trotter::hamiltonian::DEFAULT_COEFF_FLOOR;
use hybrid_trotter::pauli::spectral_norm;
use hybrid_trotter::{
    Error, ExactPropagator, HamiltonianTerm, PartitionedHamiltonian, SamplerMode, SamplerSpec, SchemeConfig,
    SchemeKind, StateVector, StepControl, U0Mode,
};
use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        e if e.is_numerical() => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn sampler_spec(sampler: &str, k: usize) -> PyResult<SamplerSpec> {
    let mode: SamplerMode = sampler.parse().map_err(py_err)?;
    Ok(SamplerSpec { mode, batch_size: k })
}

/// A Pauli string such as `"X0 Z2"` on a fixed number of qubits.
#[pyclass(name = "PauliString", frozen, eq, hash, skip_from_py_object)]
#[derive(Clone, PartialEq, Eq, Hash)]
struct PyPauliString(hybrid_trotter::PauliString);

#[pymethods]
impl PyPauliString {
    #[new]
    fn new(n_qubits: usize, spec: &str) -> PyResult<Self> {
        hybrid_trotter::PauliString::parse_sparse(n_qubits, spec).map(Self).map_err(py_err)
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.0.n_qubits()
    }

    #[getter]
    fn weight(&self) -> u32 {
        self.0.weight()
    }

    /// Returns `(k, r)` with `self * other = i^k r`.
    fn multiply(&self, other: &Self) -> PyResult<(u8, Self)> {
        let (phase, r) = self.0.multiply(&other.0).map_err(py_err)?;
        Ok((phase.power(), Self(r)))
    }

    fn commutes(&self, other: &Self) -> PyResult<bool> {
        self.0.commutes(&other.0).map_err(py_err)
    }

    /// Applies `exp(-i theta coeff P)` to a state given as complex amplitudes.
    fn rotate(&self, amplitudes: Vec<Complex64>, coeff: f64, theta: f64) -> PyResult<Vec<Complex64>> {
        let mut psi = StateVector::normalized(self.0.n_qubits(), amplitudes).map_err(py_err)?;
        hybrid_trotter::apply_pauli_rotation(&mut psi, &HamiltonianTerm::new(coeff, self.0), theta).map_err(py_err)?;
        Ok(psi.into_amplitudes())
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("PauliString({}, '{}')", self.0.n_qubits(), self.0)
    }
}

/// A Pauli-sum Hamiltonian with terms sorted by decreasing magnitude.
#[pyclass(name = "Hamiltonian", frozen)]
struct PyHamiltonian(PartitionedHamiltonian);

#[pymethods]
impl PyHamiltonian {
    #[staticmethod]
    #[pyo3(signature = (text, coeff_floor = DEFAULT_COEFF_FLOOR))]
    fn parse(text: &str, coeff_floor: f64) -> PyResult<Self> {
        hybrid_trotter::parse_hamiltonian(text, coeff_floor).map(Self).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (path, coeff_floor = DEFAULT_COEFF_FLOOR))]
    fn load(path: PathBuf, coeff_floor: f64) -> PyResult<Self> {
        hybrid_trotter::load_hamiltonian(path, coeff_floor).map(Self).map_err(py_err)
    }

    /// Power-law Heisenberg chain with seeded random fields.
    #[staticmethod]
    #[pyo3(signature = (n, field_seed = 0))]
    fn heisenberg_chain(n: usize, field_seed: u64) -> PyResult<Self> {
        hybrid_trotter::heisenberg_chain(n, field_seed).map(Self).map_err(py_err)
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.0.n_qubits()
    }

    #[getter]
    fn identity_offset(&self) -> f64 {
        self.0.identity_offset()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// `(coefficient, PauliString)` pairs in storage order.
    fn terms(&self) -> Vec<(f64, PyPauliString)> {
        self.0.terms().iter().map(|t| (t.coeff, PyPauliString(t.pauli))).collect()
    }

    fn spectral_norm(&self) -> PyResult<f64> {
        spectral_norm(&self.0.full_sum().map_err(py_err)?).map_err(py_err)
    }

    /// `(energy, amplitudes)` of the lowest eigenvector.
    fn ground_state(&self) -> PyResult<(f64, Vec<Complex64>)> {
        let prop = ExactPropagator::new(&self.0.full_sum().map_err(py_err)?).map_err(py_err)?;
        let (e, psi) = prop.ground_state().map_err(py_err)?;
        Ok((e, psi.into_amplitudes()))
    }

    /// Lambda, Gamma, the commutator norm and the splitting constant at `n_d`.
    #[pyo3(signature = (n_d, sampler = "importance", k = 1, u0 = "exact"))]
    fn constants<'py>(&self, py: Python<'py>, n_d: usize, sampler: &str, k: usize, u0: &str) -> PyResult<Bound<'py, PyDict>> {
        let u0: U0Mode = u0.parse().map_err(py_err)?;
        let c = partition_constants(&self.0, n_d, &sampler_spec(sampler, k)?, u0).map_err(py_err)?;
        constants_dict(py, &c)
    }

    fn to_file_string(&self) -> String {
        self.0.to_file_string()
    }

    fn __repr__(&self) -> String {
        format!("Hamiltonian(n_qubits={}, terms={})", self.0.n_qubits(), self.0.len())
    }
}

fn constants_dict<'py>(py: Python<'py>, c: &PartitionConstants) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("n_d", c.n_d)?;
    d.set_item("n_r", c.n_r)?;
    d.set_item("k", c.k)?;
    d.set_item("lambda", c.lambda)?;
    d.set_item("gamma", c.gamma)?;
    d.set_item("comm_norm", c.comm_norm)?;
    d.set_item("c", c.c)?;
    Ok(d)
}

/// Runs `ensembles` trajectories and returns error statistics per record time.
#[pyfunction]
#[pyo3(signature = (
    hamiltonian, *, n_d = 0, scheme = "hyb1", sampler = "importance", k = 1, u0 = "exact",
    t_final = 1.0, dt = None, gates = None, ensembles = 80, seed = 0, init = "ground", records = 10
))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    hamiltonian: &PyHamiltonian,
    n_d: usize,
    scheme: &str,
    sampler: &str,
    k: usize,
    u0: &str,
    t_final: f64,
    dt: Option<f64>,
    gates: Option<u64>,
    ensembles: usize,
    seed: u64,
    init: &str,
    records: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let h = &hamiltonian.0;
    let step = match (dt, gates) {
        (Some(_), Some(_)) => return Err(PyValueError::new_err("give either dt or gates, not both")),
        (_, Some(g)) => StepControl::GateBudget(g),
        (Some(dt), None) => StepControl::Dt(dt),
        (None, None) => StepControl::Dt(0.0125),
    };
    if records == 0 {
        return Err(PyValueError::new_err("records must be at least 1"));
    }
    let cfg = SchemeConfig {
        scheme: scheme.parse::<SchemeKind>().map_err(py_err)?,
        n_d,
        sampler: sampler_spec(sampler, k)?,
        u0_mode: u0.parse().map_err(py_err)?,
        t_final,
        step,
        base_seed: seed,
    };
    let horizon = cfg.plan(h.len()).map_err(py_err)?.horizon();
    let times: Vec<f64> = (1..=records).map(|i| (t_final * i as f64 / records as f64).min(horizon)).collect();
    let init = InitialState::parse(init).map_err(py_err)?;
    let stats = py
        .detach(|| -> hybrid_trotter::Result<_> {
            let prop = ExactPropagator::new(&h.full_sum()?)?;
            let psi0 = initial_state(&prop, init, seed)?;
            run_ensemble(h, &cfg, &psi0, ensembles, &times)
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("time", stats.times)?;
    d.set_item("mse", stats.mse)?;
    d.set_item("mse_stderr", stats.mse_stderr)?;
    d.set_item("fidelity_err", stats.fidelity_err)?;
    d.set_item("bias_sq", stats.bias_sq)?;
    d.set_item("gate_count", stats.gate_count)?;
    d.set_item("dt", stats.dt)?;
    d.set_item("ensemble_size", stats.ensemble_size)?;
    Ok(d)
}

/// Estimator values over the `n_d` grid `0, stride, ..., L`.
#[pyfunction]
#[pyo3(signature = (hamiltonian, t_final, gates, *, sampler = "importance", k = 1, u0 = "split1", stride = 10))]
fn scan_partitions<'py>(
    py: Python<'py>,
    hamiltonian: &PyHamiltonian,
    t_final: f64,
    gates: u64,
    sampler: &str,
    k: usize,
    u0: &str,
    stride: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = sampler_spec(sampler, k)?;
    let u0: U0Mode = u0.parse().map_err(py_err)?;
    let scan = optimal_partition(&hamiltonian.0, &spec, u0, t_final, gates, stride).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("n_d", scan.constants.iter().map(|c| c.n_d).collect::<Vec<_>>())?;
    d.set_item("estimate", scan.estimates.iter().map(|e| e.total()).collect::<Vec<_>>())?;
    d.set_item("variance", scan.estimates.iter().map(|e| e.variance).collect::<Vec<_>>())?;
    d.set_item("bias", scan.estimates.iter().map(|e| e.bias).collect::<Vec<_>>())?;
    d.set_item("best_n_d", scan.best_n_d)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (lambda_, comm_norm, dt, k = 1))]
fn one_step_bound(lambda_: f64, comm_norm: f64, dt: f64, k: usize) -> PyResult<f64> {
    one_step_mse_bound(lambda_, comm_norm, dt, k).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (lambda_, gamma, comm_norm, t, dt, k, n_r))]
fn global_bound(lambda_: f64, gamma: f64, comm_norm: f64, t: f64, dt: f64, k: usize, n_r: usize) -> PyResult<f64> {
    global_mse_bound(lambda_, gamma, comm_norm, t, dt, k, n_r).map_err(py_err)
}

/// `(variance, bias)` addends of the fixed-budget error estimate.
#[pyfunction]
#[pyo3(signature = (lambda_, c, n_d, k, t, gates))]
fn estimator(lambda_: f64, c: f64, n_d: usize, k: usize, t: f64, gates: u64) -> PyResult<(f64, f64)> {
    let e = error_estimator(lambda_, c, n_d, k, t, gates).map_err(py_err)?;
    Ok((e.variance, e.bias))
}

#[pyfunction]
fn gates_markov(lambda_: f64, comm_norm: f64, n_d: usize, t: f64, eps: f64, delta: f64) -> PyResult<f64> {
    gate_count_markov(lambda_, comm_norm, n_d, t, eps, delta).map_err(py_err)
}

/// `mode` is `"importance"` (uses Lambda) or `"uniform"` (uses Gamma).
#[pyfunction]
fn gates_mcdiarmid(value: f64, n_d: usize, t: f64, eps: f64, delta: f64, mode: &str) -> PyResult<f64> {
    let mode = match mode {
        "importance" => ConcentrationMode::Importance,
        "uniform" => ConcentrationMode::Uniform,
        _ => return Err(PyValueError::new_err(format!("unknown mode `{mode}`"))),
    };
    gate_count_mcdiarmid(value, n_d, t, eps, delta, mode).map_err(py_err)
}

#[pymodule]
#[pyo3(name = "hybrid_trotter")]
fn hybrid_trotter_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPauliString>()?;
    m.add_class::<PyHamiltonian>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(scan_partitions, m)?)?;
    m.add_function(wrap_pyfunction!(one_step_bound, m)?)?;
    m.add_function(wrap_pyfunction!(global_bound, m)?)?;
    m.add_function(wrap_pyfunction!(estimator, m)?)?;
    m.add_function(wrap_pyfunction!(gates_markov, m)?)?;
    m.add_function(wrap_pyfunction!(gates_mcdiarmid, m)?)?;
    Ok(())
}
