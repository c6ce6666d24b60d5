//! Ensemble error statistics, closed-form error and gate-count bounds, the
//! fixed-budget error estimator, and the partition search built on it.
//!
//! Gate counts from asymptotic statements are evaluated with implied
//! constant 1.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolve::{ExactPropagator, StateVector};
use crate::hamiltonian::{bch_constant_with, commutator_norm, partition, PartitionedHamiltonian};
use crate::pauli::{spectral_norm, HamiltonianTerm, TermSum};
use crate::sampling::{delta_h_constants, delta_h_operator, enumerate_outcomes, Sampler, SamplerMode, SamplerSpec};
use crate::scheme::{reference_states, SchemeConfig, Stepper, U0Mode};

/// Draws used for expectations that cannot be enumerated.
pub const MONTE_CARLO_DRAWS: usize = 100_000;

/// Default ensemble size.
pub const DEFAULT_ENSEMBLE: usize = 80;

/// Error statistics of an ensemble against the exact evolution, one entry
/// per recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    /// Mean of `||psi_n - phi_n||^2`.
    pub mse: Vec<f64>,
    pub mse_stderr: Vec<f64>,
    /// Mean of `1 - Re <psi_n|phi_n>`.
    pub fidelity_err: Vec<f64>,
    pub fidelity_err_stderr: Vec<f64>,
    /// `||psi_n - mean(phi_n)||^2`.
    pub bias_sq: Vec<f64>,
    pub gate_count: Vec<u64>,
    pub ensemble_size: usize,
    pub dt: f64,
}

struct TrajectoryErrors {
    err_sq: Vec<f64>,
    fid: Vec<f64>,
    states: Vec<StateVector>,
    gates: Vec<u64>,
}

/// Builds the exact propagator of the full Hamiltonian.
pub fn reference_propagator(h: &PartitionedHamiltonian) -> Result<ExactPropagator> {
    ExactPropagator::new(&h.full_sum()?)
}

pub fn run_ensemble(
    h: &PartitionedHamiltonian,
    cfg: &SchemeConfig,
    psi0: &StateVector,
    m: usize,
    record_times: &[f64],
) -> Result<EnsembleStats> {
    run_ensemble_with(&reference_propagator(h)?, h, cfg, psi0, m, record_times)
}

/// [`run_ensemble`] with a prebuilt reference propagator.
///
/// Trajectories run in parallel and are reduced in index order, so results
/// do not depend on scheduling.
pub fn run_ensemble_with(
    reference: &ExactPropagator,
    h: &PartitionedHamiltonian,
    cfg: &SchemeConfig,
    psi0: &StateVector,
    m: usize,
    record_times: &[f64],
) -> Result<EnsembleStats> {
    if m < 2 {
        return Err(Error::invalid(format!("ensemble size must be at least 2, got {m}")));
    }
    let stepper = Stepper::new(h, cfg)?;
    let plan = *stepper.plan();
    let steps = plan.snap_times(record_times)?;
    let times: Vec<f64> = steps.iter().map(|&s| s as f64 * plan.dt).collect();
    let exact = reference_states(reference, psi0, &times)?;

    let runs = (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let traj = stepper.run(psi0, &steps, cfg.base_seed, i)?;
            let mut out = TrajectoryErrors {
                err_sq: Vec::with_capacity(steps.len()),
                fid: Vec::with_capacity(steps.len()),
                states: Vec::with_capacity(steps.len()),
                gates: Vec::with_capacity(steps.len()),
            };
            for (rec, ex) in traj.records.into_iter().zip(&exact.records) {
                out.err_sq.push(ex.state.distance_sq(&rec.state));
                out.fid.push(1.0 - ex.state.inner(&rec.state).re);
                out.gates.push(rec.gates);
                out.states.push(rec.state);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let n_t = steps.len();
    let mf = m as f64;
    let mut stats = EnsembleStats {
        times,
        steps,
        mse: Vec::with_capacity(n_t),
        mse_stderr: Vec::with_capacity(n_t),
        fidelity_err: Vec::with_capacity(n_t),
        fidelity_err_stderr: Vec::with_capacity(n_t),
        bias_sq: Vec::with_capacity(n_t),
        gate_count: runs[0].gates.clone(),
        ensemble_size: m,
        dt: plan.dt,
    };
    for k in 0..n_t {
        let (mean, se) = mean_stderr(runs.iter().map(|r| r.err_sq[k]), mf);
        stats.mse.push(mean);
        stats.mse_stderr.push(se);
        let (mean, se) = mean_stderr(runs.iter().map(|r| r.fid[k]), mf);
        stats.fidelity_err.push(mean);
        stats.fidelity_err_stderr.push(se);
        let dim = psi0.dim();
        let mut avg = vec![Complex64::new(0.0, 0.0); dim];
        for r in &runs {
            for (a, b) in avg.iter_mut().zip(r.states[k].amplitudes()) {
                *a += b;
            }
        }
        let bias_sq = exact.records[k]
            .state
            .amplitudes()
            .iter()
            .zip(&avg)
            .map(|(e, s)| (e - s / mf).norm_sqr())
            .sum();
        stats.bias_sq.push(bias_sq);
    }
    Ok(stats)
}

/// Sample mean and standard error (unbiased variance) of `m` values.
fn mean_stderr(xs: impl Iterator<Item = f64> + Clone, m: f64) -> (f64, f64) {
    let mean = xs.clone().sum::<f64>() / m;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("slope fit needs at least two paired points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("slope fit needs positive values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::invalid(format!("{name} must be finite and nonnegative, got {v}")));
    }
    Ok(())
}

/// `2 Lambda dt^2 / K + dt^4 comm^2`.
pub fn one_step_mse_bound(lambda: f64, comm_norm: f64, dt: f64, k: usize) -> Result<f64> {
    check_nonneg("Lambda", lambda)?;
    check_nonneg("commutator norm", comm_norm)?;
    check_nonneg("dt", dt)?;
    if k == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    Ok(2.0 * lambda * dt * dt / k as f64 + dt.powi(4) * comm_norm * comm_norm)
}

/// `(2 Lambda t dt / K + comm^2 t dt^3) exp(((n_r - K)/n_r) Gamma t + t dt comm / 2)`.
///
/// The splitting addend is the per-step `dt^4 comm^2` summed over `t / dt`
/// steps.
pub fn global_mse_bound(lambda: f64, gamma: f64, comm_norm: f64, t: f64, dt: f64, k: usize, n_r: usize) -> Result<f64> {
    for (name, v) in [("Lambda", lambda), ("Gamma", gamma), ("commutator norm", comm_norm), ("t", t), ("dt", dt)] {
        check_nonneg(name, v)?;
    }
    if k == 0 || k > n_r {
        return Err(Error::invalid(format!("batch size {k} outside 1..={n_r}")));
    }
    let kf = k as f64;
    let prefactor = 2.0 * lambda * t * dt / kf + comm_norm * comm_norm * t * dt.powi(3);
    let growth = (n_r - k) as f64 / n_r as f64 * gamma * t + t * dt / 2.0 * comm_norm;
    Ok(prefactor * growth.exp())
}

/// `E ||(H1 + dH) dH^2 (H1 + dH)||` over the sampler, by enumeration when
/// there are few outcomes and by Monte Carlo otherwise (then with a standard
/// error).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub value: f64,
    pub stderr: Option<f64>,
}

pub fn bias_expectation(h1: &[HamiltonianTerm], spec: &SamplerSpec, seed: u64) -> Result<Expectation> {
    if h1.is_empty() {
        return Ok(Expectation { value: 0.0, stderr: None });
    }
    let n = h1[0].n_qubits();
    let h1_sum = TermSum::from_terms(n, h1)?;
    let sample_norm = |dh: TermSum| -> Result<f64> {
        let mut a = h1_sum.clone();
        a.add_assign(&dh)?;
        let prod = a.mul(&dh)?.mul(&dh)?.mul(&a)?.real_part();
        spectral_norm(&prod)
    };
    if let Some(outcomes) = enumerate_outcomes(h1, spec)? {
        let mut value = 0.0;
        for (p, d) in &outcomes {
            value += p * sample_norm(delta_h_operator(h1, d)?)?;
        }
        return Ok(Expectation { value, stderr: None });
    }
    let sampler = Sampler::new(*spec, h1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = (0..MONTE_CARLO_DRAWS)
        .map(|_| sample_norm(delta_h_operator(h1, &sampler.draw(&mut rng))?))
        .collect::<Result<Vec<f64>>>()?;
    let (value, se) = mean_stderr(xs.iter().copied(), xs.len() as f64);
    Ok(Expectation { value, stderr: Some(se) })
}

/// `(t dt / 2) (||[H0, H1]|| + E[...]^{1/2})`, the bound on the error of the
/// ensemble mean at time `t`.
pub fn bias_bound(comm_norm: f64, expectation: f64, t: f64, dt: f64) -> f64 {
    t * dt / 2.0 * (comm_norm + expectation.sqrt())
}

/// Measured error of the ensemble mean against its closed-form bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub times: Vec<f64>,
    /// `||psi_n - mean(phi_n)||`.
    pub bias: Vec<f64>,
    pub bound: Vec<f64>,
    pub mse: Vec<f64>,
    pub mse_stderr: Vec<f64>,
    pub comm_norm: f64,
    pub expectation: Expectation,
}

pub fn bias_of_mean(
    h: &PartitionedHamiltonian,
    cfg: &SchemeConfig,
    psi0: &StateVector,
    m: usize,
    record_times: &[f64],
) -> Result<BiasReport> {
    let stats = run_ensemble(h, cfg, psi0, m, record_times)?;
    let (h0, h1) = partition(h, cfg.n_d)?;
    let comm = commutator_norm(&h0, &TermSum::from_terms(h.n_qubits(), &h1)?)?;
    let expectation = bias_expectation(&h1, &cfg.sampler, cfg.base_seed)?;
    let bound = stats.times.iter().map(|&t| bias_bound(comm, expectation.value, t, stats.dt)).collect();
    Ok(BiasReport {
        times: stats.times,
        bias: stats.bias_sq.iter().map(|b| b.sqrt()).collect(),
        bound,
        mse: stats.mse,
        mse_stderr: stats.mse_stderr,
        comm_norm: comm,
        expectation,
    })
}

/// The two addends of the fixed-budget error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    /// `Lambda (n_d + K) T^2 / N_gate`.
    pub variance: f64,
    /// `C (n_d + K)^3 T^4 / N_gate^3`.
    pub bias: f64,
}

impl ErrorEstimate {
    pub fn total(&self) -> f64 {
        self.variance + self.bias
    }
}

pub fn error_estimator(lambda: f64, c: f64, n_d: usize, k: usize, t: f64, n_gate: u64) -> Result<ErrorEstimate> {
    check_nonneg("Lambda", lambda)?;
    check_nonneg("C", c)?;
    check_nonneg("T", t)?;
    if n_gate == 0 {
        return Err(Error::invalid("gate budget must be positive"));
    }
    let g = (n_d + k) as f64;
    let n = n_gate as f64;
    Ok(ErrorEstimate { variance: lambda * g * t * t / n, bias: c * g.powi(3) * t.powi(4) / n.powi(3) })
}

/// Constants of one partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionConstants {
    pub n_d: usize,
    pub n_r: usize,
    /// Batch size actually applied (0 when nothing is sampled).
    pub k: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub comm_norm: f64,
    /// Splitting constant `||Q||^2 / 4` for the given `U0` mode.
    pub c: f64,
}

/// Computes `Lambda`, `Gamma`, `||[H0, H1]||` and `C` at `n_d`. The batch size
/// is clamped to the number of sampled terms.
pub fn partition_constants(
    h: &PartitionedHamiltonian,
    n_d: usize,
    sampler: &SamplerSpec,
    u0_mode: U0Mode,
) -> Result<PartitionConstants> {
    let (h0, h1) = partition(h, n_d)?;
    let n_r = h1.len();
    if n_r == 0 {
        return Ok(PartitionConstants { n_d, n_r, k: 0, lambda: 0.0, gamma: 0.0, comm_norm: 0.0, c: bch_constant_with(h, n_d, u0_mode == U0Mode::SplitFirst)? });
    }
    let mut spec = *sampler;
    if spec.mode == SamplerMode::UniformBatch {
        spec.batch_size = spec.batch_size.min(n_r);
    }
    let dh = delta_h_constants(&h1, &spec)?;
    let comm_norm = commutator_norm(&h0, &TermSum::from_terms(h.n_qubits(), &h1)?)?;
    let c = if u0_mode == U0Mode::SplitFirst {
        bch_constant_with(h, n_d, true)?
    } else {
        comm_norm * comm_norm / 4.0
    };
    Ok(PartitionConstants { n_d, n_r, k: spec.batch_size, lambda: dh.lambda, gamma: dh.gamma, comm_norm, c })
}

/// Estimator values over an `n_d` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionScan {
    pub constants: Vec<PartitionConstants>,
    pub estimates: Vec<ErrorEstimate>,
    pub best_n_d: usize,
}

/// `{0, stride, 2 stride, ..., L}`, always ending at `L`.
pub fn n_d_grid(l: usize, stride: usize) -> Result<Vec<usize>> {
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    let mut g: Vec<usize> = (0..=l).step_by(stride).collect();
    if g.last() != Some(&l) {
        g.push(l);
    }
    Ok(g)
}

/// Minimizes the error estimator over [`n_d_grid`]; ties go to the smaller `n_d`.
pub fn optimal_partition(
    h: &PartitionedHamiltonian,
    sampler: &SamplerSpec,
    u0_mode: U0Mode,
    t: f64,
    n_gate: u64,
    stride: usize,
) -> Result<PartitionScan> {
    let grid = n_d_grid(h.len(), stride)?;
    let constants = grid
        .par_iter()
        .map(|&n_d| partition_constants(h, n_d, sampler, u0_mode))
        .collect::<Result<Vec<_>>>()?;
    let estimates = constants
        .iter()
        .map(|c| error_estimator(c.lambda, c.c, c.n_d, c.k, t, n_gate))
        .collect::<Result<Vec<_>>>()?;
    let best = argmin(estimates.iter().map(|e| e.total()));
    Ok(PartitionScan { best_n_d: grid[best], constants, estimates })
}

/// Index of the smallest value; the first one wins ties.
pub fn argmin(xs: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, x) in xs.into_iter().enumerate() {
        if x < best.1 {
            best = (i, x);
        }
    }
    best.0
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")));
    }
    Ok(())
}

/// Markov-inequality gate count:
/// `max{(n_d+1) Lambda t^2 / (eps^2 delta), (n_d+1) (2 t^4 comm^2 / (eps^2 delta))^{1/3}}`,
/// each branch setting one addend of the global bound to `eps^2 delta / 2`.
pub fn gate_count_markov(lambda: f64, comm_norm: f64, n_d: usize, t: f64, eps: f64, delta: f64) -> Result<f64> {
    check_nonneg("Lambda", lambda)?;
    check_nonneg("commutator norm", comm_norm)?;
    check_nonneg("t", t)?;
    check_prob("eps", eps)?;
    check_prob("delta", delta)?;
    let g = (n_d + 1) as f64;
    let variance = g * lambda * t * t / (eps * eps * delta);
    let splitting = g * (2.0 * t.powi(4) * comm_norm * comm_norm / (eps * eps * delta)).cbrt();
    Ok(variance.max(splitting))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConcentrationMode {
    /// Bounded differences from `Lambda` (importance sampling).
    Importance,
    /// Bounded differences from the almost-sure bound `Gamma` (uniform).
    Uniform,
}

/// McDiarmid gate count: `-(n_d+1) ln(delta) t^2 Lambda / (4 eps^2)` for
/// importance sampling, `-(n_d+1) ln(delta) t^2 Gamma^2 / eps^2` for uniform.
/// `delta = 1` gives 0.
pub fn gate_count_mcdiarmid(lambda_or_gamma: f64, n_d: usize, t: f64, eps: f64, delta: f64, mode: ConcentrationMode) -> Result<f64> {
    check_nonneg("constant", lambda_or_gamma)?;
    check_nonneg("t", t)?;
    check_prob("eps", eps)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1], got {delta}")));
    }
    let g = (n_d + 1) as f64;
    let ln = -delta.ln();
    Ok(match mode {
        ConcentrationMode::Importance => g * ln * t * t * lambda_or_gamma / (4.0 * eps * eps),
        ConcentrationMode::Uniform => g * ln * t * t * lambda_or_gamma * lambda_or_gamma / (eps * eps),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub constants: PartitionConstants,
    pub t: f64,
    pub dt: f64,
    pub eps: f64,
    pub delta: f64,
    pub n_gate: u64,
}

/// Every closed-form bound for one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub one_step_mse: f64,
    /// `None` when nothing is sampled.
    pub global_mse: Option<f64>,
    pub bias: Option<f64>,
    pub estimator: ErrorEstimate,
    pub gates_markov: f64,
    pub gates_mcdiarmid_importance: f64,
    pub gates_mcdiarmid_uniform: f64,
}

impl BoundReport {
    /// `expectation` feeds the bias bound; pass `None` to skip it.
    pub fn compute(inputs: BoundInputs, expectation: Option<f64>) -> Result<Self> {
        let c = inputs.constants;
        let k = c.k.max(1);
        let global_mse = if c.n_r > 0 {
            Some(global_mse_bound(c.lambda, c.gamma, c.comm_norm, inputs.t, inputs.dt, c.k, c.n_r)?)
        } else {
            None
        };
        Ok(BoundReport {
            inputs,
            one_step_mse: one_step_mse_bound(c.lambda, c.comm_norm, inputs.dt, k)?,
            global_mse,
            bias: expectation.map(|e| bias_bound(c.comm_norm, e, inputs.t, inputs.dt)),
            estimator: error_estimator(c.lambda, c.c, c.n_d, c.k, inputs.t, inputs.n_gate)?,
            gates_markov: gate_count_markov(c.lambda, c.comm_norm, c.n_d, inputs.t, inputs.eps, inputs.delta)?,
            gates_mcdiarmid_importance: gate_count_mcdiarmid(
                c.lambda,
                c.n_d,
                inputs.t,
                inputs.eps,
                inputs.delta,
                ConcentrationMode::Importance,
            )?,
            gates_mcdiarmid_uniform: gate_count_mcdiarmid(
                c.gamma,
                c.n_d,
                inputs.t,
                inputs.eps,
                inputs.delta,
                ConcentrationMode::Uniform,
            )?,
        })
    }
}
