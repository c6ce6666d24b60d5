//! Evolution schemes: deterministic first-order and Strang splitting, and the
//! hybrid method that evolves `H0` deterministically while sampling `H1`.
//!
//! Term lists are stored largest first. A hybrid step applies the sampled
//! exponentials before `U0`; inside a batch they are applied from the
//! smallest-magnitude selected term to the largest (descending list index).
//! With a full batch this makes the first-order hybrid step identical to a
//! first-order step over the whole list.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evolve::{apply_pauli_rotation, trotter_step_first_order, trotter_step_symmetric, ExactPropagator, StateVector};
use crate::hamiltonian::PartitionedHamiltonian;
use crate::pauli::{HamiltonianTerm, TermSum};
use crate::sampling::{BatchDraw, Sampler, SamplerSpec};

/// Relative slack when checking that a step size divides the horizon.
const DIVISIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    DeterministicFirst,
    DeterministicSymmetric,
    HybridFirst,
    HybridSymmetric,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::DeterministicFirst => "det1",
            SchemeKind::DeterministicSymmetric => "det2",
            SchemeKind::HybridFirst => "hyb1",
            SchemeKind::HybridSymmetric => "hyb2",
        }
    }

    pub fn is_hybrid(self) -> bool {
        matches!(self, SchemeKind::HybridFirst | SchemeKind::HybridSymmetric)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "det1" => Ok(SchemeKind::DeterministicFirst),
            "det2" => Ok(SchemeKind::DeterministicSymmetric),
            "hyb1" => Ok(SchemeKind::HybridFirst),
            "hyb2" => Ok(SchemeKind::HybridSymmetric),
            _ => Err(Error::invalid(format!("unknown scheme `{s}`"))),
        }
    }
}

/// How `U0 = exp(-i dt H0)` is applied in hybrid schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum U0Mode {
    /// Dense propagator; charged `n_d` gates as if split.
    Exact,
    /// First-order product over `H0`, `n_d` gates.
    SplitFirst,
    /// Strang product over `H0`, `2 n_d - 1` gates.
    SplitSymmetric,
}

impl U0Mode {
    pub fn name(self) -> &'static str {
        match self {
            U0Mode::Exact => "exact",
            U0Mode::SplitFirst => "split1",
            U0Mode::SplitSymmetric => "split2",
        }
    }

    /// Gates charged for one application over `n_d` terms.
    pub fn cost(self, n_d: usize) -> usize {
        match self {
            U0Mode::Exact | U0Mode::SplitFirst => n_d,
            U0Mode::SplitSymmetric => (2 * n_d).saturating_sub(1),
        }
    }
}

impl fmt::Display for U0Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for U0Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(U0Mode::Exact),
            "split1" => Ok(U0Mode::SplitFirst),
            "split2" => Ok(U0Mode::SplitSymmetric),
            _ => Err(Error::invalid(format!("unknown U0 mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepControl {
    Dt(f64),
    /// Total gate budget over the horizon; `dt = gates_per_step * T / budget`.
    GateBudget(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    pub n_d: usize,
    pub sampler: SamplerSpec,
    pub u0_mode: U0Mode,
    pub t_final: f64,
    pub step: StepControl,
    pub base_seed: u64,
}

impl SchemeConfig {
    /// Gates per step for a Hamiltonian with `l` terms.
    pub fn gates_per_step(&self, l: usize) -> usize {
        let n_d = self.n_d.min(l);
        let k = self.sampler.effective_batch(l - n_d);
        match self.scheme {
            SchemeKind::DeterministicFirst => l,
            SchemeKind::DeterministicSymmetric => (2 * l).saturating_sub(1),
            SchemeKind::HybridFirst => self.u0_mode.cost(n_d) + k,
            SchemeKind::HybridSymmetric => self.u0_mode.cost(n_d) + 2 * k,
        }
    }

    /// Resolves the step size and step count for `l` terms.
    pub fn plan(&self, l: usize) -> Result<StepPlan> {
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::invalid(format!("horizon must be finite and nonnegative, got {}", self.t_final)));
        }
        let gates_per_step = self.gates_per_step(l);
        let dt = match self.step {
            StepControl::Dt(dt) => dt,
            StepControl::GateBudget(0) => return Err(Error::invalid("gate budget must be positive")),
            StepControl::GateBudget(n) => gates_per_step as f64 * self.t_final / n as f64,
        };
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("step size must be positive, got {dt}")));
        }
        let ratio = self.t_final / dt;
        let nearest = ratio.round();
        let n_steps = if (ratio - nearest).abs() <= DIVISIBILITY_TOL * nearest.max(1.0) {
            nearest as usize
        } else {
            let n = ratio.floor() as usize;
            log::warn!(
                "dt = {dt} does not divide T = {}; stopping after {n} steps at t = {}",
                self.t_final,
                n as f64 * dt
            );
            n
        };
        Ok(StepPlan { dt, n_steps, gates_per_step })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPlan {
    pub dt: f64,
    pub n_steps: usize,
    pub gates_per_step: usize,
}

impl StepPlan {
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn total_gates(&self) -> u64 {
        (self.n_steps * self.gates_per_step) as u64
    }

    /// Snaps each time to the nearest step index, sorted and deduplicated.
    pub fn snap_times(&self, times: &[f64]) -> Result<Vec<usize>> {
        let mut steps = times
            .iter()
            .map(|&t| {
                let s = (t / self.dt).round();
                if !(s >= 0.0 && s <= self.n_steps as f64) {
                    return Err(Error::invalid(format!(
                        "record time {t} outside [0, {}]",
                        self.horizon()
                    )));
                }
                Ok(s as usize)
            })
            .collect::<Result<Vec<_>>>()?;
        steps.sort_unstable();
        steps.dedup();
        Ok(steps)
    }
}

/// Per-trajectory random stream: ChaCha8 keyed by `base_seed`, stream id
/// `trajectory`. Streams are independent of evaluation order.
pub fn trajectory_rng(base_seed: u64, trajectory: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(trajectory);
    rng
}

/// Everything one step needs, prepared once and shared by all trajectories.
#[derive(Debug, Clone)]
pub struct Stepper {
    scheme: SchemeKind,
    u0_mode: U0Mode,
    n_qubits: usize,
    all_terms: Vec<HamiltonianTerm>,
    n_d: usize,
    u0: Option<ExactPropagator>,
    sampler: Sampler,
    plan: StepPlan,
}

impl Stepper {
    pub fn new(h: &PartitionedHamiltonian, cfg: &SchemeConfig) -> Result<Self> {
        let l = h.len();
        if cfg.scheme.is_hybrid() && cfg.n_d > l {
            return Err(Error::invalid(format!("n_d = {} exceeds the term count {l}", cfg.n_d)));
        }
        let n_d = if cfg.scheme.is_hybrid() { cfg.n_d } else { l };
        let h1 = &h.terms()[n_d..];
        let sampler = Sampler::new(cfg.sampler, h1)?;
        let u0 = if cfg.scheme.is_hybrid() && cfg.u0_mode == U0Mode::Exact && n_d > 0 {
            Some(ExactPropagator::new(&TermSum::from_terms(h.n_qubits(), &h.terms()[..n_d])?)?)
        } else {
            None
        };
        Ok(Stepper {
            scheme: cfg.scheme,
            u0_mode: cfg.u0_mode,
            n_qubits: h.n_qubits(),
            all_terms: h.terms().to_vec(),
            n_d,
            u0,
            sampler,
            plan: cfg.plan(l)?,
        })
    }

    pub fn plan(&self) -> &StepPlan {
        &self.plan
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    fn h0(&self) -> &[HamiltonianTerm] {
        &self.all_terms[..self.n_d]
    }

    fn h1(&self) -> &[HamiltonianTerm] {
        &self.all_terms[self.n_d..]
    }

    /// Advances one step of size `plan().dt`; returns the gates used.
    pub fn step(&self, state: &mut StateVector, rng: &mut ChaCha8Rng) -> Result<usize> {
        let dt = self.plan.dt;
        match self.scheme {
            SchemeKind::DeterministicFirst => trotter_step_first_order(state, &self.all_terms, dt),
            SchemeKind::DeterministicSymmetric => trotter_step_symmetric(state, &self.all_terms, dt),
            SchemeKind::HybridFirst => {
                let draw = self.sampler.draw_for_state(self.h1(), state, rng)?;
                let mut gates = self.apply_batch(state, &draw, dt, true)?;
                gates += self.apply_u0(state, dt)?;
                Ok(gates)
            }
            SchemeKind::HybridSymmetric => {
                let draw = self.sampler.draw_for_state(self.h1(), state, rng)?;
                let mut gates = self.apply_batch(state, &draw, dt / 2.0, false)?;
                gates += self.apply_u0(state, dt)?;
                gates += self.apply_batch(state, &draw, dt / 2.0, true)?;
                Ok(gates)
            }
        }
    }

    /// Applies `exp(-i dt w_l h_l)` over the draw, smallest term first when
    /// `smallest_first`, else largest first.
    fn apply_batch(&self, state: &mut StateVector, draw: &BatchDraw, dt: f64, smallest_first: bool) -> Result<usize> {
        let h1 = self.h1();
        let mut apply = |(j, w): (usize, f64)| apply_pauli_rotation(state, &h1[j], dt * w);
        if smallest_first {
            draw.iter().rev().try_for_each(&mut apply)?;
        } else {
            draw.iter().try_for_each(&mut apply)?;
        }
        Ok(draw.len())
    }

    fn apply_u0(&self, state: &mut StateVector, dt: f64) -> Result<usize> {
        match (self.u0_mode, &self.u0) {
            (U0Mode::Exact, Some(p)) => {
                p.apply(state, dt)?;
                Ok(self.n_d)
            }
            (U0Mode::Exact, None) => Ok(0),
            (U0Mode::SplitFirst, _) => trotter_step_first_order(state, self.h0(), dt),
            (U0Mode::SplitSymmetric, _) => trotter_step_symmetric(state, self.h0(), dt),
        }
    }

    /// Runs trajectory number `index` from `psi0`, keeping states at the
    /// given step indices (sorted).
    pub fn run(&self, psi0: &StateVector, record_steps: &[usize], base_seed: u64, index: u64) -> Result<Trajectory> {
        if psi0.n_qubits() != self.n_qubits {
            return Err(Error::QubitMismatch(self.n_qubits, psi0.n_qubits()));
        }
        psi0.check_norm()?;
        let mut rng = trajectory_rng(base_seed, index);
        let mut state = psi0.clone();
        let mut gates = 0u64;
        let mut records = Vec::with_capacity(record_steps.len());
        let mut next = record_steps.iter().peekable();
        for n in 0..=self.plan.n_steps {
            while next.peek().is_some_and(|&&s| s == n) {
                next.next();
                state.check_norm()?;
                records.push(Record { step: n, time: n as f64 * self.plan.dt, gates, state: state.clone() });
            }
            if n == self.plan.n_steps {
                break;
            }
            gates += self.step(&mut state, &mut rng)? as u64;
        }
        if let Some(s) = next.next() {
            return Err(Error::invalid(format!("record step {s} beyond the last step {}", self.plan.n_steps)));
        }
        Ok(Trajectory { records, final_state: state, total_gates: gates })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub step: usize,
    pub time: f64,
    /// Gates applied before this snapshot.
    pub gates: u64,
    pub state: StateVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub final_state: StateVector,
    pub total_gates: u64,
}

/// One trajectory (index 0 of the configured seed) with states recorded at
/// the step nearest to each requested time.
pub fn run_trajectory(
    h: &PartitionedHamiltonian,
    cfg: &SchemeConfig,
    psi0: &StateVector,
    record_times: &[f64],
) -> Result<Trajectory> {
    let stepper = Stepper::new(h, cfg)?;
    let steps = stepper.plan().snap_times(record_times)?;
    stepper.run(psi0, &steps, cfg.base_seed, 0)
}

/// Exact evolution under the full Hamiltonian at the requested times.
pub fn run_reference(h: &PartitionedHamiltonian, psi0: &StateVector, record_times: &[f64]) -> Result<Trajectory> {
    let prop = ExactPropagator::new(&h.full_sum()?)?;
    reference_states(&prop, psi0, record_times)
}

/// [`run_reference`] with a prebuilt propagator. Times must be nondecreasing.
pub fn reference_states(prop: &ExactPropagator, psi0: &StateVector, record_times: &[f64]) -> Result<Trajectory> {
    let mut records = Vec::with_capacity(record_times.len());
    for (i, &t) in record_times.iter().enumerate() {
        if i > 0 && t < record_times[i - 1] {
            return Err(Error::invalid("reference times must be nondecreasing"));
        }
        let mut s = psi0.clone();
        prop.apply(&mut s, t)?;
        records.push(Record { step: i, time: t, gates: 0, state: s });
    }
    let final_state = records.last().map(|r| r.state.clone()).unwrap_or_else(|| psi0.clone());
    Ok(Trajectory { records, final_state, total_gates: 0 })
}
