//! Experiment plans and drivers: single ensemble runs, step-size sweeps and
//! partition sweeps, with CSV output and a replayable metadata record.
//!
//! Every output directory gets `metadata.txt` (the plan as `key = value`
//! lines plus informational constants), `summary.txt` (fitted quantities)
//! and one CSV per ensemble.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rand::Rng;

use crate::analysis::{
    argmin, loglog_slope, optimal_partition, partition_constants, reference_propagator,
    run_ensemble_with, EnsembleStats, ErrorEstimate, PartitionConstants,
};
use crate::error::{Error, Result};
use crate::evolve::{ExactPropagator, StateVector};
use crate::hamiltonian::{heisenberg_chain, load_hamiltonian, PartitionedHamiltonian, DEFAULT_COEFF_FLOOR};
use crate::sampling::{SamplerMode, SamplerSpec};
use crate::scheme::{SchemeConfig, SchemeKind, StepControl, U0Mode};

/// CSV header shared by every ensemble table.
pub const ENSEMBLE_HEADER: [&str; 6] = ["time", "mse", "mse_stderr", "fidelity_err", "bias_sq", "gate_count"];

/// Eigenmodes mixed into the `mixture` initial state, capped by the dimension.
pub const MIXTURE_MODES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    SweepDt,
    SweepNd,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::SweepDt => "sweep-dt",
            Command::SweepNd => "sweep-nd",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "run" => Ok(Command::Run),
            "sweep-dt" => Ok(Command::SweepDt),
            "sweep-nd" => Ok(Command::SweepNd),
            _ => Err(Error::invalid(format!("unknown command `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HamiltonianSource {
    File(PathBuf),
    Chain { n: usize, field_seed: u64 },
}

impl HamiltonianSource {
    pub fn load(&self, coeff_floor: f64) -> Result<PartitionedHamiltonian> {
        match self {
            HamiltonianSource::File(p) => load_hamiltonian(p, coeff_floor),
            HamiltonianSource::Chain { n, field_seed } => heisenberg_chain(*n, *field_seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    /// Lowest eigenvector of the full Hamiltonian.
    Ground,
    /// Complex-Gaussian combination of the `min(100, 2^n)` lowest eigenmodes.
    Mixture,
    /// Computational basis state.
    Basis(usize),
}

impl InitialState {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ground" => Ok(InitialState::Ground),
            "mixture" => Ok(InitialState::Mixture),
            _ => match s.strip_prefix("basis:").map(str::parse) {
                Some(Ok(i)) => Ok(InitialState::Basis(i)),
                _ => Err(Error::invalid(format!("unknown initial state `{s}` (ground, mixture, basis:<index>)"))),
            },
        }
    }

    pub fn label(self) -> String {
        match self {
            InitialState::Ground => "ground".into(),
            InitialState::Mixture => "mixture".into(),
            InitialState::Basis(i) => format!("basis:{i}"),
        }
    }
}

/// Builds the initial state. Mixture coefficients come from a stream of
/// `seed` disjoint from every trajectory stream.
pub fn initial_state(prop: &ExactPropagator, init: InitialState, seed: u64) -> Result<StateVector> {
    let n = prop.n_qubits();
    match init {
        InitialState::Ground => Ok(prop.ground_state()?.1),
        InitialState::Basis(i) => StateVector::basis(n, i),
        InitialState::Mixture => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::MAX);
            let modes = prop.ascending_modes();
            let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
            for &k in modes.iter().take(MIXTURE_MODES) {
                let c = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                for (a, v) in amps.iter_mut().zip(prop.eigenvector(k)?.amplitudes()) {
                    *a += c * v;
                }
            }
            StateVector::normalized(n, amps)
        }
    }
}

/// A complete, replayable experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub command: Command,
    pub source: HamiltonianSource,
    pub coeff_floor: f64,
    pub scheme: SchemeKind,
    pub n_d: usize,
    pub sampler: SamplerSpec,
    pub u0_mode: U0Mode,
    pub t_final: f64,
    pub step: StepControl,
    pub ensembles: usize,
    pub seed: u64,
    pub init: InitialState,
    /// Evenly spaced record times `T i / records`, `i = 1..=records`.
    pub records: usize,
    /// Step sizes in a dt sweep: `dt, dt/2, ..., dt/2^(levels-1)`.
    pub levels: usize,
    /// Time at which dt-sweep errors are compared; defaults to the horizon.
    pub at_time: Option<f64>,
    /// Spacing of the `n_d` grid in a partition sweep.
    pub stride: usize,
}

impl ExperimentPlan {
    pub fn new(command: Command, source: HamiltonianSource) -> Self {
        ExperimentPlan {
            command,
            source,
            coeff_floor: DEFAULT_COEFF_FLOOR,
            scheme: SchemeKind::HybridFirst,
            n_d: 0,
            sampler: SamplerSpec::importance(),
            u0_mode: U0Mode::Exact,
            t_final: 1.0,
            step: StepControl::Dt(0.0125),
            ensembles: crate::analysis::DEFAULT_ENSEMBLE,
            seed: 0,
            init: InitialState::Ground,
            records: 10,
            levels: 4,
            at_time: None,
            stride: 10,
        }
    }

    pub fn scheme_config(&self, n_d: usize, step: StepControl) -> SchemeConfig {
        SchemeConfig {
            scheme: self.scheme,
            n_d,
            sampler: self.sampler,
            u0_mode: self.u0_mode,
            t_final: self.t_final,
            step,
            base_seed: self.seed,
        }
    }

    fn record_times(&self) -> Vec<f64> {
        (1..=self.records).map(|i| self.t_final * i as f64 / self.records as f64).collect()
    }

    /// Record times clamped to the horizon `cfg` actually reaches, which is
    /// shorter than `t_final` when the step size does not divide it.
    fn record_times_for(&self, cfg: &SchemeConfig, n_terms: usize) -> Result<Vec<f64>> {
        let horizon = cfg.plan(n_terms)?.horizon();
        Ok(self.record_times().into_iter().map(|t| t.min(horizon)).collect())
    }

    /// The plan as `key = value` lines.
    pub fn to_metadata(&self) -> String {
        let mut m = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(m, "{k} = {v}");
        };
        kv("command", self.command.name().into());
        match &self.source {
            HamiltonianSource::File(p) => kv("hamiltonian", p.display().to_string()),
            HamiltonianSource::Chain { n, field_seed } => {
                kv("chain", n.to_string());
                kv("field_seed", field_seed.to_string());
            }
        }
        kv("coeff_floor", self.coeff_floor.to_string());
        kv("scheme", self.scheme.name().into());
        kv("nd", self.n_d.to_string());
        kv("sampler", self.sampler.mode.name().into());
        kv("k", self.sampler.batch_size.to_string());
        kv("u0", self.u0_mode.name().into());
        kv("t_final", self.t_final.to_string());
        match self.step {
            StepControl::Dt(dt) => kv("dt", dt.to_string()),
            StepControl::GateBudget(g) => kv("gates", g.to_string()),
        }
        kv("ensembles", self.ensembles.to_string());
        kv("seed", self.seed.to_string());
        kv("init", self.init.label());
        kv("records", self.records.to_string());
        kv("levels", self.levels.to_string());
        if let Some(t) = self.at_time {
            kv("at_time", t.to_string());
        }
        kv("stride", self.stride.to_string());
        m
    }

    /// Parses a metadata record. Keys under `info.` are informational and
    /// ignored; unknown keys are errors.
    pub fn from_metadata(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected `key = value`, got `{line}`") })?;
            let k = k.trim();
            if k.starts_with("info.") {
                continue;
            }
            map.insert(k.to_string(), v.trim().to_string());
        }
        let mut take = |k: &str| map.remove(k);
        fn num<T: std::str::FromStr>(k: &str, v: Option<String>) -> Result<Option<T>> {
            v.map(|s| s.parse::<T>().map_err(|_| Error::invalid(format!("bad value `{s}` for `{k}`"))))
                .transpose()
        }
        let command = Command::parse(&take("command").ok_or_else(|| Error::invalid("missing `command`"))?)?;
        let source = match (take("hamiltonian"), take("chain")) {
            (Some(p), None) => HamiltonianSource::File(PathBuf::from(p)),
            (None, Some(n)) => HamiltonianSource::Chain {
                n: num("chain", Some(n))?.unwrap_or_default(),
                field_seed: num("field_seed", take("field_seed"))?.unwrap_or(0),
            },
            _ => return Err(Error::invalid("exactly one of `hamiltonian` and `chain` is required")),
        };
        let mut plan = ExperimentPlan::new(command, source);
        if let Some(v) = num("coeff_floor", take("coeff_floor"))? {
            plan.coeff_floor = v;
        }
        if let Some(v) = take("scheme") {
            plan.scheme = v.parse()?;
        }
        if let Some(v) = num("nd", take("nd"))? {
            plan.n_d = v;
        }
        let mode: SamplerMode = take("sampler").map(|s| s.parse()).transpose()?.unwrap_or(SamplerMode::Importance);
        let k = num("k", take("k"))?.unwrap_or(1);
        plan.sampler = SamplerSpec { mode, batch_size: k };
        if let Some(v) = take("u0") {
            plan.u0_mode = v.parse()?;
        }
        if let Some(v) = num("t_final", take("t_final"))? {
            plan.t_final = v;
        }
        plan.step = match (num::<f64>("dt", take("dt"))?, num::<u64>("gates", take("gates"))?) {
            (Some(dt), None) => StepControl::Dt(dt),
            (None, Some(g)) => StepControl::GateBudget(g),
            _ => return Err(Error::invalid("exactly one of `dt` and `gates` is required")),
        };
        if let Some(v) = num("ensembles", take("ensembles"))? {
            plan.ensembles = v;
        }
        if let Some(v) = num("seed", take("seed"))? {
            plan.seed = v;
        }
        if let Some(v) = take("init") {
            plan.init = InitialState::parse(&v)?;
        }
        if let Some(v) = num("records", take("records"))? {
            plan.records = v;
        }
        if let Some(v) = num("levels", take("levels"))? {
            plan.levels = v;
        }
        plan.at_time = num("at_time", take("at_time"))?;
        if let Some(v) = num("stride", take("stride"))? {
            plan.stride = v;
        }
        if let Some(k) = map.keys().next() {
            return Err(Error::invalid(format!("unknown metadata key `{k}`")));
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records == 0 {
            return Err(Error::invalid("at least one record time is required"));
        }
        if self.ensembles < 2 {
            return Err(Error::invalid("ensemble size must be at least 2"));
        }
        match (self.command, self.step) {
            (Command::SweepDt, StepControl::GateBudget(_)) => Err(Error::invalid("sweep-dt needs --dt")),
            (Command::SweepNd, StepControl::Dt(_)) => Err(Error::invalid("sweep-nd needs --gates")),
            (Command::SweepDt, _) if self.levels == 0 => Err(Error::invalid("sweep-dt needs at least one level")),
            (Command::SweepNd, _) if !self.scheme.is_hybrid() => Err(Error::invalid("sweep-nd needs a hybrid scheme")),
            _ => Ok(()),
        }
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("{other:?}")),
    }
}

/// Writes an ensemble table with [`ENSEMBLE_HEADER`].
pub fn write_ensemble_csv(path: &Path, stats: &EnsembleStats) -> Result<()> {
    let rows = (0..stats.times.len()).map(|k| {
        vec![
            fmt_float(stats.times[k]),
            fmt_float(stats.mse[k]),
            fmt_float(stats.mse_stderr[k]),
            fmt_float(stats.fidelity_err[k]),
            fmt_float(stats.bias_sq[k]),
            stats.gate_count[k].to_string(),
        ]
    });
    write_csv(path, &ENSEMBLE_HEADER, rows)
}

/// Results of a dt sweep.
#[derive(Debug, Clone)]
pub struct SweepDtResult {
    pub dts: Vec<f64>,
    pub stats: Vec<EnsembleStats>,
    pub at_time: f64,
    /// MSE and standard error at `at_time` for each dt.
    pub mse_at: Vec<(f64, f64)>,
    /// Log-log slope of MSE against dt.
    pub slope: f64,
    /// Geometric mean of `MSE / dt`.
    pub prefactor: f64,
}

/// Results of an `n_d` sweep at fixed gate budget.
#[derive(Debug, Clone)]
pub struct SweepNdResult {
    pub grid: Vec<usize>,
    pub stats: Vec<EnsembleStats>,
    pub constants: Vec<PartitionConstants>,
    pub estimates: Vec<ErrorEstimate>,
    /// Final-time MSE and standard error per grid point.
    pub final_mse: Vec<(f64, f64)>,
    pub empirical_best: usize,
    pub estimator_best: usize,
}

/// What an executed plan produced.
#[derive(Debug, Clone)]
pub enum Outcome {
    Run(EnsembleStats),
    SweepDt(SweepDtResult),
    SweepNd(SweepNdResult),
}

/// Prepared inputs shared by all drivers.
pub struct Setup {
    pub hamiltonian: PartitionedHamiltonian,
    pub reference: ExactPropagator,
    pub psi0: StateVector,
}

pub fn setup(plan: &ExperimentPlan) -> Result<Setup> {
    plan.validate()?;
    let h = plan.source.load(plan.coeff_floor)?;
    let reference = reference_propagator(&h)?;
    let psi0 = initial_state(&reference, plan.init, plan.seed)?;
    Ok(Setup { hamiltonian: h, reference, psi0 })
}

pub fn run_plan(plan: &ExperimentPlan, s: &Setup) -> Result<EnsembleStats> {
    let cfg = plan.scheme_config(plan.n_d, plan.step);
    let times = plan.record_times_for(&cfg, s.hamiltonian.len())?;
    run_ensemble_with(&s.reference, &s.hamiltonian, &cfg, &s.psi0, plan.ensembles, &times)
}

pub fn sweep_dt(plan: &ExperimentPlan, s: &Setup) -> Result<SweepDtResult> {
    let StepControl::Dt(dt0) = plan.step else {
        return Err(Error::invalid("sweep-dt needs --dt"));
    };
    let at_time = plan.at_time.unwrap_or(plan.t_final);
    let mut times = plan.record_times();
    times.push(at_time);
    let dts: Vec<f64> = (0..plan.levels).map(|i| dt0 / (1u64 << i) as f64).collect();
    let mut stats = Vec::with_capacity(dts.len());
    let mut mse_at = Vec::with_capacity(dts.len());
    for &dt in &dts {
        let cfg = plan.scheme_config(plan.n_d, StepControl::Dt(dt));
        let st = run_ensemble_with(&s.reference, &s.hamiltonian, &cfg, &s.psi0, plan.ensembles, &times)?;
        let k = nearest_index(&st.times, at_time);
        mse_at.push((st.mse[k], st.mse_stderr[k]));
        stats.push(st);
    }
    let mses: Vec<f64> = mse_at.iter().map(|m| m.0).collect();
    let (slope, prefactor) = if dts.len() >= 2 && mses.iter().all(|&m| m > 0.0) {
        let log_mean = dts.iter().zip(&mses).map(|(d, m)| (m / d).ln()).sum::<f64>() / dts.len() as f64;
        (loglog_slope(&dts, &mses)?, log_mean.exp())
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(SweepDtResult { dts, stats, at_time, mse_at, slope, prefactor })
}

fn nearest_index(times: &[f64], t: f64) -> usize {
    argmin(times.iter().map(|x| (x - t).abs()))
}

pub fn sweep_nd(plan: &ExperimentPlan, s: &Setup) -> Result<SweepNdResult> {
    let StepControl::GateBudget(n_gate) = plan.step else {
        return Err(Error::invalid("sweep-nd needs --gates"));
    };
    let h = &s.hamiltonian;
    let scan = optimal_partition(h, &plan.sampler, plan.u0_mode, plan.t_final, n_gate, plan.stride)?;
    let grid: Vec<usize> = scan.constants.iter().map(|c| c.n_d).collect();
    let mut stats = Vec::with_capacity(grid.len());
    let mut final_mse = Vec::with_capacity(grid.len());
    for &n_d in &grid {
        let mut sampler = plan.sampler;
        if sampler.mode == SamplerMode::UniformBatch {
            sampler.batch_size = sampler.batch_size.min((h.len() - n_d).max(1));
        }
        let mut cfg = plan.scheme_config(n_d, plan.step);
        cfg.sampler = sampler;
        let times = plan.record_times_for(&cfg, h.len())?;
        let st = run_ensemble_with(&s.reference, h, &cfg, &s.psi0, plan.ensembles, &times)?;
        let last = st.times.len() - 1;
        final_mse.push((st.mse[last], st.mse_stderr[last]));
        stats.push(st);
    }
    let empirical_best = grid[argmin(final_mse.iter().map(|m| m.0))];
    Ok(SweepNdResult {
        grid,
        stats,
        constants: scan.constants,
        estimates: scan.estimates,
        final_mse,
        empirical_best,
        estimator_best: scan.best_n_d,
    })
}

fn info_lines(plan: &ExperimentPlan, s: &Setup) -> Result<String> {
    let h = &s.hamiltonian;
    let mut m = String::new();
    let _ = writeln!(m, "info.n_qubits = {}", h.n_qubits());
    let _ = writeln!(m, "info.terms = {}", h.len());
    let _ = writeln!(m, "info.global_phase_coeff = {}", h.identity_offset());
    let _ = writeln!(m, "info.gate_accounting = one unit per Pauli exponential; exact U0 charged n_d units");
    let _ = writeln!(m, "info.rng = ChaCha8 seeded with seed, stream = trajectory index");
    if plan.command != Command::SweepNd && plan.scheme.is_hybrid() && plan.n_d <= h.len() {
        let c = partition_constants(h, plan.n_d, &plan.sampler, plan.u0_mode)?;
        let _ = writeln!(m, "info.lambda = {}", c.lambda);
        let _ = writeln!(m, "info.gamma = {}", c.gamma);
        let _ = writeln!(m, "info.comm_norm = {}", c.comm_norm);
        let _ = writeln!(m, "info.c = {}", c.c);
    }
    Ok(m)
}

/// Runs `plan`, writing every output file under `out`. Returns the typed
/// results and the summary text.
pub fn execute(plan: &ExperimentPlan, out: &Path) -> Result<(Outcome, String)> {
    let s = setup(plan)?;
    fs::create_dir_all(out)?;
    let mut summary = String::new();
    let outcome = match plan.command {
        Command::Run => {
            let st = run_plan(plan, &s)?;
            write_ensemble_csv(&out.join("ensemble.csv"), &st)?;
            let last = st.times.len() - 1;
            let _ = writeln!(summary, "dt = {}", st.dt);
            let _ = writeln!(summary, "final_time = {}", st.times[last]);
            let _ = writeln!(summary, "final_mse = {}", st.mse[last]);
            let _ = writeln!(summary, "final_mse_stderr = {}", st.mse_stderr[last]);
            let _ = writeln!(summary, "total_gates = {}", st.gate_count[last]);
            Outcome::Run(st)
        }
        Command::SweepDt => {
            let r = sweep_dt(plan, &s)?;
            for (i, st) in r.stats.iter().enumerate() {
                write_ensemble_csv(&out.join(format!("dt_{i}.csv")), st)?;
            }
            let rows = r.dts.iter().zip(&r.mse_at).map(|(dt, (m, se))| vec![fmt_float(*dt), fmt_float(*m), fmt_float(*se)]);
            write_csv(&out.join("mse_vs_dt.csv"), &["dt", "mse", "mse_stderr"], rows)?;
            let _ = writeln!(summary, "at_time = {}", r.at_time);
            let _ = writeln!(summary, "slope = {}", r.slope);
            let _ = writeln!(summary, "prefactor = {}", r.prefactor);
            Outcome::SweepDt(r)
        }
        Command::SweepNd => {
            let r = sweep_nd(plan, &s)?;
            for (n_d, st) in r.grid.iter().zip(&r.stats) {
                write_ensemble_csv(&out.join(format!("nd_{n_d}.csv")), st)?;
            }
            let header = [
                "n_d", "dt", "mse", "mse_stderr", "estimator", "estimator_variance", "estimator_bias", "lambda", "gamma",
                "comm_norm", "c",
            ];
            let rows = (0..r.grid.len()).map(|i| {
                let (c, e) = (&r.constants[i], &r.estimates[i]);
                vec![
                    r.grid[i].to_string(),
                    fmt_float(r.stats[i].dt),
                    fmt_float(r.final_mse[i].0),
                    fmt_float(r.final_mse[i].1),
                    fmt_float(e.total()),
                    fmt_float(e.variance),
                    fmt_float(e.bias),
                    fmt_float(c.lambda),
                    fmt_float(c.gamma),
                    fmt_float(c.comm_norm),
                    fmt_float(c.c),
                ]
            });
            write_csv(&out.join("mse_vs_nd.csv"), &header, rows)?;
            let _ = writeln!(summary, "empirical_best_nd = {}", r.empirical_best);
            let _ = writeln!(summary, "estimator_best_nd = {}", r.estimator_best);
            Outcome::SweepNd(r)
        }
    };
    fs::write(out.join("metadata.txt"), plan.to_metadata() + &info_lines(plan, &s)?)?;
    fs::write(out.join("summary.txt"), &summary)?;
    Ok((outcome, summary))
}

/// Writes the chain Hamiltonian file; identical seeds give identical bytes.
pub fn cmd_gen_chain(n: usize, field_seed: u64, out: &Path) -> Result<usize> {
    let h = heisenberg_chain(n, field_seed)?;
    fs::write(out, h.to_file_string())?;
    Ok(h.len())
}

/// Term magnitudes (descending) and per-`n_d` constants as two CSV blocks.
pub fn cmd_inspect(h: &PartitionedHamiltonian, grid: &[usize], sampler: &SamplerSpec, u0_mode: U0Mode) -> Result<String> {
    let mut out = String::from("rank,coeff,magnitude,pauli\n");
    for (i, t) in h.terms().iter().enumerate() {
        let _ = writeln!(out, "{i},{},{},{}", t.coeff, t.coeff.abs(), t.pauli);
    }
    out.push_str("\nn_d,n_r,k,lambda,gamma,comm_norm,c\n");
    for &n_d in grid {
        let c = partition_constants(h, n_d, sampler, u0_mode)?;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.n_d,
            c.n_r,
            c.k,
            fmt_float(c.lambda),
            fmt_float(c.gamma),
            fmt_float(c.comm_norm),
            fmt_float(c.c)
        );
    }
    Ok(out)
}
