use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybrid_trotter::analysis::{n_d_grid, partition_constants, BoundInputs, BoundReport, bias_expectation};
use hybrid_trotter::experiment::{
    cmd_gen_chain, cmd_inspect, execute, fmt_float, Command, ExperimentPlan, HamiltonianSource, InitialState,
};
use hybrid_trotter::hamiltonian::{partition, DEFAULT_COEFF_FLOOR};
use hybrid_trotter::{Error, SamplerMode, SamplerSpec, SchemeKind, StepControl, U0Mode};

#[derive(Parser)]
#[command(name = "htrot", version, about = "Hybrid deterministic/random Trotter simulation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a power-law Heisenberg chain in the Hamiltonian file format.
    GenChain {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        field_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print term magnitudes and per-partition constants.
    Inspect {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
        /// Comma-separated n_d values; defaults to 0, stride, ..., L.
        #[arg(long, value_delimiter = ',')]
        nd_grid: Option<Vec<usize>>,
        #[arg(long, default_value_t = 10)]
        stride: usize,
    },
    /// One ensemble run.
    Run(RunArgs),
    /// Ensembles at dt, dt/2, ..., with the MSE-vs-dt slope.
    SweepDt(RunArgs),
    /// Ensembles over an n_d grid at a fixed gate budget.
    SweepNd(RunArgs),
    /// Closed-form error bounds and gate counts.
    Bounds {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        steps: StepArgs,
        #[arg(long, default_value_t = 0)]
        nd: usize,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
    /// Re-run an experiment from its metadata record.
    Replay {
        metadata: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SourceArgs {
    /// Hamiltonian file.
    #[arg(long, conflicts_with = "chain", required_unless_present = "chain")]
    hamiltonian: Option<PathBuf>,
    /// Generate a Heisenberg chain of this length instead of reading a file.
    #[arg(long)]
    chain: Option<usize>,
    #[arg(long, default_value_t = 0)]
    field_seed: u64,
    /// Terms with smaller magnitude are dropped on load.
    #[arg(long, default_value_t = DEFAULT_COEFF_FLOOR)]
    coeff_floor: f64,
}

impl SourceArgs {
    fn source(&self) -> HamiltonianSource {
        match (&self.hamiltonian, self.chain) {
            (Some(p), _) => HamiltonianSource::File(p.clone()),
            (None, Some(n)) => HamiltonianSource::Chain { n, field_seed: self.field_seed },
            (None, None) => unreachable!("clap requires a source"),
        }
    }
}

#[derive(Args)]
struct SamplingArgs {
    /// uniform, importance or adaptive.
    #[arg(long, default_value = "importance")]
    sampler: String,
    /// Batch size (uniform sampling only).
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// exact, split1 or split2.
    #[arg(long, default_value = "exact")]
    u0: String,
}

impl SamplingArgs {
    fn spec(&self) -> Result<SamplerSpec, Error> {
        let mode: SamplerMode = self.sampler.parse()?;
        Ok(SamplerSpec { mode, batch_size: self.k })
    }
}

#[derive(Args)]
struct StepArgs {
    #[arg(long, default_value_t = 1.0)]
    t_final: f64,
    #[arg(long, conflicts_with = "gates")]
    dt: Option<f64>,
    /// Total gate budget; sets dt from the gates per step.
    #[arg(long)]
    gates: Option<u64>,
}

impl StepArgs {
    fn control(&self) -> StepControl {
        match (self.dt, self.gates) {
            (_, Some(g)) => StepControl::GateBudget(g),
            (Some(dt), None) => StepControl::Dt(dt),
            (None, None) => StepControl::Dt(0.0125),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[command(flatten)]
    steps: StepArgs,
    /// det1, det2, hyb1 or hyb2.
    #[arg(long, default_value = "hyb1")]
    scheme: String,
    #[arg(long, default_value_t = 0)]
    nd: usize,
    #[arg(long, default_value_t = 80)]
    ensembles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// ground, mixture or basis:<index>.
    #[arg(long, default_value = "ground")]
    init: String,
    /// Number of evenly spaced record times.
    #[arg(long, default_value_t = 10)]
    records: usize,
    /// Step sizes in a dt sweep.
    #[arg(long, default_value_t = 4)]
    levels: usize,
    /// Comparison time for a dt sweep (default: the horizon).
    #[arg(long)]
    at_time: Option<f64>,
    /// n_d spacing for a partition sweep.
    #[arg(long, default_value_t = 10)]
    stride: usize,
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn plan(&self, command: Command) -> Result<ExperimentPlan, Error> {
        let mut plan = ExperimentPlan::new(command, self.source.source());
        plan.coeff_floor = self.source.coeff_floor;
        plan.scheme = self.scheme.parse::<SchemeKind>()?;
        plan.n_d = self.nd;
        plan.sampler = self.sampling.spec()?;
        plan.u0_mode = self.sampling.u0.parse()?;
        plan.t_final = self.steps.t_final;
        plan.step = self.steps.control();
        plan.ensembles = self.ensembles;
        plan.seed = self.seed;
        plan.init = InitialState::parse(&self.init)?;
        plan.records = self.records;
        plan.levels = self.levels;
        plan.at_time = self.at_time;
        plan.stride = self.stride;
        Ok(plan)
    }
}

fn run_experiment(plan: &ExperimentPlan, out: &Path) -> Result<(), Error> {
    let (_, summary) = execute(plan, out)?;
    print!("{summary}");
    log::info!("results written to {}", out.display());
    Ok(())
}

fn bounds(
    source: &SourceArgs,
    sampling: &SamplingArgs,
    steps: &StepArgs,
    n_d: usize,
    eps: f64,
    delta: f64,
) -> Result<(), Error> {
    let h = source.source().load(source.coeff_floor)?;
    let spec = sampling.spec()?;
    let u0: U0Mode = sampling.u0.parse()?;
    let c = partition_constants(&h, n_d, &spec, u0)?;
    let gates_per_step = (u0.cost(n_d) + c.k) as f64;
    let (dt, n_gate) = match steps.control() {
        StepControl::Dt(dt) => (dt, (gates_per_step * steps.t_final / dt).round() as u64),
        StepControl::GateBudget(g) => (gates_per_step * steps.t_final / g as f64, g),
    };
    let (_, h1) = partition(&h, n_d)?;
    let expectation = bias_expectation(&h1, &SamplerSpec { batch_size: c.k.max(1), ..spec }, 0)?;
    let inputs = BoundInputs { constants: c, t: steps.t_final, dt, eps, delta, n_gate };
    let r = BoundReport::compute(inputs, Some(expectation.value))?;
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), fmt_float);
    println!("n_d = {}", c.n_d);
    println!("n_r = {}", c.n_r);
    println!("k = {}", c.k);
    println!("lambda = {}", fmt_float(c.lambda));
    println!("gamma = {}", fmt_float(c.gamma));
    println!("comm_norm = {}", fmt_float(c.comm_norm));
    println!("c = {}", fmt_float(c.c));
    println!("t = {}", fmt_float(inputs.t));
    println!("dt = {}", fmt_float(dt));
    println!("gates = {n_gate}");
    println!("eps = {eps}");
    println!("delta = {delta}");
    println!("one_step_mse_bound = {}", fmt_float(r.one_step_mse));
    println!("global_mse_bound = {}", opt(r.global_mse));
    println!("bias_bound = {}", opt(r.bias));
    println!("estimator = {}", fmt_float(r.estimator.total()));
    println!("estimator_variance = {}", fmt_float(r.estimator.variance));
    println!("estimator_bias = {}", fmt_float(r.estimator.bias));
    println!("# gate counts below use implied constant 1");
    println!("gates_markov = {}", fmt_float(r.gates_markov));
    println!("gates_mcdiarmid_importance = {}", fmt_float(r.gates_mcdiarmid_importance));
    println!("gates_mcdiarmid_uniform = {}", fmt_float(r.gates_mcdiarmid_uniform));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Cmd::GenChain { n, field_seed, out } => {
            let l = cmd_gen_chain(n, field_seed, &out)?;
            println!("wrote {l} terms to {}", out.display());
        }
        Cmd::Inspect { source, sampling, nd_grid, stride } => {
            let h = source.source().load(source.coeff_floor)?;
            let grid = match nd_grid {
                Some(g) => g,
                None => n_d_grid(h.len(), stride)?,
            };
            print!("{}", cmd_inspect(&h, &grid, &sampling.spec()?, sampling.u0.parse()?)?);
            if h.identity_offset() != 0.0 {
                println!("\n# identity coefficient {} contributes only a global phase", h.identity_offset());
            }
        }
        Cmd::Run(a) => run_experiment(&a.plan(Command::Run)?, &a.out)?,
        Cmd::SweepDt(a) => run_experiment(&a.plan(Command::SweepDt)?, &a.out)?,
        Cmd::SweepNd(a) => run_experiment(&a.plan(Command::SweepNd)?, &a.out)?,
        Cmd::Bounds { source, sampling, steps, nd, eps, delta } => bounds(&source, &sampling, &steps, nd, eps, delta)?,
        Cmd::Replay { metadata, out } => {
            let plan = ExperimentPlan::from_metadata(&std::fs::read_to_string(metadata)?)?;
            run_experiment(&plan, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                e if e.is_numerical() => 3,
                Error::Io(_) => 1,
                _ => 2,
            })
        }
    }
}
