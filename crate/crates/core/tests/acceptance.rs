//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use hybrid_trotter::analysis::{global_mse_bound, loglog_slope, partition_constants, run_ensemble};
use hybrid_trotter::evolve::{trotter_step_first_order, trotter_step_symmetric};
use hybrid_trotter::experiment::{
    execute, setup, sweep_dt, sweep_nd, Command, ExperimentPlan, HamiltonianSource, InitialState,
};
use hybrid_trotter::sampling::{delta_h_constants, delta_h_operator, BatchDraw, Sampler};
use hybrid_trotter::{
    apply_pauli_rotation, heisenberg_chain, parse_hamiltonian, HamiltonianTerm, PartitionedHamiltonian, SamplerSpec,
    SchemeConfig, SchemeKind, StateVector, StepControl, U0Mode,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

type Check = fn() -> Result<Verdict, String>;

fn verdict(pass: bool, detail: String) -> Result<Verdict, String> {
    Ok(Verdict { pass, detail })
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn toy() -> PartitionedHamiltonian {
    parse_hamiltonian("qubits 2\n0.5 Z1\n0.3 X0 X1\n", 0.0).unwrap()
}

fn random_state(n: usize, seed: u64) -> StateVector {
    StateVector::random(n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn chain_plan(command: Command, n: usize, n_d: usize, sampler: SamplerSpec) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(command, HamiltonianSource::Chain { n, field_seed: 1 });
    plan.n_d = n_d;
    plan.sampler = sampler;
    plan
}

fn kernel_exactness() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let term = HamiltonianTerm::new(rng.random_range(-2.0..2.0), random_pauli(n, &mut rng));
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let mut psi = StateVector::random(n, &mut rng).map_err(err)?;
        let want = propagator(&terms_dense(n, &[term]), theta) * state_vec(&psi);
        apply_pauli_rotation(&mut psi, &term, theta).map_err(err)?;
        worst = worst.max(max_abs_diff(psi.amplitudes(), want.as_slice()));
    }
    verdict(worst < 1e-12, format!("max deviation {worst:.2e} over 1000 pairs"))
}

/// Tabulates outcome frequencies of 1e5 draws and compares the empirical
/// second moment of dH with the closed form, entry by entry.
fn variance_law() -> Result<Verdict, String> {
    const DRAWS: usize = 100_000;
    const ROUNDING: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_z = 0.0f64;
    let mut full_batch_max = 0.0f64;
    let mut checks = 0usize;
    for _ in 0..10 {
        let n = rng.random_range(2..=5);
        let n_r = rng.random_range(4..=8);
        let h1 = random_terms(n, n_r, &mut rng);
        let dim = 1usize << n;
        for k in [1, 2, n_r - 1, n_r] {
            let spec = SamplerSpec::uniform(k);
            let sigma = sum_dense(&delta_h_constants(&h1, &spec).map_err(err)?.sigma);
            let sampler = Sampler::new(spec, &h1).map_err(err)?;
            let mut counts: BTreeMap<Vec<usize>, (usize, BatchDraw)> = BTreeMap::new();
            for _ in 0..DRAWS {
                let d = sampler.draw(&mut rng);
                counts.entry(d.indices.clone()).or_insert((0, d)).0 += 1;
            }
            let mut mean = CMat::zeros(dim, dim);
            let mut second_re = DMatrix::<f64>::zeros(dim, dim);
            let mut second_im = DMatrix::<f64>::zeros(dim, dim);
            for (count, draw) in counts.values() {
                let f = *count as f64 / DRAWS as f64;
                let dh = sum_dense(&delta_h_operator(&h1, draw).map_err(err)?);
                let sq = &dh * &dh;
                mean += &sq * c(f, 0.0);
                second_re += sq.map(|z| z.re * z.re) * f;
                second_im += sq.map(|z| z.im * z.im) * f;
            }
            if k == n_r {
                full_batch_max = full_batch_max.max(max_abs_diff(mean.as_slice(), &vec![c(0.0, 0.0); dim * dim]));
                full_batch_max = full_batch_max.max(max_abs_diff(sigma.as_slice(), &vec![c(0.0, 0.0); dim * dim]));
                continue;
            }
            for idx in 0..dim * dim {
                let parts = [
                    (mean[idx].re, sigma[idx].re, second_re[idx]),
                    (mean[idx].im, sigma[idx].im, second_im[idx]),
                ];
                for (m, s, m2) in parts {
                    let var = (m2 - m * m).max(0.0);
                    let se = (var / DRAWS as f64).sqrt();
                    let diff = (m - s).abs();
                    checks += 1;
                    // entries that are constant over all outcomes carry only rounding noise
                    if diff > ROUNDING {
                        worst_z = worst_z.max(diff / se);
                    }
                }
            }
        }
    }
    verdict(
        worst_z <= 4.0 && full_batch_max == 0.0,
        format!("max |z| = {worst_z:.2} over {checks} entries; K = n_r max |entry| = {full_batch_max:.1e}"),
    )
}

fn dt_sweep(sampler: SamplerSpec) -> Result<(Vec<f64>, Vec<f64>, f64, f64), String> {
    let mut plan = chain_plan(Command::SweepDt, 6, 21, sampler);
    plan.t_final = 1.25;
    plan.step = StepControl::Dt(0.0125);
    plan.levels = 4;
    plan.ensembles = 80;
    plan.records = 1;
    let s = setup(&plan).map_err(err)?;
    let r = sweep_dt(&plan, &s).map_err(err)?;
    let mses = r.mse_at.iter().map(|m| m.0).collect();
    Ok((r.dts, mses, r.slope, r.prefactor))
}

fn mse_scaling() -> Result<Verdict, String> {
    let (dts, mses, slope, _) = dt_sweep(SamplerSpec::importance())?;
    let pts: Vec<String> = dts.iter().zip(&mses).map(|(d, m)| format!("{d}:{m:.3e}")).collect();
    verdict((slope - 1.0).abs() <= 0.25, format!("slope {slope:.3} (dt:mse {})", pts.join(" ")))
}

fn batch_reduction() -> Result<Verdict, String> {
    let (_, _, s1, p1) = dt_sweep(SamplerSpec::uniform(1))?;
    let (_, _, s10, p10) = dt_sweep(SamplerSpec::uniform(10))?;
    let ratio = p1 / p10;
    verdict(
        (5.0..=15.0).contains(&ratio),
        format!("prefactor K=1 {p1:.4} (slope {s1:.2}), K=10 {p10:.4} (slope {s10:.2}), ratio {ratio:.2}"),
    )
}

/// Ensemble MSE against the global bound at every recorded time.
fn mse_bound_case(
    h: &PartitionedHamiltonian,
    n_d: usize,
    sampler: SamplerSpec,
    m: usize,
    seed: u64,
) -> Result<(bool, f64), String> {
    let cfg = SchemeConfig {
        scheme: SchemeKind::HybridFirst,
        n_d,
        sampler,
        u0_mode: U0Mode::Exact,
        t_final: 1.0,
        step: StepControl::Dt(0.01),
        base_seed: seed,
    };
    let c = partition_constants(h, n_d, &sampler, U0Mode::Exact).map_err(err)?;
    let psi0 = random_state(h.n_qubits(), seed);
    let times: Vec<f64> = (1..=10).map(|i| i as f64 * 0.1).collect();
    let st = run_ensemble(h, &cfg, &psi0, m, &times).map_err(err)?;
    let mut ok = true;
    let mut worst = 0.0f64;
    for i in 0..st.times.len() {
        let bound = global_mse_bound(c.lambda, c.gamma, c.comm_norm, st.times[i], st.dt, c.k, c.n_r).map_err(err)?;
        let low = st.mse[i] - 3.0 * st.mse_stderr[i];
        ok &= low <= bound;
        worst = worst.max(low / bound);
    }
    Ok((ok, worst))
}

fn global_bound() -> Result<Verdict, String> {
    let mut cases: Vec<(String, PartitionedHamiltonian, usize, SamplerSpec)> = vec![
        ("toy importance".into(), toy(), 0, SamplerSpec::importance()),
        ("toy uniform".into(), toy(), 0, SamplerSpec::uniform(1)),
    ];
    for n in [4, 5] {
        let h = heisenberg_chain(n, 1).map_err(err)?;
        let l = h.len();
        for n_d in [l / 4, l / 2, 3 * l / 4] {
            cases.push((format!("chain{n} n_d={n_d} importance"), h.clone(), n_d, SamplerSpec::importance()));
            cases.push((format!("chain{n} n_d={n_d} uniform K=2"), h.clone(), n_d, SamplerSpec::uniform(2)));
        }
    }
    let mut failed = Vec::new();
    let mut worst = 0.0f64;
    for (i, (name, h, n_d, sampler)) in cases.iter().enumerate() {
        let (ok, ratio) = mse_bound_case(h, *n_d, *sampler, 200, i as u64)?;
        worst = worst.max(ratio);
        if !ok {
            failed.push(name.clone());
        }
    }
    let detail = format!(
        "{} configurations, max (mse - 3se)/bound = {worst:.3}{}",
        cases.len(),
        if failed.is_empty() { String::new() } else { format!("; violated: {}", failed.join(", ")) }
    );
    verdict(failed.is_empty(), detail)
}

fn one_step_errors(terms: &[HamiltonianTerm], n: usize, dts: &[f64], symmetric: bool) -> Result<Vec<f64>, String> {
    let psi = random_state(n, 7);
    let h = terms_dense(n, terms);
    dts.iter()
        .map(|&dt| {
            let mut v = psi.clone();
            if symmetric {
                trotter_step_symmetric(&mut v, terms, dt).map_err(err)?;
            } else {
                trotter_step_first_order(&mut v, terms, dt).map_err(err)?;
            }
            let u = propagator(&h, dt) * state_vec(&psi);
            Ok(v.amplitudes().iter().zip(u.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
        })
        .collect()
}

fn splitting_orders() -> Result<Verdict, String> {
    let systems = ["qubits 2\n0.5 Z1\n0.3 X0 X1\n", "qubits 1\n1.0 X0\n0.7 Z0\n", "qubits 3\n0.9 X0 Y1\n-0.4 Z1 Z2\n"];
    let dts = [0.1, 0.05, 0.025, 0.0125];
    let mut ok = true;
    let mut parts = Vec::new();
    for text in systems {
        let h = parse_hamiltonian(text, 0.0).map_err(err)?;
        let n = h.n_qubits();
        let s1 = loglog_slope(&dts, &one_step_errors(h.terms(), n, &dts, false)?).map_err(err)?;
        let s2 = loglog_slope(&dts, &one_step_errors(h.terms(), n, &dts, true)?).map_err(err)?;
        ok &= (s1 - 2.0).abs() <= 0.3 && (s2 - 3.0).abs() <= 0.3;
        parts.push(format!("{s1:.3}/{s2:.3}"));
    }
    verdict(ok, format!("first/symmetric slopes {}", parts.join(", ")))
}

struct NdSweep {
    grid: Vec<usize>,
    mse: Vec<(f64, f64)>,
    empirical_best: usize,
    estimator_best: usize,
}

fn nd_sweep(sampler: SamplerSpec) -> Result<NdSweep, String> {
    let mut plan = chain_plan(Command::SweepNd, 8, 0, sampler);
    plan.u0_mode = U0Mode::SplitFirst;
    plan.t_final = 2.0;
    plan.step = StepControl::GateBudget(2048);
    plan.ensembles = 200;
    plan.init = InitialState::Mixture;
    plan.records = 4;
    plan.stride = 10;
    let s = setup(&plan).map_err(err)?;
    let r = sweep_nd(&plan, &s).map_err(err)?;
    Ok(NdSweep { grid: r.grid, mse: r.final_mse, empirical_best: r.empirical_best, estimator_best: r.estimator_best })
}

fn hybrid_optimum_and_sampler_comparison() -> Result<(Verdict, Verdict), String> {
    let imp = nd_sweep(SamplerSpec::importance())?;
    let uni = nd_sweep(SamplerSpec::uniform(1))?;
    let last = imp.grid.len() - 1;
    let best_i = imp.grid.iter().position(|&g| g == imp.empirical_best).unwrap();
    let best = imp.mse[best_i].0;
    let interior = best_i != 0 && best_i != last && best < imp.mse[0].0 && best < imp.mse[last].0;
    let stride = 10usize;
    let close = imp.estimator_best.abs_diff(imp.empirical_best) <= stride;
    let curve: Vec<String> = imp.grid.iter().zip(&imp.mse).map(|(g, m)| format!("{g}:{:.3}", m.0)).collect();
    let seven = Verdict {
        pass: interior && close,
        detail: format!(
            "empirical argmin n_d={} (mse {best:.4}; endpoints {:.4}, {:.4}), estimator argmin n_d={}; curve {}",
            imp.empirical_best,
            imp.mse[0].0,
            imp.mse[last].0,
            imp.estimator_best,
            curve.join(" ")
        ),
    };
    let ubest_i = uni.grid.iter().position(|&g| g == uni.empirical_best).unwrap();
    let (mi, si) = imp.mse[best_i];
    let (mu, su) = uni.mse[ubest_i];
    let eight = Verdict {
        pass: mi <= mu + 2.0 * (si * si + su * su).sqrt(),
        detail: format!(
            "importance {mi:.4}±{si:.4} at n_d={}, uniform {mu:.4}±{su:.4} at n_d={}",
            imp.empirical_best, uni.empirical_best
        ),
    };
    Ok((seven, eight))
}

fn bias_linearity() -> Result<Verdict, String> {
    let h = toy();
    let cfg = SchemeConfig {
        scheme: SchemeKind::HybridFirst,
        n_d: 0,
        sampler: SamplerSpec::importance(),
        u0_mode: U0Mode::Exact,
        t_final: 4.0,
        step: StepControl::Dt(0.05),
        base_seed: 9,
    };
    let psi0 = random_state(2, 9);
    let times: Vec<f64> = (1..=8).map(|i| 0.5 * i as f64).collect();
    let st = run_ensemble(&h, &cfg, &psi0, 5000, &times).map_err(err)?;
    let bias: Vec<f64> = st.bias_sq.iter().map(|b| b.sqrt()).collect();
    let slope = loglog_slope(&st.times, &bias).map_err(err)?;
    let dominated = st.bias_sq.iter().zip(&st.mse).all(|(b, m)| b <= m);
    verdict(
        (0.8..=1.2).contains(&slope) && dominated,
        format!(
            "slope {slope:.3}; bias {:.2e}..{:.2e}; bias^2 <= mse at all times: {dominated}",
            bias[0],
            bias[bias.len() - 1]
        ),
    )
}

fn csv_files(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(err)? {
        let path = entry.map_err(err)?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            out.insert(name, std::fs::read(&path).map_err(err)?);
        }
    }
    Ok(out)
}

fn determinism() -> Result<Verdict, String> {
    let mut run = chain_plan(Command::Run, 4, 6, SamplerSpec::importance());
    run.ensembles = 20;
    let mut dt = chain_plan(Command::SweepDt, 4, 3, SamplerSpec::uniform(3));
    dt.scheme = SchemeKind::HybridSymmetric;
    dt.u0_mode = U0Mode::SplitSymmetric;
    dt.ensembles = 10;
    dt.levels = 3;
    dt.init = InitialState::Mixture;
    dt.seed = 5;
    let mut nd = chain_plan(Command::SweepNd, 4, 0, SamplerSpec::importance());
    nd.step = StepControl::GateBudget(400);
    nd.ensembles = 10;
    nd.stride = 4;
    nd.u0_mode = U0Mode::SplitFirst;
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut files = 0;
    for (i, plan) in [run, dt, nd].iter().enumerate() {
        let a = tmp.path().join(format!("a{i}"));
        let b = tmp.path().join(format!("b{i}"));
        execute(plan, &a).map_err(err)?;
        let meta = std::fs::read_to_string(a.join("metadata.txt")).map_err(err)?;
        let replayed = ExperimentPlan::from_metadata(&meta).map_err(err)?;
        execute(&replayed, &b).map_err(err)?;
        let (fa, fb) = (csv_files(&a)?, csv_files(&b)?);
        if fa.is_empty() || fa != fb {
            return verdict(false, format!("{} replay differs", plan.command.name()));
        }
        files += fa.len();
    }
    verdict(true, format!("{files} CSV files identical after replay (run, sweep-dt, sweep-nd)"))
}

fn main() -> ExitCode {
    let singles: [(u32, &str, Check); 6] = [
        (1, "kernel exactness", kernel_exactness),
        (2, "variance law", variance_law),
        (3, "first-order MSE scaling", mse_scaling),
        (4, "K-fold prefactor reduction", batch_reduction),
        (5, "global MSE bound", global_bound),
        (6, "splitting orders", splitting_orders),
    ];
    let mut results: Vec<(u32, &str, Result<Verdict, String>, f64)> = Vec::new();
    for (id, name, check) in singles {
        let start = Instant::now();
        let v = check();
        results.push((id, name, v, start.elapsed().as_secs_f64()));
        report(results.last().unwrap());
    }
    let start = Instant::now();
    let (seven, eight) = match hybrid_optimum_and_sampler_comparison() {
        Ok((a, b)) => (Ok(a), Ok(b)),
        Err(e) => (Err(e.clone()), Err(e)),
    };
    let secs = start.elapsed().as_secs_f64();
    results.push((7, "hybrid optimum", seven, secs));
    report(results.last().unwrap());
    results.push((8, "importance <= uniform", eight, secs));
    report(results.last().unwrap());
    for (id, name, check) in [(9, "bias linearity", bias_linearity as Check), (10, "determinism", determinism)] {
        let start = Instant::now();
        let v = check();
        results.push((id, name, v, start.elapsed().as_secs_f64()));
        report(results.last().unwrap());
    }
    let passed = results.iter().filter(|r| matches!(&r.2, Ok(v) if v.pass)).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn report((id, name, v, secs): &(u32, &str, Result<Verdict, String>, f64)) {
    match v {
        Ok(v) => println!(
            "criterion {id:>2} {}: {name}: {} [{secs:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        ),
        Err(e) => println!("criterion {id:>2} FAIL: {name}: error: {e} [{secs:.1}s]"),
    }
}
