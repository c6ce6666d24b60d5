use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn htrot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_htrot")).args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_chain_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
    for p in [&a, &b] {
        let out = htrot(&["gen-chain", "--n", "3", "--field-seed", "7", "--out", path_str(p)]);
        assert!(out.status.success());
        assert!(String::from_utf8_lossy(&out.stdout).contains("wrote 12 terms"));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let other = dir.path().join("c.txt");
    htrot(&["gen-chain", "--n", "3", "--field-seed", "8", "--out", path_str(&other)]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&other).unwrap());
}

#[test]
fn inspect_lists_descending_magnitudes() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("toy.txt");
    fs::write(&h, "qubits 2\n0.3 X0 X1\n0.5 Z1\n").unwrap();
    let out = htrot(&["inspect", "--hamiltonian", path_str(&h), "--nd-grid", "0,1,2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rank,coeff,magnitude,pauli"));
    assert_eq!(lines.next(), Some("0,0.5,0.5,Z1"));
    assert_eq!(lines.next(), Some("1,0.3,0.3,X0 X1"));
    let n_d0 = text.lines().find(|l| l.starts_with("0,2,")).unwrap();
    assert!(n_d0.ends_with(",0.0000000000000000e0"), "C must vanish at n_d = 0: {n_d0}");
}

#[test]
fn bounds_reports_gate_counts() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("toy.txt");
    fs::write(&h, "qubits 2\n0.5 Z1\n0.3 X0 X1\n").unwrap();
    let out = htrot(&["bounds", "--hamiltonian", path_str(&h), "--sampler", "uniform", "--dt", "0.01"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(&format!("{key} = "))).unwrap();
        line.split(" = ").nth(1).unwrap().parse().unwrap()
    };
    assert!((value("lambda") - 0.34).abs() < 1e-12);
    assert!((value("gamma") - 1.0).abs() < 1e-12);
    assert!((value("gates_markov") - 340.0).abs() < 1e-9);
    assert!((value("global_mse_bound") - 0.0068 * 0.5f64.exp()).abs() < 1e-12);
    assert!(text.contains("implied constant 1"));
}

#[test]
fn replay_reproduces_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = htrot(&[
        "sweep-nd", "--chain", "4", "--field-seed", "2", "--gates", "300", "--stride", "5", "--ensembles", "8",
        "--u0", "split1", "--init", "mixture", "--seed", "11", "--out", path_str(&a),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = htrot(&["replay", path_str(&a.join("metadata.txt")), "--out", path_str(&b)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    assert!(names.contains(&"mse_vs_nd.csv".to_string()));
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n}");
    }
}

#[test]
fn commuting_deterministic_sweep_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("ising.txt");
    fs::write(&h, "qubits 3\n1.0 Z0 Z1\n0.7 Z1 Z2\n0.4 Z0\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = htrot(&[
        "sweep-dt", "--hamiltonian", path_str(&h), "--scheme", "det1", "--dt", "0.1", "--levels", "2",
        "--ensembles", "2", "--init", "mixture", "--out", path_str(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("mse_vs_dt.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let mse: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(mse < 1e-24, "{line}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    // validation: importance sampling with K > 1
    let out = htrot(&["run", "--chain", "3", "--k", "2", "--out", path_str(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    // malformed Hamiltonian
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "qubits 2\n1.0 Q0\n").unwrap();
    let out = htrot(&["inspect", "--hamiltonian", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    // missing file
    let out = htrot(&["inspect", "--hamiltonian", path_str(&dir.path().join("missing.txt"))]);
    assert_eq!(out.status.code(), Some(1));
    // clap usage error
    let out = htrot(&["run"]);
    assert_eq!(out.status.code(), Some(2));
}
