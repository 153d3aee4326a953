use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qtomo::formats::{parse_record, parse_state};

fn qtomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtomo")).args(args).output().expect("spawn qtomo")
}

fn ok(args: &[&str]) -> Output {
    let out = qtomo(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn kv(stdout: &[u8], key: &str) -> f64 {
    let text = String::from_utf8_lossy(stdout);
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.txt");
    let counts = dir.path().join("counts.txt");
    let est = dir.path().join("est.txt");
    let proj = dir.path().join("proj.txt");

    let gen = ok(&["gen-state", "--qubits", "5", "--seed", "7", "--out", p(&truth)]);
    assert!(String::from_utf8_lossy(&gen.stderr).contains("support=20"));
    let state = parse_state(&fs::read_to_string(&truth).unwrap()).unwrap();
    assert_eq!(state.qubits(), 5);
    assert_eq!(state.expansion().iter().count(), 20);

    ok(&["measure", "--state", p(&truth), "--shots", "500", "--seed", "3", "--out", p(&counts)]);
    let record = parse_record(&fs::read_to_string(&counts).unwrap()).unwrap();
    assert_eq!(record.len(), 1023);
    assert_eq!(record.shots(), 500);

    ok(&["estimate", "--record", p(&counts), "--rule", "soft", "--out", p(&est)]);
    ok(&["estimate", "--record", p(&counts), "--project", "--out", p(&proj)]);

    let ev = ok(&["eval", "--truth", p(&truth), "--estimate", p(&est), "--schatten", "1,2,inf"]);
    let spectral = kv(&ev.stdout, "spectral");
    let frob = kv(&ev.stdout, "frobenius");
    assert!(spectral > 0.0 && spectral <= frob + 1e-12);
    assert!((kv(&ev.stdout, "schatten_inf") - spectral).abs() <= 1e-9 * spectral.max(1.0));
    assert!((kv(&ev.stdout, "schatten_2") - frob).abs() <= 1e-9 * frob.max(1.0));

    for method in ["dense", "iterative"] {
        let e = ok(&["eval", "--truth", p(&truth), "--estimate", p(&est), "--method", method]);
        assert!((kv(&e.stdout, "spectral") - spectral).abs() <= 1e-7 * spectral);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = ok(&["gen-state", "--qubits", "4", "--seed", "11"]);
    let b = ok(&["gen-state", "--qubits", "4", "--seed", "11"]);
    assert_eq!(a.stdout, b.stdout);
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("t.txt");
    fs::write(&truth, &a.stdout).unwrap();
    let m1 = ok(&["measure", "--state", p(&truth), "--shots", "100", "--seed", "5"]);
    let m2 = ok(&["measure", "--state", p(&truth), "--shots", "100", "--seed", "5"]);
    assert_eq!(m1.stdout, m2.stdout);
    let m3 = ok(&["measure", "--state", p(&truth), "--shots", "100", "--seed", "6"]);
    assert_ne!(m1.stdout, m3.stdout);
}

#[test]
fn zero_support_gives_maximally_mixed_state() {
    let out = ok(&["gen-state", "--qubits", "3", "--support", "0"]);
    let state = parse_state(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(state.expansion().iter().count(), 0);
}

#[test]
fn balanced_counts_estimate_to_maximally_mixed() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("c.txt");
    let mut text = String::from("pauli-counts v1 qubits=2 shots=100\n");
    for l in ["IX", "IY", "IZ", "XI", "XX", "XY", "XZ", "YI", "YX", "YY", "YZ", "ZI", "ZX", "ZY", "ZZ"] {
        text.push_str(&format!("{l} 50\n"));
    }
    fs::write(&counts, text).unwrap();
    for rule in ["hard", "soft"] {
        let out = ok(&["estimate", "--record", p(&counts), "--rule", rule]);
        let s = parse_state(&String::from_utf8_lossy(&out.stdout)).unwrap();
        assert!(s.expansion().iter().all(|(_, v)| *v == 0.0), "{rule}");
    }
}

#[test]
fn state_against_itself_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("t.txt");
    fs::write(&truth, ok(&["gen-state", "--qubits", "5", "--seed", "1"]).stdout).unwrap();
    let ev = ok(&["eval", "--truth", p(&truth), "--estimate", p(&truth)]);
    assert_eq!(kv(&ev.stdout, "spectral"), 0.0);
    assert_eq!(kv(&ev.stdout, "frobenius"), 0.0);
}

#[test]
fn malformed_input_exits_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "pauli-state v1 qubits=2\nXI 0.1\nQQ 0.2\n").unwrap();
    let out = qtomo(&["project", "--state", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    let out = qtomo(&["estimate", "--record", p(&bad), "--policy", "sometimes"]);
    assert_eq!(out.status.code(), Some(2));
    let missing = qtomo(&["project", "--state", p(&dir.path().join("absent.txt"))]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn version_names_formats() {
    let out = ok(&["--version"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("pauli-state v1") && text.contains("mse-csv v1"), "{text}");
}

#[test]
fn bench_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "qubits=3\nshots=100,400\nreplicates=5\npolicies=without,universal\nrules=hard\n").unwrap();
    let out_dir = dir.path().join("out");
    ok(&["bench", "--config", p(&cfg), "--out-dir", p(&out_dir), "--workers", "2"]);
    for f in ["mse.csv", "table1.csv", "plot_mse_vs_n.csv", "scaling.txt", "config.txt", "manifest.txt"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(out_dir.join("mse.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}
