use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SIM: &str = "mode = simulate\n[mesh]\nL = 1\nT = 0.5\nn = 32\nm = 64\n[u0]\nprofile = sin\n";

fn kdvctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kdvctl")).args(args).output().expect("spawn kdvctl")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_writes_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "sim.cfg", SIM);
    let out = dir.path().join("o");
    let r = kdvctl(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("[scenario]"));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x,u"));
    let row: Vec<&str> = lines.nth(5).unwrap().split(',').collect();
    // 17 significant digits: d.dddddddddddddddde+x
    let mantissa = row[2].trim_start_matches('-').split('e').next().unwrap();
    assert_eq!(mantissa.replace('.', "").len(), 17, "{}", row[2]);
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "sim.cfg", SIM);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (o, t) in [(&a, "1"), (&b, "3")] {
        let r = kdvctl(&["run", "--config", &cfg, "--out", o.to_str().unwrap(), "--seed", "7", "--threads", t]);
        assert_eq!(r.status.code(), Some(0));
    }
    for f in ["report.txt", "trajectory.csv", "traces.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bad_config_is_a_hard_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cases = [
        ("n4.cfg", SIM.replace("n = 32", "n = 4")),
        ("unk.cfg", format!("{SIM}foo = 1\n")),
        ("miss.cfg", "mode = null-control\n".to_string()),
    ];
    for (name, text) in cases {
        let cfg = write_cfg(dir.path(), name, &text);
        let r = kdvctl(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(r.status.code(), Some(1), "{name}");
        assert!(!r.stderr.is_empty());
    }
    let r = kdvctl(&["run", "--config", "/nonexistent/x.cfg"]);
    assert_eq!(r.status.code(), Some(1));
    let miss = String::from_utf8(kdvctl(&["run", "--config", &write_cfg(dir.path(), "m.cfg", "mode = simulate\n")]).stderr)
        .unwrap();
    for k in ["mesh.L", "mesh.T", "mesh.n", "mesh.m", "u0.profile"] {
        assert!(miss.contains(k), "{miss}");
    }
}

#[test]
fn unconverged_run_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = "mode = null-control\n[mesh]\nL = 1\nT = 1\nn = 32\nm = 64\n[u0]\nprofile = sin\n[hum]\ncg_max = 1\ncg_tol = 1e-14\n";
    let cfg = write_cfg(dir.path(), "nc.cfg", text);
    let r = kdvctl(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2), "{}", String::from_utf8_lossy(&r.stdout));
}

#[test]
fn scan_collects_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "sim.cfg", SIM);
    let out = dir.path().join("s");
    let r = kdvctl(&["scan", "--config", &cfg, "--param", "mesh.n", "--values", "16,x,24", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    let mut rd = csv::Reader::from_path(out.join("scan.csv")).unwrap();
    let head = rd.headers().unwrap().clone();
    assert_eq!(&head[0], "mesh.n");
    let status: Vec<String> = rd.records().map(|r| r.unwrap()[1].to_string()).collect();
    assert_eq!(status, ["ok", "error", "ok"]);
    assert!(out.join("cell_000").join("report.txt").exists());
}

#[test]
fn empty_scan_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "sim.cfg", SIM);
    let out = dir.path().join("s");
    let r = kdvctl(&["scan", "--config", &cfg, "--param", "mesh.L", "--values", "", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    let text = fs::read_to_string(out.join("scan.csv")).unwrap();
    assert_eq!(text, "mesh.L,status,message\n");
}

#[test]
fn scan_of_unknown_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "sim.cfg", SIM);
    let r = kdvctl(&["scan", "--config", &cfg, "--param", "mesh.q", "--values", "1,2"]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn shipped_scenarios_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut count = 0;
    for e in fs::read_dir(root).unwrap() {
        let p = e.unwrap().path();
        let cfg = kdv_control::config::load(&p).unwrap();
        kdv_control::scenario::validate(&cfg).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        count += 1;
    }
    assert_eq!(count, 9);
}
