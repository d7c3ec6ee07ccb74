use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SHORT: &str = "\
seed 5
duration 10m
node 1 0 0 border
node 2 8 0
node 3 0 8
node 4 8 8
expect completeness == 1
";

fn aqmesh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aqmesh"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn run_writes_artifacts_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "s.scn", SHORT);
    let out = tmp.path().join("out");
    let o = aqmesh(&["run", "--scenario", &scn, "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert!(stdout.contains("PASS line 7: completeness == 1"), "{stdout}");
    for f in [
        "summary.txt",
        "motes.csv",
        "links.csv",
        "series.csv",
        "receipts.log",
        "journal.bin",
        "journal.ack",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let series = fs::read_to_string(out.join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 3 * 150);
    assert_eq!(fs::metadata(out.join("journal.bin")).unwrap().len(), 450 * 30);

    let r = aqmesh(&["report", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    assert!(String::from_utf8_lossy(&r.stdout).contains("completeness"));
}

#[test]
fn failed_expectation_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "s.scn", &format!("{SHORT}expect shed > 0\n"));
    let o = aqmesh(&[
        "run",
        "--scenario",
        &scn,
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL line 8: shed > 0 (actual 0)"));
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "bad.scn", "seed 1\nnode 1 0 0 border\nloss 1.5\n");
    for args in [
        vec!["check", "--scenario", &scn],
        vec!["run", "--scenario", &scn, "--out", tmp.path().to_str().unwrap()],
    ] {
        let o = aqmesh(&args);
        assert_eq!(code(&o), 2);
        assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{:?}", o);
    }
    assert_eq!(code(&aqmesh(&["check", "--scenario", "/nonexistent.scn"])), 2);
    assert_eq!(code(&aqmesh(&["report", "--out", "/nonexistent"])), 2);
    assert_eq!(code(&aqmesh(&["frobnicate"])), 2);
}

#[test]
fn check_reports_unreachable_nodes_as_warnings() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(tmp.path(), "p.scn", "node 1 0 0 border\nnode 2 5 0\nnode 3 50 50\n");
    let o = aqmesh(&["check", "--scenario", &scn]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: node 3 has no radio path"));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok: 3 nodes (2 motes), 1 links"));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = write(
        tmp.path(),
        "s.scn",
        &SHORT.replace("node 4 8 8", "node 4 16 0\nloss 0.2"),
    );
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (d, seed) in dirs.iter().zip(["11", "11", "12"]) {
        let o = aqmesh(&["run", "--scenario", &scn, "--out", d.to_str().unwrap(), "--seed", seed]);
        assert!(code(&o) <= 1);
    }
    for f in [
        "summary.txt",
        "motes.csv",
        "links.csv",
        "series.csv",
        "receipts.log",
        "journal.bin",
        "journal.ack",
    ] {
        let a = fs::read(dirs[0].join(f)).unwrap();
        assert_eq!(a, fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
    let s = |d: &Path| fs::read_to_string(d.join("summary.txt")).unwrap();
    assert!(s(&dirs[0]).contains("seed=11"));
    assert_ne!(s(&dirs[0]), s(&dirs[2]));
}

#[test]
fn shipped_scenarios_parse() {
    let mut n = 0;
    for entry in fs::read_dir(scenarios_dir()).unwrap() {
        let p = entry.unwrap().path();
        let o = aqmesh(&["check", "--scenario", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}: {}", p.display(), String::from_utf8_lossy(&o.stderr));
        n += 1;
    }
    assert!(n >= 5);
}

#[test]
fn shipped_partition_scenario_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let scn = scenarios_dir().join("partition.scn");
    let o = aqmesh(&[
        "run",
        "--scenario",
        scn.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let motes = fs::read_to_string(tmp.path().join("motes.csv")).unwrap();
    let row4 = motes.lines().find(|l| l.starts_with("4,")).unwrap();
    // generated, no_route, submitted ... delivered=0, missing=generated, detached
    let cols: Vec<&str> = row4.split(',').collect();
    assert_eq!(cols[1], cols[2]);
    assert_eq!(cols[7], "0");
    assert_eq!(cols[8], cols[1]);
    assert_eq!(cols[10], "");
}
