use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const QUICK: &[&str] = &["n_points=256", "half_width=12", "tau=10", "hold_time=8"];

fn becsim(args: &[&str], sets: &[&str], out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_becsim"));
    cmd.args(args).arg("--out").arg(out).env("RUST_LOG", "warn");
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    cmd.output().unwrap()
}

#[test]
fn run_writes_the_expected_file_set() {
    let dir = tempfile::tempdir().unwrap();
    let sets = [QUICK, &["snapshot_times=5,12"]].concat();
    let out = becsim(&["run"], &sets, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["density_t12.000.csv", "density_t5.000.csv", "meanx.csv", "populations.csv", "soliton.csv", "summary.json"]
    );
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let p = &summary["populations"];
    let total = p["p0"].as_f64().unwrap() + p["p1"].as_f64().unwrap() + p["p_ex"].as_f64().unwrap();
    assert!((total - 1.0).abs() < 1e-9);
    assert_eq!(summary["provenance"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn without_stride_only_the_summary_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let sets = [QUICK, &["observe_every=off"]].concat();
    assert!(becsim(&["run"], &sets, dir.path()).status.success());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn summaries_are_byte_identical_across_reruns_and_job_counts() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let sets = [QUICK, &["thetas=0.8pi,pi", "ensemble_size=3", "gammas=0,1e-3"]].concat();
    for (dir, jobs) in dirs.iter().zip(["1", "1", "3"]) {
        let out = becsim(&["ensemble", "--scan", "--jobs", jobs], &sets, dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("summary.json")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]));
    assert_eq!(read(&dirs[0]), read(&dirs[2]));
}

#[test]
fn output_directory_does_not_enter_the_hash() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(becsim(&["limits"], &[], d.path()).status.success());
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("summary.json")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(becsim(&["run"], &["nonsense=1"], dir.path()).status.code(), Some(2));
    assert_eq!(becsim(&["run"], &["g=1", "scattering_length_ratio=1e-3"], dir.path()).status.code(), Some(2));
    assert_eq!(becsim(&["run"], &["n_points=255"], dir.path()).status.code(), Some(2));
    let sets = [QUICK, &["solver_tol=1e-18"]].concat();
    assert_eq!(becsim(&["run"], &sets, dir.path()).status.code(), Some(3));
    let file = dir.path().join("blocker");
    fs::write(&file, "").unwrap();
    assert_eq!(becsim(&["limits"], &[], &file.join("sub")).status.code(), Some(4));
}

#[test]
fn config_file_environment_and_overrides_layer() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    fs::write(&file, "# comment\ng = 4\ntau = 50 # trailing\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_becsim"))
        .args(["config", "--config"])
        .arg(&file)
        .args(["--set", "tau=60"])
        .env("BECSIM_A", "1.5")
        .env("BECSIM_TAU", "55")
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("g=4.0000000000000000e0"), "{text}");
    assert!(text.contains("a=1.5000000000000000e0"));
    assert!(text.contains("tau=6.0000000000000000e1"));
}
