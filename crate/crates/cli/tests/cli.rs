use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn trackpatch(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trackpatch")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = "[input.synth]\ntraces = 2\nframes = 60\n";

#[test]
fn init_config_is_a_valid_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = trackpatch(&["init-config", "--out", "ref.toml"], tmp.path());
    assert!(out.status.success());
    let text = fs::read_to_string(tmp.path().join("ref.toml")).unwrap();
    assert!(text.contains("alpha_max = 0.95") && text.contains("hide_frames = 5"));
    let cfg = format!("{text}\n").replace("traces = 10", "traces = 1").replace("frames = 300\n# Detection", "frames = 40\n# Detection");
    let path = write_config(tmp.path(), &cfg);
    let out = trackpatch(&["track", "--config", &path, "--out", "run"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_input_dir_fails_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "[input]\nkind = \"kitti\"\nkitti_dir = \"does/not/exist\"\n");
    let out = trackpatch(&["track", "--config", &path], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does/not/exist"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn bad_flags_and_configs_are_user_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(trackpatch(&["track", "--defense", "sometimes"], tmp.path()).status.code(), Some(1));
    assert_eq!(trackpatch(&["track", "--profile", "sort"], tmp.path()).status.code(), Some(1));
    let path = write_config(tmp.path(), "mystery = true\n");
    assert_eq!(trackpatch(&["track", "--config", &path], tmp.path()).status.code(), Some(1));
    assert_eq!(trackpatch(&["frobnicate"], tmp.path()).status.code(), Some(1));
}

#[test]
fn same_config_and_seed_give_identical_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), SMALL);
    for run in ["a", "b"] {
        let out = trackpatch(&["track", "--config", &path, "--seed", "7", "--out", run], tmp.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &str, f: &str| fs::read(tmp.path().join(d).join(f)).unwrap();
    assert_eq!(read("a", "trajectories.csv"), read("b", "trajectories.csv"));
    assert_eq!(read("a", "frames.jsonl"), read("b", "frames.jsonl"));
    assert_eq!(read("a", "manifest.json"), read("b", "manifest.json"));
    let other = trackpatch(&["track", "--config", &path, "--seed", "8", "--out", "c"], tmp.path());
    assert!(other.status.success());
    assert_ne!(read("a", "trajectories.csv"), read("c", "trajectories.csv"));
}

#[test]
fn zero_noise_synth_evaluates_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), &format!("{SMALL}noise_sigma_m = 0.0\n"));
    let out = trackpatch(&["evaluate", "--config", &path, "--out", "ev"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("MOTA 1.0000"));
    let csv = fs::read_to_string(tmp.path().join("ev/evaluate.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("all,1.0,")), "{csv}");
}

#[test]
fn attack_reports_both_arms_and_plot_markers() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), SMALL);
    let out = trackpatch(&["attack", "--config", &path, "--out", "atk", "--jobs", "2"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(tmp.path().join("atk/summary.csv")).unwrap();
    assert!(summary.contains("\nundefended,") && summary.contains("\ndefended,"));
    let plot = fs::read_to_string(tmp.path().join("atk/plot.csv")).unwrap();
    assert_eq!(plot.lines().filter(|l| l.ends_with(",true")).count(), 4);
    let report = fs::read_to_string(tmp.path().join("atk/attack.json")).unwrap();
    let manifest = fs::read_to_string(tmp.path().join("atk/manifest.json")).unwrap();
    let hash = manifest.split("\"config_hash\": \"").nth(1).unwrap().split('"').next().unwrap();
    assert!(report.contains(hash));
}

#[test]
fn kitti_directory_input_tracks() {
    let tmp = tempfile::tempdir().unwrap();
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/data/kitti");
    let path = write_config(tmp.path(), &format!("profile = \"ab3dmot\"\n[input]\nkind = \"kitti\"\nkitti_dir = \"{data}\"\nclasses = []\n"));
    let out = trackpatch(&["track", "--config", &path, "--out", "k"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("k/trajectories.csv")).unwrap();
    for seq in ["0000", "0001", "0002"] {
        assert!(csv.lines().any(|l| l.starts_with(&format!("{seq},"))), "{seq} missing");
    }
}

#[test]
fn theory_and_bench_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), &format!("{SMALL}[theory.sim]\ntrials = 40\n[bench]\nrepeats = 1\n"));
    let out = trackpatch(&["theory", "--config", &path, "--out", "th"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json = fs::read_to_string(tmp.path().join("th/theory.json")).unwrap();
    assert!(json.contains("\"ratio\""));
    let rows = fs::read_to_string(tmp.path().join("th/theory.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 4 * 40);

    let counts = |d: &str| {
        let out = trackpatch(&["bench", "--config", &path, "--out", d], tmp.path());
        assert!(out.status.success());
        fs::read_to_string(tmp.path().join(d).join("bench.csv"))
            .unwrap()
            .lines()
            .map(|l| l.split(',').take(3).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
    };
    let a = counts("b1");
    assert_eq!(a, counts("b2"));
    assert_eq!(a[0], "trace,defense,frames");
    assert_eq!(a.len(), 1 + 2 * 2);
}
