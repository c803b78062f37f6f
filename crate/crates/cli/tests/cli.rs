use std::path::Path;
use std::process::{Command, Output};

fn risbc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_risbc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn risbc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn rate_reports_optimum_at_21() {
    let dir = tempfile::tempdir().unwrap();
    let o = risbc(dir.path(), &["rate", "--out", "rate.csv"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("argmax L=21"), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("rate.csv")).unwrap();
    assert!(csv.starts_with("l,n,rate,bits_per_frame\n"));
    assert_eq!(csv.lines().count(), 52);
    assert!(dir.path().join("rate.csv.manifest.toml").exists());
}

#[test]
fn single_frame_at_high_snr_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let o = risbc(
        dir.path(),
        &[
            "single-frame",
            "--message",
            "0x00000",
            "--snr-db",
            "100",
            "--out",
            "f.csv",
        ],
    );
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert!(text.contains("match:        yes"), "{text}");
    assert!(text.contains("decoded:      0x0"), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("f.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[2], f[3], "{line}");
        rows += 1;
    }
    assert_eq!(rows, 20);
}

#[test]
fn oversized_message_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = risbc(dir.path(), &["single-frame", "--message", "0xfffffffff"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_is_reproducible_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let common = [
        "pe-vs-l",
        "--seed",
        "7",
        "--trials",
        "300",
        "--lengths",
        "15,21",
        "--snr-db",
        "0",
    ];
    let mut outputs = Vec::new();
    for (name, threads) in [("a.csv", "1"), ("b.csv", "1"), ("c.csv", "3")] {
        let mut args = common.to_vec();
        args.extend(["--out", name, "--threads", threads]);
        let o = risbc(dir.path(), &args);
        assert!(o.status.success(), "{o:?}");
        outputs.push(std::fs::read(dir.path().join(name)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(
        text.starts_with("sweep_var,snr_db,pe,std_err,trials,method,seed\n"),
        "{text}"
    );
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn replay_reproduces_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = risbc(
        dir.path(),
        &[
            "pe-vs-spread",
            "--seed",
            "3",
            "--trials",
            "200",
            "--spreads",
            "5",
            "--snr-db",
            "0",
            "--out",
            "s.csv",
        ],
    );
    assert!(o.status.success(), "{o:?}");
    let o = risbc(dir.path(), &["replay", "s.csv.manifest.toml", "--out", "r.csv"]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(
        std::fs::read(dir.path().join("s.csv")).unwrap(),
        std::fs::read(dir.path().join("r.csv")).unwrap()
    );
}

#[test]
fn tampered_manifest_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(risbc(dir.path(), &["rate", "--out", "x.csv"]).status.success());
    let path = dir.path().join("x.csv.manifest.toml");
    let text = std::fs::read_to_string(&path)
        .unwrap()
        .replace("seed = 1\n", "seed = 2\n");
    std::fs::write(&path, text).unwrap();
    let o = risbc(dir.path(), &["replay", "x.csv.manifest.toml"]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(risbc(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(risbc(dir.path(), &["rate", "--bogus"]).status.code(), Some(1));
    assert_eq!(risbc(dir.path(), &["--help"]).status.code(), Some(0));

    std::fs::write(dir.path().join("bad.toml"), "subarrays = 7\n").unwrap();
    assert_eq!(
        risbc(dir.path(), &["--config", "bad.toml", "rate"]).status.code(),
        Some(2)
    );
    std::fs::write(dir.path().join("typo.toml"), "subarays = 9\n").unwrap();
    assert_eq!(
        risbc(dir.path(), &["--config", "typo.toml", "rate"]).status.code(),
        Some(2)
    );
    assert_eq!(
        risbc(dir.path(), &["--config", "missing.toml", "rate"]).status.code(),
        Some(2)
    );
}

#[test]
fn beampattern_closed_form_matches_code_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let grid = ["--n-az", "7", "--el-min", "-20", "--el-max", "20", "--n-el", "3"];
    let mut a = vec!["beampattern", "--out", "a.csv"];
    a.extend(grid);
    let mut b = vec!["beampattern", "--out", "b.csv", "--message", "0x1234"];
    b.extend(grid);
    assert!(risbc(dir.path(), &a).status.success());
    assert!(risbc(dir.path(), &b).status.success());
    let read = |n: &str| -> Vec<f64> {
        std::fs::read_to_string(dir.path().join(n))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect()
    };
    let (x, y) = (read("a.csv"), read("b.csv"));
    assert_eq!(x.len(), 21);
    let peak = x.iter().cloned().fold(0.0, f64::max);
    for (p, q) in x.iter().zip(&y) {
        assert!((p - q).abs() <= 1e-9 * peak, "{p} vs {q}");
    }
}

#[test]
fn channel_dump_writes_taps() {
    let dir = tempfile::tempdir().unwrap();
    let o = risbc(dir.path(), &["channel-dump", "--trial", "4", "--out", "ch.csv"]);
    assert!(o.status.success(), "{o:?}");
    let csv = std::fs::read_to_string(dir.path().join("ch.csv")).unwrap();
    assert!(csv.starts_with("tap,re,im,az_deg,el_deg,delay_s\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn validate_passes_on_reference_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = risbc(dir.path(), &["validate", "--out", "v.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("v.csv")).unwrap();
    assert!(csv.starts_with("check,passed,detail\n"));
    assert_eq!(csv.lines().count(), 10);
}
