use std::path::Path;
use std::process::{Command, Output};

fn fracsync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracsync"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_ok(args: &[&str]) -> String {
    let out = fracsync(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_string()
}

#[test]
fn range_default() {
    let out = stdout_ok(&["range"]);
    let hz: f64 = value(&out, "cfo_range_hz").parse().unwrap();
    assert!((hz - 16.333e9).abs() < 5e6, "{hz}");
    let at_zero: f64 = value(&stdout_ok(&["range", "--delta-t", "0"]), "cfo_range_hz")
        .parse()
        .unwrap();
    assert!(at_zero > hz);
}

#[test]
fn sweep_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let path = dir.path().join(name);
        let mut args = vec![
            "sweep", "--param", "osnr", "--grid", "6:2:10", "--trials", "8", "--seed", "5", "--out",
        ];
        args.push(path.to_str().unwrap());
        args.extend_from_slice(extra);
        stdout_ok(&args);
        std::fs::read(path).unwrap()
    };
    let a = run("a.csv", &[]);
    let b = run("b.csv", &[]);
    let serial = run("c.csv", &["--serial"]);
    assert_eq!(a, b);
    assert_eq!(a, serial);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "param_value,algorithm,trials,timing_err_prob,mean_timing_err,mean_abs_cfo_err_hz,std_cfo_err_hz"
    );
    assert_eq!(lines.count(), 9);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "param = \"cfo\"\ngrid = [1e9, 2e9]\ntrials = 3\nalgorithm = \"proposed\"\nawgn = false\nlinewidth_hz = 0.0\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let out = stdout_ok(&["--config", cfg, "sweep"]);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.contains(",proposed,3,0,0,")), "{out}");
    let out = stdout_ok(&["--config", cfg, "sweep", "--grid", "5e8", "--trials", "2"]);
    assert!(
        out.lines()
            .nth(1)
            .unwrap()
            .starts_with("500000000,proposed,2,"),
        "{out}"
    );
}

#[test]
fn trial_rows() {
    let out = stdout_ok(&[
        "trial",
        "--trials",
        "2",
        "--algorithm",
        "proposed,correlation",
    ]);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("trial_id,seed,algorithm,true_offset"));
    assert_eq!(lines.len(), 5);
    assert!(lines[1].contains(",proposed,100,3000000000,100,"));
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    for (file, offset, cfo) in [("rx.csv", "100", "3e9"), ("rx.bin", "777", "-2e9")] {
        let path = dir.path().join(file);
        let p = path.to_str().unwrap();
        stdout_ok(&[
            "simulate",
            "--frame-offset",
            offset,
            "--cfo-hz",
            cfo,
            "--no-awgn",
            "--linewidth-hz",
            "0",
            "--out",
            p,
        ]);
        let out = stdout_ok(&["estimate", "--input", p]);
        assert_eq!(value(&out, "mu_hat"), offset);
        let gamma: f64 = value(&out, "gamma_hat_hz").parse().unwrap();
        let truth: f64 = cfo.parse().unwrap();
        assert!((gamma - truth).abs() < 45e6, "{gamma}");
    }
}

#[test]
fn ts_export_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ts.csv");
    stdout_ok(&[
        "ts",
        "export",
        "--ts-length",
        "256",
        "--out",
        path.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "index,real,imag");
    assert_eq!(text.lines().count(), 257);
    let raw = dir.path().join("ts.bin");
    stdout_ok(&["ts", "export", "--out", raw.to_str().unwrap()]);
    assert_eq!(std::fs::metadata(Path::new(&raw)).unwrap().len(), 1024 * 16);
}

#[test]
fn bad_input_fails_cleanly() {
    for args in [
        &["sweep", "--param", "speed", "--grid", "1"][..],
        &["sweep", "--param", "osnr"],
        &["trial", "--ts-length", "30"],
        &["trial", "--algorithm", "magic"],
        &["estimate", "--input", "/nonexistent/rx.csv"],
    ] {
        let out = fracsync(args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty());
    }
}
