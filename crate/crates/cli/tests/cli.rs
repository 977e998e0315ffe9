use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use xrflux_cli::output::{sha256_hex, RunManifest};
use xrflux_core::trace::{read_trace_file, RequestKind};

const SMALL: &str = "[scenario]\nduration = 30.0\n";

fn xrflux(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xrflux"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = xrflux(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    s(&p).to_string()
}

/// simulate + derive (+ irm) into `dir`.
fn prepare(dir: &Path) {
    let cfg = small_config(dir);
    ok(&["simulate", "--config", &cfg, "--seed", "42", "--out", s(dir)]);
    ok(&["derive", "--log", s(&dir.join("visibility.log")), "--out", s(dir)]);
    ok(&["irm", "--trace", s(&dir.join("standard.trace")), "--out", s(dir)]);
}

fn lines(p: &Path) -> Vec<String> {
    std::fs::read_to_string(p).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let cfg = small_config(d);
        ok(&["simulate", "--config", &cfg, "--seed", "42", "--out", s(d)]);
    }
    let read = |d: &Path| std::fs::read(d.join("visibility.log")).unwrap();
    assert_eq!(sha256_hex(&read(a.path())), sha256_hex(&read(b.path())));
}

#[test]
fn invalid_config_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[scenario]\nduration = 0.0\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = xrflux(&["simulate", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("duration must be > 0"));
    assert!(!out_dir.exists());

    std::fs::write(&cfg, "[scenario.motion]\nprincipal_sped = 3.0\n").unwrap();
    let out = xrflux(&["simulate", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("principal_sped"));
}

#[test]
fn derive_and_irm_preserve_demands() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let standard = read_trace_file(&dir.path().join("standard.trace")).unwrap();
    let prefetch = read_trace_file(&dir.path().join("prefetch.trace")).unwrap();
    let demands: Vec<_> = prefetch.records.iter().filter(|r| r.kind == RequestKind::Demand).copied().collect();
    assert_eq!(demands, standard.records);
    let irm = read_trace_file(&dir.path().join("irm.trace")).unwrap();
    assert_eq!(irm.records.len(), standard.records.len());
    assert_ne!(irm.records, standard.records);
}

#[test]
fn manifest_hashes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let m: RunManifest = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    let stages: Vec<&str> = m.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(stages, ["simulate", "derive", "irm"]);
    assert_eq!(m.files.len(), 5);
    for (name, hash) in &m.files {
        assert_eq!(&sha256_hex(&std::fs::read(dir.path().join(name)).unwrap()), hash, "{name}");
    }
    assert_eq!(m.stages[0].seed, Some(42));
    assert!(m.stages[1].notes.contains_key("extended.trace"));
}

#[test]
fn truncated_log_is_rejected_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    ok(&["simulate", "--config", &cfg, "--out", s(dir.path())]);
    let log = dir.path().join("visibility.log");
    let text = std::fs::read_to_string(&log).unwrap();
    let cut = &text[..text.len() / 2];
    let cut = &cut[..cut.rfind(',').unwrap()];
    let broken = dir.path().join("broken.log");
    std::fs::write(&broken, cut).unwrap();
    let line_no = cut.lines().count();

    let out_dir = dir.path().join("derived");
    let out = xrflux(&["derive", "--log", s(&broken), "--out", s(&out_dir)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("line {line_no}")), "{err}");
    assert!(!out_dir.exists());
}

#[test]
fn replay_tables_have_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let d = dir.path();
    let run = d.join("five");
    ok(&[
        "replay", "--capacities", "5", "--out", s(&run), "--trace",
        s(&d.join("standard.trace")), s(&d.join("extended.trace")), s(&d.join("prefetch.trace")),
    ]);
    let users = lines(&run.join("users.csv"));
    assert_eq!(users[0], "user_id,strategy,requests,hits,hit_rate,mean_delay_ms");
    assert_eq!(users.len() - 1, 10 * 3);
    for u in 0..10 {
        for strategy in ["standard", "extended", "prefetch"] {
            let prefix = format!("{u},{strategy},");
            assert_eq!(users.iter().filter(|l| l.starts_with(&prefix)).count(), 1, "{prefix}");
        }
    }

    let run = d.join("sizes");
    ok(&[
        "replay", "--capacities", "1..16", "--out", s(&run), "--trace",
        s(&d.join("standard.trace")), s(&d.join("irm.trace")),
    ]);
    let sweep = lines(&run.join("sweep.csv"));
    assert_eq!(sweep[0], "capacity,strategy,requests,hits,hit_rate");
    let standard_hits: Vec<u64> = sweep[1..]
        .iter()
        .filter(|l| l.split(',').nth(1) == Some("standard"))
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(standard_hits.len(), 16);
    assert!(standard_hits.windows(2).all(|w| w[0] <= w[1]), "{standard_hits:?}");
    assert_eq!(sweep[1..].iter().filter(|l| l.contains(",irm,")).count(), 16);
    // users.csv is still produced at the default per-user capacity.
    assert!(lines(&run.join("users.csv")).len() > 1);
}

#[test]
fn report_merges_runs_in_figure_order() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let d = dir.path();
    let (a, b) = (d.join("a"), d.join("b"));
    ok(&["replay", "--capacities", "2,4", "--depth", "10", "--out", s(&a), "--trace", s(&d.join("irm.trace")), s(&d.join("standard.trace"))]);
    ok(&["replay", "--capacities", "2,4", "--out", s(&b), "--trace", s(&d.join("prefetch.trace"))]);
    let merged = d.join("merged");
    ok(&["report", "--in", s(&a), s(&b), "--out", s(&merged)]);
    let strategies: Vec<String> = lines(&merged.join("sweep.csv"))[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            format!("{}:{}", f[0], f[1])
        })
        .collect();
    assert_eq!(strategies, ["2:standard", "2:prefetch", "2:irm", "4:standard", "4:prefetch", "4:irm"]);
    assert_eq!(lines(&merged.join("depth_sweep.csv")), ["S,capacity,hit_rate", &lines(&a.join("depth_sweep.csv"))[1], &lines(&a.join("depth_sweep.csv"))[2]]);

    let out = xrflux(&["report", "--in", s(&a), s(&a), "--out", s(&d.join("dup"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate"));
}

#[test]
fn missing_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    for args in [
        vec!["derive", "--log", "/nonexistent/v.log", "--out", s(&out_dir)],
        vec!["irm", "--trace", "/nonexistent/s.trace", "--out", s(&out_dir)],
        vec!["replay", "--trace", "/nonexistent/s.trace", "--out", s(&out_dir)],
        vec!["report", "--in", "/nonexistent", "--out", s(&out_dir)],
        vec!["simulate"],
    ] {
        let out = xrflux(&args);
        assert!(!out.status.success(), "{args:?}");
        assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    }
    assert!(!out_dir.exists());
}

struct ServeGuard(std::process::Child);

impl Drop for ServeGuard {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn replay_http_matches_in_process_replay() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let d = dir.path();
    let mut child = Command::new(env!("CARGO_BIN_EXE_xrflux"))
        .args(["serve", "--listen", "127.0.0.1:0", "--seed", "42", "--capacity", "3", "--catalog", "200"])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let stdout = child.stdout.take().unwrap();
    let guard = ServeGuard(child);
    let mut url = String::new();
    BufReader::new(stdout).read_line(&mut url).unwrap();
    let url = url.trim().to_string();
    assert!(url.starts_with("http://127.0.0.1:"), "{url}");

    let traces = [s(&d.join("standard.trace")).to_string(), s(&d.join("prefetch.trace")).to_string()];
    let (local, http) = (d.join("local"), d.join("http"));
    ok(&["replay", "--seed", "42", "--capacities", "1..6", "--out", s(&local), "--trace", &traces[0], &traces[1]]);
    ok(&["replay-http", "--endpoint", &url, "--capacities", "1..6", "--out", s(&http), "--trace", &traces[0], &traces[1]]);
    drop(guard);
    for f in ["sweep.csv", "users.csv", "qoe.csv"] {
        assert_eq!(std::fs::read(local.join(f)).unwrap(), std::fs::read(http.join(f)).unwrap(), "{f}");
    }
}
