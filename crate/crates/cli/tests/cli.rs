use std::path::Path;
use std::process::{Command, Stdio};

use semantic_inspect::bridge::{ActFrame, Client, ObsLayout, ServerMessage};

const CONFIG: &str = "episode_length = 1.0\n\n[room]\nlength = 5.0\nwidth = 5.0\nheight = 3.0\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sem-inspect"))
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("episode.toml");
    std::fs::write(&path, CONFIG).unwrap();
    path.display().to_string()
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn run_writes_identical_csv_for_identical_seed_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let csv = |name: &str| dir.path().join(name).display().to_string();
    let base = ["run", "--config", &config, "--seed", "4", "--envs", "2", "--episodes", "1", "--obstacles", "0,4"];
    run_ok(bin().args(base).args(["--out", &csv("a.csv"), "--record", &csv("r.bin")]));
    run_ok(bin().args(base).args(["--out", &csv("b.csv")]));
    let a = std::fs::read(csv("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(csv("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("obstacles,env_id,episode,step,time,coverage,f,v,p,F,active_label,termination\n"));
    // 2 blocks × 2 envs × 10 steps.
    assert_eq!(text.lines().count(), 1 + 40);

    let out = run_ok(bin().args(["replay", "--file", &csv("r.bin"), "--map-out", &csv("map.bin")]));
    assert!(out.contains("bit-exact"), "{out}");
    assert_eq!(&std::fs::read(csv("map.bin")).unwrap()[..4], b"SIMP");
}

#[test]
fn corrupted_replay_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.bin");
    std::fs::write(&path, b"SRLRgarbage").unwrap();
    let out = bin().args(["replay", "--file"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn export_then_feasible_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    run_ok(bin().args(["export-scene", "--seed", "2", "--out"]).arg(&scene));
    let out = run_ok(
        bin()
            .args(["feasible-coverage", "--label", "1", "--dref", "1.0", "--band", "0.2", "--scene"])
            .arg(scene.join("manifest.toml")),
    );
    let feasible: usize = out.split_whitespace().nth(4).unwrap().parse().unwrap();
    assert!(out.contains("of 60 faces feasible") && (48..=60).contains(&feasible), "{out}");
}

#[test]
fn bench_zero_steps_reports_zero() {
    let out = run_ok(bin().args(["bench", "--envs", "2", "--steps", "0"]));
    assert!(out.contains("0.0 steps/s"), "{out}");
}

#[test]
fn serve_over_stdio() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let mut child = bin()
        .args(["serve", "--endpoint", "stdio", "--config", &config, "--envs", "2", "--episodes", "1"])
        .args(["--obstacles", "0"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let stdin = child.stdin.take().unwrap();
    let stdout = child.stdout.take().unwrap();
    let mut client = Client::connect(stdout, stdin, ObsLayout::default()).unwrap();
    assert_eq!(client.handshake.env_count, 2);
    let mut frames = 0;
    let mut done = 0;
    while let ServerMessage::Obs(f) = client.recv().unwrap() {
        frames += 1;
        done += (f.done != 0) as usize;
        client.send(&ActFrame { env_id: f.env_id, action: [0.0, 0.0, 0.0, 0.5] }).unwrap();
    }
    drop(client);
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert_eq!((frames, done), (22, 2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2 episodes"));
}

#[test]
fn bad_endpoint_is_rejected() {
    let out = bin().args(["serve", "--endpoint", "pigeon:1"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("endpoint"));
}
