use std::os::unix::net::UnixStream;
use std::path::PathBuf;
use std::thread;

use semantic_inspect::bridge::{
    serve_stream, ActFrame, Client, Handshake, ObsFrame, ObsLayout, ServeOptions, ServerMessage, SessionSummary,
    MSG_ACT,
};
use semantic_inspect::env::EpisodeConfig;
use semantic_inspect::mapping::LOCAL_CELLS;
use semantic_inspect::runner::BatchConfig;
use semantic_inspect::SimError;

fn small_batch(env_count: usize, episodes: usize) -> BatchConfig {
    let mut episode = EpisodeConfig::default();
    episode.episode_length = 1.0;
    episode.room.length = 5.0;
    episode.room.width = 5.0;
    episode.room.height = 3.0;
    BatchConfig {
        episode,
        env_count,
        episodes_per_env: episodes,
        obstacle_counts: vec![0],
        master_seed: 11,
        ..BatchConfig::default()
    }
}

fn spawn_server(batch: BatchConfig) -> (UnixStream, thread::JoinHandle<Result<SessionSummary, SimError>>) {
    let (ours, theirs) = UnixStream::pair().unwrap();
    let handle = thread::spawn(move || {
        let reader = theirs.try_clone().unwrap();
        let timeouts = theirs.try_clone().unwrap();
        serve_stream(reader, theirs, &batch, |t| timeouts.set_read_timeout(t), &ServeOptions::default())
    });
    (ours, handle)
}

/// Zero-action client answering each frame as it arrives. Returns every
/// frame received, in order.
fn run_zero_client(batch: BatchConfig) -> (Vec<ObsFrame>, SessionSummary) {
    let (stream, server) = spawn_server(batch);
    let mut client = Client::connect(stream.try_clone().unwrap(), stream, ObsLayout::default()).unwrap();
    let mut frames = Vec::new();
    while let ServerMessage::Obs(f) = client.recv().unwrap() {
        client.send(&ActFrame { env_id: f.env_id, action: [0.0; 4] }).unwrap();
        frames.push(f);
    }
    let summary = server.join().unwrap().unwrap();
    (frames, summary)
}

#[test]
fn zero_action_session_runs_to_timeouts_and_is_reproducible() {
    let (frames, summary) = run_zero_client(small_batch(2, 2));
    assert_eq!(summary.episodes.len(), 4);
    assert!(!summary.client_quit);
    for ep in &summary.episodes {
        assert_eq!(ep.termination.as_str(), "timeout");
        assert_eq!(ep.steps, 10);
    }
    for env in 0..2u32 {
        let mine: Vec<&ObsFrame> = frames.iter().filter(|f| f.env_id == env).collect();
        // Two episodes of 10 steps plus the reset frame each.
        assert_eq!(mine.len(), 22);
        for (k, f) in mine.iter().enumerate() {
            assert_eq!(f.episode as usize, k / 11);
            assert_eq!(f.step as usize, k % 11);
            assert_eq!(f.done, if k % 11 == 10 { 2 } else { 0 });
            assert_eq!(f.masked_depth.len(), 96 * 54);
            assert_eq!(f.local_occ.len(), LOCAL_CELLS);
        }
        assert_eq!(mine[0].reward, [0.0; 3]);
    }
    let (again, _) = run_zero_client(small_batch(2, 2));
    assert_eq!(frames, again);
}

#[test]
fn wrong_magic_is_rejected() {
    let (stream, server) = spawn_server(small_batch(1, 1));
    let mut reader = stream.try_clone().unwrap();
    let mut writer = stream;
    let hs = Handshake::decode(&semantic_inspect::bridge::read_message(&mut reader).unwrap()).unwrap();
    let mut bad = hs;
    bad.magic = *b"NOPE";
    semantic_inspect::bridge::write_message(&mut writer, &bad.encode()).unwrap();
    let err = server.join().unwrap().unwrap_err();
    assert!(matches!(err, SimError::Protocol(_)));
    assert!(err.to_string().contains("magic"), "{err}");
}

#[test]
fn short_action_frame_is_a_protocol_error() {
    let (stream, server) = spawn_server(small_batch(1, 1));
    let mut client = Client::connect(stream.try_clone().unwrap(), stream, ObsLayout::default()).unwrap();
    assert!(matches!(client.recv().unwrap(), ServerMessage::Obs(_)));
    client.send_raw(&[MSG_ACT, 0, 0, 0, 0, 0, 0]).unwrap();
    let err = server.join().unwrap().unwrap_err().to_string();
    assert!(err.contains("expected 21") && err.contains("received 7"), "{err}");
}

#[test]
fn bye_ends_session_early() {
    let (stream, server) = spawn_server(small_batch(1, 3));
    let mut client = Client::connect(stream.try_clone().unwrap(), stream, ObsLayout::default()).unwrap();
    assert!(matches!(client.recv().unwrap(), ServerMessage::Obs(_)));
    client.bye().unwrap();
    let summary = server.join().unwrap().unwrap();
    assert!(summary.client_quit);
    assert!(summary.episodes.is_empty());
}

fn golden_frame() -> ObsFrame {
    let layout = ObsLayout::default();
    ObsFrame {
        env_id: 7,
        episode: 2,
        step: 31,
        state: [1.5, -2.25, 0.75, 0.0, 0.0, 0.38268343, 0.9238795, 0.1, -0.2, 0.0, 0.0, 0.0, 0.5],
        prev_action: [1.0, -0.5, 0.25, -1.0],
        masked_depth: (0..layout.depth_len())
            .map(|i| if (i / 96) % 9 < 3 { 0.5 + (i % 96) as f32 / 64.0 } else { 0.0 })
            .collect(),
        local_occ: (0..LOCAL_CELLS).map(|i| ((i * 7) % 3) as i8 - 1).collect(),
        local_svs: (0..LOCAL_CELLS).map(|i| if i % 11 == 0 { 0.25 } else { 0.0 }).collect(),
        reward: [0.03125, 0.046875, -1.0],
        done: 1,
    }
}

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_obs_frame.bin")
}

/// Set `UPDATE_GOLDEN=1` to rewrite the fixture after a deliberate layout change.
#[test]
fn golden_obs_frame_matches_fixture() {
    let layout = ObsLayout::default();
    let bytes = golden_frame().encode(&layout).unwrap();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(fixture_path(), &bytes).unwrap();
    }
    let fixture = std::fs::read(fixture_path()).expect("fixture present");
    assert_eq!(fixture, bytes);
    assert_eq!(ObsFrame::decode(&fixture, &layout).unwrap(), golden_frame());
    // Spot-check offsets independently of the encoder.
    assert_eq!(fixture[0], 1);
    assert_eq!(u32::from_le_bytes(fixture[1..5].try_into().unwrap()), 7);
    assert_eq!(f32::from_le_bytes(fixture[13..17].try_into().unwrap()), 1.5);
    let done_at = fixture.len() - 1;
    assert_eq!(fixture[done_at], 1);
    assert_eq!(f32::from_le_bytes(fixture[done_at - 4..done_at].try_into().unwrap()), -1.0);
}

#[test]
fn no_new_frame_until_every_action_arrives() {
    let (stream, server) = spawn_server(small_batch(2, 1));
    let probe = stream.try_clone().unwrap();
    let mut client = Client::connect(stream.try_clone().unwrap(), stream, ObsLayout::default()).unwrap();
    for _ in 0..2 {
        assert!(matches!(client.recv().unwrap(), ServerMessage::Obs(_)));
    }
    client.send(&ActFrame { env_id: 0, action: [0.0; 4] }).unwrap();
    probe.set_read_timeout(Some(std::time::Duration::from_millis(300))).unwrap();
    let err = client.recv().unwrap_err().to_string();
    assert!(err.contains("timed out"), "{err}");
    probe.set_read_timeout(None).unwrap();
    client.send(&ActFrame { env_id: 1, action: [0.0; 4] }).unwrap();
    match client.recv().unwrap() {
        ServerMessage::Obs(f) => assert_eq!((f.env_id, f.step), (0, 1)),
        ServerMessage::Bye => panic!("session ended early"),
    }
    client.bye().unwrap();
    assert!(server.join().unwrap().unwrap().client_quit);
}
