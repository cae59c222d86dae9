use semantic_inspect::env::{EpisodeConfig, Termination};
use semantic_inspect::runner::{
    bench, percentile, run_batch, summarize, write_metrics_csv, BatchConfig, EpisodeSummary, PolicyKind,
};
use semantic_inspect::SimError;

fn small(policy: PolicyKind) -> BatchConfig {
    let mut episode = EpisodeConfig::default();
    episode.episode_length = 3.0;
    episode.room.length = 6.0;
    episode.room.width = 6.0;
    episode.room.height = 3.0;
    BatchConfig {
        episode,
        env_count: 3,
        episodes_per_env: 2,
        obstacle_counts: vec![0, 4],
        policy,
        master_seed: 21,
        ..BatchConfig::default()
    }
}

#[test]
fn identical_master_seed_gives_identical_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_metrics_csv(&run_batch(&small(PolicyKind::Random)).unwrap().rows, &a).unwrap();
    write_metrics_csv(&run_batch(&small(PolicyKind::Random)).unwrap().rows, &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());

    let mut other = small(PolicyKind::Random);
    other.master_seed = 22;
    assert_ne!(run_batch(&other).unwrap().rows, run_batch(&small(PolicyKind::Random)).unwrap().rows);
}

#[test]
fn batch_accounting_and_ordering() {
    let result = run_batch(&small(PolicyKind::Orbit)).unwrap();
    assert_eq!(result.episodes.len(), 2 * 3 * 2);
    assert_eq!(result.reports.len(), 2);
    for r in &result.reports {
        assert_eq!(r.episodes, 6);
        assert!((r.crash_pct + r.timeout_pct - 100.0).abs() < 1e-9);
        assert_eq!(r.bins.len(), 3);
        for b in &r.bins {
            assert!(b.p5 <= b.mean + 1e-12 && b.mean <= b.p95 + 1e-12);
        }
    }
    let keys: Vec<_> = result.rows.iter().map(|r| (r.obstacles, r.env_id, r.episode, r.step)).collect();
    let mut sorted = keys.clone();
    sorted.sort_by_key(|&(o, e, ep, s)| (result.reports.iter().position(|r| r.obstacles == o), e, ep, s));
    assert_eq!(keys, sorted);
    // Coverage never drops within an episode and stays in [0, 1].
    for w in result.rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        assert!((0.0..=1.0).contains(&b.coverage));
        if (a.obstacles, a.env_id, a.episode) == (b.obstacles, b.env_id, b.episode) {
            assert!(b.coverage >= a.coverage, "{a:?} -> {b:?}");
            assert!(b.cumulative_f >= a.cumulative_f);
        }
    }
}

#[test]
fn invalid_batches_are_rejected() {
    let mut b = small(PolicyKind::Random);
    b.env_count = 0;
    assert!(matches!(run_batch(&b), Err(SimError::InvalidArgument(_))));
    assert!(run_batch(&small(PolicyKind::Bridge)).is_err());
}

#[test]
fn csv_error_names_the_path() {
    let err = write_metrics_csv(&[], std::path::Path::new("/nonexistent-dir/x.csv")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent-dir/x.csv"), "{err}");
}

fn summary(termination: Termination, coverage: Vec<f64>) -> EpisodeSummary {
    EpisodeSummary {
        obstacles: 0,
        env_id: 0,
        episode: 0,
        seed: 0,
        steps: coverage.len() as u64,
        termination,
        final_coverage: *coverage.last().unwrap(),
        feasible_faces: 10,
        total_faces: 12,
        episode_return: 0.0,
        coverage,
    }
}

#[test]
fn summary_bins_hold_final_value_and_use_per_episode_curves() {
    // 2 s episodes at 10 Hz; the crash ends after 5 steps.
    let eps = vec![
        summary(Termination::Timeout, (1..=20).map(|i| i as f64 / 20.0).collect()),
        summary(Termination::Crash, vec![0.1; 5]),
        summary(Termination::Fault, vec![0.3; 3]),
    ];
    let r = summarize(0, &eps, 2.0, 0.1);
    assert!((r.crash_pct - 200.0 / 3.0).abs() < 1e-9);
    assert!((r.timeout_pct - 100.0 / 3.0).abs() < 1e-9);
    assert_eq!(r.faults, 1);
    assert!((r.mean_final_coverage - (1.0 + 0.1 + 0.3) / 3.0).abs() < 1e-12);
    assert_eq!(r.bins.len(), 2);
    assert!((r.bins[0].mean - (0.5 + 0.1 + 0.3) / 3.0).abs() < 1e-12);
    assert!((r.bins[1].mean - (1.0 + 0.1 + 0.3) / 3.0).abs() < 1e-12);
    assert!((r.bins[1].p95 - percentile(&[0.1, 0.3, 1.0], 0.95)).abs() < 1e-12);
}

#[test]
fn percentile_interpolates() {
    assert!(percentile(&[], 0.5).is_nan());
    assert_eq!(percentile(&[2.0], 0.05), 2.0);
    assert!((percentile(&[0.0, 1.0, 2.0, 3.0, 4.0], 0.05) - 0.2).abs() < 1e-12);
    assert!((percentile(&[0.0, 10.0], 0.95) - 9.5).abs() < 1e-12);
}

#[test]
fn bench_with_zero_steps_has_no_samples() {
    let r = bench(&small(PolicyKind::Random).episode, 2, 0, 1).unwrap();
    assert_eq!(r.parallel.steps, 0);
    assert_eq!(r.parallel.steps_per_sec(), 0.0);
    assert_eq!(r.single.steps_per_sec(), 0.0);
    assert!(r.to_text().contains("render"));
}

#[test]
fn bench_step_counts_do_not_depend_on_timing() {
    let config = small(PolicyKind::Random).episode;
    let a = bench(&config, 2, 40, 5).unwrap();
    let b = bench(&config, 2, 40, 5).unwrap();
    assert_eq!((a.single.steps, a.parallel.steps), (40, 80));
    assert_eq!((b.single.steps, b.parallel.steps), (40, 80));
    assert_eq!(a.parallel_timings.steps, 80);
}
