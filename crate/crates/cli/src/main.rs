use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use semantic_inspect::bridge::{serve, Endpoint, ServeOptions};
use semantic_inspect::env::{Env, EpisodeConfig};
use semantic_inspect::replay::{record_episode, verify, Replay};
use semantic_inspect::runner::{
    bench, feasible_coverage, make_policy, run_batch, write_curves_csv, write_metrics_csv, BatchConfig,
    OracleParams, PolicyKind,
};
use semantic_inspect::scene::{export_scene, generate_room, import_scene};
use semantic_inspect::seeding::{derive_seed, episode_seed};
use semantic_inspect::sensors::{write_depth_pgm, write_mask_pbm};

#[derive(Parser)]
#[command(name = "sem-inspect", version, about = "Semantic inspection planning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of episodes and write per-step metrics.
    Run(RunArgs),
    /// Measure full-pipeline step throughput.
    Bench(BenchArgs),
    /// Compute the feasible face set of one semantic label in a scene.
    FeasibleCoverage(FeasibleArgs),
    /// Re-simulate a replay file and check the reward stream bit for bit.
    Replay(ReplayArgs),
    /// Serve environments to an external policy over the bridge protocol.
    Serve(ServeArgs),
    /// Generate a room and write it as a scene manifest plus OBJ meshes.
    ExportScene(ExportArgs),
}

#[derive(Args)]
struct BatchArgs {
    /// Episode config (TOML). Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 512)]
    envs: usize,
    #[arg(long, default_value_t = 6)]
    episodes: usize,
    /// Comma-separated obstacle counts, one block of episodes each.
    #[arg(long, value_delimiter = ',', default_value = "0,4,9,14,19")]
    obstacles: Vec<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    batch: BatchArgs,
    #[arg(long, default_value = "orbit")]
    policy: PolicyKind,
    /// Per-step metrics CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Coverage-over-time CSV (1 s bins with 5th/95th percentiles).
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Half-width of the distance band for the coverage metric (m).
    #[arg(long, default_value_t = 0.2)]
    band: f64,
    /// Record environment 0, episode 0 of the first block as a replay file.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Write depth/mask images of environment 0, episode 0 of the first block.
    #[arg(long)]
    dump_images: Option<PathBuf>,
    /// Bridge endpoint, used with `--policy bridge`.
    #[arg(long, default_value = "stdio")]
    endpoint: String,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    envs: usize,
    #[arg(long, default_value_t = 200)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FeasibleArgs {
    /// Scene manifest (TOML).
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    label: u32,
    #[arg(long)]
    dref: f64,
    #[arg(long, default_value_t = 0.2)]
    band: f64,
    /// Viewpoint lattice spacing (m).
    #[arg(long, default_value_t = 0.2)]
    grid: f64,
    #[arg(long, default_value_t = 16)]
    yaw_bins: usize,
    /// Episode config supplying the camera model.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    file: PathBuf,
    /// Write the final occupancy map snapshot here.
    #[arg(long)]
    map_out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    batch: BatchArgs,
    /// `stdio`, `tcp:HOST:PORT` or `unix:PATH`.
    #[arg(long, default_value = "stdio")]
    endpoint: String,
    /// Seconds to wait for each action frame; 0 waits forever.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Room seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    obstacles: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn load_config(path: Option<&Path>) -> Result<EpisodeConfig> {
    match path {
        Some(p) => EpisodeConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(EpisodeConfig::default()),
    }
}

fn batch_config(args: &BatchArgs, policy: PolicyKind, band: f64) -> Result<BatchConfig> {
    Ok(BatchConfig {
        episode: load_config(args.config.as_deref())?,
        env_count: args.envs,
        episodes_per_env: args.episodes,
        obstacle_counts: args.obstacles.clone(),
        policy,
        master_seed: args.seed,
        band,
        oracle: OracleParams::default(),
    })
}

/// Seed and config of environment 0, episode 0 in the first block.
fn first_episode(batch: &BatchConfig) -> (EpisodeConfig, u64) {
    let obstacles = batch.obstacle_counts[0];
    let mut config = batch.episode.clone();
    config.room.obstacle_count = obstacles;
    let seed = episode_seed(derive_seed(batch.master_seed, obstacles as u64), 0, 0);
    (config, seed)
}

fn dump_images(batch: &BatchConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let (config, seed) = first_episode(batch);
    let mut env = Env::new(config.clone())?;
    let mut policy = make_policy(batch.policy, &config, 0)?;
    let mut obs = env.reset(seed)?;
    policy.reset(derive_seed(seed, 5), env.d_ref());
    loop {
        if let Some(frame) = env.last_frame() {
            let k = env.step_count();
            write_depth_pgm(&frame.depth, &dir.join(format!("depth_{k:04}.pgm")))?;
            write_mask_pbm(&frame.mask, &dir.join(format!("mask_{k:04}.pbm")))?;
        }
        if env.termination().is_terminal() {
            return Ok(());
        }
        obs = env.step(policy.act(&obs))?.observation;
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let batch = batch_config(&args.batch, args.policy, args.band)?;
    if args.policy == PolicyKind::Bridge {
        return cmd_serve_batch(&batch, &args.endpoint, 60);
    }
    let start = Instant::now();
    let result = run_batch(&batch)?;
    if let Some(out) = &args.out {
        write_metrics_csv(&result.rows, out)?;
    }
    if let Some(curves) = &args.curves {
        write_curves_csv(&result.reports, curves)?;
    }
    if let Some(path) = &args.record {
        let (config, seed) = first_episode(&batch);
        let mut policy = make_policy(batch.policy, &config, 0)?;
        record_episode(&config, seed, policy.as_mut())?.write(path)?;
    }
    if let Some(dir) = &args.dump_images {
        dump_images(&batch, dir)?;
    }
    println!("obstacles  episodes  coverage  crash%  timeout%  faults");
    for r in &result.reports {
        println!(
            "{:>9}  {:>8}  {:>8.3}  {:>6.1}  {:>8.1}  {:>6}",
            r.obstacles, r.episodes, r.mean_final_coverage, r.crash_pct, r.timeout_pct, r.faults
        );
    }
    println!("{} steps in {:.1} s", result.rows.len(), start.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_serve_batch(batch: &BatchConfig, endpoint: &str, timeout: u64) -> Result<()> {
    let endpoint: Endpoint = endpoint.parse()?;
    let options = ServeOptions {
        action_timeout: (timeout > 0).then(|| std::time::Duration::from_secs(timeout)),
    };
    let summary = serve(&endpoint, batch, &options)?;
    // stdout carries the protocol in stdio mode, so report on stderr.
    eprintln!(
        "session ended: {} episodes{}",
        summary.episodes.len(),
        if summary.client_quit { ", client quit" } else { "" }
    );
    for ep in &summary.episodes {
        eprintln!(
            "env {:>3} episode {:>3}: {:>4} steps, return {:.4}, {}",
            ep.env_id,
            ep.episode,
            ep.steps,
            ep.reward_sum,
            ep.termination.as_str()
        );
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let report = bench(&config, args.envs, args.steps, args.seed)?;
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_feasible(args: FeasibleArgs) -> Result<()> {
    let scene = import_scene(&args.scene)?;
    let config = load_config(args.config.as_deref())?;
    let params = OracleParams {
        grid: args.grid,
        yaw_bins: args.yaw_bins,
        ..OracleParams::default()
    };
    let set = feasible_coverage(&scene, args.label, &config.camera, args.dref, args.band, &params)?;
    println!(
        "label {} object {}: {} of {} faces feasible ({:.4})",
        set.label,
        set.object_id,
        set.faces.len(),
        set.face_count,
        set.fraction()
    );
    let ids: Vec<String> = set.faces.iter().map(|f| f.to_string()).collect();
    println!("faces: {}", ids.join(" "));
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<()> {
    let replay = Replay::read(&args.file)?;
    let (env, mismatch) = verify(&replay)?;
    if let Some(path) = &args.map_out {
        env.occupancy().write_snapshot(path)?;
    }
    match mismatch {
        None => {
            println!("replay ok: {} steps reproduced bit-exact", replay.records.len());
            Ok(())
        }
        Some(m) => bail!(
            "replay diverged at step {}: recorded reward {:?} ({}), replayed {:?} ({})",
            m.step,
            m.recorded.reward,
            m.recorded.termination.as_str(),
            m.replayed.reward,
            m.replayed.termination.as_str()
        ),
    }
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let mut room = config.room.clone();
    room.seed = args.seed;
    if let Some(n) = args.obstacles {
        room.obstacle_count = n;
    }
    let scene = generate_room(&room)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    export_scene(&scene, &args.out)?;
    println!("wrote {}", args.out.join("manifest.toml").display());
    for label in scene.semantic_labels() {
        println!("semantic label {label}");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    match Cli::parse().command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::FeasibleCoverage(a) => cmd_feasible(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Serve(a) => {
            let batch = batch_config(&a.batch, PolicyKind::Bridge, 0.2)?;
            cmd_serve_batch(&batch, &a.endpoint, a.timeout)
        }
        Command::ExportScene(a) => cmd_export(a),
    }
}
