//! Length-prefixed binary protocol that lets an external process drive the
//! environments as the policy.
//!
//! Every message on the wire is a `u32` little-endian payload length
//! followed by the payload. The first message in each direction is a
//! handshake; after that the server sends observation frames and the client
//! answers each with an action frame. See `PROTOCOL.md` for the byte layout.

use std::fmt;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;

use crate::agent::{ACTION_DIM, STATE_DIM};
use crate::env::{Env, Observation, StepResult, Termination};
use crate::error::{Result, SimError};
use crate::mapping::LOCAL_CELLS;
use crate::reward::RewardBreakdown;
use crate::runner::BatchConfig;
use crate::seeding::{derive_seed, episode_seed};

pub const MAGIC: [u8; 4] = *b"SRLI";
pub const PROTOCOL_VERSION: u16 = 1;
pub const HANDSHAKE_LEN: usize = 18;
pub const MSG_OBS: u8 = 1;
pub const MSG_ACT: u8 = 2;
pub const MSG_BYE: u8 = 3;
pub const ACT_LEN: usize = 1 + 4 + 4 * ACTION_DIM;
/// Largest payload either side will accept, to bound allocation on garbage.
pub const MAX_PAYLOAD: usize = 64 << 20;

/// Tensor shapes carried by an observation frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsLayout {
    pub depth_rows: usize,
    pub depth_cols: usize,
}

impl Default for ObsLayout {
    fn default() -> Self {
        ObsLayout { depth_rows: 54, depth_cols: 96 }
    }
}

impl ObsLayout {
    pub fn depth_len(&self) -> usize {
        self.depth_rows * self.depth_cols
    }

    /// Payload bytes of one observation frame, including the type byte.
    pub fn obs_len(&self) -> usize {
        1 + 12 + 4 * STATE_DIM + 4 * ACTION_DIM + 4 * self.depth_len() + LOCAL_CELLS + 4 * LOCAL_CELLS + 12 + 1
    }

    /// Canonical description of every tensor in the frame.
    pub fn describe(&self) -> String {
        let n = crate::mapping::LOCAL_N;
        format!(
            "v{PROTOCOL_VERSION};state:f32[{STATE_DIM}];prev_action:f32[{ACTION_DIM}];\
             masked_depth:f32[{},{}];local_occ:i8[{n},{n},{n}];local_svs:f32[{n},{n},{n}];\
             reward:f32[3];done:u8;action:f32[{ACTION_DIM}]",
            self.depth_rows, self.depth_cols
        )
    }

    /// 64-bit FNV-1a of [`ObsLayout::describe`].
    pub fn hash(&self) -> u64 {
        fnv1a64(self.describe().as_bytes())
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Handshake {
    pub magic: [u8; 4],
    pub version: u16,
    pub env_count: u32,
    pub layout_hash: u64,
}

impl Handshake {
    pub fn new(env_count: u32, layout: &ObsLayout) -> Self {
        Handshake { magic: MAGIC, version: PROTOCOL_VERSION, env_count, layout_hash: layout.hash() }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HANDSHAKE_LEN);
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.env_count.to_le_bytes());
        out.extend_from_slice(&self.layout_hash.to_le_bytes());
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self> {
        check_len("handshake", HANDSHAKE_LEN, payload.len())?;
        let mut r = Cursor::new(payload);
        let hs = Handshake {
            magic: r.array()?,
            version: r.u16()?,
            env_count: r.u32()?,
            layout_hash: r.u64()?,
        };
        Ok(hs)
    }

    /// Checks a peer handshake against what this side expects.
    pub fn validate(&self, expected: &Handshake) -> Result<()> {
        if self.magic != MAGIC {
            return Err(SimError::Protocol(format!("bad magic {:02x?}, expected {:02x?}", self.magic, MAGIC)));
        }
        if self.version != expected.version {
            return Err(SimError::Protocol(format!(
                "protocol version {} not supported, expected {}",
                self.version, expected.version
            )));
        }
        if self.layout_hash != expected.layout_hash {
            return Err(SimError::Protocol(format!(
                "observation layout hash {:#018x} does not match {:#018x}",
                self.layout_hash, expected.layout_hash
            )));
        }
        if self.env_count != expected.env_count {
            return Err(SimError::Protocol(format!(
                "env_count {} does not match {}",
                self.env_count, expected.env_count
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObsFrame {
    pub env_id: u32,
    pub episode: u32,
    pub step: u32,
    pub state: [f32; STATE_DIM],
    pub prev_action: [f32; ACTION_DIM],
    pub masked_depth: Vec<f32>,
    pub local_occ: Vec<i8>,
    pub local_svs: Vec<f32>,
    /// `f, v, p` of the step that produced this observation; zero after reset.
    pub reward: [f32; 3],
    /// 0 running, 1 crash, 2 timeout.
    pub done: u8,
}

/// Wire code for a termination. Numerical faults end the episode like a crash.
pub fn done_code(t: Termination) -> u8 {
    match t {
        Termination::Running => 0,
        Termination::Crash | Termination::Fault => 1,
        Termination::Timeout => 2,
    }
}

impl ObsFrame {
    pub fn from_observation(
        env_id: u32,
        episode: u32,
        step: u32,
        obs: &Observation,
        reward: &RewardBreakdown,
        termination: Termination,
    ) -> Self {
        ObsFrame {
            env_id,
            episode,
            step,
            state: obs.state.map(|x| x as f32),
            prev_action: obs.prev_action.map(|x| x as f32),
            masked_depth: obs.masked_depth.iter().map(|&x| x as f32).collect(),
            local_occ: obs.local_occupancy.clone(),
            local_svs: obs.local_svs.iter().map(|&x| x as f32).collect(),
            reward: [reward.f as f32, reward.v as f32, reward.p as f32],
            done: done_code(termination),
        }
    }

    pub fn reward_sum(&self) -> f64 {
        self.reward.iter().map(|&r| r as f64).sum()
    }

    pub fn encode(&self, layout: &ObsLayout) -> Result<Vec<u8>> {
        if self.masked_depth.len() != layout.depth_len()
            || self.local_occ.len() != LOCAL_CELLS
            || self.local_svs.len() != LOCAL_CELLS
        {
            return Err(SimError::Protocol(format!(
                "observation tensors ({}, {}, {}) do not match layout ({}, {LOCAL_CELLS}, {LOCAL_CELLS})",
                self.masked_depth.len(),
                self.local_occ.len(),
                self.local_svs.len(),
                layout.depth_len()
            )));
        }
        let mut out = Vec::with_capacity(layout.obs_len());
        out.push(MSG_OBS);
        for v in [self.env_id, self.episode, self.step] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_f32s(&mut out, &self.state);
        put_f32s(&mut out, &self.prev_action);
        put_f32s(&mut out, &self.masked_depth);
        out.extend(self.local_occ.iter().map(|&v| v as u8));
        put_f32s(&mut out, &self.local_svs);
        put_f32s(&mut out, &self.reward);
        out.push(self.done);
        debug_assert_eq!(out.len(), layout.obs_len());
        Ok(out)
    }

    pub fn decode(payload: &[u8], layout: &ObsLayout) -> Result<Self> {
        check_len("observation frame", layout.obs_len(), payload.len())?;
        let mut r = Cursor::new(payload);
        let ty = r.u8()?;
        if ty != MSG_OBS {
            return Err(SimError::Protocol(format!("expected observation frame (type {MSG_OBS}), got type {ty}")));
        }
        let frame = ObsFrame {
            env_id: r.u32()?,
            episode: r.u32()?,
            step: r.u32()?,
            state: r.f32_array()?,
            prev_action: r.f32_array()?,
            masked_depth: r.f32_vec(layout.depth_len())?,
            local_occ: r.take(LOCAL_CELLS)?.iter().map(|&b| b as i8).collect(),
            local_svs: r.f32_vec(LOCAL_CELLS)?,
            reward: r.f32_array()?,
            done: r.u8()?,
        };
        if frame.done > 2 {
            return Err(SimError::Protocol(format!("invalid done code {}", frame.done)));
        }
        Ok(frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActFrame {
    pub env_id: u32,
    pub action: [f32; ACTION_DIM],
}

impl ActFrame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ACT_LEN);
        out.push(MSG_ACT);
        out.extend_from_slice(&self.env_id.to_le_bytes());
        put_f32s(&mut out, &self.action);
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self> {
        check_len("action frame", ACT_LEN, payload.len())?;
        let mut r = Cursor::new(payload);
        let ty = r.u8()?;
        if ty != MSG_ACT {
            return Err(SimError::Protocol(format!("expected action frame (type {MSG_ACT}), got type {ty}")));
        }
        Ok(ActFrame { env_id: r.u32()?, action: r.f32_array()? })
    }

    /// Action with every entry clamped to `[-1, 1]`; NaN becomes 0.
    pub fn clamped(&self) -> [f32; ACTION_DIM] {
        self.action.map(|a| if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) })
    }
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(SimError::Protocol(format!(
            "{what} payload length mismatch: expected {expected} bytes, received {got}"
        )));
    }
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(SimError::Protocol(format!("frame truncated at byte {}", self.buf.len())));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    fn f32_array<const N: usize>(&mut self) -> Result<[f32; N]> {
        let mut out = [0.0; N];
        for v in &mut out {
            *v = self.f32()?;
        }
        Ok(out)
    }

    fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect())
    }
}

fn map_io(e: io::Error) -> SimError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => {
            SimError::Protocol("timed out waiting for the peer".into())
        }
        io::ErrorKind::UnexpectedEof => SimError::Protocol("connection closed by peer".into()),
        _ => SimError::Stream(e),
    }
}

/// Writes one length-prefixed message.
pub fn write_message(w: &mut impl Write, payload: &[u8]) -> Result<()> {
    let len = u32::try_from(payload.len()).map_err(|_| SimError::Protocol("payload too large".into()))?;
    w.write_all(&len.to_le_bytes()).map_err(map_io)?;
    w.write_all(payload).map_err(map_io)
}

/// Reads one length-prefixed message.
pub fn read_message(r: &mut impl Read) -> Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(map_io)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_PAYLOAD {
        return Err(SimError::Protocol(format!("payload length {len} exceeds limit {MAX_PAYLOAD}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(map_io)?;
    Ok(buf)
}

/// Where the server listens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Stdio,
    Tcp(String),
    #[cfg(unix)]
    Unix(PathBuf),
}

impl FromStr for Endpoint {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "stdio" || s == "-" {
            return Ok(Endpoint::Stdio);
        }
        if let Some(addr) = s.strip_prefix("tcp:") {
            return Ok(Endpoint::Tcp(addr.to_string()));
        }
        #[cfg(unix)]
        if let Some(path) = s.strip_prefix("unix:") {
            return Ok(Endpoint::Unix(PathBuf::from(path)));
        }
        Err(SimError::invalid(format!(
            "endpoint '{s}' not understood; use stdio, tcp:HOST:PORT or unix:PATH"
        )))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Stdio => write!(f, "stdio"),
            Endpoint::Tcp(a) => write!(f, "tcp:{a}"),
            #[cfg(unix)]
            Endpoint::Unix(p) => write!(f, "unix:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServeOptions {
    /// How long to wait for each action frame; `None` waits forever.
    pub action_timeout: Option<Duration>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions { action_timeout: Some(Duration::from_secs(60)) }
    }
}

/// One finished episode as seen by the server.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionEpisode {
    pub env_id: u32,
    pub episode: u32,
    pub steps: u32,
    pub reward_sum: f64,
    pub termination: Termination,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionSummary {
    pub episodes: Vec<SessionEpisode>,
    /// True when the client ended the session with a bye message.
    pub client_quit: bool,
}

struct Slot {
    env: Env,
    /// Episode counter across all curriculum blocks.
    episode: u32,
    /// Episode index within the current block.
    block_episode: usize,
    pending: ObsFrame,
    reward_sum: f64,
    retired: bool,
}

impl Slot {
    fn start(&mut self, block_seed: u64, env_id: u32) -> Result<()> {
        let seed = episode_seed(block_seed, env_id as u64, self.block_episode as u64);
        let obs = self.env.reset(seed)?;
        self.pending = ObsFrame::from_observation(
            env_id,
            self.episode,
            0,
            &obs,
            &RewardBreakdown::default(),
            Termination::Running,
        );
        self.reward_sum = 0.0;
        Ok(())
    }

    fn apply(&mut self, env_id: u32, r: StepResult) {
        self.reward_sum += r.reward.total();
        self.pending = ObsFrame::from_observation(
            env_id,
            self.episode,
            r.info.step as u32,
            &r.observation,
            &r.reward,
            r.termination,
        );
    }
}

/// Runs one session over an already-connected stream.
///
/// Obstacle blocks from the batch config run one after another with the
/// same seeding as the batch runner. In each round the server sends one
/// frame per live environment (ascending id), then reads exactly one action
/// frame for each of them in any order, then steps them all. After a
/// terminal frame the matching action is discarded and the environment
/// either resets (its next frame has step 0) or retires.
pub fn serve_stream<R: Read, W: Write>(
    reader: R,
    writer: W,
    batch: &BatchConfig,
    mut on_timeout: impl FnMut(Option<Duration>) -> io::Result<()>,
    options: &ServeOptions,
) -> Result<SessionSummary> {
    if batch.env_count == 0 || batch.episodes_per_env == 0 || batch.obstacle_counts.is_empty() {
        return Err(SimError::invalid("env_count, episodes_per_env and obstacle_counts must be non-empty"));
    }
    batch.episode.validate()?;
    let mut reader = BufReader::new(reader);
    let mut writer = BufWriter::new(writer);
    let layout = ObsLayout {
        depth_rows: batch.episode.camera.height,
        depth_cols: batch.episode.camera.width,
    };
    let env_count = u32::try_from(batch.env_count).map_err(|_| SimError::invalid("env_count exceeds u32"))?;
    let ours = Handshake::new(env_count, &layout);
    write_message(&mut writer, &ours.encode())?;
    writer.flush().map_err(map_io)?;
    on_timeout(options.action_timeout).map_err(SimError::Stream)?;
    let theirs = Handshake::decode(&read_message(&mut reader)?)?;
    theirs.validate(&ours)?;

    let mut summary = SessionSummary::default();
    let mut episode_base = 0u32;
    for &obstacles in &batch.obstacle_counts {
        let mut config = batch.episode.clone();
        config.room.obstacle_count = obstacles;
        let block_seed = derive_seed(batch.master_seed, obstacles as u64);
        let mut slots: Vec<Slot> = (0..env_count)
            .into_par_iter()
            .map(|id| {
                let mut slot = Slot {
                    env: Env::new(config.clone())?,
                    episode: episode_base,
                    block_episode: 0,
                    pending: ObsFrame::from_observation(
                        id,
                        0,
                        0,
                        &Observation::default(),
                        &RewardBreakdown::default(),
                        Termination::Running,
                    ),
                    reward_sum: 0.0,
                    retired: false,
                };
                slot.start(block_seed, id)?;
                Ok(slot)
            })
            .collect::<Result<_>>()?;

        while slots.iter().any(|s| !s.retired) {
            for s in slots.iter().filter(|s| !s.retired) {
                write_message(&mut writer, &s.pending.encode(&layout)?)?;
            }
            writer.flush().map_err(map_io)?;

            let mut actions: Vec<Option<[f32; ACTION_DIM]>> = vec![None; slots.len()];
            let expected = slots.iter().filter(|s| !s.retired).count();
            for _ in 0..expected {
                let msg = read_message(&mut reader)?;
                if msg.first() == Some(&MSG_BYE) {
                    summary.client_quit = true;
                    return Ok(summary);
                }
                let act = ActFrame::decode(&msg)?;
                let id = act.env_id as usize;
                match slots.get(id) {
                    Some(s) if !s.retired && actions[id].is_none() => actions[id] = Some(act.clamped()),
                    Some(s) if !s.retired => {
                        return Err(SimError::Protocol(format!("second action for env {id} in one round")));
                    }
                    _ => return Err(SimError::Protocol(format!("action for env {id}, which is not awaiting one"))),
                }
            }

            let finished: Vec<Option<SessionEpisode>> = slots
                .par_iter_mut()
                .enumerate()
                .zip(actions.par_iter())
                .map(|((id, slot), action)| -> Result<Option<SessionEpisode>> {
                    let Some(action) = action else { return Ok(None) };
                    let id = id as u32;
                    if slot.pending.done != 0 {
                        slot.block_episode += 1;
                        slot.episode += 1;
                        if slot.block_episode >= batch.episodes_per_env {
                            slot.retired = true;
                            return Ok(None);
                        }
                        slot.start(block_seed, id)?;
                        return Ok(None);
                    }
                    let r = slot.env.step(*action)?;
                    slot.apply(id, r);
                    Ok((slot.pending.done != 0).then(|| SessionEpisode {
                        env_id: id,
                        episode: slot.episode,
                        steps: slot.pending.step,
                        reward_sum: slot.reward_sum,
                        termination: slot.env.termination(),
                    }))
                })
                .collect::<Result<_>>()?;
            summary.episodes.extend(finished.into_iter().flatten());
        }
        episode_base += batch.episodes_per_env as u32;
    }
    write_message(&mut writer, &[MSG_BYE])?;
    writer.flush().map_err(map_io)?;
    Ok(summary)
}

/// Listens on `endpoint`, accepts one connection and serves one session.
pub fn serve(endpoint: &Endpoint, batch: &BatchConfig, options: &ServeOptions) -> Result<SessionSummary> {
    match endpoint {
        Endpoint::Stdio => serve_stream(io::stdin().lock(), io::stdout().lock(), batch, |_| Ok(()), options),
        Endpoint::Tcp(addr) => {
            let listener = TcpListener::bind(addr).map_err(|e| SimError::io(addr, e))?;
            log::info!("listening on tcp:{}", listener.local_addr().map_err(SimError::Stream)?);
            let (stream, peer) = listener.accept().map_err(SimError::Stream)?;
            log::info!("session from {peer}");
            serve_tcp(stream, batch, options)
        }
        #[cfg(unix)]
        Endpoint::Unix(path) => {
            use std::os::unix::net::UnixListener;
            let listener = UnixListener::bind(path).map_err(|e| SimError::io(path, e))?;
            let (stream, _) = listener.accept().map_err(SimError::Stream)?;
            let reader = stream.try_clone().map_err(SimError::Stream)?;
            let timeouts = stream.try_clone().map_err(SimError::Stream)?;
            let out = serve_stream(reader, stream, batch, |t| timeouts.set_read_timeout(t), options);
            let _ = std::fs::remove_file(path);
            out
        }
    }
}

/// Serves one session on an accepted TCP stream.
pub fn serve_tcp(stream: TcpStream, batch: &BatchConfig, options: &ServeOptions) -> Result<SessionSummary> {
    stream.set_nodelay(true).map_err(SimError::Stream)?;
    let reader = stream.try_clone().map_err(SimError::Stream)?;
    let timeouts = stream.try_clone().map_err(SimError::Stream)?;
    serve_stream(reader, stream, batch, |t| timeouts.set_read_timeout(t), options)
}

/// Minimal client side of the protocol, for tests and tooling.
pub struct Client<R: Read, W: Write> {
    reader: BufReader<R>,
    writer: BufWriter<W>,
    layout: ObsLayout,
    pub handshake: Handshake,
}

/// Something the server sent after the handshake.
#[derive(Debug, Clone, PartialEq)]
pub enum ServerMessage {
    Obs(ObsFrame),
    Bye,
}

impl<R: Read, W: Write> Client<R, W> {
    /// Reads the server handshake, checks it against `layout`, echoes it.
    pub fn connect(reader: R, writer: W, layout: ObsLayout) -> Result<Self> {
        let mut reader = BufReader::new(reader);
        let mut writer = BufWriter::new(writer);
        let hs = Handshake::decode(&read_message(&mut reader)?)?;
        hs.validate(&Handshake::new(hs.env_count, &layout))?;
        write_message(&mut writer, &hs.encode())?;
        writer.flush().map_err(map_io)?;
        Ok(Client { reader, writer, layout, handshake: hs })
    }

    pub fn recv(&mut self) -> Result<ServerMessage> {
        let msg = read_message(&mut self.reader)?;
        if msg.first() == Some(&MSG_BYE) {
            check_len("bye", 1, msg.len())?;
            return Ok(ServerMessage::Bye);
        }
        Ok(ServerMessage::Obs(ObsFrame::decode(&msg, &self.layout)?))
    }

    pub fn send(&mut self, act: &ActFrame) -> Result<()> {
        write_message(&mut self.writer, &act.encode())?;
        self.writer.flush().map_err(map_io)
    }

    pub fn send_raw(&mut self, payload: &[u8]) -> Result<()> {
        write_message(&mut self.writer, payload)?;
        self.writer.flush().map_err(map_io)
    }

    pub fn bye(&mut self) -> Result<()> {
        self.send_raw(&[MSG_BYE])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_frame(layout: &ObsLayout) -> ObsFrame {
        ObsFrame {
            env_id: 3,
            episode: 1,
            step: 42,
            state: std::array::from_fn(|i| i as f32 * 0.5 - 1.0),
            prev_action: [0.25, -1.0, 1.0, 0.0],
            masked_depth: (0..layout.depth_len()).map(|i| (i % 17) as f32 * 0.1).collect(),
            local_occ: (0..LOCAL_CELLS).map(|i| (i % 3) as i8 - 1).collect(),
            local_svs: (0..LOCAL_CELLS).map(|i| (i % 5) as f32 * 0.05).collect(),
            reward: [0.125, 0.05, -1.0],
            done: 2,
        }
    }

    #[test]
    fn obs_frame_roundtrip() {
        let layout = ObsLayout::default();
        let f = sample_frame(&layout);
        let bytes = f.encode(&layout).unwrap();
        assert_eq!(bytes.len(), layout.obs_len());
        assert_eq!(layout.obs_len(), 67_135);
        assert_eq!(ObsFrame::decode(&bytes, &layout).unwrap(), f);
    }

    #[test]
    fn length_mismatch_names_both_lengths() {
        let layout = ObsLayout::default();
        let bytes = sample_frame(&layout).encode(&layout).unwrap();
        let err = ObsFrame::decode(&bytes[..bytes.len() - 3], &layout).unwrap_err().to_string();
        assert!(err.contains("67135") && err.contains("67132"), "{err}");
        let err = ActFrame::decode(&[MSG_ACT, 0, 0]).unwrap_err().to_string();
        assert!(err.contains("21") && err.contains('3'), "{err}");
    }

    #[test]
    fn handshake_checks_magic_and_hash() {
        let layout = ObsLayout::default();
        let hs = Handshake::new(4, &layout);
        assert_eq!(Handshake::decode(&hs.encode()).unwrap(), hs);
        let mut bad = hs;
        bad.magic = *b"XXXX";
        assert!(bad.validate(&hs).unwrap_err().to_string().contains("magic"));
        let other = Handshake::new(4, &ObsLayout { depth_rows: 48, depth_cols: 64 });
        assert!(other.validate(&hs).is_err());
        assert_ne!(other.layout_hash, hs.layout_hash);
        assert_eq!(hs.layout_hash, 0x3d7c_a7ee_15e2_4fd5);
        let bytes = hs.encode();
        assert_eq!(&bytes[..10], &[0x53, 0x52, 0x4c, 0x49, 1, 0, 4, 0, 0, 0]);
    }

    #[test]
    fn action_clamp() {
        let a = ActFrame { env_id: 0, action: [2.0, -3.0, f32::NAN, 0.5] };
        assert_eq!(a.clamped(), [1.0, -1.0, 0.0, 0.5]);
        assert_eq!(ActFrame::decode(&a.encode()).unwrap().env_id, 0);
    }

    #[test]
    fn endpoint_parsing() {
        assert_eq!("stdio".parse::<Endpoint>().unwrap(), Endpoint::Stdio);
        assert_eq!("tcp:127.0.0.1:9000".parse::<Endpoint>().unwrap(), Endpoint::Tcp("127.0.0.1:9000".into()));
        assert_eq!("unix:/tmp/x".parse::<Endpoint>().unwrap().to_string(), "unix:/tmp/x");
        assert!("udp:1".parse::<Endpoint>().is_err());
    }
}
