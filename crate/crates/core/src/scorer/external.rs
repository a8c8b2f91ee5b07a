//! Client side of the stdio scorer protocol.
//!
//! Newline-delimited UTF-8 JSON:
//! - the child first prints `{"proto":1,"name":str,"concurrent":bool}`;
//! - requests are `{"id":int,"query":str,"image":str,"x0":int,"y0":int,"side":int}`,
//!   optionally with `"png_b64"` carrying the crop;
//! - responses are `{"id":int,"score":float}` or `{"id":int,"error":str}`,
//!   matched by id and possibly out of order;
//! - closing the child's stdin asks it to exit.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, RecvTimeoutError};
use serde::{Deserialize, Serialize};

use super::{default_timeout, ScoreBatch, Scorer};
use crate::error::ScorerError;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayloadMode {
    /// Send crop coordinates; the child reads the image itself.
    #[default]
    Coordinates,
    /// Also send each crop as a base64 PNG.
    PngBase64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalOptions {
    pub payload: PayloadMode,
    /// Per-message timeout, including the handshake.
    #[serde(with = "secs")]
    pub timeout: Duration,
    /// Maximum requests in flight when the child accepts concurrency.
    pub batch: usize,
}

impl Default for ExternalOptions {
    fn default() -> Self {
        Self {
            payload: PayloadMode::Coordinates,
            timeout: default_timeout(),
            batch: 64,
        }
    }
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub proto: u64,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub concurrent: bool,
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    query: &'a str,
    image: &'a str,
    x0: usize,
    y0: usize,
    side: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    png_b64: Option<&'a str>,
}

#[derive(Deserialize)]
struct Response {
    id: Option<u64>,
    score: Option<f64>,
    error: Option<String>,
}

enum Line {
    Text(String),
    Failed(std::io::Error),
}

/// A running child scorer that completed the handshake.
#[derive(Debug)]
pub struct ExternalSession {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<Line>,
    handshake: Handshake,
    options: ExternalOptions,
    next_id: u64,
    broken: bool,
}

impl std::fmt::Debug for Line {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Line::Text(t) => write!(f, "Text({t:?})"),
            Line::Failed(e) => write!(f, "Failed({e})"),
        }
    }
}

/// Starts `command` with extra environment variables and waits for its
/// handshake.
pub fn spawn_external_scorer(
    command: &[String],
    env: &BTreeMap<String, String>,
    options: ExternalOptions,
) -> Result<ExternalSession, ScorerError> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| ScorerError::Unavailable("empty scorer command".into()))?;
    let mut child = Command::new(program)
        .args(args)
        .envs(env)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|source| ScorerError::SpawnFailure {
            command: command.to_vec(),
            source,
        })?;
    let stdout = child.stdout.take().expect("stdout piped");
    let stdin = child.stdin.take();
    let (tx, rx) = crossbeam_channel::unbounded();
    thread::Builder::new()
        .name("selo-scorer-reader".into())
        .spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let msg = match line {
                    Ok(t) => Line::Text(t),
                    Err(e) => Line::Failed(e),
                };
                let failed = matches!(msg, Line::Failed(_));
                if tx.send(msg).is_err() || failed {
                    break;
                }
            }
        })
        .map_err(|e| ScorerError::Unavailable(format!("cannot start reader thread: {e}")))?;

    let mut session = ExternalSession {
        child,
        stdin,
        lines: rx,
        handshake: Handshake {
            proto: 0,
            name: String::new(),
            concurrent: false,
        },
        options,
        next_id: 0,
        broken: false,
    };
    let first = session
        .next_line()
        .map_err(|e| ScorerError::HandshakeMismatch(format!("no handshake: {e}")))?;
    let hs: Handshake = serde_json::from_str(&first)
        .map_err(|e| ScorerError::HandshakeMismatch(format!("unparseable handshake {first:?}: {e}")))?;
    if hs.proto != PROTOCOL_VERSION {
        session.broken = true;
        return Err(ScorerError::HandshakeMismatch(format!(
            "child speaks protocol {}, expected {PROTOCOL_VERSION}",
            hs.proto
        )));
    }
    log::debug!("external scorer {:?} ready (concurrent: {})", hs.name, hs.concurrent);
    session.handshake = hs;
    Ok(session)
}

impl ExternalSession {
    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    pub fn is_broken(&self) -> bool {
        self.broken
    }

    /// Requests allowed in flight: the configured batch for concurrent
    /// children, one otherwise.
    pub fn window(&self) -> usize {
        if self.handshake.concurrent {
            self.options.batch.max(1)
        } else {
            1
        }
    }

    fn next_line(&mut self) -> Result<String, ScorerError> {
        loop {
            match self.lines.recv_timeout(self.options.timeout) {
                Ok(Line::Text(t)) if t.trim().is_empty() => continue,
                Ok(Line::Text(t)) => return Ok(t),
                Ok(Line::Failed(e)) => {
                    self.broken = true;
                    return Err(ScorerError::Protocol(format!("reading scorer output: {e}")));
                }
                Err(RecvTimeoutError::Timeout) => {
                    self.broken = true;
                    let _ = self.child.kill();
                    return Err(ScorerError::Timeout(self.options.timeout));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    self.broken = true;
                    return Err(ScorerError::Protocol("scorer closed its output".into()));
                }
            }
        }
    }

    fn send(&mut self, line: &str) -> Result<(), ScorerError> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| ScorerError::Protocol("scorer stdin already closed".into()))?;
        let res = stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush());
        res.map_err(|e| {
            self.broken = true;
            ScorerError::Protocol(format!("writing to scorer: {e}"))
        })
    }

    /// Scores a batch, keeping at most [`window`](Self::window) requests
    /// outstanding and matching responses by id.
    ///
    /// Any failure leaves the session broken: responses to requests still in
    /// flight could otherwise leak into the next batch.
    pub fn score(&mut self, batch: &ScoreBatch<'_>) -> Result<Vec<f64>, ScorerError> {
        if self.broken {
            return Err(ScorerError::Unavailable("session is broken".into()));
        }
        let res = self.score_inner(batch);
        if res.is_err() {
            self.broken = true;
        }
        res
    }

    fn score_inner(&mut self, batch: &ScoreBatch<'_>) -> Result<Vec<f64>, ScorerError> {
        let image = batch.image.path.to_string_lossy();
        let window = self.window();
        let mut out: Vec<Option<f64>> = vec![None; batch.tiles.len()];
        let mut pending: HashMap<u64, usize> = HashMap::new();
        for (index, tile) in batch.tiles.iter().enumerate() {
            while pending.len() >= window {
                self.receive_one(&mut pending, &mut out)?;
            }
            let id = self.next_id;
            self.next_id += 1;
            let req = Request {
                id,
                query: batch.query,
                image: &image,
                x0: tile.x0,
                y0: tile.y0,
                side: tile.side,
                png_b64: batch.payloads.map(|p| p[index].as_str()),
            };
            let line = serde_json::to_string(&req).expect("request serializes");
            pending.insert(id, index);
            self.send(&line)?;
        }
        while !pending.is_empty() {
            self.receive_one(&mut pending, &mut out)?;
        }
        Ok(out.into_iter().map(|s| s.expect("all answered")).collect())
    }

    fn receive_one(&mut self, pending: &mut HashMap<u64, usize>, out: &mut [Option<f64>]) -> Result<(), ScorerError> {
        let line = self.next_line()?;
        let resp: Response = serde_json::from_str(&line).map_err(|e| {
            self.broken = true;
            ScorerError::Protocol(format!("bad response {line:?}: {e}"))
        })?;
        let id = resp
            .id
            .ok_or_else(|| ScorerError::Protocol(format!("response without id: {line:?}")))?;
        let index = pending
            .remove(&id)
            .ok_or_else(|| ScorerError::Protocol(format!("response for unknown id {id}")))?;
        match (resp.score, resp.error) {
            (_, Some(message)) => Err(ScorerError::Remote { id, message }),
            (Some(score), None) if score.is_finite() => {
                out[index] = Some(score);
                Ok(())
            }
            (Some(score), None) => Err(ScorerError::NonFinite { index, score }),
            (None, None) => Err(ScorerError::Protocol(format!(
                "response {id} has neither score nor error"
            ))),
        }
    }

    /// Closes stdin and waits briefly for the child; kills it if it lingers.
    pub fn shutdown(mut self) -> Option<std::process::ExitStatus> {
        self.close()
    }

    fn close(&mut self) -> Option<std::process::ExitStatus> {
        drop(self.stdin.take());
        let deadline = Instant::now() + Duration::from_secs(2);
        loop {
            match self.child.try_wait() {
                Ok(Some(status)) => return Some(status),
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                _ => {
                    let _ = self.child.kill();
                    return self.child.wait().ok();
                }
            }
        }
    }
}

impl Drop for ExternalSession {
    fn drop(&mut self) {
        if self.stdin.is_some() {
            self.close();
        }
    }
}

/// A pooled session wrapped as a [`Scorer`]; healthy sessions return to the
/// pool on drop.
pub struct ExternalScorer {
    session: Option<ExternalSession>,
    pool: Arc<Mutex<Vec<ExternalSession>>>,
}

impl ExternalScorer {
    pub(crate) fn new(session: ExternalSession, pool: Arc<Mutex<Vec<ExternalSession>>>) -> Self {
        Self {
            session: Some(session),
            pool,
        }
    }

    /// Wraps a session without pooling.
    pub fn standalone(session: ExternalSession) -> Self {
        Self::new(session, Arc::default())
    }
}

impl Scorer for ExternalScorer {
    fn name(&self) -> &str {
        self.session.as_ref().map_or("external", |s| s.handshake.name.as_str())
    }

    fn wants_payloads(&self) -> bool {
        self.session
            .as_ref()
            .is_some_and(|s| s.options.payload == PayloadMode::PngBase64)
    }

    fn score_tiles(&mut self, batch: &ScoreBatch<'_>) -> Result<Vec<f64>, ScorerError> {
        self.session
            .as_mut()
            .ok_or_else(|| ScorerError::Unavailable("no session".into()))?
            .score(batch)
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if let Some(s) = self.session.take() {
            if !s.broken {
                if let Ok(mut pool) = self.pool.lock() {
                    pool.push(s);
                }
            }
        }
    }
}
