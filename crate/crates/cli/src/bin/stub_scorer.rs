//! Deterministic stand-in for an external scorer, speaking the stdio
//! protocol. Scores depend only on the request coordinates, never on the
//! image file.
//!
//! Modes:
//! - `hash` (default): FNV-1a 64 over `query \0 x0 \0 y0 \0 side` (decimal),
//!   score = `(h mod 10^6) / 10^6`;
//! - `constant`: always `--value`.
//!
//! The remaining flags inject faults for protocol tests.

use std::io::{BufRead, BufWriter, Write};
use std::path::PathBuf;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::time::Duration;

use clap::{Parser, ValueEnum};
use serde_json::{json, Value};

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Hash,
    Constant,
}

#[derive(Parser)]
#[command(name = "selo-stub-scorer")]
struct Opts {
    #[arg(long, value_enum, default_value = "hash")]
    mode: Mode,
    #[arg(long, default_value_t = 0.5)]
    value: f64,
    #[arg(long, default_value = "stub")]
    name: String,
    /// Advertise concurrent request handling.
    #[arg(long)]
    concurrent: bool,
    #[arg(long, default_value_t = 1)]
    proto: u64,
    /// Print this line instead of a handshake.
    #[arg(long)]
    handshake_line: Option<String>,
    /// Answer this many requests, then exit when the next one arrives.
    #[arg(long)]
    exit_after: Option<usize>,
    /// Answer this many requests, then go silent but stay alive.
    #[arg(long)]
    hang_after: Option<usize>,
    /// Answer with an error record for this request id.
    #[arg(long)]
    fail_id: Option<u64>,
    /// Answer with an error record for every request carrying this query.
    #[arg(long)]
    fail_query: Option<String>,
    /// Hold up to this many requests and answer them in reverse order.
    #[arg(long, default_value_t = 1)]
    reverse: usize,
    /// Append one line to this file at startup (counts spawns).
    #[arg(long)]
    spawn_log: Option<PathBuf>,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn stub_hash(query: &str, x0: u64, y0: u64, side: u64) -> f64 {
    let text = format!("{query}\0{x0}\0{y0}\0{side}");
    let mut h = FNV_OFFSET;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    (h % 1_000_000) as f64 / 1e6
}

fn answer(opts: &Opts, line: &str) -> String {
    let req: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return json!({"id": null, "error": format!("malformed request: {e}")}).to_string(),
    };
    let id = req.get("id").cloned().unwrap_or(Value::Null);
    if id.as_u64().is_some() && id.as_u64() == opts.fail_id {
        return json!({"id": id, "error": "injected failure"}).to_string();
    }
    let query = req.get("query").and_then(Value::as_str);
    if query.is_some() && query == opts.fail_query.as_deref() {
        return json!({"id": id, "error": "injected failure"}).to_string();
    }
    let field = |k: &str| req.get(k).and_then(Value::as_u64);
    let (Some(query), Some(x0), Some(y0), Some(side)) = (query, field("x0"), field("y0"), field("side")) else {
        return json!({"id": id, "error": "request lacks query, x0, y0 or side"}).to_string();
    };
    let score = match opts.mode {
        Mode::Hash => stub_hash(query, x0, y0, side),
        Mode::Constant => opts.value,
    };
    json!({"id": id, "score": score}).to_string()
}

fn main() {
    let opts = Opts::parse();
    if let Some(path) = &opts.spawn_log {
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .expect("open spawn log");
        writeln!(f, "spawned").expect("write spawn log");
    }

    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let handshake = opts
        .handshake_line
        .clone()
        .unwrap_or_else(|| json!({"proto": opts.proto, "name": opts.name, "concurrent": opts.concurrent}).to_string());
    writeln!(out, "{handshake}")
        .and_then(|_| out.flush())
        .expect("write handshake");

    let (tx, rx) = mpsc::channel::<String>();
    std::thread::spawn(move || {
        for line in std::io::stdin().lock().lines() {
            let Ok(l) = line else { break };
            if tx.send(l).is_err() {
                break;
            }
        }
    });

    let mut received = 0usize;
    let mut held: Vec<String> = Vec::new();
    let flush = |held: &mut Vec<String>, out: &mut BufWriter<_>| {
        for reply in held.drain(..).rev() {
            writeln!(out, "{reply}").expect("write reply");
        }
        out.flush().expect("flush replies");
    };
    loop {
        let line = if held.is_empty() {
            rx.recv().map_err(|_| RecvTimeoutError::Disconnected)
        } else {
            rx.recv_timeout(Duration::from_millis(20))
        };
        match line {
            Ok(line) => {
                if line.trim().is_empty() {
                    continue;
                }
                received += 1;
                if opts.exit_after.is_some_and(|n| received > n) {
                    std::process::exit(3);
                }
                if opts.hang_after.is_some_and(|n| received > n) {
                    continue;
                }
                held.push(answer(&opts, &line));
                if held.len() >= opts.reverse {
                    flush(&mut held, &mut out);
                }
            }
            Err(RecvTimeoutError::Timeout) => flush(&mut held, &mut out),
            Err(RecvTimeoutError::Disconnected) => {
                flush(&mut held, &mut out);
                break;
            }
        }
    }
}
