//! Client side of the stdio bridge protocol.
//!
//! One JSON document per line over the child's stdin/stdout:
//!
//! ```text
//! -> {"type":"hello","version":1}
//! <- {"type":"ready","name":"..."}
//! -> {"type":"predict","req_id":0,"text":"...","width":W,"height":H,"image_b64":"..."}
//! <- {"type":"score","req_id":0,"score":0.42}
//! -> {"type":"shutdown"}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine as _;
use serde_json::{json, Value};

use crate::data::GrayImage;

pub const PROTOCOL_VERSION: u64 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExternalError {
    #[error("failed to launch bridge: {0}")]
    Spawn(String),
    #[error("handshake failed: {0}")]
    HandshakeFailed(String),
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("bridge reported an error: {0}")]
    BridgeError(String),
    #[error("bridge i/o failure: {0}")]
    Io(String),
    #[error("connection unusable after an earlier failure")]
    Broken,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalConfig {
    /// Shell command that starts the bridge (run through `sh -c`).
    pub command: String,
    pub timeout: Duration,
    /// Number of independent bridge processes.
    pub connections: usize,
}

impl ExternalConfig {
    pub fn new(command: impl Into<String>) -> Self {
        Self { command: command.into(), timeout: DEFAULT_TIMEOUT, connections: 1 }
    }
}

pub fn encode_predict(req_id: u64, text: &str, image: &GrayImage) -> String {
    json!({
        "type": "predict",
        "req_id": req_id,
        "text": text,
        "width": image.width(),
        "height": image.height(),
        "image_b64": base64::engine::general_purpose::STANDARD.encode(image.pixels()),
    })
    .to_string()
}

/// Validates a `score` response against the request it answers.
pub fn decode_score(line: &str, req_id: u64) -> Result<f64, ExternalError> {
    let malformed = |m: String| ExternalError::MalformedResponse(m);
    let v: Value = serde_json::from_str(line.trim()).map_err(|e| malformed(format!("not JSON ({e}): {:?}", line.trim())))?;
    match v.get("type").and_then(Value::as_str) {
        Some("score") => {}
        Some("error") => {
            let msg = v.get("message").and_then(Value::as_str).unwrap_or("<no message>");
            return Err(ExternalError::BridgeError(msg.to_string()));
        }
        Some(other) => return Err(malformed(format!("unexpected type {other:?}"))),
        None => return Err(malformed("missing \"type\"".into())),
    }
    let got = v.get("req_id").ok_or_else(|| malformed("missing req_id".into()))?;
    if got.as_u64() != Some(req_id) {
        return Err(malformed(format!("req_id {got} does not echo request {req_id}")));
    }
    let score = v
        .get("score")
        .and_then(Value::as_f64)
        .ok_or_else(|| malformed("missing numeric score".into()))?;
    if !(0.0..=1.0).contains(&score) {
        return Err(ExternalError::ScoreOutOfRange(score));
    }
    Ok(score)
}

/// A single bridge process.
pub struct BridgeConnection {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    next_req: u64,
    broken: bool,
    name: String,
}

impl BridgeConnection {
    /// Launches the bridge and completes the handshake.
    pub fn open(command: &str, timeout: Duration) -> Result<Self, ExternalError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ExternalError::Spawn(e.to_string()))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut buf = String::new();
                match reader.read_line(&mut buf) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(buf)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        let mut conn = Self { child, stdin, lines: rx, timeout, next_req: 0, broken: false, name: String::new() };
        conn.handshake()?;
        Ok(conn)
    }

    fn handshake(&mut self) -> Result<(), ExternalError> {
        let hello = json!({"type": "hello", "version": PROTOCOL_VERSION}).to_string();
        self.send(&hello).map_err(|e| ExternalError::HandshakeFailed(e.to_string()))?;
        let line = self.recv().map_err(|e| ExternalError::HandshakeFailed(e.to_string()))?;
        let v: Value = serde_json::from_str(line.trim())
            .map_err(|_| ExternalError::HandshakeFailed(format!("not JSON: {:?}", line.trim())))?;
        if v.get("type").and_then(Value::as_str) != Some("ready") {
            return Err(ExternalError::HandshakeFailed(format!("expected ready, got {}", line.trim())));
        }
        self.name = v
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| ExternalError::HandshakeFailed("ready message lacks a name".into()))?
            .to_string();
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn send(&mut self, line: &str) -> Result<(), ExternalError> {
        let r = self.stdin.write_all(line.as_bytes()).and_then(|_| self.stdin.write_all(b"\n")).and_then(|_| self.stdin.flush());
        r.map_err(|e| {
            self.broken = true;
            ExternalError::Io(e.to_string())
        })
    }

    fn recv(&mut self) -> Result<String, ExternalError> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => {
                self.broken = true;
                Err(ExternalError::Io(e.to_string()))
            }
            Err(RecvTimeoutError::Timeout) => {
                self.broken = true;
                Err(ExternalError::Timeout(self.timeout))
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.broken = true;
                Err(ExternalError::Io("bridge closed its output".into()))
            }
        }
    }

    /// Sends one predict request and waits for its score.
    pub fn predict(&mut self, text: &str, image: &GrayImage) -> Result<f64, ExternalError> {
        if self.broken {
            return Err(ExternalError::Broken);
        }
        let req_id = self.next_req;
        self.next_req += 1;
        self.send(&encode_predict(req_id, text, image))?;
        let line = self.recv()?;
        let r = decode_score(&line, req_id);
        if matches!(r, Err(ExternalError::MalformedResponse(_))) {
            // request/response pairing can no longer be trusted
            self.broken = true;
        }
        r
    }

    /// Sends a raw line and returns the next reply line. Used by conformance checks.
    pub fn exchange_raw(&mut self, line: &str) -> Result<String, ExternalError> {
        self.send(line)?;
        self.recv()
    }

    pub fn shutdown(mut self) -> Result<(), ExternalError> {
        self.close();
        Ok(())
    }

    fn close(&mut self) {
        let _ = self.send(r#"{"type":"shutdown"}"#);
        for _ in 0..50 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for BridgeConnection {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            self.close();
        }
    }
}

/// A pool of bridge processes behind one predictor.
pub struct ExternalPredictor {
    config: ExternalConfig,
    connections: Vec<Mutex<BridgeConnection>>,
    cursor: AtomicUsize,
}

impl std::fmt::Debug for ExternalPredictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalPredictor")
            .field("command", &self.config.command)
            .field("connections", &self.connections.len())
            .finish()
    }
}

impl ExternalPredictor {
    pub fn connect(config: ExternalConfig) -> Result<Self, ExternalError> {
        let n = config.connections.max(1);
        let connections = (0..n)
            .map(|_| BridgeConnection::open(&config.command, config.timeout).map(Mutex::new))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { config, connections, cursor: AtomicUsize::new(0) })
    }

    pub fn command(&self) -> &str {
        &self.config.command
    }

    pub fn predict(&self, text: &str, image: &GrayImage) -> Result<f64, ExternalError> {
        let n = self.connections.len();
        let start = self.cursor.fetch_add(1, Ordering::Relaxed);
        for k in 0..n {
            if let Ok(mut conn) = self.connections[(start + k) % n].try_lock() {
                return conn.predict(text, image);
            }
        }
        let mut conn = self.connections[start % n].lock().unwrap_or_else(|p| p.into_inner());
        conn.predict(text, image)
    }
}
