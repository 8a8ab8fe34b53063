//! Clients for the embedding, perceptual-distance, repair, judge and policy
//! services, with deterministic built-in fallbacks.
//!
//! Every request is one JSON envelope `{"v":1,"kind":..,"payload":{..}}`.
//! The wire format is documented in `docs/protocol.md`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tikzgym_core::imgmetrics::{fallback_embedding, mean_abs_diff, AlignedPair};
use tikzgym_core::judge::{JudgeError, JudgeScores};
use tikzgym_core::raster::RasterImage;
use tikzgym_core::repair::builtin_repair;

use crate::imageio::encode_png;

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Embed,
    Perceptual,
    Repair,
    Judge,
    Policy,
}

impl BackendKind {
    pub const ALL: [BackendKind; 5] = [
        BackendKind::Embed,
        BackendKind::Perceptual,
        BackendKind::Repair,
        BackendKind::Judge,
        BackendKind::Policy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Embed => "embed",
            BackendKind::Perceptual => "perceptual",
            BackendKind::Repair => "repair",
            BackendKind::Judge => "judge",
            BackendKind::Policy => "policy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transport {
    #[serde(rename = "http")]
    Http,
    #[serde(rename = "subprocess-stdio", alias = "subprocess")]
    Subprocess,
    #[serde(rename = "builtin")]
    Builtin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendEndpoint {
    pub transport: Transport,
    /// Base URL for HTTP, command line for subprocesses; ignored by builtin.
    pub address: String,
    pub timeout_s: f64,
    pub retries: u32,
}

impl BackendEndpoint {
    pub fn builtin() -> Self {
        Self { transport: Transport::Builtin, address: String::new(), timeout_s: 30.0, retries: 0 }
    }

    pub fn identity(&self) -> String {
        match self.transport {
            Transport::Builtin => "builtin".into(),
            Transport::Http => format!("http:{}", self.address),
            Transport::Subprocess => format!("subprocess:{}", self.address),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    pub cache_dir: String,
    pub embed: BackendEndpoint,
    pub perceptual: BackendEndpoint,
    pub repair: BackendEndpoint,
    pub judge: BackendEndpoint,
    pub policy: BackendEndpoint,
}

impl BackendsConfig {
    pub fn endpoint(&self, kind: BackendKind) -> &BackendEndpoint {
        match kind {
            BackendKind::Embed => &self.embed,
            BackendKind::Perceptual => &self.perceptual,
            BackendKind::Repair => &self.repair,
            BackendKind::Judge => &self.judge,
            BackendKind::Policy => &self.policy,
        }
    }

    fn endpoint_mut(&mut self, kind: BackendKind) -> &mut BackendEndpoint {
        match kind {
            BackendKind::Embed => &mut self.embed,
            BackendKind::Perceptual => &mut self.perceptual,
            BackendKind::Repair => &mut self.repair,
            BackendKind::Judge => &mut self.judge,
            BackendKind::Policy => &mut self.policy,
        }
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        for kind in BackendKind::ALL {
            let ep = self.endpoint(kind);
            if !(ep.timeout_s > 0.0) {
                return Err(crate::error::Error::Config(format!("backends.{}.timeout_s must be positive", kind.as_str())));
            }
            if ep.transport != Transport::Builtin && ep.address.trim().is_empty() {
                return Err(crate::error::Error::Config(format!("backends.{}.address is required for remote transports", kind.as_str())));
            }
        }
        Ok(())
    }

    /// Applies `TIKZGYM_<KIND>_ADDR` and `TIKZGYM_<KIND>_TRANSPORT`.
    pub fn apply_env_overrides(&mut self) -> crate::error::Result<()> {
        self.apply_overrides(|k| std::env::var(k).ok())
    }

    pub fn apply_overrides(&mut self, lookup: impl Fn(&str) -> Option<String>) -> crate::error::Result<()> {
        for kind in BackendKind::ALL {
            let upper = kind.as_str().to_ascii_uppercase();
            let ep = self.endpoint_mut(kind);
            if let Some(t) = lookup(&format!("TIKZGYM_{upper}_TRANSPORT")) {
                ep.transport = serde_json::from_value(Value::String(t.clone()))
                    .map_err(|_| crate::error::Error::Config(format!("TIKZGYM_{upper}_TRANSPORT: unknown transport `{t}`")))?;
            }
            if let Some(addr) = lookup(&format!("TIKZGYM_{upper}_ADDR")) {
                ep.address = addr;
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("{kind} backend timed out after {attempts} attempt(s)")]
    BackendTimeout { kind: &'static str, attempts: u32 },
    #[error("{kind} backend protocol error: {message}")]
    ProtocolError { kind: &'static str, message: String },
    #[error("{kind} backend unreachable: {message}")]
    Transport { kind: &'static str, message: String },
    #[error("{kind} backend reported an error: {message}")]
    Remote { kind: &'static str, message: String },
    #[error("embedding dimension mismatch: declared {declared}, received {got}")]
    DimensionMismatch { declared: usize, got: usize },
    #[error("judge reply violates the schema: {0}")]
    SchemaViolation(#[from] JudgeError),
    #[error("no repair rule matches and no remote repair agent is configured")]
    RepairUnavailable,
    #[error("the {0} capability has no builtin fallback; configure a remote endpoint")]
    NoBuiltin(&'static str),
}

impl BackendError {
    fn retryable(&self) -> bool {
        matches!(self, BackendError::BackendTimeout { .. } | BackendError::Transport { .. })
    }
}

pub fn image_b64(img: &RasterImage) -> String {
    B64.encode(encode_png(img))
}

trait Wire: Send + Sync {
    fn call(&self, kind: BackendKind, request: &Value, timeout: Duration) -> Result<Value, BackendError>;
}

struct HttpWire {
    base: String,
}

impl Wire for HttpWire {
    fn call(&self, kind: BackendKind, request: &Value, timeout: Duration) -> Result<Value, BackendError> {
        let k = kind.as_str();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        let url = format!("{}/{}", self.base.trim_end_matches('/'), k);
        let result = agent
            .post(&url)
            .header("content-type", "application/json")
            .send(request.to_string());
        let mut resp = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(BackendError::BackendTimeout { kind: k, attempts: 1 }),
            Err(ureq::Error::StatusCode(code)) => {
                return Err(BackendError::Remote { kind: k, message: format!("HTTP status {code}") })
            }
            Err(e) => return Err(BackendError::Transport { kind: k, message: e.to_string() }),
        };
        let body = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::BackendTimeout { kind: k, attempts: 1 },
            other => BackendError::Transport { kind: k, message: other.to_string() },
        })?;
        serde_json::from_str(&body).map_err(|e| BackendError::ProtocolError { kind: k, message: format!("malformed JSON: {e}") })
    }
}

struct Proc {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Drop for Proc {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Newline-delimited JSON over a long-lived child; one request in flight.
struct SubprocessWire {
    argv: Vec<String>,
    proc: Mutex<Option<Proc>>,
}

impl SubprocessWire {
    fn spawn(&self, k: &'static str) -> Result<Proc, BackendError> {
        let (program, args) = self
            .argv
            .split_first()
            .ok_or_else(|| BackendError::Transport { kind: k, message: "empty command".into() })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Transport { kind: k, message: format!("{program}: {e}") })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Proc { child, stdin, lines: rx })
    }
}

impl Wire for SubprocessWire {
    fn call(&self, kind: BackendKind, request: &Value, timeout: Duration) -> Result<Value, BackendError> {
        let k = kind.as_str();
        let mut guard = self.proc.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(self.spawn(k)?);
        }
        let proc = guard.as_mut().expect("spawned above");
        let mut line = request.to_string();
        line.push('\n');
        if let Err(e) = proc.stdin.write_all(line.as_bytes()).and_then(|()| proc.stdin.flush()) {
            *guard = None;
            return Err(BackendError::Transport { kind: k, message: format!("write failed: {e}") });
        }
        match proc.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => serde_json::from_str(&reply)
                .map_err(|e| BackendError::ProtocolError { kind: k, message: format!("malformed JSON: {e}") }),
            Ok(Err(e)) => {
                *guard = None;
                Err(BackendError::Transport { kind: k, message: e.to_string() })
            }
            Err(RecvTimeoutError::Timeout) => {
                // The reply may still arrive later and would desynchronize
                // the stream; restart the child instead.
                *guard = None;
                Err(BackendError::BackendTimeout { kind: k, attempts: 1 })
            }
            Err(RecvTimeoutError::Disconnected) => {
                *guard = None;
                Err(BackendError::Transport { kind: k, message: "subprocess exited".into() })
            }
        }
    }
}

struct DiskCache {
    dir: PathBuf,
}

impl DiskCache {
    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    fn get(&self, key: &str) -> Option<Value> {
        serde_json::from_slice(&fs::read(self.path(key)).ok()?).ok()
    }

    fn put(&self, key: &str, value: &Value) {
        let path = self.path(key);
        let write = || -> std::io::Result<()> {
            fs::create_dir_all(path.parent().expect("cache path has a parent"))?;
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, value.to_string())?;
            fs::rename(&tmp, &path)
        };
        if let Err(e) = write() {
            log::warn!("backend cache write failed for {}: {e}", path.display());
        }
    }
}

/// Sampling parameters forwarded to a remote policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_length: usize,
}

pub struct Backends {
    cfg: BackendsConfig,
    wires: BTreeMap<BackendKind, Box<dyn Wire>>,
    cache: Option<DiskCache>,
    embed_dim: OnceLock<usize>,
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Backends {
    pub fn new(cfg: BackendsConfig) -> crate::error::Result<Self> {
        cfg.validate()?;
        let mut wires: BTreeMap<BackendKind, Box<dyn Wire>> = BTreeMap::new();
        for kind in BackendKind::ALL {
            let ep = cfg.endpoint(kind);
            match ep.transport {
                Transport::Builtin => {}
                Transport::Http => {
                    wires.insert(kind, Box::new(HttpWire { base: ep.address.clone() }));
                }
                Transport::Subprocess => {
                    let argv = ep.address.split_whitespace().map(str::to_string).collect();
                    wires.insert(kind, Box::new(SubprocessWire { argv, proc: Mutex::new(None) }));
                }
            }
        }
        let cache = (!cfg.cache_dir.is_empty()).then(|| DiskCache { dir: PathBuf::from(&cfg.cache_dir) });
        Ok(Self { cfg, wires, cache, embed_dim: OnceLock::new() })
    }

    pub fn builtin() -> Self {
        let ep = BackendEndpoint::builtin;
        Self::new(BackendsConfig {
            cache_dir: String::new(),
            embed: ep(),
            perceptual: ep(),
            repair: ep(),
            judge: ep(),
            policy: ep(),
        })
        .expect("builtin config is valid")
    }

    pub fn is_builtin(&self, kind: BackendKind) -> bool {
        !self.wires.contains_key(&kind)
    }

    /// Identity strings recorded in manifests and reports.
    pub fn identities(&self) -> BTreeMap<String, String> {
        BackendKind::ALL
            .iter()
            .map(|k| {
                let id = match (k, self.is_builtin(*k)) {
                    (BackendKind::Embed, true) => "builtin:grid16-embedding".to_string(),
                    (BackendKind::Perceptual, true) => "builtin:mean-abs-diff".to_string(),
                    (BackendKind::Repair, true) => "builtin:rule-table".to_string(),
                    (_, true) => "none".to_string(),
                    (_, false) => self.cfg.endpoint(*k).identity(),
                };
                (k.as_str().to_string(), id)
            })
            .collect()
    }

    fn cache_key(&self, kind: BackendKind, payload: &Value) -> String {
        let mut h = Sha256::new();
        h.update(kind.as_str());
        h.update([0]);
        h.update(self.cfg.endpoint(kind).identity());
        h.update([0]);
        h.update(payload.to_string());
        hex::encode(h.finalize())
    }

    /// Sends one envelope with retries and returns the response payload.
    fn request(&self, kind: BackendKind, envelope_kind: &str, payload: Value, cacheable: bool) -> Result<Value, BackendError> {
        let k = kind.as_str();
        let key = (cacheable && self.cache.is_some()).then(|| self.cache_key(kind, &payload));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(hit) = cache.get(key) {
                return Ok(hit);
            }
        }
        let wire = self.wires.get(&kind).ok_or(BackendError::NoBuiltin(k))?;
        let ep = self.cfg.endpoint(kind);
        let timeout = Duration::from_secs_f64(ep.timeout_s);
        let envelope = json!({"v": PROTOCOL_VERSION, "kind": envelope_kind, "payload": payload});
        let attempts = ep.retries + 1;
        let mut last = None;
        for attempt in 1..=attempts {
            match wire.call(kind, &envelope, timeout).and_then(|v| open_envelope(k, envelope_kind, v)) {
                Ok(v) => {
                    if let (Some(cache), Some(key)) = (&self.cache, &key) {
                        cache.put(key, &v);
                    }
                    return Ok(v);
                }
                Err(e) if e.retryable() && attempt < attempts => {
                    log::warn!("{k} backend attempt {attempt}/{attempts} failed: {e}");
                    last = Some(e);
                }
                Err(BackendError::BackendTimeout { kind, .. }) => {
                    return Err(BackendError::BackendTimeout { kind, attempts })
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn declared_dim(&self) -> Result<usize, BackendError> {
        if let Some(d) = self.embed_dim.get() {
            return Ok(*d);
        }
        let hello = self.request(BackendKind::Embed, "hello", json!({"client": "tikzgym", "capability": "embed"}), false)?;
        let dim = hello
            .get("dim")
            .and_then(Value::as_u64)
            .ok_or_else(|| BackendError::ProtocolError { kind: "embed", message: "hello reply lacks `dim`".into() })?
            as usize;
        Ok(*self.embed_dim.get_or_init(|| dim))
    }

    pub fn embed(&self, img: &RasterImage) -> Result<Vec<f64>, BackendError> {
        if self.is_builtin(BackendKind::Embed) {
            return Ok(fallback_embedding(&img.to_gray()));
        }
        let dim = self.declared_dim()?;
        let reply = self.request(BackendKind::Embed, "embed", json!({"image": image_b64(img)}), true)?;
        let vector: Vec<f64> = field(&reply, "embed", "vector")?;
        if vector.len() != dim {
            return Err(BackendError::DimensionMismatch { declared: dim, got: vector.len() });
        }
        Ok(vector)
    }

    pub fn perceptual(&self, pair: &AlignedPair) -> Result<f64, BackendError> {
        if self.is_builtin(BackendKind::Perceptual) {
            return Ok(mean_abs_diff(pair));
        }
        let reply = self.request(
            BackendKind::Perceptual,
            "perceptual",
            json!({"a": image_b64(&pair.a), "b": image_b64(&pair.b)}),
            true,
        )?;
        let d: f64 = field(&reply, "perceptual", "distance")?;
        if !(d >= 0.0) {
            return Err(BackendError::ProtocolError { kind: "perceptual", message: format!("negative distance {d}") });
        }
        Ok(d)
    }

    pub fn repair(&self, code: &str, log_excerpt: &str) -> Result<String, BackendError> {
        if self.is_builtin(BackendKind::Repair) {
            return builtin_repair(code, log_excerpt)
                .map(|r| r.code)
                .ok_or(BackendError::RepairUnavailable);
        }
        let reply = self.request(BackendKind::Repair, "repair", json!({"code": code, "log_excerpt": log_excerpt}), true)?;
        field(&reply, "repair", "code")
    }

    pub fn judge(&self, image: Option<&RasterImage>, code: &str) -> Result<JudgeScores, BackendError> {
        let reply = self.request(
            BackendKind::Judge,
            "judge",
            json!({"image": image.map(image_b64), "code": code}),
            true,
        )?;
        let text: String = field(&reply, "judge", "reply")?;
        Ok(JudgeScores::parse_reply(&text)?)
    }

    pub fn policy(&self, image: &RasterImage, n: usize, params: SamplingParams) -> Result<Vec<String>, BackendError> {
        let reply = self.request(
            BackendKind::Policy,
            "policy",
            json!({
                "image": image_b64(image),
                "n": n,
                "temperature": params.temperature,
                "top_p": params.top_p,
                "max_length": params.max_length,
            }),
            false,
        )?;
        let codes: Vec<String> = field(&reply, "policy", "codes")?;
        if codes.len() != n {
            return Err(BackendError::ProtocolError {
                kind: "policy",
                message: format!("requested {n} codes, received {}", codes.len()),
            });
        }
        Ok(codes)
    }
}

fn open_envelope(k: &'static str, expected: &str, v: Value) -> Result<Value, BackendError> {
    let proto = |message: String| BackendError::ProtocolError { kind: k, message };
    let obj = v.as_object().ok_or_else(|| proto("response is not an object".into()))?;
    if obj.get("v").and_then(Value::as_u64) != Some(PROTOCOL_VERSION) {
        return Err(proto(format!("unsupported envelope version {:?}", obj.get("v"))));
    }
    if obj.get("kind").and_then(Value::as_str) != Some(expected) {
        return Err(proto(format!("expected kind `{expected}`, got {:?}", obj.get("kind"))));
    }
    if let Some(e) = obj.get("error") {
        let message = e.as_str().map_or_else(|| e.to_string(), str::to_string);
        return Err(BackendError::Remote { kind: k, message });
    }
    obj.get("payload").cloned().ok_or_else(|| proto("missing payload".into()))
}

fn field<T: serde::de::DeserializeOwned>(payload: &Value, k: &'static str, name: &str) -> Result<T, BackendError> {
    let v = payload
        .get(name)
        .ok_or_else(|| BackendError::ProtocolError { kind: k, message: format!("payload lacks `{name}`") })?;
    serde_json::from_value(v.clone())
        .map_err(|e| BackendError::ProtocolError { kind: k, message: format!("`{name}`: {e}") })
}
