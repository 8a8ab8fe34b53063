//! The curation pipeline: wrap, validate, remediate, sanitize, dedup,
//! judge, gate, and benchmark stratification.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tikzgym_core::dedup::dedup;
use tikzgym_core::document::{wrap_standalone, DocumentError};
use tikzgym_core::judge::{quality_gate, stratify};
use tikzgym_core::reward::CompileStatus;
use tikzgym_core::sanitize::{heuristic_sanitize, SanitizeVerdict};
use tikzgym_core::texlex::lex;

use crate::backends::{BackendError, Backends};
use crate::config::Config;
use crate::corpus::{write_jsonl, SampleRecord, Status, SCHEMA};
use crate::error::{Error, Result};
use crate::render::Renderer;
use crate::sandbox::CompileOutcome;

/// Resolution used only to measure page aspect ratios during validation.
const PROBE_DPI: f64 = 72.0;

pub mod reasons {
    pub const NO_DRAWABLE_CONTENT: &str = "no-drawable-content";
    pub const REPAIR_UNAVAILABLE: &str = "repair-unavailable";
    pub const REPAIR_BACKEND_ERROR: &str = "repair-backend-error";
    pub const REMEDIATION_EXHAUSTED: &str = "remediation-exhausted";
    pub const NEAR_DUPLICATE: &str = "near-duplicate";
    pub const JUDGE_UNAVAILABLE: &str = "judge-unavailable";
    pub const JUDGE_SCHEMA_VIOLATION: &str = "judge-schema-violation";
    pub const QUALITY_GATE: &str = "quality-gate";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditStep {
    pub round: usize,
    pub code: String,
    pub status: CompileStatus,
    pub log_excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditTrail {
    pub id: String,
    pub steps: Vec<AuditStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RemediationResult {
    /// The input already compiled; nothing was done.
    AlreadyCompiles,
    Repaired { code: String, rounds: usize },
    Rejected { reason: &'static str, rounds: usize },
}

/// Iterates repair, re-wrap and compile until success or `max_iters`.
/// Every intermediate version is appended to `audit`. Errors are
/// environment failures only.
pub fn remediation_loop(
    code: &str,
    outcome: &CompileOutcome,
    backends: &Backends,
    renderer: &dyn Renderer,
    max_iters: usize,
    timeout: Duration,
    audit: &mut Vec<AuditStep>,
) -> Result<RemediationResult> {
    if outcome.status.is_success() {
        log::warn!("remediation requested for a record that already compiles");
        return Ok(RemediationResult::AlreadyCompiles);
    }
    let mut current = code.to_string();
    let mut log = outcome.log_excerpt.clone();
    for round in 1..=max_iters {
        let candidate = match backends.repair(&current, &log) {
            Ok(c) => c,
            Err(BackendError::RepairUnavailable) => {
                return Ok(RemediationResult::Rejected { reason: reasons::REPAIR_UNAVAILABLE, rounds: round - 1 })
            }
            Err(e) => {
                log::warn!("repair backend failed: {e}");
                return Ok(RemediationResult::Rejected { reason: reasons::REPAIR_BACKEND_ERROR, rounds: round - 1 });
            }
        };
        let candidate = match wrap_standalone(&candidate) {
            Ok(doc) => doc,
            Err(DocumentError::NoDrawableContent) => {
                return Ok(RemediationResult::Rejected { reason: reasons::NO_DRAWABLE_CONTENT, rounds: round })
            }
        };
        let out = renderer.compile(&candidate, timeout)?;
        audit.push(AuditStep { round, code: candidate.clone(), status: out.status, log_excerpt: out.log_excerpt.clone() });
        if out.status.is_success() {
            return Ok(RemediationResult::Repaired { code: candidate, rounds: round });
        }
        if candidate == current {
            break;
        }
        current = candidate;
        log = out.log_excerpt;
    }
    Ok(RemediationResult::Rejected { reason: reasons::REMEDIATION_EXHAUSTED, rounds: max_iters })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    pub input: usize,
    pub passed: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairNote {
    pub id: String,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub config_hash: String,
    pub renderer: String,
    pub backends: BTreeMap<String, String>,
    pub input_records: usize,
    pub wrapped_fragments: Vec<String>,
    pub stages: Vec<StageCount>,
    pub repaired: Vec<RepairNote>,
    pub rejections: Vec<Rejection>,
    pub reject_reasons: BTreeMap<String, usize>,
    pub accepted: Vec<String>,
    pub tiers: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub records: Vec<SampleRecord>,
    pub manifest: Manifest,
    pub audit: Vec<AuditTrail>,
}

impl PipelineOutput {
    pub fn accepted(&self) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(|r| r.status == Status::Accepted)
    }

    /// Writes `manifest.json`, `records.jsonl`, `curated.jsonl` and
    /// `audit.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;
        write_jsonl(&dir.join("records.jsonl"), &self.records)?;
        let accepted: Vec<&SampleRecord> = self.accepted().collect();
        write_jsonl(&dir.join("curated.jsonl"), &accepted)?;
        write_jsonl(&dir.join("audit.jsonl"), &self.audit)
    }
}

struct Work {
    rec: SampleRecord,
    image: Option<tikzgym_core::raster::RasterImage>,
    audit: Vec<AuditStep>,
    repaired_rounds: Option<usize>,
    wrapped: bool,
    stage_rejected: Option<&'static str>,
}

/// Wrap, validate and remediate one record.
fn front_stages(mut rec: SampleRecord, cfg: &Config, renderer: &dyn Renderer, backends: &Backends) -> Result<Work> {
    let mut work = Work { rec: rec.clone(), image: None, audit: Vec::new(), repaired_rounds: None, wrapped: false, stage_rejected: None };
    let doc = match wrap_standalone(&rec.code) {
        Ok(doc) => doc,
        Err(DocumentError::NoDrawableContent) => {
            rec.reject(reasons::NO_DRAWABLE_CONTENT);
            work.rec = rec;
            work.stage_rejected = Some("wrap");
            return Ok(work);
        }
    };
    work.wrapped = doc != rec.code;
    rec.code = doc;
    rec.status = Status::Wrapped;

    let timeout = Duration::from_secs_f64(cfg.sandbox.validate_timeout_s);
    let first = renderer.render(&rec.code, timeout, PROBE_DPI)?;
    work.audit.push(AuditStep { round: 0, code: rec.code.clone(), status: first.compile.status, log_excerpt: first.compile.log_excerpt.clone() });
    if first.compile.status.is_success() {
        rec.status = Status::Compiled;
        work.image = first.image;
    } else {
        let result = remediation_loop(
            &rec.code,
            &first.compile,
            backends,
            renderer,
            cfg.dataengine.remediation_max_iters,
            timeout,
            &mut work.audit,
        )?;
        match result {
            RemediationResult::Repaired { code, rounds } => {
                rec.code = code;
                rec.status = Status::Repaired;
                work.repaired_rounds = Some(rounds);
                work.image = renderer.render(&rec.code, timeout, PROBE_DPI)?.image;
            }
            RemediationResult::Rejected { reason, .. } => {
                rec.reject(reason);
                work.stage_rejected = Some("remediate");
            }
            RemediationResult::AlreadyCompiles => unreachable!("first compile failed"),
        }
    }
    if rec.status != Status::Rejected && rec.aspect_ratio.is_none() {
        rec.aspect_ratio = work.image.as_ref().map(|img| img.width() as f64 / img.height() as f64);
    }
    work.rec = rec;
    Ok(work)
}

fn count(stage: &str, input: usize, rejected: usize) -> StageCount {
    StageCount { stage: stage.to_string(), input, passed: input - rejected, rejected }
}

/// Runs every stage over `input`. Only environment failures are errors.
pub fn run_pipeline(input: Vec<SampleRecord>, cfg: &Config, renderer: &dyn Renderer, backends: &Backends) -> Result<PipelineOutput> {
    let n = input.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs())
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let works: Vec<Work> = pool.install(|| {
        input
            .into_par_iter()
            .map(|rec| front_stages(rec, cfg, renderer, backends))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut stages = Vec::new();
    let mut rejections = Vec::new();
    let rejected_at = |works: &[Work], stage: &str| works.iter().filter(|w| w.stage_rejected == Some(stage)).count();
    let wrap_rej = rejected_at(&works, "wrap");
    stages.push(count("wrap", n, wrap_rej));
    let validated = n - wrap_rej;
    let compiled_first = works.iter().filter(|w| w.rec.status == Status::Compiled).count();
    stages.push(count("validate", validated, validated - compiled_first));
    let remediate_in = validated - compiled_first;
    stages.push(count("remediate", remediate_in, rejected_at(&works, "remediate")));

    let mut works = works;
    for w in &works {
        if let (Some(stage), Some(reason)) = (w.stage_rejected, &w.rec.reject_reason) {
            rejections.push(Rejection { id: w.rec.id.clone(), stage: stage.into(), reason: reason.clone() });
        }
    }

    // Sanitize.
    let limits = cfg.dataengine.sanitize_limits();
    let mut sanitize_in = 0;
    let mut sanitize_rej = 0;
    for w in works.iter_mut().filter(|w| w.rec.status != Status::Rejected) {
        sanitize_in += 1;
        w.rec.token_count = lex(&w.rec.code).len();
        match heuristic_sanitize(&w.rec.code, w.rec.token_count, w.rec.aspect_ratio, &limits) {
            SanitizeVerdict::Keep => w.rec.status = Status::Sanitized,
            SanitizeVerdict::Drop { reason, .. } => {
                sanitize_rej += 1;
                w.rec.reject(reason.as_str());
                rejections.push(Rejection { id: w.rec.id.clone(), stage: "sanitize".into(), reason: reason.as_str().into() });
            }
        }
    }
    stages.push(count("sanitize", sanitize_in, sanitize_rej));

    // Dedup, sequential in input order.
    let live: Vec<usize> = (0..works.len()).filter(|i| works[*i].rec.status == Status::Sanitized).collect();
    let streams: Vec<_> = live.iter().map(|i| lex(&works[*i].rec.code)).collect();
    let outcome = dedup(
        live.iter().zip(&streams).map(|(i, s)| (works[*i].rec.id.as_str(), s)),
        cfg.dataengine.dedup(),
    );
    let removed: BTreeMap<&str, usize> = outcome.removed.iter().map(|r| (r.id.as_str(), r.shared)).collect();
    for i in &live {
        let w = &mut works[*i];
        if let Some(shared) = removed.get(w.rec.id.as_str()) {
            log::info!("{} removed as near-duplicate ({shared} shared shingles)", w.rec.id);
            w.rec.reject(reasons::NEAR_DUPLICATE);
            rejections.push(Rejection { id: w.rec.id.clone(), stage: "dedup".into(), reason: reasons::NEAR_DUPLICATE.into() });
        }
    }
    stages.push(count("dedup", live.len(), outcome.removed.len()));

    // Judge: stored scores win; otherwise ask the configured backend.
    let mut judge_in = 0;
    let mut judge_rej = 0;
    for w in works.iter_mut().filter(|w| w.rec.status == Status::Sanitized) {
        judge_in += 1;
        let verdict = match w.rec.judge {
            Some(scores) => scores.validate().map(|()| scores).map_err(BackendError::from),
            None => backends.judge(w.image.as_ref(), &w.rec.code),
        };
        match verdict {
            Ok(scores) => {
                w.rec.judge = Some(scores);
                w.rec.status = Status::Judged;
            }
            Err(e) => {
                let reason = match e {
                    BackendError::SchemaViolation(_) => reasons::JUDGE_SCHEMA_VIOLATION,
                    _ => reasons::JUDGE_UNAVAILABLE,
                };
                log::warn!("{}: judge failed: {e}", w.rec.id);
                judge_rej += 1;
                w.rec.reject(reason);
                rejections.push(Rejection { id: w.rec.id.clone(), stage: "judge".into(), reason: reason.into() });
            }
        }
    }
    stages.push(count("judge", judge_in, judge_rej));

    // Gate and stratify.
    let mut gate_in = 0;
    let mut gate_rej = 0;
    let mut accepted = Vec::new();
    let mut tiers: BTreeMap<String, usize> = ["easy", "medium", "hard", "ineligible"].iter().map(|t| (t.to_string(), 0)).collect();
    for w in works.iter_mut().filter(|w| w.rec.status == Status::Judged) {
        gate_in += 1;
        let scores = w.rec.judge.expect("judged records carry scores");
        if quality_gate(&scores, &cfg.dataengine.gate) {
            w.rec.status = Status::Accepted;
            accepted.push(w.rec.id.clone());
            let tier = stratify(&scores, &cfg.dataengine.prescreen).ok();
            w.rec.tier = tier;
            let key = match tier {
                Some(t) => serde_json::to_value(t)?.as_str().unwrap_or_default().to_string(),
                None => "ineligible".into(),
            };
            *tiers.entry(key).or_default() += 1;
        } else {
            gate_rej += 1;
            w.rec.reject(reasons::QUALITY_GATE);
            rejections.push(Rejection { id: w.rec.id.clone(), stage: "gate".into(), reason: reasons::QUALITY_GATE.into() });
        }
    }
    stages.push(count("gate", gate_in, gate_rej));

    let order: BTreeMap<&str, usize> = works.iter().enumerate().map(|(i, w)| (w.rec.id.as_str(), i)).collect();
    rejections.sort_by_key(|r| order[r.id.as_str()]);
    let mut reject_reasons = BTreeMap::new();
    for r in &rejections {
        *reject_reasons.entry(r.reason.clone()).or_insert(0) += 1;
    }
    let manifest = Manifest {
        schema: SCHEMA.to_string(),
        config_hash: cfg.hash(),
        renderer: renderer.identity(),
        backends: backends.identities(),
        input_records: n,
        wrapped_fragments: works.iter().filter(|w| w.wrapped).map(|w| w.rec.id.clone()).collect(),
        stages,
        repaired: works
            .iter()
            .filter_map(|w| w.repaired_rounds.map(|rounds| RepairNote { id: w.rec.id.clone(), rounds }))
            .collect(),
        rejections,
        reject_reasons,
        accepted,
        tiers,
    };
    let audit = works
        .iter()
        .filter(|w| w.audit.len() > 1)
        .map(|w| AuditTrail { id: w.rec.id.clone(), steps: w.audit.clone() })
        .collect();
    Ok(PipelineOutput { records: works.into_iter().map(|w| w.rec).collect(), manifest, audit })
}
