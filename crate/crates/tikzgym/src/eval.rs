//! Render-and-compare evaluation of predicted programs against references.
//!
//! Visual metrics exist only for predictions that compile to a non-blank
//! page. `All` mode substitutes penalties (similarity 0, distance 1) for the
//! rest; `Success` mode averages over successes only. Code metrics are
//! computed for every pair and averaged over every pair in both modes.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tikzgym_core::codemetrics::{code_tokens, crystal_bleu, eed, ted_from_distance, TrivialNgramSet};
use tikzgym_core::document::wrap_standalone;
use tikzgym_core::raster::RasterImage;
use tikzgym_core::reward::CompileStatus;

use crate::backends::{BackendKind, Backends};
use crate::config::Config;
use crate::corpus::SampleRecord;
use crate::error::{Error, Result};
use crate::render::Renderer;
use crate::scoring::visual_metrics;

pub const REPORT_SCHEMA: &str = "tikzgym-eval/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    All,
    Success,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualColumns {
    /// Embedding cosine mapped onto `[0, 1]`.
    pub cosine: f64,
    /// Clamped to `[0, 1]`.
    pub ssim: f64,
    /// Clamped to at most 1 so the failure penalty is the worst value.
    pub d_perceptual: f64,
    pub s_struct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeColumns {
    pub d_eed: f64,
    pub s_ted: f64,
    pub crystal_bleu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub status: CompileStatus,
    #[serde(default)]
    pub blank: bool,
    pub visual: Option<VisualColumns>,
    pub code: CodeColumns,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalRecord {
    pub fn succeeded(&self) -> bool {
        self.visual.is_some()
    }
}

/// Column names; builtin encoders get `_fallback` suffixes so they are never
/// confused with learned ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Columns {
    pub cosine: String,
    pub d_perceptual: String,
}

impl Columns {
    pub fn for_backends(backends: &Backends) -> Self {
        let label = |name: &str, kind| {
            if backends.is_builtin(kind) {
                format!("{name}_fallback")
            } else {
                name.to_string()
            }
        };
        Self {
            cosine: label("cosine", BackendKind::Embed),
            d_perceptual: label("d_perceptual", BackendKind::Perceptual),
        }
    }
}

impl Default for Columns {
    fn default() -> Self {
        Self { cosine: "cosine".into(), d_perceptual: "d_perceptual".into() }
    }
}

pub type Aggregates = BTreeMap<String, f64>;

/// Metrics where larger is worse.
pub fn is_distance(column: &str) -> bool {
    column.starts_with("d_")
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-metric means. `None` for an empty record set, or for `Success` mode
/// when nothing compiled.
pub fn aggregate(records: &[EvalRecord], mode: Mode, columns: &Columns) -> Option<Aggregates> {
    if records.is_empty() || (mode == Mode::Success && !records.iter().any(EvalRecord::succeeded)) {
        return None;
    }
    let penalty = VisualColumns { cosine: 0.0, ssim: 0.0, d_perceptual: 1.0, s_struct: 0.0 };
    let visual: Vec<VisualColumns> = records
        .iter()
        .filter_map(|r| match (mode, r.visual) {
            (_, Some(v)) => Some(v),
            (Mode::All, None) => Some(penalty),
            (Mode::Success, None) => None,
        })
        .collect();
    let mut out = Aggregates::new();
    let mut put = |k: &str, f: &dyn Fn(&VisualColumns) -> f64| {
        out.insert(k.to_string(), mean(visual.iter().map(f)).expect("non-empty"));
    };
    put(&columns.cosine, &|v| v.cosine);
    put("ssim", &|v| v.ssim);
    put(&columns.d_perceptual, &|v| v.d_perceptual);
    put("s_struct", &|v| v.s_struct);
    let code = |f: fn(&CodeColumns) -> f64| mean(records.iter().map(|r| f(&r.code))).expect("non-empty");
    out.insert("d_eed".into(), code(|c| c.d_eed));
    out.insert("s_ted".into(), code(|c| c.s_ted));
    out.insert("crystal_bleu".into(), code(|c| c.crystal_bleu));
    Some(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeAggregates {
    #[serde(rename = "ALL")]
    pub all: Option<Aggregates>,
    #[serde(rename = "SUCCESS")]
    pub success: Option<Aggregates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub config_hash: String,
    pub renderer: String,
    pub backends: BTreeMap<String, String>,
    pub columns: Columns,
    pub records: Vec<EvalRecord>,
    pub excluded: Vec<Excluded>,
    pub successes: usize,
    pub aggregates: ModeAggregates,
}

impl EvalReport {
    pub fn failures(&self) -> usize {
        self.records.len() - self.successes
    }

    /// Fixed-width summary. The JSON form is authoritative.
    pub fn table(&self) -> String {
        let mut out = format!(
            "records {}  successes {}  excluded {}\n{:<24}{:>12}{:>12}\n",
            self.records.len(),
            self.successes,
            self.excluded.len(),
            "metric",
            "ALL",
            "SUCCESS"
        );
        let keys: BTreeSet<&String> = self.aggregates.all.iter().flat_map(|a| a.keys()).collect();
        for k in keys {
            let cell = |a: &Option<Aggregates>| {
                a.as_ref().and_then(|m| m.get(k)).map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
            };
            out.push_str(&format!(
                "{:<24}{:>12}{:>12}\n",
                k,
                cell(&self.aggregates.all),
                cell(&self.aggregates.success)
            ));
        }
        out
    }
}

/// Code metrics for one pair; the reference normalizes EED.
pub fn code_columns(pred: &str, reference: &str, cfg: &Config, trivial: &TrivialNgramSet) -> CodeColumns {
    let d_eed = eed(&code_tokens(pred), &code_tokens(reference), &cfg.code.eed);
    CodeColumns {
        d_eed,
        s_ted: ted_from_distance(d_eed, cfg.code.tau_ted),
        crystal_bleu: crystal_bleu(pred, reference, trivial),
    }
}

/// Visual columns for a rendered prediction against its reference.
pub fn visual_columns(pred: &RasterImage, reference: &RasterImage, backends: &Backends, cfg: &Config) -> Result<VisualColumns> {
    let r = cfg.reward_for(tikzgym_core::reward::Stage::One);
    let m = visual_metrics(pred, reference, backends, &cfg.metrics, r.tau_hold, r.tau_temp)?;
    Ok(VisualColumns {
        cosine: m.cosine,
        ssim: m.scores.ssim.clamp(0.0, 1.0),
        d_perceptual: m.scores.d_perceptual.min(1.0),
        s_struct: m.scores.s_struct,
    })
}

fn document(code: &str) -> std::result::Result<String, String> {
    wrap_standalone(code).map_err(|e| e.to_string())
}

struct Pair<'a> {
    pred: &'a SampleRecord,
    reference: &'a SampleRecord,
}

enum Scored {
    Record(EvalRecord),
    Excluded(Excluded),
}

/// Scores every prediction that has a reference with the same id.
/// `ref_renderer` is typically a cache over `renderer`.
pub fn evaluate(
    preds: &[SampleRecord],
    refs: &[SampleRecord],
    cfg: &Config,
    renderer: &dyn Renderer,
    ref_renderer: &dyn Renderer,
    backends: &Backends,
) -> Result<EvalReport> {
    let by_id: BTreeMap<&str, &SampleRecord> = refs.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut excluded = Vec::new();
    let mut pairs = Vec::new();
    for p in preds {
        match by_id.get(p.id.as_str()) {
            Some(r) => pairs.push(Pair { pred: p, reference: r }),
            None => {
                log::warn!("{}: no reference with this id", p.id);
                excluded.push(Excluded { id: p.id.clone(), reason: "missing-reference".into() });
            }
        }
    }
    let trivial = cfg.code.load_trivial()?;
    let timeout = Duration::from_secs_f64(cfg.sandbox.render_timeout_s);
    let dpi = cfg.sandbox.dpi;

    let score = |pair: &Pair| -> Result<Scored> {
        let id = pair.pred.id.clone();
        let ref_img = match document(&pair.reference.code) {
            Ok(doc) => ref_renderer.render(&doc, timeout, dpi)?.usable_image().cloned(),
            Err(_) => None,
        };
        let Some(ref_img) = ref_img else {
            log::warn!("{id}: reference does not render; excluded");
            return Ok(Scored::Excluded(Excluded { id, reason: "reference-render-failed".into() }));
        };
        let code = code_columns(&pair.pred.code, &pair.reference.code, cfg, &trivial);
        let (status, blank, visual, error) = match document(&pair.pred.code) {
            Err(e) => (CompileStatus::CompileError, false, None, Some(e)),
            Ok(doc) => {
                let out = renderer.render(&doc, timeout, dpi)?;
                let status = out.compile.status;
                match out.usable_image() {
                    None => (status, status.is_success(), None, None),
                    Some(img) => match visual_columns(img, &ref_img, backends, cfg) {
                        Ok(v) => (status, false, Some(v), None),
                        Err(e) if !e.is_environment() => {
                            log::warn!("{id}: {e}");
                            (status, false, None, Some(e.to_string()))
                        }
                        Err(e) => return Err(e),
                    },
                }
            }
        };
        Ok(Scored::Record(EvalRecord { id, status, blank, visual, code, error }))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs())
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let scored: Vec<Scored> = pool.install(|| pairs.par_iter().map(score).collect::<Result<_>>())?;

    let mut records = Vec::new();
    for s in scored {
        match s {
            Scored::Record(r) => records.push(r),
            Scored::Excluded(e) => excluded.push(e),
        }
    }
    let columns = Columns::for_backends(backends);
    Ok(EvalReport {
        schema: REPORT_SCHEMA.to_string(),
        config_hash: cfg.hash(),
        renderer: renderer.identity(),
        backends: backends.identities(),
        successes: records.iter().filter(|r| r.succeeded()).count(),
        aggregates: ModeAggregates {
            all: aggregate(&records, Mode::All, &columns),
            success: aggregate(&records, Mode::Success, &columns),
        },
        columns,
        records,
        excluded,
    })
}
