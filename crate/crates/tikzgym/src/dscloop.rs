//! Rollout loop with round-trip (image → code → image → code) scoring.
//!
//! No parameters are updated here. Each trace carries the per-rollout reward
//! terms and group-normalized advantages an external trainer consumes.

use std::collections::BTreeSet;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tikzgym_core::codemetrics::{code_consistency, CodeScores, TrivialNgramSet};
use tikzgym_core::hash::fingerprint_bytes;
use tikzgym_core::imgmetrics::{cosine, fallback_embedding, VisualScores};
use tikzgym_core::raster::RasterImage;
use tikzgym_core::reward::{group_advantages, stage2_total, CompileStatus, GroupStats, RewardBreakdown, Stage};

use crate::backends::{BackendError, Backends, SamplingParams};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::render::Renderer;
use crate::scoring::{content_crop, visual_metrics};

/// A code-generating policy. `key` selects an independent random stream so
/// results do not depend on scheduling order.
pub trait Policy: Send + Sync {
    fn identity(&self) -> String;

    /// Exactly `n` programs for the image.
    fn sample(&self, image: &RasterImage, n: usize, key: u64) -> Result<Vec<String>, BackendError>;

    /// Back-translation of a rendered rollout.
    fn reconstruct(&self, image: &RasterImage, key: u64) -> Result<String, BackendError> {
        let mut codes = self.sample(image, 1, key)?;
        Ok(codes.remove(0))
    }
}

/// A policy served by the configured backend.
pub struct RemotePolicy<'a> {
    backends: &'a Backends,
    params: SamplingParams,
}

impl<'a> RemotePolicy<'a> {
    pub fn new(backends: &'a Backends, params: SamplingParams) -> Self {
        Self { backends, params }
    }
}

impl Policy for RemotePolicy<'_> {
    fn identity(&self) -> String {
        self.backends
            .identities()
            .get("policy")
            .cloned()
            .unwrap_or_else(|| "policy".to_string())
    }

    fn sample(&self, image: &RasterImage, n: usize, _key: u64) -> Result<Vec<String>, BackendError> {
        self.backends.policy(image, n, self.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Template {
    Grid { rows: usize, cols: usize },
    Chain { n: usize },
    Polygon { sides: usize },
    Star { spokes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fault {
    UndefinedMacro,
    MissingSemicolon,
    UndeclaredLayer,
}

#[derive(Debug, Default)]
struct Perturbation {
    dropped: BTreeSet<usize>,
    shifts: Vec<(f64, f64)>,
    fault: Option<Fault>,
}

const DROP_PROB: f64 = 0.15;
const SHIFT_PROB: f64 = 0.3;
const MAX_SHIFT: f64 = 0.3;
const CANONICAL_PROB: f64 = 0.25;

fn bank() -> Vec<Template> {
    use Template::*;
    vec![
        Grid { rows: 2, cols: 2 },
        Grid { rows: 2, cols: 3 },
        Grid { rows: 3, cols: 3 },
        Chain { n: 3 },
        Chain { n: 4 },
        Chain { n: 5 },
        Polygon { sides: 3 },
        Polygon { sides: 4 },
        Polygon { sides: 5 },
        Polygon { sides: 6 },
        Star { spokes: 4 },
        Star { spokes: 6 },
    ]
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" { "0.00".to_string() } else { s }
}

impl Template {
    fn vertices(self) -> Vec<(f64, f64)> {
        match self {
            Template::Grid { rows, cols } => (0..rows)
                .flat_map(|r| (0..cols).map(move |c| (c as f64 * 1.5, -(r as f64) * 1.5)))
                .collect(),
            Template::Chain { n } => (0..n).map(|i| (i as f64 * 1.8, 0.0)).collect(),
            Template::Polygon { sides } | Template::Star { spokes: sides } => (0..sides)
                .map(|i| {
                    let a = std::f64::consts::FRAC_PI_2 + i as f64 * std::f64::consts::TAU / sides as f64;
                    (1.5 * a.cos(), 1.5 * a.sin())
                })
                .collect(),
        }
    }

    fn edges(self) -> Vec<(usize, usize)> {
        match self {
            Template::Grid { rows, cols } => {
                let mut out = Vec::new();
                for r in 0..rows {
                    for c in 0..cols {
                        let i = r * cols + c;
                        if c + 1 < cols {
                            out.push((i, i + 1));
                        }
                        if r + 1 < rows {
                            out.push((i, i + cols));
                        }
                    }
                }
                out
            }
            Template::Chain { n } => (1..n).map(|i| (i - 1, i)).collect(),
            Template::Polygon { sides } => (0..sides).map(|i| (i, (i + 1) % sides)).collect(),
            Template::Star { spokes } => (0..spokes).map(|i| (usize::MAX, i)).collect(),
        }
    }

    fn body_lines(self, p: &Perturbation) -> Vec<String> {
        let verts: Vec<(f64, f64)> = self
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                let (dx, dy) = p.shifts.get(i).copied().unwrap_or((0.0, 0.0));
                (x + dx, y + dy)
            })
            .collect();
        let at = |i: usize| {
            if i == usize::MAX {
                "(0.00,0.00)".to_string()
            } else {
                let (x, y) = verts[i];
                format!("({},{})", num(x), num(y))
            }
        };
        let mut lines = Vec::new();
        match self {
            Template::Grid { .. } | Template::Chain { .. } => {
                let shape = if matches!(self, Template::Grid { .. }) {
                    "circle, minimum size=6mm"
                } else {
                    "rectangle, minimum width=10mm, minimum height=6mm"
                };
                for i in 0..verts.len() {
                    lines.push(format!("\\node[draw, {shape}] (n{i}) at {} {{}};", at(i)));
                }
                let arrow = if matches!(self, Template::Chain { .. }) { "[->]" } else { "" };
                for (k, (a, b)) in self.edges().into_iter().enumerate() {
                    if !p.dropped.contains(&k) {
                        lines.push(format!("\\draw{arrow} (n{a}) -- (n{b});"));
                    }
                }
            }
            Template::Polygon { .. } | Template::Star { .. } => {
                for (k, (a, b)) in self.edges().into_iter().enumerate() {
                    if !p.dropped.contains(&k) {
                        lines.push(format!("\\draw {} -- {};", at(a), at(b)));
                    }
                }
                for i in 0..verts.len() {
                    lines.push(format!("\\fill {} circle (2pt);", at(i)));
                }
            }
        }
        match p.fault {
            Some(Fault::UndefinedMacro) => lines.insert(lines.len() / 2, "\\drawedgeset".to_string()),
            Some(Fault::MissingSemicolon) => {
                let last = lines.len() / 2;
                if let Some(l) = lines.get_mut(last) {
                    l.pop();
                }
            }
            Some(Fault::UndeclaredLayer) => {
                let first = lines.remove(0);
                lines.insert(0, "\\begin{pgfonlayer}{background}".to_string());
                lines.insert(1, first);
                lines.insert(2, "\\end{pgfonlayer}".to_string());
            }
            None => {}
        }
        lines
    }

    fn document(self, p: &Perturbation) -> String {
        let mut doc = String::from(
            "\\documentclass[border=10pt]{standalone}\n\\usepackage{tikz}\n\\begin{document}\n\\begin{tikzpicture}\n",
        );
        for line in self.body_lines(p) {
            doc.push_str("  ");
            doc.push_str(&line);
            doc.push('\n');
        }
        doc.push_str("\\end{tikzpicture}\n\\end{document}\n");
        doc
    }

    fn canonical(self) -> String {
        self.document(&Perturbation::default())
    }
}

/// A deterministic stand-in policy over a small bank of parametric
/// diagrams. Sampling looks up the template nearest to the image and emits
/// perturbed variants; back-translation returns the nearest template
/// unchanged.
pub struct ToyPolicy {
    seed: u64,
    fault_rate: f64,
    threshold: f32,
    templates: Vec<(Template, Vec<f64>)>,
}

impl ToyPolicy {
    /// Renders every template once to index the bank.
    pub fn new(seed: u64, fault_rate: f64, renderer: &dyn Renderer, cfg: &Config) -> Result<Self> {
        if !(0.0..=1.0).contains(&fault_rate) {
            return Err(Error::Config(format!("fault_rate must lie in [0, 1], got {fault_rate}")));
        }
        let threshold = cfg.metrics.background_threshold;
        let timeout = Duration::from_secs_f64(cfg.sandbox.render_timeout_s);
        let mut templates = Vec::new();
        for t in bank() {
            let out = renderer.render(&t.canonical(), timeout, cfg.sandbox.dpi)?;
            let img = out
                .usable_image()
                .ok_or_else(|| Error::RenderFailed(format!("toy template {t:?} did not render")))?;
            templates.push((t, embed(img, threshold)?));
        }
        Ok(Self { seed, fault_rate, threshold, templates })
    }

    fn nearest(&self, image: &RasterImage) -> Result<Template, BackendError> {
        let e = embed(image, self.threshold).map_err(|e| BackendError::Remote {
            kind: "policy",
            message: e.to_string(),
        })?;
        let mut best = (f64::NEG_INFINITY, self.templates[0].0);
        for (t, v) in &self.templates {
            let s = cosine(&e, v).unwrap_or(-1.0);
            if s > best.0 {
                best = (s, *t);
            }
        }
        Ok(best.1)
    }

    fn rng(&self, key: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(key);
        rng
    }
}

fn embed(img: &RasterImage, threshold: f32) -> Result<Vec<f64>> {
    Ok(fallback_embedding(&content_crop(img, threshold)?))
}

impl Policy for ToyPolicy {
    fn identity(&self) -> String {
        format!("toy:seed={}|fault_rate={}", self.seed, self.fault_rate)
    }

    fn sample(&self, image: &RasterImage, n: usize, key: u64) -> Result<Vec<String>, BackendError> {
        let template = self.nearest(image)?;
        let mut rng = self.rng(key);
        let nv = template.vertices().len();
        let ne = template.edges().len();
        let codes = (0..n)
            .map(|_| {
                let mut p = Perturbation::default();
                if !rng.random_bool(CANONICAL_PROB) {
                    p.dropped = (0..ne).filter(|_| rng.random_bool(DROP_PROB)).collect();
                    p.shifts = (0..nv)
                        .map(|_| {
                            if rng.random_bool(SHIFT_PROB) {
                                (rng.random_range(-MAX_SHIFT..=MAX_SHIFT), rng.random_range(-MAX_SHIFT..=MAX_SHIFT))
                            } else {
                                (0.0, 0.0)
                            }
                        })
                        .collect();
                }
                if rng.random_bool(self.fault_rate) {
                    p.fault = Some(match rng.random_range(0..3) {
                        0 => Fault::UndefinedMacro,
                        1 => Fault::MissingSemicolon,
                        _ => Fault::UndeclaredLayer,
                    });
                }
                template.document(&p)
            })
            .collect();
        Ok(codes)
    }

    fn reconstruct(&self, image: &RasterImage, _key: u64) -> Result<String, BackendError> {
        Ok(self.nearest(image)?.canonical())
    }
}

/// An input image for one group of rollouts.
#[derive(Debug, Clone)]
pub struct Target {
    pub id: String,
    pub image: RasterImage,
}

/// Renders each toy template once as a target set.
pub fn toy_targets(renderer: &dyn Renderer, cfg: &Config, count: usize) -> Result<Vec<Target>> {
    let timeout = Duration::from_secs_f64(cfg.sandbox.render_timeout_s);
    let bank = bank();
    (0..count)
        .map(|i| {
            let t = bank[i % bank.len()];
            let out = renderer.render(&t.canonical(), timeout, cfg.sandbox.dpi)?;
            let image = out
                .usable_image()
                .cloned()
                .ok_or_else(|| Error::RenderFailed(format!("toy template {t:?} did not render")))?;
            Ok(Target { id: format!("toy-{i:03}"), image })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub code: String,
    pub status: CompileStatus,
    /// Compiled to a page with no visible content.
    pub blank: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visual: Option<VisualScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstructions: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code_scores: Option<CodeScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub breakdown: RewardBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutTrace {
    pub image_id: String,
    pub iteration: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_error: Option<String>,
    pub rollouts: Vec<Rollout>,
    pub group: GroupStats,
}

fn stream_key(iteration: u64, image_id: &str, slot: u64) -> u64 {
    fingerprint_bytes(format!("{iteration}\u{0}{image_id}\u{0}{slot}").as_bytes())
}

struct LoopCtx<'a> {
    cfg: &'a Config,
    policy: &'a dyn Policy,
    renderer: &'a dyn Renderer,
    backends: &'a Backends,
    trivial: &'a TrivialNgramSet,
    iteration: u64,
}

fn failed(code: String, error: Option<String>, cfg: &Config) -> Result<Rollout> {
    let reward = cfg.reward_for(Stage::Two);
    let breakdown = stage2_total(CompileStatus::CompileError, None, None, reward)
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(Rollout {
        code,
        status: CompileStatus::CompileError,
        blank: false,
        visual: None,
        reconstructions: None,
        code_scores: None,
        error,
        breakdown,
    })
}

impl LoopCtx<'_> {
    fn rollout(&self, target: &Target, slot: usize, code: String) -> Result<Rollout> {
        let reward = self.cfg.reward_for(Stage::Two);
        let timeout = Duration::from_secs_f64(self.cfg.sandbox.render_timeout_s);
        let out = self.renderer.render(&code, timeout, self.cfg.sandbox.dpi)?;
        let status = out.compile.status;
        let Some(image) = out.usable_image() else {
            let blank = status.is_success();
            let breakdown = stage2_total(
                if blank { CompileStatus::CompileError } else { status },
                None,
                None,
                reward,
            )
            .map_err(|e| Error::Config(e.to_string()))?;
            return Ok(Rollout {
                code,
                status,
                blank,
                visual: None,
                reconstructions: None,
                code_scores: None,
                error: None,
                breakdown,
            });
        };
        let visual = match visual_metrics(image, &target.image, self.backends, &self.cfg.metrics, reward.tau_hold, reward.tau_temp) {
            Ok(v) => v.scores,
            Err(e @ Error::Backend(_)) | Err(e @ Error::Metric(_)) => {
                let mut r = failed(code, Some(e.to_string()), self.cfg)?;
                r.status = status;
                return Ok(r);
            }
            Err(e) => return Err(e),
        };
        let pending = stage2_total(status, Some(&visual), None, reward).map_err(|e| Error::Config(e.to_string()))?;
        if !pending.gate_open {
            return Ok(Rollout {
                code,
                status,
                blank: false,
                visual: Some(visual),
                reconstructions: None,
                code_scores: None,
                error: None,
                breakdown: pending,
            });
        }

        let n = self.cfg.dsc.reconstructions.max(1);
        let mut recons = Vec::with_capacity(n);
        let mut s_code = 0.0;
        let mut last = None;
        for j in 0..n {
            let key = stream_key(self.iteration, &target.id, ((slot as u64 + 1) << 16) | j as u64);
            let recon = match self.policy.reconstruct(image, key) {
                Ok(r) => r,
                Err(e) => {
                    // The round trip could not be closed; score it as a
                    // failed rollout rather than dropping the gate term.
                    let mut r = failed(code, Some(e.to_string()), self.cfg)?;
                    r.status = status;
                    r.visual = Some(visual);
                    return Ok(r);
                }
            };
            let scores = code_consistency(&code, &recon, reward.gamma, reward.tau_ted, &self.cfg.code.eed, self.trivial)
                .map_err(|e| Error::Config(e.to_string()))?;
            s_code += scores.s_code;
            last = Some(scores);
            recons.push(recon);
        }
        let mut code_scores = last.expect("at least one reconstruction");
        if n > 1 {
            code_scores.s_code = s_code / n as f64;
        }
        let breakdown =
            stage2_total(status, Some(&visual), Some(&code_scores), reward).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Rollout {
            code,
            status,
            blank: false,
            visual: Some(visual),
            reconstructions: Some(recons),
            code_scores: Some(code_scores),
            error: None,
            breakdown,
        })
    }

    fn trace(&self, target: &Target) -> Result<RolloutTrace> {
        let g = self.cfg.grpo.group_size;
        let key = stream_key(self.iteration, &target.id, 0);
        let (codes, policy_error) = match self.policy.sample(&target.image, g, key) {
            Ok(codes) if codes.len() == g => (Some(codes), None),
            Ok(codes) => (None, Some(format!("policy returned {} codes, expected {g}", codes.len()))),
            Err(e) => (None, Some(e.to_string())),
        };
        let rollouts = match codes {
            Some(codes) => codes
                .into_iter()
                .enumerate()
                .map(|(i, code)| self.rollout(target, i, code))
                .collect::<Result<Vec<_>>>()?,
            None => (0..g)
                .map(|_| failed(String::new(), policy_error.clone(), self.cfg))
                .collect::<Result<Vec<_>>>()?,
        };
        let totals: Vec<f64> = rollouts.iter().map(|r| r.breakdown.total).collect();
        let group = group_advantages(&totals, &self.cfg.grpo).map_err(|e| Error::Config(e.to_string()))?;
        Ok(RolloutTrace {
            image_id: target.id.clone(),
            iteration: self.iteration,
            policy_error,
            rollouts,
            group,
        })
    }
}

/// One pass over `targets`: sample a group per image, render, score with the
/// stage-two reward, back-translate gate-open rollouts and normalize
/// advantages within each group.
pub fn run_iteration(
    targets: &[Target],
    policy: &dyn Policy,
    renderer: &dyn Renderer,
    backends: &Backends,
    cfg: &Config,
    iteration: u64,
) -> Result<Vec<RolloutTrace>> {
    if cfg.grpo.group_size < 2 {
        return Err(Error::Config(format!("group_size must be at least 2, got {}", cfg.grpo.group_size)));
    }
    let trivial = cfg.code.load_trivial()?;
    let ctx = LoopCtx { cfg, policy, renderer, backends, trivial: &trivial, iteration };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs())
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| targets.par_iter().map(|t| ctx.trace(t)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub traces: usize,
    pub rollouts: usize,
    pub compile_rate: f64,
    /// Mean over compiled rollouts; absent when none compiled.
    pub mean_r_vis: Option<f64>,
    pub gate_entry_rate: f64,
    /// Mean over rollouts whose round trip was scored.
    pub mean_s_code: Option<f64>,
    pub mean_total: f64,
    pub policy_errors: usize,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn loop_report(traces: &[RolloutTrace]) -> Result<LoopReport> {
    let rollouts: Vec<&Rollout> = traces.iter().flat_map(|t| &t.rollouts).collect();
    if rollouts.is_empty() {
        return Err(Error::Config("loop report needs at least one rollout".into()));
    }
    let n = rollouts.len() as f64;
    let compiled: Vec<f64> = rollouts.iter().filter(|r| r.breakdown.compiled).map(|r| r.breakdown.r_vis).collect();
    let s_code: Vec<f64> = rollouts.iter().filter_map(|r| r.breakdown.s_code).collect();
    let gates = rollouts.iter().filter(|r| r.breakdown.gate_open).count();
    Ok(LoopReport {
        traces: traces.len(),
        rollouts: rollouts.len(),
        compile_rate: compiled.len() as f64 / n,
        mean_r_vis: mean(&compiled),
        gate_entry_rate: gates as f64 / n,
        mean_s_code: mean(&s_code),
        mean_total: rollouts.iter().map(|r| r.breakdown.total).sum::<f64>() / n,
        policy_errors: traces.iter().filter(|t| t.policy_error.is_some()).count(),
    })
}

impl LoopReport {
    pub fn table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let rows = [
            ("traces", self.traces.to_string()),
            ("rollouts", self.rollouts.to_string()),
            ("compile rate", format!("{:.4}", self.compile_rate)),
            ("mean r_vis", opt(self.mean_r_vis)),
            ("gate entry rate", format!("{:.4}", self.gate_entry_rate)),
            ("mean s_code", opt(self.mean_s_code)),
            ("mean total", format!("{:.4}", self.mean_total)),
            ("policy errors", self.policy_errors.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k:<18}{v:>12}\n")).collect()
    }
}

/// Rollouts whose gate would open at `tau_gate`, re-scored from the stored
/// visual terms.
pub fn gate_entry_count(traces: &[RolloutTrace], tau_gate: f64) -> usize {
    traces
        .iter()
        .flat_map(|t| &t.rollouts)
        .filter(|r| tikzgym_core::reward::gate_opens(r.breakdown.compiled, r.breakdown.r_vis, tau_gate))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::SketchRenderer;

    fn setup(fault_rate: f64) -> (Config, SketchRenderer, ToyPolicy) {
        let mut cfg = Config::default();
        cfg.sandbox.dpi = 60.0;
        cfg.sandbox.jobs = 2;
        let r = SketchRenderer::new(&cfg.sandbox, cfg.metrics.border_pt).unwrap();
        let p = ToyPolicy::new(7, fault_rate, &r, &cfg).unwrap();
        (cfg, r, p)
    }

    #[test]
    fn templates_render_and_self_match() {
        let (cfg, r, p) = setup(0.0);
        for t in toy_targets(&r, &cfg, 12).unwrap() {
            let recon = p.reconstruct(&t.image, 0).unwrap();
            let i: usize = t.id[4..].parse().unwrap();
            assert_eq!(recon, bank()[i].canonical());
        }
    }

    #[test]
    fn clean_policy_always_compiles() {
        let (cfg, r, p) = setup(0.0);
        let targets = toy_targets(&r, &cfg, 4).unwrap();
        let traces = run_iteration(&targets, &p, &r, &Backends::builtin(), &cfg, 0).unwrap();
        let rep = loop_report(&traces).unwrap();
        assert_eq!(rep.compile_rate, 1.0);
        assert!(rep.gate_entry_rate > 0.0);
        for t in &traces {
            assert_eq!(t.rollouts.len(), cfg.grpo.group_size);
            let m: f64 = t.group.advantages.iter().sum::<f64>() / t.group.advantages.len() as f64;
            assert!(m.abs() < 1e-9);
            for ro in &t.rollouts {
                assert_eq!(ro.reconstructions.is_some(), ro.breakdown.gate_open && ro.breakdown.compiled);
            }
        }
    }

    #[test]
    fn faulty_policy_always_fails() {
        let (cfg, r, p) = setup(1.0);
        let targets = toy_targets(&r, &cfg, 3).unwrap();
        let traces = run_iteration(&targets, &p, &r, &Backends::builtin(), &cfg, 0).unwrap();
        let alpha = cfg.reward.stage2.alpha_minus;
        assert!(traces.iter().flat_map(|t| &t.rollouts).all(|r| r.breakdown.total == alpha));
        let rep = loop_report(&traces).unwrap();
        assert_eq!((rep.compile_rate, rep.gate_entry_rate), (0.0, 0.0));
    }

    #[test]
    fn policy_errors_score_as_failures() {
        let (cfg, r, _) = setup(0.0);
        let targets = toy_targets(&r, &cfg, 1).unwrap();
        let backends = Backends::builtin();
        let remote = RemotePolicy::new(&backends, SamplingParams { temperature: 0.1, top_p: 0.95, max_length: 4096 });
        let traces = run_iteration(&targets, &remote, &r, &backends, &cfg, 0).unwrap();
        assert!(traces[0].policy_error.is_some());
        assert!(traces[0].group.advantages.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn empty_report_is_an_error() {
        assert!(loop_report(&[]).is_err());
    }
}
