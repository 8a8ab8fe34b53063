//! Reward composition and the scalar pieces of the GRPO objective.
//!
//! Stage one scores a rollout by execution plus visual fidelity. Stage two
//! adds the round-trip code-consistency term, but only behind the fidelity
//! gate `r_vis > τ_gate`. Nothing here updates parameters; trainers consume
//! the advantages, surrogate and KL terms.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::codemetrics::CodeScores;
use crate::imgmetrics::VisualScores;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompileStatus {
    Success,
    CompileError,
    Timeout,
    ToolchainMissing,
}

impl CompileStatus {
    pub fn is_success(self) -> bool {
        self == CompileStatus::Success
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    One,
    Two,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("LaTeX toolchain missing; refusing to score the rollout as a failure")]
    Environment,
    #[error("compilation succeeded but no visual scores were supplied")]
    MissingScores,
    #[error("group has {0} rewards; at least 2 are required")]
    GroupTooSmall(usize),
    #[error("group has {got} rewards but the configured group size is {expected}")]
    GroupSizeMismatch { expected: usize, got: usize },
    #[error("log-prob sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("curriculum band is empty: tau_min {0} > tau_max {1}")]
    InvalidBand(f64, f64),
    #[error("invalid reward configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub stage: Stage,
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub lambda_vis: f64,
    pub lambda_sem: f64,
    pub lambda_str: f64,
    pub tau_hold: f64,
    pub tau_temp: f64,
    pub tau_gate: f64,
    pub lambda_code: f64,
    pub gamma: f64,
    pub tau_ted: f64,
}

impl RewardConfig {
    /// Visual-fidelity stage. `lambda_vis` has no published value and
    /// defaults to 1.
    pub const fn stage_one() -> Self {
        Self {
            stage: Stage::One,
            alpha_plus: 0.1,
            alpha_minus: -0.6,
            lambda_vis: 1.0,
            lambda_sem: 0.6,
            lambda_str: 0.4,
            tau_hold: 0.80,
            tau_temp: 0.5,
            tau_gate: 0.6,
            lambda_code: 0.15,
            gamma: 0.4,
            tau_ted: 0.4,
        }
    }

    /// Dual self-consistency stage.
    pub const fn stage_two() -> Self {
        Self {
            stage: Stage::Two,
            alpha_plus: 0.05,
            alpha_minus: -0.5,
            lambda_vis: 0.80,
            ..Self::stage_one()
        }
    }

    /// Hard errors for broken invariants; returns `true` when the visual
    /// mixing weights do not sum to one (a warning, not an error).
    pub fn validate(&self) -> Result<bool, RewardError> {
        if !(self.alpha_minus < 0.0 && 0.0 < self.alpha_plus) {
            return Err(RewardError::InvalidConfig("alpha_minus < 0 < alpha_plus"));
        }
        if !(0.0..=1.0).contains(&self.tau_gate) {
            return Err(RewardError::InvalidConfig("tau_gate must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.tau_hold) {
            return Err(RewardError::InvalidConfig("tau_hold must lie in [0, 1)"));
        }
        if !(self.tau_temp > 0.0 && self.tau_ted > 0.0) {
            return Err(RewardError::InvalidConfig("temperatures must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(RewardError::InvalidConfig("gamma must lie in [0, 1]"));
        }
        Ok((self.lambda_sem + self.lambda_str - 1.0).abs() > 1e-12)
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self::stage_one()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_epsilon: f64,
    pub kl_beta: f64,
    pub std_floor: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 5,
            clip_epsilon: 0.2,
            kl_beta: 0.01,
            std_floor: 1e-6,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if self.group_size < 2 {
            return Err(RewardError::GroupTooSmall(self.group_size));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(RewardError::InvalidConfig("clip epsilon must lie in (0, 1)"));
        }
        if !(self.kl_beta >= 0.0) || !(self.std_floor > 0.0) {
            return Err(RewardError::InvalidConfig("kl beta >= 0 and std floor > 0"));
        }
        Ok(())
    }
}

/// Per-rollout decomposition of the reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub compiled: bool,
    pub r_exec: f64,
    pub s_sem: f64,
    pub s_struct: f64,
    pub r_vis: f64,
    pub gate_open: bool,
    pub s_code: Option<f64>,
    /// Gate open but the reconstruction has not been scored yet.
    pub pending: bool,
    pub total: f64,
}

impl RewardBreakdown {
    /// Rebuilds the total from its parts with the same operation order the
    /// constructors use.
    pub fn recompute_total(&self, cfg: &RewardConfig) -> f64 {
        let mut total = self.r_exec;
        if self.compiled {
            total += cfg.lambda_vis * self.r_vis;
        }
        if let (true, Some(s_code)) = (self.gate_open, self.s_code) {
            total += cfg.lambda_code * s_code;
        }
        total
    }
}

pub fn exec_reward(status: CompileStatus, cfg: &RewardConfig) -> Result<f64, RewardError> {
    match status {
        CompileStatus::Success => Ok(cfg.alpha_plus),
        CompileStatus::CompileError | CompileStatus::Timeout => Ok(cfg.alpha_minus),
        CompileStatus::ToolchainMissing => Err(RewardError::Environment),
    }
}

/// `λ_sem · s_sem + λ_str · s_struct`.
pub fn visual_reward(scores: &VisualScores, cfg: &RewardConfig) -> f64 {
    cfg.lambda_sem * scores.s_sem + cfg.lambda_str * scores.s_struct
}

/// `r_exec + 1{success} · λ_vis · r_vis`.
pub fn stage1_total(
    status: CompileStatus,
    scores: Option<&VisualScores>,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    let r_exec = exec_reward(status, cfg)?;
    let mut out = RewardBreakdown {
        compiled: status.is_success(),
        r_exec,
        s_sem: 0.0,
        s_struct: 0.0,
        r_vis: 0.0,
        gate_open: false,
        s_code: None,
        pending: false,
        total: r_exec,
    };
    if out.compiled {
        let scores = scores.ok_or(RewardError::MissingScores)?;
        out.s_sem = scores.s_sem;
        out.s_struct = scores.s_struct;
        out.r_vis = visual_reward(scores, cfg);
        out.total = r_exec + cfg.lambda_vis * out.r_vis;
    }
    Ok(out)
}

/// Whether a rollout earns a round-trip check.
pub fn gate_opens(compiled: bool, r_vis: f64, tau_gate: f64) -> bool {
    compiled && r_vis > tau_gate
}

/// `R_vis + 1{r_vis > τ_gate} · λ_code · s_code`. When the gate opens but no
/// code scores are supplied the breakdown is marked pending.
pub fn stage2_total(
    status: CompileStatus,
    scores: Option<&VisualScores>,
    code_scores: Option<&CodeScores>,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    let mut out = stage1_total(status, scores, cfg)?;
    out.gate_open = gate_opens(out.compiled, out.r_vis, cfg.tau_gate);
    if out.gate_open {
        match code_scores {
            Some(code) => {
                out.s_code = Some(code.s_code);
                out.total += cfg.lambda_code * code.s_code;
            }
            None => out.pending = true,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub rewards: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub advantages: Vec<f64>,
}

/// In-group normalization `(R_i − μ) / max(σ, floor)` with the population
/// standard deviation.
pub fn group_advantages(rewards: &[f64], cfg: &GrpoConfig) -> Result<GroupStats, RewardError> {
    if rewards.len() < 2 {
        return Err(RewardError::GroupTooSmall(rewards.len()));
    }
    if rewards.len() != cfg.group_size {
        return Err(RewardError::GroupSizeMismatch {
            expected: cfg.group_size,
            got: rewards.len(),
        });
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = libm::sqrt(rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n);
    let degenerate = rewards.iter().all(|r| *r == rewards[0]);
    let scale = std.max(cfg.std_floor);
    let advantages = rewards
        .iter()
        .map(|r| if degenerate { 0.0 } else { (r - mean) / scale })
        .collect();
    Ok(GroupStats {
        rewards: rewards.to_vec(),
        mean,
        std,
        advantages,
    })
}

/// `min(ρ·Â, clip(ρ, 1−ε, 1+ε)·Â)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// `β · mean(exp(Δ) − Δ − 1)` with `Δ = logp_ref − logp` per token.
pub fn kl_penalty(logp: &[f64], logp_ref: &[f64], beta: f64) -> Result<f64, RewardError> {
    if logp.len() != logp_ref.len() {
        return Err(RewardError::LengthMismatch(logp.len(), logp_ref.len()));
    }
    if logp.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = logp
        .iter()
        .zip(logp_ref)
        .map(|(lp, lr)| {
            let delta = lr - lp;
            libm::exp(delta) - delta - 1.0
        })
        .sum();
    Ok(beta * sum / logp.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumCandidate {
    pub compile_failed: bool,
    pub s_vis: f64,
}

/// Indices of candidates kept for RL: compile failures, plus successes
/// with `τ_min ≤ s_vis ≤ τ_max`. Input order is preserved.
pub fn curriculum_select(
    candidates: &[CurriculumCandidate],
    tau_min: f64,
    tau_max: f64,
) -> Result<Vec<usize>, RewardError> {
    if !(tau_min <= tau_max) {
        return Err(RewardError::InvalidBand(tau_min, tau_max));
    }
    Ok(candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.compile_failed || (tau_min <= c.s_vis && c.s_vis <= tau_max))
        .map(|(i, _)| i)
        .collect())
}
