//! Pure algorithms behind compile-render-compare rewards for TikZ program
//! synthesis: TeX-aware lexing, image and code similarity metrics, reward
//! composition with GRPO arithmetic, judge-score gating, dedup and the rule
//! based repair table.
//!
//! The crate is `no_std` and only needs `alloc`. Anything that touches the
//! filesystem, subprocesses or the network lives in the `tikzgym` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod codemetrics;
pub mod dedup;
pub mod document;
pub mod hash;
pub mod imgmetrics;
pub mod judge;
pub mod raster;
pub mod repair;
pub mod reward;
pub mod sanitize;
pub mod texlex;

pub use codemetrics::{
    code_consistency, code_tokens, crystal_bleu, eed, mine_trivial_ngrams, ted_similarity,
    CodeScores, EedCosts, TrivialNgramSet,
};
pub use imgmetrics::{
    cosine, cosine_to_unit, fallback_embedding, hinge_semantic, mean_abs_diff, ssim,
    struct_from_distance, trim_and_align, AlignedPair, VisualScores,
};
pub use judge::{quality_gate, stratify, BenchmarkTier, GateThresholds, JudgeScores};
pub use raster::{Channels, RasterImage};
pub use reward::{
    clipped_surrogate, curriculum_select, exec_reward, group_advantages, kl_penalty,
    stage1_total, stage2_total, visual_reward, CompileStatus, GroupStats, GrpoConfig,
    RewardBreakdown, RewardConfig, Stage,
};
pub use texlex::{TexToken, TokenKind, TokenStream};
