//! Code-side similarity between two TikZ programs: token EED, its kernel
//! similarity, CrystalBLEU, and their convex combination.

mod bleu;
mod eed;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use bleu::{
    crystal_bleu_tokens, masked_precision, mine_trivial_ngrams, TrivialNgramSet, BLEU_MAX_ORDER,
    DEFAULT_TRIVIAL_K, SIDECAR_VERSION,
};
pub use eed::{eed_tokens, EedCosts};

use crate::texlex::{extract_document_body, lex, normalize, TokenStream};

pub const DEFAULT_TAU_TED: f64 = 0.4;
pub const DEFAULT_GAMMA: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodeMetricError {
    #[error("cannot mine n-grams from an empty corpus")]
    EmptyCorpus,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Scoring pipeline shared by every code metric: document body, comment and
/// whitespace normalization, then lexing.
pub fn code_tokens(code: &str) -> TokenStream {
    lex(&normalize(extract_document_body(code)))
}

/// EED between two lexed programs; `reference` is the normalizer.
pub fn eed(hyp: &TokenStream, reference: &TokenStream, costs: &EedCosts) -> f64 {
    let h: Vec<&str> = hyp.lexemes().collect();
    let r: Vec<&str> = reference.lexemes().collect();
    eed_tokens(&h, &r, costs)
}

/// `exp(−d / τ)`.
pub fn ted_from_distance(d_eed: f64, tau_ted: f64) -> f64 {
    libm::exp(-d_eed / tau_ted)
}

/// Kernelized token edit distance similarity of two programs.
pub fn ted_similarity(hyp: &str, reference: &str, tau_ted: f64, costs: &EedCosts) -> f64 {
    ted_from_distance(eed(&code_tokens(hyp), &code_tokens(reference), costs), tau_ted)
}

/// CrystalBLEU of two programs.
pub fn crystal_bleu(hyp: &str, reference: &str, trivial: &TrivialNgramSet) -> f64 {
    let h = code_tokens(hyp);
    let r = code_tokens(reference);
    let h: Vec<&str> = h.lexemes().collect();
    let r: Vec<&str> = r.lexemes().collect();
    crystal_bleu_tokens(&h, &r, trivial)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeScores {
    pub d_eed: f64,
    pub s_ted: f64,
    pub crystal_bleu: f64,
    pub s_code: f64,
    pub gamma: f64,
}

impl CodeScores {
    pub fn combine(d_eed: f64, s_ted: f64, crystal_bleu: f64, gamma: f64) -> Self {
        Self {
            d_eed,
            s_ted,
            crystal_bleu,
            s_code: gamma * crystal_bleu + (1.0 - gamma) * s_ted,
            gamma,
        }
    }
}

/// Round-trip consistency between a primal program and its reconstruction.
/// The primal program is the reference for both EED normalization and BLEU.
pub fn code_consistency(
    primal: &str,
    reconstruction: &str,
    gamma: f64,
    tau_ted: f64,
    costs: &EedCosts,
    trivial: &TrivialNgramSet,
) -> Result<CodeScores, CodeMetricError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(CodeMetricError::InvalidParameter("gamma must lie in [0, 1]"));
    }
    if !(tau_ted > 0.0) {
        return Err(CodeMetricError::InvalidParameter("tau_ted must be positive"));
    }
    let p = code_tokens(primal);
    let r = code_tokens(reconstruction);
    let d_eed = eed(&r, &p, costs);
    let pl: Vec<&str> = p.lexemes().collect();
    let rl: Vec<&str> = r.lexemes().collect();
    let cb = crystal_bleu_tokens(&rl, &pl, trivial);
    Ok(CodeScores::combine(d_eed, ted_from_distance(d_eed, tau_ted), cb, gamma))
}
