//! Extended Edit Distance over token sequences.
//!
//! Follows the CDER-style dynamic programme of the reference EED metric:
//! the reference is consumed row by row, each row may be followed by a long
//! jump to any hypothesis position, and a coverage penalty counts hypothesis
//! positions visited zero or several times by the per-row optimum. Tokens
//! play the role the reference metric gives to characters, and every token
//! boundary counts as a word boundary where jumps are allowed.

use alloc::vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EedCosts {
    pub insertion: f64,
    pub substitution: f64,
    pub deletion: f64,
    /// `f64::INFINITY` disables jumps.
    pub jump: f64,
    pub coverage_penalty: f64,
}

impl Default for EedCosts {
    fn default() -> Self {
        Self {
            insertion: 1.0,
            substitution: 1.0,
            deletion: 0.2,
            jump: 2.0,
            coverage_penalty: 0.3,
        }
    }
}

impl EedCosts {
    /// Unit costs, no jumps and no coverage term: plain Levenshtein divided
    /// by the reference length.
    pub fn levenshtein() -> Self {
        Self {
            insertion: 1.0,
            substitution: 1.0,
            deletion: 1.0,
            jump: f64::INFINITY,
            coverage_penalty: 0.0,
        }
    }

    pub fn jumps_enabled(&self) -> bool {
        self.jump.is_finite()
    }

    pub fn is_valid(&self) -> bool {
        [self.insertion, self.substitution, self.deletion, self.jump, self.coverage_penalty]
            .iter()
            .all(|c| *c >= 0.0)
    }
}

/// Normalized EED of `hyp` against `reference`. Not capped at 1.
pub fn eed_tokens<T: PartialEq>(hyp: &[T], reference: &[T], costs: &EedCosts) -> f64 {
    let n = hyp.len();
    let mut visits = vec![-1i64; n + 1];
    // The origin counts as visited, so identical sequences score exactly 0.
    visits[0] = 0;

    let mut row = vec![0.0f64; n + 1];
    for (i, cell) in row.iter_mut().enumerate().skip(1) {
        *cell = if costs.jumps_enabled() {
            1.0
        } else {
            i as f64 * costs.deletion
        };
    }
    let mut next = vec![f64::INFINITY; n + 1];

    for r in reference {
        next[0] = row[0] + costs.insertion;
        for i in 1..=n {
            let sub = if hyp[i - 1] == *r { 0.0 } else { costs.substitution };
            next[i] = (next[i - 1] + costs.deletion)
                .min(row[i - 1] + sub)
                .min(row[i] + costs.insertion);
        }

        let (min_idx, min_val) = next
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best });
        visits[min_idx] += 1;

        if costs.jumps_enabled() {
            let jump = costs.jump + min_val;
            next.iter_mut().for_each(|v| *v = v.min(jump));
        }

        core::mem::swap(&mut row, &mut next);
        next.iter_mut().for_each(|v| *v = f64::INFINITY);
    }

    let coverage = costs.coverage_penalty
        * visits
            .iter()
            .map(|&v| if v >= 0 { v as f64 } else { 1.0 })
            .sum::<f64>();
    let denom = reference.len() as f64 + coverage;
    if denom == 0.0 {
        return row[n];
    }
    (row[n] + coverage) / denom
}
