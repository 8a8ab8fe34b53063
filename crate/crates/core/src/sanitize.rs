//! Heuristic sanitization: length, aspect-ratio and external-dependency
//! filters.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::texlex::{scan_dependencies, DependencyFinding, DEFAULT_DEPENDENCY_MACROS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanitizeLimits {
    /// Records with at least this many tokens are dropped.
    pub max_tokens: usize,
    /// Records wider or taller than this ratio are dropped.
    pub max_aspect_ratio: f64,
    pub dependency_macros: Vec<String>,
}

impl Default for SanitizeLimits {
    fn default() -> Self {
        Self {
            max_tokens: 8192,
            max_aspect_ratio: 15.0,
            dependency_macros: DEFAULT_DEPENDENCY_MACROS.iter().map(|m| String::from(*m)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SanitizeReason {
    TooLong,
    ExtremeAspectRatio,
    ExternalDependency,
}

impl SanitizeReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SanitizeReason::TooLong => "too-long",
            SanitizeReason::ExtremeAspectRatio => "extreme-aspect-ratio",
            SanitizeReason::ExternalDependency => "external-dependency",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SanitizeVerdict {
    Keep,
    Drop {
        reason: SanitizeReason,
        findings: Vec<DependencyFinding>,
    },
}

impl SanitizeVerdict {
    pub fn is_keep(&self) -> bool {
        matches!(self, SanitizeVerdict::Keep)
    }

    pub fn reason(&self) -> Option<SanitizeReason> {
        match self {
            SanitizeVerdict::Keep => None,
            SanitizeVerdict::Drop { reason, .. } => Some(*reason),
        }
    }
}

/// Checks run in order length, aspect ratio, dependencies; the first failure
/// is the reported reason. An unknown aspect ratio skips that check.
pub fn heuristic_sanitize(
    code: &str,
    token_count: usize,
    aspect_ratio: Option<f64>,
    limits: &SanitizeLimits,
) -> SanitizeVerdict {
    let drop = |reason| SanitizeVerdict::Drop {
        reason,
        findings: Vec::new(),
    };
    if token_count >= limits.max_tokens {
        return drop(SanitizeReason::TooLong);
    }
    if let Some(ar) = aspect_ratio {
        if !(ar.is_finite() && ar > 0.0)
            || ar > limits.max_aspect_ratio
            || ar < 1.0 / limits.max_aspect_ratio
        {
            return drop(SanitizeReason::ExtremeAspectRatio);
        }
    }
    let findings = scan_dependencies(code, &limits.dependency_macros);
    if !findings.is_empty() {
        return SanitizeVerdict::Drop {
            reason: SanitizeReason::ExternalDependency,
            findings,
        };
    }
    SanitizeVerdict::Keep
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLEAN: &str = "\\begin{tikzpicture}\\draw (0,0) -- (1,1);\\end{tikzpicture}";

    #[test]
    fn boundaries() {
        let l = SanitizeLimits::default();
        assert_eq!(heuristic_sanitize(CLEAN, 8192, None, &l).reason(), Some(SanitizeReason::TooLong));
        assert!(heuristic_sanitize(CLEAN, 8191, None, &l).is_keep());
        assert!(heuristic_sanitize(CLEAN, 400, Some(1.5), &l).is_keep());
        assert!(heuristic_sanitize(CLEAN, 400, Some(15.0), &l).is_keep());
        assert!(heuristic_sanitize(CLEAN, 400, Some(1.0 / 15.0), &l).is_keep());
        assert_eq!(
            heuristic_sanitize(CLEAN, 400, Some(16.0), &l).reason(),
            Some(SanitizeReason::ExtremeAspectRatio)
        );
        assert_eq!(
            heuristic_sanitize(CLEAN, 400, Some(1.0 / 16.0), &l).reason(),
            Some(SanitizeReason::ExtremeAspectRatio)
        );
    }

    #[test]
    fn dependency_reason_carries_findings() {
        let l = SanitizeLimits::default();
        let code = "\\begin{tikzpicture}\\node {\\includegraphics{logo.png}};\\end{tikzpicture}";
        match heuristic_sanitize(code, 20, None, &l) {
            SanitizeVerdict::Drop { reason, findings } => {
                assert_eq!(reason, SanitizeReason::ExternalDependency);
                assert_eq!(findings.len(), 1);
                assert_eq!(findings[0].command, "includegraphics");
            }
            SanitizeVerdict::Keep => panic!("kept a dependency-bearing record"),
        }
        assert_eq!(SanitizeReason::ExternalDependency.as_str(), "external-dependency");
    }
}
