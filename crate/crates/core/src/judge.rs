//! Judge score schema, the curation quality gate and benchmark tiers.

use alloc::string::{String, ToString};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const MAX_DIMENSION_SCORE: u8 = 5;

pub const SCORE_KEYS: [&str; 6] = [
    "correctness",
    "layout_precision",
    "readability",
    "scientific_plausibility",
    "visual_complexity",
    "total_score",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JudgeError {
    #[error("judge reply is empty")]
    EmptyReply,
    #[error("last line of the judge reply is not a JSON object: {0}")]
    NotJson(String),
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("unexpected key `{0}`")]
    ExtraKey(String),
    #[error("`{0}` must be an integer in [0, 5]")]
    OutOfRange(&'static str),
    #[error("total_score {total} does not equal the sum {sum}")]
    SumMismatch { total: u64, sum: u64 },
    #[error("benchmark pre-screen failed on `{0}`")]
    PreScreenFailed(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JudgeScores {
    pub correctness: u8,
    pub layout_precision: u8,
    pub readability: u8,
    pub scientific_plausibility: u8,
    pub visual_complexity: u8,
    #[serde(rename = "total_score")]
    pub total: u8,
}

impl JudgeScores {
    /// Builds scores with a consistent total.
    pub fn new(
        correctness: u8,
        layout_precision: u8,
        readability: u8,
        scientific_plausibility: u8,
        visual_complexity: u8,
    ) -> Result<Self, JudgeError> {
        let s = Self {
            correctness,
            layout_precision,
            readability,
            scientific_plausibility,
            visual_complexity,
            total: correctness
                .saturating_add(layout_precision)
                .saturating_add(readability)
                .saturating_add(scientific_plausibility)
                .saturating_add(visual_complexity),
        };
        s.validate()?;
        Ok(s)
    }

    fn dimensions(&self) -> [(&'static str, u8); 5] {
        [
            ("correctness", self.correctness),
            ("layout_precision", self.layout_precision),
            ("readability", self.readability),
            ("scientific_plausibility", self.scientific_plausibility),
            ("visual_complexity", self.visual_complexity),
        ]
    }

    pub fn validate(&self) -> Result<(), JudgeError> {
        for (name, v) in self.dimensions() {
            if v > MAX_DIMENSION_SCORE {
                return Err(JudgeError::OutOfRange(name));
            }
        }
        let sum: u64 = self.dimensions().iter().map(|(_, v)| u64::from(*v)).sum();
        if u64::from(self.total) != sum {
            return Err(JudgeError::SumMismatch {
                total: self.total.into(),
                sum,
            });
        }
        Ok(())
    }

    /// Parses a judge reply. The last non-empty line must be a JSON object
    /// with exactly the six score keys; anything after it is a violation.
    pub fn parse_reply(reply: &str) -> Result<Self, JudgeError> {
        let trimmed = reply.trim_end();
        if trimmed.is_empty() {
            return Err(JudgeError::EmptyReply);
        }
        let last = trimmed.rsplit('\n').next().unwrap_or(trimmed).trim();
        let value: Value =
            serde_json::from_str(last).map_err(|e| JudgeError::NotJson(e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(JudgeError::NotJson("not an object".to_string()));
        };
        Self::from_map(&map)
    }

    fn from_map(map: &Map<String, Value>) -> Result<Self, JudgeError> {
        if let Some(extra) = map.keys().find(|k| !SCORE_KEYS.contains(&k.as_str())) {
            return Err(JudgeError::ExtraKey(extra.clone()));
        }
        let mut vals = [0u64; 6];
        for (slot, key) in vals.iter_mut().zip(SCORE_KEYS) {
            let v = map.get(key).ok_or(JudgeError::MissingKey(key))?;
            *slot = v.as_u64().ok_or(JudgeError::OutOfRange(key))?;
        }
        for (v, key) in vals[..5].iter().zip(SCORE_KEYS) {
            if *v > u64::from(MAX_DIMENSION_SCORE) {
                return Err(JudgeError::OutOfRange(key));
            }
        }
        let sum: u64 = vals[..5].iter().sum();
        if vals[5] != sum {
            return Err(JudgeError::SumMismatch { total: vals[5], sum });
        }
        Ok(Self {
            correctness: vals[0] as u8,
            layout_precision: vals[1] as u8,
            readability: vals[2] as u8,
            scientific_plausibility: vals[3] as u8,
            visual_complexity: vals[4] as u8,
            total: vals[5] as u8,
        })
    }
}

/// Curation gate thresholds. `correctness` is a strict lower bound, the
/// others are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateThresholds {
    pub min_total: u8,
    pub correctness_above: u8,
    pub min_other: u8,
}

impl Default for GateThresholds {
    fn default() -> Self {
        Self {
            min_total: 18,
            correctness_above: 2,
            min_other: 2,
        }
    }
}

pub fn quality_gate(scores: &JudgeScores, thr: &GateThresholds) -> bool {
    scores.total >= thr.min_total
        && scores.correctness > thr.correctness_above
        && [
            scores.layout_precision,
            scores.readability,
            scores.scientific_plausibility,
            scores.visual_complexity,
        ]
        .iter()
        .all(|v| *v >= thr.min_other)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkTier {
    Easy,
    Medium,
    Hard,
}

/// Benchmark pre-screen: the four quality dimensions need at least 4, the
/// complexity at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreScreen {
    pub min_quality: u8,
    pub min_complexity: u8,
}

impl Default for PreScreen {
    fn default() -> Self {
        Self {
            min_quality: 4,
            min_complexity: 1,
        }
    }
}

/// Tier by complexity band: 1..=2 easy, 3 medium, 4.. hard.
pub fn stratify(scores: &JudgeScores, screen: &PreScreen) -> Result<BenchmarkTier, JudgeError> {
    for (name, v) in &scores.dimensions()[..4] {
        if *v < screen.min_quality {
            return Err(JudgeError::PreScreenFailed(name));
        }
    }
    if scores.visual_complexity < screen.min_complexity {
        return Err(JudgeError::PreScreenFailed("visual_complexity"));
    }
    Ok(match scores.visual_complexity {
        0..=2 => BenchmarkTier::Easy,
        3 => BenchmarkTier::Medium,
        _ => BenchmarkTier::Hard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn js(c: u8, l: u8, r: u8, s: u8, v: u8) -> JudgeScores {
        JudgeScores::new(c, l, r, s, v).unwrap()
    }

    #[test]
    fn gate_examples() {
        let thr = GateThresholds::default();
        assert!(quality_gate(&js(5, 4, 4, 4, 3), &thr));
        assert!(!quality_gate(&js(2, 5, 5, 5, 5), &thr));
        assert!(!quality_gate(&js(4, 4, 4, 4, 1), &thr));
        assert!(quality_gate(&js(3, 5, 5, 3, 2), &thr));
        assert!(!quality_gate(&js(5, 5, 5, 5, 1), &thr));
    }

    #[test]
    fn tiers() {
        let s = PreScreen::default();
        assert_eq!(stratify(&js(4, 4, 4, 4, 2), &s), Ok(BenchmarkTier::Easy));
        assert_eq!(stratify(&js(5, 4, 4, 4, 3), &s), Ok(BenchmarkTier::Medium));
        assert_eq!(stratify(&js(5, 5, 5, 5, 5), &s), Ok(BenchmarkTier::Hard));
        assert_eq!(
            stratify(&js(3, 5, 5, 5, 5), &s),
            Err(JudgeError::PreScreenFailed("correctness"))
        );
        assert_eq!(
            stratify(&js(5, 5, 5, 5, 0), &s),
            Err(JudgeError::PreScreenFailed("visual_complexity"))
        );
    }

    #[test]
    fn parse_valid_reply_after_reasoning() {
        let reply = "Looks fine.\nThe arrows match.\n{\"correctness\":5,\"layout_precision\":4,\"readability\":4,\"scientific_plausibility\":4,\"visual_complexity\":3,\"total_score\":20}\n";
        let s = JudgeScores::parse_reply(reply).unwrap();
        assert_eq!(s, js(5, 4, 4, 4, 3));
        let round = serde_json::to_string(&s).unwrap();
        assert_eq!(JudgeScores::parse_reply(&round).unwrap(), s);
    }

    #[test]
    fn parse_rejections() {
        let ok = "{\"correctness\":5,\"layout_precision\":4,\"readability\":4,\"scientific_plausibility\":4,\"visual_complexity\":3,\"total_score\":20}";
        assert!(matches!(
            JudgeScores::parse_reply(&format!("{ok}\nThanks!")),
            Err(JudgeError::NotJson(_))
        ));
        assert!(matches!(
            JudgeScores::parse_reply(&ok.replace("20}", "19}")),
            Err(JudgeError::SumMismatch { total: 19, sum: 20 })
        ));
        assert_eq!(
            JudgeScores::parse_reply(&ok.replace("\"correctness\":5", "\"correctness\":6").replace("20}", "21}")),
            Err(JudgeError::OutOfRange("correctness"))
        );
        assert_eq!(
            JudgeScores::parse_reply(&ok.replace("\"readability\":4,", "")),
            Err(JudgeError::MissingKey("readability"))
        );
        assert!(matches!(
            JudgeScores::parse_reply(&ok.replace("}", ",\"note\":1}")),
            Err(JudgeError::ExtraKey(_))
        ));
        assert!(matches!(
            JudgeScores::parse_reply(&format!("```json\n{ok}\n```")),
            Err(JudgeError::NotJson(_))
        ));
        assert_eq!(
            JudgeScores::parse_reply(&ok.replace("\"correctness\":5", "\"correctness\":5.0")),
            Err(JudgeError::OutOfRange("correctness"))
        );
        assert_eq!(JudgeScores::parse_reply("  \n"), Err(JudgeError::EmptyReply));
    }
}
