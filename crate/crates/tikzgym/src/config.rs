//! Declarative run configuration, loaded from TOML.
//!
//! [`Config::default`] parses the shipped `config/default.toml`, so the file
//! in the repository and the compiled-in defaults cannot drift apart.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tikzgym_core::codemetrics::EedCosts;
use tikzgym_core::dedup::DedupConfig;
use tikzgym_core::judge::{GateThresholds, PreScreen};
use tikzgym_core::reward::{GrpoConfig, RewardConfig, Stage};
use tikzgym_core::sanitize::SanitizeLimits;
use tikzgym_core::TrivialNgramSet;

use crate::backends::BackendsConfig;
use crate::error::{Error, Result};

pub const DEFAULT_TOML: &str = include_str!("../../../config/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RendererKind {
    Latex,
    Sketch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxConfig {
    pub renderer: RendererKind,
    pub engine: String,
    pub rasterizer: Vec<String>,
    pub validate_timeout_s: f64,
    pub render_timeout_s: f64,
    pub kill_grace_s: f64,
    pub dpi: f64,
    pub max_log_bytes: usize,
    pub keep_artifacts: bool,
    pub jobs: usize,
    pub env_allowlist: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub background_threshold: f32,
    pub border_pt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    pub gamma: f64,
    pub tau_ted: f64,
    pub trivial_k: usize,
    pub bleu_max_order: usize,
    pub trivial_ngrams: String,
    pub eed: EedCosts,
}

impl CodeConfig {
    /// Loads the mined n-gram sidecar, or an empty mask when none is set.
    pub fn load_trivial(&self) -> Result<TrivialNgramSet> {
        if self.trivial_ngrams.is_empty() {
            return Ok(TrivialNgramSet::empty());
        }
        let path = Path::new(&self.trivial_ngrams);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: TrivialNgramSet = serde_json::from_str(&text)?;
        if set.version != tikzgym_core::codemetrics::SIDECAR_VERSION {
            return Err(Error::Config(format!(
                "{}: unsupported sidecar version {}",
                path.display(),
                set.version
            )));
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardStages {
    pub stage1: RewardConfig,
    pub stage2: RewardConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumConfig {
    pub tau_min: f64,
    pub tau_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataEngineConfig {
    pub max_tokens: usize,
    pub max_aspect_ratio: f64,
    pub dependency_macros: Vec<String>,
    pub shingle_size: usize,
    pub max_shared: usize,
    pub remediation_max_iters: usize,
    pub gate: GateThresholds,
    pub prescreen: PreScreen,
}

impl DataEngineConfig {
    pub fn sanitize_limits(&self) -> SanitizeLimits {
        SanitizeLimits {
            max_tokens: self.max_tokens,
            max_aspect_ratio: self.max_aspect_ratio,
            dependency_macros: self.dependency_macros.clone(),
        }
    }

    pub fn dedup(&self) -> DedupConfig {
        DedupConfig {
            shingle_size: self.shingle_size,
            max_shared: self.max_shared,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DscConfig {
    pub reconstructions: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub max_length: usize,
    pub fault_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: String,
    pub sandbox: SandboxConfig,
    pub metrics: MetricsConfig,
    pub code: CodeConfig,
    pub reward: RewardStages,
    pub grpo: GrpoConfig,
    pub curriculum: CurriculumConfig,
    pub dataengine: DataEngineConfig,
    pub dsc: DscConfig,
    pub backends: BackendsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_TOML).expect("shipped default config parses")
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Replaces the backend table with the one in a separate TOML file.
    pub fn load_backends(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.backends = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(())
    }

    pub fn reward_for(&self, stage: Stage) -> &RewardConfig {
        match stage {
            Stage::One => &self.reward.stage1,
            Stage::Two => &self.reward.stage2,
        }
    }

    /// Hard errors for invalid values; returns warnings for suspicious but
    /// usable ones.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        let mut warnings = Vec::new();
        if self.schema != crate::corpus::SCHEMA {
            return bad("schema must be \"scitikz/1\"");
        }
        let s = &self.sandbox;
        if !(s.validate_timeout_s > 0.0 && s.render_timeout_s > 0.0 && s.kill_grace_s >= 0.0) {
            return bad("sandbox timeouts must be positive");
        }
        if !(s.dpi > 0.0) {
            return bad("sandbox.dpi must be positive");
        }
        if s.renderer == RendererKind::Latex && s.rasterizer.is_empty() {
            return bad("sandbox.rasterizer must name a command");
        }
        if !(0.0..=1.0).contains(&self.metrics.background_threshold) {
            return bad("metrics.background_threshold must lie in [0, 1]");
        }
        if !self.code.eed.is_valid() {
            return bad("code.eed costs must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.code.gamma) || !(self.code.tau_ted > 0.0) {
            return bad("code.gamma in [0, 1] and code.tau_ted > 0 required");
        }
        if self.code.trivial_k == 0 || self.code.bleu_max_order == 0 {
            return bad("code.trivial_k and code.bleu_max_order must be positive");
        }
        for (name, stage, expected) in [
            ("reward.stage1", &self.reward.stage1, Stage::One),
            ("reward.stage2", &self.reward.stage2, Stage::Two),
        ] {
            if stage.stage != expected {
                return Err(Error::Config(format!("{name}.stage is inconsistent")));
            }
            if stage.validate().map_err(|e| Error::Config(format!("{name}: {e}")))? {
                warnings.push(format!("{name}: lambda_sem + lambda_str != 1"));
            }
        }
        self.grpo
            .validate()
            .map_err(|e| Error::Config(format!("grpo: {e}")))?;
        if !(self.curriculum.tau_min <= self.curriculum.tau_max) {
            return bad("curriculum.tau_min must not exceed tau_max");
        }
        let d = &self.dataengine;
        if d.shingle_size == 0 || d.max_tokens == 0 || !(d.max_aspect_ratio >= 1.0) {
            return bad("dataengine limits must be positive (aspect ratio >= 1)");
        }
        if d.dependency_macros.is_empty() {
            return bad("dataengine.dependency_macros must not be empty");
        }
        if !(0.0..=1.0).contains(&self.dsc.fault_rate) || self.dsc.reconstructions == 0 {
            return bad("dsc.fault_rate in [0, 1] and dsc.reconstructions >= 1 required");
        }
        self.backends.validate()?;
        Ok(warnings)
    }

    /// SHA-256 over the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn jobs(&self) -> usize {
        if self.sandbox.jobs == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.sandbox.jobs
        }
    }

    pub fn cache_dir(&self) -> Option<PathBuf> {
        (!self.backends.cache_dir.is_empty()).then(|| PathBuf::from(&self.backends.cache_dir))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_defaults_parse_and_validate() {
        let cfg = Config::default();
        assert_eq!(cfg.validate().unwrap(), Vec::<String>::new());
        assert_eq!(cfg.reward.stage1, RewardConfig::stage_one());
        assert_eq!(cfg.reward.stage2, RewardConfig::stage_two());
        assert_eq!(cfg.grpo, GrpoConfig::default());
        assert_eq!(cfg.code.eed, EedCosts::default());
        assert_eq!(cfg.dataengine.gate, GateThresholds::default());
        assert_eq!(cfg.dataengine.sanitize_limits().max_tokens, SanitizeLimits::default().max_tokens);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = DEFAULT_TOML.replace("[metrics]", "[metrics]\nbogus = 1");
        assert!(matches!(Config::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.grpo.kl_beta = 0.02;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let mut cfg = Config::default();
        cfg.curriculum.tau_min = 0.95;
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.reward.stage1.alpha_minus = 0.3;
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.reward.stage1.lambda_sem = 0.7;
        assert_eq!(cfg.validate().unwrap().len(), 1);
    }
}
