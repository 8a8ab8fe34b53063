//! Document-to-raster rendering behind one trait, so the pipeline, the
//! rollout loop and the evaluator can switch between pdflatex and the
//! built-in sketch interpreter.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tikzgym_core::document::extract_error_excerpt;
use tikzgym_core::raster::RasterImage;
use tikzgym_core::reward::CompileStatus;

use crate::config::{Config, RendererKind, SandboxConfig};
use crate::error::{Error, Result};
use crate::imageio::{decode_png, encode_png};
use crate::sandbox::{document_hash, Artifact, ArtifactKind, CompileOutcome, CompileRequest, Sandbox};
use crate::sketch::{self, SketchOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutcome {
    pub compile: CompileOutcome,
    pub image: Option<RasterImage>,
}

impl RenderOutcome {
    /// The raster if compilation succeeded and the page has visible
    /// content. Blank pages count as failed renders.
    pub fn usable_image(&self) -> Option<&RasterImage> {
        self.image
            .as_ref()
            .filter(|img| self.compile.status.is_success() && !img.is_constant())
    }
}

pub trait Renderer: Send + Sync {
    /// Stable description used in cache keys and report headers.
    fn identity(&self) -> String;

    /// Compiles without rasterizing. A missing toolchain is an error.
    fn compile(&self, document: &str, timeout: Duration) -> Result<CompileOutcome>;

    /// Compiles and rasterizes the first page at `dpi`.
    fn render(&self, document: &str, timeout: Duration, dpi: f64) -> Result<RenderOutcome>;
}

fn require_toolchain(out: CompileOutcome, engine: &str) -> Result<CompileOutcome> {
    if out.status == CompileStatus::ToolchainMissing {
        return Err(Error::ToolchainMissing(engine.to_string()));
    }
    Ok(out)
}

pub struct LatexRenderer {
    sandbox: Sandbox,
}

impl LatexRenderer {
    pub fn new(sandbox: Sandbox) -> Self {
        Self { sandbox }
    }
}

impl Renderer for LatexRenderer {
    fn identity(&self) -> String {
        let c = self.sandbox.config();
        format!("latex:{}|{}", c.engine, c.rasterizer.join(" "))
    }

    fn compile(&self, document: &str, timeout: Duration) -> Result<CompileOutcome> {
        let out = self.sandbox.compile(&CompileRequest { document: document.to_string(), timeout })?;
        require_toolchain(out, &self.sandbox.config().engine)
    }

    fn render(&self, document: &str, timeout: Duration, dpi: f64) -> Result<RenderOutcome> {
        let compile = self.compile(document, timeout)?;
        let image = match &compile.artifact {
            Some(a) => match self.sandbox.rasterize(&a.path, dpi) {
                Ok(img) => Some(img),
                Err(Error::RenderFailed(msg)) => {
                    log::warn!("rasterization failed: {msg}");
                    None
                }
                Err(e) => return Err(e),
            },
            None => None,
        };
        Ok(RenderOutcome { compile, image })
    }
}

/// Renders through [`sketch::render`]; PNG artifacts stand in for PDFs.
pub struct SketchRenderer {
    border_pt: f64,
    dpi: f64,
    max_log_bytes: usize,
    artifacts: tempfile::TempDir,
}

impl SketchRenderer {
    pub fn new(cfg: &SandboxConfig, border_pt: f64) -> Result<Self> {
        let artifacts = tempfile::Builder::new()
            .prefix("tikzgym-sketch-")
            .tempdir()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        Ok(Self { border_pt, dpi: cfg.dpi, max_log_bytes: cfg.max_log_bytes, artifacts })
    }

    fn run(&self, document: &str, timeout: Duration, dpi: f64) -> Result<RenderOutcome> {
        let start = Instant::now();
        let result = sketch::render(document, dpi, self.border_pt);
        let elapsed = start.elapsed().as_secs_f64();
        let (status, log, image, duration_s) = match result {
            SketchOutcome::Rendered { image, log } => (CompileStatus::Success, log, Some(image), elapsed),
            SketchOutcome::Failed { log } => (CompileStatus::CompileError, log, None, elapsed),
            // A real engine would spin until the deadline.
            SketchOutcome::Diverges { log } => (CompileStatus::Timeout, log, None, timeout.as_secs_f64()),
        };
        let artifact = match &image {
            Some(img) => {
                let path = self.artifacts.path().join(format!("{}.png", document_hash(document)));
                fs::write(&path, encode_png(img)).map_err(|e| Error::io(&path, e))?;
                Some(Artifact { kind: ArtifactKind::Png, path })
            }
            None => None,
        };
        let compile = CompileOutcome {
            status,
            duration_s,
            log_excerpt: extract_error_excerpt(&log, self.max_log_bytes),
            artifact,
        };
        Ok(RenderOutcome { compile, image })
    }
}

impl Renderer for SketchRenderer {
    fn identity(&self) -> String {
        format!("sketch:v1|border={}", self.border_pt)
    }

    fn compile(&self, document: &str, timeout: Duration) -> Result<CompileOutcome> {
        Ok(self.run(document, timeout, self.dpi)?.compile)
    }

    fn render(&self, document: &str, timeout: Duration, dpi: f64) -> Result<RenderOutcome> {
        self.run(document, timeout, dpi)
    }
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    compile: CompileOutcome,
    has_image: bool,
}

/// Disk cache over another renderer, keyed by renderer identity, dpi,
/// timeout and document text.
pub struct CachedRenderer {
    inner: Arc<dyn Renderer>,
    dir: PathBuf,
}

impl CachedRenderer {
    pub fn new(inner: Arc<dyn Renderer>, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { inner, dir })
    }

    fn key(&self, document: &str, timeout: Duration, dpi: f64) -> String {
        let mut h = Sha256::new();
        for part in [self.inner.identity(), format!("{dpi}"), format!("{}", timeout.as_millis())] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        h.update(document.as_bytes());
        hex::encode(h.finalize())
    }

    fn load(&self, key: &str, dpi: f64) -> Option<RenderOutcome> {
        let entry: CacheEntry = serde_json::from_slice(&fs::read(self.dir.join(format!("{key}.json"))).ok()?).ok()?;
        let png = self.dir.join(format!("{key}.png"));
        let image = if entry.has_image { Some(decode_png(&fs::read(&png).ok()?, dpi).ok()?) } else { None };
        let mut compile = entry.compile;
        if let Some(a) = compile.artifact.as_mut() {
            a.path = png;
            a.kind = ArtifactKind::Png;
        }
        Some(RenderOutcome { compile, image })
    }

    fn store(&self, key: &str, out: &RenderOutcome) -> Result<()> {
        if let Some(img) = &out.image {
            let png = self.dir.join(format!("{key}.png"));
            fs::write(&png, encode_png(img)).map_err(|e| Error::io(&png, e))?;
        }
        let entry = CacheEntry { compile: out.compile.clone(), has_image: out.image.is_some() };
        let path = self.dir.join(format!("{key}.json"));
        fs::write(&path, serde_json::to_vec(&entry)?).map_err(|e| Error::io(&path, e))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl Renderer for CachedRenderer {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn compile(&self, document: &str, timeout: Duration) -> Result<CompileOutcome> {
        self.inner.compile(document, timeout)
    }

    fn render(&self, document: &str, timeout: Duration, dpi: f64) -> Result<RenderOutcome> {
        let key = self.key(document, timeout, dpi);
        if let Some(hit) = self.load(&key, dpi) {
            return Ok(hit);
        }
        let out = self.inner.render(document, timeout, dpi)?;
        self.store(&key, &out)?;
        // Serve the stored (8-bit quantized) form so hits and misses agree.
        Ok(self.load(&key, dpi).unwrap_or(out))
    }
}

pub fn renderer_from_config(cfg: &Config) -> Result<Arc<dyn Renderer>> {
    Ok(match cfg.sandbox.renderer {
        RendererKind::Latex => Arc::new(LatexRenderer::new(Sandbox::new(cfg.sandbox.clone())?)),
        RendererKind::Sketch => Arc::new(SketchRenderer::new(&cfg.sandbox, cfg.metrics.border_pt)?),
    })
}
