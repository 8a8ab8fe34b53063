//! Subprocess compilation of LaTeX documents and PDF rasterization.
//!
//! Each job gets a fresh temporary directory, a scrubbed environment, and
//! its own process group so a timeout can take down the whole tree.

use std::fs;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tikzgym_core::document::extract_error_excerpt;
use tikzgym_core::raster::RasterImage;
use tikzgym_core::reward::CompileStatus;

use crate::config::SandboxConfig;
use crate::error::{Error, Result};

const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Pdf,
    Png,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: ArtifactKind,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompileRequest {
    pub document: String,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileOutcome {
    pub status: CompileStatus,
    pub duration_s: f64,
    pub log_excerpt: String,
    pub artifact: Option<Artifact>,
}

impl CompileOutcome {
    pub fn toolchain_missing(engine: &str) -> Self {
        Self {
            status: CompileStatus::ToolchainMissing,
            duration_s: 0.0,
            log_excerpt: format!("engine `{engine}` not found"),
            artifact: None,
        }
    }
}

/// Result of running a child under a deadline.
#[derive(Debug)]
pub struct RunResult {
    pub exit: Option<ExitStatus>,
    pub timed_out: bool,
    pub elapsed: Duration,
}

fn kill_group(pid: u32, signal: libc::c_int) {
    // SAFETY: kill(2) with a negative pid addresses the process group the
    // child leads (it was spawned with process_group(0)). No memory is
    // touched; a stale group simply yields ESRCH.
    unsafe {
        libc::kill(-(pid as libc::pid_t), signal);
    }
}

fn wait_until(child: &mut Child, deadline: Instant) -> std::io::Result<Option<ExitStatus>> {
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(Some(status));
        }
        if Instant::now() >= deadline {
            return Ok(None);
        }
        std::thread::sleep(POLL);
    }
}

/// Runs `cmd` in its own process group. On timeout the group receives
/// SIGTERM, then SIGKILL after `grace`.
pub fn run_with_timeout(cmd: &mut Command, timeout: Duration, grace: Duration) -> std::io::Result<RunResult> {
    let start = Instant::now();
    cmd.process_group(0);
    let mut child = cmd.spawn()?;
    let pid = child.id();
    let exit = wait_until(&mut child, start + timeout)?;
    let result = match exit {
        Some(status) => RunResult { exit: Some(status), timed_out: false, elapsed: start.elapsed() },
        None => {
            kill_group(pid, libc::SIGTERM);
            if wait_until(&mut child, Instant::now() + grace)?.is_none() {
                kill_group(pid, libc::SIGKILL);
                child.wait()?;
            }
            RunResult { exit: None, timed_out: true, elapsed: start.elapsed() }
        }
    };
    // Stray grandchildren must not outlive the job.
    kill_group(pid, libc::SIGKILL);
    Ok(result)
}

/// Resolves a bare command name against `PATH`.
pub fn resolve_executable(name: &str) -> Option<PathBuf> {
    let is_exec = |p: &Path| {
        use std::os::unix::fs::PermissionsExt;
        fs::metadata(p).is_ok_and(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
    };
    if name.contains('/') {
        let p = PathBuf::from(name);
        return is_exec(&p).then_some(p);
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|dir| dir.join(name))
        .find(|p| is_exec(p))
}

pub fn document_hash(document: &str) -> String {
    hex::encode(Sha256::digest(document.as_bytes()))
}

#[derive(Debug)]
enum ArtifactDir {
    Temp(tempfile::TempDir),
    Fixed(PathBuf),
}

impl ArtifactDir {
    fn path(&self) -> &Path {
        match self {
            ArtifactDir::Temp(t) => t.path(),
            ArtifactDir::Fixed(p) => p,
        }
    }
}

#[derive(Debug)]
pub struct Sandbox {
    cfg: SandboxConfig,
    artifacts: ArtifactDir,
}

impl Sandbox {
    /// Sandbox whose PDFs live in a private temporary directory for the
    /// lifetime of the value.
    pub fn new(cfg: SandboxConfig) -> Result<Self> {
        let dir = tempfile::Builder::new()
            .prefix("tikzgym-artifacts-")
            .tempdir()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        Ok(Self { cfg, artifacts: ArtifactDir::Temp(dir) })
    }

    pub fn with_artifact_dir(cfg: SandboxConfig, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { cfg, artifacts: ArtifactDir::Fixed(dir) })
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.cfg
    }

    pub fn artifact_dir(&self) -> &Path {
        self.artifacts.path()
    }

    fn scrubbed(&self, program: &Path, workdir: &Path) -> Command {
        let mut cmd = Command::new(program);
        cmd.env_clear();
        for key in &self.cfg.env_allowlist {
            if let Some(v) = std::env::var_os(key) {
                cmd.env(key, v);
            }
        }
        // kpathsea: refuse writes outside the working directory.
        cmd.env("openout_any", "p");
        cmd.current_dir(workdir).stdin(Stdio::null());
        cmd
    }

    pub fn compile(&self, req: &CompileRequest) -> Result<CompileOutcome> {
        let Some(engine) = resolve_executable(&self.cfg.engine) else {
            return Ok(CompileOutcome::toolchain_missing(&self.cfg.engine));
        };
        let work = tempfile::Builder::new()
            .prefix("tikzgym-job-")
            .tempdir()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let dir = work.path();
        let tex = dir.join("doc.tex");
        fs::write(&tex, &req.document).map_err(|e| Error::io(&tex, e))?;
        let out_path = dir.join("engine.out");
        let out = fs::File::create(&out_path).map_err(|e| Error::io(&out_path, e))?;
        let err = out.try_clone().map_err(|e| Error::io(&out_path, e))?;

        let mut cmd = self.scrubbed(&engine, dir);
        cmd.args(["-interaction=nonstopmode", "-halt-on-error", "-no-shell-escape", "doc.tex"])
            .stdout(out)
            .stderr(err);
        let grace = Duration::from_secs_f64(self.cfg.kill_grace_s);
        let run = match run_with_timeout(&mut cmd, req.timeout, grace) {
            Ok(run) => run,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Ok(CompileOutcome::toolchain_missing(&self.cfg.engine))
            }
            Err(e) => return Err(Error::io(&engine, e)),
        };

        let log_bytes = fs::read(dir.join("doc.log")).or_else(|_| fs::read(&out_path)).unwrap_or_default();
        let log = String::from_utf8_lossy(&log_bytes);
        let log_excerpt = extract_error_excerpt(&log, self.cfg.max_log_bytes);
        let pdf = dir.join("doc.pdf");
        let has_pdf = fs::metadata(&pdf).is_ok_and(|m| m.len() > 0);
        let status = if run.timed_out {
            CompileStatus::Timeout
        } else if run.exit.is_some_and(|s| s.success()) && has_pdf {
            CompileStatus::Success
        } else {
            CompileStatus::CompileError
        };
        let artifact = if status == CompileStatus::Success {
            let dest = self.artifacts.path().join(format!("{}.pdf", document_hash(&req.document)));
            fs::copy(&pdf, &dest).map_err(|e| Error::io(&dest, e))?;
            Some(Artifact { kind: ArtifactKind::Pdf, path: dest })
        } else {
            None
        };
        if self.cfg.keep_artifacts {
            let kept = work.keep();
            log::info!("kept compile workdir {}", kept.display());
        }
        Ok(CompileOutcome {
            status,
            duration_s: run.elapsed.as_secs_f64(),
            log_excerpt,
            artifact,
        })
    }

    /// Rasterizes the first page of `pdf` with the configured command
    /// template.
    pub fn rasterize(&self, pdf: &Path, dpi: f64) -> Result<RasterImage> {
        rasterize_with(&self.cfg, pdf, dpi)
    }
}

/// Substitutes `{dpi}`, `{pdf}` and `{out_stem}` in the rasterizer
/// template and decodes `{out_stem}.png`.
pub fn rasterize_with(cfg: &SandboxConfig, pdf: &Path, dpi: f64) -> Result<RasterImage> {
    let (program, args) = cfg
        .rasterizer
        .split_first()
        .ok_or_else(|| Error::Config("sandbox.rasterizer is empty".into()))?;
    let exe = resolve_executable(program).ok_or_else(|| Error::ToolchainMissing(program.clone()))?;
    let work = tempfile::Builder::new()
        .prefix("tikzgym-raster-")
        .tempdir()
        .map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let stem = work.path().join("page");
    let pdf_abs = fs::canonicalize(pdf).map_err(|e| Error::io(pdf, e))?;
    let dpi_text = format!("{}", dpi.round() as i64);
    let mut cmd = Command::new(&exe);
    cmd.env_clear();
    for key in &cfg.env_allowlist {
        if let Some(v) = std::env::var_os(key) {
            cmd.env(key, v);
        }
    }
    cmd.current_dir(work.path())
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped());
    for a in args {
        cmd.arg(
            a.replace("{dpi}", &dpi_text)
                .replace("{pdf}", &pdf_abs.to_string_lossy())
                .replace("{out_stem}", &stem.to_string_lossy()),
        );
    }
    let errfile = work.path().join("raster.err");
    let errout = fs::File::create(&errfile).map_err(|e| Error::io(&errfile, e))?;
    cmd.stderr(errout);
    let run = run_with_timeout(
        &mut cmd,
        Duration::from_secs_f64(cfg.render_timeout_s),
        Duration::from_secs_f64(cfg.kill_grace_s),
    )
    .map_err(|e| Error::io(&exe, e))?;
    let stderr = fs::read_to_string(&errfile).unwrap_or_default();
    if run.timed_out {
        return Err(Error::RenderFailed(format!("{program} timed out")));
    }
    if !run.exit.is_some_and(|s| s.success()) {
        return Err(Error::RenderFailed(format!("{program} failed: {}", stderr.trim())));
    }
    let png = stem.with_extension("png");
    let bytes = fs::read(&png).map_err(|_| Error::RenderFailed(format!("{program} produced no {}", png.display())))?;
    crate::imageio::decode_png(&bytes, dpi)
}
