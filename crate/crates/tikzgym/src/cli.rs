//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 when some records failed, 2 on environment,
//! configuration or usage errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use tikzgym_core::codemetrics::{code_consistency, code_tokens, mine_trivial_ngrams};
use tikzgym_core::dedup::dedup;
use tikzgym_core::document::wrap_standalone;
use tikzgym_core::raster::RasterImage;
use tikzgym_core::reward::{stage1_total, stage2_total, CompileStatus, Stage};

use crate::backends::{Backends, SamplingParams};
use crate::config::{Config, RendererKind};
use crate::corpus::{read_corpus, write_jsonl};
use crate::dscloop::{loop_report, run_iteration, toy_targets, Policy, RemotePolicy, ToyPolicy};
use crate::error::{Error, Result};
use crate::eval::{code_columns, evaluate, visual_columns};
use crate::imageio::{decode_png, encode_png};
use crate::pipeline::run_pipeline;
use crate::render::{renderer_from_config, CachedRenderer, RenderOutcome, Renderer};
use crate::scoring::visual_metrics;

#[derive(Debug, Parser)]
#[command(name = "tikzgym", version, about = "Compile, curate, score and evaluate TikZ programs")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Configuration file; the shipped defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Backend table replacing the one in the configuration.
    #[arg(long, global = true)]
    pub backends: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for written artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `sandbox.renderer`.
    #[arg(long, global = true, value_enum)]
    pub renderer: Option<RendererArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RendererArg {
    Latex,
    Sketch,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StageArg {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Toy,
    Remote,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile one file and print the outcome.
    Compile { file: PathBuf },
    /// Compile and rasterize one file to PNG.
    Render {
        file: PathBuf,
        #[arg(long)]
        dpi: Option<f64>,
    },
    /// Code and visual metrics for a prediction/reference pair.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
    /// Run the curation pipeline over a JSON-lines corpus.
    Curate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Near-duplicate report for a corpus.
    Dedup {
        #[arg(long)]
        input: PathBuf,
    },
    /// Reward breakdown for a prediction against a reference (`.tex` or
    /// `.png`), optionally with a reconstruction for the round-trip term.
    Reward {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        recon: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "one")]
        stage: StageArg,
    },
    /// Rollout simulation with the toy or a remote policy.
    DscSim {
        #[arg(long, default_value_t = 12)]
        targets: usize,
        #[arg(long, default_value_t = 1)]
        iterations: u64,
        #[arg(long)]
        fault_rate: Option<f64>,
        #[arg(long, value_enum, default_value = "toy")]
        policy: PolicyArg,
    },
    /// Evaluate predictions against references matched by id.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
    /// Mine the most frequent n-grams of a corpus into a sidecar file.
    MineNgrams {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
}

enum Status {
    Ok,
    RecordFailures,
}

struct Ctx {
    cfg: Config,
    out: Option<PathBuf>,
    seed: u64,
}

impl Ctx {
    fn renderer(&self) -> Result<Arc<dyn Renderer>> {
        renderer_from_config(&self.cfg)
    }

    fn backends(&self) -> Result<Backends> {
        Backends::new(self.cfg.backends.clone())
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.cfg.sandbox.render_timeout_s)
    }

    fn out_dir(&self) -> Result<Option<&Path>> {
        if let Some(dir) = &self.out {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(self.out.as_deref())
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = self.out_dir()? {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_document(path: &Path) -> Result<String> {
    let code = read(path)?;
    wrap_standalone(&code).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_config(g: &Global) -> Result<Config> {
    let mut cfg = match &g.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(p) = &g.backends {
        cfg.load_backends(p)?;
    }
    cfg.backends.apply_env_overrides()?;
    if let Some(j) = g.jobs {
        cfg.sandbox.jobs = j;
    }
    if let Some(r) = g.renderer {
        cfg.sandbox.renderer = match r {
            RendererArg::Latex => RendererKind::Latex,
            RendererArg::Sketch => RendererKind::Sketch,
        };
    }
    for w in cfg.validate()? {
        log::warn!("{w}");
    }
    Ok(cfg)
}

fn render_file(ctx: &Ctx, renderer: &dyn Renderer, path: &Path) -> Result<RenderOutcome> {
    renderer.render(&read_document(path)?, ctx.timeout(), ctx.cfg.sandbox.dpi)
}

/// Reference image from a `.png` or a TeX source.
fn reference_image(ctx: &Ctx, renderer: &dyn Renderer, path: &Path) -> Result<Option<RasterImage>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        return decode_png(&bytes, ctx.cfg.sandbox.dpi).map(Some);
    }
    Ok(render_file(ctx, renderer, path)?.usable_image().cloned())
}

fn run_command(ctx: &Ctx, command: Command) -> Result<Status> {
    let cfg = &ctx.cfg;
    match command {
        Command::Compile { file } => {
            let renderer = ctx.renderer()?;
            let out = renderer.compile(&read_document(&file)?, Duration::from_secs_f64(cfg.sandbox.validate_timeout_s))?;
            print_json(&out)?;
            Ok(if out.status.is_success() { Status::Ok } else { Status::RecordFailures })
        }
        Command::Render { file, dpi } => {
            let renderer = ctx.renderer()?;
            let out = renderer.render(&read_document(&file)?, ctx.timeout(), dpi.unwrap_or(cfg.sandbox.dpi))?;
            if let Some(img) = &out.image {
                let stem = file.file_stem().map_or_else(|| "render".into(), |s| s.to_string_lossy().into_owned());
                ctx.write(&format!("{stem}.png"), &encode_png(img))?;
            }
            print_json(&json!({
                "compile": out.compile,
                "width": out.image.as_ref().map(RasterImage::width),
                "height": out.image.as_ref().map(RasterImage::height),
                "blank": out.image.as_ref().map(RasterImage::is_constant),
            }))?;
            Ok(if out.usable_image().is_some() { Status::Ok } else { Status::RecordFailures })
        }
        Command::Score { pred, reference } => {
            let renderer = ctx.renderer()?;
            let backends = ctx.backends()?;
            let trivial = cfg.code.load_trivial()?;
            let code = code_columns(&read(&pred)?, &read(&reference)?, cfg, &trivial);
            let p = render_file(ctx, renderer.as_ref(), &pred)?;
            let r = reference_image(ctx, renderer.as_ref(), &reference)?;
            let visual = match (p.usable_image(), &r) {
                (Some(a), Some(b)) => Some(visual_columns(a, b, &backends, cfg)?),
                _ => None,
            };
            print_json(&json!({
                "pred_status": p.compile.status,
                "reference_rendered": r.is_some(),
                "code": code,
                "visual": visual,
            }))?;
            Ok(if visual.is_some() { Status::Ok } else { Status::RecordFailures })
        }
        Command::Curate { input } => {
            let records = read_corpus(&input)?;
            let renderer = ctx.renderer()?;
            let backends = ctx.backends()?;
            let out = run_pipeline(records, cfg, renderer.as_ref(), &backends)?;
            let dir = ctx.out.clone().unwrap_or_else(|| PathBuf::from("curated"));
            out.write(&dir)?;
            print_json(&json!({
                "out": dir,
                "input_records": out.manifest.input_records,
                "accepted": out.manifest.accepted,
                "reject_reasons": out.manifest.reject_reasons,
            }))?;
            Ok(Status::Ok)
        }
        Command::Dedup { input } => {
            let records = read_corpus(&input)?;
            let tokens: Vec<_> = records.iter().map(|r| code_tokens(&r.code)).collect();
            let outcome = dedup(records.iter().map(|r| r.id.as_str()).zip(tokens.iter()), cfg.dataengine.dedup());
            let text = serde_json::to_string_pretty(&outcome)?;
            ctx.write("dedup.json", format!("{text}\n").as_bytes())?;
            println!("{text}");
            Ok(Status::Ok)
        }
        Command::Reward { pred, reference, recon, stage } => {
            let renderer = ctx.renderer()?;
            let backends = ctx.backends()?;
            let stage = match stage {
                StageArg::One => Stage::One,
                StageArg::Two => Stage::Two,
            };
            let rc = cfg.reward_for(stage);
            let out = render_file(ctx, renderer.as_ref(), &pred)?;
            let reference_img = reference_image(ctx, renderer.as_ref(), &reference)?
                .ok_or_else(|| Error::RenderFailed(format!("{}: reference has no visible content", reference.display())))?;
            let (status, visual) = match out.usable_image() {
                Some(img) => {
                    let v = visual_metrics(img, &reference_img, &backends, &cfg.metrics, rc.tau_hold, rc.tau_temp)?;
                    (out.compile.status, Some(v.scores))
                }
                // A blank page is a failed render.
                None if out.compile.status == CompileStatus::Success => (CompileStatus::CompileError, None),
                None => (out.compile.status, None),
            };
            let breakdown = match stage {
                Stage::One => stage1_total(status, visual.as_ref(), rc),
                Stage::Two => {
                    let code = match &recon {
                        Some(path) => {
                            let trivial = cfg.code.load_trivial()?;
                            Some(
                                code_consistency(&read(&pred)?, &read(path)?, rc.gamma, rc.tau_ted, &cfg.code.eed, &trivial)
                                    .map_err(|e| Error::Config(e.to_string()))?,
                            )
                        }
                        None => None,
                    };
                    stage2_total(status, visual.as_ref(), code.as_ref(), rc)
                }
            }
            .map_err(|e| Error::Config(e.to_string()))?;
            print_json(&json!({"status": status, "visual": visual, "breakdown": breakdown}))?;
            Ok(Status::Ok)
        }
        Command::DscSim { targets, iterations, fault_rate, policy } => {
            let renderer = ctx.renderer()?;
            let backends = ctx.backends()?;
            let set = toy_targets(renderer.as_ref(), cfg, targets)?;
            let policy: Box<dyn Policy + '_> = match policy {
                PolicyArg::Toy => Box::new(ToyPolicy::new(
                    ctx.seed,
                    fault_rate.unwrap_or(cfg.dsc.fault_rate),
                    renderer.as_ref(),
                    cfg,
                )?),
                PolicyArg::Remote => Box::new(RemotePolicy::new(
                    &backends,
                    SamplingParams { temperature: cfg.dsc.temperature, top_p: cfg.dsc.top_p, max_length: cfg.dsc.max_length },
                )),
            };
            let mut traces = Vec::new();
            for it in 0..iterations {
                traces.extend(run_iteration(&set, policy.as_ref(), renderer.as_ref(), &backends, cfg, it)?);
            }
            let report = loop_report(&traces)?;
            if let Some(dir) = ctx.out_dir()? {
                write_jsonl(&dir.join("traces.jsonl"), &traces)?;
            }
            ctx.write("report.json", format!("{}\n", serde_json::to_string_pretty(&report)?).as_bytes())?;
            eprint!("{}", report.table());
            print_json(&report)?;
            Ok(if report.policy_errors > 0 { Status::RecordFailures } else { Status::Ok })
        }
        Command::Eval { pred, reference } => {
            let preds = read_corpus(&pred)?;
            let refs = read_corpus(&reference)?;
            let renderer = ctx.renderer()?;
            let backends = ctx.backends()?;
            let ref_renderer: Arc<dyn Renderer> = match cfg.cache_dir() {
                Some(dir) => Arc::new(CachedRenderer::new(renderer.clone(), dir.join("renders"))?),
                None => renderer.clone(),
            };
            let report = evaluate(&preds, &refs, cfg, renderer.as_ref(), ref_renderer.as_ref(), &backends)?;
            ctx.write("report.json", format!("{}\n", serde_json::to_string_pretty(&report)?).as_bytes())?;
            ctx.write("report.txt", report.table().as_bytes())?;
            eprint!("{}", report.table());
            print_json(&report)?;
            Ok(if report.failures() > 0 || !report.excluded.is_empty() { Status::RecordFailures } else { Status::Ok })
        }
        Command::MineNgrams { input, k } => {
            let records = read_corpus(&input)?;
            let tokens: Vec<_> = records.iter().map(|r| code_tokens(&r.code)).collect();
            let snapshot = input.file_name().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            let set = mine_trivial_ngrams(&tokens, k.unwrap_or(cfg.code.trivial_k), cfg.code.bleu_max_order, &snapshot)
                .map_err(|e| Error::Config(e.to_string()))?;
            let text = serde_json::to_string_pretty(&set)?;
            ctx.write("trivial_ngrams.json", format!("{text}\n").as_bytes())?;
            println!("{text}");
            Ok(Status::Ok)
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = load_config(&cli.global).and_then(|cfg| {
        let ctx = Ctx { cfg, out: cli.global.out.clone(), seed: cli.global.seed };
        run_command(&ctx, cli.command)
    });
    match result {
        Ok(Status::Ok) => 0,
        Ok(Status::RecordFailures) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Metric(_) | Error::RenderFailed(_) => 1,
                _ => 2,
            }
        }
    }
}
