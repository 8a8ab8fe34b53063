//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tikzgym::backends::Backends;
use tikzgym::config::RendererKind;
use tikzgym::corpus::{read_corpus, SampleRecord};
use tikzgym::dscloop::{gate_entry_count, loop_report, run_iteration, toy_targets, Rollout, RolloutTrace, ToyPolicy};
use tikzgym::eval::{aggregate, evaluate, is_distance, CodeColumns, Columns, EvalRecord, Mode, VisualColumns};
use tikzgym::pipeline::run_pipeline;
use tikzgym::render::{renderer_from_config, SketchRenderer};
use tikzgym::Config;
use tikzgym_core::codemetrics::{
    crystal_bleu_tokens, eed_tokens, mine_trivial_ngrams, ted_from_distance, EedCosts,
};
use tikzgym_core::imgmetrics::{hinge_semantic, struct_from_distance, VisualScores};
use tikzgym_core::judge::JudgeScores;
use tikzgym_core::reward::{
    clipped_surrogate, exec_reward, group_advantages, stage1_total, stage2_total, CompileStatus, GroupStats,
    GrpoConfig, RewardBreakdown, RewardConfig,
};
use tikzgym_core::texlex::lex;
use tikzgym_core::CodeScores;

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn eq(name: &str, got: f64, want: f64) -> Check {
    ensure!(got == want, "{name}: got {got}, expected {want}");
    Ok(())
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Check {
    ensure!((got - want).abs() <= tol, "{name}: got {got}, expected {want} ± {tol}");
    Ok(())
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mini").join(name)
}

// ------------------------------------------------------------------ 1

fn reward_constants() -> Check {
    let cfg = Config::default();
    let (s1, s2) = (&cfg.reward.stage1, &cfg.reward.stage2);
    eq("stage1 success", exec_reward(CompileStatus::Success, s1).map_err(|e| e.to_string())?, 0.1)?;
    eq("stage1 failure", exec_reward(CompileStatus::CompileError, s1).map_err(|e| e.to_string())?, -0.6)?;
    eq("stage2 success", exec_reward(CompileStatus::Success, s2).map_err(|e| e.to_string())?, 0.05)?;
    eq("stage2 failure", exec_reward(CompileStatus::Timeout, s2).map_err(|e| e.to_string())?, -0.5)?;
    for (tag, r) in [("stage1", s1), ("stage2", s2)] {
        eq(&format!("{tag} tau_hold"), r.tau_hold, 0.80)?;
        eq(&format!("{tag} lambda_sem"), r.lambda_sem, 0.6)?;
        eq(&format!("{tag} lambda_str"), r.lambda_str, 0.4)?;
        eq(&format!("{tag} tau_temp"), r.tau_temp, 0.5)?;
        eq(&format!("{tag} tau_gate"), r.tau_gate, 0.6)?;
        eq(&format!("{tag} lambda_code"), r.lambda_code, 0.15)?;
        eq(&format!("{tag} gamma"), r.gamma, 0.4)?;
        eq(&format!("{tag} ted weight"), 1.0 - r.gamma, 0.6)?;
        eq(&format!("{tag} tau_ted"), r.tau_ted, 0.4)?;
    }
    eq("stage2 lambda_vis", s2.lambda_vis, 0.80)?;
    eq("code.gamma", cfg.code.gamma, 0.4)?;
    eq("code.tau_ted", cfg.code.tau_ted, 0.4)?;
    ensure!(cfg.code.trivial_k == 500, "trivial_k = {}", cfg.code.trivial_k);
    ensure!(cfg.code.bleu_max_order == 4, "bleu_max_order = {}", cfg.code.bleu_max_order);
    let d = &cfg.dataengine;
    ensure!(d.shingle_size == 50 && d.max_shared == 5, "dedup {}-gram > {}", d.shingle_size, d.max_shared);
    ensure!(d.max_tokens == 8192, "max_tokens = {}", d.max_tokens);
    eq("max_aspect_ratio", d.max_aspect_ratio, 15.0)?;
    ensure!(
        (d.gate.min_total, d.gate.correctness_above, d.gate.min_other) == (18, 2, 2),
        "judge gate {:?}",
        d.gate
    );
    eq("validate timeout", cfg.sandbox.validate_timeout_s, 10.0)?;
    eq("render timeout", cfg.sandbox.render_timeout_s, 20.0)?;
    eq("dpi", cfg.sandbox.dpi, 300.0)?;
    ensure!(*s1 == RewardConfig::stage_one() && *s2 == RewardConfig::stage_two(), "config file and built-in defaults differ");
    Ok(())
}

// ------------------------------------------------------------------ 2

fn hinge_and_kernels() -> Check {
    let e1 = (-1.0f64).exp();
    close("hinge(0.9, 0.8)", hinge_semantic(0.9, 0.8).map_err(|e| e.to_string())?, 0.5, 1e-12)?;
    close("struct(0.5, 0.5)", struct_from_distance(0.5, 0.5), e1, 1e-12)?;
    close("ted(0.4, 0.4)", ted_from_distance(0.4, 0.4), e1, 1e-12)
}

// ------------------------------------------------------------------ 3

fn grpo_math() -> Check {
    let cfg = GrpoConfig { group_size: 3, ..GrpoConfig::default() };
    let g = group_advantages(&[1.0, 0.5, 0.0], &cfg).map_err(|e| e.to_string())?;
    for (got, want) in g.advantages.iter().zip([1.2247, 0.0, -1.2247]) {
        close("advantage", *got, want, 1e-4)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let n = rng.random_range(2..=16);
        // A coarse grid makes tied and degenerate groups common.
        let rewards: Vec<f64> = if rng.random_bool(0.1) {
            vec![rng.random_range(-1.0..1.0); n]
        } else {
            (0..n).map(|_| (rng.random_range(-4i32..=4) as f64) * 0.25 + rng.random_range(0.0..0.01)).collect()
        };
        let cfg = GrpoConfig { group_size: n, ..GrpoConfig::default() };
        let g = group_advantages(&rewards, &cfg).map_err(|e| e.to_string())?;
        let m = g.advantages.iter().sum::<f64>() / n as f64;
        ensure!(m.abs() <= 1e-9, "mean advantage {m} for {rewards:?}");
        let degenerate = rewards.iter().all(|r| *r == rewards[0]);
        if degenerate {
            ensure!(g.advantages.iter().all(|a| *a == 0.0), "degenerate group gave {:?}", g.advantages);
        } else if g.std > cfg.std_floor {
            let sd = (g.advantages.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n as f64).sqrt();
            ensure!((sd - 1.0).abs() <= 1e-6, "advantage std {sd} for {rewards:?}");
        }
    }
    for _ in 0..100_000 {
        let ratio = rng.random_range(0.0..4.0);
        let adv = rng.random_range(-5.0..5.0);
        let eps = rng.random_range(0.0..1.0);
        let s = clipped_surrogate(ratio, adv, eps);
        ensure!(s <= ratio * adv, "surrogate {s} > {}", ratio * adv);
    }
    Ok(())
}

// ------------------------------------------------------------------ 4

fn levenshtein(a: &[u8], b: &[u8]) -> usize {
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        dp[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = dp[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            dp[i][j] = sub.min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
        }
    }
    dp[a.len()][b.len()]
}

fn eed_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let costs = EedCosts::levenshtein();
    for _ in 0..1000 {
        let a: Vec<u8> = (0..rng.random_range(0..=12)).map(|_| rng.random_range(0..5)).collect();
        let b: Vec<u8> = (0..rng.random_range(1..=12)).map(|_| rng.random_range(0..5)).collect();
        let got = eed_tokens(&a, &b, &costs);
        let want = levenshtein(&a, &b) as f64 / b.len() as f64;
        ensure!(got == want, "{a:?} vs {b:?}: {got} != {want}");
    }
    Ok(())
}

// ------------------------------------------------------------------ 5

fn fnv1a(gram: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in gram.join(" ").bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn bleu_oracle(hyp: &[&str], reference: &[&str], trivial: &[(usize, u64)]) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let mut logs = Vec::new();
    for n in 1..=4 {
        let count = |toks: &[&str]| {
            let mut m: HashMap<Vec<String>, usize> = HashMap::new();
            for w in toks.windows(n) {
                *m.entry(w.iter().map(|s| s.to_string()).collect()).or_default() += 1;
            }
            m
        };
        let (h, r) = (count(hyp), count(reference));
        let (mut num, mut den) = (0usize, 0usize);
        for (g, c) in &h {
            let refs: Vec<&str> = g.iter().map(String::as_str).collect();
            if trivial.contains(&(n, fnv1a(&refs))) {
                continue;
            }
            den += c;
            num += (*c).min(r.get(g).copied().unwrap_or(0));
        }
        if den > 0 {
            if num == 0 {
                return 0.0;
            }
            logs.push((num as f64 / den as f64).ln());
        }
    }
    if logs.is_empty() {
        return 0.0;
    }
    let bp = if hyp.len() > reference.len() { 1.0 } else { (1.0 - reference.len() as f64 / hyp.len() as f64).exp() };
    bp * (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

fn crystal_bleu_oracle() -> Check {
    const VOCAB: [&str; 20] = [
        "a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o", "p", "q", "r", "s", "t",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let doc = |rng: &mut ChaCha8Rng, max: usize| -> Vec<&str> {
        (0..rng.random_range(1..=max)).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect()
    };
    let corpus: Vec<Vec<&str>> = (0..50).map(|_| doc(&mut rng, 40)).collect();
    let streams: Vec<_> = corpus.iter().map(|d| lex(&d.join(" "))).collect();
    let k = 80;
    let mined = mine_trivial_ngrams(&streams, k, 4, "acceptance").map_err(|e| e.to_string())?;

    let mut counts: HashMap<(usize, u64), u64> = HashMap::new();
    for d in &corpus {
        for n in 1..=4 {
            for w in d.windows(n) {
                *counts.entry((n, fnv1a(w))).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<_> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0 .1.cmp(&b.0 .1)).then(a.0 .0.cmp(&b.0 .0)));
    let trivial: Vec<(usize, u64)> = ranked.into_iter().take(k).map(|(key, _)| key).collect();
    let mut sorted = trivial.clone();
    sorted.sort();
    ensure!(mined.entries().collect::<Vec<_>>() == sorted, "mined trivial set differs from the oracle's");

    for _ in 0..200 {
        let hyp = doc(&mut rng, 30);
        let reference = doc(&mut rng, 30);
        let got = crystal_bleu_tokens(&hyp, &reference, &mined);
        let want = bleu_oracle(&hyp, &reference, &trivial);
        close("crystal_bleu", got, want, 1e-9)?;
    }
    let mut identical = 0;
    while identical < 50 {
        let d = doc(&mut rng, 30);
        let nontrivial = (1..=4).any(|n| d.windows(n).any(|w| !trivial.contains(&(n, fnv1a(w)))));
        if nontrivial {
            eq("identical pair", crystal_bleu_tokens(&d, &d, &mined), 1.0)?;
            identical += 1;
        }
    }
    Ok(())
}

// ------------------------------------------------------------------ 6

fn breakdown(compiled: bool, r_vis: f64) -> RewardBreakdown {
    RewardBreakdown {
        compiled,
        r_exec: 0.0,
        s_sem: 0.0,
        s_struct: 0.0,
        r_vis,
        gate_open: false,
        s_code: None,
        pending: false,
        total: 0.0,
    }
}

fn gate_logic() -> Check {
    let cfg = RewardConfig::stage_two();
    let code = CodeScores::combine(0.0, 1.0, 1.0, cfg.gamma);
    for (r_vis, expect_open) in [(0.59, false), (0.60, false), (0.61, true)] {
        // lambda_sem + lambda_str = 1, so equal parts give r_vis exactly.
        let scores = VisualScores { s_raw: 1.0, s_sem: r_vis, s_struct: r_vis, ssim: 1.0, d_perceptual: 0.0 };
        let one = stage1_total(CompileStatus::Success, Some(&scores), &cfg).map_err(|e| e.to_string())?;
        let two = stage2_total(CompileStatus::Success, Some(&scores), Some(&code), &cfg).map_err(|e| e.to_string())?;
        ensure!(one.r_vis == r_vis, "r_vis {} != {r_vis}", one.r_vis);
        ensure!(two.gate_open == expect_open, "gate at r_vis {r_vis}: {}", two.gate_open);
        let added = two.total - one.total;
        if expect_open {
            close("code term", added, cfg.lambda_code * code.s_code, 1e-15)?;
        } else {
            eq("code term", added, 0.0)?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let group = GroupStats { rewards: vec![], mean: 0.0, std: 0.0, advantages: vec![] };
    for _ in 0..1000 {
        let rollouts = (0..rng.random_range(1..=12))
            .map(|_| Rollout {
                code: String::new(),
                status: CompileStatus::Success,
                blank: false,
                visual: None,
                reconstructions: None,
                code_scores: None,
                error: None,
                breakdown: breakdown(rng.random_bool(0.8), rng.random_range(0.0..1.0)),
            })
            .collect();
        let traces = vec![RolloutTrace { image_id: "t".into(), iteration: 0, policy_error: None, rollouts, group: group.clone() }];
        let mut taus: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
        taus.sort_by(f64::total_cmp);
        let counts: Vec<usize> = taus.iter().map(|t| gate_entry_count(&traces, *t)).collect();
        ensure!(counts.windows(2).all(|w| w[0] >= w[1]), "gate entries {counts:?} at taus {taus:?}");
    }
    Ok(())
}

// ------------------------------------------------------------------ 7

fn pipeline_end_to_end() -> Check {
    let cfg = Config::default();
    let expected: Value = serde_json::from_str(&std::fs::read_to_string(data("expected.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let run = || -> Result<(String, Vec<SampleRecord>), String> {
        let renderer = renderer_from_config(&cfg).map_err(|e| e.to_string())?;
        let records = read_corpus(&data("corpus.jsonl")).map_err(|e| e.to_string())?;
        let out = run_pipeline(records, &cfg, renderer.as_ref(), &Backends::builtin()).map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        out.write(dir.path()).map_err(|e| e.to_string())?;
        let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).map_err(|e| e.to_string())?;
        Ok((manifest, out.records))
    };
    let (first, records) = run()?;
    for r in &records {
        let e = &expected["records"][&r.id];
        let status = serde_json::to_value(r.status).map_err(|e| e.to_string())?;
        ensure!(status == e["status"], "{}: status {status}, expected {}", r.id, e["status"]);
        ensure!(
            r.reject_reason.as_deref() == e["reject_reason"].as_str(),
            "{}: reason {:?}, expected {}",
            r.id,
            r.reject_reason,
            e["reject_reason"]
        );
    }
    let m: Value = serde_json::from_str(&first).map_err(|e| e.to_string())?;
    ensure!(m["wrapped_fragments"] == expected["wrapped_fragments"], "wrapped fragments {}", m["wrapped_fragments"]);
    let repaired = m["repaired"].as_array().cloned().unwrap_or_default();
    ensure!(repaired.len() == 2, "repaired {repaired:?}");
    ensure!(repaired.iter().all(|n| n["rounds"].as_u64() == Some(1)), "repair rounds {repaired:?}");
    let (second, _) = run()?;
    ensure!(first == second, "manifest differs between reruns");
    Ok(())
}

// ------------------------------------------------------------------ 8

fn eval_aggregation() -> Check {
    let mut cfg = Config::default();
    cfg.sandbox.renderer = RendererKind::Sketch;
    let renderer = SketchRenderer::new(&cfg.sandbox, cfg.metrics.border_pt).map_err(|e| e.to_string())?;
    let pics = [
        "\\draw (0,0) circle (1);",
        "\\draw (0,0) rectangle (2,1);",
        "\\draw (0,0) -- (2,2) -- (3,0);",
        "\\fill (0,0) circle (0.3); \\draw (0,0) -- (1,1);",
    ];
    let wrap = |body: &str| format!("\\begin{{tikzpicture}}{body}\\end{{tikzpicture}}");
    let refs: Vec<SampleRecord> = pics.iter().enumerate().map(|(i, p)| SampleRecord::new(format!("r{i}"), "ref", wrap(p))).collect();
    let mut preds = refs.clone();
    preds[1].code = wrap("\\draw (0,0) rectangle (2.2,1);");
    preds[2].code = wrap("\\draw (0,0) -- (2,2) -- (3,0)");
    let backends = Backends::builtin();
    let rep = evaluate(&preds, &refs, &cfg, &renderer, &renderer, &backends).map_err(|e| e.to_string())?;
    ensure!(rep.records.len() == 4 && rep.successes == 3, "{} records, {} successes", rep.records.len(), rep.successes);
    ensure!(rep.records[2].visual.is_none(), "forced failure has visual metrics");
    let all = rep.aggregates.all.as_ref().ok_or("ALL missing")?;
    let ok = rep.aggregates.success.as_ref().ok_or("SUCCESS missing")?;
    let cols = &rep.columns;
    let pick = |v: &VisualColumns, k: &str| match k {
        "ssim" => v.ssim,
        "s_struct" => v.s_struct,
        k if k == cols.cosine => v.cosine,
        _ => v.d_perceptual,
    };
    for k in ["ssim", "s_struct", cols.cosine.as_str(), cols.d_perceptual.as_str()] {
        let penalty = if is_distance(k) { 1.0 } else { 0.0 };
        let vals: Vec<f64> = rep.records.iter().map(|r| r.visual.map_or(penalty, |v| pick(&v, k))).collect();
        let succ: Vec<f64> = rep.records.iter().filter_map(|r| r.visual.map(|v| pick(&v, k))).collect();
        eq(&format!("ALL {k}"), all[k], vals.iter().sum::<f64>() / 4.0)?;
        eq(&format!("SUCCESS {k}"), ok[k], succ.iter().sum::<f64>() / 3.0)?;
    }

    let columns = Columns::default();
    let rec = |ok: Option<f64>| EvalRecord {
        id: "x".into(),
        status: if ok.is_some() { CompileStatus::Success } else { CompileStatus::CompileError },
        blank: false,
        visual: ok.map(|s| VisualColumns { cosine: s, ssim: s, d_perceptual: 1.0 - s, s_struct: s }),
        code: CodeColumns { d_eed: 0.3, s_ted: 0.5, crystal_bleu: 0.5 },
        error: None,
    };
    let two = [rec(None), rec(Some(1.0))];
    let (a, s) = (aggregate(&two, Mode::All, &columns).unwrap(), aggregate(&two, Mode::Success, &columns).unwrap());
    eq("example ALL ssim", a["ssim"], 0.5)?;
    eq("example SUCCESS ssim", s["ssim"], 1.0)?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let n = rng.random_range(1..=12);
        let records: Vec<EvalRecord> = (0..n)
            .map(|_| {
                let mut r = rec(rng.random_bool(0.7).then(|| rng.random_range(0.0..=1.0)));
                if let Some(v) = r.visual.as_mut() {
                    v.cosine = rng.random_range(0.0..=1.0);
                    v.d_perceptual = rng.random_range(0.0..=1.0);
                }
                r.code = CodeColumns { d_eed: rng.random_range(0.0..3.0), s_ted: rng.random_range(0.0..=1.0), crystal_bleu: rng.random_range(0.0..=1.0) };
                r
            })
            .collect();
        let all = aggregate(&records, Mode::All, &columns).ok_or("ALL missing")?;
        let Some(ok) = aggregate(&records, Mode::Success, &columns) else {
            continue;
        };
        for (k, v) in &all {
            let s = ok[k];
            if is_distance(k) {
                ensure!(*v >= s - 1e-12, "{k}: ALL {v} < SUCCESS {s}");
            } else {
                ensure!(*v <= s + 1e-12, "{k}: ALL {v} > SUCCESS {s}");
            }
        }
    }
    Ok(())
}

// ------------------------------------------------------------------ 9

fn dsc_simulator() -> Check {
    let mut cfg = Config::default();
    cfg.sandbox.renderer = RendererKind::Sketch;
    let renderer = SketchRenderer::new(&cfg.sandbox, cfg.metrics.border_pt).map_err(|e| e.to_string())?;
    let backends = Backends::builtin();
    let targets = toy_targets(&renderer, &cfg, 12).map_err(|e| e.to_string())?;
    let simulate = |seed: u64, fault: f64| -> Result<Vec<RolloutTrace>, String> {
        let policy = ToyPolicy::new(seed, fault, &renderer, &cfg).map_err(|e| e.to_string())?;
        run_iteration(&targets, &policy, &renderer, &backends, &cfg, 0).map_err(|e| e.to_string())
    };

    let clean = simulate(1, 0.0)?;
    let report = loop_report(&clean).map_err(|e| e.to_string())?;
    eq("compile rate at fault 0", report.compile_rate, 1.0)?;
    for t in &clean {
        ensure!(t.rollouts.len() == cfg.grpo.group_size, "group of {}", t.rollouts.len());
        let m = t.group.advantages.iter().sum::<f64>() / t.group.advantages.len() as f64;
        ensure!(m.abs() <= 1e-9, "{}: mean advantage {m}", t.image_id);
    }

    let broken = simulate(1, 1.0)?;
    let alpha = cfg.reward.stage2.alpha_minus;
    for r in broken.iter().flat_map(|t| &t.rollouts) {
        eq("total at fault 1", r.breakdown.total, alpha)?;
    }

    let a = serde_json::to_string(&simulate(9, cfg.dsc.fault_rate)?).map_err(|e| e.to_string())?;
    let b = serde_json::to_string(&simulate(9, cfg.dsc.fault_rate)?).map_err(|e| e.to_string())?;
    ensure!(a == b, "traces differ for the same seed");
    Ok(())
}

// ------------------------------------------------------------------ 10

fn judge_schema() -> Check {
    let keys = ["correctness", "layout_precision", "readability", "scientific_plausibility", "visual_complexity"];
    let obj = |v: [i64; 5], total: i64| {
        let mut s = String::from("{");
        for (k, x) in keys.iter().zip(v) {
            s.push_str(&format!("\"{k}\": {x}, "));
        }
        s.push_str(&format!("\"total_score\": {total}}}"));
        s
    };
    let sum = |v: [i64; 5]| v.iter().sum::<i64>();
    let mut cases: Vec<(String, bool)> = Vec::new();

    // Accepted: valid objects, optionally after reasoning lines.
    for v in [[5, 5, 5, 5, 5], [0, 0, 0, 0, 0], [3, 4, 2, 5, 1], [1, 1, 1, 1, 1], [4, 4, 4, 4, 3], [2, 3, 4, 5, 0], [5, 0, 5, 0, 5]] {
        cases.push((obj(v, sum(v)), true));
        cases.push((format!("The layout is tidy.\nScores follow.\n{}", obj(v, sum(v))), true));
    }
    cases.push((format!("{}\n\n", obj([3, 3, 3, 3, 3], 15)), true));
    cases.push(("{\"total_score\": 10, \"visual_complexity\": 2, \"readability\": 2, \"correctness\": 2, \"scientific_plausibility\": 2, \"layout_precision\": 2}".into(), true));

    // Range violations.
    for v in [[6, 5, 5, 5, 5], [5, 9, 0, 0, 0], [-1, 3, 3, 3, 3], [3, 3, 3, 3, 7], [0, 0, 0, 0, 10], [5, 5, 5, 6, 5]] {
        cases.push((obj(v, sum(v)), false));
    }
    cases.push(("{\"correctness\": 2.5, \"layout_precision\": 3, \"readability\": 3, \"scientific_plausibility\": 3, \"visual_complexity\": 3, \"total_score\": 14.5}".into(), false));
    cases.push(("{\"correctness\": \"4\", \"layout_precision\": 3, \"readability\": 3, \"scientific_plausibility\": 3, \"visual_complexity\": 3, \"total_score\": 16}".into(), false));

    // Sum violations.
    for (v, t) in [([5, 5, 5, 5, 5], 24), ([0, 0, 0, 0, 0], 1), ([3, 4, 2, 5, 1], 16), ([1, 1, 1, 1, 1], 25), ([4, 4, 4, 4, 3], 18), ([2, 2, 2, 2, 2], 0), ([3, 3, 3, 3, 3], 16)] {
        cases.push((obj(v, t), false));
    }

    // Trailing prose or other text after the object.
    for tail in ["Hope this helps!", "Note: readability could improve.", "}", "```", "total: 15"] {
        cases.push((format!("{}\n{tail}", obj([3, 3, 3, 3, 3], 15)), false));
    }
    cases.push((format!("{} done", obj([3, 3, 3, 3, 3], 15)), false));

    // Fences, missing and extra keys, malformed replies.
    cases.push((format!("```json\n{}\n```", obj([3, 3, 3, 3, 3], 15)), false));
    cases.push((format!("```{}```", obj([3, 3, 3, 3, 3], 15)), false));
    cases.push(("{\"correctness\": 3, \"layout_precision\": 3, \"readability\": 3, \"scientific_plausibility\": 3, \"total_score\": 12}".into(), false));
    cases.push(("{\"correctness\": 3, \"layout_precision\": 3, \"readability\": 3, \"scientific_plausibility\": 3, \"visual_complexity\": 3}".into(), false));
    cases.push(("{\"correctness\": 3, \"layout_precision\": 3, \"readability\": 3, \"scientific_plausibility\": 3, \"visual_complexity\": 3, \"total_score\": 15, \"comment\": \"ok\"}".into(), false));
    cases.push(("{\"correctness\": 3, \"layout\": 3, \"readability\": 3, \"scientific_plausibility\": 3, \"visual_complexity\": 3, \"total_score\": 15}".into(), false));
    cases.push((String::new(), false));
    cases.push(("   \n  \n".into(), false));
    cases.push(("[3, 3, 3, 3, 3, 15]".into(), false));
    cases.push(("correctness: 3, layout_precision: 3".into(), false));
    cases.push((format!("{{\"scores\": {}}}", obj([3, 3, 3, 3, 3], 15)), false));
    cases.push(("{\"correctness\": 3, \"layout_precision\": 3, \"readability\": 3, \"scientific_plausibility\": 3, \"visual_complexity\": 3, \"total_score\": null}".into(), false));
    cases.push((format!("{}\n{}", obj([3, 3, 3, 3, 3], 15), obj([3, 3, 3, 3, 9], 15)), false));

    ensure!(cases.len() == 50, "{} scripted replies", cases.len());
    for (reply, accept) in &cases {
        let got = JudgeScores::parse_reply(reply);
        ensure!(got.is_ok() == *accept, "reply {reply:?}: expected {}, got {got:?}", if *accept { "accept" } else { "reject" });
    }
    Ok(())
}

// ------------------------------------------------------------------ main

fn main() {
    let criteria: [(&str, Duration, fn() -> Check); 10] = [
        ("reward-constant fidelity", Duration::from_secs(1), reward_constants),
        ("hinge/kernel arithmetic", Duration::from_secs(1), hinge_and_kernels),
        ("GRPO math", Duration::from_secs(10), grpo_math),
        ("EED oracle equivalence", Duration::from_secs(30), eed_oracle),
        ("CrystalBLEU oracle", Duration::from_secs(30), crystal_bleu_oracle),
        ("gate logic", Duration::from_secs(5), gate_logic),
        ("pipeline end-to-end (LaTeX toolchain)", Duration::from_secs(180), pipeline_end_to_end),
        ("evaluation aggregation", Duration::from_secs(5), eval_aggregation),
        ("DSC simulator (sketch renderer)", Duration::from_secs(5), dsc_simulator),
        ("judge schema", Duration::from_secs(1), judge_schema),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = result.and_then(|()| {
            if elapsed <= *budget {
                Ok(())
            } else {
                Err(format!("took {elapsed:.2?}, budget {budget:?}"))
            }
        });
        match result {
            Ok(()) => println!("PASS {:>2} {name} ({elapsed:.2?})", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({elapsed:.2?}): {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

