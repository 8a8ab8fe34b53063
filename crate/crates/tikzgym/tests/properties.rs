//! Invariants of evaluation aggregation and the fidelity gate.

use proptest::prelude::*;
use tikzgym::dscloop::{gate_entry_count, Rollout, RolloutTrace};
use tikzgym::eval::{aggregate, is_distance, CodeColumns, Columns, EvalRecord, Mode, VisualColumns};
use tikzgym_core::reward::{CompileStatus, GroupStats, RewardBreakdown};

fn record(visual: Option<(f64, f64, f64)>, code: (f64, f64, f64)) -> EvalRecord {
    EvalRecord {
        id: "r".into(),
        status: if visual.is_some() { CompileStatus::Success } else { CompileStatus::CompileError },
        blank: false,
        visual: visual.map(|(sim, ssim, d)| VisualColumns { cosine: sim, ssim, d_perceptual: d, s_struct: (-d).exp() }),
        code: CodeColumns { d_eed: code.0, s_ted: code.1, crystal_bleu: code.2 },
        error: None,
    }
}

fn rollout(compiled: bool, r_vis: f64) -> Rollout {
    Rollout {
        code: String::new(),
        status: if compiled { CompileStatus::Success } else { CompileStatus::CompileError },
        blank: false,
        visual: None,
        reconstructions: None,
        code_scores: None,
        error: None,
        breakdown: RewardBreakdown {
            compiled,
            r_exec: 0.0,
            s_sem: 0.0,
            s_struct: 0.0,
            r_vis,
            gate_open: false,
            s_code: None,
            pending: false,
            total: 0.0,
        },
    }
}

fn unit() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

proptest! {
    #[test]
    fn all_mode_is_never_better_than_success(
        rows in prop::collection::vec(
            (prop::option::weighted(0.7, (unit(), unit(), unit())), (0.0..3.0f64, unit(), unit())),
            1..16,
        )
    ) {
        let records: Vec<EvalRecord> = rows.into_iter().map(|(v, c)| record(v, c)).collect();
        let columns = Columns::default();
        let all = aggregate(&records, Mode::All, &columns).unwrap();
        if let Some(ok) = aggregate(&records, Mode::Success, &columns) {
            for (k, v) in &all {
                if is_distance(k) {
                    prop_assert!(*v >= ok[k] - 1e-12, "{k}: {v} < {}", ok[k]);
                } else {
                    prop_assert!(*v <= ok[k] + 1e-12, "{k}: {v} > {}", ok[k]);
                }
            }
        } else {
            prop_assert!(records.iter().all(|r| !r.succeeded()));
        }
    }

    #[test]
    fn gate_entries_fall_as_the_threshold_rises(
        groups in prop::collection::vec(prop::collection::vec((any::<bool>(), unit()), 1..8), 1..6),
        lo in unit(),
        hi in unit(),
    ) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let traces: Vec<RolloutTrace> = groups
            .into_iter()
            .enumerate()
            .map(|(i, g)| RolloutTrace {
                image_id: format!("t{i}"),
                iteration: 0,
                policy_error: None,
                rollouts: g.into_iter().map(|(c, r)| rollout(c, r)).collect(),
                group: GroupStats { rewards: vec![], mean: 0.0, std: 0.0, advantages: vec![] },
            })
            .collect();
        prop_assert!(gate_entry_count(&traces, lo) >= gate_entry_count(&traces, hi));
    }
}
