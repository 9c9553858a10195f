mod common;

use std::fs;
use std::path::Path;

use advpad_core::candidates::read_store;
use advpad_core::checkpoint::file_hash;
use advpad_core::pad::PadModel;
use advpad_core::pipeline::{
    run, run_ablation_no_advgen, run_ablation_no_params, run_reports, RunManifest, RunModeKind, RunOptions, StageStatus,
    AA_EVAL, STAGES,
};
use advpad_core::selection::read_selection;
use advpad_core::Error;

fn resume() -> RunOptions {
    RunOptions { resume: true, stop_after: None }
}

fn stage_names(m: &RunManifest) -> Vec<&str> {
    m.stages.iter().map(|s| s.name.as_str()).collect()
}

#[test]
fn full_run_then_resume_and_integrity_checks() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::synth(&dir.path().join("data"), 0);
    let mut cfg = common::quick_config(&manifest);
    cfg.selection.mse_threshold = 1.0;
    let out = dir.path().join("run");

    let first = run(&cfg, &out, RunOptions::default()).unwrap();
    assert_eq!(stage_names(&first), STAGES.to_vec());
    assert!(first.stages.iter().all(|s| s.status == StageStatus::Completed));
    assert_eq!(RunManifest::load(&out.join("manifest.json")).unwrap(), first);

    // Stage inputs chain to upstream outputs.
    let f_out = &first.stage("train_pad").unwrap().outputs["checkpoints/standard_pad.ckpt"];
    assert_eq!(&first.stage("generate").unwrap().inputs["checkpoints/standard_pad.ckpt"], f_out);
    assert_eq!(&first.stage("evaluate").unwrap().inputs["checkpoints/standard_pad.ckpt"], f_out);

    // Augmentation accounting and post-hoc selection invariants.
    let picked = read_selection(&out.join("selection/manifest.csv")).unwrap();
    let store = read_store(&out.join("candidates"), false, 1).unwrap();
    assert_eq!(store.len(), cfg_train_len(&out));
    for p in &picked {
        let c = store.iter().find(|c| c.id == p.id).unwrap();
        assert!(c.mse < cfg.selection.mse_threshold && c.adversarial());
    }
    let acct: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("reports/augmentation.json")).unwrap()).unwrap();
    assert_eq!(acct["total"].as_u64().unwrap() as usize, acct["originals"].as_u64().unwrap() as usize + picked.len());
    assert!(!picked.is_empty());

    // A second run without resume refuses to touch the directory.
    assert!(matches!(run(&cfg, &out, RunOptions::default()), Err(Error::Config(_))));

    // Deleting the final report re-runs only evaluation.
    fs::remove_file(out.join(AA_EVAL)).unwrap();
    let second = run(&cfg, &out, resume()).unwrap();
    assert_eq!(&second.stages[..5], &first.stages[..5]);
    assert_eq!(second.artifact_hashes(), first.artifact_hashes());
    assert!(out.join(AA_EVAL).exists());

    // A tampered artifact is an integrity error naming the stage.
    let sel = out.join("selection/manifest.csv");
    let original = fs::read_to_string(&sel).unwrap();
    fs::write(&sel, format!("{original}\n")).unwrap();
    match run(&cfg, &out, resume()) {
        Err(Error::Stage { stage, source }) => {
            assert_eq!(stage, "select");
            assert!(matches!(*source, Error::Integrity(_)));
        }
        other => panic!("expected integrity failure, got {other:?}"),
    }
    fs::write(&sel, original).unwrap();

    // Changed stage configuration is an integrity error, not a silent re-run.
    let mut changed = cfg.clone();
    changed.selection.k += 1;
    match run(&changed, &out, resume()) {
        Err(Error::Stage { stage, source }) => {
            assert_eq!(stage, "select");
            assert!(matches!(*source, Error::Integrity(_)));
        }
        other => panic!("expected integrity failure, got {other:?}"),
    }

    // Ablations reuse the frozen classifier and emit comparable reports.
    let no_advgen = run_ablation_no_advgen(&cfg, &out, &dir.path().join("no_advgen")).unwrap();
    assert_eq!(no_advgen.mode, RunModeKind::AblationNoAdvgen);
    assert_eq!(no_advgen.stage("train_advgen").unwrap().status, StageStatus::Skipped);
    let f_hash = file_hash(&out.join("checkpoints/standard_pad.ckpt")).unwrap();
    assert_eq!(file_hash(&dir.path().join("no_advgen/checkpoints/standard_pad.ckpt")).unwrap(), f_hash);
    let cands = read_store(&dir.path().join("no_advgen/candidates"), false, 1).unwrap();
    let reference = read_store(&out.join("candidates"), false, 1).unwrap();
    assert!(cands.iter().all(|c| c.mse == 0.0));
    for c in &cands {
        let r = reference.iter().find(|r| r.source_id == c.source_id).unwrap();
        assert_eq!(c.t, r.t, "transform-only candidates replay the logged transforms");
    }
    let yield_report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("no_advgen/reports/yield.json")).unwrap()).unwrap();
    assert!(yield_report["adversarial_percent"]["bonafide"].is_number());
    assert!(yield_report["adversarial_percent"]["attack"].is_number());

    let no_params = run_ablation_no_params(&cfg, Some(&out), &dir.path().join("no_params")).unwrap();
    assert_eq!(no_params.mode, RunModeKind::AblationNoParams);
    let g = advpad_core::advgen::CaeModel::load(&dir.path().join("no_params/checkpoints/advgen.ckpt")).unwrap();
    assert_eq!(g.input_channels(), 1);

    let (full_std, full_aa) = run_reports(&out).unwrap();
    for d in [&no_advgen, &no_params] {
        assert_eq!(d.completed(), 6 - usize::from(d.mode == RunModeKind::AblationNoAdvgen));
    }
    for run_dir in ["no_advgen", "no_params"] {
        let (s, a) = run_reports(&dir.path().join(run_dir)).unwrap();
        let domains = |r: &advpad_core::evaluation::EvalReport| r.rows.iter().map(|x| x.domain.clone()).collect::<Vec<_>>();
        assert_eq!(domains(&s), domains(&full_std));
        assert_eq!(domains(&a), domains(&full_aa));
        assert_eq!(s, full_std, "shared classifier gives the same standard report");
    }
}

fn cfg_train_len(out: &Path) -> usize {
    let acct: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("reports/augmentation.json")).unwrap()).unwrap();
    acct["originals"].as_u64().unwrap() as usize
}

#[test]
fn stepwise_runs_match_a_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::synth(&dir.path().join("data"), 0);
    let cfg = common::quick_config(&manifest);
    let stepped = dir.path().join("stepped");
    for (i, stage) in STAGES.iter().enumerate() {
        let m = run(&cfg, &stepped, RunOptions { resume: true, stop_after: Some(stage) }).unwrap();
        assert_eq!(m.stages.len(), i + 1);
    }
    let whole = run(&cfg, &dir.path().join("whole"), RunOptions::default()).unwrap();
    let stepped_m = RunManifest::load(&stepped.join("manifest.json")).unwrap();
    assert_eq!(stepped_m.artifact_hashes(), whole.artifact_hashes());
    let f = PadModel::load(&stepped.join("checkpoints/standard_pad.ckpt")).unwrap();
    assert_eq!(f.seed, PadModel::load(&dir.path().join("whole/checkpoints/standard_pad.ckpt")).unwrap().seed);
}

#[test]
fn missing_reference_for_transform_only_ablation_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::synth(&dir.path().join("data"), 0);
    let mut cfg = common::quick_config(&manifest);
    cfg.mode = RunModeKind::AblationNoAdvgen;
    assert!(run(&cfg, &dir.path().join("x"), RunOptions::default()).is_err());
}
