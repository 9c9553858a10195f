//! End-to-end orchestration with hash-stamped, resumable stages.

mod config;
mod modes;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{AblationConfig, DataConfig, ExperimentConfig, RunModeKind, SCHEMA_VERSION};
pub use modes::{FullMode, ModeRegistry, NoAdvgenMode, NoParamsMode, RunMode};

use crate::advgen::CaeModel;
use crate::candidates::{self, adversarial_yield, SourceContext};
use crate::checkpoint::{bytes_hash, config_hash, file_hash};
use crate::dataset::{holdout_validation, load_manifest, load_records, ImageRecord, Label, Split};
use crate::embedding::pretrain_rotation;
use crate::error::{config as config_err, Error, Result};
use crate::evaluation::{compare, evaluate, roc_points, write_roc_csv, EvalReport};
use crate::pad::{train_standard, PadModel, TrainReport};
use crate::pixels::Image;
use crate::seed;
use crate::selection::{self, filter, mse_histogram, pick, Picked};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const CANDIDATE_DIR: &str = "candidates";
pub const SELECTION_DIR: &str = "selection";
pub const REPORT_DIR: &str = "reports";
pub const PLOT_DIR: &str = "plots";

pub const STAGES: [&str; 6] = ["train_pad", "train_advgen", "generate", "select", "train_aapad", "evaluate"];

pub const F_CKPT: &str = "checkpoints/standard_pad.ckpt";
pub const F_REPORT: &str = "reports/standard_pad_train.json";
pub const G_CKPT: &str = "checkpoints/advgen.ckpt";
pub const G_REPORT: &str = "reports/advgen_train.json";
pub const CAND_MANIFEST: &str = "candidates/manifest.csv";
pub const CAND_IMAGES: &str = "candidates/images";
pub const YIELD_REPORT: &str = "reports/yield.json";
pub const EMBEDDER_CKPT: &str = "checkpoints/embedder.ckpt";
pub const HIST_TABLE: &str = "reports/mse_histogram.txt";
pub const HIST_PLOT: &str = "plots/mse_histogram.png";
pub const SELECTION_MANIFEST: &str = "selection/manifest.csv";
pub const SELECTION_REPORT: &str = "reports/selection.json";
pub const AA_CKPT: &str = "checkpoints/aa_pad.ckpt";
pub const AA_REPORT: &str = "reports/aa_pad_train.json";
pub const AUGMENT_REPORT: &str = "reports/augmentation.json";
pub const COMPARISON: &str = "reports/comparison.txt";
pub const STANDARD_EVAL: &str = "reports/eval_standard_pad.json";
pub const AA_EVAL: &str = "reports/eval_aa_pad.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub mode: RunModeKind,
    pub seed: u64,
    pub config_hash: String,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn completed(&self) -> usize {
        self.stages.iter().filter(|s| s.status == StageStatus::Completed).count()
    }

    /// Every output path with its hash, across stages.
    pub fn artifact_hashes(&self) -> BTreeMap<String, String> {
        self.stages.iter().flat_map(|s| s.outputs.clone()).collect()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub resume: bool,
    /// Stop once this stage is done; later stages stay unrecorded.
    pub stop_after: Option<&'static str>,
}

/// Hash of a file, or of every file under a directory in sorted relative-path order.
pub fn path_hash(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut files = vec![];
        collect_files(path, path, &mut files)?;
        files.sort();
        let mut acc = String::new();
        for rel in files {
            acc.push_str(&rel);
            acc.push(':');
            acc.push_str(&file_hash(&path.join(&rel))?);
            acc.push('\n');
        }
        Ok(bytes_hash(acc.as_bytes()))
    } else {
        file_hash(path)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

struct Data {
    train: Vec<ImageRecord>,
    val: Vec<ImageRecord>,
    tests: Vec<(String, Vec<ImageRecord>)>,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    mode: &'a dyn RunMode,
    out: PathBuf,
    data: Option<Data>,
}

impl Ctx<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn seed(&self, what: &str) -> u64 {
        seed::derive(self.cfg.seed, &[seed::tag(what)])
    }

    fn data(&mut self) -> Result<&Data> {
        if self.data.is_none() {
            self.data = Some(load_data(self.cfg)?);
        }
        Ok(self.data.as_ref().expect("just loaded"))
    }

    fn reference(&self) -> Option<&Path> {
        match self.mode.kind() {
            RunModeKind::Full => None,
            _ => self.cfg.ablation.reference_run.as_deref(),
        }
    }
}

fn load_data(cfg: &ExperimentConfig) -> Result<Data> {
    let m = load_manifest(&cfg.data.manifest)?;
    let (size, ch) = (cfg.data.image_size, cfg.data.channels);
    let d0 = cfg.data.train_domain.as_str();
    let train = load_records(&m, &m.select(Split::Train, Some(d0)), size, ch)?;
    let val = load_records(&m, &m.select(Split::Val, Some(d0)), size, ch)?;
    let (train, val) = if val.is_empty() {
        holdout_validation(train, cfg.data.val_fraction, seed::derive(cfg.seed, &[seed::tag("val-split")]))
    } else {
        (train, val)
    };
    if train.is_empty() {
        return Err(config_err(format!("no training rows for domain `{d0}`")));
    }
    let tests = cfg
        .data
        .test_domains
        .iter()
        .map(|d| Ok((d.clone(), load_records(&m, &m.select(Split::Test, Some(d)), size, ch)?)))
        .collect::<Result<_>>()?;
    Ok(Data { train, val, tests })
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

/// What a stage consumes and how it runs.
struct StagePlan {
    inputs: BTreeMap<String, String>,
    /// `None` when the stage does not apply to this mode.
    run: Option<fn(&mut Ctx) -> Result<Vec<String>>>,
}

fn plan(ctx: &Ctx, name: &str) -> Result<StagePlan> {
    let cfg = ctx.cfg;
    let mut inputs = BTreeMap::new();
    let mut file = |key: &str, path: &Path| -> Result<()> {
        let h = path_hash(path).map_err(|_| {
            Error::Integrity(format!("stage `{name}` input {} is missing", path.display()))
        })?;
        inputs.insert(key.to_string(), h);
        Ok(())
    };
    file("data_manifest", &cfg.data.manifest)?;
    let mode = cfg.mode.name();
    let (conf, run): (serde_json::Value, Option<fn(&mut Ctx) -> Result<Vec<String>>>) = match name {
        "train_pad" => {
            if let Some(r) = ctx.reference() {
                file("reference/standard_pad.ckpt", &r.join(F_CKPT))?;
            }
            (json!([cfg.seed, &cfg.data, &cfg.pad, ctx.reference().is_some()]), Some(stage_train_pad))
        }
        "train_advgen" => {
            if !ctx.mode.trains_generator() {
                (json!(mode), None)
            } else {
                file(F_CKPT, &ctx.path(F_CKPT))?;
                (json!([cfg.seed, mode, &cfg.cae, &cfg.transforms]), Some(stage_train_advgen))
            }
        }
        "generate" => {
            file(F_CKPT, &ctx.path(F_CKPT))?;
            if ctx.mode.trains_generator() {
                file(G_CKPT, &ctx.path(G_CKPT))?;
            }
            for p in ctx.mode.generate_inputs(cfg) {
                file("reference/candidates/manifest.csv", &p)?;
            }
            (json!([cfg.seed, mode, &cfg.transforms]), Some(stage_generate))
        }
        "select" => {
            file(CAND_MANIFEST, &ctx.path(CAND_MANIFEST))?;
            file(CAND_IMAGES, &ctx.path(CAND_IMAGES))?;
            (json!([cfg.seed, &cfg.selection, &cfg.embedder]), Some(stage_select))
        }
        "train_aapad" => {
            file(SELECTION_MANIFEST, &ctx.path(SELECTION_MANIFEST))?;
            file(CAND_IMAGES, &ctx.path(CAND_IMAGES))?;
            (json!([cfg.seed, cfg.aapad_config()]), Some(stage_train_aapad))
        }
        "evaluate" => {
            file(F_CKPT, &ctx.path(F_CKPT))?;
            file(AA_CKPT, &ctx.path(AA_CKPT))?;
            (json!([&cfg.eval, &cfg.data.test_domains]), Some(stage_evaluate))
        }
        other => return Err(config_err(format!("unknown stage {other}"))),
    };
    inputs.insert("config".into(), config_hash(&conf));
    Ok(StagePlan { inputs, run })
}

fn stage_train_pad(ctx: &mut Ctx) -> Result<Vec<String>> {
    fs::create_dir_all(ctx.path(CHECKPOINT_DIR))?;
    fs::create_dir_all(ctx.path(REPORT_DIR))?;
    if let Some(r) = ctx.reference().map(Path::to_path_buf) {
        // Ablations share the paired run's frozen classifier.
        fs::copy(r.join(F_CKPT), ctx.path(F_CKPT))?;
        fs::copy(r.join(F_REPORT), ctx.path(F_REPORT))?;
        return Ok(vec![F_CKPT.into(), F_REPORT.into()]);
    }
    let seed = ctx.seed("pad");
    let cfg = ctx.cfg;
    let data = ctx.data()?;
    let (model, mut report) = train_standard(&data.train, &data.val, &cfg.pad, seed)?;
    model.save(&ctx.path(F_CKPT))?;
    report.checkpoint = Some(F_CKPT.into());
    report.write(&ctx.path(F_REPORT))?;
    Ok(vec![F_CKPT.into(), F_REPORT.into()])
}

fn stage_train_advgen(ctx: &mut Ctx) -> Result<Vec<String>> {
    let f = PadModel::load(&ctx.path(F_CKPT))?;
    let before = f.weights_hash();
    let file_before = file_hash(&ctx.path(F_CKPT))?;
    let seed = ctx.seed("advgen");
    let (cfg, mode) = (ctx.cfg, ctx.mode);
    let data = ctx.data()?;
    let (cae, report) = mode.train_generator(&data.train, &f, cfg, seed)?;
    if f.weights_hash() != before || report.classifier_hash != before || file_hash(&ctx.path(F_CKPT))? != file_before {
        return Err(Error::Integrity("standard classifier changed during generator training".into()));
    }
    cae.save(&ctx.path(G_CKPT))?;
    write_json(&ctx.path(G_REPORT), &report)?;
    Ok(vec![G_CKPT.into(), G_REPORT.into()])
}

fn stage_generate(ctx: &mut Ctx) -> Result<Vec<String>> {
    let f = PadModel::load(&ctx.path(F_CKPT))?;
    let before = f.weights_hash();
    let generator = if ctx.mode.trains_generator() { Some(CaeModel::load(&ctx.path(G_CKPT))?) } else { None };
    let seed = ctx.seed("generate");
    let (cfg, mode) = (ctx.cfg, ctx.mode);
    let out_dir = ctx.path(CANDIDATE_DIR);
    let yield_path = ctx.path(YIELD_REPORT);
    let data = ctx.data()?;
    let transforms = mode.inference_transforms(&data.train, cfg, seed)?;
    let source = mode.source(generator)?;
    let cands = source.produce(&SourceContext {
        records: &data.train,
        transforms: &transforms,
        classifier: &f,
        space: &cfg.transforms,
    })?;
    if f.weights_hash() != before {
        return Err(Error::Integrity("standard classifier changed during generation".into()));
    }
    if out_dir.exists() {
        fs::remove_dir_all(&out_dir)?;
    }
    candidates::write_store(&out_dir, &cands)?;
    let counts: BTreeMap<&str, usize> =
        Label::BOTH.iter().map(|&l| (l.name(), cands.iter().filter(|c| c.label == l).count())).collect();
    write_json(
        &yield_path,
        &json!({ "mode": mode.kind().name(), "source": source.id(), "candidates": counts, "adversarial_percent": adversarial_yield(&cands) }),
    )?;
    Ok(vec![CAND_MANIFEST.into(), CAND_IMAGES.into(), YIELD_REPORT.into()])
}

fn stage_select(ctx: &mut Ctx) -> Result<Vec<String>> {
    let cfg = ctx.cfg;
    let embed_seed = ctx.seed("embedder");
    let kmeans_seed = seed::derive(cfg.seed, &[seed::tag("kmeans"), cfg.selection.seed]);
    let out = ctx.out.clone();
    let data = ctx.data()?;
    let cands = candidates::read_store(&out.join(CANDIDATE_DIR), true, cfg.data.channels)?;
    let originals: Vec<&Image> = data.train.iter().map(|r| &r.pixels).collect();
    let (embedder, curve) = pretrain_rotation(&originals, &cfg.embedder, embed_seed)?;
    embedder.save(&out.join(EMBEDDER_CKPT))?;

    let mut outputs = vec![EMBEDDER_CKPT.to_string(), SELECTION_MANIFEST.into(), SELECTION_REPORT.into()];
    if !cands.is_empty() {
        let hist = mse_histogram(&cands, cfg.selection.histogram_bins)?;
        fs::write(out.join(HIST_TABLE), hist.render_table())?;
        hist.write_plot(Some(cfg.selection.mse_threshold), &out.join(HIST_PLOT))?;
        outputs.extend([HIST_TABLE.to_string(), HIST_PLOT.to_string()]);
    }
    let filtered = filter(&cands, &cfg.selection);
    let mut warnings = filtered.warnings.clone();
    let sel_cfg = selection::SelectionConfig { seed: kmeans_seed, ..cfg.selection.clone() };
    let embed = |c: &candidates::AdversarialCandidate| {
        embedder.embed(c.image.as_ref().ok_or_else(|| Error::Selection(format!("{} has no pixels", c.id)))?)
    };
    let mut picked: Vec<Picked> = vec![];
    let mut per_class = BTreeMap::new();
    for label in Label::BOTH {
        let outcome = pick(filtered.class(label), &sel_cfg, &embed)?;
        warnings.extend(outcome.warnings);
        per_class.insert(
            label.name(),
            json!({ "filtered": filtered.class(label).len(), "selected": outcome.picked.len() }),
        );
        picked.extend(outcome.picked);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    selection::write_selection(&out.join(SELECTION_MANIFEST), &picked)?;
    write_json(
        &out.join(SELECTION_REPORT),
        &json!({
            "candidates": cands.len(),
            "mse_threshold": cfg.selection.mse_threshold,
            "k": cfg.selection.k,
            "s": cfg.selection.s,
            "per_class": per_class,
            "embedding_dim": embedder.dim(),
            "embedder_backbone": embedder.backbone_id(),
            "embedder_pretext_loss": curve,
            "warnings": warnings,
        }),
    )?;
    Ok(outputs)
}

fn stage_train_aapad(ctx: &mut Ctx) -> Result<Vec<String>> {
    let cfg = ctx.cfg;
    let seed = ctx.seed("pad");
    let out = ctx.out.clone();
    let picked = selection::read_selection(&out.join(SELECTION_MANIFEST))?;
    let wanted: BTreeMap<&str, &Picked> = picked.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut cands: Vec<_> = candidates::read_store(&out.join(CANDIDATE_DIR), false, cfg.data.channels)?
        .into_iter()
        .filter(|c| wanted.contains_key(c.id.as_str()))
        .collect();
    if cands.len() != picked.len() {
        return Err(Error::Integrity("selection manifest references unknown candidates".into()));
    }
    candidates::load_images(&out.join(CANDIDATE_DIR), &mut cands, cfg.data.channels)?;
    let data = ctx.data()?;
    let mut records = data.train.clone();
    for c in &cands {
        records.push(c.to_record()?);
    }
    let count = |l: Label| cands.iter().filter(|c| c.label == l).count();
    let accounting = json!({
        "originals": data.train.len(),
        "adversarial_bonafide": count(Label::Bonafide),
        "adversarial_attack": count(Label::Attack),
        "total": records.len(),
    });
    if records.len() != data.train.len() + cands.len() {
        return Err(Error::Integrity("augmented training set size mismatch".into()));
    }
    let (model, mut report): (PadModel, TrainReport) = train_standard(&records, &data.val, cfg.aapad_config(), seed)?;
    model.save(&out.join(AA_CKPT))?;
    report.checkpoint = Some(AA_CKPT.into());
    report.write(&out.join(AA_REPORT))?;
    write_json(&out.join(AUGMENT_REPORT), &accounting)?;
    Ok(vec![AA_CKPT.into(), AA_REPORT.into(), AUGMENT_REPORT.into()])
}

fn stage_evaluate(ctx: &mut Ctx) -> Result<Vec<String>> {
    let cfg = ctx.cfg;
    let out = ctx.out.clone();
    fs::create_dir_all(out.join(PLOT_DIR))?;
    let data = ctx.data()?;
    let mut outputs = vec![];
    let mut reports = vec![];
    for (name, ckpt, json_rel) in [("standard_pad", F_CKPT, STANDARD_EVAL), ("aa_pad", AA_CKPT, AA_EVAL)] {
        let model = PadModel::load(&out.join(ckpt))?;
        let (report, sets) = evaluate(&model, name, &data.tests, &cfg.eval)?;
        report.write_json(&out.join(json_rel))?;
        let table_rel = json_rel.replace(".json", ".txt");
        fs::write(out.join(&table_rel), report.render_table())?;
        outputs.extend([json_rel.to_string(), table_rel]);
        for set in &sets {
            let roc_rel = format!("{REPORT_DIR}/roc_{name}_{}.csv", set.domain);
            write_roc_csv(set, &out.join(&roc_rel))?;
            let plot_rel = format!("{PLOT_DIR}/roc_{name}_{}.png", set.domain);
            let pts: Vec<(f64, f64)> = roc_points(set)?.into_iter().map(|(f, t, _)| (f, t)).collect();
            crate::plot::unit_curve(&pts, &out.join(&plot_rel))?;
            outputs.extend([roc_rel, plot_rel]);
        }
        reports.push((name.to_string(), report));
    }
    fs::write(out.join(COMPARISON), compare(&reports)?.render())?;
    outputs.push(COMPARISON.into());
    Ok(outputs)
}

/// Runs (or resumes) every stage for `cfg.mode`, persisting `manifest.json` after each.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, opts: RunOptions) -> Result<RunManifest> {
    cfg.validate()?;
    let registry = ModeRegistry::default();
    let mode = registry.get(cfg.mode)?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let previous = if manifest_path.exists() {
        if !opts.resume {
            return Err(config_err(format!("{} already holds a run; pass --resume or choose another directory", out_dir.display())));
        }
        let prev = RunManifest::load(&manifest_path)?;
        if prev.mode != cfg.mode {
            return Err(Error::Integrity(format!("resuming a {} run in {} mode", prev.mode.name(), cfg.mode.name())));
        }
        Some(prev)
    } else {
        None
    };
    for d in [CHECKPOINT_DIR, CANDIDATE_DIR, SELECTION_DIR, REPORT_DIR, PLOT_DIR] {
        fs::create_dir_all(out_dir.join(d))?;
    }
    let mut manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        mode: cfg.mode,
        seed: cfg.seed,
        config_hash: config_hash(cfg),
        stages: vec![],
    };
    if let Some(stop) = opts.stop_after {
        if !STAGES.contains(&stop) {
            return Err(config_err(format!("unknown stage {stop}")));
        }
    }
    let mut ctx = Ctx { cfg, mode, out: out_dir.to_path_buf(), data: None };
    for name in STAGES {
        let wrap = |e: Error| Error::Stage { stage: name.to_string(), source: Box::new(e) };
        let plan = plan(&ctx, name).map_err(wrap)?;
        if let Some(prev) = previous.as_ref().and_then(|p| p.stage(name)) {
            if prev.inputs != plan.inputs {
                return Err(wrap(Error::Integrity("inputs changed since this stage was recorded".into())));
            }
            if outputs_intact(out_dir, prev).map_err(wrap)? {
                log::info!("stage {name}: up to date");
                manifest.stages.push(prev.clone());
                if opts.stop_after == Some(name) {
                    break;
                }
                continue;
            }
        }
        let start = Instant::now();
        let (status, outputs) = match plan.run {
            Some(f) => {
                log::info!("stage {name}: running");
                (StageStatus::Completed, f(&mut ctx).map_err(wrap)?)
            }
            None => (StageStatus::Skipped, vec![]),
        };
        let outputs = outputs
            .into_iter()
            .map(|rel| Ok((rel.clone(), path_hash(&out_dir.join(&rel))?)))
            .collect::<Result<BTreeMap<_, _>>>()
            .map_err(wrap)?;
        let note = match (name, ctx.reference()) {
            ("train_pad", Some(r)) => Some(format!("reused classifier from {}", r.display())),
            _ => None,
        };
        manifest.stages.push(StageRecord {
            name: name.into(),
            status,
            inputs: plan.inputs,
            outputs,
            seconds: start.elapsed().as_secs_f64(),
            note,
        });
        manifest.write(&manifest_path)?;
        if opts.stop_after == Some(name) {
            break;
        }
    }
    manifest.write(&manifest_path)?;
    Ok(manifest)
}

/// True when every recorded output exists with its recorded hash; false if any is missing.
fn outputs_intact(out_dir: &Path, rec: &StageRecord) -> Result<bool> {
    for (rel, hash) in &rec.outputs {
        let p = out_dir.join(rel);
        if !p.exists() {
            return Ok(false);
        }
        if &path_hash(&p)? != hash {
            return Err(Error::Integrity(format!("{rel} was modified after stage `{}` recorded it", rec.name)));
        }
    }
    Ok(true)
}

/// Ablation: candidates are the transformed originals under the reference run's logged transforms.
pub fn run_ablation_no_advgen(cfg: &ExperimentConfig, reference_run: &Path, out_dir: &Path) -> Result<RunManifest> {
    let mut c = cfg.clone();
    c.mode = RunModeKind::AblationNoAdvgen;
    c.ablation.reference_run = Some(reference_run.to_path_buf());
    run(&c, out_dir, RunOptions::default())
}

/// Ablation: generator without transform conditioning; `reference_run` supplies the frozen classifier if given.
pub fn run_ablation_no_params(cfg: &ExperimentConfig, reference_run: Option<&Path>, out_dir: &Path) -> Result<RunManifest> {
    let mut c = cfg.clone();
    c.mode = RunModeKind::AblationNoParams;
    c.ablation.reference_run = reference_run.map(Path::to_path_buf);
    run(&c, out_dir, RunOptions::default())
}

/// Loads the two evaluation reports a run wrote.
pub fn run_reports(out_dir: &Path) -> Result<(EvalReport, EvalReport)> {
    Ok((EvalReport::read_json(&out_dir.join(STANDARD_EVAL))?, EvalReport::read_json(&out_dir.join(AA_EVAL))?))
}
