use std::fs;
use std::path::{Path, PathBuf};

use advpad_core::dataset::{generate_synthetic, load_manifest, load_records, Split, SyntheticConfig};
use advpad_core::evaluation::{compare, evaluate, write_roc_csv, EvalConfig, EvalReport};
use advpad_core::pad::PadModel;
use advpad_core::pipeline::{self, ExperimentConfig, RunManifest, RunModeKind, RunOptions};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "advpad", version, about = "Adversarial augmentation for cross-domain presentation attack detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic two-domain dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML file overriding the default synthetic layout.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the standard classifier F.
    TrainPad(StageArgs),
    /// Train the conditioned generator against the frozen F.
    TrainAdvgen(StageArgs),
    /// Produce one candidate per training image.
    Generate(StageArgs),
    /// Filter, cluster and pick adversarial candidates per class.
    Select {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        s: Option<usize>,
        #[arg(long)]
        mse_threshold: Option<f64>,
    },
    /// Score a checkpoint on the test split of one or more dataset manifests.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        tests: Vec<PathBuf>,
        /// Directory for the JSON report, table and ROC CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        fdr: Option<Vec<f64>>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Run or resume the whole pipeline.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        resume: bool,
        /// Defaults to `runs/<config stem>-<mode>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Completed full run whose classifier (and transforms) an ablation reuses.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Side-by-side view of evaluation reports.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run directory; stages already recorded there are reused.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, seed, config } => {
            let cfg = match config {
                Some(p) => toml::from_str(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => SyntheticConfig::default(),
            };
            let m = generate_synthetic(&cfg, seed, &out)?;
            println!(
                "wrote {} images ({} bonafide, {} attack) to {}",
                m.entries.len(),
                m.bonafide_count(),
                m.attack_count(),
                out.join("manifest.csv").display()
            );
        }
        Command::TrainPad(a) => stage(&a, "train_pad", |_| Ok(()))?,
        Command::TrainAdvgen(a) => stage(&a, "train_advgen", |_| Ok(()))?,
        Command::Generate(a) => stage(&a, "generate", |_| Ok(()))?,
        Command::Select { stage: a, k, s, mse_threshold } => stage(&a, "select", |cfg| {
            if let Some(k) = k {
                cfg.selection.k = k;
            }
            if let Some(s) = s {
                cfg.selection.s = s;
            }
            if let Some(t) = mse_threshold {
                cfg.selection.mse_threshold = t;
            }
            Ok(())
        })?,
        Command::Eval { model, tests, out, fdr, threshold } => eval(&model, &tests, out.as_deref(), fdr, threshold)?,
        Command::Run { config, mode, resume, out, reference } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(m) = mode {
                cfg.mode = RunModeKind::parse(&m).with_context(|| format!("unknown mode `{m}`"))?;
            }
            if let Some(r) = reference {
                cfg.ablation.reference_run = Some(r);
            }
            let out = out.unwrap_or_else(|| {
                let stem = config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
                PathBuf::from("runs").join(format!("{stem}-{}", cfg.mode.name()))
            });
            let manifest = pipeline::run(&cfg, &out, RunOptions { resume, stop_after: None })?;
            print_stages(&manifest);
            let (standard, aa) = pipeline::run_reports(&out)?;
            println!();
            println!("{}", compare(&[(standard.model.clone(), standard), (aa.model.clone(), aa)])?.render());
            println!("run directory: {}", out.display());
        }
        Command::Compare { reports } => {
            let loaded = reports
                .iter()
                .map(|p| EvalReport::read_json(p).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let mut named = Vec::new();
            for (path, report) in reports.iter().zip(loaded) {
                let clash = named.iter().any(|(n, _): &(String, EvalReport)| *n == report.model);
                let name = if clash { format!("{}@{}", report.model, path.display()) } else { report.model.clone() };
                named.push((name, report));
            }
            print!("{}", compare(&named)?.render());
        }
    }
    Ok(())
}

fn stage(a: &StageArgs, name: &'static str, tweak: impl FnOnce(&mut ExperimentConfig) -> Result<()>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    tweak(&mut cfg)?;
    let manifest = pipeline::run(&cfg, &a.out, RunOptions { resume: true, stop_after: Some(name) })?;
    print_stages(&manifest);
    Ok(())
}

fn print_stages(m: &RunManifest) {
    for s in &m.stages {
        println!("{:<14}{:<11}{:>8.1}s", s.name, format!("{:?}", s.status).to_lowercase(), s.seconds);
    }
}

fn eval(model_path: &Path, tests: &[PathBuf], out: Option<&Path>, fdr: Option<Vec<f64>>, threshold: Option<f64>) -> Result<()> {
    let model = PadModel::load(model_path)?;
    let mut cfg = EvalConfig::default();
    if let Some(f) = fdr {
        cfg.fdr_targets = f;
    }
    if let Some(t) = threshold {
        cfg.threshold = t;
    }
    let (size, ch) = (model.arch().image_size, model.arch().channels);
    let mut domains = Vec::new();
    for path in tests {
        let m = load_manifest(path)?;
        for d in m.domains() {
            let entries = m.select(Split::Test, Some(&d));
            if entries.is_empty() {
                continue;
            }
            domains.push((d, load_records(&m, &entries, size, ch)?));
        }
    }
    if domains.is_empty() {
        bail!("no test-split rows in the given manifests");
    }
    let name = model_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    let (report, sets) = evaluate(&model, &name, &domains, &cfg)?;
    print!("{}", report.render_table());
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        report.write_json(&dir.join(format!("eval_{name}.json")))?;
        fs::write(dir.join(format!("eval_{name}.txt")), report.render_table())?;
        for set in &sets {
            write_roc_csv(set, &dir.join(format!("roc_{name}_{}.csv", set.domain)))?;
        }
    }
    Ok(())
}
