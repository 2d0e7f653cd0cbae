//! The `ensemblefit` command line: single pipeline stages and the three
//! end-to-end experiments.

pub mod config;
pub mod run;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{generate_synthetic, write_dataset, Samples};
use crate::ensemble::{build_ensemble, load_ensemble, save_ensemble, EnsembleModel};
use crate::error::{invalid, Error};
use crate::monitor::{
    batch_confidence, export_curves, feature_correlation, render_heatmap, write_confidence_csv, write_json,
    ConsistencyDetail, CorrelationMatrix,
};
use crate::nn::{load_model, save_model, LayeredModel};
use crate::transfer::{finetune, FineTunedModel, TrainingHistory};
pub use config::{parse_config, ConfigError, Preset, RunConfig};
use run::{AtStage, RunLog, StageResult};

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Inline JSON merged over the configuration, applied in order.
    #[arg(long = "override", global = true, value_name = "JSON")]
    overrides: Vec<String>,
    /// Run seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides ENSEMBLEFIT_OUT and out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic dataset as PGM files plus manifest.csv.
    Synth,
    /// Pretrain one member's backbone on the source task.
    Pretrain {
        #[arg(long, default_value_t = 0)]
        member: usize,
    },
    /// Graft a binary head onto a pretrained model and fine-tune it.
    Finetune {
        #[arg(long)]
        pretrained: PathBuf,
        #[arg(long, default_value_t = 0)]
        member: usize,
    },
    /// Assemble fine-tuned models into an ensemble manifest.
    Ensemble {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
    },
    /// Test-set metrics and per-item confidences for a model or ensemble.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Training history whose consistency block joins the report.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Validation-loss consistency of a training history.
    Monitor {
        #[arg(long)]
        history: PathBuf,
    },
    /// Feature-correlation heatmaps and curve export.
    Report {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Augmented from-scratch baseline.
    Exp1,
    /// Per-backbone transfer fine-tuning.
    Exp2,
    /// Ensemble of fine-tuned members.
    Exp3 {
        /// An exp2 output directory whose members are continued.
        #[arg(long)]
        resume_from: Option<PathBuf>,
    },
}

impl Command {
    fn preset(&self) -> Preset {
        match self {
            Command::Exp1 => Preset::EXP1,
            Command::Exp2 => Preset::EXP2,
            Command::Exp3 { .. } => Preset::EXP3,
            _ => Preset::STAGE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ensemblefit",
    version,
    about = "Transfer-learned CNN ensembles for surface defect detection"
)]
struct Invocation {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Exit codes: 0 success, 1 stage failure, 2 usage or configuration error.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let inv = match Invocation::try_parse_from(argv) {
        Ok(inv) => inv,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match load_config(&inv.common, inv.command.preset()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let out = run::resolve_out_dir(inv.common.out.clone(), &cfg);
    match execute(&inv.command, &cfg, &out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(common: &Common, preset: Preset) -> Result<RunConfig, ConfigError> {
    let text = match &common.config {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?),
        None => None,
    };
    let mut cfg = parse_config(text.as_deref(), &common.overrides)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg.resolve(preset))
}

fn execute(command: &Command, cfg: &RunConfig, out: &Path) -> StageResult<()> {
    run::create_dir(out)?;
    let mut resolved = cfg.clone();
    resolved.out_dir = out.to_path_buf();
    write_json(&resolved, out.join("config.resolved.json")).at("output")?;
    let mut log = RunLog::open(out).at("output")?;
    log.line(format!("start {command:?} seed {}", cfg.seed));
    match command {
        Command::Synth => synth(cfg, out),
        Command::Pretrain { member } => pretrain(cfg, *member, out),
        Command::Finetune { pretrained, member } => finetune_stage(cfg, pretrained, *member, out),
        Command::Ensemble { models } => ensemble(cfg, models, out),
        Command::Eval { model, history } => eval(cfg, model, history.as_deref(), out),
        Command::Monitor { history } => monitor(cfg, history, out),
        Command::Report { model, history } => report(cfg, model, history.as_deref(), out),
        Command::Exp1 => run::run_exp1(cfg, out, &mut log).map(|_| ()),
        Command::Exp2 => run::run_exp2(cfg, out, &mut log).map(|_| ()),
        Command::Exp3 { resume_from } => run::run_exp3(cfg, out, resume_from.as_deref(), &mut log).map(|_| ()),
    }?;
    log.line("done");
    Ok(())
}

fn synth(cfg: &RunConfig, out: &Path) -> StageResult<()> {
    let mut synth = cfg.data.synthetic.clone();
    synth.seed = cfg.seed;
    synth.image_size = cfg.data.image_size;
    let dataset = generate_synthetic(&synth).at("synth")?;
    let rows = write_dataset(&dataset, out).at("synth")?;
    println!("wrote {} images and manifest.csv to {}", rows.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct PretrainSummary<'a> {
    member: usize,
    backbone: &'a str,
    source_task_id: &'a str,
    epochs: usize,
    final_train_acc: f64,
}

fn pretrain(cfg: &RunConfig, member: usize, out: &Path) -> StageResult<()> {
    let spec = run::member_backbone(cfg, member).at("config")?;
    let p = run::pretrain_member(cfg, spec, member).at("pretrain")?;
    save_model(&p.model, out.join("pretrained.model.json")).at("save")?;
    let summary = PretrainSummary {
        member,
        backbone: &spec.name,
        source_task_id: &p.source_meta.source_task_id,
        epochs: p.source_meta.epochs,
        final_train_acc: p.source_meta.final_train_acc,
    };
    write_json(&summary, out.join("pretrain.json")).at("save")?;
    println!("{} source accuracy {:.4}", spec.name, p.source_meta.final_train_acc);
    Ok(())
}

fn finetune_stage(cfg: &RunConfig, pretrained: &Path, member: usize, out: &Path) -> StageResult<()> {
    let model = load_model(pretrained).at("load")?;
    let spec = run::member_backbone(cfg, member).at("config")?;
    let pretrained = crate::transfer::PretrainedModel {
        model,
        source_meta: crate::transfer::SourceMeta {
            source_task_id: crate::transfer::SOURCE_TASK_ID.into(),
            epochs: 0,
            final_train_acc: f64::NAN,
        },
    };
    let splits = run::prepare_splits(cfg)?;
    let grafted = run::graft_member(cfg, &pretrained, member, splits.train.shape()).at("graft")?;
    let fc = run::finetune_config(cfg, run::member_seed(cfg.seed, member), cfg.train.freeze.into());
    let (model, history) = finetune(grafted, &splits.train, &splits.val, &fc).at("finetune")?;
    let run = run::MemberRun {
        id: run::member_id(spec, member),
        backbone: spec.name.clone(),
        model,
        history: history.quantized(),
    };
    let (report, _) = run::write_member_artifacts(cfg, &run, &splits.test, out)?;
    println!("{} test accuracy {:.4}", run.id, report.accuracy);
    Ok(())
}

fn ensemble(cfg: &RunConfig, models: &[PathBuf], out: &Path) -> StageResult<()> {
    let splits = run::prepare_splits(cfg)?;
    let mut candidates = Vec::new();
    for (i, path) in models.iter().enumerate() {
        let model = load_model(path).at("load")?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().trim_end_matches(".model").to_string())
            .unwrap_or_default();
        candidates.push(FineTunedModel::new(format!("c{i}-{stem}"), model));
    }
    let admission = build_ensemble(candidates, splits.train.shape(), cfg.ensemble.n).at("ensemble")?;
    for r in &admission.rejected {
        eprintln!("rejected {}: {}", r.model_id, r.reason);
    }
    let mut e = admission.ensemble;
    run::configure_ensemble(cfg, &mut e, &splits.val).at("ensemble")?;
    save_ensemble(&e, out.join("ensemble.json")).at("save")?;
    println!(
        "ensemble of {} members written to {}",
        e.len(),
        out.join("ensemble.json").display()
    );
    Ok(())
}

enum Loaded {
    Single(LayeredModel),
    Ensemble(EnsembleModel),
}

fn load_any(path: &Path) -> crate::error::Result<Loaded> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    if doc.get("members").is_some() {
        Ok(Loaded::Ensemble(load_ensemble(path)?))
    } else {
        Ok(Loaded::Single(crate::nn::model_from_json(&doc)?))
    }
}

fn eval(cfg: &RunConfig, model: &Path, history: Option<&Path>, out: &Path) -> StageResult<()> {
    let loaded = load_any(model).at("load")?;
    let splits = run::prepare_splits(cfg)?;
    let consistency = match history {
        Some(h) => Some(run::consistency_of(cfg, &TrainingHistory::read_csv(h).at("load")?)?),
        None => None,
    };
    let threshold = match &loaded {
        Loaded::Ensemble(e) => e.threshold,
        Loaded::Single(_) => cfg.ensemble.threshold,
    };
    let (report, rows) = match &loaded {
        Loaded::Single(m) => (
            run::evaluate_predictor(m, &splits.test, threshold, consistency.as_ref())?,
            batch_confidence(m, &splits.test, threshold).at("eval")?,
        ),
        Loaded::Ensemble(e) => (
            run::evaluate_predictor(e, &splits.test, threshold, consistency.as_ref())?,
            batch_confidence(e, &splits.test, threshold).at("eval")?,
        ),
    };
    write_json(&report, out.join("report.json")).at("save")?;
    write_confidence_csv(&rows, out.join("confidence.csv")).at("save")?;
    println!(
        "accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4}",
        report.accuracy, report.precision, report.recall, report.f1
    );
    Ok(())
}

fn monitor(cfg: &RunConfig, history: &Path, out: &Path) -> StageResult<()> {
    let h = TrainingHistory::read_csv(history).at("load")?;
    let c = run::consistency_of(cfg, &h)?;
    println!(
        "first stable epoch {} empirical epsilon {:.6} reusable {}",
        c.first_stable_epoch.map_or("none".to_string(), |e| e.to_string()),
        c.empirical_epsilon,
        c.reusable
    );
    write_json(&ConsistencyDetail::new(c, &h), out.join("consistency.json")).at("save")
}

#[derive(Serialize)]
struct FeatureReport {
    layer: usize,
    normal_item: usize,
    defect_item: usize,
    max_abs_diff: f64,
    normal: CorrelationMatrix,
    defect: CorrelationMatrix,
}

fn first_with_label(samples: &Samples, label: f64) -> crate::error::Result<usize> {
    samples
        .labels()
        .iter()
        .position(|&l| l == label)
        .ok_or_else(|| invalid!("test split has no item labelled {label}"))
}

fn report(cfg: &RunConfig, model: &Path, history: Option<&Path>, out: &Path) -> StageResult<()> {
    let model = match load_any(model).at("load")? {
        Loaded::Single(m) => m,
        Loaded::Ensemble(e) => {
            let i = e.select_min_loss().at("report")?;
            e.members[i].model.clone()
        }
    };
    if let Some(h) = history {
        export_curves(&TrainingHistory::read_csv(h).at("load")?, out.join("curves.csv")).at("save")?;
    }
    let layer = match cfg.diagnostics.feature_layer {
        Some(l) => l,
        None => model
            .last_conv_index()
            .ok_or_else(|| invalid!("model has no conv layer"))
            .at("report")?,
    };
    let splits = run::prepare_splits(cfg)?;
    let normal_item = first_with_label(&splits.test, 0.0).at("report")?;
    let defect_item = first_with_label(&splits.test, 1.0).at("report")?;
    let normal = feature_correlation(&model, &splits.test.item_tensor(normal_item), layer).at("report")?;
    let defect = feature_correlation(&model, &splits.test.item_tensor(defect_item), layer).at("report")?;
    render_heatmap(&normal, out.join("heatmap_normal.pgm")).at("save")?;
    render_heatmap(&defect, out.join("heatmap_defect.pgm")).at("save")?;
    let max_abs_diff = normal.max_abs_diff(&defect).at("report")?;
    println!("layer {layer}: correlation max-abs difference {max_abs_diff:.4}");
    write_json(
        &FeatureReport {
            layer,
            normal_item,
            defect_item,
            max_abs_diff,
            normal,
            defect,
        },
        out.join("features.json"),
    )
    .at("save")
}
