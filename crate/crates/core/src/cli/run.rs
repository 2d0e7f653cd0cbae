//! Experiment orchestration shared by the command line and the test suites.
//! Every artifact lands under the output directory; wall-clock times only
//! reach `run.log`.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{DataSource, RunConfig};
use crate::data::{
    generate_synthetic, group_labels, ingest, load_manifest, split, to_binary, Dataset, PrefixRules, Samples,
};
use crate::ensemble::{build_ensemble, ensemble_history, save_ensemble, EnsembleMode, EnsembleModel};
use crate::error::{invalid, Error};
use crate::monitor::{
    batch_confidence, compute_metrics, consistency_report, write_confidence_csv, write_json, ConsistencyDetail,
    ConsistencyReport, EvalReport, Predictor,
};
use crate::nn::{load_model, save_model, LayeredModel};
use crate::rng::{derive_seed, stream, substream};
use crate::transfer::{
    finetune, graft_head_with, pretrain_backbone, resume_finetune, source_samples, BackboneSpec, FineTuneConfig,
    FineTunedModel, FreezePolicy, HeadSpec, PretrainConfig, PretrainedModel, SourceTaskConfig, TrainingHistory,
    SOURCE_CLASSES, SOURCE_TASK_ID,
};

/// A failure tagged with the pipeline stage it happened in.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage}: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

pub type StageResult<T> = std::result::Result<T, StageError>;

pub trait AtStage<T> {
    fn at(self, stage: &'static str) -> StageResult<T>;
}

impl<T, E: Into<Error>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|e| StageError {
            stage,
            source: e.into(),
        })
    }
}

/// Append-only progress log with Unix timestamps.
#[derive(Debug, Default)]
pub struct RunLog {
    file: Option<File>,
}

impl RunLog {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn open(dir: &Path) -> crate::error::Result<Self> {
        let path = dir.join("run.log");
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self { file: Some(file) })
    }

    pub fn line(&mut self, msg: impl AsRef<str>) {
        let msg = msg.as_ref();
        log::info!("{msg}");
        if let Some(f) = self.file.as_mut() {
            let t = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
            // a failing log write must not fail the run
            let _ = writeln!(f, "{}.{:03} {msg}", t.as_secs(), t.subsec_millis());
        }
    }
}

pub fn create_dir(dir: &Path) -> StageResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).at("output")
}

/// The labelled dataset the configuration points at.
pub fn load_dataset(cfg: &RunConfig) -> crate::error::Result<Dataset> {
    let path = || {
        cfg.data
            .path
            .as_ref()
            .ok_or_else(|| invalid!("data.path is required for source {:?}", cfg.data.source))
    };
    match cfg.data.source {
        DataSource::Synthetic => {
            let mut synth = cfg.data.synthetic.clone();
            synth.seed = cfg.seed;
            synth.image_size = cfg.data.image_size;
            generate_synthetic(&synth)
        }
        DataSource::Manifest => load_manifest(path()?),
        DataSource::Directory => {
            let report = ingest(path()?)?;
            for (file, reason) in &report.skipped {
                log::warn!("skipped {}: {reason}", file.display());
            }
            let grouped = if cfg.data.label_groups.is_empty() {
                report.dataset
            } else {
                let rules = PrefixRules::new(cfg.data.label_groups.iter().map(|(p, c)| (p.clone(), c.clone())));
                let g = group_labels(&report.dataset, &rules)?;
                if !g.unmatched.is_empty() {
                    log::warn!("labels without a grouping rule: {:?}", g.unmatched);
                }
                g.dataset
            };
            let defect: BTreeSet<String> = cfg.data.defect_classes.iter().cloned().collect();
            let normal: BTreeSet<String> = cfg.data.normal_classes.iter().cloned().collect();
            to_binary(&grouped, &defect, &normal)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Samples,
    pub val: Samples,
    pub test: Samples,
}

pub fn prepare_splits(cfg: &RunConfig) -> StageResult<Splits> {
    let dataset = load_dataset(cfg).at("data")?;
    let (train, val, test) = split(&dataset, cfg.ratios(), cfg.seed).at("split")?;
    let size = cfg.data.image_size;
    let tensorize = |d: &Dataset| Samples::from_dataset(d, size);
    Ok(Splits {
        train: tensorize(&train).at("preprocess")?,
        val: tensorize(&val).at("preprocess")?,
        test: tensorize(&test).at("preprocess")?,
    })
}

/// Seed of ensemble member `index`, independent of scheduling order.
pub fn member_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[stream::MEMBER, index as u64])
}

/// Backbone of member `index`: the configured list, cycled.
pub fn member_backbone(cfg: &RunConfig, index: usize) -> crate::error::Result<&BackboneSpec> {
    if cfg.backbones.is_empty() {
        return Err(invalid!("no backbones configured"));
    }
    Ok(&cfg.backbones[index % cfg.backbones.len()])
}

pub fn member_id(spec: &BackboneSpec, index: usize) -> String {
    format!("m{index}-{}", spec.name)
}

/// Pretrains member `index`'s backbone on its own draw of the source task.
pub fn pretrain_member(cfg: &RunConfig, spec: &BackboneSpec, index: usize) -> crate::error::Result<PretrainedModel> {
    let m = member_seed(cfg.seed, index);
    let source = source_samples(&SourceTaskConfig {
        image_size: cfg.data.image_size,
        per_class: cfg.pretrain.per_class,
        seed: derive_seed(m, &[stream::SOURCE]),
    })?;
    pretrain_backbone(
        &source,
        SOURCE_CLASSES.len(),
        SOURCE_TASK_ID,
        spec,
        &PretrainConfig {
            batch_size: cfg.pretrain.batch_size,
            epochs: cfg.pretrain.epochs,
            schedule: cfg.pretrain.schedule(),
            seed: m,
            standardize: cfg.train.standardize,
        },
    )
}

pub fn graft_member(
    cfg: &RunConfig,
    pretrained: &PretrainedModel,
    index: usize,
    input_shape: [usize; 3],
) -> crate::error::Result<LayeredModel> {
    let mut rng = substream(member_seed(cfg.seed, index), &[stream::GRAFT]);
    graft_head_with(
        pretrained,
        input_shape,
        HeadSpec::BINARY,
        cfg.train.input_layer,
        &mut rng,
    )
}

pub fn finetune_config(cfg: &RunConfig, seed: u64, freeze: FreezePolicy) -> FineTuneConfig {
    FineTuneConfig {
        batch_size: cfg.train.batch_size,
        epochs: cfg.epochs(),
        schedule: cfg.train.schedule(),
        freeze,
        seed,
        augment: cfg.augment_pipeline(),
        standardize: cfg.train.standardize,
    }
}

/// A trained member and its per-epoch record, held at the precision
/// `history.csv` stores.
#[derive(Debug, Clone)]
pub struct MemberRun {
    pub id: String,
    pub backbone: String,
    pub model: LayeredModel,
    pub history: TrainingHistory,
}

/// Pretrain, graft and fine-tune member `index`.
pub fn train_member(cfg: &RunConfig, index: usize, splits: &Splits) -> StageResult<MemberRun> {
    let spec = member_backbone(cfg, index).at("config")?;
    let id = member_id(spec, index);
    let pretrained = pretrain_member(cfg, spec, index).at("pretrain")?;
    let model = graft_member(cfg, &pretrained, index, splits.train.shape()).at("graft")?;
    let fc = finetune_config(cfg, member_seed(cfg.seed, index), cfg.train.freeze.into());
    let (model, history) = finetune(model, &splits.train, &splits.val, &fc).at("finetune")?;
    Ok(MemberRun {
        id,
        backbone: spec.name.clone(),
        model,
        history: history.quantized(),
    })
}

/// Continues member `index` from the model and history saved under
/// `dir/<member id>/`.
pub fn resume_member(cfg: &RunConfig, index: usize, splits: &Splits, dir: &Path) -> StageResult<MemberRun> {
    let spec = member_backbone(cfg, index).at("config")?;
    let id = member_id(spec, index);
    let base = dir.join(&id);
    let model = load_model(base.join("model.json")).at("resume")?;
    let history = TrainingHistory::read_csv(base.join("history.csv")).at("resume")?;
    let fc = finetune_config(cfg, member_seed(cfg.seed, index), cfg.train.freeze.into());
    let (model, history) = resume_finetune(model, history, &splits.train, &splits.val, &fc).at("finetune")?;
    Ok(MemberRun {
        id,
        backbone: spec.name.clone(),
        model,
        history: history.quantized(),
    })
}

/// A randomly initialised network trained with nothing frozen.
pub fn train_from_scratch(cfg: &RunConfig, spec: &BackboneSpec, splits: &Splits) -> StageResult<MemberRun> {
    let mut rng = substream(cfg.seed, &[stream::INIT]);
    let model = spec.build(splits.train.shape(), 1, &mut rng).at("init")?;
    let fc = finetune_config(cfg, cfg.seed, FreezePolicy::None);
    let (model, history) = finetune(model, &splits.train, &splits.val, &fc).at("train")?;
    Ok(MemberRun {
        id: format!("scratch-{}", spec.name),
        backbone: spec.name.clone(),
        model,
        history: history.quantized(),
    })
}

pub fn consistency_of(cfg: &RunConfig, history: &TrainingHistory) -> StageResult<ConsistencyReport> {
    consistency_report(history, &cfg.consistency.criterion(), cfg.consistency.tail).at("monitor")
}

/// Test-set metrics of any predictor, with an optional consistency block.
pub fn evaluate_predictor<P: Predictor + ?Sized>(
    predictor: &P,
    test: &Samples,
    threshold: f64,
    consistency: Option<&ConsistencyReport>,
) -> StageResult<EvalReport> {
    let rows = batch_confidence(predictor, test, threshold).at("eval")?;
    let probs: Vec<f64> = rows.iter().map(|r| r.probability).collect();
    let metrics = compute_metrics(&probs, test.labels(), threshold).at("eval")?;
    Ok(EvalReport::new(&metrics, threshold, consistency))
}

/// `model.json`, `history.csv`, `report.json` and `consistency.json` for a
/// single trained network.
pub fn write_member_artifacts(
    cfg: &RunConfig,
    run: &MemberRun,
    test: &Samples,
    dir: &Path,
) -> StageResult<(EvalReport, ConsistencyReport)> {
    create_dir(dir)?;
    let consistency = consistency_of(cfg, &run.history)?;
    let report = evaluate_predictor(&run.model, test, cfg.ensemble.threshold, Some(&consistency))?;
    save_model(&run.model, dir.join("model.json")).at("save")?;
    run.history.write_csv(dir.join("history.csv")).at("save")?;
    write_json(&report, dir.join("report.json")).at("save")?;
    write_json(
        &ConsistencyDetail::new(consistency.clone(), &run.history),
        dir.join("consistency.json"),
    )
    .at("save")?;
    Ok((report, consistency))
}

#[derive(Debug, Clone)]
pub struct Exp1Outcome {
    pub run: MemberRun,
    pub report: EvalReport,
    pub consistency: ConsistencyReport,
}

/// Baseline: the first configured backbone trained from scratch, with the
/// augmentation the configuration enables.
pub fn run_exp1(cfg: &RunConfig, out: &Path, log: &mut RunLog) -> StageResult<Exp1Outcome> {
    let splits = prepare_splits(cfg)?;
    let spec = cfg
        .backbones
        .first()
        .ok_or_else(|| invalid!("no backbones configured"))
        .at("config")?;
    log.line(format!(
        "exp1: training {} from scratch for {} epochs",
        spec.name,
        cfg.epochs()
    ));
    let run = train_from_scratch(cfg, spec, &splits)?;
    let (report, consistency) = write_member_artifacts(cfg, &run, &splits.test, out)?;
    log.line(format!("exp1: test accuracy {:.4}", report.accuracy));
    Ok(Exp1Outcome {
        run,
        report,
        consistency,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberSummary {
    pub model_id: String,
    pub backbone: String,
    pub min_val_loss: f64,
    pub final_val_loss: f64,
    pub test_accuracy: f64,
    pub test_f1: f64,
    pub empirical_epsilon: f64,
}

impl MemberSummary {
    fn new(run: &MemberRun, report: &EvalReport, consistency: &ConsistencyReport) -> Self {
        Self {
            model_id: run.id.clone(),
            backbone: run.backbone.clone(),
            min_val_loss: run.history.val_loss.iter().copied().fold(f64::INFINITY, f64::min),
            final_val_loss: *run.history.val_loss.last().unwrap_or(&f64::NAN),
            test_accuracy: report.accuracy,
            test_f1: report.f1,
            empirical_epsilon: consistency.empirical_epsilon,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Exp2Outcome {
    pub runs: Vec<MemberRun>,
    pub summary: Vec<MemberSummary>,
}

/// One pretrained, grafted and fine-tuned network per configured backbone,
/// each under its own subdirectory, plus `summary.json`.
pub fn run_exp2(cfg: &RunConfig, out: &Path, log: &mut RunLog) -> StageResult<Exp2Outcome> {
    let splits = prepare_splits(cfg)?;
    let mut runs = Vec::new();
    let mut summary = Vec::new();
    for index in 0..cfg.backbones.len() {
        let run = train_member(cfg, index, &splits)?;
        let (report, consistency) = write_member_artifacts(cfg, &run, &splits.test, &out.join(&run.id))?;
        log.line(format!("exp2: {} test accuracy {:.4}", run.id, report.accuracy));
        summary.push(MemberSummary::new(&run, &report, &consistency));
        runs.push(run);
    }
    if runs.is_empty() {
        return Err(invalid!("no backbones configured")).at("config");
    }
    write_json(&summary, out.join("summary.json")).at("save")?;
    Ok(Exp2Outcome { runs, summary })
}

#[derive(Debug, Clone)]
pub struct Exp3Outcome {
    pub members: Vec<MemberRun>,
    pub member_summary: Vec<MemberSummary>,
    pub ensemble: EnsembleModel,
    pub history: TrainingHistory,
    pub report: EvalReport,
    pub consistency: ConsistencyReport,
}

/// Applies the configured combination mode to a freshly admitted ensemble.
pub fn configure_ensemble(cfg: &RunConfig, ensemble: &mut EnsembleModel, val: &Samples) -> crate::error::Result<()> {
    ensemble.threshold = cfg.ensemble.threshold;
    ensemble.operand = cfg.ensemble.operand;
    ensemble.evaluate_members(val)?;
    match cfg.ensemble.mode {
        EnsembleMode::MinLoss => ensemble.mode = EnsembleMode::MinLoss,
        EnsembleMode::ReciprocalWeighted => {
            ensemble.apply_reciprocal_weights()?;
        }
        EnsembleMode::Calibrated => {
            ensemble.calibrate_weights(val, cfg.ensemble.lambda, cfg.ensemble.grid_step)?;
        }
    }
    Ok(())
}

/// Ensemble of `ensemble.n` members. With `resume_from` (an exp2 output
/// directory) each member continues from its saved model and history.
pub fn run_exp3(cfg: &RunConfig, out: &Path, resume_from: Option<&Path>, log: &mut RunLog) -> StageResult<Exp3Outcome> {
    let splits = prepare_splits(cfg)?;
    let mut members = Vec::new();
    for index in 0..cfg.ensemble.n {
        let run = match resume_from {
            Some(dir) => resume_member(cfg, index, &splits, dir)?,
            None => train_member(cfg, index, &splits)?,
        };
        log.line(format!(
            "exp3: member {} final val_loss {:.6}",
            run.id,
            run.history.val_loss.last().copied().unwrap_or(f64::NAN)
        ));
        members.push(run);
    }
    let candidates = members
        .iter()
        .map(|r| FineTunedModel::new(r.id.clone(), r.model.clone()))
        .collect();
    let admission = build_ensemble(candidates, splits.train.shape(), cfg.ensemble.n).at("ensemble")?;
    for r in &admission.rejected {
        log.line(format!("exp3: rejected {}: {}", r.model_id, r.reason));
    }
    let mut ensemble = admission.ensemble;
    configure_ensemble(cfg, &mut ensemble, &splits.val).at("ensemble")?;
    let admitted: Vec<&MemberRun> = members
        .iter()
        .filter(|r| ensemble.members.iter().any(|m| m.model_id == r.id))
        .collect();
    let histories: Vec<TrainingHistory> = admitted.iter().map(|r| r.history.clone()).collect();
    let history = ensemble_history(&histories).at("monitor")?;
    let consistency = consistency_of(cfg, &history)?;
    let report = evaluate_predictor(&ensemble, &splits.test, ensemble.threshold, Some(&consistency))?;

    create_dir(out)?;
    save_ensemble(&ensemble, out.join("ensemble.json")).at("save")?;
    history.write_csv(out.join("history.csv")).at("save")?;
    write_json(&report, out.join("report.json")).at("save")?;
    write_json(
        &ConsistencyDetail::new(consistency.clone(), &history),
        out.join("consistency.json"),
    )
    .at("save")?;
    let rows = batch_confidence(&ensemble, &splits.test, ensemble.threshold).at("eval")?;
    write_confidence_csv(&rows, out.join("confidence.csv")).at("save")?;

    let mut member_summary = Vec::new();
    for run in &members {
        run.history
            .write_csv(out.join(format!("{}.history.csv", run.id)))
            .at("save")?;
        let c = consistency_of(cfg, &run.history)?;
        let r = evaluate_predictor(&run.model, &splits.test, ensemble.threshold, Some(&c))?;
        member_summary.push(MemberSummary::new(run, &r, &c));
    }
    write_json(&member_summary, out.join("members.json")).at("save")?;
    log.line(format!("exp3: ensemble test accuracy {:.4}", report.accuracy));
    Ok(Exp3Outcome {
        members,
        member_summary,
        ensemble,
        history,
        report,
        consistency,
    })
}

/// Resolves the output directory: command line, then `ENSEMBLEFIT_OUT`,
/// then the configuration.
pub fn resolve_out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os("ENSEMBLEFIT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| cfg.out_dir.clone())
}
