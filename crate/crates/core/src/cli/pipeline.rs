//! The end-to-end experiment: ingest, preprocess, plan, train, attack and
//! score. The command front end and the acceptance suite share it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::attack::{run_attack, AttackRun};
use crate::cli::config::{ModelKind, RunConfig};
use crate::data::bundle::{MeanSd, ReplicateResult, RunReport};
use crate::data::{dataset_hash, encode_labels, DatasetManifest};
use crate::error::{Error, Result};
use crate::metrics::{mean_std, MetricsReport};
use crate::model::checkpoint::{Checkpoint, RngState};
use crate::model::{train, Classifier, Discriminator, LinearModel, Model, TrainingLog, VitModel};
use crate::numerics::OptimizerState;
use crate::scenarios::{build_plan, ExperimentPlan};
use crate::seed;
use crate::signal::{resample, segment, EcgRecord, Window, TARGET_HZ};

/// An error tagged with the pipeline stage that produced it.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for Failure {}

pub trait StageExt<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, Failure>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, Failure> {
        self.map_err(|error| Failure { stage: name, error })
    }
}

/// Preprocessed windows of every subject.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest_toml: String,
    pub dataset_hash: String,
    /// All subjects in label-encoding order.
    pub identities: Vec<String>,
    pub windows: Vec<Window>,
}

impl Dataset {
    /// Resamples to 250 Hz and segments every record.
    pub fn from_records(records: &[EcgRecord], identities: Vec<String>, manifest_toml: String, window_len: usize) -> Result<Self> {
        let per_record: Vec<Vec<Window>> = records
            .par_iter()
            .map(|r| segment(&resample(r, TARGET_HZ)?, window_len))
            .collect::<Result<_>>()?;
        Ok(Self {
            manifest_toml,
            dataset_hash: dataset_hash(records),
            identities,
            windows: per_record.into_iter().flatten().collect(),
        })
    }

    pub fn load(manifest_path: &Path, window_len: usize) -> std::result::Result<Self, Failure> {
        let text = std::fs::read_to_string(manifest_path)
            .map_err(|e| Error::io(manifest_path, e))
            .stage("ingest")?;
        let manifest = DatasetManifest::from_toml(&text).stage("ingest")?;
        let labels = encode_labels(std::slice::from_ref(&manifest)).stage("ingest")?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let records = manifest.load_records(base).stage("ingest")?;
        Self::from_records(&records, labels.subjects().to_vec(), text, window_len).stage("preprocess")
    }
}

/// Everything one seed of the experiment produced.
#[derive(Clone, Debug)]
pub struct ReplicateRun {
    pub seed: u64,
    pub plan: ExperimentPlan,
    pub model: Model,
    pub training: TrainingLog,
    pub optimizer: OptimizerState,
    pub discriminator: Option<Discriminator>,
    pub attack: AttackRun,
    pub metrics: MetricsReport,
}

impl ReplicateRun {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            optimizer: Some(self.optimizer.clone()),
            epoch: self.training.best_epoch,
            rng: RngState {
                seed: seed::derive(self.seed, "train"),
                epoch: self.training.epochs.len(),
            },
            discriminator: self.discriminator.clone(),
        }
    }
}

/// Seed of replicate `r`; replicate 0 uses the run seed itself.
pub fn replicate_seed(run_seed: u64, r: usize) -> u64 {
    if r == 0 {
        run_seed
    } else {
        seed::derive_indexed(run_seed, "replicate", &[r as u64])
    }
}

pub fn plan_for(cfg: &RunConfig, data: &Dataset, seed: u64) -> Result<ExperimentPlan> {
    build_plan(&data.windows, &data.identities, &cfg.split, &cfg.scenario, &data.dataset_hash, seed)
}

/// Cuts a window into patches and shuffles them: a negative example that
/// keeps the amplitude distribution but destroys beat structure.
fn patch_shuffle(values: &[f64], patch: usize, seed: u64) -> Vec<f64> {
    let mut patches: Vec<&[f64]> = values.chunks(patch.max(1)).collect();
    patches.shuffle(&mut seed::rng(seed));
    patches.concat()
}

fn fit_discriminator(cfg: &RunConfig, model: &Model, train: &[Window], seed: u64) -> Result<Discriminator> {
    let known: Vec<Vec<f64>> = train
        .par_iter()
        .map(|w| model.embedding(&w.values))
        .collect::<Result<_>>()?;
    let negatives: Vec<Vec<f64>> = train
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let shuffled = patch_shuffle(&w.values, cfg.model.patch_size, seed::derive_indexed(seed, "negative", &[i as u64]));
            model.embedding(&shuffled)
        })
        .collect::<Result<_>>()?;
    Discriminator::fit(&known, &negatives, &cfg.discriminator, seed)
}

/// Runs one seed of the experiment end to end, without persisting.
pub fn run_replicate(cfg: &RunConfig, data: &Dataset, seed: u64) -> std::result::Result<ReplicateRun, Failure> {
    let plan = plan_for(cfg, data, seed).stage("split")?;
    let sw = plan.materialize(&data.windows).stage("split")?;
    let classes = sw.labels.len();
    let init_seed = seed::derive(seed, "init");
    let model = match cfg.model.kind {
        ModelKind::Vit => VitModel::new(cfg.model.vit_config(classes), init_seed).map(Model::Vit),
        ModelKind::Linear => LinearModel::new(cfg.model.window_len, classes, init_seed).map(Model::Linear),
    }
    .stage("train")?;
    let trained = train(model, &sw.train, &sw.val, &cfg.training, seed::derive(seed, "train")).stage("train")?;
    let discriminator = if cfg.discriminator.enabled {
        Some(fit_discriminator(cfg, &trained.model, &sw.train, seed::derive(seed, "discriminator")).stage("train")?)
    } else {
        None
    };
    let attack = run_attack(&trained.model, &sw.test, &cfg.threshold, &sw.val, discriminator.as_ref()).stage("attack")?;
    let known: BTreeMap<String, usize> = sw.labels.subjects().iter().cloned().zip(0..).collect();
    let metrics = MetricsReport::compute(&attack.outcomes, &known, attack.phi, &cfg.sweep.thresholds).stage("metrics")?;
    Ok(ReplicateRun {
        seed,
        plan,
        model: trained.model,
        training: trained.log,
        optimizer: trained.optimizer,
        discriminator,
        attack,
        metrics,
    })
}

/// Mean and sample standard deviation of each headline metric across
/// replicates; undefined values are skipped.
pub fn summarize(replicates: &[ReplicateResult]) -> BTreeMap<String, MeanSd> {
    let fields: [(&str, fn(&ReplicateResult) -> Option<f64>); 7] = [
        ("accuracy", |r| Some(r.accuracy)),
        ("f1", |r| Some(r.f1)),
        ("eer", |r| r.eer),
        ("fpr", |r| r.fpr),
        ("fnr", |r| r.fnr),
        ("reidentification_rate", |r| r.reidentification_rate),
        ("protection_rate", |r| r.protection_rate),
    ];
    fields
        .iter()
        .filter_map(|(name, get)| {
            let v: Vec<f64> = replicates.iter().filter_map(get).collect();
            mean_std(&v).map(|(mean, sd)| (name.to_string(), MeanSd { mean, sd, n: v.len() }))
        })
        .collect()
}

pub fn build_report(cfg: &RunConfig, first: &ReplicateRun, replicates: Vec<ReplicateResult>) -> RunReport {
    RunReport {
        tool_version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
        seed: cfg.seed,
        model_kind: match cfg.model.kind {
            ModelKind::Vit => "vit",
            ModelKind::Linear => "linear",
        }
        .to_string(),
        scenario: first.plan.scenario.clone(),
        split: first.plan.split.clone(),
        threshold_policy: cfg.threshold,
        training: first.training.clone(),
        metrics: first.metrics.clone(),
        replicate_summary: summarize(&replicates),
        replicates,
    }
}

/// Runs every replicate of `cfg`. Returns the first replicate (the one to
/// persist) and the headline numbers of all of them.
pub fn run_experiment(cfg: &RunConfig, data: &Dataset) -> std::result::Result<(ReplicateRun, RunReport), Failure> {
    let mut first = None;
    let mut results = Vec::with_capacity(cfg.replicates);
    for r in 0..cfg.replicates {
        let s = replicate_seed(cfg.seed, r);
        log::info!("replicate {}/{} (seed {s})", r + 1, cfg.replicates);
        let run = run_replicate(cfg, data, s)?;
        results.push(ReplicateResult::from_report(s, &run.metrics));
        if first.is_none() {
            first = Some(run);
        }
    }
    let first = first.expect("replicates >= 1");
    let report = build_report(cfg, &first, results);
    Ok((first, report))
}
