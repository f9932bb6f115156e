//! Run bundles: every artifact of one attack run in a timestamped
//! directory, sealed by per-file SHA-256 digests and a content hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{read_outcomes, write_outcomes, write_scores, AttackOutcome, ThresholdPolicy};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::checkpoint::Checkpoint;
use crate::model::train::TrainingLog;
use crate::scenarios::{ExperimentPlan, ScenarioConfig, SplitSpec};

pub const MANIFEST: &str = "manifest.toml";
pub const PLAN: &str = "plan.json";
pub const CONFIG: &str = "config.toml";
pub const MODEL: &str = "model.ckpt";
pub const OUTCOMES: &str = "outcomes.csv";
pub const SCORES: &str = "scores.csv";
pub const REPORT: &str = "report.json";
pub const HASHES: &str = "hashes.json";
pub const INCOMPLETE: &str = "INCOMPLETE";

/// Files covered by the content hash, in hashing order.
pub const SEALED: [&str; 7] = [MANIFEST, PLAN, CONFIG, MODEL, OUTCOMES, SCORES, REPORT];

/// Headline numbers of one replicate seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub seed: u64,
    pub accuracy: f64,
    pub f1: f64,
    pub eer: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub reidentification_rate: Option<f64>,
    pub protection_rate: Option<f64>,
}

impl ReplicateResult {
    pub fn from_report(seed: u64, m: &MetricsReport) -> Self {
        Self {
            seed,
            accuracy: m.accuracy,
            f1: m.f1,
            eer: m.eer,
            fpr: m.fpr,
            fnr: m.fnr,
            reidentification_rate: m.reidentification_rate,
            protection_rate: m.protection_rate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

/// The persisted report: metrics plus everything needed to interpret them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub seed: u64,
    pub model_kind: String,
    pub scenario: ScenarioConfig,
    pub split: SplitSpec,
    pub threshold_policy: ThresholdPolicy,
    pub training: TrainingLog,
    pub metrics: MetricsReport,
    /// One entry per replicate seed; the first is the persisted run.
    pub replicates: Vec<ReplicateResult>,
    pub replicate_summary: BTreeMap<String, MeanSd>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hashes {
    pub files: BTreeMap<String, String>,
    pub content_hash: String,
}

pub struct BundleInputs<'a> {
    pub manifest_toml: &'a str,
    pub plan: &'a ExperimentPlan,
    pub config_toml: &'a str,
    pub checkpoint: &'a Checkpoint,
    pub outcomes: &'a [AttackOutcome],
    pub report: &'a RunReport,
}

#[derive(Clone, Debug)]
pub struct RunBundle {
    pub dir: PathBuf,
    pub manifest_toml: String,
    pub plan: ExperimentPlan,
    pub config_toml: String,
    pub checkpoint: Checkpoint,
    pub outcomes: Vec<AttackOutcome>,
    pub report: RunReport,
    pub hashes: Hashes,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn content_hash(files: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for name in SEALED {
        h.update(name.as_bytes());
        h.update([0]);
        h.update(files.get(name).map_or("", String::as_str).as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

fn hash_files(dir: &Path) -> Result<BTreeMap<String, String>> {
    SEALED
        .iter()
        .map(|name| {
            let p = dir.join(name);
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            Ok((name.to_string(), sha256_hex(&bytes)))
        })
        .collect()
}

/// Creates `run-<UTC timestamp>` under `root`, adding a numeric suffix if
/// that name is taken.
fn fresh_dir(root: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let stamp = chrono::Utc::now().format("run-%Y%m%dT%H%M%SZ").to_string();
    for i in 0.. {
        let name = if i == 0 { stamp.clone() } else { format!("{stamp}-{i}") };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!()
}

/// Writes a bundle into a new directory under `root` and returns its path.
/// The `INCOMPLETE` marker stays behind if any write fails.
pub fn persist_run(root: &Path, inputs: &BundleInputs<'_>) -> Result<PathBuf> {
    let dir = fresh_dir(root)?;
    let marker = dir.join(INCOMPLETE);
    std::fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    write(MANIFEST, inputs.manifest_toml.as_bytes())?;
    write(PLAN, inputs.plan.to_json()?.as_bytes())?;
    write(CONFIG, inputs.config_toml.as_bytes())?;
    write(MODEL, &inputs.checkpoint.to_bytes()?)?;
    let labels = inputs.plan.label_map()?;
    write_outcomes(&dir.join(OUTCOMES), inputs.outcomes, &labels)?;
    write_scores(&dir.join(SCORES), inputs.outcomes)?;
    write(REPORT, inputs.report.to_json()?.as_bytes())?;
    let files = hash_files(&dir)?;
    let hashes = Hashes {
        content_hash: content_hash(&files),
        files,
    };
    write(HASHES, serde_json::to_string_pretty(&hashes)?.as_bytes())?;
    std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    Ok(dir)
}

/// Checks completeness and every digest without parsing the artifacts.
pub fn verify_bundle(dir: &Path) -> Result<Hashes> {
    if !dir.is_dir() {
        return Err(Error::Input(format!("{} is not a run bundle directory", dir.display())));
    }
    let missing: Vec<&str> = SEALED
        .iter()
        .chain(&[HASHES])
        .copied()
        .filter(|n| !dir.join(n).is_file())
        .collect();
    if dir.join(INCOMPLETE).exists() || !missing.is_empty() {
        return Err(Error::Input(format!(
            "incomplete bundle {}: missing {}",
            dir.display(),
            if missing.is_empty() { "nothing, but marked INCOMPLETE".to_string() } else { missing.join(", ") }
        )));
    }
    let p = dir.join(HASHES);
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let recorded: Hashes =
        serde_json::from_str(&text).map_err(|e| Error::Integrity(format!("{HASHES} unreadable: {e}")))?;
    let actual = hash_files(dir)?;
    for name in SEALED {
        if recorded.files.get(name) != actual.get(name) {
            return Err(Error::Integrity(format!("{name} does not match its recorded digest")));
        }
    }
    if recorded.content_hash != content_hash(&actual) {
        return Err(Error::Integrity("content hash mismatch".into()));
    }
    Ok(recorded)
}

/// Verifies and loads a bundle.
pub fn load_bundle(dir: &Path) -> Result<RunBundle> {
    let hashes = verify_bundle(dir)?;
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    };
    let plan = ExperimentPlan::from_json(&read(PLAN)?)?;
    let labels = plan.label_map()?;
    let outcomes = read_outcomes(&dir.join(OUTCOMES), &dir.join(SCORES), &labels)?;
    let report: RunReport = serde_json::from_str(&read(REPORT)?)?;
    Ok(RunBundle {
        dir: dir.to_path_buf(),
        manifest_toml: read(MANIFEST)?,
        config_toml: read(CONFIG)?,
        checkpoint: Checkpoint::load(&dir.join(MODEL))?,
        plan,
        outcomes,
        report,
        hashes,
    })
}
