//! Two-stage linkage attack: softmax identity matching followed by
//! confidence-threshold rejection of unknown identities.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::IdentityLabelMap;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::model::{Classifier, Discriminator};
use crate::numerics::tensor::softmax_slice;
use crate::signal::Window;

/// How the rejection threshold Φ is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdPolicy {
    /// Nearest-rank percentile `p` of calibration confidences.
    Percentile { p: f64 },
    /// A fixed threshold.
    Absolute { phi: f64 },
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Percentile { p: 5.0 }
    }
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdPolicy::Percentile { p } if !(0.0..=100.0).contains(&p) => {
                Err(Error::Config(format!("percentile p must be in [0, 100], got {p}")))
            }
            ThresholdPolicy::Absolute { phi } if !phi.is_finite() => {
                Err(Error::Config(format!("absolute threshold must be finite, got {phi}")))
            }
            _ => Ok(()),
        }
    }
}

/// Stage-2 verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Unknown,
}

/// Result of attacking one probe window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub window_id: String,
    pub subject_id: String,
    /// Stage-1 argmax class, kept even when stage 2 rejects.
    pub stage1: usize,
    pub predicted: Label,
    pub tau: f64,
    pub phi_used: f64,
    pub stage2_fired: bool,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Stage 1: `(argmax softmax(logits), max softmax(logits))`.
pub fn stage1_match(logits: &[f64]) -> Result<(usize, f64)> {
    if logits.is_empty() {
        return Err(Error::Input("stage 1 needs at least one class".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite logit".into()));
    }
    let mut probs = vec![0.0; logits.len()];
    softmax_slice(logits, &mut probs);
    let label = argmax(&probs);
    Ok((label, probs[label]))
}

/// Φ from calibration confidences. Percentile mode uses the nearest rank:
/// the ⌈(p/100)·n⌉-th smallest value (1-based), the minimum for `p = 0`.
pub fn calibrate_threshold(confidences: &[f64], policy: &ThresholdPolicy) -> Result<f64> {
    policy.validate()?;
    match *policy {
        ThresholdPolicy::Absolute { phi } => Ok(phi),
        ThresholdPolicy::Percentile { p } => {
            if confidences.is_empty() {
                return Err(Error::Calibration("empty calibration set".into()));
            }
            if confidences.iter().any(|v| !v.is_finite()) {
                return Err(Error::Calibration("non-finite calibration confidence".into()));
            }
            let mut sorted = confidences.to_vec();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            let rank = ((p * n as f64) / 100.0).ceil() as usize;
            Ok(sorted[rank.clamp(1, n) - 1])
        }
    }
}

/// Stage 2: reject iff `tau < phi`.
pub fn stage2_decide(tau: f64, phi: f64) -> Decision {
    if tau < phi {
        Decision::Unknown
    } else {
        Decision::Keep
    }
}

/// Stage-1 confidences of a window set, in input order.
pub fn confidences<M: Classifier + ?Sized>(model: &M, windows: &[Window]) -> Result<Vec<f64>> {
    windows
        .par_iter()
        .map(|w| Ok(stage1_match(&model.logits(&w.values)?)?.1))
        .collect()
}

/// Output of [`run_attack`].
#[derive(Clone, Debug, PartialEq)]
pub struct AttackRun {
    pub phi: f64,
    pub outcomes: Vec<AttackOutcome>,
}

/// Attacks every probe with a frozen model.
///
/// Φ is calibrated once from `calibration`, then each probe is matched and
/// gated independently. With `gate = Some(d)` a discriminator rejection
/// also yields `Unknown`.
pub fn run_attack<M: Classifier + ?Sized>(
    model: &M,
    probes: &[Window],
    policy: &ThresholdPolicy,
    calibration: &[Window],
    gate: Option<&Discriminator>,
) -> Result<AttackRun> {
    let phi = match policy {
        ThresholdPolicy::Absolute { .. } => calibrate_threshold(&[], policy)?,
        ThresholdPolicy::Percentile { .. } => calibrate_threshold(&confidences(model, calibration)?, policy)?,
    };
    let expected = model.window_len();
    let outcomes = probes
        .par_iter()
        .map(|w| {
            if w.values.len() != expected {
                return Err(Error::Input(format!(
                    "probe {} has {} samples, model expects {expected}",
                    w.id,
                    w.values.len()
                )));
            }
            let (stage1, tau) = stage1_match(&model.logits(&w.values)?)?;
            let mut fired = stage2_decide(tau, phi) == Decision::Unknown;
            if let (Some(d), false) = (gate, fired) {
                fired = d.rejects(&model.embedding(&w.values)?)?;
            }
            Ok(AttackOutcome {
                window_id: w.id.clone(),
                subject_id: w.subject_id.clone(),
                stage1,
                predicted: if fired { Label::Unknown } else { Label::Known(stage1) },
                tau,
                phi_used: phi,
                stage2_fired: fired,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackRun { phi, outcomes })
}

pub const OUTCOME_COLUMNS: [&str; 6] = ["window_id", "subject_id_true", "predicted", "tau", "phi", "stage2_fired"];
pub const SCORE_COLUMNS: [&str; 3] = ["window_id", "stage1", "tau"];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes the outcome table; `predicted` is the subject id of the matched
/// class or `unknown`.
pub fn write_outcomes(path: &Path, outcomes: &[AttackOutcome], labels: &IdentityLabelMap) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(OUTCOME_COLUMNS).map_err(|e| csv_err(path, e))?;
    for o in outcomes {
        let predicted = match o.predicted {
            Label::Known(c) => labels.subject(c)?.to_string(),
            Label::Unknown => "unknown".to_string(),
        };
        w.write_record([
            o.window_id.as_str(),
            o.subject_id.as_str(),
            predicted.as_str(),
            &o.tau.to_string(),
            &o.phi_used.to_string(),
            if o.stage2_fired { "true" } else { "false" },
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the stage-1 class of every probe (needed to rebuild genuine
/// scores when stage 2 rejected a window).
pub fn write_scores(path: &Path, outcomes: &[AttackOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(SCORE_COLUMNS).map_err(|e| csv_err(path, e))?;
    for o in outcomes {
        w.write_record([o.window_id.as_str(), &o.stage1.to_string(), &o.tau.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads an outcome table plus its stage-1 score file.
pub fn read_outcomes(outcomes: &Path, scores: &Path, labels: &IdentityLabelMap) -> Result<Vec<AttackOutcome>> {
    let parse = |path: &Path, field: &str, what: &str| -> Result<f64> {
        field.parse().map_err(|_| Error::Ingest {
            path: path.to_path_buf(),
            message: format!("bad {what} `{field}`"),
        })
    };
    let mut stage1 = Vec::new();
    let mut r = csv::Reader::from_path(scores).map_err(|e| csv_err(scores, e))?;
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(scores, e))?;
        let class = parse(scores, &rec[1], "stage1")? as usize;
        stage1.push((rec[0].to_string(), class));
    }
    let mut out = Vec::new();
    let mut r = csv::Reader::from_path(outcomes).map_err(|e| csv_err(outcomes, e))?;
    let header = r.headers().map_err(|e| csv_err(outcomes, e))?.clone();
    if header.iter().ne(OUTCOME_COLUMNS) {
        return Err(Error::Ingest {
            path: outcomes.to_path_buf(),
            message: format!("unexpected columns {header:?}"),
        });
    }
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(outcomes, e))?;
        let (sid, s1) = stage1.get(i).ok_or_else(|| Error::Ingest {
            path: scores.to_path_buf(),
            message: "fewer score rows than outcome rows".into(),
        })?;
        if sid != &rec[0] {
            return Err(Error::Ingest {
                path: scores.to_path_buf(),
                message: format!("row {i}: window {sid} does not match {}", &rec[0]),
            });
        }
        let predicted = match &rec[2] {
            "unknown" => Label::Unknown,
            s => Label::Known(labels.index(s)?),
        };
        out.push(AttackOutcome {
            window_id: rec[0].to_string(),
            subject_id: rec[1].to_string(),
            stage1: *s1,
            predicted,
            tau: parse(outcomes, &rec[3], "tau")?,
            phi_used: parse(outcomes, &rec[4], "phi")?,
            stage2_fired: &rec[5] == "true",
        });
    }
    Ok(out)
}
