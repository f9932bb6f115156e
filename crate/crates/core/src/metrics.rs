//! Sample-level classification metrics, open-set error rates, equal error
//! rate, participant-level linkage rates and the confidence sweep.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::attack::AttackOutcome;
use crate::error::{Error, Result};
use crate::label::Label;

pub const AVERAGING: &str = "macro over known classes present in truth";
pub const EER_CONVENTION: &str =
    "candidates = sorted scores plus +/-inf; FAR = impostor >= t, FRR = genuine < t; \
     t* minimizes |FAR-FRR| (lowest t on ties); eer = (FAR(t*) + FRR(t*)) / 2";
pub const IMPOSTOR_SOURCE: &str = "unknown-identity windows only";

fn check_aligned(pred: &[Label], truth: &[Label]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Metric("empty outcome set".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::Metric(format!(
            "{} predictions for {} truth labels",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class true positives, false positives and false negatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_class: BTreeMap<usize, ClassCounts>,
    /// Unknown-identity windows assigned some known class.
    pub uk_to_k: usize,
    /// Known-identity windows rejected as unknown.
    pub k_to_u: usize,
    pub known_total: usize,
    pub unknown_total: usize,
}

pub fn confusion(pred: &[Label], truth: &[Label]) -> Result<ConfusionCounts> {
    check_aligned(pred, truth)?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match t {
            Label::Known(tc) => {
                c.known_total += 1;
                if p == Label::Unknown {
                    c.k_to_u += 1;
                }
                let e = c.per_class.entry(tc).or_default();
                if p == t {
                    e.tp += 1;
                } else {
                    e.fn_ += 1;
                }
            }
            Label::Unknown => {
                c.unknown_total += 1;
                if p != Label::Unknown {
                    c.uk_to_k += 1;
                }
            }
        }
        if let Label::Known(pc) = p {
            if p != t {
                c.per_class.entry(pc).or_default().fp += 1;
            }
        }
    }
    Ok(c)
}

/// Accuracy over all windows (Unknown is one more class) and macro
/// precision/recall/F1 over the known classes present in `truth`.
pub fn sample_metrics(pred: &[Label], truth: &[Label]) -> Result<SampleMetrics> {
    let counts = confusion(pred, truth)?;
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    let present: Vec<&ClassCounts> = counts
        .per_class
        .values()
        .filter(|c| c.tp + c.fn_ > 0)
        .collect();
    if present.is_empty() {
        return Err(Error::Metric("no known-class windows in truth".into()));
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for c in &present {
        let p = ratio(c.tp, c.tp + c.fp);
        let r = ratio(c.tp, c.tp + c.fn_);
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        p_sum += p;
        r_sum += r;
        f_sum += f;
    }
    let k = present.len() as f64;
    Ok(SampleMetrics {
        accuracy: correct as f64 / pred.len() as f64,
        precision: p_sum / k,
        recall: r_sum / k,
        f1: f_sum / k,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisclassificationRates {
    /// `uk_to_k / unknown_count`; `None` without unknown windows.
    pub fpr: Option<f64>,
    /// `k_to_u / known_count`; `None` without known windows.
    pub fnr: Option<f64>,
    pub total: f64,
    pub uk_to_k: usize,
    pub k_to_u: usize,
    pub known_count: usize,
    pub unknown_count: usize,
}

pub fn misclassification_rates(pred: &[Label], truth: &[Label]) -> Result<MisclassificationRates> {
    let c = confusion(pred, truth)?;
    let rate = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok(MisclassificationRates {
        fpr: rate(c.uk_to_k, c.unknown_total),
        fnr: rate(c.k_to_u, c.known_total),
        total: (c.uk_to_k + c.k_to_u) as f64 / pred.len() as f64,
        uk_to_k: c.uk_to_k,
        k_to_u: c.k_to_u,
        known_count: c.known_total,
        unknown_count: c.unknown_total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    #[serde(with = "non_finite")]
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// FAR/FRR at every candidate threshold: −∞, each distinct score
/// ascending, +∞.
pub fn roc_points(genuine: &[f64], impostor: &[f64]) -> Result<Vec<RocPoint>> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::Metric("EER needs non-empty genuine and impostor scores".into()));
    }
    if genuine.iter().chain(impostor).any(|v| v.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }
    let mut g = genuine.to_vec();
    let mut im = impostor.to_vec();
    g.sort_by(f64::total_cmp);
    im.sort_by(f64::total_cmp);
    let mut cands: Vec<f64> = g.iter().chain(&im).copied().collect();
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let (ng, ni) = (g.len() as f64, im.len() as f64);
    let mut points = Vec::with_capacity(cands.len() + 2);
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        far: 1.0,
        frr: 0.0,
    });
    // genuine below t and impostors below t, advanced monotonically
    let (mut gi, mut ii) = (0, 0);
    for &t in &cands {
        while gi < g.len() && g[gi] < t {
            gi += 1;
        }
        while ii < im.len() && im[ii] < t {
            ii += 1;
        }
        points.push(RocPoint {
            threshold: t,
            far: (im.len() - ii) as f64 / ni,
            frr: gi as f64 / ng,
        });
    }
    points.push(RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    });
    Ok(points)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eer {
    pub eer: f64,
    #[serde(with = "non_finite")]
    pub threshold: f64,
}

/// Equal error rate over the discrete threshold sweep.
pub fn eer(genuine: &[f64], impostor: &[f64]) -> Result<Eer> {
    let points = roc_points(genuine, impostor)?;
    let mut best = points[0];
    for p in &points[1..] {
        if (p.far - p.frr).abs() < (best.far - best.frr).abs() {
            best = *p;
        }
    }
    Ok(Eer {
        eer: (best.far + best.frr) / 2.0,
        threshold: best.threshold,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantMetrics {
    pub reidentification_rate: Option<f64>,
    pub protection_rate: Option<f64>,
    pub known_participants: usize,
    pub unknown_participants: usize,
    pub linked: usize,
    pub protected: usize,
}

/// Majority vote of one participant's window decisions. Unknown is a
/// candidate like any class; a tie for the top count yields Unknown.
pub fn majority_vote(votes: &[Label]) -> Option<Label> {
    let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
    for v in votes {
        *counts.entry(*v).or_default() += 1;
    }
    let max = *counts.values().max()?;
    let mut top = counts.iter().filter(|(_, c)| **c == max).map(|(l, _)| *l);
    let first = top.next()?;
    Some(if top.next().is_some() { Label::Unknown } else { first })
}

/// Re-identification and protection rates at participant granularity.
///
/// `windows` pairs each window's subject id with its decision; `truth` maps
/// each participant to its known class or Unknown. Participants in `truth`
/// with no windows are skipped with a warning.
pub fn participant_metrics(windows: &[(&str, Label)], truth: &BTreeMap<String, Label>) -> Result<ParticipantMetrics> {
    let mut votes: HashMap<&str, Vec<Label>> = HashMap::new();
    for (sid, l) in windows {
        if !truth.contains_key(*sid) {
            return Err(Error::Metric(format!("window of participant `{sid}` has no truth label")));
        }
        votes.entry(sid).or_default().push(*l);
    }
    let mut m = ParticipantMetrics {
        reidentification_rate: None,
        protection_rate: None,
        known_participants: 0,
        unknown_participants: 0,
        linked: 0,
        protected: 0,
    };
    for (sid, t) in truth {
        let Some(v) = votes.get(sid.as_str()) else {
            log::warn!("participant {sid} has no windows; excluded");
            continue;
        };
        let vote = majority_vote(v);
        match t {
            Label::Known(_) => {
                m.known_participants += 1;
                if vote == Some(*t) {
                    m.linked += 1;
                }
            }
            Label::Unknown => {
                m.unknown_participants += 1;
                if vote == Some(Label::Unknown) {
                    m.protected += 1;
                }
            }
        }
    }
    let rate = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    m.reidentification_rate = rate(m.linked, m.known_participants);
    m.protection_rate = rate(m.protected, m.unknown_participants);
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub u_to_k_pct: Option<f64>,
    pub k_to_u_pct: Option<f64>,
    pub total_pct: f64,
}

/// U→K, K→U and total error percentages when stage 2 is re-run at each
/// threshold. `known[i]` tells whether window `i` belongs to a known
/// identity.
pub fn confidence_sweep(taus: &[f64], known: &[bool], thresholds: &[f64]) -> Result<Vec<SweepRow>> {
    if taus.len() != known.len() {
        return Err(Error::Metric("taus and population flags differ in length".into()));
    }
    if taus.is_empty() {
        return Err(Error::Metric("empty outcome set".into()));
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Parameter("sweep thresholds must be strictly increasing".into()));
    }
    let n_known = known.iter().filter(|k| **k).count();
    let n_unknown = known.len() - n_known;
    let pct = |a: usize, b: usize| (b > 0).then(|| 100.0 * a as f64 / b as f64);
    Ok(thresholds
        .iter()
        .map(|&t| {
            let mut uk = 0;
            let mut ku = 0;
            for (&tau, &k) in taus.iter().zip(known) {
                let rejected = tau < t;
                if k && rejected {
                    ku += 1;
                } else if !k && !rejected {
                    uk += 1;
                }
            }
            SweepRow {
                threshold: t,
                u_to_k_pct: pct(uk, n_unknown),
                k_to_u_pct: pct(ku, n_known),
                total_pct: 100.0 * (uk + ku) as f64 / taus.len() as f64,
            }
        })
        .collect())
}

/// Every evaluation quantity of one attack run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub averaging: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Accuracy restricted to known-identity windows.
    pub known_window_accuracy: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub tnr: Option<f64>,
    pub misclassification_rate: f64,
    pub eer: Option<f64>,
    #[serde(with = "non_finite::option")]
    pub eer_threshold: Option<f64>,
    pub eer_convention: String,
    pub impostor_scores: String,
    pub reidentification_rate: Option<f64>,
    pub protection_rate: Option<f64>,
    pub phi: f64,
    pub uk_to_k: usize,
    pub k_to_u: usize,
    pub known_windows: usize,
    pub unknown_windows: usize,
    pub known_participants: usize,
    pub unknown_participants: usize,
    pub threshold_sweep: Vec<SweepRow>,
}

/// Truth label of every outcome given the known-class map.
pub fn truth_labels(outcomes: &[AttackOutcome], known: &BTreeMap<String, usize>) -> Vec<Label> {
    outcomes
        .iter()
        .map(|o| known.get(&o.subject_id).map_or(Label::Unknown, |c| Label::Known(*c)))
        .collect()
}

/// Genuine (correctly matched known windows) and impostor (unknown
/// windows) confidence scores.
pub fn genuine_impostor(outcomes: &[AttackOutcome], truth: &[Label]) -> (Vec<f64>, Vec<f64>) {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (o, t) in outcomes.iter().zip(truth) {
        match t {
            Label::Known(c) if o.stage1 == *c => genuine.push(o.tau),
            Label::Known(_) => {}
            Label::Unknown => impostor.push(o.tau),
        }
    }
    (genuine, impostor)
}

impl MetricsReport {
    /// `known` maps each known subject id to its class index; every other
    /// subject is an unknown participant.
    pub fn compute(
        outcomes: &[AttackOutcome],
        known: &BTreeMap<String, usize>,
        phi: f64,
        sweep_thresholds: &[f64],
    ) -> Result<Self> {
        let truth = truth_labels(outcomes, known);
        let pred: Vec<Label> = outcomes.iter().map(|o| o.predicted).collect();
        let sm = sample_metrics(&pred, &truth)?;
        let mr = misclassification_rates(&pred, &truth)?;
        let (kp, kt): (Vec<Label>, Vec<Label>) =
            pred.iter().zip(&truth).filter(|(_, t)| !t.is_unknown()).map(|(p, t)| (*p, *t)).unzip();
        let known_window_accuracy =
            (!kt.is_empty()).then(|| kp.iter().zip(&kt).filter(|(p, t)| p == t).count() as f64 / kt.len() as f64);
        let (genuine, impostor) = genuine_impostor(outcomes, &truth);
        let e = if genuine.is_empty() || impostor.is_empty() {
            None
        } else {
            Some(eer(&genuine, &impostor)?)
        };
        let mut participants: BTreeMap<String, Label> = BTreeMap::new();
        for (o, t) in outcomes.iter().zip(&truth) {
            participants.insert(o.subject_id.clone(), *t);
        }
        let pairs: Vec<(&str, Label)> = outcomes.iter().map(|o| (o.subject_id.as_str(), o.predicted)).collect();
        let pm = participant_metrics(&pairs, &participants)?;
        let taus: Vec<f64> = outcomes.iter().map(|o| o.tau).collect();
        let is_known: Vec<bool> = truth.iter().map(|t| !t.is_unknown()).collect();
        let threshold_sweep = confidence_sweep(&taus, &is_known, sweep_thresholds)?;
        Ok(Self {
            averaging: AVERAGING.into(),
            accuracy: sm.accuracy,
            precision: sm.precision,
            recall: sm.recall,
            f1: sm.f1,
            known_window_accuracy,
            fpr: mr.fpr,
            fnr: mr.fnr,
            tnr: mr.fpr.map(|f| 1.0 - f),
            misclassification_rate: mr.total,
            eer: e.map(|e| e.eer),
            eer_threshold: e.map(|e| e.threshold),
            eer_convention: EER_CONVENTION.into(),
            impostor_scores: IMPOSTOR_SOURCE.into(),
            reidentification_rate: pm.reidentification_rate,
            protection_rate: pm.protection_rate,
            phi,
            uk_to_k: mr.uk_to_k,
            k_to_u: mr.k_to_u,
            known_windows: mr.known_count,
            unknown_windows: mr.unknown_count,
            known_participants: pm.known_participants,
            unknown_participants: pm.unknown_participants,
            threshold_sweep,
        })
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, sd))
}

/// Serializes non-finite floats as the strings `inf`, `-inf`, `nan`.
pub mod non_finite {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad float `{other}`"))),
            },
        }
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            #[derive(Deserialize)]
            struct W(#[serde(with = "super")] f64);
            Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Known as K, Unknown as U};

    #[test]
    fn perfect_and_swapped() {
        let t = [K(0), K(1), K(0), U];
        let m = sample_metrics(&t, &t).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        let m = sample_metrics(&[K(1), K(0)], &[K(0), K(1)]).unwrap();
        assert_eq!((m.accuracy, m.f1), (0.0, 0.0));
        assert!(sample_metrics(&[], &[]).is_err());
    }

    #[test]
    fn six_window_hand_case() {
        // class 0: tp 2, fn 1 (->U); class 1: tp 1, fp 1 (from class?) ...
        let truth = [K(0), K(0), K(0), K(1), K(1), U];
        let pred = [K(0), K(0), U, K(1), K(0), K(1)];
        // class 0: tp 2, fp 1 (truth 1 -> 0), fn 1  => p 2/3, r 2/3, f 2/3
        // class 1: tp 1, fp 1 (unknown -> 1), fn 1 => p 1/2, r 1/2, f 1/2
        let m = sample_metrics(&pred, &truth).unwrap();
        assert!((m.accuracy - 3.0 / 6.0).abs() < 1e-15);
        assert!((m.precision - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-15);
        assert!((m.recall - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-15);
        assert!((m.f1 - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn misclassification_examples() {
        let truth = vec![U; 10];
        let mut pred = vec![U; 10];
        pred[0] = K(1);
        pred[5] = K(0);
        let r = misclassification_rates(&pred, &truth).unwrap();
        assert_eq!(r.fpr, Some(0.2));
        assert_eq!(r.fnr, None);
        let t = [K(0), U];
        let r = misclassification_rates(&t, &t).unwrap();
        assert_eq!((r.fpr, r.fnr, r.total), (Some(0.0), Some(0.0), 0.0));
    }

    #[test]
    fn published_rates_fixture() {
        // 50 unknown windows with 6 accepted, 50 known with 9 rejected:
        // (0.12, 0.18, 0.15), the reported rate triple.
        let mut truth = vec![U; 50];
        truth.extend(vec![K(0); 50]);
        let mut pred = truth.clone();
        pred[..6].fill(K(0));
        pred[50..59].fill(U);
        let r = misclassification_rates(&pred, &truth).unwrap();
        assert_eq!(r.fpr, Some(0.12));
        assert_eq!(r.fnr, Some(0.18));
        assert_eq!(r.total, 0.15);
    }

    #[test]
    fn eer_examples() {
        assert_eq!(eer(&[0.9, 0.8], &[0.1, 0.2]).unwrap().eer, 0.0);
        let e = eer(&[0.9, 0.2], &[0.1, 0.8]).unwrap();
        assert_eq!(e.eer, 0.5);
        assert!(e.threshold > 0.2 && e.threshold <= 0.8);
        let s = [0.3, 0.5, 0.5, 0.9];
        assert_eq!(eer(&s, &s).unwrap().eer, 0.5);
        assert!(eer(&[], &[0.1]).is_err());
    }

    #[test]
    fn votes() {
        assert_eq!(majority_vote(&[K(0), K(0), K(1)]), Some(K(0)));
        assert_eq!(majority_vote(&[U, U, K(2)]), Some(U));
        assert_eq!(majority_vote(&[K(0), K(1)]), Some(U));
        assert_eq!(majority_vote(&[]), None);
    }

    #[test]
    fn four_participant_fixture() {
        let truth: BTreeMap<String, Label> =
            [("a", K(0)), ("b", K(1)), ("c", U), ("d", U)].iter().map(|(s, l)| (s.to_string(), *l)).collect();
        let windows = [
            ("a", K(0)),
            ("a", K(0)),
            ("a", K(1)),
            ("b", K(0)),
            ("b", U),
            ("c", U),
            ("c", U),
            ("c", K(0)),
            ("d", K(1)),
        ];
        let m = participant_metrics(&windows, &truth).unwrap();
        // a linked; b tie -> Unknown, not linked; c protected; d voted K(1)
        assert_eq!(m.reidentification_rate, Some(0.5));
        assert_eq!(m.protection_rate, Some(0.5));
    }

    #[test]
    fn sweep_shape_and_limits() {
        let taus = [0.02, 0.5, 0.9, 0.03, 0.95];
        let known = [false, true, true, false, true];
        let rows = confidence_sweep(&taus, &known, &[0.01, 0.02, 0.03, 0.04, 0.05]).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].u_to_k_pct, Some(100.0));
        assert_eq!(rows[4].u_to_k_pct, Some(0.0));
        let top = confidence_sweep(&taus, &known, &[0.99]).unwrap();
        assert_eq!((top[0].u_to_k_pct, top[0].k_to_u_pct), (Some(0.0), Some(100.0)));
        let zero = confidence_sweep(&taus, &known, &[0.0]).unwrap();
        assert_eq!(zero[0].k_to_u_pct, Some(0.0));
        assert!(confidence_sweep(&taus, &known, &[0.2, 0.1]).is_err());
    }

    #[test]
    fn non_finite_round_trip() {
        let p = RocPoint {
            threshold: f64::NEG_INFINITY,
            far: 1.0,
            frr: 0.0,
        };
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"-inf\""));
        assert_eq!(serde_json::from_str::<RocPoint>(&s).unwrap(), p);
    }

    #[test]
    fn mean_and_sd() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m, s), (2.0, 1.0));
    }
}
