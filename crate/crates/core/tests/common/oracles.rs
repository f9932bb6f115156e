//! Brute-force reference implementations, written without looking at the
//! library's algorithms, and randomized checks against them.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use ecg_linkage::attack::{calibrate_threshold, stage1_match, AttackOutcome, ThresholdPolicy};
use ecg_linkage::metrics::{
    confidence_sweep, confusion, eer, misclassification_rates, participant_metrics, sample_metrics, MetricsReport,
};
use ecg_linkage::numerics::{softmax as lib_softmax, Tape, Tensor};
use ecg_linkage::Label;

pub const FLOAT_TOL: f64 = 1e-9;
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `p_i = 1 / Σ_j exp(x_j − x_i)`.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| 1.0 / x.iter().map(|&xj| (xj - xi).exp()).sum::<f64>())
        .collect()
}

/// Welford mean and population variance, then the affine map.
pub fn layer_norm_row(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, &v) in x.iter().enumerate() {
        let d = v - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (v - mean);
    }
    let sd = (m2 / x.len() as f64 + LAYER_NORM_EPS).sqrt();
    x.iter()
        .zip(gain.iter().zip(bias))
        .map(|(v, (g, b))| (v - mean) / sd * g + b)
        .collect()
}

pub fn cross_entropy(rows: &[Vec<f64>], targets: &[usize]) -> f64 {
    rows.iter()
        .zip(targets)
        .map(|(r, &t)| -softmax(r)[t].ln())
        .sum::<f64>()
        / rows.len() as f64
}

/// Smallest observed value whose cumulative count reaches p% of n.
pub fn nearest_rank(values: &[f64], p: f64) -> f64 {
    let n = values.len();
    let need = (p * n as f64) / 100.0;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if p == 0.0 {
        return min;
    }
    values
        .iter()
        .copied()
        .filter(|&v| values.iter().filter(|&&x| x <= v).count() as f64 >= need)
        .fold(f64::INFINITY, f64::min)
}

/// Exhaustive threshold sweep. Returns `(eer, threshold)`.
pub fn eer_oracle(genuine: &[f64], impostor: &[f64]) -> (f64, f64) {
    let mut cands = vec![f64::NEG_INFINITY, f64::INFINITY];
    for &s in genuine.iter().chain(impostor) {
        if !cands.contains(&s) {
            cands.push(s);
        }
    }
    cands.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64, f64)> = None;
    for &t in &cands {
        let far = impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64;
        let frr = genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64;
        match best {
            Some((_, f, r)) if (f - r).abs() <= (far - frr).abs() => {}
            _ => best = Some((t, far, frr)),
        }
    }
    let (t, far, frr) = best.unwrap();
    ((far + frr) / 2.0, t)
}

#[derive(Debug, PartialEq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

pub fn class_counts(pred: &[Label], truth: &[Label], c: usize) -> Counts {
    let k = Label::Known(c);
    let n = |f: &dyn Fn(Label, Label) -> bool| pred.iter().zip(truth).filter(|(p, t)| f(**p, **t)).count();
    Counts {
        tp: n(&|p, t| p == k && t == k),
        fp: n(&|p, t| p == k && t != k),
        fn_: n(&|p, t| t == k && p != k),
    }
}

/// (accuracy, macro precision, macro recall, macro F1).
pub fn sample_oracle(pred: &[Label], truth: &[Label]) -> (f64, f64, f64, f64) {
    let acc = pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / pred.len() as f64;
    let mut classes: Vec<usize> = truth.iter().filter_map(|t| t.class()).collect();
    classes.sort_unstable();
    classes.dedup();
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
    for &c in &classes {
        let k = class_counts(pred, truth, c);
        let p = div(k.tp, k.tp + k.fp);
        let r = div(k.tp, k.tp + k.fn_);
        ps += p;
        rs += r;
        fs += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    let m = classes.len() as f64;
    (acc, ps / m, rs / m, fs / m)
}

/// Majority vote by linear scan; any tie at the top is Unknown.
pub fn vote_oracle(votes: &[Label]) -> Label {
    let mut tally: Vec<(Label, usize)> = Vec::new();
    for v in votes {
        match tally.iter_mut().find(|(l, _)| l == v) {
            Some(e) => e.1 += 1,
            None => tally.push((*v, 1)),
        }
    }
    let top = tally.iter().map(|e| e.1).max().unwrap();
    let winners: Vec<Label> = tally.iter().filter(|e| e.1 == top).map(|e| e.0).collect();
    if winners.len() == 1 {
        winners[0]
    } else {
        Label::Unknown
    }
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= FLOAT_TOL || (a.is_infinite() && a == b)
}

pub fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => close(x, y),
        (None, None) => true,
        _ => false,
    }
}

fn logits<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-12.0..12.0)).collect()
}

fn label<R: Rng>(rng: &mut R, classes: usize, p_unknown: f64) -> Label {
    if rng.random_bool(p_unknown) {
        Label::Unknown
    } else {
        Label::Known(rng.random_range(0..classes))
    }
}

/// Random outcome set with ids `s0..`, known subjects mapped to classes.
pub fn random_outcomes<R: Rng>(rng: &mut R, n: usize) -> (Vec<AttackOutcome>, BTreeMap<String, usize>) {
    let subjects = rng.random_range(2..=8usize);
    let known_n = rng.random_range(1..subjects);
    let known: BTreeMap<String, usize> = (0..known_n).map(|i| (format!("s{i}"), i)).collect();
    let phi = rng.random_range(0.0..1.0);
    let outcomes = (0..n)
        .map(|i| {
            let sid = format!("s{}", rng.random_range(0..subjects));
            let stage1 = rng.random_range(0..known_n);
            // quantized so that ties between scores occur
            let tau = (rng.random_range(0..=40) as f64) / 40.0;
            let fired = tau < phi;
            AttackOutcome {
                window_id: format!("{sid}#{i}"),
                subject_id: sid,
                stage1,
                predicted: if fired { Label::Unknown } else { Label::Known(stage1) },
                tau,
                phi_used: phi,
                stage2_fired: fired,
            }
        })
        .collect();
    (outcomes, known)
}

/// Runs every randomized comparison `instances` times per operation and
/// returns the number of instances checked. Panics on the first mismatch.
pub fn run_all(rng: &mut ChaCha8Rng, instances: usize) -> usize {
    let mut checked = 0;
    for _ in 0..instances {
        let n = rng.random_range(1..=200usize);

        // softmax, both the tensor op and stage 1
        let x = logits(rng, n);
        let want = softmax(&x);
        let got = lib_softmax(&Tensor::from_vec(x.clone()), 0).unwrap();
        for (a, b) in got.data().iter().zip(&want) {
            assert!(close(*a, *b), "softmax {a} vs {b}");
        }
        let (class, tau) = stage1_match(&x).unwrap();
        let top = want.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = x.iter().position(|&v| v == x.iter().copied().fold(f64::NEG_INFINITY, f64::max)).unwrap();
        assert_eq!(class, first);
        assert!(close(tau, top), "tau {tau} vs {top}");

        // layer norm over a random matrix
        let rows = rng.random_range(1..=10usize);
        let cols = (n / rows).max(2);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-5.0..5.0)).collect();
        let gain: Vec<f64> = (0..cols).map(|_| rng.random_range(0.5..2.0)).collect();
        let bias: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::new(vec![rows, cols], data.clone()).unwrap());
        let gv = tape.constant(Tensor::from_vec(gain.clone()));
        let bv = tape.constant(Tensor::from_vec(bias.clone()));
        let y = tape.layer_norm(xv, gv, bv).unwrap();
        for (r, chunk) in data.chunks(cols).enumerate() {
            let want = layer_norm_row(chunk, &gain, &bias);
            let got = &tape.value(y).data()[r * cols..(r + 1) * cols];
            for (a, b) in got.iter().zip(&want) {
                assert!(close(*a, *b), "layer_norm {a} vs {b}");
            }
        }

        // cross entropy
        let c = rng.random_range(1..=12usize);
        let m = rng.random_range(1..=(200 / c).clamp(1, 16));
        let z: Vec<Vec<f64>> = (0..m).map(|_| logits(rng, c)).collect();
        let t: Vec<usize> = (0..m).map(|_| rng.random_range(0..c)).collect();
        let mut tape = Tape::new();
        let zv = tape.constant(Tensor::from_rows(&z));
        let loss = tape.cross_entropy(zv, &t).unwrap();
        let want = cross_entropy(&z, &t);
        assert!(close(tape.scalar(loss), want), "cross entropy {} vs {want}", tape.scalar(loss));

        // nearest-rank percentile, with ties
        let conf: Vec<f64> = (0..n).map(|_| (rng.random_range(0..=50) as f64) / 50.0).collect();
        let p = match rng.random_range(0..4) {
            0 => 0.0,
            1 => 100.0,
            _ => rng.random_range(0.0..=100.0),
        };
        let phi = calibrate_threshold(&conf, &ThresholdPolicy::Percentile { p }).unwrap();
        assert_eq!(phi, nearest_rank(&conf, p), "percentile p={p}");
        assert!(conf.contains(&phi));

        // EER
        let ng = rng.random_range(1..=n.max(1));
        let ni = rng.random_range(1..=n.max(1));
        let q = |rng: &mut ChaCha8Rng| (rng.random_range(0..=30) as f64) / 30.0;
        let g: Vec<f64> = (0..ng).map(|_| q(rng)).collect();
        let im: Vec<f64> = (0..ni).map(|_| q(rng)).collect();
        let got = eer(&g, &im).unwrap();
        let (e, th) = eer_oracle(&g, &im);
        assert!(close(got.eer, e), "eer {} vs {e}", got.eer);
        assert_eq!(got.threshold, th, "eer threshold");

        // label metrics
        let classes = rng.random_range(1..=6usize);
        let mut truth: Vec<Label> = (0..n).map(|_| label(rng, classes, 0.3)).collect();
        if truth.iter().all(|t| t.is_unknown()) {
            truth[0] = Label::Known(0);
        }
        let pred: Vec<Label> = truth
            .iter()
            .map(|t| if rng.random_bool(0.6) { *t } else { label(rng, classes, 0.3) })
            .collect();
        let sm = sample_metrics(&pred, &truth).unwrap();
        let (a, p_, r, f) = sample_oracle(&pred, &truth);
        assert!(close(sm.accuracy, a) && close(sm.precision, p_) && close(sm.recall, r) && close(sm.f1, f));

        let cc = confusion(&pred, &truth).unwrap();
        for (&cls, k) in &cc.per_class {
            let o = class_counts(&pred, &truth, cls);
            assert_eq!((k.tp, k.fp, k.fn_), (o.tp, o.fp, o.fn_), "class {cls}");
        }
        let uk = pred.iter().zip(&truth).filter(|(p, t)| t.is_unknown() && !p.is_unknown()).count();
        let ku = pred.iter().zip(&truth).filter(|(p, t)| !t.is_unknown() && p.is_unknown()).count();
        let nu = truth.iter().filter(|t| t.is_unknown()).count();
        assert_eq!((cc.uk_to_k, cc.k_to_u, cc.unknown_total, cc.known_total), (uk, ku, nu, n - nu));
        let mr = misclassification_rates(&pred, &truth).unwrap();
        assert_eq!(mr.uk_to_k + mr.k_to_u, uk + ku);
        assert!(close(mr.total, (uk + ku) as f64 / n as f64));
        assert!(close_opt(mr.fpr, (nu > 0).then(|| uk as f64 / nu as f64)));
        assert!(close_opt(mr.fnr, (nu < n).then(|| ku as f64 / (n - nu) as f64)));

        // participant votes
        let people = rng.random_range(1..=10usize);
        let truth_map: BTreeMap<String, Label> =
            (0..people).map(|i| (format!("p{i}"), label(rng, classes, 0.4))).collect();
        let windows: Vec<(String, Label)> =
            (0..n).map(|_| (format!("p{}", rng.random_range(0..people)), label(rng, classes, 0.4))).collect();
        let refs: Vec<(&str, Label)> = windows.iter().map(|(s, l)| (s.as_str(), *l)).collect();
        let pm = participant_metrics(&refs, &truth_map).unwrap();
        let (mut kn, mut un, mut linked, mut prot) = (0, 0, 0, 0);
        for (sid, t) in &truth_map {
            let votes: Vec<Label> = windows.iter().filter(|(s, _)| s == sid).map(|(_, l)| *l).collect();
            if votes.is_empty() {
                continue;
            }
            let v = vote_oracle(&votes);
            if t.is_unknown() {
                un += 1;
                prot += (v == Label::Unknown) as usize;
            } else {
                kn += 1;
                linked += (v == *t) as usize;
            }
        }
        assert_eq!((pm.known_participants, pm.unknown_participants, pm.linked, pm.protected), (kn, un, linked, prot));

        // sweep and the full report
        let (outcomes, known) = random_outcomes(rng, n);
        let taus: Vec<f64> = outcomes.iter().map(|o| o.tau).collect();
        let is_known: Vec<bool> = outcomes.iter().map(|o| known.contains_key(&o.subject_id)).collect();
        let thresholds = [0.0, 0.01, 0.25, 0.5, 0.75, 1.0, 1.5];
        let rows = confidence_sweep(&taus, &is_known, &thresholds).unwrap();
        let nk = is_known.iter().filter(|k| **k).count();
        for (row, &th) in rows.iter().zip(&thresholds) {
            let ku = taus.iter().zip(&is_known).filter(|(t, k)| **k && **t < th).count();
            let uk = taus.iter().zip(&is_known).filter(|(t, k)| !**k && **t >= th).count();
            let pct = |a: usize, b: usize| (b > 0).then(|| 100.0 * a as f64 / b as f64);
            assert!(close_opt(row.k_to_u_pct, pct(ku, nk)));
            assert!(close_opt(row.u_to_k_pct, pct(uk, n - nk)));
            assert!(close(row.total_pct, 100.0 * (uk + ku) as f64 / n as f64));
        }
        if is_known.iter().any(|k| *k) {
            check_report(&outcomes, &known, &thresholds);
        }
        checked += 1;
    }
    checked
}

/// Recomputes every report field from raw (truth, prediction, tau) triples.
fn check_report(outcomes: &[AttackOutcome], known: &BTreeMap<String, usize>, thresholds: &[f64]) {
    let phi = outcomes[0].phi_used;
    let r = MetricsReport::compute(outcomes, known, phi, thresholds).unwrap();
    let truth: Vec<Label> = outcomes
        .iter()
        .map(|o| known.get(&o.subject_id).map_or(Label::Unknown, |c| Label::Known(*c)))
        .collect();
    let pred: Vec<Label> = outcomes.iter().map(|o| o.predicted).collect();
    let (a, p, rc, f) = sample_oracle(&pred, &truth);
    assert!(close(r.accuracy, a) && close(r.precision, p) && close(r.recall, rc) && close(r.f1, f));
    let kn: Vec<usize> = (0..truth.len()).filter(|&i| !truth[i].is_unknown()).collect();
    let ka = kn.iter().filter(|&&i| pred[i] == truth[i]).count() as f64 / kn.len() as f64;
    assert!(close_opt(r.known_window_accuracy, Some(ka)));
    let un = truth.len() - kn.len();
    let uk = (0..truth.len()).filter(|&i| truth[i].is_unknown() && !pred[i].is_unknown()).count();
    assert!(close_opt(r.fpr, (un > 0).then(|| uk as f64 / un as f64)));
    assert!(close_opt(r.tnr, (un > 0).then(|| 1.0 - uk as f64 / un as f64)));
    let genuine: Vec<f64> = kn
        .iter()
        .filter(|&&i| Label::Known(outcomes[i].stage1) == truth[i])
        .map(|&i| outcomes[i].tau)
        .collect();
    let impostor: Vec<f64> = (0..truth.len()).filter(|&i| truth[i].is_unknown()).map(|i| outcomes[i].tau).collect();
    if genuine.is_empty() || impostor.is_empty() {
        assert_eq!(r.eer, None);
    } else {
        let (e, t) = eer_oracle(&genuine, &impostor);
        assert!(close_opt(r.eer, Some(e)));
        assert_eq!(r.eer_threshold, Some(t));
    }
}
