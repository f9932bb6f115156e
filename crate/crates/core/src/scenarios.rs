//! Experiment construction: known/unknown identity partition, stratified
//! train/val/test splits and the partial, full and noisy scenarios.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::IdentityLabelMap;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::seed;
use crate::signal::{add_noise_renormalize, Window};

pub const DEFAULT_NOISE_SIGMA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    #[serde(default = "default_known_frac")]
    pub known_identity_frac: f64,
    /// Derived from the run seed when the plan is built.
    #[serde(default)]
    pub seed: u64,
}

fn default_known_frac() -> f64 {
    0.7
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self::new(0.7, 0.15, 0.15)
    }
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64) -> Self {
        Self {
            train_frac: train,
            val_frac: val,
            test_frac: test,
            known_identity_frac: default_known_frac(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = [self.train_frac, self.val_frac, self.test_frac];
        if f.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config(format!("split fractions must be positive, got {f:?}")));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1, got {f:?}")));
        }
        if !(self.known_identity_frac > 0.0 && self.known_identity_frac <= 1.0) {
            return Err(Error::Config(format!(
                "known_identity_frac must be in (0, 1], got {}",
                self.known_identity_frac
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Partial,
    Full,
    Noisy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Only meaningful for `noisy`; defaults to 0.05 there.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Partial,
            noise_sigma: None,
        }
    }
}

impl ScenarioConfig {
    pub fn noisy(sigma: f64) -> Self {
        Self {
            kind: ScenarioKind::Noisy,
            noise_sigma: Some(sigma),
        }
    }

    pub fn of(kind: ScenarioKind) -> Self {
        Self { kind, noise_sigma: None }
    }

    /// Effective test-window noise level.
    pub fn sigma(&self) -> f64 {
        match self.kind {
            ScenarioKind::Noisy => self.noise_sigma.unwrap_or(DEFAULT_NOISE_SIGMA),
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.noise_sigma) {
            (_, Some(s)) if !(s >= 0.0 && s.is_finite()) => {
                Err(Error::Config(format!("noise_sigma must be finite and >= 0, got {s}")))
            }
            (ScenarioKind::Partial | ScenarioKind::Full, Some(s)) if s > 0.0 => Err(Error::Config(
                "noise_sigma > 0 is only allowed for the noisy scenario".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// A fully specified experiment: who is known, which windows go where, and
/// how the test split is perturbed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub scenario: ScenarioConfig,
    /// Split actually applied; `full` forces `known_identity_frac = 1`.
    pub split: SplitSpec,
    pub dataset_hash: String,
    /// Known identities in class-index order.
    pub known: Vec<String>,
    pub unknown: Vec<String>,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub noise_seed: u64,
}

/// Shuffles `identities` by `seed` and keeps `⌈frac·n⌉` as known. Both
/// returned lists preserve the input order.
pub fn partition_identities(identities: &[String], frac: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    let n = identities.len();
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::Config(format!("known_identity_frac must be in (0, 1], got {frac}")));
    }
    if frac < 1.0 && n < 2 {
        return Err(Error::Config("an open-set partition needs at least 2 identities".into()));
    }
    let mut k = ((frac * n as f64) - 1e-9).ceil() as usize;
    if frac < 1.0 {
        // keep at least one identity unknown
        k = k.min(n - 1);
    }
    if k == 0 {
        return Err(Error::Config(format!("known_identity_frac {frac} leaves no known identity among {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, "partition")));
    let known: HashSet<usize> = order[..k].iter().copied().collect();
    let (mut kn, mut un) = (Vec::with_capacity(k), Vec::with_capacity(n - k));
    for (i, id) in identities.iter().enumerate() {
        if known.contains(&i) {
            kn.push(id.clone());
        } else {
            un.push(id.clone());
        }
    }
    Ok((kn, un))
}

/// Per-identity split sizes: largest remainder, ties to train then val,
/// and at least one window per split.
pub fn split_counts(n: usize, spec: &SplitSpec) -> [usize; 3] {
    let fr = [spec.train_frac, spec.val_frac, spec.test_frac];
    let exact: Vec<f64> = fr.iter().map(|f| f * n as f64).collect();
    let mut counts: [usize; 3] = [0; 3];
    for i in 0..3 {
        counts[i] = (exact[i] + 1e-9).floor() as usize;
    }
    let mut rest = n.saturating_sub(counts.iter().sum());
    let mut order = [0usize, 1, 2];
    // stable sort keeps train > val > test among equal remainders
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    for i in 0..3 {
        if counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (counts[j], 3 - j)).unwrap();
            counts[donor] -= 1;
            counts[i] = 1;
        }
    }
    counts
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Stratified window split. Every unknown-identity window goes to test.
pub fn make_splits(windows: &[Window], spec: &SplitSpec, known: &[String]) -> Result<Splits> {
    spec.validate()?;
    let known_set: HashSet<&str> = known.iter().map(String::as_str).collect();
    let mut by_subject: BTreeMap<&str, Vec<&Window>> = BTreeMap::new();
    for w in windows {
        by_subject.entry(&w.subject_id).or_default().push(w);
    }
    let mut s = Splits::default();
    let split_seed = seed::derive(spec.seed, "split");
    for (subject, mut ws) in by_subject {
        ws.sort_by_key(|w| w.offset);
        let ids: Vec<String> = ws.iter().map(|w| w.id.clone()).collect();
        if !known_set.contains(subject) {
            s.test.extend(ids);
            continue;
        }
        if ids.len() < 3 {
            return Err(Error::Config(format!(
                "known identity `{subject}` has {} windows; at least 3 are needed",
                ids.len()
            )));
        }
        let mut ids = ids;
        ids.shuffle(&mut seed::rng(seed::derive(split_seed, subject)));
        let [a, b, _] = split_counts(ids.len(), spec);
        s.train.extend_from_slice(&ids[..a]);
        s.val.extend_from_slice(&ids[a..a + b]);
        s.test.extend_from_slice(&ids[a + b..]);
    }
    for k in known {
        if !windows.iter().any(|w| &w.subject_id == k) {
            return Err(Error::Config(format!("known identity `{k}` has no windows")));
        }
    }
    Ok(s)
}

/// Partitions identities, splits windows and records the scenario.
///
/// `identities` must be in class-index order. The split seed is derived
/// from `run_seed`.
pub fn build_plan(
    windows: &[Window],
    identities: &[String],
    split: &SplitSpec,
    scenario: &ScenarioConfig,
    dataset_hash: &str,
    run_seed: u64,
) -> Result<ExperimentPlan> {
    scenario.validate()?;
    let mut split = split.clone();
    split.seed = seed::derive(run_seed, "split");
    if scenario.kind == ScenarioKind::Full {
        split.known_identity_frac = 1.0;
    }
    split.validate()?;
    let (known, unknown) = partition_identities(identities, split.known_identity_frac, split.seed)?;
    let s = make_splits(windows, &split, &known)?;
    Ok(ExperimentPlan {
        scenario: scenario.clone(),
        split,
        dataset_hash: dataset_hash.to_string(),
        known,
        unknown,
        train: s.train,
        val: s.val,
        test: s.test,
        noise_seed: seed::derive(run_seed, "scenario-noise"),
    })
}

/// Windows of each split, labelled with their class (or Unknown).
#[derive(Clone, Debug, PartialEq)]
pub struct SplitWindows {
    pub labels: IdentityLabelMap,
    pub train: Vec<Window>,
    pub val: Vec<Window>,
    pub test: Vec<Window>,
}

impl ExperimentPlan {
    pub fn label_map(&self) -> Result<IdentityLabelMap> {
        IdentityLabelMap::new(self.known.clone())
    }

    /// Checks the structural invariants of a plan.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for id in self.train.iter().chain(&self.val).chain(&self.test) {
            if !seen.insert(id.as_str()) {
                return Err(Error::Config(format!("window `{id}` appears in two splits")));
            }
        }
        let unknown: HashSet<&str> = self.unknown.iter().map(String::as_str).collect();
        if self.known.iter().any(|k| unknown.contains(k.as_str())) {
            return Err(Error::Config("an identity is both known and unknown".into()));
        }
        Ok(())
    }

    /// Materializes the splits from `windows` and applies the scenario's
    /// test-set perturbation.
    pub fn materialize(&self, windows: &[Window]) -> Result<SplitWindows> {
        self.validate()?;
        let labels = self.label_map()?;
        let by_id: HashMap<&str, &Window> = windows.iter().map(|w| (w.id.as_str(), w)).collect();
        let pick = |ids: &[String]| -> Result<Vec<Window>> {
            ids.iter()
                .map(|id| {
                    let w = by_id
                        .get(id.as_str())
                        .ok_or_else(|| Error::Input(format!("plan references missing window `{id}`")))?;
                    let mut w = (*w).clone();
                    w.label = Some(labels.get(&w.subject_id).map_or(Label::Unknown, Label::Known));
                    Ok(w)
                })
                .collect()
        };
        let (train, val, mut test) = (pick(&self.train)?, pick(&self.val)?, pick(&self.test)?);
        if train.iter().chain(&val).any(|w| w.label == Some(Label::Unknown)) {
            return Err(Error::Config("unknown identity found outside the test split".into()));
        }
        let sigma = self.scenario.sigma();
        if sigma > 0.0 {
            for w in &mut test {
                let mut rng = seed::rng(seed::derive(self.noise_seed, &w.id));
                let (v, flat) = add_noise_renormalize(&w.values, sigma, &mut rng)?;
                w.values = v;
                w.flat = flat;
            }
        }
        Ok(SplitWindows { labels, train, val, test })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
