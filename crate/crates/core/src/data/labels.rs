use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::manifest::DatasetManifest;
use crate::error::{Error, Result};

/// Bijection between subject ids and dense class indices `0..C`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct IdentityLabelMap {
    subjects: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdentityLabelMap {
    pub fn new(subjects: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(subjects.len());
        for (i, s) in subjects.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::Input(format!("subject id `{s}` listed twice")));
            }
        }
        Ok(Self { subjects, index })
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn subject(&self, class: usize) -> Result<&str> {
        self.subjects
            .get(class)
            .map(String::as_str)
            .ok_or(Error::Label {
                label: class,
                classes: self.subjects.len(),
            })
    }

    pub fn index(&self, subject: &str) -> Result<usize> {
        self.index
            .get(subject)
            .copied()
            .ok_or_else(|| Error::Input(format!("subject `{subject}` is not a known class")))
    }

    pub fn get(&self, subject: &str) -> Option<usize> {
        self.index.get(subject).copied()
    }

    /// The sub-map over `keep`, preserving this map's relative order and
    /// re-indexing densely.
    pub fn restrict(&self, keep: &[String]) -> Result<Self> {
        let mut pos = Vec::with_capacity(keep.len());
        for s in keep {
            pos.push(self.index(s)?);
        }
        pos.sort_unstable();
        Self::new(pos.into_iter().map(|i| self.subjects[i].clone()).collect())
    }
}

impl TryFrom<Vec<String>> for IdentityLabelMap {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<IdentityLabelMap> for Vec<String> {
    fn from(m: IdentityLabelMap) -> Self {
        m.subjects
    }
}

/// Label map over every subject of `manifests`, ordered by dataset id then
/// subject id. A subject id in two entries is a collision error.
pub fn encode_labels(manifests: &[DatasetManifest]) -> Result<IdentityLabelMap> {
    let mut all: Vec<(&str, &str)> = Vec::new();
    let mut seen: HashMap<&str, &str> = HashMap::new();
    for m in manifests {
        for e in &m.subjects {
            if let Some(first) = seen.insert(&e.subject_id, &m.dataset_id) {
                return Err(Error::LabelCollision {
                    subject: e.subject_id.clone(),
                    first: first.to_string(),
                    second: m.dataset_id.clone(),
                });
            }
            all.push((&m.dataset_id, &e.subject_id));
        }
    }
    if all.is_empty() {
        return Err(Error::Input("no subjects to encode".into()));
    }
    all.sort_unstable();
    IdentityLabelMap::new(all.into_iter().map(|(_, s)| s.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest::{ManifestEntry, SCHEMA_VERSION};

    fn manifest(id: &str, subjects: &[&str]) -> DatasetManifest {
        DatasetManifest {
            schema_version: SCHEMA_VERSION,
            dataset_id: id.into(),
            subjects: subjects
                .iter()
                .map(|s| ManifestEntry {
                    subject_id: s.to_string(),
                    path: Some(format!("{s}.csv").into()),
                    synthetic: None,
                    sampling_rate_hz: 250.0,
                    condition: None,
                })
                .collect(),
        }
    }

    #[test]
    fn sorted_and_stable() {
        let m = [manifest("d", &["b", "a"])];
        let map = encode_labels(&m).unwrap();
        assert_eq!((map.index("a").unwrap(), map.index("b").unwrap()), (0, 1));
        assert_eq!(encode_labels(&m).unwrap(), map);
    }

    #[test]
    fn dataset_then_subject_order() {
        let map = encode_labels(&[manifest("z", &["a"]), manifest("m", &["b"])]).unwrap();
        assert_eq!(map.subjects(), ["b", "a"]);
    }

    #[test]
    fn collision() {
        let err = encode_labels(&[manifest("x", &["s1"]), manifest("y", &["s1"])]).unwrap_err();
        assert!(matches!(err, Error::LabelCollision { .. }));
    }

    #[test]
    fn restrict_reindexes() {
        let map = IdentityLabelMap::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let r = map.restrict(&["c".into(), "a".into()]).unwrap();
        assert_eq!(r.subjects(), ["a", "c"]);
        assert_eq!(r.index("c").unwrap(), 1);
        assert!(r.subject(2).is_err());
    }
}
