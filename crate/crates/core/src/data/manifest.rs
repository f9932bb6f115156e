//! Dataset manifests and the CSV interchange format.
//!
//! A CSV holds one amplitude per line, or `time,amplitude` pairs whose time
//! column must be strictly increasing. Blank lines and `#` comments are
//! skipped. The sampling rate always comes from the manifest.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::synth::{synthesize, SyntheticIdentitySpec};
use crate::error::{Error, Result};
use crate::signal::EcgRecord;

pub const SCHEMA_VERSION: u32 = 1;

/// Fraction of data lines that may be malformed before ingestion fails.
pub const MALFORMED_BUDGET: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub duration_s: f64,
    pub spec: SyntheticIdentitySpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub subject_id: String,
    /// CSV file, relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSource>,
    pub sampling_rate_hz: f64,
    /// Health-condition tag; metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub dataset_id: String,
    pub subjects: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "manifest schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut seen = HashSet::new();
        for e in &self.subjects {
            if !seen.insert(&e.subject_id) {
                return Err(Error::Config(format!(
                    "subject `{}` listed twice in dataset `{}`",
                    e.subject_id, self.dataset_id
                )));
            }
            if e.path.is_some() == e.synthetic.is_some() {
                return Err(Error::Config(format!(
                    "subject `{}` needs exactly one of `path` or `synthetic`",
                    e.subject_id
                )));
            }
            if !(e.sampling_rate_hz > 0.0) {
                return Err(Error::Config(format!("subject `{}` has a non-positive sampling rate", e.subject_id)));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Reads or renders every subject. Paths resolve against `base_dir`.
    pub fn load_records(&self, base_dir: &Path) -> Result<Vec<EcgRecord>> {
        self.validate()?;
        self.subjects
            .par_iter()
            .map(|e| match (&e.path, &e.synthetic) {
                (Some(p), _) => ingest_csv(&base_dir.join(p), &e.subject_id, &self.dataset_id, e.sampling_rate_hz),
                (None, Some(s)) => synthesize(&s.spec, &e.subject_id, &self.dataset_id, s.duration_s, e.sampling_rate_hz),
                (None, None) => unreachable!("validated"),
            })
            .collect()
    }
}

/// Parses a CSV recording.
pub fn ingest_csv(path: &Path, subject_id: &str, dataset_id: &str, rate_hz: f64) -> Result<EcgRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fail = |message: String| Error::Ingest {
        path: path.to_path_buf(),
        message,
    };
    let mut values = Vec::new();
    let mut last_time: Option<(f64, usize)> = None;
    let mut malformed = Vec::new();
    let mut data_lines = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        data_lines += 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Option<Vec<f64>> = fields
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        match (parsed.as_deref(), fields.len()) {
            (Some([v]), 1) => values.push(*v),
            (Some([t, v]), 2) => {
                if let Some((prev, at)) = last_time {
                    if !(*t > prev) {
                        return Err(fail(format!(
                            "time column not strictly increasing at line {} (after line {at})",
                            i + 1
                        )));
                    }
                }
                last_time = Some((*t, i + 1));
                values.push(*v);
            }
            _ => malformed.push(i + 1),
        }
    }
    if data_lines == 0 {
        return Err(fail("file has no samples".into()));
    }
    if malformed.len() as f64 > MALFORMED_BUDGET * data_lines as f64 {
        let shown: Vec<String> = malformed.iter().take(20).map(ToString::to_string).collect();
        return Err(fail(format!(
            "{} of {data_lines} lines malformed (budget {}%): lines {}{}",
            malformed.len(),
            MALFORMED_BUDGET * 100.0,
            shown.join(", "),
            if malformed.len() > 20 { ", ..." } else { "" }
        )));
    }
    if !malformed.is_empty() {
        log::warn!("{}: skipped {} malformed lines", path.display(), malformed.len());
    }
    EcgRecord::new(subject_id, dataset_id, rate_hz, values)
}

/// Writes a record in the one-column format. Values use the shortest
/// representation that parses back to the same bits.
pub fn export_csv(path: &Path, record: &EcgRecord) -> Result<()> {
    let mut s = String::with_capacity(record.samples.len() * 22 + 64);
    writeln!(s, "# subject {} ({} Hz)", record.subject_id, record.sampling_rate_hz).unwrap();
    for v in &record.samples {
        writeln!(s, "{v}").unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn three_lines() {
        let d = tempfile::tempdir().unwrap();
        let r = ingest_csv(&write(d.path(), "a.csv", "0.1\n0.2\n0.3"), "a", "x", 250.0).unwrap();
        assert_eq!(r.samples, [0.1, 0.2, 0.3]);
        assert_eq!(r.sampling_rate_hz, 250.0);
    }

    #[test]
    fn two_columns_and_comments() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "a.csv", "# header\n0,1.5\n0.004,2.5\n\n0.008,-1\n");
        assert_eq!(ingest_csv(&p, "a", "x", 250.0).unwrap().samples, [1.5, 2.5, -1.0]);
        let p = write(d.path(), "b.csv", "0,1\n0,2\n");
        assert!(ingest_csv(&p, "a", "x", 250.0).is_err());
    }

    #[test]
    fn malformed_budget() {
        let d = tempfile::tempdir().unwrap();
        let mut text: String = (0..200).map(|i| format!("{i}\n")).collect();
        text.push_str("oops\n");
        assert_eq!(ingest_csv(&write(d.path(), "a.csv", &text), "a", "x", 250.0).unwrap().samples.len(), 200);
        text.push_str("1,2,3\nnan\n");
        let err = ingest_csv(&write(d.path(), "b.csv", &text), "a", "x", 250.0).unwrap_err();
        assert!(err.to_string().contains("201"), "{err}");
        assert!(ingest_csv(&write(d.path(), "c.csv", "# only\n"), "a", "x", 250.0).is_err());
    }

    #[test]
    fn manifest_checks() {
        let ok = "schema_version = 1\ndataset_id = \"d\"\n[[subjects]]\nsubject_id = \"a\"\npath = \"a.csv\"\nsampling_rate_hz = 250.0\n";
        DatasetManifest::from_toml(ok).unwrap();
        assert!(DatasetManifest::from_toml(&ok.replace("schema_version = 1", "schema_version = 7")).is_err());
        assert!(DatasetManifest::from_toml(&format!("{ok}extra = 1\n")).is_err());
        let dup = format!("{ok}[[subjects]]\nsubject_id = \"a\"\npath = \"b.csv\"\nsampling_rate_hz = 250.0\n");
        assert!(DatasetManifest::from_toml(&dup).is_err());
    }
}
