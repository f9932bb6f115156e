//! Dataset manifests, CSV ingestion, synthetic identities, label encoding
//! and run-bundle persistence.

pub mod bundle;
pub mod labels;
pub mod manifest;
pub mod synth;

use sha2::{Digest, Sha256};

pub use bundle::{load_bundle, persist_run, verify_bundle, BundleInputs, RunBundle, RunReport};
pub use labels::{encode_labels, IdentityLabelMap};
pub use manifest::{export_csv, ingest_csv, DatasetManifest, ManifestEntry, SyntheticSource};
pub use synth::{synthesize, SyntheticIdentitySpec, Wave};

use crate::signal::EcgRecord;

/// Digest of record identities, rates and sample bit patterns.
pub fn dataset_hash(records: &[EcgRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        for s in [&r.dataset_id, &r.subject_id] {
            h.update((s.len() as u64).to_le_bytes());
            h.update(s.as_bytes());
        }
        h.update(r.sampling_rate_hz.to_bits().to_le_bytes());
        h.update((r.samples.len() as u64).to_le_bytes());
        for v in &r.samples {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}
