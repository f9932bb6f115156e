//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod oracles;

use std::path::{Path, PathBuf};

use ecg_linkage::cli::cmd_synth;
use ecg_linkage::cli::config::RunConfig;
use ecg_linkage::model::ViTConfig;

/// The desk-scale benchmark: 10 identities of 120 s at 250 Hz.
pub const BENCH_IDENTITIES: usize = 10;
pub const BENCH_DURATION_S: f64 = 120.0;
pub const BENCH_RATE_HZ: f64 = 250.0;
pub const BENCH_COHORT_SEED: u64 = 0;

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Writes the benchmark cohort under `dir` and returns its manifest.
pub fn write_benchmark(dir: &Path) -> PathBuf {
    cmd_synth(BENCH_IDENTITIES, BENCH_DURATION_S, BENCH_RATE_HZ, BENCH_COHORT_SEED, dir, false).expect("synth")
}

/// The shipped demo config, pointed at `manifest` and writing under `out`.
pub fn demo_config(manifest: &Path, out: &Path) -> RunConfig {
    let path = workspace_root().join("demo/demo.toml");
    let mut cfg = RunConfig::load(&path).expect("demo config");
    cfg.manifest = manifest.to_path_buf();
    cfg.output_dir = out.to_path_buf();
    cfg
}

/// L=8, P=4, d=4, H=2, one layer.
pub fn micro_vit(classes: usize) -> ViTConfig {
    ViTConfig {
        patch_size: 4,
        embed_dim: 4,
        num_layers: 1,
        num_heads: 2,
        mlp_dim: 8,
        survival_prob: 1.0,
        num_classes: classes,
        window_len: 8,
    }
}
