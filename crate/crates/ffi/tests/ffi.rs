use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use ecg_linkage::model::checkpoint::Checkpoint;
use ecg_linkage::model::{Classifier, Model, ViTConfig, VitModel};
use ecg_linkage_ffi::*;

fn tiny_model() -> VitModel {
    let cfg = ViTConfig {
        patch_size: 4,
        embed_dim: 4,
        num_layers: 1,
        num_heads: 2,
        mlp_dim: 8,
        survival_prob: 1.0,
        num_classes: 3,
        window_len: 8,
    };
    VitModel::new(cfg, 11).unwrap()
}

fn save_tiny(dir: &Path) -> (PathBuf, VitModel) {
    let m = tiny_model();
    let path = dir.join("model.ckpt");
    Checkpoint::new(Model::Vit(m.clone())).save(&path).unwrap();
    (path, m)
}

fn last_error() -> String {
    let p = elk_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn stage1_and_threshold() {
    let mut label = 0usize;
    let mut tau = 0.0;
    let z = [5.0, 1.0, 1.0];
    assert_eq!(unsafe { elk_stage1_match(z.as_ptr(), 3, &mut label, &mut tau) }, ElkStatus::Ok);
    let oracle = 1.0 / (1.0 + 2.0 * (-4.0f64).exp());
    assert_eq!(label, 0);
    assert!((tau - oracle).abs() < 1e-12);
    assert!(elk_last_error().is_null());

    let mut phi = 0.0;
    let c = [0.2, 0.4, 0.6, 0.8, 1.0];
    assert_eq!(unsafe { elk_calibrate_percentile(c.as_ptr(), 5, 20.0, &mut phi) }, ElkStatus::Ok);
    assert_eq!(phi, 0.2);
    assert_eq!(unsafe { elk_calibrate_percentile(c.as_ptr(), 5, 100.0, &mut phi) }, ElkStatus::Ok);
    assert_eq!(phi, 1.0);
    assert_eq!(unsafe { elk_calibrate_percentile(ptr::null(), 0, 5.0, &mut phi) }, ElkStatus::Calibration);
    assert!(last_error().contains("empty"));
    assert_eq!(unsafe { elk_calibrate_percentile(c.as_ptr(), 5, 101.0, &mut phi) }, ElkStatus::Parameter);

    assert_eq!(elk_stage2_is_unknown(0.03, 0.05), 1);
    assert_eq!(elk_stage2_is_unknown(0.05, 0.05), 0);
    assert_eq!(elk_stage2_is_unknown(0.0, 0.0), 0);
}

#[test]
fn null_pointers_are_rejected() {
    let z = [1.0, 2.0];
    let mut tau = 0.0;
    assert_eq!(unsafe { elk_stage1_match(z.as_ptr(), 2, ptr::null_mut(), &mut tau) }, ElkStatus::InvalidArgument);
    assert!(last_error().contains("label"));
    assert_eq!(unsafe { elk_stage1_match(ptr::null(), 2, ptr::null_mut(), &mut tau) }, ElkStatus::InvalidArgument);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { elk_model_load(ptr::null(), &mut out) }, ElkStatus::InvalidArgument);
    let mut n = 0usize;
    assert_eq!(unsafe { elk_model_num_classes(ptr::null(), &mut n) }, ElkStatus::InvalidArgument);
    unsafe { elk_model_free(ptr::null_mut()) };
}

#[test]
fn eer_matches_core() {
    let g = [0.9, 0.8, 0.7, 0.3];
    let i = [0.6, 0.2, 0.1];
    let (mut e, mut t) = (0.0, 0.0);
    assert_eq!(unsafe { elk_eer(g.as_ptr(), 4, i.as_ptr(), 3, &mut e, &mut t) }, ElkStatus::Ok);
    let want = ecg_linkage::metrics::eer(&g, &i).unwrap();
    assert_eq!(e, want.eer);
    assert_eq!(t, want.threshold);
    assert_eq!(unsafe { elk_eer(g.as_ptr(), 4, ptr::null(), 0, &mut e, &mut t) }, ElkStatus::Metric);
}

#[test]
fn normalize_and_resample() {
    let v = [2.0, 4.0, 3.0, 6.0];
    let mut out = [0.0; 4];
    let mut flat = -1;
    assert_eq!(unsafe { elk_normalize(v.as_ptr(), 4, out.as_mut_ptr(), &mut flat) }, ElkStatus::Ok);
    assert_eq!(out, [0.0, 0.5, 0.25, 1.0]);
    assert_eq!(flat, 0);
    let c = [3.0; 4];
    assert_eq!(unsafe { elk_normalize(c.as_ptr(), 4, out.as_mut_ptr(), &mut flat) }, ElkStatus::Ok);
    assert_eq!((out, flat), ([0.0; 4], 1));

    let x: Vec<f64> = (0..500).map(|i| (i as f64 * 0.05).sin()).collect();
    let mut len = 0usize;
    let s = unsafe { elk_resample(x.as_ptr(), x.len(), 500.0, 250.0, ptr::null_mut(), &mut len) };
    assert_eq!(s, ElkStatus::Ok);
    let mut y = vec![0.0; len];
    let mut small = len - 1;
    let s = unsafe { elk_resample(x.as_ptr(), x.len(), 500.0, 250.0, y.as_mut_ptr(), &mut small) };
    assert_eq!(s, ElkStatus::BufferTooSmall);
    let mut cap = len;
    let s = unsafe { elk_resample(x.as_ptr(), x.len(), 500.0, 250.0, y.as_mut_ptr(), &mut cap) };
    assert_eq!(s, ElkStatus::Ok);
    let rec = ecg_linkage::signal::EcgRecord::new("a", "b", 500.0, x).unwrap();
    assert_eq!(y, ecg_linkage::signal::resample(&rec, 250.0).unwrap().samples);
}

#[test]
fn model_handle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (path, m) = save_tiny(dir.path());
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { elk_model_load(c.as_ptr(), &mut h) }, ElkStatus::Ok);
    let (mut classes, mut len) = (0, 0);
    assert_eq!(unsafe { elk_model_num_classes(h, &mut classes) }, ElkStatus::Ok);
    assert_eq!(unsafe { elk_model_window_len(h, &mut len) }, ElkStatus::Ok);
    assert_eq!((classes, len), (3, 8));

    let w = [0.0, 0.2, 1.0, 0.7, 0.3, 0.1, 0.4, 0.5];
    let mut z = [0.0; 3];
    assert_eq!(unsafe { elk_model_logits(h, w.as_ptr(), 8, z.as_mut_ptr(), 3) }, ElkStatus::Ok);
    assert_eq!(z.to_vec(), m.logits(&w).unwrap());
    assert_eq!(unsafe { elk_model_logits(h, w.as_ptr(), 4, z.as_mut_ptr(), 3) }, ElkStatus::Input);
    unsafe { elk_model_free(h) };

    let bad = CString::new(dir.path().join("missing.ckpt").to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { elk_model_load(bad.as_ptr(), &mut h) }, ElkStatus::Io);
    assert!(h.is_null());
    std::fs::write(dir.path().join("junk.ckpt"), b"not a checkpoint").unwrap();
    let junk = CString::new(dir.path().join("junk.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { elk_model_load(junk.as_ptr(), &mut h) }, ElkStatus::Checkpoint);
}

#[test]
fn bundle_verify_missing_dir() {
    let dir = tempfile::tempdir().unwrap();
    let c = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut buf = [0 as std::ffi::c_char; 65];
    let s = unsafe { elk_bundle_verify(c.as_ptr(), buf.as_mut_ptr(), buf.len()) };
    assert_eq!(s, ElkStatus::Input);
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(elk_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// Compiles tests/c/smoke.c against the generated header and the shared
/// library, then runs it.
#[test]
fn c_smoke_test() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    // Test binaries sit next to the freshly built library in deps/.
    let lib_dir = exe.parent().unwrap();
    let lib = lib_dir.join(format!("{}ecg_linkage_ffi{}", std::env::consts::DLL_PREFIX, std::env::consts::DLL_SUFFIX));
    assert!(lib.exists(), "shared library not built at {}", lib.display());
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new(&cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(lib_dir)
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .args(["-lecg_linkage_ffi", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler not available");
    assert!(status.success(), "compiling smoke.c failed");
    let (ckpt, _) = save_tiny(dir.path());
    // cargo's library path may list an older copy in target/debug first.
    let out = Command::new(&bin).arg(&ckpt).env("LD_LIBRARY_PATH", lib_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
