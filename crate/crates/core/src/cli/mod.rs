//! Command-line front end: `synth`, `run`, `sweep` and `report`.
//!
//! Progress goes to standard error through `log`; tables and machine
//! readable output go to standard output or files. Exit codes: 0 success,
//! 1 usage or configuration error, 2 runtime stage failure, 3 integrity
//! failure.

pub mod config;
pub mod pipeline;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::data::bundle::{self, BundleInputs, RunReport};
use crate::data::{export_csv, load_bundle, persist_run, synthesize, DatasetManifest, ManifestEntry, SyntheticIdentitySpec};
use crate::error::{Error, Result};
use crate::metrics::{confidence_sweep, genuine_impostor, roc_points, truth_labels, RocPoint, SweepRow};
use crate::scenarios::ExperimentPlan;
use crate::signal::TARGET_HZ;

pub use config::RunConfig;
pub use pipeline::{Dataset, Failure, StageExt};

#[derive(Debug, Parser)]
#[command(name = "ecg-linkage", version, about = "ECG linkage attack harness")]
pub struct Cli {
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More progress output on standard error (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic identities as CSV files plus a manifest.
    Synth {
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Seconds of signal per identity.
        #[arg(long, default_value_t = 120.0)]
        duration: f64,
        #[arg(long, default_value_t = TARGET_HZ)]
        rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Write into a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train, attack, score and persist a run bundle.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Validate the config and print the experiment plan only.
        #[arg(long)]
        dry_run: bool,
    },
    /// Re-score a finished bundle at absolute thresholds without retraining.
    Sweep {
        /// Bundle directory.
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        bundle: Option<PathBuf>,
        /// Use the newest bundle in this config's output directory.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated, strictly increasing.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        /// Write the table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a bundle from its persisted files.
    Report {
        bundle: PathBuf,
        /// Write (threshold, FAR, FRR) triples here instead of standard output.
        #[arg(long)]
        roc: Option<PathBuf>,
    },
}

/// Output of `run`.
#[derive(Debug)]
pub struct RunOutput {
    pub plan: ExperimentPlan,
    /// `None` for a dry run.
    pub bundle: Option<PathBuf>,
    pub report: Option<RunReport>,
    pub content_hash: Option<String>,
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Parameter("--threads must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Parameter(format!("thread pool: {e}")))
}

fn dir_is_nonempty(dir: &Path) -> bool {
    std::fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false)
}

/// Writes `n` synthetic identities and a manifest into `out`; returns the
/// manifest path.
pub fn cmd_synth(n: usize, duration_s: f64, rate_hz: f64, seed: u64, out: &Path, force: bool) -> Result<PathBuf> {
    if n < 2 {
        return Err(Error::Parameter(format!("synth needs at least 2 identities, got {n}")));
    }
    if dir_is_nonempty(out) && !force {
        return Err(Error::Config(format!(
            "refusing to write into non-empty {} (use --force)",
            out.display()
        )));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let width = (n - 1).to_string().len().max(3);
    let mut subjects = Vec::with_capacity(n);
    for (i, spec) in SyntheticIdentitySpec::cohort(n, seed).iter().enumerate() {
        let sid = format!("syn{i:0width$}");
        let file = format!("{sid}.csv");
        let record = synthesize(spec, &sid, "synthetic", duration_s, rate_hz)?;
        export_csv(&out.join(&file), &record)?;
        subjects.push(ManifestEntry {
            subject_id: sid,
            path: Some(file.into()),
            synthetic: None,
            sampling_rate_hz: rate_hz,
            condition: Some("synthetic".into()),
        });
    }
    let manifest = DatasetManifest {
        schema_version: crate::data::manifest::SCHEMA_VERSION,
        dataset_id: "synthetic".into(),
        subjects,
    };
    let path = out.join("manifest.toml");
    std::fs::write(&path, manifest.to_toml()?).map_err(|e| Error::io(&path, e))?;
    log::info!("wrote {n} identities to {}", out.display());
    Ok(path)
}

/// Runs the configured experiment. Configuration problems are reported
/// before any data is read.
pub fn cmd_run(config_path: &Path, seed: Option<u64>, dry_run: bool, threads: Option<usize>) -> std::result::Result<RunOutput, Failure> {
    let mut cfg = RunConfig::load(config_path).stage("config")?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let pool = pool(threads).stage("config")?;
    pool.install(|| run_config(&cfg, dry_run))
}

/// `cmd_run` for an already-loaded config whose paths are resolved.
pub fn run_config(cfg: &RunConfig, dry_run: bool) -> std::result::Result<RunOutput, Failure> {
    cfg.validate().stage("config")?;
    let data = Dataset::load(&cfg.manifest, cfg.model.window_len)?;
    log::info!("{} windows from {} subjects", data.windows.len(), data.identities.len());
    if dry_run {
        let plan = pipeline::plan_for(cfg, &data, cfg.seed).stage("split")?;
        plan.materialize(&data.windows).stage("split")?;
        return Ok(RunOutput {
            plan,
            bundle: None,
            report: None,
            content_hash: None,
        });
    }
    let (first, report) = pipeline::run_experiment(cfg, &data)?;
    let config_toml = cfg.to_toml().stage("persist")?;
    let checkpoint = first.checkpoint();
    let dir = persist_run(
        &cfg.output_dir,
        &BundleInputs {
            manifest_toml: &data.manifest_toml,
            plan: &first.plan,
            config_toml: &config_toml,
            checkpoint: &checkpoint,
            outcomes: &first.attack.outcomes,
            report: &report,
        },
    )
    .stage("persist")?;
    let hashes = bundle::verify_bundle(&dir).stage("persist")?;
    Ok(RunOutput {
        plan: first.plan,
        bundle: Some(dir),
        report: Some(report),
        content_hash: Some(hashes.content_hash),
    })
}

/// Newest complete bundle under `root`.
pub fn latest_bundle(root: &Path) -> Result<PathBuf> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("run-"))
                && !p.join(bundle::INCOMPLETE).exists()
        })
        .collect();
    dirs.sort();
    dirs.pop()
        .ok_or_else(|| Error::Input(format!("no complete run bundle under {}", root.display())))
}

/// Recomputes the confidence sweep from a bundle's frozen outcomes.
pub fn cmd_sweep(bundle_dir: &Path, thresholds: &[f64]) -> Result<Vec<SweepRow>> {
    config::check_thresholds(thresholds)?;
    let b = load_bundle(bundle_dir)?;
    let known = b.plan.label_map()?;
    let known = known.subjects().iter().cloned().zip(0..).collect();
    let truth = truth_labels(&b.outcomes, &known);
    let taus: Vec<f64> = b.outcomes.iter().map(|o| o.tau).collect();
    let is_known: Vec<bool> = truth.iter().map(|t| !t.is_unknown()).collect();
    confidence_sweep(&taus, &is_known, thresholds)
}

/// Human summary plus ROC triples of a verified bundle.
pub fn cmd_report(bundle_dir: &Path) -> Result<(String, Vec<RocPoint>)> {
    let b = load_bundle(bundle_dir)?;
    let known = b.plan.label_map()?;
    let known = known.subjects().iter().cloned().zip(0..).collect();
    let truth = truth_labels(&b.outcomes, &known);
    let (genuine, impostor) = genuine_impostor(&b.outcomes, &truth);
    let roc = if genuine.is_empty() || impostor.is_empty() {
        Vec::new()
    } else {
        roc_points(&genuine, &impostor)?
    };
    let mut s = render_summary(&b.report);
    writeln!(s, "bundle            {}", bundle_dir.display()).unwrap();
    writeln!(s, "content hash      {}", b.hashes.content_hash).unwrap();
    Ok((s, roc))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

fn opt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("threshold,u_to_k_pct,k_to_u_pct,total_pct\n");
    for r in rows {
        let na = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        writeln!(s, "{},{},{},{}", r.threshold, na(r.u_to_k_pct), na(r.k_to_u_pct), r.total_pct).unwrap();
    }
    s
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut s = String::from("threshold,far,frr\n");
    for p in points {
        writeln!(s, "{},{},{}", p.threshold, p.far, p.frr).unwrap();
    }
    s
}

/// The report as aligned text tables.
pub fn render_summary(r: &RunReport) -> String {
    let m = &r.metrics;
    let mut s = String::new();
    let line = |s: &mut String, k: &str, v: String| writeln!(s, "{k:<18}{v}").unwrap();
    writeln!(s, "== run").unwrap();
    line(&mut s, "tool", r.tool_version.clone());
    line(&mut s, "seed", r.seed.to_string());
    line(&mut s, "model", r.model_kind.clone());
    line(&mut s, "scenario", format!("{:?}", r.scenario.kind).to_lowercase());
    line(&mut s, "noise sigma", format!("{}", r.scenario.sigma()));
    line(
        &mut s,
        "split",
        format!(
            "{}/{}/{}, known identities {}",
            r.split.train_frac, r.split.val_frac, r.split.test_frac, r.split.known_identity_frac
        ),
    );
    line(&mut s, "threshold", format!("{:?}, phi {:.6}", r.threshold_policy, m.phi));
    line(&mut s, "best epoch", format!("{} (val F1 {:.4})", r.training.best_epoch, r.training.best_val_f1));
    writeln!(s, "== identification ({})", m.averaging).unwrap();
    line(&mut s, "accuracy", format!("{:.4}", m.accuracy));
    line(&mut s, "known accuracy", opt(m.known_window_accuracy));
    line(&mut s, "precision", format!("{:.4}", m.precision));
    line(&mut s, "recall", format!("{:.4}", m.recall));
    line(&mut s, "F1", format!("{:.4}", m.f1));
    writeln!(s, "== open-set errors").unwrap();
    line(&mut s, "FPR (U->K)", opt(m.fpr));
    line(&mut s, "FNR (K->U)", opt(m.fnr));
    line(&mut s, "TNR", opt(m.tnr));
    line(&mut s, "total", format!("{:.4}", m.misclassification_rate));
    line(
        &mut s,
        "EER",
        format!(
            "{} at {}",
            opt(m.eer),
            m.eer_threshold.map_or("n/a".to_string(), |t| format!("{t}"))
        ),
    );
    writeln!(s, "== participants").unwrap();
    line(
        &mut s,
        "re-identification",
        format!("{} of {} known", opt(m.reidentification_rate), m.known_participants),
    );
    line(
        &mut s,
        "protection",
        format!("{} of {} unknown", opt(m.protection_rate), m.unknown_participants),
    );
    writeln!(s, "== confidence sweep").unwrap();
    writeln!(s, "{:<12}{:>10}{:>10}{:>10}", "threshold", "U->K %", "K->U %", "total %").unwrap();
    for row in &m.threshold_sweep {
        writeln!(
            s,
            "{:<12}{:>10}{:>10}{:>10.2}",
            row.threshold,
            opt_pct(row.u_to_k_pct),
            opt_pct(row.k_to_u_pct),
            row.total_pct
        )
        .unwrap();
    }
    if r.replicates.len() > 1 {
        writeln!(s, "== replicates (n = {})", r.replicates.len()).unwrap();
        for (k, v) in &r.replicate_summary {
            line(&mut s, k, format!("{:.4} +/- {:.4} (n={})", v.mean, v.sd, v.n));
        }
    }
    s
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn report_failure(f: &Failure) -> i32 {
    eprintln!("error: {f}");
    f.error.exit_code()
}

fn report_error(e: &Error) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Synth {
            n,
            duration,
            rate,
            seed,
            out,
            force,
        } => match cmd_synth(n, duration, rate, seed, &out, force) {
            Ok(p) => {
                println!("{}", p.display());
                0
            }
            Err(e) => report_error(&e),
        },
        Command::Run { config, seed, dry_run } => match cmd_run(&config, seed, dry_run, cli.threads) {
            Ok(out) => {
                if dry_run {
                    match out.plan.to_json() {
                        Ok(j) => println!("{j}"),
                        Err(e) => return report_error(&e),
                    }
                } else if let Some(r) = &out.report {
                    print!("{}", render_summary(r));
                    if let Some(dir) = &out.bundle {
                        println!("{:<18}{}", "bundle", dir.display());
                    }
                    if let Some(h) = &out.content_hash {
                        println!("{:<18}{h}", "content hash");
                    }
                }
                0
            }
            Err(f) => report_failure(&f),
        },
        Command::Sweep {
            bundle,
            config,
            thresholds,
            out,
        } => {
            let result = (|| {
                let (dir, defaults) = match (bundle, config) {
                    (Some(b), _) => (b, config::DEFAULT_SWEEP.to_vec()),
                    (None, Some(c)) => {
                        let cfg = RunConfig::load(&c)?;
                        (latest_bundle(&cfg.output_dir)?, cfg.sweep.thresholds)
                    }
                    (None, None) => return Err(Error::Parameter("--bundle or --config is required".into())),
                };
                let t = thresholds.unwrap_or(defaults);
                let rows = cmd_sweep(&dir, &t)?;
                write_or_print(out.as_deref(), &sweep_csv(&rows))
            })();
            result.map_or_else(|e| report_error(&e), |_| 0)
        }
        Command::Report { bundle, roc } => {
            let result = cmd_report(&bundle).and_then(|(summary, points)| {
                print!("{summary}");
                match roc {
                    Some(p) => write_or_print(Some(&p), &roc_csv(&points)),
                    None => {
                        println!("== roc");
                        write_or_print(None, &roc_csv(&points))
                    }
                }
            });
            result.map_or_else(|e| report_error(&e), |_| 0)
        }
    }
}

/// Parses `args` and runs the command. Usage errors exit with 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    execute(cli)
}
